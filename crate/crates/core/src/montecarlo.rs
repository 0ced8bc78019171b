//! Synthetic data under `X = ΓY`, renormalized spectra and replicate
//! studies.
//!
//! Every replicate draws from its own ChaCha stream keyed by the study seed
//! and the replicate index, so results do not depend on the thread count.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::datafile::DataMatrix;
use crate::identity::{self, TestReport};
use crate::lss::{limit_functionals, AnalyticFunction, Contour, TestFunction};
use crate::spectral::{AspectRatios, MomentProfile, SpectralMeasure};
use crate::stats::{covariance, pairwise_sum, Summary};
use crate::stieltjes::{SolverOptions, SpectralCdf};
use crate::{Error, Result};

/// Eigenvalues below `−NEGATIVE_TOL · λ_max` indicate a failed solve.
const NEGATIVE_TOL: f64 = 1e-12;

/// RNG for replicate `index` of a study seeded with `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Standardized entry laws: zero mean, `E|y|² = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EntryDistribution {
    RealGaussian,
    ComplexGaussian,
    Rademacher,
    /// Uniform on `[−√3, √3]`.
    UniformScaled,
    /// Student t with `df > 4` degrees of freedom, scaled by `√((df−2)/df)`.
    StudentTScaled {
        df: f64,
    },
}

impl EntryDistribution {
    pub fn validate(&self) -> Result<()> {
        if let EntryDistribution::StudentTScaled { df } = *self {
            if !(df > 4.0 && df.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "Student t needs df > 4 for a finite fourth moment, got {df}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_real(&self) -> bool {
        !matches!(self, EntryDistribution::ComplexGaussian)
    }

    pub fn alpha(&self) -> f64 {
        if self.is_real() {
            1.0
        } else {
            0.0
        }
    }

    pub fn delta(&self) -> f64 {
        match *self {
            EntryDistribution::RealGaussian | EntryDistribution::ComplexGaussian => 0.0,
            EntryDistribution::Rademacher => -2.0,
            EntryDistribution::UniformScaled => -1.2,
            EntryDistribution::StudentTScaled { df } => 6.0 / (df - 4.0),
        }
    }

    pub fn moments(&self) -> MomentProfile {
        MomentProfile::new(self.alpha(), self.delta()).expect("built-in laws have valid profiles")
    }

    /// Whether `E|y|⁸` is finite, so that the sample fourth moment has a
    /// finite standard error.
    pub fn has_eighth_moment(&self) -> bool {
        match *self {
            EntryDistribution::StudentTScaled { df } => df > 8.0,
            _ => true,
        }
    }

    fn draw_real<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            EntryDistribution::RealGaussian => rng.sample(StandardNormal),
            EntryDistribution::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            EntryDistribution::UniformScaled => {
                let s = 3f64.sqrt();
                rng.random_range(-s..s)
            }
            EntryDistribution::StudentTScaled { df } => {
                let t: f64 = StudentT::new(df).expect("validated df").sample(rng);
                t * ((df - 2.0) / df).sqrt()
            }
            EntryDistribution::ComplexGaussian => unreachable!("complex law drawn as real"),
        }
    }

    fn draw_complex<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    /// A `p × n` matrix of i.i.d. entries, filled in column-major order.
    pub fn matrix<R: Rng + ?Sized>(&self, p: usize, n: usize, rng: &mut R) -> DataMatrix {
        if self.is_real() {
            DataMatrix::Real(DMatrix::from_iterator(
                p,
                n,
                (0..p * n).map(|_| self.draw_real(rng)),
            ))
        } else {
            DataMatrix::Complex(DMatrix::from_iterator(
                p,
                n,
                (0..p * n).map(|_| self.draw_complex(rng)),
            ))
        }
    }
}

/// Population covariance of the generated columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaSpec {
    Identity,
    /// `Γ = diag(√t)` with atom counts apportioned from the measure.
    DiagonalFromMeasure(SpectralMeasure),
    /// A `p × p` matrix `Γ`, given by rows; `im` holds imaginary parts.
    ExplicitGamma {
        re: Vec<Vec<f64>>,
        #[serde(default)]
        im: Option<Vec<Vec<f64>>>,
    },
}

impl SigmaSpec {
    pub fn explicit(gamma: &DMatrix<Complex64>) -> SigmaSpec {
        let rows = |f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..gamma.nrows())
                .map(|i| gamma.row(i).iter().map(f).collect())
                .collect()
        };
        let complex = gamma.iter().any(|v| v.im != 0.0);
        SigmaSpec::ExplicitGamma {
            re: rows(|v| v.re),
            im: complex.then(|| rows(|v| v.im)),
        }
    }

    /// `Γ` as a dense matrix; `None` for the identity.
    pub fn gamma(&self, p: usize) -> Result<Option<DMatrix<Complex64>>> {
        match self {
            SigmaSpec::Identity => Ok(None),
            SigmaSpec::DiagonalFromMeasure(h) => {
                let d: Vec<Complex64> = h
                    .diagonal(p)
                    .iter()
                    .map(|t| Complex64::from(t.sqrt()))
                    .collect();
                Ok(Some(DMatrix::from_diagonal(&DVector::from_vec(d))))
            }
            SigmaSpec::ExplicitGamma { re, im } => {
                let bad = |what: &str| Error::Dimension(format!("Γ {what} must be {p} × {p}"));
                if re.len() != p || re.iter().any(|r| r.len() != p) {
                    return Err(bad("real part"));
                }
                if let Some(im) = im {
                    if im.len() != p || im.iter().any(|r| r.len() != p) {
                        return Err(bad("imaginary part"));
                    }
                }
                Ok(Some(DMatrix::from_fn(p, p, |i, j| {
                    Complex64::new(re[i][j], im.as_ref().map_or(0.0, |m| m[i][j]))
                })))
            }
        }
    }

    /// The population spectral measure `H` for dimension `p`.
    pub fn measure(&self, p: usize) -> Result<SpectralMeasure> {
        match self {
            SigmaSpec::Identity => Ok(SpectralMeasure::identity()),
            SigmaSpec::DiagonalFromMeasure(h) => {
                SpectralMeasure::from_sigma_eigenvalues(&h.diagonal(p))
            }
            SigmaSpec::ExplicitGamma { .. } => {
                let g = self.gamma(p)?.expect("explicit Γ");
                let sigma = &g * g.adjoint();
                let eig = sigma.symmetric_eigenvalues();
                let eig: Vec<f64> = eig.iter().map(|v| v.max(0.0)).collect();
                SpectralMeasure::from_sigma_eigenvalues(&eig)
            }
        }
    }

    /// `‖Σ‖ = ‖Γ‖²`.
    pub fn norm(&self, p: usize) -> Result<f64> {
        match self {
            SigmaSpec::Identity => Ok(1.0),
            SigmaSpec::DiagonalFromMeasure(h) => Ok(h.diagonal(p).into_iter().fold(0.0, f64::max)),
            SigmaSpec::ExplicitGamma { .. } => {
                let g = self.gamma(p)?.expect("explicit Γ");
                let sigma = &g * g.adjoint();
                Ok(sigma
                    .symmetric_eigenvalues()
                    .iter()
                    .cloned()
                    .fold(0.0, f64::max))
            }
        }
    }
}

/// `X = ΓY` with `Y` drawn from `dist`.
pub fn generate<R: Rng + ?Sized>(
    p: usize,
    n: usize,
    dist: &EntryDistribution,
    sigma: &SigmaSpec,
    rng: &mut R,
) -> Result<DataMatrix> {
    if p == 0 || n == 0 {
        return Err(Error::Dimension(format!(
            "cannot generate a {p} × {n} matrix"
        )));
    }
    dist.validate()?;
    let y = dist.matrix(p, n, rng);
    match sigma {
        SigmaSpec::Identity => Ok(y),
        SigmaSpec::DiagonalFromMeasure(h) => {
            let d: Vec<f64> = h.diagonal(p).iter().map(|t| t.sqrt()).collect();
            Ok(match y {
                DataMatrix::Real(mut m) => {
                    for (i, s) in d.iter().enumerate() {
                        m.row_mut(i).scale_mut(*s);
                    }
                    DataMatrix::Real(m)
                }
                DataMatrix::Complex(mut m) => {
                    for (i, s) in d.iter().enumerate() {
                        m.row_mut(i).scale_mut(*s);
                    }
                    DataMatrix::Complex(m)
                }
            })
        }
        SigmaSpec::ExplicitGamma { .. } => y.left_multiply(&sigma.gamma(p)?.expect("explicit Γ")),
    }
}

fn clamp_spectrum(eig: Vec<f64>) -> Result<Vec<f64>> {
    let top = eig.iter().cloned().fold(0.0, f64::max);
    if eig.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigensolverFailure("non-finite eigenvalue".into()));
    }
    if let Some(bad) = eig
        .iter()
        .find(|&&v| v < -NEGATIVE_TOL * top.max(f64::MIN_POSITIVE))
    {
        return Err(Error::EigensolverFailure(format!(
            "Gram eigenvalue {bad:.3e} is negative beyond tolerance (largest {top:.3e})"
        )));
    }
    let mut out: Vec<f64> = eig.into_iter().map(|v| v.max(0.0)).collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Eigenvalues of `scale · XX*` computed on the smaller Gram side; returns
/// `min(p, n)` values in ascending order.
pub fn gram_eigenvalues(x: &DataMatrix, scale: f64) -> Result<Vec<f64>> {
    let eig = match x {
        DataMatrix::Real(m) => {
            let g = if m.nrows() <= m.ncols() {
                m * m.transpose()
            } else {
                m.tr_mul(m)
            };
            (g * scale)
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .collect::<Vec<_>>()
        }
        DataMatrix::Complex(m) => {
            let g = if m.nrows() <= m.ncols() {
                m * m.adjoint()
            } else {
                m.ad_mul(m)
            };
            (g * Complex64::from(scale))
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .collect()
        }
    };
    clamp_spectrum(eig)
}

/// All `p` eigenvalues of `scale · XX*`, computed on the `p × p` side.
pub fn gram_eigenvalues_full(x: &DataMatrix, scale: f64) -> Result<Vec<f64>> {
    let eig = match x {
        DataMatrix::Real(m) => (m * m.transpose() * scale)
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .collect(),
        DataMatrix::Complex(m) => (m * m.adjoint() * Complex64::from(scale))
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .collect::<Vec<_>>(),
    };
    clamp_spectrum(eig)
}

/// `(tr(scale·XX*), tr((scale·XX*)²))` without an eigensolve.
pub fn gram_traces(x: &DataMatrix, scale: f64) -> (f64, f64) {
    let (t1, t2) = match x {
        DataMatrix::Real(m) => {
            let g = if m.nrows() <= m.ncols() {
                m * m.transpose()
            } else {
                m.tr_mul(m)
            };
            (g.trace(), g.norm_squared())
        }
        DataMatrix::Complex(m) => {
            let g = if m.nrows() <= m.ncols() {
                m * m.adjoint()
            } else {
                m.ad_mul(m)
            };
            (g.trace().re, g.norm_squared())
        }
    };
    (t1 * scale, t2 * scale * scale)
}

/// The `min(p, n)` eigenvalues of `S_n = XX*/(ν · ‖Σ‖)`.
pub fn renormalized_spectrum(x: &DataMatrix, sigma_norm: f64) -> Result<Vec<f64>> {
    if !(sigma_norm > 0.0 && sigma_norm.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "‖Σ‖ must be positive, got {sigma_norm}"
        )));
    }
    let r = AspectRatios::new(x.p(), x.n())?;
    gram_eigenvalues(x, 1.0 / (r.nu * sigma_norm))
}

/// Kolmogorov distance between the ESD of `p` eigenvalues, `eigs` plus
/// `p − eigs.len()` structural zeros, and the limiting CDF.
pub fn esd_distance(
    eigs: &[f64],
    p: usize,
    ratios: &AspectRatios,
    h: &SpectralMeasure,
) -> Result<f64> {
    let cdf = SpectralCdf::new(ratios, h, &SolverOptions::default())?;
    esd_distance_with(eigs, p, &cdf)
}

/// [`esd_distance`] against a precomputed CDF.
pub fn esd_distance_with(eigs: &[f64], p: usize, cdf: &SpectralCdf) -> Result<f64> {
    if eigs.len() > p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: eigs.len(),
        });
    }
    let mut all: Vec<f64> = vec![0.0; p - eigs.len()];
    all.extend_from_slice(eigs);
    all.sort_by(f64::total_cmp);
    let pf = p as f64;
    let below = |x: f64| all.partition_point(|&v| v < x) as f64 / pf;
    let at_or_below = |x: f64| all.partition_point(|&v| v <= x) as f64 / pf;
    // F has its only jump at the origin.
    let left = |x: f64| if x <= 0.0 { 0.0 } else { cdf.eval(x) };
    let mut points: Vec<f64> = all.clone();
    points.extend_from_slice(cdf.edges());
    points.push(0.0);
    let mut d: f64 = 0.0;
    for x in points {
        let f = cdf.eval(x);
        d = d
            .max((at_or_below(x) - f).abs())
            .max((below(x) - left(x)).abs());
    }
    Ok(d)
}

/// A replicate study of linear spectral statistics and identity tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicateStudy {
    pub p: usize,
    pub n: usize,
    pub dist: EntryDistribution,
    #[serde(default = "default_sigma")]
    pub sigma: SigmaSpec,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Test functions whose statistics `X_f` are recorded.
    #[serde(default)]
    pub functions: Vec<TestFunction>,
    /// Record the Frobenius test on each replicate.
    #[serde(default)]
    pub frobenius: bool,
    /// Record the (quasi-)likelihood ratio test on each replicate.
    #[serde(default)]
    pub lrt: bool,
}

fn default_sigma() -> SigmaSpec {
    SigmaSpec::Identity
}

impl ReplicateStudy {
    pub fn new(p: usize, n: usize, dist: EntryDistribution, replicates: usize, seed: u64) -> Self {
        ReplicateStudy {
            p,
            n,
            dist,
            sigma: SigmaSpec::Identity,
            replicates,
            seed,
            functions: Vec::new(),
            frobenius: false,
            lrt: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidInput("replicates must be at least 1".into()));
        }
        if self.p == 0 || self.n == 0 {
            return Err(Error::InvalidInput("p and n must be positive".into()));
        }
        if (self.frobenius || self.lrt) && self.sigma != SigmaSpec::Identity {
            return Err(Error::InvalidInput(
                "identity tests require sigma = identity".into(),
            ));
        }
        self.dist.validate()
    }
}

/// One replicate's recorded values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub index: usize,
    /// `X_f` for each study function.
    pub lss: Vec<f64>,
    pub frobenius: Option<TestReport>,
    pub lrt: Option<TestReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub functions: Vec<String>,
    /// Limit centring `p ∫ f dF^{c1,c2,H}` per function.
    pub centering: Vec<f64>,
    pub lss: Vec<Summary>,
    pub lss_cov: Vec<Vec<f64>>,
    pub frobenius_z: Option<Summary>,
    pub lrt_z: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub rows: Vec<ReplicateRow>,
    pub summary: StudySummary,
}

impl StudyResult {
    /// `X_f` values of function `j` across replicates.
    pub fn lss_column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.lss[j]).collect()
    }

    pub fn frobenius_z(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.frobenius.as_ref().map(|t| t.z_score))
            .collect()
    }

    pub fn lrt_z(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.lrt.as_ref().map(|t| t.z_score))
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        write!(w, "replicate")?;
        for f in &self.summary.functions {
            write!(w, ",X[{f}]")?;
        }
        let frob = self.rows.first().is_some_and(|r| r.frobenius.is_some());
        let lrt = self.rows.first().is_some_and(|r| r.lrt.is_some());
        if frob {
            write!(w, ",frobenius_raw,frobenius_z")?;
        }
        if lrt {
            write!(w, ",lrt_raw,lrt_z")?;
        }
        writeln!(w)?;
        for r in &self.rows {
            write!(w, "{}", r.index)?;
            for v in &r.lss {
                write!(w, ",{v}")?;
            }
            for t in [&r.frobenius, &r.lrt].into_iter().flatten() {
                write!(w, ",{},{}", t.raw_statistic, t.z_score)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// `Σ_{all p} f(λ)` from the `min(p, n)` nonzero-side eigenvalues.
fn spectral_sum(f: &dyn AnalyticFunction, eigs: &[f64], p: usize) -> f64 {
    let vals: Vec<f64> = eigs.iter().map(|&l| f.eval_real(l)).collect();
    let zeros = (p - eigs.len()) as f64;
    pairwise_sum(&vals)
        + if zeros > 0.0 {
            zeros * f.eval_real(0.0)
        } else {
            0.0
        }
}

/// `Σ_{all p} f(λ)` for a polynomial of degree at most 2 from traces.
fn trace_sum(coeffs: &[f64], p: usize, traces: (f64, f64)) -> f64 {
    let c = |k: usize| coeffs.get(k).copied().unwrap_or(0.0);
    c(0) * p as f64 + c(1) * traces.0 + c(2) * traces.1
}

/// Runs every replicate of `study`.
///
/// The statistic recorded for `f` is `X_f = ν/√(pn) · (Σ f(λ) − p ∫ f dF)`
/// with `λ` the `p` eigenvalues of `S_n`.
pub fn run_study(study: &ReplicateStudy) -> Result<StudyResult> {
    study.validate()?;
    let (p, n) = (study.p, study.n);
    let ratios = AspectRatios::new(p, n)?;
    let h = study.sigma.measure(p)?;
    let sigma_norm = study.sigma.norm(p)?;
    let fns: Vec<&dyn AnalyticFunction> = study
        .functions
        .iter()
        .map(|f| f as &dyn AnalyticFunction)
        .collect();
    let centering = if fns.is_empty() {
        Vec::new()
    } else {
        let singular = fns.iter().any(|f| f.singular_at_zero());
        let contour = Contour::default_for(&ratios, &h, singular)?;
        limit_functionals(&fns, &ratios, &h, &contour)?
            .into_iter()
            .map(|v| v * p as f64)
            .collect()
    };
    let scale = 1.0 / ratios.root_c1c2();
    let fast: Vec<Option<Vec<f64>>> = study
        .functions
        .iter()
        .map(|f| match f.polynomial_degree() {
            Some(d) if d <= 2 => f.coefficients(),
            _ => None,
        })
        .collect();
    let need_eigs = fast.iter().any(Option::is_none);
    let moments = study.dist.moments();

    let rows = (0..study.replicates)
        .into_par_iter()
        .map(|i| -> Result<ReplicateRow> {
            let mut rng = replicate_rng(study.seed, i as u64);
            let x = generate(p, n, &study.dist, &study.sigma, &mut rng)?;
            let s_scale = 1.0 / (ratios.nu * sigma_norm);
            let traces = if fns.is_empty() && !study.frobenius {
                (0.0, 0.0)
            } else {
                gram_traces(&x, s_scale)
            };
            let eigs = if need_eigs {
                Some(gram_eigenvalues(&x, s_scale)?)
            } else {
                None
            };
            let lss = study
                .functions
                .iter()
                .enumerate()
                .map(|(j, f)| {
                    let sum = match (&fast[j], &eigs) {
                        (Some(c), _) => trace_sum(c, p, traces),
                        (None, Some(e)) => spectral_sum(f, e, p),
                        (None, None) => unreachable!("eigenvalues computed when needed"),
                    };
                    scale * (sum - centering[j])
                })
                .collect();
            let frobenius = if study.frobenius {
                let r = ratios.nu / n as f64;
                let t = (traces.0 * r, traces.1 * r * r);
                Some(identity::frobenius_from_traces(t.0, t.1, p, n, &moments)?)
            } else {
                None
            };
            let lrt = if study.lrt {
                Some(identity::lrt_test(
                    &identity::lrt_eigenvalues(&x)?,
                    p,
                    n,
                    &moments,
                )?)
            } else {
                None
            };
            Ok(ReplicateRow {
                index: i,
                lss,
                frobenius,
                lrt,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let lss_rows: Vec<Vec<f64>> = rows.iter().map(|r| r.lss.clone()).collect();
    let lss = (0..fns.len())
        .map(|j| Summary::of(&lss_rows.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    let summary = StudySummary {
        functions: fns.iter().map(|f| f.name()).collect(),
        centering,
        lss,
        lss_cov: if fns.is_empty() {
            Vec::new()
        } else {
            covariance(&lss_rows)
        },
        frobenius_z: study.frobenius.then(|| {
            Summary::of(
                &rows
                    .iter()
                    .filter_map(|r| r.frobenius.as_ref().map(|t| t.z_score))
                    .collect::<Vec<_>>(),
            )
        }),
        lrt_z: study.lrt.then(|| {
            Summary::of(
                &rows
                    .iter()
                    .filter_map(|r| r.lrt.as_ref().map(|t| t.z_score))
                    .collect::<Vec<_>>(),
            )
        }),
    };
    Ok(StudyResult { rows, summary })
}

/// Per-replicate `X_f` values for the study's functions.
pub fn lss_replicates(study: &ReplicateStudy) -> Result<StudyResult> {
    if study.functions.is_empty() {
        return Err(Error::InvalidInput(
            "study requests no test functions".into(),
        ));
    }
    run_study(study)
}

/// Outcome of the dependent-structure diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependentStructureReport {
    pub q: u32,
    pub dims: Vec<usize>,
    /// `mean |x*Bx − tr(BΣ)|^q / p^{q/2}` per dimension.
    pub ratios: Vec<f64>,
    pub ratio_se: Vec<f64>,
    /// Weighted least-squares slope of `log ratio` against `log p`.
    pub slope: f64,
    pub slope_se: f64,
    pub pass: bool,
}

/// Critical value of the one-sided 5% normal test for growth.
const GROWTH_CRITICAL: f64 = 1.645;

/// Checks that `E|x*Bx − tr(BΣ)|^q = O(p^{q/2})` empirically.
///
/// Each trial draws a fresh circulant `B = F* diag(b) F / p` with
/// eigenvalues `b_k` uniform on `[−1, 1]`, so `‖B‖ ≤ 1` and `x*Bx` costs one
/// FFT. The test fails when the fitted log-log slope of the normalized
/// moment is significantly positive.
pub fn dependent_structure_check(
    sigma: &SigmaSpec,
    dist: &EntryDistribution,
    q: u32,
    trials: usize,
    dims: &[usize],
    seed: u64,
) -> Result<DependentStructureReport> {
    if q == 0 || !q.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "q must be a positive even integer, got {q}"
        )));
    }
    if trials < 2 || dims.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least two trials and two dimensions".into(),
        ));
    }
    dist.validate()?;
    let mut planner = FftPlanner::<f64>::new();
    let mut ratios = Vec::with_capacity(dims.len());
    let mut ratio_se = Vec::with_capacity(dims.len());
    for (k, &p) in dims.iter().enumerate() {
        let fft = planner.plan_fft_forward(p);
        let pf = p as f64;
        let (root, gamma) = match sigma {
            SigmaSpec::Identity => (None, None),
            SigmaSpec::DiagonalFromMeasure(h) => (Some(h.diagonal(p)), None),
            SigmaSpec::ExplicitGamma { .. } => (None, sigma.gamma(p)?),
        };
        // Diagonal of F Σ F*, with (F Σ F*)_kk = Σ_j |(FΓ)_kj|².
        let spread: Option<Vec<f64>> = gamma.as_ref().map(|g| {
            let mut diag = vec![0.0; p];
            for j in 0..p {
                let mut col: Vec<Complex64> = g.column(j).iter().copied().collect();
                fft.process(&mut col);
                for (d, c) in diag.iter_mut().zip(&col) {
                    *d += c.norm_sqr();
                }
            }
            diag
        });
        let trace_sigma = match &root {
            Some(t) => t.iter().sum::<f64>(),
            None => pf,
        };
        let root: Option<Vec<f64>> = root.map(|t| t.iter().map(|v| v.sqrt()).collect());
        let samples: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = replicate_rng(seed.wrapping_add(k as u64), t as u64);
                let b: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let trace = match &spread {
                    Some(d) => b.iter().zip(d).map(|(bk, dk)| bk * dk).sum::<f64>() / pf,
                    None => b.iter().sum::<f64>() / pf * trace_sigma,
                };
                let y = dist.matrix(p, 1, &mut rng).to_complex();
                let mut x: Vec<Complex64> = match (&root, &gamma) {
                    (_, Some(g)) => (g * y).iter().copied().collect(),
                    (Some(r), None) => y.iter().zip(r).map(|(yi, ri)| yi * *ri).collect(),
                    (None, None) => y.iter().copied().collect(),
                };
                fft.process(&mut x);
                let quad: f64 = x
                    .iter()
                    .zip(&b)
                    .map(|(xk, bk)| bk * xk.norm_sqr())
                    .sum::<f64>()
                    / pf;
                (quad - trace).abs().powi(q as i32)
            })
            .collect();
        let s = Summary::of(&samples);
        let norm = (p as f64).powf(q as f64 / 2.0);
        ratios.push(s.mean / norm);
        ratio_se.push(s.se / norm);
    }
    let xs: Vec<f64> = dims.iter().map(|&p| (p as f64).ln()).collect();
    let ys: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    let ws: Vec<f64> = ratios
        .iter()
        .zip(&ratio_se)
        .map(|(r, se)| (r / se).powi(2))
        .collect();
    let sw: f64 = ws.iter().sum();
    let xbar = ws.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ybar = ws.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = ws
        .iter()
        .zip(&xs)
        .map(|(w, x)| w * (x - xbar).powi(2))
        .sum();
    let sxy: f64 = ws
        .iter()
        .zip(xs.iter().zip(&ys))
        .map(|(w, (x, y))| w * (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let slope_se = (1.0 / sxx).sqrt();
    Ok(DependentStructureReport {
        q,
        dims: dims.to_vec(),
        ratios,
        ratio_se,
        slope,
        slope_se,
        pass: slope <= GROWTH_CRITICAL * slope_se,
    })
}

/// Pooled empirical moments of an entry law against their analytic values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentAudit {
    pub draws: usize,
    /// `(empirical, expected, standard error)` for the mean, `E|y|²`,
    /// `Re E y²`, `Im E y²` and `E|y|⁴`, in that order.
    pub checks: Vec<(String, f64, f64, f64)>,
    /// Names of checks skipped because their standard error is not finite.
    pub skipped: Vec<String>,
    pub pass: bool,
}

/// Audits `draws` entries of `dist` to within `5` standard errors.
pub fn moment_audit(dist: &EntryDistribution, draws: usize, seed: u64) -> Result<MomentAudit> {
    dist.validate()?;
    if draws < 2 {
        return Err(Error::InvalidInput("need at least two draws".into()));
    }
    let chunk = 1 << 14;
    let blocks = draws.div_ceil(chunk);
    let ys: Vec<Complex64> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let len = chunk.min(draws - b * chunk);
            let mut rng = replicate_rng(seed, b as u64);
            dist.matrix(len, 1, &mut rng).entries()
        })
        .collect();
    let mk = |name: &str, vals: Vec<f64>, expected: f64| {
        let s = Summary::of(&vals);
        (name.to_string(), s.mean, expected, s.se)
    };
    let mut checks = vec![
        mk("mean_re", ys.iter().map(|y| y.re).collect(), 0.0),
        mk("mean_im", ys.iter().map(|y| y.im).collect(), 0.0),
        mk("abs2", ys.iter().map(|y| y.norm_sqr()).collect(), 1.0),
        mk(
            "square_re",
            ys.iter().map(|y| (y * y).re).collect(),
            dist.alpha(),
        ),
        mk("square_im", ys.iter().map(|y| (y * y).im).collect(), 0.0),
    ];
    let mut skipped = Vec::new();
    let fourth = mk(
        "abs4",
        ys.iter().map(|y| y.norm_sqr().powi(2)).collect(),
        dist.moments().fourth_moment(),
    );
    if dist.has_eighth_moment() {
        checks.push(fourth);
    } else {
        skipped.push(fourth.0);
    }
    let pass = checks.iter().all(|(_, got, want, se)| {
        if *se == 0.0 {
            (got - want).abs() <= 1e-12
        } else {
            (got - want).abs() <= 5.0 * se
        }
    });
    Ok(MomentAudit {
        draws,
        checks,
        skipped,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_matrix() {
        let d = EntryDistribution::StudentTScaled { df: 7.0 };
        let a = generate(5, 7, &d, &SigmaSpec::Identity, &mut replicate_rng(3, 9)).unwrap();
        let b = generate(5, 7, &d, &SigmaSpec::Identity, &mut replicate_rng(3, 9)).unwrap();
        let c = generate(5, 7, &d, &SigmaSpec::Identity, &mut replicate_rng(3, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rademacher_is_signs() {
        let DataMatrix::Real(m) =
            EntryDistribution::Rademacher.matrix(10, 10, &mut replicate_rng(1, 0))
        else {
            panic!("real law produced complex data")
        };
        assert!(m.iter().all(|v| *v == 1.0 || *v == -1.0));
    }

    #[test]
    fn identity_of_columns_is_unit_covariance() {
        let x = generate(
            5,
            10_000,
            &EntryDistribution::RealGaussian,
            &SigmaSpec::Identity,
            &mut replicate_rng(2, 0),
        )
        .unwrap();
        let DataMatrix::Real(m) = x else {
            unreachable!()
        };
        let s = &m * m.transpose() / 10_000.0;
        let tol = 5.0 / 100.0;
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((s[(i, j)] - want).abs() < tol, "S[{i},{j}] = {}", s[(i, j)]);
            }
        }
    }

    #[test]
    fn identity_matrix_spectrum() {
        let x = DataMatrix::Real(DMatrix::identity(6, 6));
        let e = renormalized_spectrum(&x, 1.0).unwrap();
        assert!(e.iter().all(|v| (v - 1.0 / 24.0).abs() < 1e-15));
    }

    #[test]
    fn both_gram_sides_agree() {
        for &(p, n) in &[(30usize, 12usize), (12, 30)] {
            for d in [
                EntryDistribution::RealGaussian,
                EntryDistribution::ComplexGaussian,
            ] {
                let x = generate(p, n, &d, &SigmaSpec::Identity, &mut replicate_rng(5, 0)).unwrap();
                let small = gram_eigenvalues(&x, 0.1).unwrap();
                let full = gram_eigenvalues_full(&x, 0.1).unwrap();
                let top = &full[p - small.len()..];
                for (a, b) in small.iter().zip(top) {
                    assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-300), "{a} vs {b}");
                }
                let (t1, t2) = gram_traces(&x, 0.1);
                assert!((t1 - small.iter().sum::<f64>()).abs() < 1e-10 * t1);
                assert!((t2 - small.iter().map(|v| v * v).sum::<f64>()).abs() < 1e-10 * t2);
            }
        }
    }

    #[test]
    fn diagonal_sigma_uses_apportioned_counts() {
        let h = SpectralMeasure::uniform(&[0.5, 1.0]).unwrap();
        let s = SigmaSpec::DiagonalFromMeasure(h.clone());
        assert_eq!(s.norm(5).unwrap(), 1.0);
        let m = s.measure(4).unwrap();
        assert_eq!(m, h);
        let g = s.gamma(4).unwrap().unwrap();
        assert!((g[(0, 0)].re - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn explicit_gamma_round_trip() {
        let g = DMatrix::from_fn(3, 3, |i, j| {
            Complex64::new((i + j) as f64, i as f64 - j as f64)
        });
        let s = SigmaSpec::explicit(&g);
        assert_eq!(s.gamma(3).unwrap().unwrap(), g);
        assert!(matches!(s.gamma(4), Err(Error::Dimension(_))));
    }

    #[test]
    fn esd_distance_counts_structural_zeros() {
        let r = AspectRatios::new(40, 10).unwrap();
        let h = SpectralMeasure::identity();
        let x = generate(
            40,
            10,
            &EntryDistribution::RealGaussian,
            &SigmaSpec::Identity,
            &mut replicate_rng(0, 0),
        )
        .unwrap();
        let e = renormalized_spectrum(&x, 1.0).unwrap();
        let d = esd_distance(&e, 40, &r, &h).unwrap();
        assert!(d < 0.2, "{d}");
        assert!(esd_distance(&e, 5, &r, &h).is_err());
    }

    #[test]
    fn study_is_thread_count_independent() {
        let mut st = ReplicateStudy::new(20, 30, EntryDistribution::UniformScaled, 16, 11);
        st.functions = vec![TestFunction::X2, TestFunction::X3];
        st.frobenius = true;
        st.lrt = true;
        let a = run_study(&st).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| run_study(&st).unwrap());
        assert_eq!(a, b);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(
            text.starts_with("replicate,X[x^2],X[x^3],frobenius_raw,frobenius_z,lrt_raw,lrt_z\n")
        );
        assert_eq!(text.lines().count(), 17);
    }

    #[test]
    fn replicate_validation() {
        let st = ReplicateStudy::new(20, 30, EntryDistribution::RealGaussian, 0, 0);
        assert!(matches!(run_study(&st), Err(Error::InvalidInput(_))));
        assert!(EntryDistribution::StudentTScaled { df: 4.0 }
            .validate()
            .is_err());
    }

    #[test]
    fn heavy_tail_audit_skips_fourth_moment() {
        let a = moment_audit(&EntryDistribution::StudentTScaled { df: 6.0 }, 20_000, 1).unwrap();
        assert_eq!(a.skipped, vec!["abs4".to_string()]);
    }
}
