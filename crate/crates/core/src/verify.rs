//! Named verification suites: analytic oracles, algebraic identities,
//! invariants and Monte Carlo reproductions of the limit laws.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datafile::DataMatrix;
use crate::identity::{
    delta_method_check, frobenius_eigenvalues, frobenius_test, lrt_eigenvalues, lrt_test,
};
use crate::lss::{
    identity_closed_forms, limit_functionals, lss_table, AnalyticFunction, Contour, ContourChoice,
    KernelContext, TestFunction,
};
use crate::montecarlo::{
    dependent_structure_check, esd_distance, generate, moment_audit, renormalized_spectrum,
    replicate_rng, run_study, EntryDistribution, ReplicateStudy, SigmaSpec,
};
use crate::spectral::{AspectRatios, MomentProfile, SpectralMeasure};
use crate::stats::{ks_normal, Summary};
use crate::stieltjes::{rhs, solve, solve_degenerate, DegenerateLimit, Solver, SolverOptions};
use crate::{Error, Result};

pub const SUITES: [&str; 9] = [
    "stieltjes-oracle",
    "degenerate-limits",
    "theorem1-esd",
    "appendix-b-oracle",
    "theorem3-null",
    "theorem4-null",
    "delta-method",
    "properties",
    "condition-c",
];

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_REPLICATES: usize = 2000;
/// Level of the Kolmogorov–Smirnov checks.
pub const KS_LEVEL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Replicates per configuration in the Monte Carlo suites.
    pub replicates: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: DEFAULT_SEED,
            replicates: DEFAULT_REPLICATES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub detail: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

#[derive(Default)]
struct Checks(Vec<Check>);

impl Checks {
    fn push(&mut self, label: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.0.push(Check {
            label: label.into(),
            detail: detail.into(),
            pass,
        });
    }

    /// `|got − want| ≤ tol`.
    fn close(&mut self, label: impl Into<String>, got: f64, want: f64, tol: f64) {
        let err = (got - want).abs();
        self.push(
            label,
            err <= tol,
            format!("got {got:.12e}, want {want:.12e}, |err| {err:.2e} (tol {tol:.0e})"),
        );
    }

    fn error(&mut self, label: impl Into<String>, e: &Error) {
        self.push(label, false, format!("error: {e}"));
    }
}

/// Runs one suite by name.
pub fn run_suite(name: &str, opts: &VerifyOptions) -> Result<SuiteReport> {
    if opts.replicates == 0 {
        return Err(Error::InvalidInput("replicates must be at least 1".into()));
    }
    let start = Instant::now();
    let mut c = Checks::default();
    match name {
        "stieltjes-oracle" => stieltjes_oracle(&mut c),
        "degenerate-limits" => degenerate_limits(&mut c),
        "theorem1-esd" => esd_convergence(&mut c, opts),
        "appendix-b-oracle" => closed_form_oracle(&mut c),
        "theorem3-null" => frobenius_null(&mut c, opts),
        "theorem4-null" => lrt_null(&mut c, opts),
        "delta-method" => delta_method(&mut c),
        "properties" => properties(&mut c, opts),
        "condition-c" => condition_c(&mut c, opts),
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown suite {other:?}; available: {}",
                SUITES.join(", ")
            )))
        }
    }
    let checks = c.0;
    Ok(SuiteReport {
        suite: name.to_string(),
        pass: !checks.is_empty() && checks.iter().all(|k| k.pass),
        checks,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all(opts: &VerifyOptions) -> Result<Vec<SuiteReport>> {
    SUITES.iter().map(|s| run_suite(s, opts)).collect()
}

/// Root of `(z/4) m² + z m + 1 = 0` with positive imaginary part: the
/// transform for `H = δ₁` at `c1 = c2 = 1/4`.
pub fn square_case_root(z: Complex64) -> Complex64 {
    let disc = (z * z - z).sqrt();
    let a = (-z + disc) / (z / 2.0);
    let b = (-z - disc) / (z / 2.0);
    if a.im > b.im {
        a
    } else {
        b
    }
}

/// The 10 × 10 grid `x ∈ [−0.5, 1.5]`, `v ∈ [1e-3, 1]` (log-spaced).
pub fn oracle_grid() -> Vec<Complex64> {
    let mut out = Vec::with_capacity(100);
    for i in 0..10 {
        let x = -0.5 + 2.0 * i as f64 / 9.0;
        for j in 0..10 {
            let v = 10f64.powf(-3.0 + 3.0 * j as f64 / 9.0);
            out.push(Complex64::new(x, v));
        }
    }
    out
}

fn stieltjes_oracle(c: &mut Checks) {
    let r = AspectRatios::new(500, 500).expect("valid ratios");
    let h = SpectralMeasure::identity();
    let opts = SolverOptions::default();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for z in oracle_grid() {
        match solve(z, &r, &h, &opts) {
            Ok(s) => worst = worst.max((s.m - square_case_root(z)).norm()),
            Err(e) => failures.push(format!("{z}: {e}")),
        }
    }
    c.push(
        "100-point grid, |m − quadratic root| ≤ 1e-10",
        failures.is_empty() && worst <= 1e-10,
        format!(
            "max error {worst:.2e}; {} solver failures {:?}",
            failures.len(),
            failures
        ),
    );
}

fn degenerate_limits(c: &mut Checks) {
    let measures = [
        SpectralMeasure::identity(),
        SpectralMeasure::uniform(&[0.5, 1.0]).expect("valid"),
        SpectralMeasure::from_weighted(&[0.1, 0.4, 1.0], &[0.2, 0.5, 0.3]).expect("valid"),
    ];
    let zs = [
        Complex64::new(0.3, 1e-3),
        Complex64::new(-1.0, 0.5),
        Complex64::new(2.0, 3.0),
        Complex64::new(0.0, 1.0),
    ];
    let mut large_n_exact = true;
    let mut large_p_err: f64 = 0.0;
    let mut solver_err: f64 = 0.0;
    for h in &measures {
        for &z in &zs {
            let direct: Complex64 = h.iter().map(|(t, w)| w / (t - z)).sum();
            for m in [Complex64::new(0.0, 0.0), Complex64::new(1.0, 2.0), -1.0 / z] {
                large_n_exact &= rhs(z, 0.0, 1.0, h, m) == direct;
            }
            let ln = solve_degenerate(z, DegenerateLimit::LargeN, h).expect("upper half-plane");
            large_n_exact &= ln.m == direct;
            let m = -1.0 / z;
            large_p_err = large_p_err.max((rhs(z, 1.0, 0.0, h, m) - m).norm() / m.norm());
            let lp = solve_degenerate(z, DegenerateLimit::LargeP, h).expect("upper half-plane");
            large_p_err = large_p_err.max((lp.m - m).norm() / m.norm());
            if let Ok(s) = Solver::new(1.0, 0.0, h, SolverOptions::default()).solve(z) {
                solver_err = solver_err.max((s.m - m).norm() / m.norm());
            } else {
                solver_err = f64::INFINITY;
            }
        }
    }
    c.push(
        "(c1, c2) = (0, 1): RHS equals ∫ dH/(t − z) exactly",
        large_n_exact,
        "bitwise comparison over 3 measures × 4 points × 3 arguments",
    );
    let eps = 4.0 * f64::EPSILON;
    c.push(
        "(c1, c2) = (1, 0): −1/z is a fixed point",
        large_p_err <= eps,
        format!("max relative error {large_p_err:.2e} (tol {eps:.1e})"),
    );
    c.push(
        "(c1, c2) = (1, 0): solver returns −1/z",
        solver_err <= 1e-12,
        format!("max relative error {solver_err:.2e}"),
    );
}

/// ESD of one replicate against the limiting CDF.
fn esd_convergence(c: &mut Checks, opts: &VerifyOptions) {
    let measures = [
        SpectralMeasure::identity(),
        SpectralMeasure::uniform(&[0.5, 1.0]).expect("valid"),
    ];
    let cases = [
        (1000usize, 1000usize, 0.03),
        (20000, 50, 0.05),
        (50, 20000, 0.05),
    ];
    for h in &measures {
        let sigma = if h.is_identity() {
            SigmaSpec::Identity
        } else {
            SigmaSpec::DiagonalFromMeasure(h.clone())
        };
        let hname = if h.is_identity() {
            "H = δ₁"
        } else {
            "H = uniform{0.5, 1}"
        };
        for &(p, n, tol) in &cases {
            let label = format!("({p}, {n}), {hname}: KS < {tol}");
            let run = || -> Result<f64> {
                let mut rng = replicate_rng(opts.seed, 0);
                let x = generate(p, n, &EntryDistribution::RealGaussian, &sigma, &mut rng)?;
                let eigs = renormalized_spectrum(&x, sigma.norm(p)?)?;
                esd_distance(&eigs, p, &AspectRatios::new(p, n)?, &sigma.measure(p)?)
            };
            match run() {
                Ok(d) => c.push(label, d < tol, format!("distance {d:.4}")),
                Err(e) => c.error(label, &e),
            }
        }
    }
}

fn closed_form_oracle(c: &mut Checks) {
    let fns: [&dyn AnalyticFunction; 3] = [&TestFunction::X, &TestFunction::X2, &TestFunction::Log];
    let names = ["x", "x^2", "log"];
    for &(p, n) in &[(100usize, 400usize), (200, 300), (50, 5000)] {
        for &(a, d) in &[(1.0, 0.0), (0.0, 0.0), (1.0, -2.0)] {
            let label = format!("({p}, {n}), (α, Δ) = ({a}, {d})");
            let run = || -> Result<Vec<(String, f64, f64)>> {
                let r = AspectRatios::new(p, n)?;
                let m = MomentProfile::new(a, d)?;
                let cf = identity_closed_forms(&r, &m)?;
                let t = lss_table(
                    &fns,
                    &KernelContext::identity(r, m),
                    &ContourChoice::default(),
                )?;
                let h = SpectralMeasure::identity();
                let contour = Contour::default_for(&r, &h, true)?;
                let theta = limit_functionals(&fns, &r, &h, &contour)?;
                let mut out = Vec::new();
                for i in 0..3 {
                    out.push((format!("E X[{}]", names[i]), t.means[i], cf.means[i]));
                }
                for &(i, j) in &[(0, 0), (0, 1), (0, 2), (1, 1), (2, 2), (1, 2)] {
                    out.push((
                        format!("Cov[{}, {}]", names[i], names[j]),
                        t.cov[i][j],
                        cf.cov[i][j],
                    ));
                }
                for i in 0..3 {
                    out.push((format!("θ{}", i + 1), theta[i] / r.root_c1c2(), cf.theta[i]));
                }
                Ok(out)
            };
            match run() {
                Ok(rows) => {
                    for (what, got, want) in rows {
                        c.close(format!("{label} {what}"), got, want, 1e-6);
                    }
                }
                Err(e) => c.error(label, &e),
            }
        }
    }
}

fn frobenius_null(c: &mut Checks, opts: &VerifyOptions) {
    for &(p, n) in &[(100usize, 100usize), (400, 100), (100, 400), (5000, 50)] {
        for dist in [
            EntryDistribution::RealGaussian,
            EntryDistribution::Rademacher,
        ] {
            let mut st = ReplicateStudy::new(p, n, dist, opts.replicates, opts.seed);
            st.frobenius = true;
            let want = dist.alpha() + dist.delta();
            let tag = format!("({p}, {n}) {dist:?}");
            let res = match run_study(&st) {
                Ok(r) => r,
                Err(e) => {
                    c.error(tag, &e);
                    continue;
                }
            };
            let centred: Vec<f64> = res
                .rows
                .iter()
                .filter_map(|r| r.frobenius.as_ref().map(|t| t.raw_statistic - p as f64))
                .collect();
            let s = Summary::of(&centred);
            c.push(
                format!("{tag}: mean of nW − p within {want} ± 3 SE"),
                (s.mean - want).abs() <= 3.0 * s.se,
                format!("mean {:.4}, SE {:.4}", s.mean, s.se),
            );
            if dist == EntryDistribution::RealGaussian {
                c.push(
                    format!("{tag}: variance of nW − p in [3.6, 4.4]"),
                    (3.6..=4.4).contains(&s.variance),
                    format!("variance {:.4}", s.variance),
                );
                let ks = ks_normal(&res.frobenius_z());
                c.push(
                    format!("{tag}: KS of z-scores vs N(0, 1) at 1%"),
                    ks.p_value >= KS_LEVEL,
                    format!("D = {:.4}, p = {:.4}", ks.statistic, ks.p_value),
                );
            }
        }
    }
}

fn lrt_null(c: &mut Checks, opts: &VerifyOptions) {
    for &(p, n) in &[(50usize, 500usize), (500, 50)] {
        let mut st = ReplicateStudy::new(
            p,
            n,
            EntryDistribution::RealGaussian,
            opts.replicates,
            opts.seed,
        );
        st.lrt = true;
        let tag = format!("({p}, {n}) {}", if p < n { "L*" } else { "L" });
        match run_study(&st) {
            Ok(res) => {
                let z = res.lrt_z();
                let ks = ks_normal(&z);
                c.push(
                    format!("{tag}: KS of pivot vs N(0, 1) at 1%"),
                    ks.p_value >= KS_LEVEL,
                    format!("D = {:.4}, p = {:.4}", ks.statistic, ks.p_value),
                );
                let s = Summary::of(&z);
                c.push(
                    format!("{tag}: |mean z| < 3 SE"),
                    s.mean.abs() < 3.0 * s.se,
                    format!("mean {:.4}, SE {:.4}", s.mean, s.se),
                );
            }
            Err(e) => c.error(tag, &e),
        }
    }
}

fn delta_method(c: &mut Checks) {
    let profiles = [
        MomentProfile::real_gaussian(),
        MomentProfile::complex_gaussian(),
        MomentProfile::new(1.0, -2.0).expect("valid"),
        MomentProfile::new(1.0, -1.2).expect("valid"),
    ];
    for &(p, n) in &[
        (10usize, 40usize),
        (100, 400),
        (200, 300),
        (50, 5000),
        (900, 1000),
    ] {
        for m in &profiles {
            let label = format!("({p}, {n}), (α, Δ) = ({}, {})", m.alpha(), m.delta());
            match AspectRatios::new(p, n).and_then(|r| delta_method_check(&r, m)) {
                Ok(d) => c.push(
                    label,
                    d.max_discrepancy <= 1e-12,
                    format!("max discrepancy {:.2e}", d.max_discrepancy),
                ),
                Err(e) => c.error(label, &e),
            }
        }
    }
}

fn random_measure<R: Rng>(rng: &mut R) -> SpectralMeasure {
    let k = rng.random_range(1..=4);
    let atoms: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..=1.0)).collect();
    let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..=1.0)).collect();
    SpectralMeasure::from_weighted(&atoms, &weights).expect("positive atoms and weights")
}

fn properties(c: &mut Checks, opts: &VerifyOptions) {
    stieltjes_invariants(c, opts);
    table_invariants(c);
    test_invariance(c, opts);
    generator_audits(c, opts);
}

fn stieltjes_invariants(c: &mut Checks, opts: &VerifyOptions) {
    let mut rng = replicate_ring(opts.seed);
    let sopts = SolverOptions::default();
    let (mut nevanlinna, mut mass, mut unique, mut normal, mut failed) = (0, 0, 0, 0, Vec::new());
    let trials = 1000;
    for i in 0..trials {
        let p = 10f64.powf(rng.random_range(0.0..5.0)).round() as usize;
        let n = 10f64.powf(rng.random_range(0.0..5.0)).round() as usize;
        let h = random_measure(&mut rng);
        let z = Complex64::new(
            rng.random_range(-0.5..1.5),
            10f64.powf(rng.random_range(-3.0..0.0)),
        );
        let r = AspectRatios::new(p.max(1), n.max(1)).expect("positive");
        let solver = Solver::for_ratios(&r, &h, sopts);
        let (a, b) = match (solver.solve(z), solver.solve_from(z, Some(Complex64::i()))) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                failed.push(format!("#{i} ({p}, {n}) z = {z}: {e}"));
                continue;
            }
        };
        let tol = sopts.tol * a.m.norm().max(1.0);
        if a.m.im > 0.0 && (r.c2 == 0.0 || a.m_under.im > 0.0) && a.residual <= tol {
            nevanlinna += 1;
        }
        if (z * a.m).im > -1.0 - sopts.tol {
            mass += 1;
        }
        if (a.m - b.m).norm() <= 10.0 * tol {
            unique += 1;
        }
        let iv = Complex64::new(0.0, 1e6);
        if let Ok(s) = solver.solve(iv) {
            if (iv * s.m + 1.0).norm() < 1e-3 {
                normal += 1;
            }
        }
    }
    c.push(
        "1000 random (z, ratios, H): Im m > 0, Im m̲ > 0, residual ≤ tol",
        nevanlinna == trials,
        format!("{nevanlinna}/{trials}; solver failures {failed:?}"),
    );
    c.push(
        "1000 random triples: Im(z m) > −1 − tol",
        mass == trials,
        format!("{mass}/{trials}"),
    );
    c.push(
        "1000 random triples: starts −1/z and i agree to 10 tol",
        unique == trials,
        format!("{unique}/{trials}"),
    );
    c.push(
        "1000 random triples: |iv m(iv) + 1| < 1e-3 at v = 1e6",
        normal == trials,
        format!("{normal}/{trials}"),
    );
}

fn replicate_ring(seed: u64) -> rand_chacha::ChaCha8Rng {
    replicate_rng(seed, u64::MAX)
}

fn table_invariants(c: &mut Checks) {
    let fns: [&dyn AnalyticFunction; 3] = [&TestFunction::X, &TestFunction::X2, &TestFunction::X3];
    let cases = [
        (
            300usize,
            100usize,
            SpectralMeasure::uniform(&[0.5, 1.0]).expect("valid"),
            MomentProfile::real_gaussian(),
        ),
        (
            100,
            300,
            SpectralMeasure::from_weighted(&[0.2, 0.6, 1.0], &[0.3, 0.3, 0.4]).expect("valid"),
            MomentProfile::new(1.0, -1.2).expect("valid"),
        ),
        (
            200,
            200,
            SpectralMeasure::identity(),
            MomentProfile::complex_gaussian(),
        ),
    ];
    for (p, n, h, m) in cases {
        let label = format!(
            "({p}, {n}), {} atoms: covariance table symmetric and PSD",
            h.len()
        );
        let ctx = KernelContext::diagonal(AspectRatios::new(p, n).expect("positive"), h, m);
        match lss_table(&fns, &ctx, &ContourChoice::default()) {
            Ok(t) => {
                let scale = t.cov.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
                let lam = t.min_eigenvalue();
                c.push(
                    label,
                    t.asymmetry <= 1e-8 * scale && lam >= -1e-10 * scale,
                    format!("asymmetry {:.2e}, min eigenvalue {lam:.3e}", t.asymmetry),
                );
            }
            Err(e) => c.error(label, &e),
        }
    }
}

fn test_invariance(c: &mut Checks, opts: &VerifyOptions) {
    let m = MomentProfile::real_gaussian();
    for &(p, n) in &[(20usize, 60usize), (60, 20)] {
        let label = format!("({p}, {n}): W and LRT z-scores invariant under orthogonal maps");
        let run = || -> Result<f64> {
            let mut rng = replicate_rng(opts.seed, 1);
            let x = generate(
                p,
                n,
                &EntryDistribution::RealGaussian,
                &SigmaSpec::Identity,
                &mut rng,
            )?;
            let DataMatrix::Real(a) = generate(
                p,
                p,
                &EntryDistribution::RealGaussian,
                &SigmaSpec::Identity,
                &mut rng,
            )?
            else {
                unreachable!("real law")
            };
            let q: DMatrix<f64> = a.qr().q();
            let DataMatrix::Real(xm) = &x else {
                unreachable!("real law")
            };
            let y = DataMatrix::Real(q * xm);
            let zs = |d: &DataMatrix| -> Result<(f64, f64)> {
                Ok((
                    frobenius_test(&frobenius_eigenvalues(d)?, p, n, &m)?.z_score,
                    lrt_test(&lrt_eigenvalues(d)?, p, n, &m)?.z_score,
                ))
            };
            let (a0, b0) = zs(&x)?;
            let (a1, b1) = zs(&y)?;
            Ok((a0 - a1).abs().max((b0 - b1).abs()))
        };
        match run() {
            Ok(d) => c.push(label, d <= 1e-10, format!("max change {d:.2e}")),
            Err(e) => c.error(label, &e),
        }
    }
}

fn generator_audits(c: &mut Checks, opts: &VerifyOptions) {
    let dists = [
        EntryDistribution::RealGaussian,
        EntryDistribution::ComplexGaussian,
        EntryDistribution::Rademacher,
        EntryDistribution::UniformScaled,
        EntryDistribution::StudentTScaled { df: 10.0 },
        EntryDistribution::StudentTScaled { df: 5.0 },
    ];
    for d in dists {
        let label = format!("{d:?}: moments of 10⁶ draws within 5 SE");
        match moment_audit(&d, 1_000_000, opts.seed) {
            Ok(a) => {
                let worst = a
                    .checks
                    .iter()
                    .map(|(_, got, want, se)| {
                        if *se > 0.0 {
                            (got - want).abs() / se
                        } else {
                            0.0
                        }
                    })
                    .fold(0.0, f64::max);
                let skipped = if a.skipped.is_empty() {
                    String::new()
                } else {
                    format!("; skipped {:?} (infinite eighth moment)", a.skipped)
                };
                c.push(
                    label,
                    a.pass,
                    format!("worst deviation {worst:.2} SE{skipped}"),
                );
            }
            Err(e) => c.error(label, &e),
        }
    }
}

fn condition_c(c: &mut Checks, opts: &VerifyOptions) {
    for dist in [
        EntryDistribution::RealGaussian,
        EntryDistribution::Rademacher,
    ] {
        for q in [2u32, 4] {
            let label = format!("{dist:?}, q = {q}: no growth of E|x*Bx − tr BΣ|^q / p^(q/2)");
            match dependent_structure_check(
                &SigmaSpec::Identity,
                &dist,
                q,
                4000,
                &[100, 400, 1600],
                opts.seed,
            ) {
                Ok(r) => c.push(
                    label,
                    r.pass,
                    format!(
                        "ratios {:?}, slope {:.4} ± {:.4}",
                        r.ratios, r.slope, r.slope_se
                    ),
                ),
                Err(e) => c.error(label, &e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_and_zero_replicates() {
        assert!(matches!(
            run_suite("nope", &VerifyOptions::default()),
            Err(Error::InvalidInput(_))
        ));
        let o = VerifyOptions {
            replicates: 0,
            ..Default::default()
        };
        assert!(matches!(
            run_suite("delta-method", &o),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn fast_suites_pass() {
        for s in ["stieltjes-oracle", "degenerate-limits", "delta-method"] {
            let r = run_suite(s, &VerifyOptions::default()).unwrap();
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn quadratic_root_solves_the_equation() {
        for z in oracle_grid() {
            let m = square_case_root(z);
            assert!((z / 4.0 * m * m + z * m + 1.0).norm() < 1e-9 * m.norm().max(1.0).powi(2));
            assert!(m.im > 0.0);
        }
    }
}
