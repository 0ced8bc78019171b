//! The functionals `g, h, s, t`, the mean parameter and the covariance
//! kernel of the linear spectral statistic CLT.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::spectral::{AspectRatios, MomentProfile, SpectralMeasure};
use crate::stieltjes::{companion, Solver, SolverOptions};
use crate::{Error, Result};

const POLE_TOL: f64 = 1e-14;
const SINGULAR_D: f64 = 1e-10;
const COINCIDENT: f64 = 1e-12;
const GAMMA_NORM_TOL: f64 = 1e-10;

/// Diagonal entries of `Γ̃*(I + m̲Σ̃)^{-k}Γ̃` reduce to
/// `Σ_j P_jr (1 + m̲λ_j)^{-k}` with `P_jr = |(U*Γ̃)_jr|²`.
#[derive(Debug, Clone)]
pub struct GammaSpectrum {
    eigenvalues: Vec<f64>,
    /// `leverage[(j, r)] = |(U*Γ̃)_jr|²`.
    leverage: DMatrix<f64>,
}

impl GammaSpectrum {
    /// From a square `Γ̃` with `‖Γ̃Γ̃*‖ = 1`.
    pub fn new(gamma: &DMatrix<Complex64>) -> Result<Self> {
        if gamma.nrows() != gamma.ncols() {
            return Err(Error::Dimension(format!(
                "Γ must be square, got {}×{}",
                gamma.nrows(),
                gamma.ncols()
            )));
        }
        let p = gamma.nrows();
        if p == 0 {
            return Err(Error::Dimension("Γ is empty".into()));
        }
        let sigma = gamma * gamma.adjoint();
        // Hermitian eigenproblem through the real 2p×2p embedding.
        let mut big = DMatrix::<f64>::zeros(2 * p, 2 * p);
        for i in 0..p {
            for j in 0..p {
                let v = sigma[(i, j)];
                big[(i, j)] = v.re;
                big[(i + p, j + p)] = v.re;
                big[(i, j + p)] = -v.im;
                big[(i + p, j)] = v.im;
            }
        }
        let eig = SymmetricEigen::new(big);
        let mut order: Vec<usize> = (0..2 * p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        // Each eigenvalue appears twice; keep one of each pair with an
        // orthonormal complex eigenvector.
        let mut eigenvalues = Vec::with_capacity(p);
        let mut vectors: Vec<Vec<Complex64>> = Vec::with_capacity(p);
        for &idx in &order {
            if vectors.len() == p {
                break;
            }
            let col = eig.eigenvectors.column(idx);
            let mut v: Vec<Complex64> =
                (0..p).map(|i| Complex64::new(col[i], col[i + p])).collect();
            for u in &vectors {
                let proj: Complex64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= proj * ui;
                }
            }
            let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if norm < 0.5 {
                continue;
            }
            for x in &mut v {
                *x /= norm;
            }
            eigenvalues.push(eig.eigenvalues[idx].max(0.0));
            vectors.push(v);
        }
        if vectors.len() != p {
            return Err(Error::EigensolverFailure(
                "could not recover a complex eigenbasis".into(),
            ));
        }
        let top = eigenvalues.iter().cloned().fold(0.0, f64::max);
        if (top - 1.0).abs() > GAMMA_NORM_TOL {
            return Err(Error::InvalidInput(format!(
                "ΓΓ* must have unit spectral norm, found {top}"
            )));
        }
        let mut leverage = DMatrix::<f64>::zeros(p, p);
        for (j, u) in vectors.iter().enumerate() {
            for r in 0..p {
                let v: Complex64 = (0..p).map(|i| u[i].conj() * gamma[(i, r)]).sum();
                leverage[(j, r)] = v.norm_sqr();
            }
        }
        Ok(GammaSpectrum {
            eigenvalues,
            leverage,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `diag(Γ̃*(I + m̲Σ̃)^{-k}Γ̃)`.
    pub fn diag_resolvent(&self, mu: Complex64, k: i32) -> Result<Vec<Complex64>> {
        let inv: Vec<Complex64> = self
            .eigenvalues
            .iter()
            .map(|&l| {
                let d = 1.0 + mu * l;
                if d.norm() < POLE_TOL {
                    Err(Error::Pole { atom: l })
                } else {
                    Ok(d.powi(-k))
                }
            })
            .collect::<Result<_>>()?;
        let p = self.dim();
        Ok((0..p)
            .map(|r| (0..p).map(|j| self.leverage[(j, r)] * inv[j]).sum())
            .collect())
    }
}

/// How `Σ` enters the fourth-moment terms `s` and `t`.
#[derive(Debug, Clone)]
pub enum SigmaMode {
    /// `Σ` diagonal with spectrum `H`; `s` and `t` become `H`-integrals.
    Diagonal,
    /// Literal finite-`p` traces with an explicit `Γ̃`.
    ExplicitGamma(GammaSpectrum),
}

#[derive(Debug, Clone)]
pub struct KernelContext {
    pub ratios: AspectRatios,
    pub h: SpectralMeasure,
    pub moments: MomentProfile,
    pub sigma: SigmaMode,
    pub solver: SolverOptions,
}

impl KernelContext {
    pub fn diagonal(ratios: AspectRatios, h: SpectralMeasure, moments: MomentProfile) -> Self {
        KernelContext {
            ratios,
            h,
            moments,
            sigma: SigmaMode::Diagonal,
            solver: SolverOptions::default(),
        }
    }

    pub fn identity(ratios: AspectRatios, moments: MomentProfile) -> Self {
        Self::diagonal(ratios, SpectralMeasure::identity(), moments)
    }

    /// Context for an explicit `Γ̃` of size `p × p`; `H` is the spectrum of
    /// `Γ̃Γ̃*`.
    pub fn explicit_gamma(
        ratios: AspectRatios,
        gamma: &DMatrix<Complex64>,
        moments: MomentProfile,
    ) -> Result<Self> {
        if gamma.nrows() != ratios.p {
            return Err(Error::DimensionMismatch {
                expected: ratios.p,
                found: gamma.nrows(),
            });
        }
        let spec = GammaSpectrum::new(gamma)?;
        let h = SpectralMeasure::from_sigma_eigenvalues(spec.eigenvalues())?;
        Ok(KernelContext {
            ratios,
            h,
            moments,
            sigma: SigmaMode::ExplicitGamma(spec),
            solver: SolverOptions::default(),
        })
    }

    pub fn with_moments(&self, moments: MomentProfile) -> Self {
        KernelContext {
            moments,
            ..self.clone()
        }
    }

    /// True when `s` and `t` are finite-`p` traces rather than limits.
    pub fn uses_finite_p_traces(&self) -> bool {
        matches!(self.sigma, SigmaMode::ExplicitGamma(_))
    }

    fn c1c2(&self) -> (f64, f64) {
        (self.ratios.c1, self.ratios.c2)
    }

    fn check_poles(&self, mu: Complex64) -> Result<()> {
        for (t, _) in self.h.iter() {
            if (1.0 + t * mu).norm() < POLE_TOL {
                return Err(Error::Pole { atom: t });
            }
        }
        Ok(())
    }

    /// Solver options used when the context evaluates `m̲` itself.
    pub fn solver(&self) -> Solver<'_> {
        Solver::for_ratios(&self.ratios, &self.h, self.solver)
    }

    /// Solves for `m̲` at `z`, reflecting lower half-plane points.
    pub fn companion_at(&self, z: Complex64) -> Result<Complex64> {
        let solver = self.solver();
        let (c1, c2) = self.c1c2();
        if z.im < 0.0 {
            let s = solver.solve(z.conj())?;
            Ok(companion(z.conj(), c1, c2, s.m).conj())
        } else {
            let s = solver.solve(z)?;
            Ok(companion(z, c1, c2, s.m))
        }
    }
}

/// `g(z) = c1 ∫ t/(1 + t m̲) dH − z`.
pub fn g_fun(z: Complex64, ctx: &KernelContext, mu: Complex64) -> Result<Complex64> {
    ctx.check_poles(mu)?;
    let (c1, _) = ctx.c1c2();
    let s: Complex64 = ctx.h.iter().map(|(t, w)| w * t / (1.0 + t * mu)).sum();
    Ok(c1 * s - z)
}

/// `h(z1, z2) = ∫ t² / ((1 + t m̲1)(1 + t m̲2)) dH`.
pub fn h_fun(
    _z1: Complex64,
    _z2: Complex64,
    ctx: &KernelContext,
    mu1: Complex64,
    mu2: Complex64,
) -> Result<Complex64> {
    ctx.check_poles(mu1)?;
    ctx.check_poles(mu2)?;
    Ok(ctx
        .h
        .iter()
        .map(|(t, w)| w * t * t / ((1.0 + t * mu1) * (1.0 + t * mu2)))
        .sum())
}

/// The Hadamard-trace functional `s(z)`.
pub fn s_fun(_z: Complex64, ctx: &KernelContext, mu: Complex64) -> Result<Complex64> {
    ctx.check_poles(mu)?;
    match &ctx.sigma {
        SigmaMode::Diagonal => Ok(ctx
            .h
            .iter()
            .map(|(t, w)| w * t * t / (1.0 + t * mu).powi(3))
            .sum()),
        SigmaMode::ExplicitGamma(g) => {
            let a1 = g.diag_resolvent(mu, 1)?;
            let a2 = g.diag_resolvent(mu, 2)?;
            Ok(a1.iter().zip(&a2).map(|(a, b)| a * b).sum::<Complex64>() / g.dim() as f64)
        }
    }
}

/// The Hadamard-trace functional `t(z1, z2)`.
pub fn t_fun(
    _z1: Complex64,
    _z2: Complex64,
    ctx: &KernelContext,
    mu1: Complex64,
    mu2: Complex64,
) -> Result<Complex64> {
    ctx.check_poles(mu1)?;
    ctx.check_poles(mu2)?;
    match &ctx.sigma {
        SigmaMode::Diagonal => Ok(ctx
            .h
            .iter()
            .map(|(t, w)| w * t * t / ((1.0 + t * mu1).powi(2) * (1.0 + t * mu2).powi(2)))
            .sum()),
        SigmaMode::ExplicitGamma(g) => {
            let a1 = g.diag_resolvent(mu1, 2)?;
            let a2 = g.diag_resolvent(mu2, 2)?;
            Ok(a1.iter().zip(&a2).map(|(a, b)| a * b).sum::<Complex64>() / g.dim() as f64)
        }
    }
}

/// Everything the kernels need at one contour point.
#[derive(Debug, Clone)]
pub struct PointState {
    pub z: Complex64,
    pub mu: Complex64,
    pub g: Complex64,
    pub h_diag: Complex64,
    /// `g² − c1c2 h(z, z)`.
    pub e: Complex64,
    /// `D(z)` of the mean parameter.
    pub d: Complex64,
    /// `∫ t²/(1 + t m̲)³ dH`.
    pub cube: Complex64,
    pub s: Complex64,
    /// Factors with `h(z1, z2) = Σ hv(z1)·hv(z2)`.
    pub hv: Vec<Complex64>,
    /// Factors with `t(z1, z2) = Σ tv(z1)·tv(z2)`.
    pub tv: Vec<Complex64>,
}

impl PointState {
    pub fn new(z: Complex64, mu: Complex64, ctx: &KernelContext) -> Result<Self> {
        ctx.check_poles(mu)?;
        let (c1, c2) = ctx.c1c2();
        let g = g_fun(z, ctx, mu)?;
        let mut hv = Vec::with_capacity(ctx.h.len());
        let mut h_diag = Complex64::from(0.0);
        let mut cube = Complex64::from(0.0);
        let mut dsum = Complex64::from(0.0);
        let mut tv_diag = Vec::with_capacity(ctx.h.len());
        for (t, w) in ctx.h.iter() {
            let a = 1.0 / (1.0 + t * mu);
            let f = w.sqrt() * t * a;
            hv.push(f);
            h_diag += f * f;
            cube += w * t * t * a * a * a;
            dsum += w * (mu * t * a).powi(2);
            tv_diag.push(f * a);
        }
        let (s, tv) = match &ctx.sigma {
            SigmaMode::Diagonal => (cube, tv_diag),
            SigmaMode::ExplicitGamma(gs) => {
                let a1 = gs.diag_resolvent(mu, 1)?;
                let a2 = gs.diag_resolvent(mu, 2)?;
                let p = gs.dim() as f64;
                let s = a1.iter().zip(&a2).map(|(a, b)| a * b).sum::<Complex64>() / p;
                let scale = 1.0 / p.sqrt();
                (s, a2.into_iter().map(|v| v * scale).collect())
            }
        };
        Ok(PointState {
            z,
            mu,
            g,
            h_diag,
            e: g * g - c1 * c2 * h_diag,
            d: 1.0 - (c1 / c2) * dsum,
            cube,
            s,
            hv,
            tv,
        })
    }

    /// The `(α, Δ)` coefficients of `𝒜(z)`.
    pub fn mean_parts(&self, ctx: &KernelContext) -> Result<(Complex64, Complex64)> {
        if self.d.norm() < SINGULAR_D {
            return Err(Error::NearSingular {
                z_re: self.z.re,
                z_im: self.z.im,
                modulus: self.d.norm(),
            });
        }
        let (c1, c2) = ctx.c1c2();
        let pre = (c1 * c2).sqrt() * self.mu.powi(3) / c2.powi(3);
        Ok((pre * self.cube / (self.d * self.d), pre * self.s / self.d))
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The `(1 + α)` and `Δ` coefficients of `ℬ(z1, z2)`.
pub fn cov_kernel_parts(p1: &PointState, p2: &PointState, c1c2: f64) -> (Complex64, Complex64) {
    let h12 = dot(&p1.hv, &p2.hv);
    let t12 = dot(&p1.tv, &p2.tv);
    let denom = p1.e * p2.e;
    let dz = p1.z - p2.z;
    let bracket = c1c2 * (h12 * h12 - p1.h_diag * p2.h_diag)
        + p1.g * p1.g * p2.h_diag
        + p1.h_diag * p2.g * p2.g
        - 2.0 * p1.g * p2.g * h12;
    (bracket / (denom * dz * dz), t12 / denom)
}

/// The mean parameter `𝒜(z)`.
pub fn mean_param(z: Complex64, ctx: &KernelContext) -> Result<Complex64> {
    let mu = ctx.companion_at(z)?;
    let st = PointState::new(z, mu, ctx)?;
    let (a, d) = st.mean_parts(ctx)?;
    Ok(ctx.moments.alpha() * a + ctx.moments.delta() * d)
}

/// The covariance kernel `ℬ(z1, z2)`.
pub fn cov_kernel(z1: Complex64, z2: Complex64, ctx: &KernelContext) -> Result<Complex64> {
    if (z1 - z2).norm() < COINCIDENT {
        return Err(Error::CoincidentPoints);
    }
    let s1 = PointState::new(z1, ctx.companion_at(z1)?, ctx)?;
    let s2 = PointState::new(z2, ctx.companion_at(z2)?, ctx)?;
    let (b1, b2) = cov_kernel_parts(&s1, &s2, ctx.ratios.c1 * ctx.ratios.c2);
    Ok((1.0 + ctx.moments.alpha()) * b1 + ctx.moments.delta() * b2)
}
