//! Limiting Stieltjes transform of the renormalized sample covariance matrix.
//!
//! For `z` in the upper half-plane the transform `m(z)` is the unique
//! solution of
//!
//! ```text
//! m = ∫ dH(t) / ((c2 − c1 − c1 z m) t − z)
//! ```
//!
//! in the set where both `m` and the companion `m̲ = −(c2 − c1)/z + c1 m`
//! lie in `ℂ⁺`. The solver iterates that map directly, damps it when the
//! residual stalls, finishes with Newton steps and, as a last resort,
//! tracks the solution down from a point higher in the half-plane.

mod density;

pub use density::{
    cdf, density_curve, support_bounds, zero_atom, DensityCurve, SpectralCdf, DEFAULT_LADDER,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::spectral::{AspectRatios, SpectralMeasure};
use crate::{Error, Result};

/// Fixed-point steps without residual decrease before the step is halved.
const STALL_LIMIT: usize = 20;
/// Plain and damped fixed-point steps attempted before switching to Newton.
const FIXED_POINT_BUDGET: usize = 400;
const NEWTON_BUDGET: usize = 60;
/// Height at which the homotopy path starts.
const HOMOTOPY_TOP: f64 = 1.0;

/// Convergence controls. A solution is accepted when
/// `|m − RHS(m)| ≤ tol · max(1, |m|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StieltjesSolution {
    pub z: Complex64,
    pub m: Complex64,
    pub m_under: Complex64,
    pub residual: f64,
    pub iterations: usize,
}

impl StieltjesSolution {
    /// The solution at `z̄`, obtained by reflection.
    pub fn conj(&self) -> Self {
        StieltjesSolution {
            z: self.z.conj(),
            m: self.m.conj(),
            m_under: self.m_under.conj(),
            ..*self
        }
    }
}

/// The two degenerate limits of the aspect ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegenerateLimit {
    /// `c1 = 0, c2 = 1`.
    LargeN,
    /// `c1 = 1, c2 = 0`.
    LargeP,
}

/// Right-hand side of the self-consistent equation for raw ratios `(c1, c2)`.
pub fn rhs(z: Complex64, c1: f64, c2: f64, h: &SpectralMeasure, m: Complex64) -> Complex64 {
    let a = Complex64::from(c2 - c1) - c1 * z * m;
    h.iter().map(|(t, w)| w / (a * t - z)).sum()
}

/// Companion transform `m̲ = −(c2 − c1)/z + c1 m`.
pub fn companion(z: Complex64, c1: f64, c2: f64, m: Complex64) -> Complex64 {
    -(c2 - c1) / z + c1 * m
}

/// Solves for `m(z)` at finite aspect ratios.
pub fn solve(
    z: Complex64,
    ratios: &AspectRatios,
    h: &SpectralMeasure,
    opts: &SolverOptions,
) -> Result<StieltjesSolution> {
    Solver::new(ratios.c1, ratios.c2, h, *opts).solve(z)
}

/// Evaluates the transform anywhere off the real axis, reflecting
/// lower-half-plane points through `m(z̄) = conj(m(z))`.
pub fn solve_reflected(
    z: Complex64,
    ratios: &AspectRatios,
    h: &SpectralMeasure,
    opts: &SolverOptions,
) -> Result<StieltjesSolution> {
    if z.im < 0.0 {
        Ok(solve(z.conj(), ratios, h, opts)?.conj())
    } else {
        solve(z, ratios, h, opts)
    }
}

/// Closed-form transforms in the two degenerate limits: `∫ dH/(t − z)` when
/// `n` dominates, `−1/z` when `p` dominates.
pub fn solve_degenerate(
    z: Complex64,
    which: DegenerateLimit,
    h: &SpectralMeasure,
) -> Result<StieltjesSolution> {
    check_upper(z)?;
    let (c1, c2, m) = match which {
        DegenerateLimit::LargeN => (0.0, 1.0, h.iter().map(|(t, w)| w / (t - z)).sum()),
        DegenerateLimit::LargeP => (1.0, 0.0, -1.0 / z),
    };
    let residual = (m - rhs(z, c1, c2, h, m)).norm();
    Ok(StieltjesSolution {
        z,
        m,
        m_under: companion(z, c1, c2, m),
        residual,
        iterations: 0,
    })
}

fn check_upper(z: Complex64) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) || z.im <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "z = {z} must lie in the open upper half-plane"
        )));
    }
    Ok(())
}

/// Solver bound to one `(c1, c2, H)`; reusable across many `z`.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    c1: f64,
    c2: f64,
    h: &'a SpectralMeasure,
    opts: SolverOptions,
}

enum Attempt {
    Converged(Complex64, f64),
    Failed(Complex64, f64),
}

impl<'a> Solver<'a> {
    pub fn new(c1: f64, c2: f64, h: &'a SpectralMeasure, opts: SolverOptions) -> Self {
        Solver { c1, c2, h, opts }
    }

    pub fn for_ratios(ratios: &AspectRatios, h: &'a SpectralMeasure, opts: SolverOptions) -> Self {
        Self::new(ratios.c1, ratios.c2, h, opts)
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    /// Mass of the limit law at the origin, i.e. the residue of `−m` at 0.
    fn pole(&self) -> f64 {
        let structural = if self.c1 > 0.0 {
            (1.0 - self.c2 / self.c1).max(0.0)
        } else {
            0.0
        };
        structural.max(self.h.zero_weight())
    }

    /// Transports a solution at `from` to a starting point at `to` by
    /// moving the pole part `−a/z` exactly and keeping the regular part.
    pub fn predict(&self, from: Complex64, m: Complex64, to: Complex64) -> Complex64 {
        let a = self.pole();
        m + a / from - a / to
    }

    /// Residual bound at `m`; relative once `|m|` exceeds one.
    fn tol_at(&self, m: Complex64) -> f64 {
        self.opts.tol * m.norm().max(1.0)
    }

    fn rhs(&self, z: Complex64, m: Complex64) -> Complex64 {
        rhs(z, self.c1, self.c2, self.h, m)
    }

    fn residual(&self, z: Complex64, m: Complex64) -> f64 {
        let r = (m - self.rhs(z, m)).norm();
        if r.is_finite() {
            r
        } else {
            f64::INFINITY
        }
    }

    /// `Im m > 0` and `Im m̲ > 0` (the latter waived when `c2 = 0`).
    fn in_uniqueness_set(&self, z: Complex64, m: Complex64) -> bool {
        m.im > 0.0 && (self.c2 == 0.0 || companion(z, self.c1, self.c2, m).im > 0.0)
    }

    fn newton_step(&self, z: Complex64, m: Complex64) -> Option<Complex64> {
        let a = Complex64::from(self.c2 - self.c1) - self.c1 * z * m;
        let mut psi = m;
        let mut dpsi = Complex64::from(1.0);
        for (t, w) in self.h.iter() {
            let den = a * t - z;
            psi -= w / den;
            dpsi -= w * self.c1 * z * t / (den * den);
        }
        let step = psi / dpsi;
        step.is_finite().then_some(step)
    }

    /// A few full Newton steps past the tolerance, kept while the residual
    /// keeps falling.
    fn polish(&self, z: Complex64, mut m: Complex64, mut residual: f64) -> (Complex64, f64) {
        for _ in 0..3 {
            let Some(step) = self.newton_step(z, m) else {
                break;
            };
            let cand = m - step;
            let r = self.residual(z, cand);
            if r >= residual || !self.in_uniqueness_set(z, cand) {
                break;
            }
            m = cand;
            residual = r;
        }
        (m, residual)
    }

    fn finish(
        &self,
        z: Complex64,
        m: Complex64,
        residual: f64,
        iterations: usize,
    ) -> StieltjesSolution {
        let (m, residual) = self.polish(z, m, residual);
        StieltjesSolution {
            z,
            m,
            m_under: companion(z, self.c1, self.c2, m),
            residual,
            iterations,
        }
    }

    fn non_convergence(&self, z: Complex64, iterations: usize, residual: f64) -> Error {
        Error::NonConvergence {
            z_re: z.re,
            z_im: z.im,
            iterations,
            residual,
        }
    }

    pub fn solve(&self, z: Complex64) -> Result<StieltjesSolution> {
        self.solve_from(z, None)
    }

    /// Solves starting from `guess` (typically the solution at a nearby
    /// point) instead of `−1/z`.
    pub fn solve_from(&self, z: Complex64, guess: Option<Complex64>) -> Result<StieltjesSolution> {
        check_upper(z)?;
        if !(self.opts.tol > 0.0) {
            return Err(Error::InvalidInput(
                "solver tolerance must be positive".into(),
            ));
        }
        let mut used = 0usize;
        let start = guess.unwrap_or(-1.0 / z);

        if guess.is_some() {
            if let Attempt::Converged(m, r) = self.newton(z, start, &mut used) {
                if self.in_uniqueness_set(z, m) {
                    return Ok(self.finish(z, m, r, used));
                }
            }
        }

        let (m_fp, r_fp) = match self.fixed_point(z, start, &mut used) {
            Attempt::Converged(m, r) if self.in_uniqueness_set(z, m) => {
                return Ok(self.finish(z, m, r, used));
            }
            Attempt::Converged(m, r) | Attempt::Failed(m, r) => (m, r),
        };

        if let Attempt::Converged(m, r) = self.newton(z, m_fp, &mut used) {
            if self.in_uniqueness_set(z, m) {
                return Ok(self.finish(z, m, r, used));
            }
        }

        match self.homotopy(z, &mut used) {
            Some((m, r)) => Ok(self.finish(z, m, r, used)),
            None => Err(self.non_convergence(z, used, r_fp)),
        }
    }

    fn fixed_point(&self, z: Complex64, start: Complex64, used: &mut usize) -> Attempt {
        let budget = FIXED_POINT_BUDGET.min(self.opts.max_iter.saturating_sub(*used));
        let mut m = start;
        let mut lambda = 1.0;
        let mut prev = f64::INFINITY;
        let mut best = (m, f64::INFINITY);
        let mut stall = 0usize;
        for _ in 0..budget {
            let next = self.rhs(z, m);
            let res = (next - m).norm();
            *used += 1;
            if !res.is_finite() {
                break;
            }
            if res < best.1 {
                best = (m, res);
            }
            if res <= self.tol_at(m) {
                let r = self.residual(z, m);
                return Attempt::Converged(m, r);
            }
            if res < prev {
                stall = 0;
            } else {
                stall += 1;
                if stall >= STALL_LIMIT {
                    lambda *= 0.5;
                    stall = 0;
                }
            }
            prev = res;
            m += lambda * (next - m);
        }
        Attempt::Failed(best.0, best.1)
    }

    /// Newton's method on `Ψ(m) = m − RHS(m)` with backtracking.
    fn newton(&self, z: Complex64, start: Complex64, used: &mut usize) -> Attempt {
        let mut m = start;
        let mut res = self.residual(z, m);
        for _ in 0..NEWTON_BUDGET {
            if *used >= self.opts.max_iter {
                break;
            }
            *used += 1;
            if res <= self.tol_at(m) {
                return Attempt::Converged(m, res);
            }
            let Some(step) = self.newton_step(z, m) else {
                break;
            };
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let cand = m - scale * step;
                let r = self.residual(z, cand);
                if r < res {
                    m = cand;
                    res = r;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if res <= self.tol_at(m) {
            Attempt::Converged(m, res)
        } else {
            Attempt::Failed(m, res)
        }
    }

    /// Solves high in the half-plane and walks down to `z` with Newton
    /// steps, halving the step whenever Newton fails or leaves the
    /// uniqueness set.
    fn homotopy(&self, z: Complex64, used: &mut usize) -> Option<(Complex64, f64)> {
        let mut v = (2.0 * z.im).max(HOMOTOPY_TOP);
        let top = Complex64::new(z.re, v);
        let mut m = match self.fixed_point(top, -1.0 / top, used) {
            Attempt::Converged(m, _) => m,
            Attempt::Failed(m, _) => match self.newton(top, m, used) {
                Attempt::Converged(m, _) => m,
                Attempt::Failed(..) => return None,
            },
        };
        if !self.in_uniqueness_set(top, m) {
            return None;
        }
        let mut ratio = 0.5;
        while v > z.im {
            if *used >= self.opts.max_iter || ratio > 1.0 - 1e-6 {
                return None;
            }
            let v_next = (v * ratio).max(z.im);
            let zk = Complex64::new(z.re, v_next);
            let zv = Complex64::new(z.re, v);
            match self.newton(zk, self.predict(zv, m, zk), used) {
                Attempt::Converged(mk, _) if self.in_uniqueness_set(zk, mk) => {
                    m = mk;
                    v = v_next;
                    ratio = (ratio * ratio).max(0.05);
                }
                _ => ratio = ratio.sqrt(),
            }
        }
        let r = self.residual(z, m);
        (r <= self.tol_at(m)).then_some((m, r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Root of `(z/4) m² + z m + 1 = 0` with positive imaginary part: the
    /// identity population at `p = n` after substituting `c1 = c2 = 1/4`.
    fn quadratic_oracle(z: Complex64) -> Complex64 {
        let a = z / 4.0;
        let b = z;
        let disc = (b * b - 4.0 * a).sqrt();
        let r1 = (-b + disc) / (2.0 * a);
        let r2 = (-b - disc) / (2.0 * a);
        if r1.im > r2.im {
            r1
        } else {
            r2
        }
    }

    #[test]
    fn matches_quadratic_root_at_p_equals_n() {
        let ratios = AspectRatios::new(50, 50).unwrap();
        let h = SpectralMeasure::identity();
        let opts = SolverOptions::default();
        for &z in &[
            c(0.5, 1.0),
            c(0.3, 1e-3),
            c(-0.4, 0.01),
            c(1.4, 1e-3),
            c(0.999, 1e-3),
        ] {
            let s = solve(z, &ratios, &h, &opts).unwrap();
            let o = quadratic_oracle(z);
            assert!((s.m - o).norm() < 1e-10, "z={z} m={} oracle={o}", s.m);
            assert!(s.residual <= opts.tol * s.m.norm().max(1.0));
            assert!(s.m.im > 0.0 && s.m_under.im > 0.0);
        }
    }

    #[test]
    fn rejects_real_axis() {
        let ratios = AspectRatios::new(10, 20).unwrap();
        let h = SpectralMeasure::identity();
        assert!(matches!(
            solve(c(0.5, 0.0), &ratios, &h, &SolverOptions::default()),
            Err(Error::InvalidInput(_))
        ));
        assert!(solve(c(0.5, -1.0), &ratios, &h, &SolverOptions::default()).is_err());
    }

    #[test]
    fn degenerate_limits() {
        let h = SpectralMeasure::identity();
        let s = solve_degenerate(c(0.0, 1.0), DegenerateLimit::LargeP, &h).unwrap();
        assert_eq!(s.m, c(0.0, 1.0));
        let s = solve_degenerate(c(0.0, 2.0), DegenerateLimit::LargeN, &h).unwrap();
        assert!((s.m - 1.0 / c(1.0, -2.0)).norm() < 1e-16);
        assert!(s.m.im > 0.0);

        let h2 = SpectralMeasure::uniform(&[0.5, 1.0]).unwrap();
        let z = c(0.3, 0.2);
        let direct: Complex64 = h2.iter().map(|(t, w)| w / (t - z)).sum();
        let any_m = c(7.0, -3.0);
        assert_eq!(rhs(z, 0.0, 1.0, &h2, any_m), direct);
        let mp = -1.0 / z;
        assert!((rhs(z, 1.0, 0.0, &h2, mp) - mp).norm() <= 4.0 * f64::EPSILON * mp.norm());
    }

    #[test]
    fn reflection_gives_conjugate() {
        let ratios = AspectRatios::new(30, 70).unwrap();
        let h = SpectralMeasure::uniform(&[0.25, 1.0]).unwrap();
        let opts = SolverOptions::default();
        let z = c(0.4, 0.05);
        let up = solve(z, &ratios, &h, &opts).unwrap();
        let down = solve_reflected(z.conj(), &ratios, &h, &opts).unwrap();
        assert_eq!(down.m, up.m.conj());
        assert_eq!(down.z, z.conj());
    }

    #[test]
    fn hard_cases_converge() {
        // Points where plain iteration stalls or crawls.
        let h = SpectralMeasure::uniform(&[0.5, 1.0]).unwrap();
        let opts = SolverOptions::default();
        for &(p, n, z) in &[
            (20000usize, 50usize, c(-0.5, 1e-3)),
            (50, 20000, c(0.9, 1e-5)),
            (400, 100, c(0.5, 1e-5)),
            (100, 100, c(1e-4, 1e-6)),
        ] {
            let ratios = AspectRatios::new(p, n).unwrap();
            let s = solve(z, &ratios, &h, &opts).unwrap();
            assert!(s.residual <= opts.tol * s.m.norm().max(1.0));
            assert!(s.m.im > 0.0 && s.m_under.im > 0.0);
        }
    }

    #[test]
    fn normalization_at_infinity() {
        let ratios = AspectRatios::new(300, 100).unwrap();
        let h = SpectralMeasure::uniform(&[0.1, 0.6, 1.0]).unwrap();
        let v = 1e6;
        let s = solve(c(0.0, v), &ratios, &h, &SolverOptions::default()).unwrap();
        assert!((c(0.0, v) * s.m + 1.0).norm() < 1e-3);
    }
}
