//! Tests of `H0: Σ = I` from the sample spectrum.
//!
//! - The Frobenius-norm statistic
//!   `W = tr(S⁰ − I)²/p − (tr S⁰)²/(np) + p/n` with `S⁰ = XX*/n`, for which
//!   `nW − p − (α + Δ) → N(0, 2(1 + α))` whatever the ratio `p/n`.
//! - The corrected likelihood ratio statistic `L* = tr S⁰ − log|S⁰| − p`
//!   for `p < n`, and for `p > n` the quasi-LRT `L` computed the same way on
//!   `Ŝ = X*X/p`, each centred by `A_n`, `B_n` and scaled by `C_n`.

use serde::{Deserialize, Serialize};

use crate::datafile::DataMatrix;
use crate::lss::identity_closed_forms;
use crate::montecarlo::gram_eigenvalues;
use crate::spectral::{AspectRatios, MomentProfile};
use crate::stats::{lower_p, two_sided_p, upper_p};
use crate::{Error, Result};

/// Eigenvalues at or below this are treated as zero by the LRT family.
pub const SINGULAR_EIGENVALUE: f64 = 1e-300;

/// Numerical-rank cutoff `k · ε · λ_max`, floored at [`SINGULAR_EIGENVALUE`].
pub fn singular_cutoff(eigs: &[f64]) -> f64 {
    let top = eigs.iter().cloned().fold(0.0, f64::max);
    SINGULAR_EIGENVALUE.max(eigs.len() as f64 * f64::EPSILON * top)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestName {
    Frobenius,
    CorrectedLrt,
    QuasiLrt,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
    Upper,
    Lower,
}

impl Alternative {
    pub fn p_value(self, z: f64) -> f64 {
        match self {
            Alternative::TwoSided => two_sided_p(z),
            Alternative::Upper => upper_p(z),
            Alternative::Lower => lower_p(z),
        }
    }
}

/// Where the moment profile used by a test came from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    #[default]
    Supplied,
    /// Estimated from the data; a heuristic input.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestMeta {
    pub p: usize,
    pub n: usize,
    pub alpha: f64,
    pub delta: f64,
    /// Ratio entering the centring constants: `p/n`, or `n/p` for the
    /// quasi-LRT.
    pub c_n: f64,
    pub moments: MomentSource,
    pub alternative: Alternative,
}

/// A standardized test statistic. `z_score = (raw_statistic − centering)/scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: TestName,
    /// `nW` for the Frobenius test, `L*` or `L` for the LRT family.
    pub raw_statistic: f64,
    pub centering: f64,
    pub scale: f64,
    pub z_score: f64,
    pub p_value: f64,
    pub meta: TestMeta,
}

impl TestReport {
    fn build(name: TestName, raw: f64, centering: f64, scale: f64, meta: TestMeta) -> TestReport {
        let z_score = (raw - centering) / scale;
        TestReport {
            name,
            raw_statistic: raw,
            centering,
            scale,
            z_score,
            p_value: meta.alternative.p_value(z_score),
            meta,
        }
    }

    pub fn with_alternative(mut self, alternative: Alternative) -> TestReport {
        self.meta.alternative = alternative;
        self.p_value = alternative.p_value(self.z_score);
        self
    }

    pub fn with_moment_source(mut self, source: MomentSource) -> TestReport {
        self.meta.moments = source;
        self
    }

    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

fn meta(p: usize, n: usize, c_n: f64, moments: &MomentProfile) -> TestMeta {
    TestMeta {
        p,
        n,
        alpha: moments.alpha(),
        delta: moments.delta(),
        c_n,
        moments: MomentSource::Supplied,
        alternative: Alternative::TwoSided,
    }
}

fn check_count(eigs: &[f64], expected: usize) -> Result<()> {
    if eigs.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: eigs.len(),
        });
    }
    if let Some(bad) = eigs.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidInput(format!(
            "eigenvalue {bad} is not a finite nonnegative number"
        )));
    }
    Ok(())
}

fn frobenius_w(tr1: f64, tr2: f64, p: usize, n: usize) -> f64 {
    let (pf, nf) = (p as f64, n as f64);
    (tr2 - 2.0 * tr1 + pf) / pf - tr1 * tr1 / (nf * pf) + pf / nf
}

/// `W` from the `min(p, n)` eigenvalues of `S⁰ = XX*/n`; the `p − n`
/// structural zeros of the case `p > n` each add `(0 − 1)² = 1`.
pub fn frobenius_statistic(eigs: &[f64], p: usize, n: usize) -> Result<f64> {
    check_count(eigs, p.min(n))?;
    let tr1: f64 = eigs.iter().sum();
    let tr2: f64 = eigs.iter().map(|l| l * l).sum();
    Ok(frobenius_w(tr1, tr2, p, n))
}

/// Frobenius test from `tr S⁰` and `tr (S⁰)²`.
pub fn frobenius_from_traces(
    tr1: f64,
    tr2: f64,
    p: usize,
    n: usize,
    moments: &MomentProfile,
) -> Result<TestReport> {
    if p == 0 || n == 0 {
        return Err(Error::InvalidInput("p and n must be positive".into()));
    }
    let w = frobenius_w(tr1, tr2, p, n);
    let (a, d) = (moments.alpha(), moments.delta());
    Ok(TestReport::build(
        TestName::Frobenius,
        n as f64 * w,
        p as f64 + a + d,
        (2.0 * (1.0 + a)).sqrt(),
        meta(p, n, p as f64 / n as f64, moments),
    ))
}

pub fn frobenius_test(
    eigs: &[f64],
    p: usize,
    n: usize,
    moments: &MomentProfile,
) -> Result<TestReport> {
    check_count(eigs, p.min(n))?;
    let tr1: f64 = eigs.iter().sum();
    let tr2: f64 = eigs.iter().map(|l| l * l).sum();
    frobenius_from_traces(tr1, tr2, p, n, moments)
}

/// `(A_n(c), B_n(c), C_n(c))` for `0 < c < 1`.
pub fn lrt_constants(c: f64, moments: &MomentProfile) -> Result<(f64, f64, f64)> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::LogDomain(format!(
            "log(1 − c) needs 0 < c < 1, got c = {c}"
        )));
    }
    let (a, d) = (moments.alpha(), moments.delta());
    let l = (-c).ln_1p();
    let an = 1.0 - ((c - 1.0) / c) * l;
    let bn = -a * l / 2.0 + d * c / 2.0;
    let cn2 = -(1.0 + a) * (l + c);
    Ok((an, bn, cn2.sqrt()))
}

fn x_minus_log_sum(eigs: &[f64]) -> Result<f64> {
    let cutoff = singular_cutoff(eigs);
    let mut s = 0.0;
    for &l in eigs {
        if l <= cutoff {
            return Err(Error::SingularMatrix { min_eigenvalue: l });
        }
        s += l - l.ln() - 1.0;
    }
    Ok(s)
}

/// `L* = Σ(λ − log λ) − p` over the `p` eigenvalues of `S⁰` when `p < n`;
/// `L = Σ(μ − log μ) − n` over the `n` eigenvalues of `X*X/p` when `p > n`.
pub fn lrt_statistic(eigs: &[f64], p: usize, n: usize) -> Result<f64> {
    if p == n {
        return Err(Error::Degenerate(format!(
            "likelihood ratio tests are undefined at p = n = {p}"
        )));
    }
    check_count(eigs, p.min(n))?;
    x_minus_log_sum(eigs)
}

pub fn lrt_test(eigs: &[f64], p: usize, n: usize, moments: &MomentProfile) -> Result<TestReport> {
    let raw = lrt_statistic(eigs, p, n)?;
    let (name, c, k) = if p < n {
        (TestName::CorrectedLrt, p as f64 / n as f64, p)
    } else {
        (TestName::QuasiLrt, n as f64 / p as f64, n)
    };
    let (an, bn, cn) = lrt_constants(c, moments)?;
    Ok(TestReport::build(
        name,
        raw,
        k as f64 * an + bn,
        cn,
        meta(p, n, c, moments),
    ))
}

/// The `min(p, n)` eigenvalues of `S⁰ = XX*/n`.
pub fn frobenius_eigenvalues(x: &DataMatrix) -> Result<Vec<f64>> {
    gram_eigenvalues(x, 1.0 / x.n() as f64)
}

/// Eigenvalues for [`lrt_test`]: those of `XX*/n` when `p < n`, of
/// `X*X/p` when `p > n`.
pub fn lrt_eigenvalues(x: &DataMatrix) -> Result<Vec<f64>> {
    let (p, n) = (x.p(), x.n());
    if p == n {
        return Err(Error::Degenerate(format!(
            "likelihood ratio tests are undefined at p = n = {p}"
        )));
    }
    gram_eigenvalues(x, 1.0 / p.max(n) as f64)
}

/// Null laws of `nW − p` and the LRT pivot rebuilt from the closed-form
/// LSS moments of `(x, x², log x)` by the delta method, next to the
/// constants used by the tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaMethodReport {
    pub c1: f64,
    pub c2: f64,
    /// `(mean, variance)` of `nW − p` from the delta method.
    pub frobenius: (f64, f64),
    /// `(α + Δ, 2(1 + α))`.
    pub frobenius_direct: (f64, f64),
    /// `(mean, variance)` of the LRT pivot from the delta method.
    pub lrt: (f64, f64),
    /// `(B_n(c), C_n(c)²)` at `c = c1/c2 = p/n`.
    pub lrt_direct: (f64, f64),
    /// `g2(θ)` and `A_n(c1/c2)`.
    pub g2_theta: f64,
    pub a_n: f64,
    pub max_discrepancy: f64,
}

/// Requires `c1 < c2`.
pub fn delta_method_check(
    ratios: &AspectRatios,
    moments: &MomentProfile,
) -> Result<DeltaMethodReport> {
    let cf = identity_closed_forms(ratios, moments)?;
    let (c1, c2) = (ratios.c1, ratios.c2);
    let r = (c1 * c2).sqrt();
    let th = cf.theta;
    let grad1 = [
        -2.0 * (c2 / c1).sqrt() - 2.0 * (c1 / c2) * th[0],
        1.0 / r,
        0.0,
    ];
    let grad2 = [(c1 / c2).sqrt(), 0.0, -r];
    let mean = |g: &[f64; 3]| (0..3).map(|i| g[i] * cf.means[i]).sum::<f64>();
    let var = |g: &[f64; 3]| {
        (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| g[i] * g[j] * cf.cov[i][j])
            .sum::<f64>()
    };
    let g2_theta = (c1 / c2).sqrt() * th[0] - r * th[2] + c2.ln() - 1.0;
    let c = c1 / c2;
    let (an, bn, cn) = lrt_constants(c, moments)?;
    let (a, d) = (moments.alpha(), moments.delta());
    let frobenius = (mean(&grad1), var(&grad1));
    let frobenius_direct = (a + d, 2.0 * (1.0 + a));
    let lrt = (mean(&grad2), var(&grad2));
    let lrt_direct = (bn, cn * cn);
    let max_discrepancy = [
        frobenius.0 - frobenius_direct.0,
        frobenius.1 - frobenius_direct.1,
        lrt.0 - lrt_direct.0,
        lrt.1 - lrt_direct.1,
        g2_theta - an,
    ]
    .iter()
    .map(|v| v.abs())
    .fold(0.0, f64::max);
    Ok(DeltaMethodReport {
        c1,
        c2,
        frobenius,
        frobenius_direct,
        lrt,
        lrt_direct,
        g2_theta,
        a_n: an,
        max_discrepancy,
    })
}

/// `α` from `is_real`; `Δ̂ = m̂₄ − 2 − α` with `m̂₄` the pooled fourth
/// moment of row-centred, standardized entries.
pub fn estimate_moment_profile(x: &DataMatrix, is_real: bool) -> Result<MomentProfile> {
    let (p, n) = (x.p(), x.n());
    if p * n < 100 {
        return Err(Error::InsufficientData { entries: p * n });
    }
    let c = x.to_complex();
    let mut m2 = 0.0;
    let mut m4 = 0.0;
    for i in 0..p {
        let row = c.row(i);
        let mean = row.iter().sum::<num_complex::Complex64>() / n as f64;
        for v in row.iter() {
            let a = (v - mean).norm_sqr();
            m2 += a;
            m4 += a * a;
        }
    }
    let count = (p * n) as f64;
    let (m2, m4) = (m2 / count, m4 / count);
    if m2 <= 0.0 {
        return Err(Error::InvalidInput("data have zero variance".into()));
    }
    let alpha = if is_real { 1.0 } else { 0.0 };
    let delta = (m4 / (m2 * m2) - 2.0 - alpha).max(-1.0 - alpha);
    MomentProfile::new(alpha, delta)
}
