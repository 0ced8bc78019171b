//! Closed-form limits for `Σ = I` and `f ∈ {x, x², log x}`.

use serde::{Deserialize, Serialize};

use super::LssMomentTable;
use crate::spectral::{AspectRatios, MomentProfile};
use crate::{Error, Result};

/// Means, covariance and centring functionals `θ_j = ∫ f_j dF / √(c1c2)`
/// for `(x, x², log x)` under `H = δ₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityClosedForms {
    pub means: [f64; 3],
    pub cov: [[f64; 3]; 3],
    pub theta: [f64; 3],
}

/// The polynomial part `(x, x²)`, valid for every aspect ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialClosedForms {
    pub means: [f64; 2],
    pub cov: [[f64; 2]; 2],
    pub theta: [f64; 2],
}

pub fn identity_polynomial_closed_forms(
    ratios: &AspectRatios,
    moments: &MomentProfile,
) -> PolynomialClosedForms {
    let (c1, c2) = (ratios.c1, ratios.c2);
    let (a, d) = (moments.alpha(), moments.delta());
    let r = (c1 * c2).sqrt();
    let k = 1.0 + a + d;
    let s = c1 + c2;
    let c12 = 2.0 * s * k;
    let lead = (c2 / c1).sqrt();
    PolynomialClosedForms {
        means: [0.0, r * (a + d)],
        cov: [[k, c12], [c12, 4.0 * s * s * k + 2.0 * c1 * c2 * (1.0 + a)]],
        theta: [lead, lead * s],
    }
}

/// Requires `p < n`, where `log x` is integrable against the limit law.
pub fn identity_closed_forms(
    ratios: &AspectRatios,
    moments: &MomentProfile,
) -> Result<IdentityClosedForms> {
    let (c1, c2) = (ratios.c1, ratios.c2);
    if c2 <= c1 {
        return Err(Error::LogDomain(format!(
            "log x needs c1 < c2, got c1 = {c1}, c2 = {c2}"
        )));
    }
    let poly = identity_polynomial_closed_forms(ratios, moments);
    let (a, d) = (moments.alpha(), moments.delta());
    let r = (c1 * c2).sqrt();
    let y = c1 / c2;
    let l = (1.0 - y).ln();
    let k = 1.0 + a + d;
    let c13 = k / c2;
    let c23 = (1.0 + a) * (c1 + 2.0 * c2) / c2 + 2.0 * d * (c1 + c2) / c2;
    let c33 = -(1.0 + a) / (c1 * c2) * l + d / (c2 * c2);
    let [[c11, c12], [_, c22]] = poly.cov;
    let lead = (c2 / c1).sqrt();
    let theta3 = ((c2 - c1).ln() - 1.0) / r + lead * (c2.ln() - (c2 - c1).ln()) / c1;
    Ok(IdentityClosedForms {
        means: [poly.means[0], poly.means[1], (a * l - d * y) / (2.0 * r)],
        cov: [[c11, c12, c13], [c12, c22, c23], [c13, c23, c33]],
        theta: [poly.theta[0], poly.theta[1], theta3],
    })
}

impl IdentityClosedForms {
    pub fn to_table(&self) -> LssMomentTable {
        LssMomentTable {
            functions: vec!["x".into(), "x^2".into(), "log".into()],
            means: self.means.to_vec(),
            cov: self.cov.iter().map(|r| r.to_vec()).collect(),
            asymmetry: 0.0,
            max_imag: 0.0,
            nodes: (0, 0),
            finite_p_traces: false,
        }
    }
}

impl PolynomialClosedForms {
    pub fn to_table(&self) -> LssMomentTable {
        LssMomentTable {
            functions: vec!["x".into(), "x^2".into()],
            means: self.means.to_vec(),
            cov: self.cov.iter().map(|r| r.to_vec()).collect(),
            asymmetry: 0.0,
            max_imag: 0.0,
            nodes: (0, 0),
            finite_p_traces: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_gaussian_values() {
        let r = AspectRatios::new(100, 400).unwrap();
        let cf = identity_closed_forms(&r, &MomentProfile::real_gaussian()).unwrap();
        assert_eq!(cf.means[0], 0.0);
        assert!((cf.cov[0][0] - 2.0).abs() < 1e-15);
        assert_eq!(cf.cov[1][2], cf.cov[2][1]);
        // √(c1) + √(c2) = 1 with c1/c2 = 1/4.
        assert!((r.c1 - 1.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn log_refused_for_wide_data() {
        let r = AspectRatios::new(400, 100).unwrap();
        assert!(matches!(
            identity_closed_forms(&r, &MomentProfile::real_gaussian()),
            Err(Error::LogDomain(_))
        ));
        let poly = identity_polynomial_closed_forms(&r, &MomentProfile::real_gaussian());
        assert!(poly.cov[1][1] > 0.0);
    }
}
