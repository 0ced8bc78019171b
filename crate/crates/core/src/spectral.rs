//! Domain types shared across the crate: the population spectral measure
//! `H`, the aspect ratios of the `(p, n)` geometry and the fourth-moment
//! profile of the entries.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative distance under which two atoms are merged.
const MERGE_TOL: f64 = 1e-12;
/// Allowed deviation of the total mass from one.
const MASS_TOL: f64 = 1e-12;

/// Discrete population spectral distribution, normalized so that the
/// largest atom sits at exactly 1.
///
/// Atoms are the eigenvalues of `Σ/‖Σ‖`; they are kept sorted, distinct and
/// inside `[0, 1]`, and every weight is strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub struct SpectralMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<RawMeasure> for SpectralMeasure {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        SpectralMeasure::new(raw.atoms, raw.weights)
    }
}

impl From<SpectralMeasure> for RawMeasure {
    fn from(m: SpectralMeasure) -> Self {
        RawMeasure {
            atoms: m.atoms,
            weights: m.weights,
        }
    }
}

impl SpectralMeasure {
    /// Builds a measure from atoms and weights, sorting the atoms and merging
    /// near-duplicates. The largest atom must equal 1 and the weights must
    /// sum to 1, both within `1e-12`.
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("spectral measure has no atoms".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: atoms.len(),
                found: weights.len(),
            });
        }
        if let Some(t) = atoms
            .iter()
            .find(|t| !t.is_finite() || **t < 0.0 || **t > 1.0 + MERGE_TOL)
        {
            return Err(Error::InvalidInput(format!("atom {t} outside [0, 1]")));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w <= 0.0) {
            return Err(Error::InvalidInput(format!("weight {w} is not positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidInput(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        let top = atoms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if (top - 1.0).abs() > MERGE_TOL {
            return Err(Error::InvalidInput(format!(
                "largest atom is {top}; atoms must be normalized by the spectral norm"
            )));
        }
        Ok(Self::canonical(atoms, weights))
    }

    /// Point mass at 1, the population measure under `Σ = I`.
    pub fn identity() -> Self {
        SpectralMeasure {
            atoms: vec![1.0],
            weights: vec![1.0],
        }
    }

    /// Uniform mass over the given atoms after rescaling by their maximum.
    pub fn uniform(atoms: &[f64]) -> Result<Self> {
        let w = vec![1.0; atoms.len()];
        Self::from_weighted(atoms, &w)
    }

    /// Rescales atoms by their maximum and weights by their sum.
    pub fn from_weighted(atoms: &[f64], weights: &[f64]) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: atoms.len(),
                found: weights.len(),
            });
        }
        if atoms.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidInput(
                "atoms must be finite and nonnegative".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidInput("weights must be positive".into()));
        }
        let top = atoms.iter().cloned().fold(0.0, f64::max);
        if top <= 0.0 {
            return Err(Error::InvalidInput(
                "all atoms are zero; Σ = 0 has no spectral-norm normalization".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        let mut scaled: Vec<f64> = atoms.iter().map(|a| a / top).collect();
        // Keep the top atom exactly at one regardless of rounding.
        for (s, a) in scaled.iter_mut().zip(atoms) {
            if *a == top {
                *s = 1.0;
            }
        }
        let w = weights.iter().map(|w| w / total).collect();
        Ok(Self::canonical(scaled, w))
    }

    /// Empirical spectral distribution of `Σ/‖Σ‖` from the eigenvalues of `Σ`.
    pub fn from_sigma_eigenvalues(eigs: &[f64]) -> Result<Self> {
        if eigs.is_empty() {
            return Err(Error::InvalidInput("no eigenvalues supplied".into()));
        }
        if eigs.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::InvalidInput(
                "eigenvalues of a covariance matrix must be finite and nonnegative".into(),
            ));
        }
        let w = vec![1.0; eigs.len()];
        Self::from_weighted(eigs, &w)
    }

    fn canonical(atoms: Vec<f64>, weights: Vec<f64>) -> Self {
        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out_a: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut out_w: Vec<f64> = Vec::with_capacity(pairs.len());
        for (a, w) in pairs {
            match out_a.last() {
                Some(&last)
                    if (a - last).abs() <= MERGE_TOL * a.abs().max(last.abs()).max(MERGE_TOL) =>
                {
                    *out_w.last_mut().unwrap() += w;
                    // The merged atom keeps the larger location so the top stays at 1.
                    *out_a.last_mut().unwrap() = a;
                }
                _ => {
                    out_a.push(a);
                    out_w.push(w);
                }
            }
        }
        let top = out_a.len() - 1;
        out_a[top] = 1.0;
        SpectralMeasure {
            atoms: out_a,
            weights: out_w,
        }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `(atom, weight)` pairs in increasing atom order.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms.iter().cloned().zip(self.weights.iter().cloned())
    }

    /// `∫ t^k dH(t)`.
    pub fn moment(&self, k: i32) -> f64 {
        self.iter().map(|(t, w)| w * t.powi(k)).sum()
    }

    /// Mass of the atom at exactly zero, if any.
    pub fn zero_weight(&self) -> f64 {
        if self.atoms[0] == 0.0 {
            self.weights[0]
        } else {
            0.0
        }
    }

    /// Smallest strictly positive atom.
    pub fn min_positive_atom(&self) -> f64 {
        self.atoms.iter().cloned().find(|t| *t > 0.0).unwrap_or(1.0)
    }

    pub fn is_identity(&self) -> bool {
        self.atoms.len() == 1
    }

    /// Integer eigenvalue multiplicities for a `p`-dimensional diagonal
    /// realization, apportioned by largest remainder so they sum to `p`.
    pub fn apportion(&self, p: usize) -> Vec<usize> {
        let quotas: Vec<f64> = self.weights.iter().map(|w| w * p as f64).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        // Ties go to the larger atom, which keeps the spectral norm at 1.
        order.sort_by(|&i, &j| {
            let ri = quotas[i] - quotas[i].floor();
            let rj = quotas[j] - quotas[j].floor();
            rj.total_cmp(&ri).then(j.cmp(&i))
        });
        for &i in order.iter().take(p.saturating_sub(assigned)) {
            counts[i] += 1;
        }
        counts
    }

    /// Diagonal of `Σ/‖Σ‖` with multiplicities from [`Self::apportion`], in
    /// increasing order.
    pub fn diagonal(&self, p: usize) -> Vec<f64> {
        let counts = self.apportion(p);
        let mut diag = Vec::with_capacity(p);
        for (&t, &c) in self.atoms.iter().zip(&counts) {
            diag.extend(std::iter::repeat_n(t, c));
        }
        diag
    }
}

/// The `(p, n)` geometry: `ν = (√p + √n)²`, `c1 = p/ν`, `c2 = n/ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AspectRatios {
    pub p: usize,
    pub n: usize,
    pub nu: f64,
    pub c1: f64,
    pub c2: f64,
}

impl AspectRatios {
    pub fn new(p: usize, n: usize) -> Result<Self> {
        if p == 0 || n == 0 {
            return Err(Error::InvalidInput(format!(
                "dimension and sample size must be positive (p = {p}, n = {n})"
            )));
        }
        let (pf, nf) = (p as f64, n as f64);
        let nu = (pf.sqrt() + nf.sqrt()).powi(2);
        Ok(AspectRatios {
            p,
            n,
            nu,
            c1: pf / nu,
            c2: nf / nu,
        })
    }

    /// `p / n`.
    pub fn cn(&self) -> f64 {
        self.p as f64 / self.n as f64
    }

    /// `√(c1 c2)`, which also equals `√(pn)/ν`.
    pub fn root_c1c2(&self) -> f64 {
        (self.c1 * self.c2).sqrt()
    }

    pub fn scenario(&self) -> LimitScenario {
        LimitScenario::classify(self.c1, self.c2)
    }
}

/// Alias matching the shorthand used throughout the docs.
pub fn make_ratios(p: usize, n: usize) -> Result<AspectRatios> {
    AspectRatios::new(p, n)
}

/// Fourth-moment description of the standardized entries:
/// `α = E y²` (1 real, 0 complex) and `Δ = E|y|⁴ − 2 − α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile", into = "RawProfile")]
pub struct MomentProfile {
    alpha: f64,
    delta: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    alpha: f64,
    delta: f64,
}

impl TryFrom<RawProfile> for MomentProfile {
    type Error = Error;
    fn try_from(r: RawProfile) -> Result<Self> {
        MomentProfile::new(r.alpha, r.delta)
    }
}

impl From<MomentProfile> for RawProfile {
    fn from(m: MomentProfile) -> Self {
        RawProfile {
            alpha: m.alpha,
            delta: m.delta,
        }
    }
}

impl MomentProfile {
    pub fn new(alpha: f64, delta: f64) -> Result<Self> {
        if alpha != 0.0 && alpha != 1.0 {
            return Err(Error::InvalidInput(format!(
                "alpha must be 0 or 1, got {alpha}"
            )));
        }
        if !delta.is_finite() || delta < -1.0 - alpha {
            return Err(Error::InvalidInput(format!(
                "delta = {delta} violates E|y|^4 >= 1 (delta >= {})",
                -1.0 - alpha
            )));
        }
        Ok(MomentProfile { alpha, delta })
    }

    pub fn real_gaussian() -> Self {
        MomentProfile {
            alpha: 1.0,
            delta: 0.0,
        }
    }

    pub fn complex_gaussian() -> Self {
        MomentProfile {
            alpha: 0.0,
            delta: 0.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_real(&self) -> bool {
        self.alpha == 1.0
    }

    /// `E|y|⁴`.
    pub fn fourth_moment(&self) -> f64 {
        2.0 + self.alpha + self.delta
    }
}

/// Which limiting regime a finite `(c1, c2)` resembles. Diagnostic only; no
/// formula branches on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitScenario {
    Comparable,
    LargeN,
    LargeP,
}

impl LimitScenario {
    pub const THRESHOLD: f64 = 0.01;

    pub fn classify(c1: f64, c2: f64) -> Self {
        if c1 < Self::THRESHOLD {
            LimitScenario::LargeN
        } else if c2 < Self::THRESHOLD {
            LimitScenario::LargeP
        } else {
            LimitScenario::Comparable
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ratios_small_cases() {
        let r = AspectRatios::new(1, 1).unwrap();
        assert_eq!(r.nu, 4.0);
        assert_eq!(r.c1, 0.25);
        assert_eq!(r.c2, 0.25);

        for p in [3usize, 17, 1000] {
            let r = AspectRatios::new(p, p).unwrap();
            assert!((r.c1 - 0.25).abs() < 1e-15 && (r.c2 - 0.25).abs() < 1e-15);
        }

        let r = AspectRatios::new(400, 100).unwrap();
        assert_eq!(r.nu, 900.0);
        assert!((r.c1 - 4.0 / 9.0).abs() < 1e-15);
        assert!((r.c2 - 1.0 / 9.0).abs() < 1e-15);
        assert!((r.c1.sqrt() + r.c2.sqrt() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ratios_reject_zero() {
        assert!(AspectRatios::new(0, 5).is_err());
        assert!(AspectRatios::new(5, 0).is_err());
    }

    #[test]
    fn identity_measure_basics() {
        let h = SpectralMeasure::identity();
        assert_eq!(h.atoms(), &[1.0]);
        assert_eq!(h.weights(), &[1.0]);
        assert_eq!(h.moment(1), 1.0);
        assert!(SpectralMeasure::new(h.atoms().to_vec(), h.weights().to_vec()).is_ok());
    }

    #[test]
    fn measure_from_eigenvalues() {
        let h = SpectralMeasure::from_sigma_eigenvalues(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(h.atoms(), &[1.0]);
        assert_eq!(h.weights(), &[1.0]);

        let h = SpectralMeasure::from_sigma_eigenvalues(&[1.0, 2.0, 2.0, 4.0]).unwrap();
        assert_eq!(h.atoms(), &[0.25, 0.5, 1.0]);
        assert_eq!(h.weights(), &[0.25, 0.5, 0.25]);

        let h = SpectralMeasure::from_sigma_eigenvalues(&[5.0, 0.0]).unwrap();
        assert_eq!(h.atoms(), &[0.0, 1.0]);
        assert_eq!(h.weights(), &[0.5, 0.5]);
        assert_eq!(h.zero_weight(), 0.5);

        assert!(SpectralMeasure::from_sigma_eigenvalues(&[0.0, 0.0]).is_err());
        assert!(SpectralMeasure::from_sigma_eigenvalues(&[]).is_err());
        assert!(SpectralMeasure::from_sigma_eigenvalues(&[-1.0, 1.0]).is_err());
    }

    #[test]
    fn measure_validation() {
        assert!(SpectralMeasure::new(vec![0.5], vec![1.0]).is_err());
        assert!(SpectralMeasure::new(vec![0.5, 1.0], vec![0.5, 0.4]).is_err());
        assert!(SpectralMeasure::new(vec![0.5, 1.0], vec![1.0, 0.0]).is_err());
        assert!(SpectralMeasure::new(vec![1.0, 1.5], vec![0.5, 0.5]).is_err());
        let h = SpectralMeasure::new(vec![1.0, 0.5, 1.0 - 1e-14], vec![0.25, 0.5, 0.25]).unwrap();
        assert_eq!(h.atoms(), &[0.5, 1.0]);
        assert_eq!(h.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn measure_json_shape() {
        let h = SpectralMeasure::uniform(&[0.5, 1.0]).unwrap();
        let s = serde_json::to_string(&h).unwrap();
        assert_eq!(s, r#"{"atoms":[0.5,1.0],"weights":[0.5,0.5]}"#);
        let back: SpectralMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, h);
        assert!(
            serde_json::from_str::<SpectralMeasure>(r#"{"atoms":[0.5],"weights":[1]}"#).is_err()
        );
        assert!(
            serde_json::from_str::<SpectralMeasure>(r#"{"atoms":[1],"weights":[1],"x":1}"#)
                .is_err()
        );
    }

    #[test]
    fn apportion_sums_to_p() {
        let h = SpectralMeasure::new(vec![0.2, 0.5, 1.0], vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])
            .unwrap();
        for p in [1usize, 2, 7, 100, 1001] {
            let c = h.apportion(p);
            assert_eq!(c.iter().sum::<usize>(), p);
            let d = h.diagonal(p);
            assert_eq!(d.len(), p);
            assert_eq!(*d.last().unwrap(), 1.0);
        }
        assert_eq!(h.apportion(10), vec![3, 3, 4]);
    }

    #[test]
    fn moment_profile_validation() {
        assert!(MomentProfile::new(0.5, 0.0).is_err());
        assert!(MomentProfile::new(1.0, -2.0).is_ok());
        assert!(MomentProfile::new(1.0, -2.1).is_err());
        assert!(MomentProfile::new(0.0, -1.0).is_ok());
        assert!(MomentProfile::new(0.0, -1.5).is_err());
        assert_eq!(MomentProfile::real_gaussian().fourth_moment(), 3.0);
        assert_eq!(MomentProfile::complex_gaussian().fourth_moment(), 2.0);
    }

    #[test]
    fn scenario_threshold() {
        assert_eq!(
            AspectRatios::new(100, 100).unwrap().scenario(),
            LimitScenario::Comparable
        );
        assert_eq!(
            AspectRatios::new(10, 1_000_000).unwrap().scenario(),
            LimitScenario::LargeN
        );
        assert_eq!(
            AspectRatios::new(1_000_000, 10).unwrap().scenario(),
            LimitScenario::LargeP
        );
    }

    proptest! {
        #[test]
        fn ratios_identity_holds(p in 1usize..1_000_000_000, n in 1usize..1_000_000_000) {
            let r = AspectRatios::new(p, n).unwrap();
            prop_assert!((r.c1.sqrt() + r.c2.sqrt() - 1.0).abs() < 1e-14);
            prop_assert!((r.c1 + r.c2 + 2.0 * (r.c1 * r.c2).sqrt() - 1.0).abs() < 1e-14);
            prop_assert!(r.c1 > 0.0 && r.c1 < 1.0 && r.c2 > 0.0 && r.c2 < 1.0);
            prop_assert!(r.nu > p.max(n) as f64);
        }

        #[test]
        fn measure_scaling_invariant(eigs in proptest::collection::vec(0.0f64..10.0, 1..20), scale in 0.01f64..100.0) {
            prop_assume!(eigs.iter().any(|e| *e > 1e-6));
            let a = SpectralMeasure::from_sigma_eigenvalues(&eigs).unwrap();
            let scaled: Vec<f64> = eigs.iter().map(|e| e * scale).collect();
            let b = SpectralMeasure::from_sigma_eigenvalues(&scaled).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.atoms().iter().zip(b.atoms()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            for (x, y) in a.weights().iter().zip(b.weights()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            for k in 1..5 {
                let m = a.moment(k);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&m));
            }
        }
    }
}
