//! Density and distribution function of the limit law by Stieltjes inversion.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Solver, SolverOptions};
use crate::spectral::{AspectRatios, SpectralMeasure};
use crate::{Error, Result};

/// Extrapolated densities below this are reported as zero.
const DENSITY_FLOOR: f64 = 1e-8;
/// Default number of cells in the distribution-function grid.
const CDF_CELLS: usize = 4000;

pub const DEFAULT_LADDER: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];

/// Mass of the limit law at the origin.
///
/// When `p > n` at least `p − n` eigenvalues vanish; zero atoms of `H`
/// force further zeros. Equals `max(0, 1 − c2/c1)` when `H` has no atom at 0.
pub fn zero_atom(ratios: &AspectRatios, h: &SpectralMeasure) -> f64 {
    let structural = (1.0 - ratios.c2 / ratios.c1).max(0.0);
    structural.max(h.zero_weight())
}

/// An interval `[lo, hi]` that contains the continuous part of the limit law.
pub fn support_bounds(ratios: &AspectRatios, h: &SpectralMeasure) -> (f64, f64) {
    let active = 1.0 - h.zero_weight();
    let t_min = h.min_positive_atom();
    let lo = t_min * ((ratios.c1 * active).sqrt() - ratios.c2.sqrt()).powi(2);
    (lo.clamp(0.0, 1.0), 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub zero_atom: f64,
}

impl DensityCurve {
    /// Trapezoid mass of the continuous part plus the atom at zero.
    pub fn total_mass(&self) -> f64 {
        self.zero_atom + trapezoid(&self.grid, &self.density, self.grid.len())
    }

    /// Distribution function from the trapezoid rule on the curve's grid.
    pub fn cdf_at(&self, x: f64) -> Result<f64> {
        let first = *self
            .grid
            .first()
            .ok_or_else(|| Error::Domain("empty density grid".into()))?;
        if x < first {
            return Err(Error::Domain(format!(
                "x = {x} lies below the grid start {first}"
            )));
        }
        let k = self.grid.partition_point(|&g| g <= x);
        let mut mass = trapezoid(&self.grid, &self.density, k);
        if k < self.grid.len() {
            let (x0, x1) = (self.grid[k - 1], self.grid[k]);
            let (f0, f1) = (self.density[k - 1], self.density[k]);
            let fx = f0 + (f1 - f0) * (x - x0) / (x1 - x0);
            mass += 0.5 * (f0 + fx) * (x - x0);
        }
        let atom = if x >= 0.0 { self.zero_atom } else { 0.0 };
        Ok((mass + atom).clamp(0.0, 1.0))
    }

    /// Maximal intervals of the grid on which the density is positive.
    pub fn support_intervals(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, &f) in self.density.iter().enumerate() {
            match (f > 0.0, start) {
                (true, None) => start = Some(self.grid[i]),
                (false, Some(s)) => {
                    out.push((s, self.grid[i - 1]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((s, *self.grid.last().unwrap()));
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,f")?;
        for (x, f) in self.grid.iter().zip(&self.density) {
            writeln!(w, "{x},{f}")?;
        }
        Ok(())
    }
}

fn trapezoid(x: &[f64], f: &[f64], upto: usize) -> f64 {
    (1..upto)
        .map(|i| 0.5 * (f[i] + f[i - 1]) * (x[i] - x[i - 1]))
        .sum()
}

fn validate_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.len() < 2 {
        return Err(Error::InvalidInput(
            "epsilon ladder needs at least two rungs".into(),
        ));
    }
    if ladder.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(
            "epsilon ladder entries must be positive".into(),
        ));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput(
            "epsilon ladder must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Density at a single point, with the atom at zero removed.
fn density_at(
    solver: &Solver<'_>,
    x: f64,
    ladder: &[f64],
    atom: f64,
    bounds: (f64, f64),
) -> Result<f64> {
    if x < bounds.0 || x > bounds.1 {
        return Ok(0.0);
    }
    let mut prev: Option<(Complex64, Complex64)> = None;
    let mut values = [0.0; 2];
    for (k, &v) in ladder.iter().enumerate() {
        let z = Complex64::new(x, v);
        let guess = prev.map(|(zp, mp)| solver.predict(zp, mp, z));
        let sol = solver.solve_from(z, guess)?;
        prev = Some((z, sol.m));
        let pole = atom * v / (x * x + v * v);
        values[0] = values[1];
        values[1] = (sol.m.im - pole) / PI;
        if k == 0 {
            values[0] = values[1];
        }
    }
    let (v_prev, v_last) = (ladder[ladder.len() - 2], ladder[ladder.len() - 1]);
    let f0 = values[1] + (values[1] - values[0]) * v_last / (v_prev - v_last);
    Ok(if f0 < DENSITY_FLOOR { 0.0 } else { f0 })
}

/// Evaluates the limiting density on `grid` by inverting `m` down
/// `ladder` and extrapolating linearly in `v` from the last two rungs.
/// Points outside [`support_bounds`] get density zero without a solve.
pub fn density_curve(
    ratios: &AspectRatios,
    h: &SpectralMeasure,
    grid: &[f64],
    ladder: &[f64],
    opts: &SolverOptions,
) -> Result<DensityCurve> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("density grid is empty".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "density grid must be finite and strictly increasing".into(),
        ));
    }
    validate_ladder(ladder)?;
    let atom = zero_atom(ratios, h);
    let bounds = support_bounds(ratios, h);
    let solver = Solver::for_ratios(ratios, h, *opts);
    let density = grid
        .par_iter()
        .map(|&x| density_at(&solver, x, ladder, atom, bounds))
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityCurve {
        grid: grid.to_vec(),
        density,
        zero_atom: atom,
    })
}

/// Distribution function of the limit law, tabulated once and then
/// evaluated by interpolation.
///
/// The continuous part is integrated on a cosine-graded grid over
/// [`support_bounds`], which resolves both soft square-root edges and the
/// inverse square-root edge at the origin that appears when `p = n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralCdf {
    lo: f64,
    hi: f64,
    zero_atom: f64,
    edges: Vec<f64>,
    cumulative: Vec<f64>,
    raw_mass: f64,
}

impl SpectralCdf {
    pub fn new(ratios: &AspectRatios, h: &SpectralMeasure, opts: &SolverOptions) -> Result<Self> {
        Self::with_cells(ratios, h, CDF_CELLS, &DEFAULT_LADDER, opts)
    }

    pub fn with_cells(
        ratios: &AspectRatios,
        h: &SpectralMeasure,
        cells: usize,
        ladder: &[f64],
        opts: &SolverOptions,
    ) -> Result<Self> {
        if cells < 2 {
            return Err(Error::InvalidInput(
                "at least two cells are required".into(),
            ));
        }
        validate_ladder(ladder)?;
        let (lo, hi) = support_bounds(ratios, h);
        let half = 0.5 * (hi - lo);
        let at = |theta: f64| lo + half * (1.0 - theta.cos());
        let step = PI / cells as f64;
        let edges: Vec<f64> = (0..=cells).map(|k| at(k as f64 * step)).collect();

        let atom = zero_atom(ratios, h);
        let solver = Solver::for_ratios(ratios, h, *opts);
        let masses = (0..cells)
            .into_par_iter()
            .map(|k| {
                let theta = (k as f64 + 0.5) * step;
                let f = density_at(&solver, at(theta), ladder, atom, (lo, hi))?;
                Ok(f * half * theta.sin() * step)
            })
            .collect::<Result<Vec<f64>>>()?;

        let mut cumulative = Vec::with_capacity(cells + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for m in &masses {
            acc += m;
            cumulative.push(acc);
        }
        let raw_mass = acc;
        if !(raw_mass > 0.0) && atom < 1.0 {
            return Err(Error::Degenerate(
                "limiting density integrates to zero".into(),
            ));
        }
        let scale = if raw_mass > 0.0 {
            (1.0 - atom) / raw_mass
        } else {
            0.0
        };
        for c in &mut cumulative {
            *c *= scale;
        }
        Ok(SpectralCdf {
            lo,
            hi,
            zero_atom: atom,
            edges,
            cumulative,
            raw_mass,
        })
    }

    pub fn zero_atom(&self) -> f64 {
        self.zero_atom
    }

    /// Cell boundaries of the cumulative table.
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Integrated density before renormalization to `1 − zero_atom`.
    pub fn continuous_mass(&self) -> f64 {
        self.raw_mass
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x <= self.lo {
            return self.zero_atom;
        }
        if x >= self.hi {
            return 1.0;
        }
        let k = self
            .edges
            .partition_point(|&e| e <= x)
            .clamp(1, self.edges.len() - 1);
        let (x0, x1) = (self.edges[k - 1], self.edges[k]);
        let (c0, c1) = (self.cumulative[k - 1], self.cumulative[k]);
        let frac = if x1 > x0 { (x - x0) / (x1 - x0) } else { 1.0 };
        self.zero_atom + c0 + (c1 - c0) * frac
    }
}

/// Limit distribution function at a single point. Builds a full
/// [`SpectralCdf`]; prefer that type for repeated evaluation.
pub fn cdf(ratios: &AspectRatios, h: &SpectralMeasure, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("x = {x} is not finite")));
    }
    if x < 0.0 {
        return Ok(0.0);
    }
    Ok(SpectralCdf::new(ratios, h, &SolverOptions::default())?.eval(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Marchenko–Pastur density for the identity population after the
    /// `(√p + √n)²` rescaling.
    fn mp_density(r: &AspectRatios, x: f64) -> f64 {
        let a = (r.c2.sqrt() - r.c1.sqrt()).powi(2);
        if x <= a || x >= 1.0 {
            0.0
        } else {
            ((1.0 - x) * (x - a)).sqrt() / (2.0 * PI * r.c1 * x)
        }
    }

    fn linspace(a: f64, b: f64, k: usize) -> Vec<f64> {
        (0..k)
            .map(|i| a + (b - a) * i as f64 / (k - 1) as f64)
            .collect()
    }

    #[test]
    fn square_case_support_is_unit_interval() {
        let r = AspectRatios::new(200, 200).unwrap();
        let h = SpectralMeasure::identity();
        let grid = linspace(-0.2, 1.2, 141);
        let d = density_curve(&r, &h, &grid, &DEFAULT_LADDER, &SolverOptions::default()).unwrap();
        for (&x, &f) in d.grid.iter().zip(&d.density) {
            if x <= -1e-9 || x >= 1.0 + 1e-9 {
                assert_eq!(f, 0.0, "x={x}");
            } else if x > 0.02 && x < 0.98 {
                assert!(f > 0.0);
                assert!((f - mp_density(&r, x)).abs() < 1e-4 * (1.0 + f), "x={x}");
            }
        }
        assert_eq!(d.zero_atom, 0.0);
        let f = SpectralCdf::new(&r, &h, &SolverOptions::default()).unwrap();
        assert!((f.continuous_mass() - 1.0).abs() < 5e-3);
    }

    #[test]
    fn zero_atom_when_p_exceeds_n() {
        let r = AspectRatios::new(400, 100).unwrap();
        let h = SpectralMeasure::identity();
        assert!((zero_atom(&r, &h) - 0.75).abs() < 1e-10);
        let shifted = SpectralMeasure::uniform(&[0.0, 1.0]).unwrap();
        let r2 = AspectRatios::new(100, 400).unwrap();
        assert_eq!(zero_atom(&r2, &shifted), 0.5);
    }

    #[test]
    fn total_mass_on_fine_grid() {
        for &(p, n) in &[(100usize, 400usize), (400, 100), (250, 1000)] {
            let r = AspectRatios::new(p, n).unwrap();
            let h = SpectralMeasure::identity();
            let grid = linspace(1e-4, 1.05, 2000);
            let d =
                density_curve(&r, &h, &grid, &DEFAULT_LADDER, &SolverOptions::default()).unwrap();
            assert!(
                (d.total_mass() - 1.0).abs() < 5e-3,
                "({p},{n}) mass {}",
                d.total_mass()
            );
        }
    }

    #[test]
    fn cdf_matches_marchenko_pastur_quadrature() {
        let r = AspectRatios::new(100, 300).unwrap();
        let h = SpectralMeasure::identity();
        let f = SpectralCdf::new(&r, &h, &SolverOptions::default()).unwrap();
        assert!((f.continuous_mass() - 1.0).abs() < 1e-3);
        let a = (r.c2.sqrt() - r.c1.sqrt()).powi(2);
        // Reference by substitution x = a + (1 − a) sin²φ, which removes both edges.
        let reference = |x: f64| {
            let phi_max = ((x - a) / (1.0 - a)).sqrt().asin();
            let k = 20_000;
            (0..k)
                .map(|i| {
                    let phi = (i as f64 + 0.5) * phi_max / k as f64;
                    let xx = a + (1.0 - a) * phi.sin().powi(2);
                    mp_density(&r, xx) * (1.0 - a) * (2.0 * phi).sin() * phi_max / k as f64
                })
                .sum::<f64>()
        };
        for &x in &[a + 0.01, 0.3, 0.5, 0.8, 0.99] {
            assert!((f.eval(x) - reference(x)).abs() < 1e-3, "x={x}");
        }
        assert_eq!(f.eval(-0.1), 0.0);
        assert_eq!(f.eval(1.5), 1.0);
    }

    #[test]
    fn cdf_is_monotone_with_unit_range() {
        let r = AspectRatios::new(60, 40).unwrap();
        let h = SpectralMeasure::uniform(&[0.3, 1.0]).unwrap();
        let f = SpectralCdf::with_cells(&r, &h, 800, &DEFAULT_LADDER, &SolverOptions::default())
            .unwrap();
        let xs = linspace(-0.5, 1.5, 400);
        let ys: Vec<f64> = xs.iter().map(|&x| f.eval(x)).collect();
        assert!(ys.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(ys[0], 0.0);
        assert_eq!(*ys.last().unwrap(), 1.0);
        assert!((f.eval(0.0) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn large_p_mass_sits_at_origin() {
        let r = AspectRatios::new(1_000_000, 10).unwrap();
        let h = SpectralMeasure::identity();
        let v = cdf(&r, &h, 1e-12).unwrap();
        assert!(v > 0.9999);
        assert_eq!(cdf(&r, &h, -1.0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let r = AspectRatios::new(10, 10).unwrap();
        let h = SpectralMeasure::identity();
        let o = SolverOptions::default();
        assert!(density_curve(&r, &h, &[0.2, 0.1], &DEFAULT_LADDER, &o).is_err());
        assert!(density_curve(&r, &h, &[0.1, 0.2], &[1e-3, 1e-2], &o).is_err());
        assert!(density_curve(&r, &h, &[0.1, 0.2], &[1e-3], &o).is_err());
        let d = density_curve(&r, &h, &[0.1, 0.2], &DEFAULT_LADDER, &o).unwrap();
        assert!(matches!(d.cdf_at(0.05), Err(Error::Domain(_))));
    }

    #[test]
    fn csv_and_json_output() {
        let d = DensityCurve {
            grid: vec![0.0, 0.5],
            density: vec![0.0, 1.25],
            zero_atom: 0.1,
        };
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,f\n0,0\n0.5,1.25\n");
        let js = serde_json::to_value(&d).unwrap();
        assert_eq!(js["zero_atom"], 0.1);
        assert_eq!(d.support_intervals(), vec![(0.5, 0.5)]);
    }
}
