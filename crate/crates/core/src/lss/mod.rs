//! Mean and covariance of linear spectral statistics.
//!
//! For test functions `f` analytic near `[0, 1]`, the centred statistic
//!
//! ```text
//! X_f = ν/√(pn) · (Σ_i f(λ_i) − p ∫ f dF^{c1,c2,H})
//! ```
//!
//! is asymptotically Gaussian with
//!
//! ```text
//! E X_f           = −1/(2πi) ∮ f(z) 𝒜(z) dz
//! Cov(X_f, X_g)   = −1/(4π²) ∮∮ f(z1) g(z2) ℬ(z1, z2) dz2 dz1.
//! ```
//!
//! The integrals are evaluated by quadrature on [`Contour`]s, doubling the
//! node count until the result settles.

mod closed;
mod contour;
mod functions;
mod kernel;

pub use closed::{
    identity_closed_forms, identity_polynomial_closed_forms, IdentityClosedForms,
    PolynomialClosedForms,
};
pub use contour::{gauss_legendre, Contour, ContourKind, Node, DEFAULT_NODES};
pub use functions::{AnalyticFunction, TestFunction};
pub use kernel::{
    cov_kernel, cov_kernel_parts, g_fun, h_fun, mean_param, s_fun, t_fun, GammaSpectrum,
    KernelContext, PointState, SigmaMode,
};

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::spectral::{AspectRatios, SpectralMeasure};
use crate::stats::pairwise_sum;
use crate::stieltjes::{zero_atom, Solver, SolverOptions};
use crate::{Error, Result};

/// Relative change below which node doubling stops.
pub const STABLE_CHANGE: f64 = 1e-8;
/// Relative change at the node cap beyond which quadrature is declared
/// divergent.
pub const DIVERGED_CHANGE: f64 = 1e-6;
const MAX_SINGLE_NODES: usize = 1 << 16;
const MAX_DOUBLE_NODES: usize = 1 << 13;

/// A converged contour integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// Imaginary part of the quadrature sum; zero for exact arithmetic.
    pub imag: f64,
    pub nodes: usize,
    /// Relative change at the last doubling.
    pub change: f64,
}

impl Estimate {
    fn real(self) -> Result<f64> {
        if self.imag.abs() > STABLE_CHANGE * self.value.abs().max(1.0) {
            return Err(Error::NonReal {
                real: self.value,
                imag: self.imag,
            });
        }
        Ok(self.value)
    }
}

fn csum(v: &[Complex64]) -> Complex64 {
    let re: Vec<f64> = v.iter().map(|c| c.re).collect();
    let im: Vec<f64> = v.iter().map(|c| c.im).collect();
    Complex64::new(pairwise_sum(&re), pairwise_sum(&im))
}

fn relative_change(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm() / y.norm().max(1.0))
        .fold(0.0, f64::max)
}

/// Evaluates `eval(nodes)` at doubling node counts until successive
/// results agree to [`STABLE_CHANGE`].
fn converge<F>(start: usize, cap: usize, mut eval: F) -> Result<(Vec<Complex64>, usize, f64)>
where
    F: FnMut(usize) -> Result<Vec<Complex64>>,
{
    let mut nodes = start;
    let mut prev = eval(nodes)?;
    loop {
        nodes *= 2;
        let cur = eval(nodes)?;
        let change = relative_change(&prev, &cur);
        if change < STABLE_CHANGE {
            return Ok((cur, nodes, change));
        }
        if nodes >= cap {
            if change > DIVERGED_CHANGE {
                return Err(Error::QuadratureDiverged { nodes, change });
            }
            return Ok((cur, nodes, change));
        }
        prev = cur;
    }
}

/// `m` and `m̲` at every node, reflecting lower half-plane points.
fn solve_nodes(
    nodes: &[Node],
    ratios: &AspectRatios,
    h: &SpectralMeasure,
    opts: SolverOptions,
) -> Result<Vec<(Complex64, Complex64)>> {
    let solver = Solver::for_ratios(ratios, h, opts);
    nodes
        .par_iter()
        .map(|n| {
            if n.z.im < 0.0 {
                let s = solver.solve(n.z.conj())?;
                Ok((s.m.conj(), s.m_under.conj()))
            } else {
                let s = solver.solve(n.z)?;
                Ok((s.m, s.m_under))
            }
        })
        .collect()
}

fn states_on(
    contour: &Contour,
    nodes: usize,
    ctx: &KernelContext,
) -> Result<(Vec<Node>, Vec<PointState>)> {
    let pts = contour.with_nodes(nodes).nodes_at(&ctx.ratios);
    let sols = solve_nodes(&pts, &ctx.ratios, &ctx.h, ctx.solver)?;
    let states = pts
        .par_iter()
        .zip(sols.par_iter())
        .map(|(n, &(_, mu))| PointState::new(n.z, mu, ctx))
        .collect::<Result<Vec<_>>>()?;
    Ok((pts, states))
}

fn check_function(f: &dyn AnalyticFunction, contour: &Contour, ctx: &KernelContext) -> Result<()> {
    contour.validate(&ctx.ratios, &ctx.h, f.singular_at_zero())
}

/// Means of several statistics on one contour.
fn mean_vector(
    fns: &[&dyn AnalyticFunction],
    ctx: &KernelContext,
    contour: &Contour,
) -> Result<(Vec<Estimate>, usize)> {
    for f in fns {
        check_function(*f, contour, ctx)?;
    }
    let (alpha, delta) = (ctx.moments.alpha(), ctx.moments.delta());
    let (vals, nodes, change) = converge(contour.nodes, MAX_SINGLE_NODES, |n| {
        let (pts, states) = states_on(contour, n, ctx)?;
        let terms = pts
            .par_iter()
            .zip(states.par_iter())
            .map(|(node, st)| {
                let (a, d) = st.mean_parts(ctx)?;
                let weight = (alpha * a + delta * d) * node.dz;
                Ok(fns
                    .iter()
                    .map(|f| f.eval(node.z) * weight)
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        let scale = -1.0 / (2.0 * PI * Complex64::i());
        Ok((0..fns.len())
            .map(|j| scale * csum(&terms.iter().map(|t| t[j]).collect::<Vec<_>>()))
            .collect())
    })?;
    let est = vals
        .iter()
        .map(|v| Estimate {
            value: v.re,
            imag: v.im,
            nodes,
            change,
        })
        .collect();
    Ok((est, nodes))
}

/// `E X_f` with diagnostics.
pub fn lss_mean_estimate(
    f: &dyn AnalyticFunction,
    ctx: &KernelContext,
    contour: &Contour,
) -> Result<Estimate> {
    Ok(mean_vector(&[f], ctx, contour)?.0[0])
}

/// `E X_f = −1/(2πi) ∮ f 𝒜 dz`.
pub fn lss_mean(f: &dyn AnalyticFunction, ctx: &KernelContext, contour: &Contour) -> Result<f64> {
    lss_mean_estimate(f, ctx, contour)?.real()
}

/// Covariances `Cov(X_{outer_j}, X_{inner_k})` for all pairs.
fn cov_matrix(
    outer_fns: &[&dyn AnalyticFunction],
    inner_fns: &[&dyn AnalyticFunction],
    ctx: &KernelContext,
    outer: &Contour,
    inner: &Contour,
) -> Result<(Vec<Vec<Estimate>>, usize)> {
    outer.check_nested(inner, &ctx.ratios)?;
    for f in outer_fns {
        check_function(*f, outer, ctx)?;
    }
    for f in inner_fns {
        check_function(*f, inner, ctx)?;
    }
    let (a1, dl) = (1.0 + ctx.moments.alpha(), ctx.moments.delta());
    let c1c2 = ctx.ratios.c1 * ctx.ratios.c2;
    let (nj, nk) = (outer_fns.len(), inner_fns.len());
    let ratio = inner.nodes as f64 / outer.nodes as f64;
    let (flat, nodes, change) = converge(outer.nodes, MAX_DOUBLE_NODES, |n| {
        let n_inner = ((n as f64 * ratio).round() as usize).max(8);
        let (p1, s1) = states_on(outer, n, ctx)?;
        let (p2, s2) = states_on(inner, n_inner, ctx)?;
        let w2: Vec<Vec<Complex64>> = p2
            .iter()
            .map(|node| inner_fns.iter().map(|f| f.eval(node.z) * node.dz).collect())
            .collect();
        let rows = p1
            .par_iter()
            .zip(s1.par_iter())
            .map(|(node, st1)| {
                let mut acc = vec![Complex64::from(0.0); nk];
                for (st2, w) in s2.iter().zip(&w2) {
                    let (b1, b2) = cov_kernel_parts(st1, st2, c1c2);
                    let kern = a1 * b1 + dl * b2;
                    for (a, wk) in acc.iter_mut().zip(w) {
                        *a += kern * wk;
                    }
                }
                let mut out = Vec::with_capacity(nj * nk);
                for f in outer_fns {
                    let fw = f.eval(node.z) * node.dz;
                    out.extend(acc.iter().map(|a| fw * a));
                }
                out
            })
            .collect::<Vec<_>>();
        let scale = -1.0 / (4.0 * PI * PI);
        Ok((0..nj * nk)
            .map(|idx| scale * csum(&rows.iter().map(|r| r[idx]).collect::<Vec<_>>()))
            .collect())
    })?;
    let est = (0..nj)
        .map(|j| {
            (0..nk)
                .map(|k| {
                    let v = flat[j * nk + k];
                    Estimate {
                        value: v.re,
                        imag: v.im,
                        nodes,
                        change,
                    }
                })
                .collect()
        })
        .collect();
    Ok((est, nodes))
}

/// `Cov(X_{f_j}, X_{f_k})` with diagnostics; `outer` must enclose `inner`.
pub fn lss_cov_estimate(
    fj: &dyn AnalyticFunction,
    fk: &dyn AnalyticFunction,
    ctx: &KernelContext,
    outer: &Contour,
    inner: &Contour,
) -> Result<Estimate> {
    Ok(cov_matrix(&[fj], &[fk], ctx, outer, inner)?.0[0][0])
}

/// `Cov(X_{f_j}, X_{f_k}) = −1/(4π²) ∮∮ f_j(z1) f_k(z2) ℬ(z1, z2) dz2 dz1`.
pub fn lss_cov(
    fj: &dyn AnalyticFunction,
    fk: &dyn AnalyticFunction,
    ctx: &KernelContext,
    outer: &Contour,
    inner: &Contour,
) -> Result<f64> {
    lss_cov_estimate(fj, fk, ctx, outer, inner)?.real()
}

/// `∫ f dF^{c1,c2,H}` as `−1/(2πi) ∮ f m dz`, plus `zero_atom · f(0)` when
/// the contour leaves the origin outside.
pub fn limit_functional(
    f: &dyn AnalyticFunction,
    ratios: &AspectRatios,
    h: &SpectralMeasure,
    contour: &Contour,
) -> Result<f64> {
    Ok(limit_functionals(&[f], ratios, h, contour)?[0])
}

/// [`limit_functional`] for several functions on a shared contour.
pub fn limit_functionals(
    fns: &[&dyn AnalyticFunction],
    ratios: &AspectRatios,
    h: &SpectralMeasure,
    contour: &Contour,
) -> Result<Vec<f64>> {
    for f in fns {
        contour.validate(ratios, h, f.singular_at_zero())?;
    }
    let atom = if contour.encloses_origin(ratios) {
        0.0
    } else {
        zero_atom(ratios, h)
    };
    let (vals, _, _) = converge(contour.nodes, MAX_SINGLE_NODES, |n| {
        let pts = contour.with_nodes(n).nodes_at(ratios);
        let sols = solve_nodes(&pts, ratios, h, SolverOptions::default())?;
        let scale = -1.0 / (2.0 * PI * Complex64::i());
        Ok(fns
            .iter()
            .map(|f| {
                let terms: Vec<Complex64> = pts
                    .iter()
                    .zip(&sols)
                    .map(|(p, (m, _))| f.eval(p.z) * m * p.dz)
                    .collect();
                scale * csum(&terms)
            })
            .collect())
    })?;
    fns.iter()
        .zip(vals)
        .map(|(f, v)| {
            let est = Estimate {
                value: v.re
                    + if atom > 0.0 {
                        atom * f.eval_real(0.0)
                    } else {
                        0.0
                    },
                imag: v.im,
                nodes: 0,
                change: 0.0,
            };
            est.real()
        })
        .collect()
}

/// Means and covariance matrix for a list of test functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LssMomentTable {
    pub functions: Vec<String>,
    pub means: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    /// Largest `|Cov_jk − Cov_kj|` before symmetrisation.
    #[serde(default)]
    pub asymmetry: f64,
    /// Largest imaginary residue over all integrals.
    #[serde(default)]
    pub max_imag: f64,
    /// Final node counts of the single and double integrals.
    #[serde(default)]
    pub nodes: (usize, usize),
    /// Set when `s` and `t` were evaluated as finite-`p` traces.
    #[serde(default)]
    pub finite_p_traces: bool,
}

impl LssMomentTable {
    pub fn min_eigenvalue(&self) -> f64 {
        let k = self.cov.len();
        if k == 0 {
            return 0.0;
        }
        let m = DMatrix::from_fn(k, k, |i, j| self.cov[i][j]);
        SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let k = self.cov.len();
        (0..k).all(|i| (0..k).all(|j| (self.cov[i][j] - self.cov[j][i]).abs() <= tol))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "function,mean")?;
        for f in &self.functions {
            write!(w, ",cov[{f}]")?;
        }
        writeln!(w)?;
        for (i, f) in self.functions.iter().enumerate() {
            write!(w, "{f},{}", self.means[i])?;
            for v in &self.cov[i] {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Optional contour overrides for [`lss_table`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContourChoice {
    pub single: Option<Contour>,
    pub outer: Option<Contour>,
    pub inner: Option<Contour>,
}

impl ContourChoice {
    pub fn resolve(
        &self,
        ratios: &AspectRatios,
        h: &SpectralMeasure,
        singular: bool,
    ) -> Result<(Contour, Contour, Contour)> {
        let single = match self.single {
            Some(c) => c,
            None => Contour::default_for(ratios, h, singular)?,
        };
        let (o, i) = match (self.outer, self.inner) {
            (Some(o), Some(i)) => (o, i),
            (o, i) => {
                let (d_o, d_i) = Contour::default_pair(ratios, h, singular)?;
                (o.unwrap_or(d_o), i.unwrap_or(d_i))
            }
        };
        Ok((single, o, i))
    }
}

/// Means and covariance of `fns` in one pass. Each kernel value is
/// computed once and shared by every pair of functions.
pub fn lss_table(
    fns: &[&dyn AnalyticFunction],
    ctx: &KernelContext,
    contours: &ContourChoice,
) -> Result<LssMomentTable> {
    if fns.is_empty() {
        return Err(Error::InvalidInput("no test functions requested".into()));
    }
    let singular = fns.iter().any(|f| f.singular_at_zero());
    let (single, outer, inner) = contours.resolve(&ctx.ratios, &ctx.h, singular)?;
    let (means, n1) = mean_vector(fns, ctx, &single)?;
    let (cov, n2) = cov_matrix(fns, fns, ctx, &outer, &inner)?;
    let k = fns.len();
    let mut max_imag = means.iter().map(|e| e.imag.abs()).fold(0.0, f64::max);
    let mut asymmetry: f64 = 0.0;
    let mut sym = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            max_imag = max_imag.max(cov[i][j].imag.abs());
            asymmetry = asymmetry.max((cov[i][j].value - cov[j][i].value).abs());
            sym[i][j] = 0.5 * (cov[i][j].value + cov[j][i].value);
        }
    }
    let scale = means
        .iter()
        .map(|e| e.value.abs())
        .chain(sym.iter().flatten().map(|v| v.abs()))
        .fold(1.0, f64::max);
    if max_imag > STABLE_CHANGE * scale {
        return Err(Error::NonReal {
            real: scale,
            imag: max_imag,
        });
    }
    Ok(LssMomentTable {
        functions: fns.iter().map(|f| f.name()).collect(),
        means: means.iter().map(|e| e.value).collect(),
        cov: sym,
        asymmetry,
        max_imag,
        nodes: (n1, n2),
        finite_p_traces: ctx.uses_finite_p_traces(),
    })
}
