//! Integration contours around the support of the limit law.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::spectral::{AspectRatios, SpectralMeasure};
use crate::stieltjes::{support_bounds, zero_atom};
use crate::{Error, Result};

pub const DEFAULT_NODES: usize = 2048;
pub const DEFAULT_RADIUS: f64 = 1.05;
pub const OUTER_RADIUS: f64 = 1.10;
pub const INNER_RADIUS: f64 = 1.05;
/// Rectangle margin as a fraction of the support width.
pub const DEFAULT_MARGIN: f64 = 0.1;
/// Gauss–Legendre order of each rectangle panel.
const PANEL_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ContourKind {
    /// `z = c1 + c2 + √(c1c2)(rξ + 1/(rξ))` with `ξ` on the unit circle.
    Circle { r: f64 },
    Rectangle {
        x_left: f64,
        x_right: f64,
        height: f64,
    },
}

/// A quadrature node: integrals are approximated by `Σ F(z) dz`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub z: Complex64,
    pub dz: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contour {
    pub kind: ContourKind,
    pub nodes: usize,
}

impl Contour {
    pub fn circle(r: f64, nodes: usize) -> Result<Self> {
        if !(r > 1.0 && r.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "circle radius {r} must exceed 1"
            )));
        }
        Self::checked(ContourKind::Circle { r }, nodes)
    }

    pub fn rectangle(x_left: f64, x_right: f64, height: f64, nodes: usize) -> Result<Self> {
        if !(x_left < x_right
            && height > 0.0
            && x_left.is_finite()
            && x_right.is_finite()
            && height.is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "rectangle [{x_left}, {x_right}] x height {height} is degenerate"
            )));
        }
        Self::checked(
            ContourKind::Rectangle {
                x_left,
                x_right,
                height,
            },
            nodes,
        )
    }

    fn checked(kind: ContourKind, nodes: usize) -> Result<Self> {
        if nodes < 8 {
            return Err(Error::InvalidInput(
                "a contour needs at least 8 nodes".into(),
            ));
        }
        Ok(Contour { kind, nodes })
    }

    pub fn with_nodes(&self, nodes: usize) -> Self {
        Contour { nodes, ..*self }
    }

    /// The default single contour: the circle substitution for the identity
    /// population, a rectangle with `margin`-scaled clearance otherwise.
    pub fn default_for(
        ratios: &AspectRatios,
        h: &SpectralMeasure,
        singular_at_zero: bool,
    ) -> Result<Self> {
        if h.is_identity() {
            Contour::circle(DEFAULT_RADIUS, DEFAULT_NODES)
        } else {
            default_rectangle(ratios, h, DEFAULT_MARGIN, singular_at_zero)
        }
    }

    /// Default `(outer, inner)` pair for double integrals.
    pub fn default_pair(
        ratios: &AspectRatios,
        h: &SpectralMeasure,
        singular_at_zero: bool,
    ) -> Result<(Self, Self)> {
        if h.is_identity() {
            Ok((
                Contour::circle(OUTER_RADIUS, DEFAULT_NODES)?,
                Contour::circle(INNER_RADIUS, DEFAULT_NODES)?,
            ))
        } else {
            Ok((
                default_rectangle(ratios, h, DEFAULT_MARGIN, singular_at_zero)?,
                default_rectangle(ratios, h, 0.5 * DEFAULT_MARGIN, singular_at_zero)?,
            ))
        }
    }

    /// Where the contour crosses the real axis, left to right.
    pub fn real_crossings(&self, ratios: &AspectRatios) -> (f64, f64) {
        match self.kind {
            ContourKind::Circle { r } => {
                let half = ratios.root_c1c2() * (r + 1.0 / r);
                let centre = ratios.c1 + ratios.c2;
                (centre - half, centre + half)
            }
            ContourKind::Rectangle {
                x_left, x_right, ..
            } => (x_left, x_right),
        }
    }

    pub fn encloses_origin(&self, ratios: &AspectRatios) -> bool {
        let (l, r) = self.real_crossings(ratios);
        l < 0.0 && r > 0.0
    }

    /// Checks that the contour surrounds the continuous part of the limit
    /// law and, when required, keeps clear of the origin.
    pub fn validate(
        &self,
        ratios: &AspectRatios,
        h: &SpectralMeasure,
        singular_at_zero: bool,
    ) -> Result<()> {
        let (lo, hi) = support_bounds(ratios, h);
        let (l, r) = self.real_crossings(ratios);
        if !(l < lo && r > hi) {
            return Err(Error::ContourClearance(format!(
                "contour crosses the real axis at {l} and {r}, which does not enclose [{lo}, {hi}]"
            )));
        }
        if singular_at_zero {
            if zero_atom(ratios, h) > 0.0 {
                return Err(Error::ContourClearance(
                    "the limit law has an atom at 0 where the test function is singular".into(),
                ));
            }
            if l <= 0.0 {
                return Err(Error::ContourClearance(format!(
                    "test function is singular at 0 but the contour crosses the real axis at {l}"
                )));
            }
        }
        Ok(())
    }

    /// Checks that `inner` lies strictly inside `self`.
    pub fn check_nested(&self, inner: &Contour, ratios: &AspectRatios) -> Result<()> {
        let ok = match (self.kind, inner.kind) {
            (ContourKind::Circle { r: r1 }, ContourKind::Circle { r: r2 }) => r1 > r2,
            (
                ContourKind::Rectangle {
                    x_left: a1,
                    x_right: b1,
                    height: h1,
                },
                ContourKind::Rectangle {
                    x_left: a2,
                    x_right: b2,
                    height: h2,
                },
            ) => a1 < a2 && b1 > b2 && h1 > h2,
            (
                ContourKind::Rectangle {
                    x_left,
                    x_right,
                    height,
                },
                ContourKind::Circle { r },
            ) => {
                let half_w = ratios.root_c1c2() * (r + 1.0 / r);
                let half_h = ratios.root_c1c2() * (r - 1.0 / r);
                let c = ratios.c1 + ratios.c2;
                x_left < c - half_w && x_right > c + half_w && height > half_h
            }
            (ContourKind::Circle { .. }, ContourKind::Rectangle { .. }) => {
                let (a, b) = self.real_crossings(ratios);
                let (a2, b2) = inner.real_crossings(ratios);
                a < a2
                    && b > b2
                    && inner
                        .nodes_at(ratios)
                        .iter()
                        .all(|n| self.contains(n.z, ratios))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ContourOverlap(
                "the inner contour must lie strictly inside the outer one".into(),
            ))
        }
    }

    fn contains(&self, z: Complex64, ratios: &AspectRatios) -> bool {
        match self.kind {
            ContourKind::Circle { r } => {
                let s = ratios.root_c1c2();
                let a = s * (r + 1.0 / r);
                let b = s * (r - 1.0 / r);
                let x = z.re - ratios.c1 - ratios.c2;
                (x / a).powi(2) + (z.im / b).powi(2) < 1.0
            }
            ContourKind::Rectangle {
                x_left,
                x_right,
                height,
            } => z.re > x_left && z.re < x_right && z.im.abs() < height,
        }
    }

    /// Quadrature nodes, positively oriented.
    pub fn nodes_at(&self, ratios: &AspectRatios) -> Vec<Node> {
        match self.kind {
            ContourKind::Circle { r } => circle_nodes(ratios, r, self.nodes),
            ContourKind::Rectangle {
                x_left,
                x_right,
                height,
            } => rectangle_nodes(x_left, x_right, height, self.nodes),
        }
    }
}

fn default_rectangle(
    ratios: &AspectRatios,
    h: &SpectralMeasure,
    margin: f64,
    singular_at_zero: bool,
) -> Result<Contour> {
    let (lo, hi) = support_bounds(ratios, h);
    let pad = margin * (hi - lo).max(1e-3);
    let mut x_left = lo - pad;
    if singular_at_zero && x_left <= 0.0 {
        if lo <= 0.0 {
            return Err(Error::ContourClearance(
                "the support reaches 0 where the test function is singular".into(),
            ));
        }
        x_left = lo * (1.0 - margin * 5.0).max(0.25);
    }
    Contour::rectangle(x_left, hi + pad, pad.max(0.05 * (hi - lo)), DEFAULT_NODES)
}

fn circle_nodes(ratios: &AspectRatios, r: f64, n: usize) -> Vec<Node> {
    let s = ratios.root_c1c2();
    let centre = ratios.c1 + ratios.c2;
    let dtheta = 2.0 * PI / n as f64;
    (0..n)
        .map(|k| {
            let xi = Complex64::from_polar(1.0, (k as f64 + 0.5) * dtheta);
            let z = centre + s * (r * xi + 1.0 / (r * xi));
            let dz = s * Complex64::i() * (r * xi - 1.0 / (r * xi)) * dtheta;
            Node { z, dz }
        })
        .collect()
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`, `q ≥ 2`.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 2, "Gauss–Legendre order must be at least 2");
    let mut x = vec![0.0; q];
    let mut w = vec![0.0; q];
    for i in 0..q.div_ceil(2) {
        let mut t = (PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=q {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = q as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -t;
        x[q - 1 - i] = t;
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        w[i] = wi;
        w[q - 1 - i] = wi;
    }
    (x, w)
}

fn rectangle_nodes(x_left: f64, x_right: f64, height: f64, n: usize) -> Vec<Node> {
    let c = |x: f64, y: f64| Complex64::new(x, y);
    // Counter-clockwise, vertical sides split at the real axis.
    let segments = [
        (c(x_left, -height), c(x_right, -height)),
        (c(x_right, -height), c(x_right, 0.0)),
        (c(x_right, 0.0), c(x_right, height)),
        (c(x_right, height), c(x_left, height)),
        (c(x_left, height), c(x_left, 0.0)),
        (c(x_left, 0.0), c(x_left, -height)),
    ];
    let perimeter = 2.0 * (x_right - x_left) + 4.0 * height;
    let total_panels = (n as f64 / PANEL_ORDER as f64).max(segments.len() as f64);
    let (gx, gw) = gauss_legendre(PANEL_ORDER);
    let mut out = Vec::with_capacity(n + PANEL_ORDER * segments.len());
    for (a, b) in segments {
        let len = (b - a).norm();
        let panels = ((total_panels * len / perimeter).round() as usize).max(1);
        let step = (b - a) / panels as f64;
        for j in 0..panels {
            let start = a + step * j as f64;
            for (&x, &w) in gx.iter().zip(&gw) {
                out.push(Node {
                    z: start + step * (0.5 * (x + 1.0)),
                    dz: step * (0.5 * w),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for k in 0..32 {
            let exact = if k % 2 == 0 {
                2.0 / (k as f64 + 1.0)
            } else {
                0.0
            };
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            assert!((got - exact).abs() < 1e-13, "k={k}");
        }
        let (x5, _) = gauss_legendre(5);
        assert!(x5[2].abs() < 1e-15);
    }

    #[test]
    fn contours_integrate_cauchy_kernel() {
        let r = AspectRatios::new(100, 400).unwrap();
        let inside = Complex64::new(0.5, 0.0);
        for c in [
            Contour::circle(1.05, 1024).unwrap(),
            Contour::rectangle(0.05, 1.1, 0.1, 512).unwrap(),
        ] {
            let s: Complex64 = c.nodes_at(&r).iter().map(|n| n.dz / (n.z - inside)).sum();
            assert!(
                (s - Complex64::new(0.0, 2.0 * PI)).norm() < 1e-10,
                "{c:?}: {s}"
            );
        }
    }

    #[test]
    fn circle_nodes_avoid_real_axis_and_pair_up() {
        let r = AspectRatios::new(100, 400).unwrap();
        let nodes = Contour::circle(1.05, 64).unwrap().nodes_at(&r);
        assert!(nodes.iter().all(|n| n.z.im.abs() > 1e-6));
        for k in 0..32 {
            assert!((nodes[k].z - nodes[63 - k].z.conj()).norm() < 1e-14);
        }
    }

    #[test]
    fn validation() {
        let r = AspectRatios::new(100, 400).unwrap();
        let h = SpectralMeasure::identity();
        let c = Contour::circle(1.05, 64).unwrap();
        c.validate(&r, &h, true).unwrap();
        assert!(!c.encloses_origin(&r));
        let sq = AspectRatios::new(100, 100).unwrap();
        assert!(matches!(
            c.validate(&sq, &h, true),
            Err(Error::ContourClearance(_))
        ));
        c.validate(&sq, &h, false).unwrap();
        let tall = AspectRatios::new(400, 100).unwrap();
        assert!(c.validate(&tall, &h, true).is_err());
        assert!(Contour::rectangle(0.5, 1.1, 0.1, 64)
            .unwrap()
            .validate(&r, &h, false)
            .is_err());

        let outer = Contour::circle(1.10, 64).unwrap();
        outer.check_nested(&c, &r).unwrap();
        assert!(matches!(
            c.check_nested(&outer, &r),
            Err(Error::ContourOverlap(_))
        ));
        assert!(Contour::circle(1.0, 64).is_err());
    }

    #[test]
    fn default_rectangles_nest() {
        let r = AspectRatios::new(100, 300).unwrap();
        let h = SpectralMeasure::uniform(&[0.5, 1.0]).unwrap();
        let (o, i) = Contour::default_pair(&r, &h, true).unwrap();
        o.check_nested(&i, &r).unwrap();
        o.validate(&r, &h, true).unwrap();
        i.validate(&r, &h, true).unwrap();
    }
}
