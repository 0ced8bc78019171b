//! Test functions for linear spectral statistics.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A function analytic on a neighbourhood of the spectrum's support,
/// possibly with a singularity at the origin.
pub trait AnalyticFunction: Send + Sync {
    fn name(&self) -> String;

    fn eval(&self, z: Complex64) -> Complex64;

    fn eval_real(&self, x: f64) -> f64 {
        self.eval(Complex64::from(x)).re
    }

    /// Whether the function is singular at `z = 0`; contours must then keep
    /// the origin outside.
    fn singular_at_zero(&self) -> bool {
        false
    }

    /// `Some(k)` if the function is a polynomial of degree `k`.
    fn polynomial_degree(&self) -> Option<usize> {
        None
    }
}

/// Built-in test functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    X,
    #[serde(alias = "x^2")]
    X2,
    #[serde(alias = "x^3")]
    X3,
    Log,
    /// `Σ c_k x^k`, coefficients from the constant term up.
    Poly(Vec<f64>),
}

impl TestFunction {
    /// Coefficients from the constant term up, for polynomial members.
    pub fn coefficients(&self) -> Option<Vec<f64>> {
        match self {
            TestFunction::X => Some(vec![0.0, 1.0]),
            TestFunction::X2 => Some(vec![0.0, 0.0, 1.0]),
            TestFunction::X3 => Some(vec![0.0, 0.0, 0.0, 1.0]),
            TestFunction::Log => None,
            TestFunction::Poly(c) => Some(c.clone()),
        }
    }

    pub fn parse(s: &str) -> Option<TestFunction> {
        match s.trim() {
            "x" => Some(TestFunction::X),
            "x2" | "x^2" => Some(TestFunction::X2),
            "x3" | "x^3" => Some(TestFunction::X3),
            "log" | "log x" | "log(x)" => Some(TestFunction::Log),
            _ => None,
        }
    }
}

fn horner(c: &[f64], z: Complex64) -> Complex64 {
    c.iter()
        .rev()
        .fold(Complex64::from(0.0), |acc, &ck| acc * z + ck)
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::X => write!(f, "x"),
            TestFunction::X2 => write!(f, "x^2"),
            TestFunction::X3 => write!(f, "x^3"),
            TestFunction::Log => write!(f, "log"),
            TestFunction::Poly(c) => {
                write!(f, "poly(")?;
                for (i, v) in c.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl AnalyticFunction for TestFunction {
    fn name(&self) -> String {
        self.to_string()
    }

    fn eval(&self, z: Complex64) -> Complex64 {
        match self {
            TestFunction::X => z,
            TestFunction::X2 => z * z,
            TestFunction::X3 => z * z * z,
            TestFunction::Log => z.ln(),
            TestFunction::Poly(c) => horner(c, z),
        }
    }

    fn eval_real(&self, x: f64) -> f64 {
        match self {
            TestFunction::Log => x.ln(),
            _ => self.eval(Complex64::from(x)).re,
        }
    }

    fn singular_at_zero(&self) -> bool {
        matches!(self, TestFunction::Log)
    }

    fn polynomial_degree(&self) -> Option<usize> {
        self.coefficients()
            .map(|c| c.iter().rposition(|&v| v != 0.0).unwrap_or(0))
    }
}

impl<F: AnalyticFunction + ?Sized> AnalyticFunction for &F {
    fn name(&self) -> String {
        (**self).name()
    }
    fn eval(&self, z: Complex64) -> Complex64 {
        (**self).eval(z)
    }
    fn eval_real(&self, x: f64) -> f64 {
        (**self).eval_real(x)
    }
    fn singular_at_zero(&self) -> bool {
        (**self).singular_at_zero()
    }
    fn polynomial_degree(&self) -> Option<usize> {
        (**self).polynomial_degree()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_and_metadata() {
        let z = Complex64::new(0.3, 0.4);
        assert_eq!(TestFunction::X2.eval(z), z * z);
        assert_eq!(
            TestFunction::Poly(vec![1.0, 0.0, 2.0]).eval(z),
            1.0 + 2.0 * z * z
        );
        assert!(TestFunction::Log.singular_at_zero());
        assert!(!TestFunction::X3.singular_at_zero());
        assert_eq!(TestFunction::X3.polynomial_degree(), Some(3));
        assert_eq!(
            TestFunction::Poly(vec![1.0, 2.0, 0.0]).polynomial_degree(),
            Some(1)
        );
        assert_eq!(TestFunction::Log.polynomial_degree(), None);
        assert_eq!(TestFunction::Log.eval_real(1.0), 0.0);
    }

    #[test]
    fn serde_and_parse() {
        let v: Vec<TestFunction> =
            serde_json::from_str(r#"["x","x2","log",{"poly":[0,1]}]"#).unwrap();
        assert_eq!(v[1], TestFunction::X2);
        assert_eq!(v[3], TestFunction::Poly(vec![0.0, 1.0]));
        assert_eq!(TestFunction::parse("x^2"), Some(TestFunction::X2));
        assert_eq!(TestFunction::parse("sin"), None);
        assert_eq!(
            TestFunction::Poly(vec![1.0, 0.5]).to_string(),
            "poly(1,0.5)"
        );
    }
}
