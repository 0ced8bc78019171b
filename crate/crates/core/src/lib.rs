//! Spectral laws and linear spectral statistics of renormalized sample
//! covariance matrices.
//!
//! The central object is
//!
//! ```text
//! S_n = X X* / ((√p + √n)² ‖Σ‖),
//! ```
//!
//! whose empirical spectral distribution has a deterministic limit for any
//! relative growth of the dimension `p` and the sample size `n`. The crate
//! provides:
//!
//! - [`spectral`]: population spectral measures, aspect ratios and entry
//!   moment profiles.
//! - [`stieltjes`]: the fixed-point solver for the limiting Stieltjes
//!   transform, density recovery and the limiting CDF.
//! - [`lss`]: mean and covariance of linear spectral statistics by contour
//!   integration, with closed forms for the identity population.
//! - [`identity`]: Frobenius-norm and (quasi-)likelihood-ratio tests of
//!   `H0: Σ = I`.
//! - [`montecarlo`]: data generators, spectra and replicate studies.
//! - [`datafile`]: CSV and binary data matrix files.
//! - [`verify`]: named verification suites used by the command line tool.

pub mod datafile;
pub mod error;
pub mod identity;
pub mod lss;
pub mod montecarlo;
pub mod spectral;
pub mod stats;
pub mod stieltjes;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use spectral::{AspectRatios, LimitScenario, MomentProfile, SpectralMeasure};
