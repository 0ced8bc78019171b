//! Strict JSON run configurations, one per subcommand.

use std::path::{Path, PathBuf};

use covspec::lss::{ContourChoice, TestFunction};
use covspec::montecarlo::ReplicateStudy;
use covspec::stieltjes::{SolverOptions, DEFAULT_LADDER};
use covspec::verify::DEFAULT_REPLICATES;
use covspec::{MomentProfile, SpectralMeasure};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Raw configuration bytes and their digest.
pub struct Source {
    pub bytes: Vec<u8>,
    pub sha256: String,
    pub dir: PathBuf,
}

impl Source {
    pub fn load(path: Option<&Path>) -> Result<Source, CliError> {
        let (bytes, dir) = match path {
            Some(p) => {
                let bytes = std::fs::read(p).map_err(|e| {
                    CliError::Input(format!("cannot read config {}: {e}", p.display()))
                })?;
                let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (bytes, dir)
            }
            None => (b"{}".to_vec(), PathBuf::new()),
        };
        let sha256 = hex::encode(Sha256::digest(&bytes));
        Ok(Source { bytes, sha256, dir })
    }

    pub fn parse<T: for<'de> Deserialize<'de>>(&self) -> Result<T, CliError> {
        serde_json::from_slice(&self.bytes)
            .map_err(|e| CliError::Input(format!("invalid config: {e}")))
    }
}

/// Population spectral measure, given inline, as eigenvalues of `Σ` or by
/// a JSON file holding `{"atoms": [...], "weights": [...]}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    #[default]
    Identity,
    Inline(SpectralMeasure),
    SigmaEigenvalues(Vec<f64>),
    File(PathBuf),
}

impl MeasureSpec {
    pub fn resolve(&self, dir: &Path) -> Result<SpectralMeasure, CliError> {
        match self {
            MeasureSpec::Identity => Ok(SpectralMeasure::identity()),
            MeasureSpec::Inline(m) => Ok(m.clone()),
            MeasureSpec::SigmaEigenvalues(e) => Ok(SpectralMeasure::from_sigma_eigenvalues(e)?),
            MeasureSpec::File(p) => {
                let path = dir.join(p);
                let text = std::fs::read(&path).map_err(|e| {
                    CliError::Input(format!("cannot read measure {}: {e}", path.display()))
                })?;
                serde_json::from_slice(&text).map_err(|e| {
                    CliError::Input(format!("invalid measure file {}: {e}", path.display()))
                })
            }
        }
    }
}

/// Fourth-moment profile: explicit `{alpha, delta}` or `"estimate"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MomentsSpec {
    Supplied(MomentProfile),
    Keyword(MomentKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKeyword {
    Estimate,
}

/// A test function: `"x"`, `"x^2"`, `"x^3"`, `"log"` or `{"poly": [c0, c1, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionSpec {
    Named(String),
    Poly { poly: Vec<f64> },
}

impl FunctionSpec {
    pub fn resolve(&self) -> Result<TestFunction, CliError> {
        match self {
            FunctionSpec::Named(s) => TestFunction::parse(s).ok_or_else(|| {
                CliError::Input(format!(
                    "unknown test function {s:?}; use x, x^2, x^3, log or {{\"poly\": [...]}}"
                ))
            }),
            FunctionSpec::Poly { poly } => {
                if poly.is_empty() || poly.iter().any(|c| !c.is_finite()) {
                    return Err(CliError::Input(
                        "polynomial coefficients must be finite and nonempty".into(),
                    ));
                }
                Ok(TestFunction::Poly(poly.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        if self.points < 2
            || !(self.start < self.end)
            || !self.start.is_finite()
            || !self.end.is_finite()
        {
            return Err(CliError::Input(format!(
                "grid needs start < end and at least 2 points, got {self:?}"
            )));
        }
        let step = (self.end - self.start) / (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| self.start + step * i as f64)
            .collect())
    }
}

fn default_ladder() -> Vec<f64> {
    DEFAULT_LADDER.to_vec()
}

fn default_functions() -> Vec<FunctionSpec> {
    vec![
        FunctionSpec::Named("x".into()),
        FunctionSpec::Named("x^2".into()),
    ]
}

fn default_moments() -> MomentsSpec {
    MomentsSpec::Supplied(MomentProfile::real_gaussian())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsdConfig {
    pub p: usize,
    pub n: usize,
    #[serde(default)]
    pub measure: MeasureSpec,
    /// Evaluation grid; defaults to the support bounds padded by 5%.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default = "default_ladder")]
    pub ladder: Vec<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LssConfig {
    pub p: usize,
    pub n: usize,
    #[serde(default)]
    pub measure: MeasureSpec,
    #[serde(default = "default_moments")]
    pub moments: MomentsSpec,
    #[serde(default = "default_functions")]
    pub functions: Vec<FunctionSpec>,
    #[serde(default)]
    pub contours: ContourChoice,
    #[serde(default)]
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TestChoice {
    Frobenius,
    Lrt,
    #[default]
    Both,
}

fn default_level() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    #[serde(default)]
    pub test: TestChoice,
    /// Defaults to the Gaussian profile matching the data type.
    #[serde(default)]
    pub moments: Option<MomentsSpec>,
    #[serde(default)]
    pub alternative: covspec::identity::Alternative,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Data file, relative to the config; `--data` takes precedence.
    #[serde(default)]
    pub data: Option<PathBuf>,
}

pub type SimulateConfig = ReplicateStudy;

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Suites to run; all of them when empty.
    #[serde(default)]
    pub suites: Vec<String>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}
