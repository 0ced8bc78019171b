//! `covspec`: limiting spectra, linear-spectral-statistic moments, identity
//! tests and Monte Carlo verification from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod report;

use config::TestChoice;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] covspec::Error),
    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use covspec::Error as E;
        match self {
            CliError::Input(_) => 2,
            CliError::Verify(_) => 5,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(E::Degenerate(_) | E::SingularMatrix { .. }) => 4,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "covspec",
    version,
    about = "Spectral limits and identity tests for large covariance matrices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Data matrix file (CSV or binary).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "COVSPEC_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Limiting spectral density, distribution function and support.
    Lsd,
    /// Limiting mean and covariance of linear spectral statistics.
    LssMoments,
    /// Identity tests on a data matrix.
    Test {
        #[arg(long, value_enum)]
        test: Option<TestChoice>,
    },
    /// Monte Carlo replicate study.
    Simulate {
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Named verification suites; all of them when none are given.
    Verify {
        suites: Vec<String>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Print the suite names and exit.
        #[arg(long)]
        list: bool,
    },
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Input(format!("cannot configure thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Lsd => commands::lsd(cli),
        Command::LssMoments => commands::lss_moments(cli),
        Command::Test { test } => commands::test(cli, *test),
        Command::Simulate { replicates } => commands::simulate(cli, *replicates),
        Command::Verify {
            suites,
            replicates,
            list,
        } => commands::verify(cli, suites, *replicates, *list),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("covspec: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        use covspec::Error as E;
        assert_eq!(CliError::Input("x".into()).exit_code(), 2);
        assert_eq!(CliError::Verify("x".into()).exit_code(), 5);
        assert_eq!(CliError::from(E::InvalidInput("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(E::LogDomain("x".into())).exit_code(), 2);
        let nc = E::NonConvergence {
            z_re: 0.0,
            z_im: 1.0,
            iterations: 1,
            residual: 1.0,
        };
        assert_eq!(CliError::from(nc).exit_code(), 3);
        assert_eq!(
            CliError::from(E::QuadratureDiverged {
                nodes: 8,
                change: 1.0
            })
            .exit_code(),
            3
        );
        assert_eq!(
            CliError::from(E::SingularMatrix {
                min_eigenvalue: 0.0
            })
            .exit_code(),
            4
        );
        assert_eq!(CliError::from(E::Degenerate("x".into())).exit_code(), 4);
    }

    #[test]
    fn threads_fall_back_to_environment() {
        std::env::set_var("COVSPEC_THREADS", "3");
        let cli = Cli::try_parse_from(["covspec", "lsd"]).unwrap();
        assert_eq!(cli.threads, Some(3));
        let cli = Cli::try_parse_from(["covspec", "lsd", "--threads", "2"]).unwrap();
        assert_eq!(cli.threads, Some(2));
        std::env::remove_var("COVSPEC_THREADS");
    }
}
