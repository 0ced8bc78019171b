//! Report envelope and output files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Source;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct Envelope<'a, C: Serialize, R: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: &'a str,
    pub seed: Option<u64>,
    /// The configuration with every default filled in.
    pub config: &'a C,
    pub result: R,
}

impl<'a, C: Serialize, R: Serialize> Envelope<'a, C, R> {
    pub fn new(
        command: &'static str,
        source: &'a Source,
        seed: Option<u64>,
        config: &'a C,
        result: R,
    ) -> Self {
        Envelope {
            tool: "covspec",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_sha256: &source.sha256,
            seed,
            config,
            result,
        }
    }
}

/// Collects output files in memory so that nothing is written unless the
/// whole command succeeds.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(covspec::Error::from)?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    pub fn with<F>(&mut self, name: &str, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> covspec::Result<()>,
    {
        let mut bytes = Vec::new();
        write(&mut bytes)?;
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let io = |p: &Path, e: std::io::Error| {
            CliError::Input(format!("cannot write {}: {e}", p.display()))
        };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut written = Vec::new();
        for (name, bytes) in self.files {
            let path = dir.join(name);
            let mut f = BufWriter::new(fs::File::create(&path).map_err(|e| io(&path, e))?);
            f.write_all(&bytes)
                .and_then(|_| f.flush())
                .map_err(|e| io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}
