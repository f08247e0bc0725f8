//! Output files named `{subcommand}-{config hash}` whose every row / document
//! carries the config hash, seed and crate version.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Output {
    dir: PathBuf,
    stem: String,
    hash: String,
    seed: u64,
    written: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    subcommand: &'a str,
    config_hash: &'a str,
    seed: u64,
    version: &'a str,
    result: &'a T,
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

impl Output {
    pub fn new(dir: &Path, subcommand: &str, hash: &str, seed: u64) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            stem: format!("{subcommand}-{hash}"),
            hash: hash.to_string(),
            seed,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn subcommand(&self) -> &str {
        self.stem.split('-').next().unwrap_or_default()
    }

    /// Writes `{stem}.csv` (or `{stem}-{suffix}.csv`) with the provenance
    /// columns prepended to `header` and to each row.
    pub fn csv(&mut self, suffix: Option<&str>, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
        let name = match suffix {
            Some(s) => format!("{}-{s}.csv", self.stem),
            None => format!("{}.csv", self.stem),
        };
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        let seed = self.seed.to_string();
        let provenance = ["config_hash", "seed", "version"];
        w.write_record(provenance.iter().copied().chain(header.iter().map(String::as_str)))?;
        for row in rows {
            let fixed = [self.hash.as_str(), seed.as_str(), VERSION];
            w.write_record(fixed.iter().copied().chain(row.iter().map(String::as_str)))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, result: &T) -> CliResult<()> {
        let path = self.dir.join(format!("{}.json", self.stem));
        let doc = Document {
            subcommand: self.subcommand(),
            config_hash: &self.hash,
            seed: self.seed,
            version: VERSION,
            result,
        };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }
}
