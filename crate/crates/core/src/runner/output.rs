//! CSV trace and JSON metadata files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::EnvSpec;
use crate::error::{input, Error, Result};
use crate::policy::EpochDiagnostics;

use super::{ExperimentResult, RunConfig, Settings};

pub const CSV_HEADER: &str = "t,mean_regret,stderr";

/// Writes `t,mean_regret,stderr`, one row per round. Floats use the
/// shortest representation that parses back to the same value.
pub fn emit_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{CSV_HEADER}")?;
    for (t, (m, s)) in result.mean.iter().zip(&result.stderr).enumerate() {
        writeln!(w, "{},{},{}", t + 1, m, s)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a file written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<(u64, f64, f64)>> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    match lines.next() {
        Some(Ok(h)) if h == CSV_HEADER => {}
        _ => return Err(input(format!("{}: missing header", path.display()))),
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        let mut parts = line.split(',');
        let mut next = || parts.next().ok_or_else(|| input(format!("short row {line:?}")));
        let t = next()?.parse().map_err(|e| input(format!("{e}")))?;
        let m = next()?.parse().map_err(|e| input(format!("{e}")))?;
        let s = next()?.parse().map_err(|e| input(format!("{e}")))?;
        rows.push((t, m, s));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: usize,
    pub seed: u64,
    pub env: EnvSpec,
    pub final_regret: f64,
    pub epochs: Vec<EpochDiagnostics>,
}

/// Everything needed to rerun an experiment: `settings` can be passed back
/// through `--config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    pub settings: Settings,
    pub config: RunConfig,
    pub runs: Vec<RunRecord>,
}

impl Metadata {
    pub fn new(config: &RunConfig, result: &ExperimentResult) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            settings: config.to_settings(),
            config: config.clone(),
            runs: result
                .runs
                .iter()
                .map(|r| RunRecord {
                    run_index: r.run_index,
                    seed: r.env.seed,
                    env: r.env.clone(),
                    final_regret: r.final_regret(),
                    epochs: r.epochs.clone(),
                })
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// `regret.csv` -> `regret.meta.json`
pub fn metadata_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

pub fn emit_metadata(config: &RunConfig, result: &ExperimentResult, path: &Path) -> Result<()> {
    let meta = Metadata::new(config, result);
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &meta).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
