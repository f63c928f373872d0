use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::Hyperparams;

/// Which state a fit exports at the end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Snapshot {
    /// State after the last sweep.
    Final,
    /// State with the highest joint log-likelihood seen.
    Maxll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportOptions {
    /// A word is listed at a node on its path when its tokens at that level
    /// make up at least this share of all its tokens.
    pub min_share: f64,
    /// Words per node label in DOT output.
    pub dot_top_words: usize,
    /// Documents listed per node in JSON output.
    pub top_docs: usize,
    /// Leave the root (shared by every word) out of DOT output.
    pub dot_hide_root: bool,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions {
            min_share: 0.1,
            dot_top_words: 8,
            top_docs: 10,
            dot_hide_root: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gamma: f64,
    /// One value per level, or a single value used at every level.
    pub eta: Vec<f64>,
    /// One value per level, or a single value used at every level.
    pub alpha: Vec<f64>,
    pub levels: usize,
    pub iters: u64,
    pub seed: u64,
    pub skip_top: usize,
    /// `None` keeps every word after the skipped ones.
    pub keep_next: Option<usize>,
    /// Write a checkpoint every this many sweeps; 0 writes only the last one.
    pub checkpoint_every: u64,
    pub snapshot: Snapshot,
    pub chains: usize,
    pub export: ExportOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gamma: 1.0,
            eta: vec![1.0; 3],
            alpha: vec![1.0; 3],
            levels: 3,
            iters: 2500,
            seed: 0,
            skip_top: 0,
            keep_next: None,
            checkpoint_every: 0,
            snapshot: Snapshot::Final,
            chains: 1,
            export: ExportOptions::default(),
        }
    }
}

fn per_level(name: &str, values: &[f64], levels: usize) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; levels]),
        n if n == levels => Ok(values.to_vec()),
        n => Err(Error::Config(format!(
            "{name} has {n} values but there are {levels} levels"
        ))),
    }
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::Config("iters must be at least 1".into()));
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if self.levels == 0 {
            return Err(Error::Config("levels must be at least 1".into()));
        }
        if self.keep_next == Some(0) {
            return Err(Error::Config("keep-next must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.export.min_share) {
            return Err(Error::Config("min_share must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn hyperparams(&self, n_docs: usize) -> Result<Hyperparams> {
        Hyperparams::new(
            self.gamma,
            per_level("eta", &self.eta, self.levels)?,
            per_level("alpha", &self.alpha, self.levels)?,
            n_docs,
        )
    }
}
