//! Experiment configuration, stored as TOML next to the run outputs so a
//! run can be repeated from its own directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use dynakge::eval::{Distance, DEFAULT_KS};
use dynakge::online::OnlineConfig;
use dynakge::training::TrainConfig;
use dynakge::{ModelKind, ModelSpec};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "DYNAKGE_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// Offline on the first snapshot, online updates afterwards.
    Online,
    /// Trains every snapshot from scratch.
    Recalc,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::Online => "online",
            RunMode::Recalc => "recalc",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub mode: RunMode,
    /// Snapshot directory written by `dynakge snapshot`.
    pub snapshots: PathBuf,
    pub out: PathBuf,
    pub ks: Vec<usize>,
    pub classification: bool,
    pub nmc_distance: Distance,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub online: OnlineConfig,
}

impl ExperimentConfig {
    pub fn for_model(kind: ModelKind, snapshots: PathBuf, out: PathBuf) -> Self {
        Self {
            seed: 0,
            mode: RunMode::Online,
            snapshots,
            out,
            ks: DEFAULT_KS.to_vec(),
            classification: false,
            nmc_distance: Distance::L2,
            model: ModelSpec::new(kind),
            train: TrainConfig::for_model(kind),
            online: OnlineConfig::for_model(kind),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.online.validate()?;
        if self.ks.is_empty() || self.ks.contains(&0) {
            bail!("ks must be a non-empty list of positive cut-offs");
        }
        let meta = self.snapshots.join("meta.json");
        if !meta.is_file() {
            bail!(
                "{} is not a snapshot directory (no meta.json)",
                self.snapshots.display()
            );
        }
        Ok(())
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// `DYNAKGE_SEED` when set, otherwise the flag value.
pub fn resolve_seed(flag: Option<u64>) -> anyhow::Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| {
            format!("{SEED_ENV}={v} is not an unsigned integer")
        })?)),
        Err(_) => Ok(flag),
    }
}
