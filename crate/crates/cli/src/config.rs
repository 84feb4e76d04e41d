//! Experiment configuration (JSON).
//!
//! ```json
//! {
//!   "data": { "kind": "chain", "params": { "n": 300000, "seed": 7 } },
//!   "blocks": { "n_blocks": 100, "block_len": 3000 },
//!   "policy": { "seed": 1, "alpha": 0.1, "n_tests": 1 },
//!   "measures": [ { "kind": "transfer_entropy", "target": "z", "source": "x" } ],
//!   "graph": { "channels": ["x", "y", "z"], "lag": 2 },
//!   "instant_mode": "conditional",
//!   "output": "runs/chain"
//! }
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use dircause::synth::{ChainParams, FourDParams};
use dircause::{EstimatorConfig, GaussianVarModel, InstantMode, MeasureSpec, SampleMatrix, SurrogatePolicy};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        path: PathBuf,
    },
    Chain {
        #[serde(default)]
        params: ChainParams,
    },
    FourD {
        #[serde(default)]
        params: FourDParams,
    },
    Var1 {
        model: PathBuf,
        n: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub n_blocks: usize,
    pub block_len: usize,
}

fn default_lag() -> usize {
    2
}

/// Full pairwise battery behind the causality graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub channels: Vec<String>,
    #[serde(default = "default_lag")]
    pub lag: usize,
    #[serde(default)]
    pub est: EstimatorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub blocks: BlockConfig,
    pub policy: SurrogatePolicy,
    #[serde(default)]
    pub measures: Vec<MeasureSpec>,
    #[serde(default)]
    pub graph: Option<GraphConfig>,
    #[serde(default)]
    pub instant_mode: InstantMode,
    pub output: PathBuf,
    /// Z-score every block before embedding.
    #[serde(default)]
    pub standardize: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn read_path(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| CliError::Json { path: path.to_path_buf(), source: e })?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output);
        match &mut self.data {
            DataSource::Csv { path } => fix(path),
            DataSource::Var1 { model, .. } => fix(model),
            _ => {}
        }
    }

    /// Structural checks that do not need the data.
    pub fn validate(&self) -> CliResult<()> {
        self.policy.validate()?;
        if self.measures.is_empty() && self.graph.is_none() {
            return Err(CliError::Usage("config lists no measures and no graph".into()));
        }
        if self.blocks.n_blocks < 2 || self.blocks.block_len == 0 {
            return Err(CliError::Usage("need at least 2 blocks of positive length".into()));
        }
        for m in &self.measures {
            m.validate()?;
        }
        Ok(())
    }

    /// Channel names referenced anywhere in the config.
    pub fn referenced_channels(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for m in &self.measures {
            out.push(&m.target);
            out.push(&m.source);
            out.extend(m.side.iter().map(String::as_str));
        }
        if let Some(g) = &self.graph {
            out.extend(g.channels.iter().map(String::as_str));
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn check_channels(&self, data: &SampleMatrix) -> CliResult<()> {
        for c in self.referenced_channels() {
            data.channel_index(c)?;
        }
        Ok(())
    }

    /// Seed of the data generator, when the data are simulated.
    pub fn data_seed(&self) -> Option<u64> {
        match &self.data {
            DataSource::Csv { .. } => None,
            DataSource::Chain { params } => Some(params.seed),
            DataSource::FourD { params } => Some(params.seed),
            DataSource::Var1 { seed, .. } => Some(*seed),
        }
    }

    /// SHA-256 over the canonical JSON form, plus any k sweep.
    pub fn hash(&self, k_sweep: &[usize]) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        for k in k_sweep {
            h.update(k.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub fn load_data(source: &DataSource) -> CliResult<SampleMatrix> {
    Ok(match source {
        DataSource::Csv { path } => {
            SampleMatrix::read_csv_path(path).map_err(|e| e.context(path.display().to_string()))?
        }
        DataSource::Chain { params } => dircause::synth::gen_chain(params)?,
        DataSource::FourD { params } => dircause::synth::gen_4d(params)?,
        DataSource::Var1 { model, n, seed } => {
            let m = GaussianVarModel::read_path(model).map_err(|e| e.context(model.display().to_string()))?;
            dircause::synth::gen_var1(&m, *n, *seed)?
        }
    })
}
