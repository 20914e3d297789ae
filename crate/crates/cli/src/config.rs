//! Run configuration: preset defaults, then the config file, then flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cpword::neural::train::TrainConfig;
use cpword::neural::ModelConfig;
use cpword::sampling::{SamplingPolicy, TypePolicy};
use cpword::symbolic::{GridConfig, Ranges};
use cpword::vocab::{Task, TokenType, Vocabulary};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub grid: GridConfig,
    pub ranges: Ranges,
    /// `toy`, `paper`, or `custom` (then `model` is required).
    pub preset: String,
    pub model: Option<ModelConfig>,
    pub repr: String,
    pub sampler: String,
    pub sampling: Vec<(TokenType, TypePolicy)>,
    pub family_sampling: Option<TypePolicy>,
    pub train: TrainConfig,
    pub samples: usize,
    pub max_steps: usize,
    pub paths: Paths,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: Task::Unconditional,
            grid: GridConfig::default(),
            ranges: Ranges::default(),
            preset: "toy".into(),
            model: None,
            repr: "cp".into(),
            sampler: "nucleus".into(),
            sampling: Vec::new(),
            family_sampling: None,
            train: TrainConfig::default(),
            samples: 1,
            max_steps: 2000,
            paths: Paths::default(),
            seed: 0,
        }
    }
}

/// Values given on the command line; `None` leaves the file or preset value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub task: Option<Task>,
    pub repr: Option<String>,
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(t) = flags.task {
            cfg.task = t;
        }
        if let Some(r) = &flags.repr {
            cfg.repr = r.clone();
        }
        if let Some(p) = &flags.preset {
            cfg.preset = p.clone();
        }
        if let Some(s) = flags.seed {
            cfg.seed = s;
            cfg.train.seed = s;
        }
        if let Some(o) = &flags.out {
            cfg.paths.out = Some(o.clone());
        }
        Ok(cfg)
    }

    pub fn vocab(&self) -> Result<Vocabulary, CliError> {
        Vocabulary::build(self.task, self.grid, self.ranges).map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn model_config(&self, vocab: &Vocabulary) -> Result<ModelConfig, CliError> {
        let mut m = match self.preset.as_str() {
            "custom" => self
                .model
                .clone()
                .ok_or_else(|| CliError::Usage("preset `custom` needs a `model` section in the config file".into()))?,
            name => ModelConfig::preset(name, vocab)
                .ok_or_else(|| CliError::Usage(format!("unknown preset `{name}` (known: toy, paper, custom)")))?,
        };
        m.task = self.task;
        m.seed = self.seed;
        m.validate(vocab).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(m)
    }

    pub fn policy(&self, vocab: &Vocabulary) -> SamplingPolicy {
        let mut p = vocab.default_policy();
        for &(ty, tp) in &self.sampling {
            p.set(ty, tp);
        }
        if let Some(f) = self.family_sampling {
            p.family = f;
        }
        p
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// The config as recorded in artifacts; the output location is left out so
    /// reruns into another directory produce identical files.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut cfg = self.clone();
        cfg.paths.out = None;
        serde_json::to_value(cfg).expect("config serializes")
    }
}
