//! Run configuration loaded from TOML.

use std::path::{Path, PathBuf};

use cardiosig_core::baselines::BaselineConfig;
use cardiosig_core::model::ModelConfig;
use cardiosig_core::synth::SimConfig;
use cardiosig_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Simulated or imported minute data and the preprocessing manifest.
    pub data_dir: PathBuf,
    /// Checkpoints, logs, reports and plots.
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Split seeds of the downstream classifiers.
    pub downstream_seeds: Vec<u64>,
    pub baselines: BaselineConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            downstream_seeds: vec![0, 1, 2],
            baselines: BaselineConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub signature_sizes: Vec<usize>,
    pub train_fractions: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            signature_sizes: cardiosig_core::model::SIGNATURE_SIZES.to_vec(),
            train_fractions: vec![0.01, 0.05, 0.10, 0.50, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; overrides the per-section seeds.
    pub seed: u64,
    pub signature_size: usize,
    /// Fill the `seconds` column of the training log (breaks byte-identical reruns).
    pub log_wall_time: bool,
    pub paths: Paths,
    pub sim: SimConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            signature_size: 32,
            log_wall_time: false,
            paths: Paths::default(),
            sim: SimConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses `path`; relative data and output paths resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|source| CliError::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.paths.data_dir, &mut config.paths.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    /// Applies the global seed to every stochastic component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sim.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::new(self.signature_size)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.train.validate()?;
        self.model_config().validate()?;
        self.eval.baselines.gbt.validate()?;
        if self.sim.windows.len() < 2 {
            return Err(CliError::Config("two collection windows are required".into()));
        }
        if self.eval.baselines.lag == 0 {
            return Err(CliError::Config("baseline lag must be >= 1".into()));
        }
        if self.eval.baselines.individual_stride == 0 || self.eval.baselines.population_stride == 0 {
            return Err(CliError::Config("baseline strides must be >= 1".into()));
        }
        Ok(())
    }

    pub fn data_path(&self, name: &str) -> PathBuf {
        self.paths.data_dir.join(name)
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.paths.output_dir.join(name)
    }
}
