//! TOML run configuration.
//!
//! ```toml
//! seed = 1
//! precision = "f32"
//!
//! [model]
//! preset = "desk"
//!
//! [train]
//! tune_iterations = 2000
//! batch_size = 16
//!
//! [method]
//! mode = "rap"
//! alpha = "saltpepper:0.5"
//! k = 3
//! k_p = 2
//! ```
//!
//! Command-line flags and the `ADVTRAIN_SEED` / `ADVTRAIN_THREADS`
//! variables take precedence over the file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SynthParams;
use crate::degrade::DegradeSpec;
use crate::error::{Error, Result};
use crate::network::ModelSpec;
use crate::training::{Method, TrainConfig};
use crate::transfer::TransferPlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelConfig {
    Preset { preset: String },
    Spec(ModelSpec),
}

impl ModelConfig {
    /// The architecture fitted to `input` and `classes`.
    pub fn resolve(&self, input: [usize; 3], classes: usize) -> Result<ModelSpec> {
        match self {
            ModelConfig::Preset { preset } => ModelSpec::preset(preset)?.adapted(input, classes),
            ModelConfig::Spec(spec) => {
                if spec.input != input || spec.classes() != Some(classes) {
                    return Err(Error::Config(format!(
                        "model `{}` expects {:?} inputs and {:?} classes, data has {input:?} and {classes}",
                        spec.name,
                        spec.input,
                        spec.classes()
                    )));
                }
                Ok(spec.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfig {
    pub mode: Option<Method>,
    pub alpha: Option<DegradeSpec>,
    pub beta: Option<DegradeSpec>,
    pub k: usize,
    pub k_p: usize,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            mode: None,
            alpha: None,
            beta: None,
            k: 3,
            k_p: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoConfig {
    /// Frames between consecutive clip starts.
    pub stride: usize,
    /// Frames per synthetic video.
    pub frames: usize,
    /// Largest drift of a synthetic video, in pixels.
    pub max_shift: usize,
}

impl Default for VideoConfig {
    fn default() -> Self {
        Self {
            stride: 1,
            frames: 8,
            max_shift: 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub precision: Precision,
    pub model: Option<ModelConfig>,
    pub train: TrainConfig,
    pub method: MethodConfig,
    pub synth: SynthParams,
    pub video: VideoConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        parse_toml(path)
    }

    /// Applies the seed and thread overrides and checks the result.
    pub fn resolved(mut self, seed: Option<u64>, threads: Option<usize>) -> Result<Self> {
        let seed = seed.or(self.seed).unwrap_or(self.train.seed);
        let threads = threads.or(self.threads).unwrap_or(self.train.threads);
        self.seed = Some(seed);
        self.threads = Some(threads);
        self.train.seed = seed;
        self.train.threads = threads;
        self.train.validate()?;
        self.synth.validate()?;
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn threads(&self) -> usize {
        self.train.threads
    }
}

/// A transfer plan file: the plan itself and the architecture shared by the
/// source and target models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub plan: TransferPlan,
    pub model: ModelConfig,
    #[serde(default)]
    pub precision: Precision,
}

impl PlanFile {
    pub fn load(path: &Path) -> Result<Self> {
        parse_toml(path)
    }
}

fn parse_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::Config(e.to_string()))
}
