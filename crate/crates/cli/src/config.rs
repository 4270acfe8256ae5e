//! Optional TOML configuration. Precedence everywhere is
//! defaults < config file < command-line flags.

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub gen: GenSection,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub bench: BenchSection,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSection {
    pub n: Option<usize>,
    pub outliers: Option<usize>,
    pub outliers1: Option<usize>,
    pub outliers2: Option<usize>,
    pub delta_s: Option<f64>,
    pub sigma1: Option<f64>,
    pub per_point_scale: Option<bool>,
    pub count: Option<usize>,
    pub seed: Option<u64>,
    pub group: Option<String>,
    pub out: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub revocable: Option<bool>,
    pub inlier_count: Option<usize>,
    pub regularize: Option<bool>,
    pub reg_fn: Option<String>,
    pub reg_range: Option<usize>,
    pub max_steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub episodes: Option<usize>,
    pub gamma: Option<f64>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub update_every: Option<usize>,
    pub sync_every: Option<usize>,
    pub eps_start: Option<f64>,
    pub eps_end: Option<f64>,
    pub eps_decay: Option<usize>,
    pub alpha: Option<f64>,
    pub replay_capacity: Option<usize>,
    pub grad_clip: Option<f64>,
    pub d: Option<usize>,
    pub t: Option<usize>,
    pub h4_variant: Option<String>,
    pub seed: Option<u64>,
    pub sense: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub seeds: Option<String>,
    pub baseline: Option<String>,
    pub sense: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub baseline: Option<String>,
}
