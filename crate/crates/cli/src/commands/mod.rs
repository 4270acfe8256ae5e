//! Subcommand implementations and the flag plumbing they share.

pub mod bench;
pub mod gen;
pub mod solve;
pub mod train;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;

use rgm_core::instances::Instance;
use rgm_core::{AffinityMatrix, EnvConfig, RegFn, Sense};

use crate::config::EnvSection;

/// Environment knobs shared by train, solve, and bench.
#[derive(Debug, Args)]
pub struct EnvFlags {
    /// Allow displacing earlier picks instead of masking them out.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub revocable: Option<bool>,

    /// Stop an episode once the solution holds this many pairs.
    #[arg(long, value_name = "N")]
    pub inlier_count: Option<usize>,

    /// Fold the size penalty into the affinities the network sees.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub regularize: Option<bool>,

    /// Size penalty shape: f1, f2, or f3.
    #[arg(long, value_name = "FN")]
    pub reg_fn: Option<String>,

    /// Half-width of the quadratic penalty fit window.
    #[arg(long, value_name = "K")]
    pub reg_range: Option<usize>,

    /// Episode step budget (default: three times the revocable minimum).
    #[arg(long, value_name = "N")]
    pub max_steps: Option<usize>,
}

impl EnvFlags {
    /// Resolve flags over the config file over defaults. The penalty f1
    /// depends on instance dimensions, so they are taken per call.
    pub fn resolve(
        &self,
        file: &EnvSection,
        n1: usize,
        n2: usize,
        seeds: Vec<(usize, usize)>,
    ) -> anyhow::Result<EnvConfig> {
        let defaults = EnvConfig::default();
        let reg_fn = match self.reg_fn.as_deref().or(file.reg_fn.as_deref()) {
            Some(token) => RegFn::parse(token, n1, n2)?,
            None => defaults.reg_fn,
        };
        Ok(EnvConfig {
            revocable: self.revocable.or(file.revocable).unwrap_or(defaults.revocable),
            inlier_count: self.inlier_count.or(file.inlier_count),
            regularize: self
                .regularize
                .or(file.regularize)
                .unwrap_or(defaults.regularize),
            reg_fn,
            fit_half_width: self
                .reg_range
                .or(file.reg_range)
                .unwrap_or(defaults.fit_half_width),
            max_steps: self.max_steps.or(file.max_steps),
            seeds,
        })
    }
}

/// Parse `--seeds "0:0,2:1"` into (i, a) pairs.
pub fn parse_seed_pairs(text: &str) -> anyhow::Result<Vec<(usize, usize)>> {
    let mut pairs = Vec::new();
    for part in text.split(',').filter(|p| !p.trim().is_empty()) {
        let (i, a) = part
            .split_once(':')
            .with_context(|| format!("seed pair {part:?} is not of the form i:a"))?;
        pairs.push((
            i.trim().parse().with_context(|| format!("seed row {i:?}"))?,
            a.trim().parse().with_context(|| format!("seed column {a:?}"))?,
        ));
    }
    Ok(pairs)
}

pub fn parse_sense(token: &str) -> anyhow::Result<Sense> {
    match token {
        "max" | "maximize" => Ok(Sense::Maximize),
        "min" | "minimize" => Ok(Sense::Minimize),
        other => bail!("unknown sense {other:?}, expected max or min"),
    }
}

/// Reinterpret an instance's matrix under a forced objective sense.
pub fn override_sense(instance: &mut Instance, sense: Sense) -> anyhow::Result<()> {
    let k = &instance.affinity;
    if k.sense() != sense {
        instance.affinity = AffinityMatrix::new(k.n1(), k.n2(), k.data().to_vec(), sense)?;
    }
    Ok(())
}

/// Expand files and directories into a sorted list of instance files
/// (`.aff` and `.dat`), erroring on paths that do not exist.
pub fn collect_instance_files(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut inside: Vec<PathBuf> = std::fs::read_dir(path)
                .with_context(|| format!("reading directory {}", path.display()))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| {
                    matches!(
                        p.extension().and_then(|e| e.to_str()),
                        Some("aff") | Some("dat")
                    )
                })
                .collect();
            inside.sort();
            files.extend(inside);
        } else if path.is_file() {
            files.push(path.clone());
        } else {
            bail!("no such file or directory: {}", path.display());
        }
    }
    if files.is_empty() {
        bail!("no instance files (.aff or .dat) found");
    }
    Ok(files)
}

/// Load every file, applying an optional sense override.
pub fn load_instances(files: &[PathBuf], sense: Option<Sense>) -> anyhow::Result<Vec<Instance>> {
    let mut instances = Vec::with_capacity(files.len());
    for file in files {
        let mut instance =
            Instance::load(file).with_context(|| format!("loading {}", file.display()))?;
        if let Some(sense) = sense {
            override_sense(&mut instance, sense)?;
        }
        instances.push(instance);
    }
    Ok(instances)
}

/// Validate seed pairs against instance dimensions.
pub fn check_seed_bounds(
    seeds: &[(usize, usize)],
    n1: usize,
    n2: usize,
    name: &str,
) -> anyhow::Result<()> {
    for &(i, a) in seeds {
        if i >= n1 || a >= n2 {
            bail!("seed pair {i}:{a} is out of range for {name} ({n1}x{n2})");
        }
    }
    Ok(())
}

/// Worker-thread cap: RGM_THREADS, default 1.
pub fn thread_cap() -> usize {
    std::env::var("RGM_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

pub fn file_name(path: &Path) -> String {
    path.file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("instance")
        .to_string()
}
