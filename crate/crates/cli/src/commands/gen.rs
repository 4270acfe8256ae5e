//! `rgm gen`: write synthetic instances plus a manifest describing them.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Args;
use serde_json::json;

use rgm_core::instances::{gen_synthetic, write_affinity, SyntheticSpec};

use crate::config::FileConfig;
use crate::output::write_manifest;

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Inliers per instance.
    #[arg(long)]
    n: Option<usize>,

    /// Outliers added to both point sets (shorthand for equal counts).
    #[arg(long)]
    outliers: Option<usize>,

    /// Outliers added to the first point set only.
    #[arg(long)]
    outliers1: Option<usize>,

    /// Outliers added to the second point set only.
    #[arg(long)]
    outliers2: Option<usize>,

    /// Scale-noise half-width, in [0, 0.5].
    #[arg(long, value_name = "DELTA")]
    delta_s: Option<f64>,

    /// Gaussian kernel bandwidth.
    #[arg(long)]
    sigma1: Option<f64>,

    /// One scale draw per point (true) or one shared draw (false).
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    per_point_scale: Option<bool>,

    /// Number of instances.
    #[arg(long)]
    count: Option<usize>,

    /// Master seed; instance i is generated with seed + i.
    #[arg(long)]
    seed: Option<u64>,

    /// Group label recorded in the manifest (bench aggregates by it).
    #[arg(long)]
    group: Option<String>,

    /// Output directory, created if missing.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: GenArgs, file: &FileConfig) -> anyhow::Result<ExitCode> {
    let section = &file.gen;
    let defaults = SyntheticSpec::default();
    let both = args.outliers.or(section.outliers);
    let spec_base = SyntheticSpec {
        n_inliers: args.n.or(section.n).unwrap_or(defaults.n_inliers),
        n_outliers1: args
            .outliers1
            .or(section.outliers1)
            .or(both)
            .unwrap_or(defaults.n_outliers1),
        n_outliers2: args
            .outliers2
            .or(section.outliers2)
            .or(both)
            .unwrap_or(defaults.n_outliers2),
        delta_s: args.delta_s.or(section.delta_s).unwrap_or(defaults.delta_s),
        sigma1: args.sigma1.or(section.sigma1).unwrap_or(defaults.sigma1),
        per_point_scale: args
            .per_point_scale
            .or(section.per_point_scale)
            .unwrap_or(defaults.per_point_scale),
        rng_seed: 0,
    };
    let count = args.count.or(section.count).unwrap_or(30);
    let seed = args.seed.or(section.seed).unwrap_or(0);
    let group = args
        .group
        .clone()
        .or_else(|| section.group.clone())
        .unwrap_or_else(|| format!("delta_s={}", spec_base.delta_s));
    let out = args
        .out
        .clone()
        .or_else(|| section.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("instances"));

    if count == 0 {
        bail!("--count must be at least 1");
    }
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;

    let mut files = Vec::with_capacity(count);
    for i in 0..count {
        let spec = SyntheticSpec {
            rng_seed: seed.wrapping_add(i as u64),
            ..spec_base
        };
        let instance = gen_synthetic(&spec)?;
        let name = format!("inst_{i:04}.aff");
        write_affinity(&out.join(&name), &instance.affinity, Some(&instance.gt))?;
        files.push(json!({ "file": name, "seed": spec.rng_seed }));
    }

    write_manifest(
        &out.join("manifest.json"),
        &json!({
            "format": "rgm-manifest-v1",
            "command": "gen",
            "group": group,
            "seed": seed,
            "count": count,
            "spec": {
                "n_inliers": spec_base.n_inliers,
                "n_outliers1": spec_base.n_outliers1,
                "n_outliers2": spec_base.n_outliers2,
                "delta_s": spec_base.delta_s,
                "sigma1": spec_base.sigma1,
                "per_point_scale": spec_base.per_point_scale,
            },
            "files": files,
        }),
    )?;

    println!("generated {count} instances in {}", out.display());
    Ok(ExitCode::SUCCESS)
}
