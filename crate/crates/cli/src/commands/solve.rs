//! `rgm solve`: run a trained checkpoint over instances, reporting scores,
//! F1 against ground truth, and the gap to a known optimal.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Args;
use serde::Serialize;

use rgm_core::instances::Instance;
use rgm_core::{
    f1_metrics, optimal_gap, read_checkpoint, solve, spectral_match_capped, vertex_unindex,
    MatchResult, QNetParams,
};

use crate::commands::{
    check_seed_bounds, collect_instance_files, parse_seed_pairs, parse_sense, EnvFlags,
};
use crate::config::FileConfig;
use crate::output::{sig6, sig6_opt};

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Trained checkpoint file.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,

    /// Instance files or directories (.aff, .dat).
    #[arg(required = true, num_args = 1.., value_name = "PATH")]
    paths: Vec<PathBuf>,

    #[command(flatten)]
    env: EnvFlags,

    /// Pre-matched pairs "i:a,j:b" forced as the first actions.
    #[arg(long, value_name = "PAIRS")]
    seeds: Option<String>,

    /// Emit a reference row per instance from this solver (spectral).
    #[arg(long, value_name = "NAME")]
    baseline: Option<String>,

    /// Force the objective sense of every loaded instance (max or min).
    #[arg(long, value_name = "SENSE")]
    sense: Option<String>,

    /// Write result rows as JSON.
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,

    /// Write result rows as CSV (timing excluded, full precision).
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

/// One solver outcome on one instance.
#[derive(Debug, Serialize)]
pub struct Row {
    pub instance: String,
    pub solver: String,
    pub pairs: usize,
    pub raw_score: f64,
    pub reg_score: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub gap: Option<f64>,
    pub steps: usize,
    pub wall_time: f64,
    pub solution: Vec<(usize, usize)>,
}

pub fn run(args: SolveArgs, file: &FileConfig) -> anyhow::Result<ExitCode> {
    let params = read_checkpoint(&args.checkpoint)
        .with_context(|| format!("reading checkpoint {}", args.checkpoint.display()))?;
    let sense = match args.sense.as_deref().or(file.solve.sense.as_deref()) {
        Some(token) => Some(parse_sense(token)?),
        None => None,
    };
    let seed_pairs = match args.seeds.as_deref().or(file.solve.seeds.as_deref()) {
        Some(text) => parse_seed_pairs(text)?,
        None => Vec::new(),
    };
    let baseline = args
        .baseline
        .as_deref()
        .or(file.solve.baseline.as_deref())
        .map(parse_baseline)
        .transpose()?;

    let files = collect_instance_files(&args.paths)?;
    let mut rows = Vec::new();
    let mut failures = 0usize;
    for path in &files {
        let mut instance = match Instance::load(path) {
            Ok(inst) => inst,
            Err(err) => {
                eprintln!("rgm: skipping {}: {err}", path.display());
                failures += 1;
                continue;
            }
        };
        if let Some(sense) = sense {
            crate::commands::override_sense(&mut instance, sense)?;
        }
        rows.extend(solve_instance(
            &instance,
            &params,
            &args.env,
            file,
            &seed_pairs,
            baseline,
        )?);
    }
    if rows.is_empty() {
        anyhow::bail!("no instance could be solved");
    }

    print_human(&rows);
    if let Some(path) = &args.json {
        let mut text = serde_json::to_string_pretty(&rows)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.csv {
        std::fs::write(path, render_csv(&rows))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(if failures > 0 {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

#[derive(Debug, Clone, Copy)]
pub enum Baseline {
    Spectral,
}

pub fn parse_baseline(token: &str) -> anyhow::Result<Baseline> {
    match token {
        "spectral" | "sm" => Ok(Baseline::Spectral),
        other => anyhow::bail!("unknown baseline {other:?}, expected spectral"),
    }
}

/// Solve one instance, optionally adding a baseline row.
pub fn solve_instance(
    instance: &Instance,
    params: &QNetParams,
    env: &EnvFlags,
    file: &FileConfig,
    seed_pairs: &[(usize, usize)],
    baseline: Option<Baseline>,
) -> anyhow::Result<Vec<Row>> {
    let k = &instance.affinity;
    check_seed_bounds(seed_pairs, k.n1(), k.n2(), &instance.name)?;
    let env_cfg = env.resolve(&file.env, k.n1(), k.n2(), seed_pairs.to_vec())?;
    let result = solve(k, params, &env_cfg)?;
    let mut rows = vec![make_row(instance, "rgm", &result)];
    if let Some(Baseline::Spectral) = baseline {
        let reference = spectral_match_capped(k, env_cfg.inlier_count);
        rows.push(make_row(instance, "sm", &reference));
    }
    Ok(rows)
}

fn make_row(instance: &Instance, solver: &str, result: &MatchResult) -> Row {
    let metrics = instance
        .gt
        .as_ref()
        .map(|gt| f1_metrics(&result.solution, gt));
    let gap = instance
        .known_optimal
        .and_then(|opt| optimal_gap(result.raw_score, opt).ok());
    let n2 = result.solution.n2();
    let mut solution: Vec<(usize, usize)> = result
        .solution
        .sorted_vertices()
        .iter()
        .map(|&p| vertex_unindex(p, n2))
        .collect();
    solution.sort_unstable();
    Row {
        instance: instance.name.clone(),
        solver: solver.to_string(),
        pairs: result.solution.len(),
        raw_score: result.raw_score,
        reg_score: result.reg_score,
        recall: metrics.map(|m| m.0),
        precision: metrics.map(|m| m.1),
        f1: metrics.map(|m| m.2),
        gap,
        steps: result.steps,
        wall_time: result.wall_time,
        solution,
    }
}

fn print_human(rows: &[Row]) {
    println!("instance  solver  pairs  raw  reg  f1  gap  steps  time");
    for row in rows {
        println!(
            "{}  {}  {}  {}  {}  {}  {}  {}  {}s",
            row.instance,
            row.solver,
            row.pairs,
            sig6(row.raw_score),
            sig6_opt(row.reg_score),
            sig6_opt(row.f1),
            sig6_opt(row.gap),
            row.steps,
            sig6(row.wall_time),
        );
    }
}

pub fn render_csv(rows: &[Row]) -> String {
    let mut csv =
        String::from("instance,solver,pairs,raw_score,reg_score,recall,precision,f1,gap,steps\n");
    for row in rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.instance,
            row.solver,
            row.pairs,
            row.raw_score,
            crate::output::cell(row.reg_score),
            crate::output::cell(row.recall),
            crate::output::cell(row.precision),
            crate::output::cell(row.f1),
            crate::output::cell(row.gap),
            row.steps,
        ));
    }
    csv
}
