//! `rgm bench`: evaluate a checkpoint over instance suites and aggregate
//! mean/min/max per group. Matching suites (ground truth present) report F1
//! and objective ratio; optimization suites (known optimal present) report
//! the optimality gap.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use anyhow::Context;
use clap::Args;
use serde_json::json;

use rgm_core::instances::Instance;
use rgm_core::{
    f1_metrics, objective_ratio, optimal_gap, read_checkpoint, solve, spectral_match_capped,
    QNetParams,
};

use crate::commands::{file_name, thread_cap, EnvFlags};
use crate::config::FileConfig;
use crate::output::{cell, sig6_opt, write_manifest};
use crate::commands::solve::{parse_baseline, Baseline};

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Suite sources: gen manifest files or directories of instances.
    /// Manifests group by their "group" field; directories of QAP files
    /// group by name class (letters before the size digits).
    #[arg(long = "manifest", required = true, num_args = 1.., value_name = "PATH")]
    manifests: Vec<PathBuf>,

    /// Trained checkpoint file.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,

    #[command(flatten)]
    env: EnvFlags,

    /// Add aggregate rows for this reference solver (spectral).
    #[arg(long, value_name = "NAME")]
    baseline: Option<String>,

    /// Output CSV path; stdout when absent.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

struct Entry {
    path: PathBuf,
    group: String,
}

struct Evaluated {
    group: String,
    solver: &'static str,
    f1: Option<f64>,
    ratio: Option<f64>,
    gap: Option<f64>,
}

pub fn run(args: BenchArgs, file: &FileConfig) -> anyhow::Result<ExitCode> {
    let params = read_checkpoint(&args.checkpoint)
        .with_context(|| format!("reading checkpoint {}", args.checkpoint.display()))?;
    let baseline = args
        .baseline
        .as_deref()
        .or(file.bench.baseline.as_deref())
        .map(parse_baseline)
        .transpose()?;

    let entries = collect_entries(&args.manifests)?;
    let mut partial = false;

    let mut loaded: Vec<(String, Instance)> = Vec::new();
    for entry in &entries {
        match Instance::load(&entry.path) {
            Ok(instance) => loaded.push((entry.group.clone(), instance)),
            Err(err) => {
                eprintln!("rgm: skipping {}: {err}", entry.path.display());
                partial = true;
            }
        }
    }
    if loaded.is_empty() {
        anyhow::bail!("no suite instance could be loaded");
    }
    let mut empty_groups: Vec<&str> = entries
        .iter()
        .map(|e| e.group.as_str())
        .filter(|g| !loaded.iter().any(|(group, _)| group == g))
        .collect();
    empty_groups.dedup();
    for group in empty_groups {
        eprintln!("rgm: group {group:?} is empty, omitted");
    }

    let results = evaluate_all(&loaded, &params, &args.env, file, baseline)?;

    let csv = aggregate_csv(&results);
    match &args.out {
        Some(path) => {
            std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
            print_human(&results);
            let manifest_path = path.with_extension("manifest.json");
            write_manifest(
                &manifest_path,
                &json!({
                    "format": "rgm-manifest-v1",
                    "command": "bench",
                    "checkpoint": args.checkpoint.display().to_string(),
                    "suites": args.manifests.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
                    "baseline": args.baseline.clone().or_else(|| file.bench.baseline.clone()),
                    "env": {
                        "revocable": args.env.revocable.or(file.env.revocable),
                        "inlier_count": args.env.inlier_count.or(file.env.inlier_count),
                        "regularize": args.env.regularize.or(file.env.regularize),
                        "reg_fn": args.env.reg_fn.clone().or_else(|| file.env.reg_fn.clone()),
                        "reg_range": args.env.reg_range.or(file.env.reg_range),
                        "max_steps": args.env.max_steps.or(file.env.max_steps),
                    },
                    "instances": loaded.len(),
                    "csv": path.display().to_string(),
                }),
            )?;
        }
        None => print!("{csv}"),
    }
    Ok(if partial {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

/// Expand manifests and directories into (path, group) entries.
fn collect_entries(sources: &[PathBuf]) -> anyhow::Result<Vec<Entry>> {
    let mut entries = Vec::new();
    for source in sources {
        if source.is_dir() {
            let mut inside: Vec<PathBuf> = std::fs::read_dir(source)
                .with_context(|| format!("reading directory {}", source.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    matches!(
                        p.extension().and_then(|e| e.to_str()),
                        Some("aff") | Some("dat")
                    )
                })
                .collect();
            inside.sort();
            for path in inside {
                let group = dir_group(source, &path);
                entries.push(Entry { path, group });
            }
        } else if source.is_file() {
            let text = std::fs::read_to_string(source)
                .with_context(|| format!("reading manifest {}", source.display()))?;
            let manifest: serde_json::Value = serde_json::from_str(&text)
                .with_context(|| format!("parsing manifest {}", source.display()))?;
            let base = source.parent().unwrap_or(Path::new("."));
            let group = manifest
                .get("group")
                .and_then(|g| g.as_str())
                .unwrap_or("default")
                .to_string();
            let files = manifest
                .get("files")
                .and_then(|f| f.as_array())
                .with_context(|| format!("manifest {} has no files array", source.display()))?;
            for item in files {
                let name = item
                    .get("file")
                    .and_then(|f| f.as_str())
                    .context("manifest file entry without a name")?;
                entries.push(Entry {
                    path: base.join(name),
                    group: group.clone(),
                });
            }
        } else {
            anyhow::bail!("no such file or directory: {}", source.display());
        }
    }
    if entries.is_empty() {
        anyhow::bail!("suite is empty");
    }
    Ok(entries)
}

/// Group label for a bare instance file: QAP files group by the letter class
/// of their name (chr12a -> chr), others by their directory name.
fn dir_group(dir: &Path, path: &Path) -> String {
    if path.extension().and_then(|e| e.to_str()) == Some("dat") {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let class: String = stem.chars().take_while(|c| c.is_alphabetic()).collect();
        if !class.is_empty() {
            return class;
        }
    }
    file_name(dir)
}

/// Evaluate every instance, spreading work over RGM_THREADS workers. Results
/// are reassembled in suite order, so output does not depend on the worker
/// count.
fn evaluate_all(
    loaded: &[(String, Instance)],
    params: &QNetParams,
    env: &EnvFlags,
    file: &FileConfig,
    baseline: Option<Baseline>,
) -> anyhow::Result<Vec<Evaluated>> {
    let workers = thread_cap().min(loaded.len());
    let cursor = AtomicUsize::new(0);
    let mut slots: Vec<Vec<Evaluated>> = Vec::new();
    std::thread::scope(|scope| -> anyhow::Result<()> {
        let (tx, rx) = mpsc::channel::<(usize, anyhow::Result<Vec<Evaluated>>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let cursor = &cursor;
            scope.spawn(move || loop {
                let index = cursor.fetch_add(1, Ordering::SeqCst);
                if index >= loaded.len() {
                    break;
                }
                let (group, instance) = &loaded[index];
                let result = evaluate_one(group, instance, params, env, file, baseline);
                if tx.send((index, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut collected: Vec<Option<Vec<Evaluated>>> =
            (0..loaded.len()).map(|_| None).collect();
        for (index, result) in rx {
            collected[index] = Some(result?);
        }
        slots = collected.into_iter().map(|r| r.unwrap()).collect();
        Ok(())
    })?;
    Ok(slots.into_iter().flatten().collect())
}

fn evaluate_one(
    group: &str,
    instance: &Instance,
    params: &QNetParams,
    env: &EnvFlags,
    file: &FileConfig,
    baseline: Option<Baseline>,
) -> anyhow::Result<Vec<Evaluated>> {
    let k = &instance.affinity;
    let env_cfg = env.resolve(&file.env, k.n1(), k.n2(), Vec::new())?;
    let result = solve(k, params, &env_cfg)?;
    let mut rows = vec![measure(group, "rgm", instance, &result.solution, result.raw_score)];
    if let Some(Baseline::Spectral) = baseline {
        let reference = spectral_match_capped(k, env_cfg.inlier_count);
        rows.push(measure(
            group,
            "sm",
            instance,
            &reference.solution,
            reference.raw_score,
        ));
    }
    Ok(rows)
}

fn measure(
    group: &str,
    solver: &'static str,
    instance: &Instance,
    solution: &rgm_core::PartialSolution,
    raw_score: f64,
) -> Evaluated {
    let k = &instance.affinity;
    let f1 = instance.gt.as_ref().map(|gt| f1_metrics(solution, gt).2);
    let ratio = instance
        .gt
        .as_ref()
        .and_then(|gt| objective_ratio(k, solution, gt).ok());
    let gap = instance
        .known_optimal
        .and_then(|opt| optimal_gap(raw_score, opt).ok());
    Evaluated {
        group: group.to_string(),
        solver,
        f1,
        ratio,
        gap,
    }
}

struct Stats {
    count: usize,
    f1: Vec<f64>,
    ratio: Vec<f64>,
    gap: Vec<f64>,
}

fn aggregate(results: &[Evaluated]) -> Vec<(String, &'static str, Stats)> {
    let mut order: Vec<(String, &'static str)> = Vec::new();
    for row in results {
        let key = (row.group.clone(), row.solver);
        if !order.contains(&key) {
            order.push(key);
        }
    }
    order
        .into_iter()
        .map(|(group, solver)| {
            let mut stats = Stats {
                count: 0,
                f1: Vec::new(),
                ratio: Vec::new(),
                gap: Vec::new(),
            };
            for row in results {
                if row.group == group && row.solver == solver {
                    stats.count += 1;
                    stats.f1.extend(row.f1);
                    stats.ratio.extend(row.ratio);
                    stats.gap.extend(row.gap);
                }
            }
            (group, solver, stats)
        })
        .collect()
}

fn mean_min_max(values: &[f64]) -> (Option<f64>, Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None, None);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (Some(mean), Some(min), Some(max))
}

fn aggregate_csv(results: &[Evaluated]) -> String {
    let mut csv = String::from(
        "group,solver,count,f1_mean,f1_min,f1_max,ratio_mean,ratio_min,ratio_max,gap_mean,gap_min,gap_max\n",
    );
    for (group, solver, stats) in aggregate(results) {
        if stats.count == 0 {
            eprintln!("rgm: group {group:?} is empty, omitted");
            continue;
        }
        let (f1m, f1lo, f1hi) = mean_min_max(&stats.f1);
        let (rm, rlo, rhi) = mean_min_max(&stats.ratio);
        let (gm, glo, ghi) = mean_min_max(&stats.gap);
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            group,
            solver,
            stats.count,
            cell(f1m),
            cell(f1lo),
            cell(f1hi),
            cell(rm),
            cell(rlo),
            cell(rhi),
            cell(gm),
            cell(glo),
            cell(ghi),
        ));
    }
    csv
}

fn print_human(results: &[Evaluated]) {
    for (group, solver, stats) in aggregate(results) {
        if stats.count == 0 {
            continue;
        }
        let (f1m, _, _) = mean_min_max(&stats.f1);
        let (rm, _, _) = mean_min_max(&stats.ratio);
        let (gm, glo, ghi) = mean_min_max(&stats.gap);
        println!(
            "{group} {solver}: n={} f1 {} ratio {} gap {} [{}, {}]",
            stats.count,
            sig6_opt(f1m),
            sig6_opt(rm),
            sig6_opt(gm),
            sig6_opt(glo),
            sig6_opt(ghi),
        );
    }
}
