//! `rgm train`: fit an agent on a directory of instances, writing a
//! checkpoint, a resumable state file, and a per-episode CSV log.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Args;
use serde_json::json;

use rgm_core::{
    read_checkpoint, write_checkpoint, EpisodeLog, TrainConfig, TrainItem, TrainState, Trainer,
};

use crate::commands::{collect_instance_files, load_instances, parse_sense, EnvFlags};
use crate::config::{FileConfig, TrainSection};
use crate::output::{sig6, write_manifest};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Instance files or directories (.aff, .dat).
    #[arg(long, required = true, num_args = 1.., value_name = "PATH")]
    data: Vec<PathBuf>,

    #[command(flatten)]
    env: EnvFlags,

    #[command(flatten)]
    hp: TrainFlags,

    /// Force the objective sense of every loaded instance (max or min).
    #[arg(long, value_name = "SENSE")]
    sense: Option<String>,

    /// Output directory for checkpoint.ckpt, train_state.json, train_log.csv.
    #[arg(long, default_value = "run")]
    out: PathBuf,

    /// Continue from a previous run directory instead of starting fresh.
    #[arg(long, value_name = "DIR")]
    resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    /// Episodes to run in this invocation.
    #[arg(long)]
    episodes: Option<usize>,

    /// Discount factor.
    #[arg(long)]
    gamma: Option<f64>,

    /// SGD learning rate.
    #[arg(long)]
    lr: Option<f64>,

    #[arg(long)]
    batch_size: Option<usize>,

    /// Gradient step every this many environment steps.
    #[arg(long)]
    update_every: Option<usize>,

    /// Target-network sync every this many environment steps.
    #[arg(long)]
    sync_every: Option<usize>,

    #[arg(long)]
    eps_start: Option<f64>,

    #[arg(long)]
    eps_end: Option<f64>,

    /// Episodes over which epsilon decays linearly.
    #[arg(long)]
    eps_decay: Option<usize>,

    /// Replay priority exponent.
    #[arg(long)]
    alpha: Option<f64>,

    #[arg(long)]
    replay_capacity: Option<usize>,

    /// Global-norm gradient clip threshold.
    #[arg(long)]
    grad_clip: Option<f64>,

    /// Embedding width.
    #[arg(long)]
    d: Option<usize>,

    /// Embedding rounds.
    #[arg(long)]
    t: Option<usize>,

    /// Value-head lift: per-edge or row-sum.
    #[arg(long, value_name = "VARIANT")]
    h4_variant: Option<String>,

    /// RNG seed for the whole run.
    #[arg(long)]
    seed: Option<u64>,
}

impl TrainFlags {
    fn resolve(&self, file: &TrainSection) -> anyhow::Result<TrainConfig> {
        let d = TrainConfig::default();
        let h4_variant = match self.h4_variant.as_deref().or(file.h4_variant.as_deref()) {
            Some(token) => rgm_core::H4Variant::parse(token)
                .with_context(|| format!("unknown h4 variant {token:?}"))?,
            None => d.h4_variant,
        };
        Ok(TrainConfig {
            episodes: self.episodes.or(file.episodes).unwrap_or(0),
            gamma: self.gamma.or(file.gamma).unwrap_or(d.gamma),
            lr: self.lr.or(file.lr).unwrap_or(d.lr),
            batch_size: self.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
            update_every: self
                .update_every
                .or(file.update_every)
                .unwrap_or(d.update_every),
            target_sync_every: self
                .sync_every
                .or(file.sync_every)
                .unwrap_or(d.target_sync_every),
            eps_start: self.eps_start.or(file.eps_start).unwrap_or(d.eps_start),
            eps_end: self.eps_end.or(file.eps_end).unwrap_or(d.eps_end),
            eps_decay_episodes: self
                .eps_decay
                .or(file.eps_decay)
                .unwrap_or(d.eps_decay_episodes),
            alpha: self.alpha.or(file.alpha).unwrap_or(d.alpha),
            replay_capacity: self
                .replay_capacity
                .or(file.replay_capacity)
                .unwrap_or(d.replay_capacity),
            grad_clip: self.grad_clip.or(file.grad_clip).unwrap_or(d.grad_clip),
            d: self.d.or(file.d).unwrap_or(d.d),
            t: self.t.or(file.t).unwrap_or(d.t),
            h4_variant,
            rng_seed: self.seed.or(file.seed).unwrap_or(d.rng_seed),
        })
    }
}

pub fn run(args: TrainArgs, file: &FileConfig) -> anyhow::Result<ExitCode> {
    let cfg = args.hp.resolve(&file.train)?;
    if cfg.episodes == 0 {
        bail!("--episodes must be at least 1");
    }
    let sense = match args.sense.as_deref().or(file.train.sense.as_deref()) {
        Some(token) => Some(parse_sense(token)?),
        None => None,
    };

    let files = collect_instance_files(&args.data)?;
    let instances = load_instances(&files, sense)?;
    let k0 = &instances[0].affinity;
    let env_cfg = args.env.resolve(&file.env, k0.n1(), k0.n2(), Vec::new())?;
    let items: Vec<TrainItem> = instances
        .into_iter()
        .map(|inst| TrainItem {
            affinity: inst.affinity,
            gt: inst.gt,
        })
        .collect();
    let n_items = items.len();

    let mut trainer = match &args.resume {
        Some(dir) => {
            let online = read_checkpoint(&dir.join("checkpoint.ckpt"))?;
            let raw = std::fs::read_to_string(dir.join("train_state.json"))
                .with_context(|| format!("reading state in {}", dir.display()))?;
            let state: TrainState = serde_json::from_str(&raw)?;
            Trainer::resume(items, cfg.clone(), env_cfg.clone(), online, state)?
        }
        None => Trainer::new(items, cfg.clone(), env_cfg.clone())?,
    };
    let logs = trainer.run(cfg.episodes)?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    write_checkpoint(&args.out.join("checkpoint.ckpt"), trainer.params())?;
    let mut state_text = serde_json::to_string_pretty(&trainer.state())?;
    state_text.push('\n');
    std::fs::write(args.out.join("train_state.json"), state_text)?;

    let log_path = args.out.join("train_log.csv");
    let continue_log = args
        .resume
        .as_deref()
        .is_some_and(|dir| same_dir(dir, &args.out) && log_path.is_file());
    let mut csv = String::new();
    if !continue_log {
        csv.push_str("episode,epsilon,loss,raw_score,reg_score,f1\n");
    }
    for log in &logs {
        append_log_row(&mut csv, log);
    }
    if continue_log {
        use std::io::Write as _;
        let mut handle = std::fs::OpenOptions::new().append(true).open(&log_path)?;
        handle.write_all(csv.as_bytes())?;
    } else {
        std::fs::write(&log_path, csv)?;
    }

    write_manifest(
        &args.out.join("manifest.json"),
        &json!({
            "format": "rgm-manifest-v1",
            "command": "train",
            "train": cfg,
            "env": env_cfg,
            "sense": sense.map(|s| format!("{s:?}").to_lowercase()),
            "data": files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>(),
            "resume": args.resume.as_ref().map(|d| d.display().to_string()),
            "episodes_total": trainer.episode(),
        }),
    )?;

    let final_raw = logs.last().map(|l| l.raw_score).unwrap_or(0.0);
    let window = logs.len().min(100);
    let mean_raw: f64 =
        logs[logs.len() - window..].iter().map(|l| l.raw_score).sum::<f64>() / window as f64;
    println!(
        "trained {} episodes on {} instances: final raw {}, last-{} mean raw {}, checkpoint {}",
        logs.len(),
        n_items,
        sig6(final_raw),
        window,
        sig6(mean_raw),
        args.out.join("checkpoint.ckpt").display()
    );
    Ok(ExitCode::SUCCESS)
}

fn same_dir(a: &std::path::Path, b: &std::path::Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(ca), Ok(cb)) => ca == cb,
        _ => a == b,
    }
}

fn append_log_row(csv: &mut String, log: &EpisodeLog) {
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{}",
        log.episode,
        log.epsilon,
        log.loss,
        log.raw_score,
        log.reg_score.map(|v| v.to_string()).unwrap_or_default(),
        log.f1.map(|v| v.to_string()).unwrap_or_default(),
    );
}
