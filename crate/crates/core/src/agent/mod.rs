//! The double-dueling DQN agent: epsilon-greedy action selection over the
//! environment's legal set, prioritized replay, double-Q targets with a
//! periodically synced target net, and the greedy inference rollout.
//!
//! Training state (target net, replay buffer, RNG position, counters) is
//! snapshotable, so an interrupted run resumed from its sidecar continues
//! bit-identically to one that never stopped.

pub mod replay;

use std::borrow::Cow;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affinity::{AffinityMatrix, AssociationView, Sense};
use crate::env::{state_net_matrix, Env, EnvConfig};
use crate::error::{Error, Result};
use crate::metrics::{f1_metrics, MatchResult};
use crate::neural::{
    backward, forward, forward_q, init_params, sgd_step, Gradients, H4Variant, NetInput,
    QNetParams,
};
use crate::regularizer::regularized_objective;
use crate::solution::PartialSolution;

pub use replay::{ReplayMemory, ReplaySnapshot, Transition, PRIORITY_FLOOR};

/// Whether action selection may explore.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Hyperparameters of the training loop and the network it builds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Episodes to run in [`train`]; `Trainer::run` takes its own count.
    pub episodes: usize,
    /// Discount factor, in (0, 1].
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    /// Gradient step every this many environment steps.
    pub update_every: usize,
    /// Target-net sync every this many environment steps.
    pub target_sync_every: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Episodes over which epsilon decays linearly from start to end.
    pub eps_decay_episodes: usize,
    /// Priority exponent of the replay buffer.
    pub alpha: f64,
    pub replay_capacity: usize,
    /// Global-norm gradient clip threshold.
    pub grad_clip: f64,
    /// Embedding (and head) width.
    pub d: usize,
    /// Embedding rounds.
    pub t: usize,
    pub h4_variant: H4Variant,
    /// Seeds the run's single RNG stream (weight init, instance and action
    /// draws, replay sampling).
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 0,
            gamma: 0.9,
            lr: 1e-5,
            batch_size: 64,
            update_every: 1,
            target_sync_every: 40,
            eps_start: 1.0,
            eps_end: 0.02,
            eps_decay_episodes: 20_000,
            alpha: 0.6,
            replay_capacity: 100_000,
            grad_clip: 10.0,
            d: 128,
            t: 3,
            h4_variant: H4Variant::PerEdge,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "gamma must be in (0, 1], got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.eps_start)
            || !(0.0..=1.0).contains(&self.eps_end)
            || self.eps_end > self.eps_start
        {
            return Err(Error::Config(format!(
                "epsilon schedule must satisfy 0 <= end <= start <= 1, got start {} end {}",
                self.eps_start, self.eps_end
            )));
        }
        if self.batch_size == 0 || self.update_every == 0 || self.target_sync_every == 0 {
            return Err(Error::Config(
                "batch size and update/sync cadences must be positive".into(),
            ));
        }
        if self.replay_capacity < self.batch_size {
            return Err(Error::Config(format!(
                "replay capacity {} cannot hold a batch of {}",
                self.replay_capacity, self.batch_size
            )));
        }
        if self.lr <= 0.0 || self.grad_clip <= 0.0 || self.alpha < 0.0 {
            return Err(Error::Config(
                "lr and grad clip must be positive, alpha non-negative".into(),
            ));
        }
        if self.d == 0 {
            return Err(Error::Config("embedding width must be positive".into()));
        }
        Ok(())
    }
}

/// Exploration rate for an episode index: linear from `eps_start` at episode
/// 0 down to `eps_end` at `eps_decay_episodes`, constant afterwards.
pub fn epsilon(cfg: &TrainConfig, episode: usize) -> f64 {
    if cfg.eps_decay_episodes == 0 || episode >= cfg.eps_decay_episodes {
        return cfg.eps_end;
    }
    let frac = episode as f64 / cfg.eps_decay_episodes as f64;
    cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac
}

/// One labeled training instance.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub affinity: AffinityMatrix,
    /// Ground-truth matching, when known; enables per-episode F1 logging.
    pub gt: Option<PartialSolution>,
}

/// Per-episode training log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub epsilon: f64,
    /// Mean minibatch loss over the episode's gradient steps (0 if none ran).
    pub loss: f64,
    /// Final raw objective, in the instance's own sense.
    pub raw_score: f64,
    /// Final size-penalized objective (instance sense), when regularizing.
    pub reg_score: Option<f64>,
    /// F1 of the final solution against ground truth, when known.
    pub f1: Option<f64>,
}

/// Everything beyond the online weights needed to continue a run exactly:
/// counters, the target net, the replay buffer, and the RNG position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub episode: usize,
    pub step_count: u64,
    pub rng_seed: [u8; 32],
    pub rng_word_pos_hi: u64,
    pub rng_word_pos_lo: u64,
    pub target: QNetParams,
    pub replay: ReplaySnapshot,
}

/// Pick an action for the environment's current state, or `None` when no
/// action is legal. In `Train` mode an epsilon draw decides between a
/// uniform legal action and the greedy one; `Infer` is always greedy.
/// Greedy ties break toward the lowest vertex index. The forward pass is
/// skipped entirely on exploring steps.
pub fn select_action(
    env: &Env,
    params: &QNetParams,
    eps: f64,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    let legal = env.legal_actions();
    if legal.is_empty() {
        return None;
    }
    if mode == Mode::Train && rng.gen::<f64>() < eps {
        return Some(legal[rng.gen_range(0..legal.len())]);
    }
    let x = env.indicator();
    let q = forward_q(params, &NetInput::new(&x, env.net_view()));
    Some(argmax_over(&legal, &q))
}

fn argmax_over(legal: &[usize], q: &[f64]) -> usize {
    debug_assert!(!legal.is_empty());
    let mut best = legal[0];
    for &a in &legal[1..] {
        if q[a] > q[best] {
            best = a;
        }
    }
    best
}

fn compact(sol: &PartialSolution) -> Vec<u16> {
    sol.sorted_vertices().iter().map(|&p| p as u16).collect()
}

fn expand(n1: usize, n2: usize, vertices: &[u16]) -> PartialSolution {
    let mut sol = PartialSolution::new(n1, n2);
    for &p in vertices {
        sol.insert(p as usize)
            .expect("stored replay states are conflict-free");
    }
    sol
}

/// Per-instance precomputation shared by every episode and replay of it.
struct Ctx {
    affinity: AffinityMatrix,
    /// Sign-oriented copy (negated for Minimize), as the env scores it.
    oriented: AffinityMatrix,
    /// View of `oriented`; replays of unregularized runs reuse it directly.
    view: AssociationView,
    gt: Option<PartialSolution>,
}

impl Ctx {
    fn new(item: TrainItem) -> Self {
        let oriented = match item.affinity.sense() {
            Sense::Maximize => item.affinity.clone(),
            Sense::Minimize => item.affinity.negated(),
        };
        let view = oriented.view();
        Ctx {
            affinity: item.affinity,
            oriented,
            view,
            gt: item.gt,
        }
    }

    /// Q values of a stored state, through the same matrix the env would
    /// present (the regularized shift is rebuilt when it applies).
    fn q_for_state(
        &self,
        env_cfg: &EnvConfig,
        sol: &PartialSolution,
        params: &QNetParams,
    ) -> Result<Vec<f64>> {
        let x = sol.indicator();
        Ok(match state_net_matrix(&self.oriented, env_cfg, sol)? {
            Cow::Borrowed(_) => forward_q(params, &NetInput::new(&x, &self.view)),
            Cow::Owned(m) => {
                let view = m.view();
                forward_q(params, &NetInput::new(&x, &view))
            }
        })
    }
}

fn legal_for(env_cfg: &EnvConfig, sol: &PartialSolution, dim: usize) -> Vec<usize> {
    if env_cfg.revocable {
        (0..dim).collect()
    } else {
        (0..dim).filter(|&p| sol.is_free(p)).collect()
    }
}

/// The training loop: owns the nets, the replay buffer, and the RNG stream.
pub struct Trainer {
    cfg: TrainConfig,
    env_cfg: EnvConfig,
    ctxs: Vec<Ctx>,
    online: QNetParams,
    target: QNetParams,
    replay: ReplayMemory,
    rng: ChaCha8Rng,
    episode: usize,
    step_count: u64,
    clip_events: u64,
}

impl Trainer {
    /// Fresh run: weights drawn from `cfg.rng_seed`'s stream, empty replay.
    pub fn new(items: Vec<TrainItem>, cfg: TrainConfig, env_cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        if items.is_empty() {
            return Err(Error::Config("training needs at least one instance".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let online = init_params(cfg.d, cfg.t, cfg.h4_variant, rng.gen());
        let target = online.clone();
        let replay = ReplayMemory::new(cfg.replay_capacity, cfg.alpha);
        let ctxs = items.into_iter().map(Ctx::new).collect();
        Ok(Trainer {
            cfg,
            env_cfg,
            ctxs,
            online,
            target,
            replay,
            rng,
            episode: 0,
            step_count: 0,
            clip_events: 0,
        })
    }

    /// Continue an interrupted run from its saved weights and sidecar state.
    pub fn resume(
        items: Vec<TrainItem>,
        cfg: TrainConfig,
        env_cfg: EnvConfig,
        online: QNetParams,
        state: TrainState,
    ) -> Result<Self> {
        cfg.validate()?;
        if items.is_empty() {
            return Err(Error::Config("training needs at least one instance".into()));
        }
        if online.d != cfg.d || online.t != cfg.t || online.h4_variant != cfg.h4_variant {
            return Err(Error::Config(format!(
                "checkpoint shape (d {}, t {}, {}) does not match config (d {}, t {}, {})",
                online.d,
                online.t,
                online.h4_variant.as_str(),
                cfg.d,
                cfg.t,
                cfg.h4_variant.as_str()
            )));
        }
        if state.target.d != cfg.d || state.target.t != cfg.t {
            return Err(Error::Config(
                "training-state target net does not match config shape".into(),
            ));
        }
        let mut rng = ChaCha8Rng::from_seed(state.rng_seed);
        let word_pos = ((state.rng_word_pos_hi as u128) << 64) | state.rng_word_pos_lo as u128;
        rng.set_word_pos(word_pos);
        let replay = ReplayMemory::restore(cfg.replay_capacity, cfg.alpha, state.replay)?;
        let ctxs = items.into_iter().map(Ctx::new).collect();
        Ok(Trainer {
            cfg,
            env_cfg,
            ctxs,
            online,
            target: state.target,
            replay,
            rng,
            episode: state.episode,
            step_count: state.step_count,
            clip_events: 0,
        })
    }

    pub fn params(&self) -> &QNetParams {
        &self.online
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    /// Snapshot everything [`Trainer::resume`] needs besides the weights.
    pub fn state(&self) -> TrainState {
        let word_pos = self.rng.get_word_pos();
        TrainState {
            episode: self.episode,
            step_count: self.step_count,
            rng_seed: self.rng.get_seed(),
            rng_word_pos_hi: (word_pos >> 64) as u64,
            rng_word_pos_lo: word_pos as u64,
            target: self.target.clone(),
            replay: self.replay.snapshot(),
        }
    }

    /// Run `episodes` more episodes, returning one log record per episode.
    pub fn run(&mut self, episodes: usize) -> Result<Vec<EpisodeLog>> {
        let mut logs = Vec::with_capacity(episodes);
        for _ in 0..episodes {
            logs.push(self.run_episode()?);
        }
        Ok(logs)
    }

    fn run_episode(&mut self) -> Result<EpisodeLog> {
        let eps = epsilon(&self.cfg, self.episode);
        let idx = self.rng.gen_range(0..self.ctxs.len());
        let mut env = Env::new(&self.ctxs[idx].affinity, self.env_cfg.clone())?;
        let mut loss_sum = 0.0;
        let mut loss_n = 0usize;
        while !env.is_done() {
            let Some(action) = select_action(&env, &self.online, eps, Mode::Train, &mut self.rng)
            else {
                break;
            };
            let state = compact(env.solution());
            let reward = env.step(action)?;
            self.replay.push(Transition {
                state,
                action,
                reward,
                next_state: compact(env.solution()),
                done: env.is_done(),
                instance: idx,
                priority: 0.0,
            });
            self.step_count += 1;
            if self.step_count % self.cfg.update_every as u64 == 0
                && self.replay.len() >= self.cfg.batch_size
            {
                loss_sum += self.update_step()?;
                loss_n += 1;
            }
            if self.step_count % self.cfg.target_sync_every as u64 == 0 {
                self.target = self.online.clone();
            }
        }
        let sign = env.sense().signum();
        let reg_score = self.env_cfg.regularize.then(|| sign * env.reg_score());
        let f1 = self.ctxs[idx]
            .gt
            .as_ref()
            .map(|gt| f1_metrics(env.solution(), gt).2);
        let log = EpisodeLog {
            episode: self.episode,
            epsilon: eps,
            loss: if loss_n > 0 { loss_sum / loss_n as f64 } else { 0.0 },
            raw_score: env.reported_raw_score(),
            reg_score,
            f1,
        };
        self.episode += 1;
        Ok(log)
    }

    /// One prioritized minibatch: double-Q targets, mean squared loss,
    /// clipped SGD step, then priority refresh from the new TD errors.
    fn update_step(&mut self) -> Result<f64> {
        let ids = self.replay.sample(self.cfg.batch_size, &mut self.rng)?;
        let batch: Vec<Transition> = ids
            .iter()
            .map(|&id| {
                self.replay
                    .get(id)
                    .expect("sampled ids are live")
                    .clone()
            })
            .collect();
        let targets = self.td_target(&batch)?;
        let mut grads = Gradients::zeros_like(&self.online);
        let mut td_errors = Vec::with_capacity(batch.len());
        let mut loss = 0.0;
        let inv_b = 1.0 / batch.len() as f64;
        for (tr, &target) in batch.iter().zip(&targets) {
            let ctx = &self.ctxs[tr.instance];
            let sol = expand(ctx.affinity.n1(), ctx.affinity.n2(), &tr.state);
            let x = sol.indicator();
            let cow = state_net_matrix(&ctx.oriented, &self.env_cfg, &sol)?;
            let owned_view;
            let view = match &cow {
                Cow::Borrowed(_) => &ctx.view,
                Cow::Owned(m) => {
                    owned_view = m.view();
                    &owned_view
                }
            };
            let input = NetInput::new(&x, view);
            let (q, cache) = forward(&self.online, &input);
            let err = target - q[tr.action];
            loss += err * err * inv_b;
            let mut g_q = vec![0.0; q.len()];
            g_q[tr.action] = -2.0 * err * inv_b;
            grads.add(&backward(&self.online, &input, &cache, &g_q));
            td_errors.push(err);
        }
        let pre_clip = grads.clip_global_norm(self.cfg.grad_clip);
        if pre_clip > self.cfg.grad_clip {
            self.clip_events += 1;
            log::debug!(
                "clipped gradient: global norm {:.3e} > {:.3e} (event {})",
                pre_clip,
                self.cfg.grad_clip,
                self.clip_events
            );
        }
        sgd_step(&mut self.online, &grads, self.cfg.lr);
        for (&id, &err) in ids.iter().zip(&td_errors) {
            self.replay.update_priority(id, err);
        }
        Ok(loss)
    }

    /// Double-Q target per transition: the online net picks the next action
    /// over the next state's legal set, the target net prices it. Terminal
    /// transitions (and dead-end next states) yield the bare reward.
    pub fn td_target(&self, batch: &[Transition]) -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|tr| {
                if tr.done {
                    return Ok(tr.reward);
                }
                let ctx = &self.ctxs[tr.instance];
                let sol = expand(ctx.affinity.n1(), ctx.affinity.n2(), &tr.next_state);
                let legal = legal_for(&self.env_cfg, &sol, ctx.affinity.dim());
                if legal.is_empty() {
                    return Ok(tr.reward);
                }
                let q_online = ctx.q_for_state(&self.env_cfg, &sol, &self.online)?;
                let next_action = argmax_over(&legal, &q_online);
                let q_target = ctx.q_for_state(&self.env_cfg, &sol, &self.target)?;
                Ok(tr.reward + self.cfg.gamma * q_target[next_action])
            })
            .collect()
    }
}

/// A finished (or checkpointed) training run.
pub struct TrainOutcome {
    pub params: QNetParams,
    pub state: TrainState,
    pub log: Vec<EpisodeLog>,
}

/// Train a fresh agent for `cfg.episodes` episodes over `items`.
pub fn train(items: Vec<TrainItem>, cfg: &TrainConfig, env_cfg: &EnvConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(items, cfg.clone(), env_cfg.clone())?;
    let log = trainer.run(cfg.episodes)?;
    Ok(TrainOutcome {
        params: trainer.online,
        state: TrainState {
            episode: trainer.episode,
            step_count: trainer.step_count,
            rng_seed: trainer.rng.get_seed(),
            rng_word_pos_hi: (trainer.rng.get_word_pos() >> 64) as u64,
            rng_word_pos_lo: trainer.rng.get_word_pos() as u64,
            target: trainer.target,
            replay: trainer.replay.snapshot(),
        },
        log,
    })
}

/// Greedy inference rollout.
///
/// With an inlier count the episode runs to that cardinality; if a revocable
/// step budget ends short, a completion phase keeps adding the best-Q
/// conflict-free vertex until the count is reached, so the result always has
/// exactly `inlier_count` pairs. Without one, the rollout stops early once
/// every Q value is non-positive on a non-empty solution, and the
/// best-scoring visited state is returned.
pub fn solve(k: &AffinityMatrix, params: &QNetParams, env_cfg: &EnvConfig) -> Result<MatchResult> {
    let start = Instant::now();
    let mut env = Env::new(k, env_cfg.clone())?;
    while !env.is_done() {
        let legal = env.legal_actions();
        if legal.is_empty() {
            break;
        }
        let x = env.indicator();
        let q = forward_q(params, &NetInput::new(&x, env.net_view()));
        let action = argmax_over(&legal, &q);
        if env_cfg.inlier_count.is_none() && q[action] <= 0.0 && !env.solution().is_empty() {
            break;
        }
        env.step(action)?;
    }
    let mut steps = env.step_count();
    let mut sol = match env_cfg.inlier_count {
        Some(_) => env.solution().clone(),
        None => env.best_solution().clone(),
    };
    if let Some(count) = env_cfg.inlier_count {
        let oriented = env.oriented();
        let base_view = env.net_view();
        while sol.len() < count {
            let x = sol.indicator();
            let q = match state_net_matrix(oriented, env_cfg, &sol)? {
                Cow::Borrowed(_) => forward_q(params, &NetInput::new(&x, base_view)),
                Cow::Owned(m) => {
                    let view = m.view();
                    forward_q(params, &NetInput::new(&x, &view))
                }
            };
            let free: Vec<usize> = (0..k.dim()).filter(|&p| sol.is_free(p)).collect();
            sol.insert(argmax_over(&free, &q))
                .expect("completion only considers conflict-free vertices");
            steps += 1;
        }
    }
    let reg_score = if env_cfg.regularize {
        Some(regularized_objective(k, &sol, &env_cfg.reg_fn)?)
    } else {
        None
    };
    Ok(MatchResult::new(
        k,
        sol,
        reg_score,
        steps,
        start.elapsed().as_secs_f64(),
    ))
}
