//! The episode state machine the agent interacts with: masked (basic) or
//! revocable vertex selection, raw or size-penalized rewards, and the
//! termination rules.
//!
//! All internal scores are sign-oriented so that higher is always better:
//! a Minimize instance is negated once at construction. Use
//! [`Env::reported_raw_score`] for the score in the instance's own sense.

use std::borrow::Cow;

use crate::affinity::{objective_score, AffinityMatrix, AssociationView, Sense};
use crate::error::{Error, Result};
use crate::regularizer::{quad_fit, regularized_affinity, RegFn, DEFAULT_FIT_HALF_WIDTH};
use crate::solution::PartialSolution;

/// Episode rules. `max_steps = None` resolves per mode at construction:
/// min(n1, n2) basic (one addition per step), 3*min(n1, n2) revocable
/// (room for revisions).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnvConfig {
    pub revocable: bool,
    pub inlier_count: Option<usize>,
    pub regularize: bool,
    pub reg_fn: RegFn,
    pub fit_half_width: usize,
    pub max_steps: Option<usize>,
    /// Pre-matched (i, a) pairs applied as the episode's forced start.
    pub seeds: Vec<(usize, usize)>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            revocable: false,
            inlier_count: None,
            regularize: false,
            reg_fn: RegFn::F2Rational,
            fit_half_width: DEFAULT_FIT_HALF_WIDTH,
            max_steps: None,
            seeds: Vec::new(),
        }
    }
}

/// The matrix the network should see for a solution state: the oriented
/// affinity itself, or its regularized shift rebuilt around the state's
/// size and score.
pub fn state_net_matrix<'k>(
    oriented: &'k AffinityMatrix,
    cfg: &EnvConfig,
    sol: &PartialSolution,
) -> Result<Cow<'k, AffinityMatrix>> {
    if !cfg.regularize {
        return Ok(Cow::Borrowed(oriented));
    }
    let fit = quad_fit(&cfg.reg_fn, sol.len(), cfg.fit_half_width)?;
    let cx = objective_score(oriented, sol);
    Ok(Cow::Owned(regularized_affinity(oriented, cx, &fit)))
}

pub struct Env {
    cfg: EnvConfig,
    sense: Sense,
    oriented: AffinityMatrix,
    oriented_view: AssociationView,
    max_steps: usize,
    solution: PartialSolution,
    raw_score: f64,
    reg_score: f64,
    step_count: usize,
    done: bool,
    best_solution: PartialSolution,
    best_score: f64,
    /// Regularized matrix and view for the current state; absent when
    /// regularization is off (the agent then reads `oriented` directly).
    k_hat: Option<(AffinityMatrix, AssociationView)>,
}

impl Env {
    pub fn new(k: &AffinityMatrix, cfg: EnvConfig) -> Result<Env> {
        let (n1, n2) = (k.n1(), k.n2());
        if let Some(count) = cfg.inlier_count {
            if count == 0 || count > n1.min(n2) {
                return Err(Error::Config(format!(
                    "inlier count {count} outside 1..={}",
                    n1.min(n2)
                )));
            }
        }
        if cfg.max_steps == Some(0) {
            return Err(Error::Config("max steps must be positive".into()));
        }
        if cfg.regularize && cfg.fit_half_width == 0 {
            return Err(Error::Config("fit half-width must be positive".into()));
        }
        let seeds = PartialSolution::from_pairs(n1, n2, &cfg.seeds)
            .map_err(|e| Error::Config(format!("invalid seeds: {e}")))?;

        let oriented = match k.sense() {
            Sense::Maximize => k.clone(),
            Sense::Minimize => k.negated(),
        };
        let oriented_view = oriented.view();
        let max_steps = cfg.max_steps.unwrap_or(if cfg.revocable {
            3 * n1.min(n2)
        } else {
            n1.min(n2)
        });

        let mut env = Env {
            cfg,
            sense: k.sense(),
            oriented,
            oriented_view,
            max_steps,
            solution: seeds,
            raw_score: 0.0,
            reg_score: 0.0,
            step_count: 0,
            done: false,
            best_solution: PartialSolution::new(n1, n2),
            best_score: f64::NEG_INFINITY,
            k_hat: None,
        };
        env.reset()?;
        Ok(env)
    }

    /// Back to the seeded start state.
    pub fn reset(&mut self) -> Result<()> {
        let (n1, n2) = (self.oriented.n1(), self.oriented.n2());
        self.solution = PartialSolution::from_pairs(n1, n2, &self.cfg.seeds)
            .map_err(|e| Error::Config(format!("invalid seeds: {e}")))?;
        self.raw_score = objective_score(&self.oriented, &self.solution);
        self.reg_score = self.penalized(self.raw_score, self.solution.len())?;
        self.step_count = 0;
        self.done = self.at_terminal();
        self.best_solution = self.solution.clone();
        self.best_score = self.episode_score();
        self.refresh_k_hat()?;
        Ok(())
    }

    pub fn cfg(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// The sign-oriented matrix scoring and rewards run on.
    pub fn oriented(&self) -> &AffinityMatrix {
        &self.oriented
    }

    /// The matrix the agent's network should consume right now.
    pub fn net_matrix(&self) -> &AffinityMatrix {
        match &self.k_hat {
            Some((m, _)) => m,
            None => &self.oriented,
        }
    }

    /// Association view of [`Env::net_matrix`].
    pub fn net_view(&self) -> &AssociationView {
        match &self.k_hat {
            Some((_, v)) => v,
            None => &self.oriented_view,
        }
    }

    pub fn solution(&self) -> &PartialSolution {
        &self.solution
    }

    pub fn indicator(&self) -> Vec<f64> {
        self.solution.indicator()
    }

    /// Oriented raw objective of the current solution.
    pub fn raw_score(&self) -> f64 {
        self.raw_score
    }

    /// Oriented size-penalized objective (0 when regularization is off).
    pub fn reg_score(&self) -> f64 {
        self.reg_score
    }

    /// What this episode is maximizing: the penalized score when
    /// regularizing, the raw score otherwise.
    pub fn episode_score(&self) -> f64 {
        if self.cfg.regularize {
            self.reg_score
        } else {
            self.raw_score
        }
    }

    /// Raw objective in the instance's own sense (un-negated).
    pub fn reported_raw_score(&self) -> f64 {
        self.sense.signum() * self.raw_score
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn best_solution(&self) -> &PartialSolution {
        &self.best_solution
    }

    pub fn best_score(&self) -> f64 {
        self.best_score
    }

    /// Vertices addable without conflict: the basic-mode action set.
    pub fn available_set(&self) -> Vec<usize> {
        (0..self.oriented.dim())
            .filter(|&p| self.solution.is_free(p))
            .collect()
    }

    /// The mode's action set: every vertex when revocable, the available
    /// set otherwise.
    pub fn legal_actions(&self) -> Vec<usize> {
        if self.cfg.revocable {
            (0..self.oriented.dim()).collect()
        } else {
            self.available_set()
        }
    }

    /// Apply one action and return its reward (oriented; the episode's
    /// scoring function delta).
    pub fn step(&mut self, vertex: usize) -> Result<f64> {
        if self.done {
            return Err(Error::Contract("step on a finished episode".into()));
        }
        if vertex >= self.oriented.dim() {
            return Err(Error::Contract(format!(
                "vertex {vertex} out of range for {} vertices",
                self.oriented.dim()
            )));
        }

        let before = self.episode_score();
        if self.cfg.revocable {
            if self.solution.contains(vertex) {
                // Remove-and-re-add collapses to a no-op with zero reward.
                self.step_count += 1;
                self.done = self.at_terminal();
                return Ok(0.0);
            }
            let (row, col) = self.solution.conflicts(vertex);
            for evicted in [row, col].into_iter().flatten() {
                self.solution.remove(evicted);
                self.raw_score -= self.oriented_view.marginal_gain(&self.solution, evicted);
            }
        } else if !self.solution.is_free(vertex) {
            return Err(Error::IllegalAction { vertex });
        }
        self.raw_score += self.oriented_view.marginal_gain(&self.solution, vertex);
        self.solution.insert(vertex)?;
        debug_assert!(
            (self.raw_score - objective_score(&self.oriented, &self.solution)).abs()
                <= 1e-9 * self.raw_score.abs().max(1.0),
            "incremental score drifted from full recomputation"
        );

        self.reg_score = self.penalized(self.raw_score, self.solution.len())?;
        self.step_count += 1;
        self.done = self.at_terminal();
        self.refresh_k_hat()?;

        let score = self.episode_score();
        if score > self.best_score {
            self.best_score = score;
            self.best_solution = self.solution.clone();
        }
        Ok(score - before)
    }

    fn penalized(&self, raw: f64, n: usize) -> Result<f64> {
        if !self.cfg.regularize || n == 0 {
            return Ok(if self.cfg.regularize { 0.0 } else { raw });
        }
        Ok(raw * self.cfg.reg_fn.eval(n)?)
    }

    fn at_terminal(&self) -> bool {
        if let Some(count) = self.cfg.inlier_count {
            if self.solution.len() >= count {
                return true;
            }
        }
        self.step_count >= self.max_steps
    }

    fn refresh_k_hat(&mut self) -> Result<()> {
        if !self.cfg.regularize {
            return Ok(());
        }
        let m = state_net_matrix(&self.oriented, &self.cfg, &self.solution)?.into_owned();
        let view = m.view();
        self.k_hat = Some((m, view));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solution::vertex_index;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_affinity(n1: usize, n2: usize, seed: u64) -> AffinityMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = n1 * n2;
        AffinityMatrix::new(
            n1,
            n2,
            {
                let mut data = vec![0.0; dim * dim];
                for p in 0..dim {
                    for q in p..dim {
                        let v = rng.gen::<f64>();
                        data[p * dim + q] = v;
                        data[q * dim + p] = v;
                    }
                }
                data
            },
            Sense::Maximize,
        )
        .unwrap()
    }

    /// 3x3 labels: rows 1..3 are i = 0..2, columns a..c are 0..2.
    fn v(i: usize, a: usize) -> usize {
        vertex_index(i, a, 3)
    }

    #[test]
    fn masking_excludes_row_and_column_sharers() {
        let k = random_affinity(3, 3, 1);
        let mut env = Env::new(&k, EnvConfig::default()).unwrap();
        assert_eq!(env.available_set().len(), 9);

        env.step(v(0, 0)).unwrap(); // select 1a
        let avail = env.available_set();
        assert_eq!(avail, vec![v(1, 1), v(1, 2), v(2, 1), v(2, 2)]); // 2b 2c 3b 3c
        for blocked in [v(0, 1), v(0, 2), v(1, 0), v(2, 0)] {
            assert!(!avail.contains(&blocked));
            let mut fresh = Env::new(&k, EnvConfig::default()).unwrap();
            fresh.step(v(0, 0)).unwrap();
            assert!(matches!(
                fresh.step(blocked),
                Err(Error::IllegalAction { .. })
            ));
        }
    }

    #[test]
    fn full_solution_has_no_available_vertices() {
        let k = random_affinity(3, 3, 2);
        let mut env = Env::new(&k, EnvConfig::default()).unwrap();
        for p in [v(0, 0), v(1, 1), v(2, 2)] {
            env.step(p).unwrap();
        }
        assert!(env.available_set().is_empty());
    }

    #[test]
    fn revocable_single_eviction() {
        // {1a, 2c} plus action 2b: 2c shares row 2 and is reverted.
        let k = random_affinity(3, 3, 3);
        let cfg = EnvConfig {
            revocable: true,
            ..EnvConfig::default()
        };
        let mut env = Env::new(&k, cfg).unwrap();
        env.step(v(0, 0)).unwrap();
        env.step(v(1, 2)).unwrap();
        env.step(v(1, 1)).unwrap();
        assert_eq!(env.solution().sorted_vertices(), vec![v(0, 0), v(1, 1)]);
    }

    #[test]
    fn revocable_double_eviction() {
        // {1a, 2c, 3b} plus action 2b: 2c shares the row, 3b the column;
        // both are reverted in one step.
        let k = random_affinity(3, 3, 4);
        let cfg = EnvConfig {
            revocable: true,
            ..EnvConfig::default()
        };
        let mut env = Env::new(&k, cfg).unwrap();
        env.step(v(0, 0)).unwrap();
        env.step(v(1, 2)).unwrap();
        env.step(v(2, 1)).unwrap();
        env.step(v(1, 1)).unwrap();
        assert_eq!(env.solution().sorted_vertices(), vec![v(0, 0), v(1, 1)]);
    }

    #[test]
    fn reselect_is_a_paid_no_op() {
        let k = random_affinity(3, 3, 5);
        let cfg = EnvConfig {
            revocable: true,
            ..EnvConfig::default()
        };
        let mut env = Env::new(&k, cfg).unwrap();
        env.step(v(0, 0)).unwrap();
        let before = env.solution().sorted_vertices();
        let steps = env.step_count();
        let reward = env.step(v(0, 0)).unwrap();
        assert_eq!(reward, 0.0);
        assert_eq!(env.solution().sorted_vertices(), before);
        assert_eq!(env.step_count(), steps + 1);
    }

    #[test]
    fn raw_rewards_telescope_in_both_modes() {
        for revocable in [false, true] {
            let k = random_affinity(4, 4, 6 + revocable as u64);
            let cfg = EnvConfig {
                revocable,
                max_steps: Some(40),
                ..EnvConfig::default()
            };
            let mut env = Env::new(&k, cfg).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut total = 0.0;
            for _ in 0..12 {
                if env.is_done() {
                    break;
                }
                let actions = env.legal_actions();
                let Some(&a) = actions.choose(&mut rng) else {
                    break;
                };
                total += env.step(a).unwrap();
                let full = objective_score(env.oriented(), env.solution());
                assert!((env.raw_score() - full).abs() <= 1e-9 * full.abs().max(1.0));
            }
            let expected = objective_score(env.oriented(), env.solution());
            assert!(
                (total - expected).abs() <= 1e-9 * expected.abs().max(1.0),
                "revocable={revocable}: {total} vs {expected}"
            );
        }
    }

    #[test]
    fn regularized_rewards_telescope_through_revocations() {
        let k = random_affinity(4, 4, 8);
        let cfg = EnvConfig {
            revocable: true,
            regularize: true,
            reg_fn: RegFn::F2Rational,
            max_steps: Some(40),
            ..EnvConfig::default()
        };
        let mut env = Env::new(&k, cfg.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut total = 0.0;
        let mut last_len = env.solution().len() as i64;
        for _ in 0..15 {
            if env.is_done() {
                break;
            }
            let a = *env.legal_actions().choose(&mut rng).unwrap();
            total += env.step(a).unwrap();
            let len = env.solution().len() as i64;
            assert!((len - last_len).abs() <= 1, "size jumped by more than 1");
            last_len = len;
        }
        let raw = objective_score(env.oriented(), env.solution());
        let expected = raw * cfg.reg_fn.eval(env.solution().len()).unwrap();
        assert!(
            (total - expected).abs() <= 1e-9 * expected.abs().max(1.0),
            "{total} vs {expected}"
        );
    }

    #[test]
    fn seeds_initialize_solution_and_score() {
        let k = random_affinity(3, 3, 11);
        let cfg = EnvConfig {
            seeds: vec![(0, 0)],
            ..EnvConfig::default()
        };
        let env = Env::new(&k, cfg).unwrap();
        assert_eq!(env.solution().sorted_vertices(), vec![v(0, 0)]);
        assert!((env.raw_score() - k.at(0, 0)).abs() <= 1e-12);

        let conflicted = EnvConfig {
            seeds: vec![(0, 0), (0, 1)],
            ..EnvConfig::default()
        };
        assert!(matches!(Env::new(&k, conflicted), Err(Error::Config(_))));
    }

    #[test]
    fn terminal_rules() {
        let k = random_affinity(3, 3, 12);

        // Basic mode with a full inlier count ends in exactly that many steps.
        let cfg = EnvConfig {
            inlier_count: Some(3),
            ..EnvConfig::default()
        };
        let mut env = Env::new(&k, cfg).unwrap();
        for (idx, p) in [v(0, 0), v(1, 1), v(2, 2)].into_iter().enumerate() {
            assert!(!env.is_done());
            env.step(p).unwrap();
            assert_eq!(env.is_done(), idx == 2);
        }
        assert!(matches!(env.step(v(0, 1)), Err(Error::Contract(_))));

        // Step budget fires without an inlier count.
        let cfg = EnvConfig {
            max_steps: Some(2),
            ..EnvConfig::default()
        };
        let mut env = Env::new(&k, cfg).unwrap();
        env.step(v(0, 0)).unwrap();
        assert!(!env.is_done());
        env.step(v(1, 1)).unwrap();
        assert!(env.is_done());

        // Seeds meeting the inlier count finish the episode at reset.
        let cfg = EnvConfig {
            inlier_count: Some(1),
            seeds: vec![(2, 2)],
            ..EnvConfig::default()
        };
        assert!(Env::new(&k, cfg).unwrap().is_done());
    }

    #[test]
    fn default_step_budgets_follow_mode() {
        let k = random_affinity(4, 3, 13);
        let basic = Env::new(&k, EnvConfig::default()).unwrap();
        assert_eq!(basic.max_steps(), 3);
        let revocable = Env::new(
            &k,
            EnvConfig {
                revocable: true,
                ..EnvConfig::default()
            },
        )
        .unwrap();
        assert_eq!(revocable.max_steps(), 9);
    }

    #[test]
    fn minimize_orients_rewards_and_reports_unflipped() {
        let k = AffinityMatrix::from_fn(2, 2, Sense::Minimize, |p, q| {
            if p == q {
                (p + 2) as f64
            } else {
                1.0
            }
        })
        .unwrap();
        let mut env = Env::new(&k, EnvConfig::default()).unwrap();
        let reward = env.step(0).unwrap();
        // Adding vertex 0 costs K[0][0] = 2 in the minimize sense, so the
        // oriented reward is -2 and the reported score stays at 2.
        assert!((reward + 2.0).abs() <= 1e-12);
        assert!((env.raw_score() + 2.0).abs() <= 1e-12);
        assert!((env.reported_raw_score() - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn regularization_swaps_the_net_matrix() {
        let k = random_affinity(3, 3, 14);
        let cfg = EnvConfig {
            regularize: true,
            reg_fn: RegFn::F2Rational,
            ..EnvConfig::default()
        };
        let mut env = Env::new(&k, cfg.clone()).unwrap();
        // Empty solution: Cx = 0, so the shift is zero and the matrices agree.
        assert_eq!(env.net_matrix().data(), env.oriented().data());

        env.step(v(0, 0)).unwrap();
        let expected = state_net_matrix(env.oriented(), &cfg, env.solution())
            .unwrap()
            .into_owned();
        assert_eq!(env.net_matrix().data(), expected.data());
        assert_ne!(env.net_matrix().data(), env.oriented().data());
        // The scoring view is untouched by the swap.
        assert!((env.raw_score() - objective_score(env.oriented(), env.solution())).abs() <= 1e-12);
    }

    #[test]
    fn best_tracking_follows_episode_score() {
        let k = AffinityMatrix::from_fn(2, 2, Sense::Maximize, |p, q| {
            // Vertex 3 alone is great, the full diagonal is worse.
            match (p, q) {
                (3, 3) => 5.0,
                (0, 0) => 1.0,
                (0, 3) | (3, 0) => -3.0,
                _ => 0.0,
            }
        })
        .unwrap();
        let cfg = EnvConfig {
            max_steps: Some(4),
            ..EnvConfig::default()
        };
        let mut env = Env::new(&k, cfg).unwrap();
        env.step(3).unwrap();
        assert!((env.best_score() - 5.0).abs() <= 1e-12);
        env.step(0).unwrap(); // total drops to 5 + 1 - 6 = 0
        assert!((env.raw_score() - 0.0).abs() <= 1e-12);
        assert_eq!(env.best_solution().sorted_vertices(), vec![3]);
        assert!((env.best_score() - 5.0).abs() <= 1e-12);
    }

    #[test]
    fn config_validation() {
        let k = random_affinity(3, 3, 15);
        for cfg in [
            EnvConfig {
                inlier_count: Some(0),
                ..EnvConfig::default()
            },
            EnvConfig {
                inlier_count: Some(4),
                ..EnvConfig::default()
            },
            EnvConfig {
                max_steps: Some(0),
                ..EnvConfig::default()
            },
            EnvConfig {
                regularize: true,
                fit_half_width: 0,
                ..EnvConfig::default()
            },
        ] {
            assert!(matches!(Env::new(&k, cfg), Err(Error::Config(_))));
        }
    }
}
