//! Solver toolkit for weighted graph matching in quadratic (Lawler) form.
//!
//! The centerpiece is a revocable deep-Q matching agent: it walks the
//! association graph of a pairwise affinity matrix, may displace earlier
//! picks instead of being locked in by them, and can fold a cardinality
//! penalty into the affinities to resist over-matching in the presence of
//! outliers. Around it sit instance sources (QAP text files, synthetic
//! geometric generators, a checksummed on-disk matrix format), exact and
//! spectral reference solvers, and evaluation metrics.

pub mod affinity;
pub mod agent;
pub mod env;
pub mod error;
pub mod instances;
pub mod metrics;
pub mod neural;
pub mod oracle;
pub mod regularizer;
pub mod solution;
mod textio;

pub use affinity::{objective_from_set, objective_score, AffinityMatrix, AssociationView, Sense};
pub use agent::replay::{ReplayMemory, ReplaySnapshot, Transition};
pub use agent::{
    epsilon, select_action, solve, train, EpisodeLog, Mode, TrainConfig, TrainItem, TrainOutcome,
    TrainState, Trainer,
};
pub use env::{state_net_matrix, Env, EnvConfig};
pub use error::{Error, Result};
pub use metrics::{f1_metrics, objective_ratio, optimal_gap, MatchResult};
pub use neural::checkpoint::{read_checkpoint, write_checkpoint};
pub use neural::{backward, forward, forward_q, init_params, sgd_step};
pub use neural::{ForwardCache, Gradients, H4Variant, NetInput, QNetParams};
pub use oracle::{brute_force, spectral_match, spectral_match_capped};
pub use regularizer::{quad_fit, regularized_affinity, regularized_objective, QuadFit, RegFn};
pub use solution::{vertex_index, vertex_unindex, PartialSolution};
