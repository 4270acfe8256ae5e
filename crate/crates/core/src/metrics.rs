//! Matching-quality metrics and the solver result record.

use crate::affinity::{objective_score, AffinityMatrix};
use crate::error::{Error, Result};
use crate::solution::PartialSolution;

/// Recall, precision, and F1 of a predicted vertex set against ground truth.
///
/// Degenerate denominators yield 0 rather than an error: empty ground truth
/// gives recall 0, an empty prediction gives precision 0, and F1 is 0 whenever
/// recall + precision is 0.
pub fn f1_metrics(pred: &PartialSolution, gt: &PartialSolution) -> (f64, f64, f64) {
    assert_eq!(
        (pred.n1(), pred.n2()),
        (gt.n1(), gt.n2()),
        "prediction and ground truth must share dimensions"
    );
    let hits = pred.vertices().iter().filter(|&&p| gt.contains(p)).count() as f64;
    let recall = if gt.is_empty() { 0.0 } else { hits / gt.len() as f64 };
    let precision = if pred.is_empty() {
        0.0
    } else {
        hits / pred.len() as f64
    };
    let f1 = if recall + precision == 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    };
    (recall, precision, f1)
}

/// objective(pred) / objective(gt); fails when the ground-truth score is 0.
pub fn objective_ratio(
    k: &AffinityMatrix,
    pred: &PartialSolution,
    gt: &PartialSolution,
) -> Result<f64> {
    let denom = objective_score(k, gt);
    if denom == 0.0 {
        return Err(Error::DivisionUndefined(
            "ground-truth objective is zero".into(),
        ));
    }
    Ok(objective_score(k, pred) / denom)
}

/// (predicted - optimal) / optimal for minimization instances with a known
/// positive optimum.
pub fn optimal_gap(pred_score: f64, optimal: f64) -> Result<f64> {
    if optimal <= 0.0 {
        return Err(Error::Contract(format!(
            "optimal value must be positive, got {optimal}"
        )));
    }
    Ok((pred_score - optimal) / optimal)
}

/// Output of a solver run.
#[derive(Debug, Clone)]
pub struct MatchResult {
    pub solution: PartialSolution,
    /// Objective of `solution` under the instance's original matrix,
    /// recomputed from scratch at construction.
    pub raw_score: f64,
    /// Regularized objective, when the run used affinity regularization.
    pub reg_score: Option<f64>,
    /// Environment steps (or solver iterations) consumed.
    pub steps: usize,
    /// Wall-clock seconds.
    pub wall_time: f64,
}

impl MatchResult {
    pub fn new(
        k: &AffinityMatrix,
        solution: PartialSolution,
        reg_score: Option<f64>,
        steps: usize,
        wall_time: f64,
    ) -> Self {
        let raw_score = objective_score(k, &solution);
        MatchResult {
            solution,
            raw_score,
            reg_score,
            steps,
            wall_time,
        }
    }
}
