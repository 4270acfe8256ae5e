//! Exact and classical reference solvers.
//!
//! `brute_force` enumerates every conflict-free vertex set (optionally of one
//! fixed cardinality) and is the ground truth the learned solver is judged
//! against at small sizes. `spectral_match` is the classical relaxation
//! baseline: leading eigenvector of the nonnegative affinity matrix, greedily
//! discretized to a permutation.

use std::time::Instant;

use crate::affinity::{AffinityMatrix, AssociationView, Sense};
use crate::error::{Error, Result};
use crate::metrics::MatchResult;
use crate::regularizer::RegFn;
use crate::solution::PartialSolution;

/// Candidate-count ceiling for exhaustive enumeration.
pub const BRUTE_FORCE_BOUND: f64 = 1e7;

/// Number of conflict-free sets of exactly `k` pairs:
/// C(n1,k)*C(n2,k)*k! = prod_{t<k} (n1-t)*(n2-t)/(t+1).
fn candidates_at(n1: usize, n2: usize, k: usize) -> f64 {
    let mut total = 1.0f64;
    for t in 0..k {
        total *= (n1 - t) as f64 * (n2 - t) as f64 / (t + 1) as f64;
    }
    total
}

/// Total candidates enumerated for an optional cardinality constraint.
pub fn search_space(n1: usize, n2: usize, cardinality: Option<usize>) -> f64 {
    match cardinality {
        Some(k) => candidates_at(n1, n2, k),
        None => (0..=n1.min(n2)).map(|k| candidates_at(n1, n2, k)).sum(),
    }
}

/// Exhaustive argbest over conflict-free vertex sets.
///
/// With `cardinality` set, only sets of exactly that size compete; otherwise
/// all sizes from 0 to min(n1, n2) do. With `reg` set, candidates are ranked
/// by the regularized objective J(U)*f(|U|) (the empty set scores 0),
/// otherwise by the raw objective. The direction follows `k.sense()`. Ties
/// break toward the lexicographically smallest sorted vertex list.
pub fn brute_force(
    k: &AffinityMatrix,
    cardinality: Option<usize>,
    reg: Option<&RegFn>,
) -> Result<(PartialSolution, f64)> {
    let (n1, n2) = (k.n1(), k.n2());
    if let Some(c) = cardinality {
        if c > n1.min(n2) {
            return Err(Error::Contract(format!(
                "cardinality {c} exceeds min({n1}, {n2})"
            )));
        }
    }
    let bound = search_space(n1, n2, cardinality);
    if bound > BRUTE_FORCE_BOUND {
        return Err(Error::SearchSpaceExceeded {
            bound,
            limit: BRUTE_FORCE_BOUND,
        });
    }
    let view = k.view();
    let mut search = Search {
        view: &view,
        reg,
        sense: k.sense(),
        cardinality,
        sol: PartialSolution::new(n1, n2),
        raw: 0.0,
        best: None,
    };
    search.consider();
    search.descend(0);
    let (sol, score) = search.best.expect("at least one candidate is always scored");
    Ok((sol, score))
}

struct Search<'a> {
    view: &'a AssociationView,
    reg: Option<&'a RegFn>,
    sense: Sense,
    cardinality: Option<usize>,
    sol: PartialSolution,
    raw: f64,
    best: Option<(PartialSolution, f64)>,
}

impl Search<'_> {
    /// Score the current set if it competes, keeping the running best.
    fn consider(&mut self) {
        if let Some(c) = self.cardinality {
            if self.sol.len() != c {
                return;
            }
        }
        let score = match self.reg {
            None => self.raw,
            Some(f) => {
                if self.sol.is_empty() {
                    0.0
                } else {
                    // Domain holds: |U| >= 1 here and f is finite there.
                    self.raw * f.eval(self.sol.len()).expect("penalty domain")
                }
            }
        };
        let better = match &self.best {
            None => true,
            Some((best_sol, best_score)) => {
                let diff = (score - best_score) * self.sense.signum();
                // DFS visits vertex lists in increasing lexicographic order of
                // their row-sorted form, so on an exact tie the incumbent wins.
                if diff > 0.0 {
                    true
                } else if diff < 0.0 {
                    false
                } else {
                    self.sol.vertices() < best_sol.vertices()
                }
            }
        };
        if better {
            self.best = Some((self.sol.clone(), score));
        }
    }

    fn descend(&mut self, next_row: usize) {
        let (n1, n2) = (self.view.n1(), self.view.n2());
        if let Some(c) = self.cardinality {
            if self.sol.len() == c {
                return;
            }
            // Not enough rows left to reach the target size.
            if n1 - next_row < c - self.sol.len() {
                return;
            }
        }
        for i in next_row..n1 {
            for a in 0..n2 {
                if self.sol.col_used(a) {
                    continue;
                }
                let p = i * n2 + a;
                let gain = self.view.marginal_gain(&self.sol, p);
                self.sol.insert(p).expect("row and column are free");
                self.raw += gain;
                self.consider();
                self.descend(i + 1);
                self.sol.remove(p);
                self.raw -= gain;
            }
        }
    }
}

/// Result of the symmetric power iteration.
#[derive(Debug, Clone)]
pub struct PowerIteration {
    /// Final (unit) iterate.
    pub v: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
    /// Rayleigh quotient after each multiplication, for diagnostics.
    pub rayleigh: Vec<f64>,
}

pub const POWER_MAX_ITERS: usize = 200;
pub const POWER_TOL: f64 = 1e-10;

/// Power iteration on a dense symmetric nonnegative matrix, started from the
/// uniform positive vector. Stops when the iterate moves less than `tol` in
/// l2 norm or after `max_iters` rounds.
pub fn power_iteration(m: &[f64], dim: usize, max_iters: usize, tol: f64) -> PowerIteration {
    assert_eq!(m.len(), dim * dim);
    let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut rayleigh = Vec::new();
    let mut iters = 0;
    let mut converged = false;
    while iters < max_iters {
        let mut u = vec![0.0; dim];
        for p in 0..dim {
            let row = &m[p * dim..(p + 1) * dim];
            let mut acc = 0.0;
            for (q, &mpq) in row.iter().enumerate() {
                acc += mpq * v[q];
            }
            u[p] = acc;
        }
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        iters += 1;
        if norm == 0.0 {
            // The matrix annihilates the iterate (e.g. all-zero input);
            // the uniform vector is as good an answer as any.
            converged = true;
            break;
        }
        for x in &mut u {
            *x /= norm;
        }
        // v is unit, so the Rayleigh quotient of the previous iterate is
        // v'Mv = v'(norm * u).
        rayleigh.push(norm * v.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>());
        let delta = v
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        v = u;
        if delta <= tol {
            converged = true;
            break;
        }
    }
    PowerIteration {
        v,
        iters,
        converged,
        rayleigh,
    }
}

/// Spectral matching baseline over the full matrix.
pub fn spectral_match(k: &AffinityMatrix) -> MatchResult {
    spectral_match_capped(k, None)
}

/// Spectral matching with an optional cap on the number of emitted pairs.
///
/// The working matrix is the sign-oriented affinity (negated for Minimize)
/// clamped entrywise at zero, so the Perron iterate stays nonnegative. The
/// eigenvector is discretized greedily: repeatedly take the largest entry
/// among conflict-free vertices (ties to the lowest index) until the matching
/// is maximal or the cap is hit.
pub fn spectral_match_capped(k: &AffinityMatrix, cap: Option<usize>) -> MatchResult {
    let start = Instant::now();
    let dim = k.dim();
    let sign = k.sense().signum();
    let mut m = vec![0.0; dim * dim];
    let mut clamped = false;
    for p in 0..dim {
        for q in 0..dim {
            let v = sign * k.at(p, q);
            if v > 0.0 {
                m[p * dim + q] = v;
            } else if v < 0.0 {
                clamped = true;
            }
        }
    }
    if clamped {
        log::debug!("spectral baseline clamped negative oriented entries to zero");
    }
    let power = power_iteration(&m, dim, POWER_MAX_ITERS, POWER_TOL);
    if !power.converged {
        log::warn!(
            "power iteration did not converge within {POWER_MAX_ITERS} iterations; using the last iterate"
        );
    }

    let mut sol = PartialSolution::new(k.n1(), k.n2());
    let limit = cap.unwrap_or(usize::MAX);
    while sol.len() < limit {
        let mut best: Option<usize> = None;
        for p in 0..dim {
            if sol.is_free(p) && best.map_or(true, |b| power.v[p] > power.v[b]) {
                best = Some(p);
            }
        }
        match best {
            Some(p) => sol.insert(p).expect("chosen vertex is conflict-free"),
            None => break,
        }
    }
    MatchResult::new(k, sol, None, power.iters, start.elapsed().as_secs_f64())
}
