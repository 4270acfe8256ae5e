//! Synthetic planar matching instances with a planted correspondence.
//!
//! G1 nodes are uniform points in the unit square. G2 contains a scaled copy
//! of each G1 inlier (scale drawn uniformly from [1 - deltaS, 1 + deltaS])
//! plus fresh uniform outliers; G1 may carry outliers of its own. Edge
//! affinity compares pairwise distances through a Gaussian kernel,
//! exp(-(d1 - d2)^2 / sigma1); node affinities are zero. Both node orders are
//! shuffled so the planted matching is not the identity.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::affinity::{AffinityMatrix, Sense};
use crate::error::{Error, Result};
use crate::solution::PartialSolution;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub n_inliers: usize,
    pub n_outliers1: usize,
    pub n_outliers2: usize,
    /// Scale-noise half-width, in [0, 0.5].
    pub delta_s: f64,
    /// Gaussian kernel bandwidth, > 0.
    pub sigma1: f64,
    /// One scale draw per inlier (the default); false shares a single draw.
    pub per_point_scale: bool,
    pub rng_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_inliers: 10,
            n_outliers1: 0,
            n_outliers2: 0,
            delta_s: 0.0,
            sigma1: 0.05,
            per_point_scale: true,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub affinity: AffinityMatrix,
    /// Planted matching; G1/G2 outliers appear in no pair.
    pub gt: PartialSolution,
    /// Node coordinates in presentation (shuffled) order.
    pub g1_points: Vec<(f64, f64)>,
    pub g2_points: Vec<(f64, f64)>,
}

/// Generate one instance. Fully deterministic in the spec, including its
/// seed; the draw order is: G1 points, inlier scales, G2 outlier points,
/// G1 shuffle, G2 shuffle.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticInstance> {
    if !(0.0..=0.5).contains(&spec.delta_s) {
        return Err(Error::Config(format!(
            "deltaS must lie in [0, 0.5], got {}",
            spec.delta_s
        )));
    }
    if !(spec.sigma1 > 0.0) {
        return Err(Error::Config(format!(
            "sigma1 must be positive, got {}",
            spec.sigma1
        )));
    }
    if spec.n_inliers == 0 {
        return Err(Error::Config("need at least one inlier".into()));
    }
    let n1 = spec.n_inliers + spec.n_outliers1;
    let n2 = spec.n_inliers + spec.n_outliers2;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);

    let mut g1_orig: Vec<(f64, f64)> = Vec::with_capacity(n1);
    for _ in 0..n1 {
        let x: f64 = rng.gen();
        let y: f64 = rng.gen();
        g1_orig.push((x, y));
    }

    let shared_scale = 1.0 + spec.delta_s * (2.0 * rng.gen::<f64>() - 1.0);
    let mut g2_orig: Vec<(f64, f64)> = Vec::with_capacity(n2);
    for k in 0..spec.n_inliers {
        let s = if spec.per_point_scale {
            1.0 + spec.delta_s * (2.0 * rng.gen::<f64>() - 1.0)
        } else {
            shared_scale
        };
        let (x, y) = g1_orig[k];
        g2_orig.push((s * x, s * y));
    }
    for _ in 0..spec.n_outliers2 {
        let x: f64 = rng.gen();
        let y: f64 = rng.gen();
        g2_orig.push((x, y));
    }

    // perm[pos] = original node shown at that position.
    let mut perm1: Vec<usize> = (0..n1).collect();
    perm1.shuffle(&mut rng);
    let mut perm2: Vec<usize> = (0..n2).collect();
    perm2.shuffle(&mut rng);

    let g1_points: Vec<(f64, f64)> = perm1.iter().map(|&k| g1_orig[k]).collect();
    let g2_points: Vec<(f64, f64)> = perm2.iter().map(|&k| g2_orig[k]).collect();

    let mut pos1 = vec![0usize; n1];
    for (pos, &k) in perm1.iter().enumerate() {
        pos1[k] = pos;
    }
    let mut pos2 = vec![0usize; n2];
    for (pos, &k) in perm2.iter().enumerate() {
        pos2[k] = pos;
    }
    let pairs: Vec<(usize, usize)> = (0..spec.n_inliers).map(|k| (pos1[k], pos2[k])).collect();
    let gt = PartialSolution::from_pairs(n1, n2, &pairs)?;

    let dist = |pts: &[(f64, f64)], u: usize, v: usize| -> f64 {
        let (ax, ay) = pts[u];
        let (bx, by) = pts[v];
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    };
    let affinity = AffinityMatrix::from_fn(n1, n2, Sense::Maximize, |p, q| {
        let (i, a) = (p / n2, p % n2);
        let (j, b) = (q / n2, q % n2);
        if i == j || a == b {
            return 0.0;
        }
        let d1 = dist(&g1_points, i, j);
        let d2 = dist(&g2_points, a, b);
        (-(d1 - d2).powi(2) / spec.sigma1).exp()
    })?;

    Ok(SyntheticInstance {
        affinity,
        gt,
        g1_points,
        g2_points,
    })
}
