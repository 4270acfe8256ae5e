//! Cardinality penalties against over-matching, and their quadratic lift
//! into the affinity matrix.
//!
//! A penalty f(n) discounts the raw objective by the solution size n, so the
//! regularized objective is J(U) * f(|U|). Because the solver consumes
//! affinities rather than objectives, 1 - f(n) is fitted by a quadratic
//! g(n) = a*n^2 + b*n + c around the current size; a*Cx and b*Cx then fold
//! into the matrix as a constant shift and a diagonal shift. The leftover
//! c*Cx term is a constant at fixed Cx and is dropped from the matrix.

use crate::affinity::{objective_score, AffinityMatrix};
use crate::error::{Error, Result};
use crate::solution::PartialSolution;

/// Penalty function selector. The names follow the CLI tokens f1/f2/f3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RegFn {
    /// f1(n) = (3*max(n1,n2) - n) / (3*max(n1,n2)), instance-size aware.
    F1Linear { n1: usize, n2: usize },
    /// f2(n) = (1 + n) / (1 + 3n).
    F2Rational,
    /// f3(n) = 1 / n^2, undefined at n = 0.
    F3InverseSquare,
}

impl RegFn {
    /// Parse a CLI token; f1 needs the instance sizes.
    pub fn parse(token: &str, n1: usize, n2: usize) -> Result<RegFn> {
        match token {
            "f1" => Ok(RegFn::F1Linear { n1, n2 }),
            "f2" => Ok(RegFn::F2Rational),
            "f3" => Ok(RegFn::F3InverseSquare),
            other => Err(Error::Config(format!(
                "unknown penalty function {other:?}, expected f1, f2, or f3"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RegFn::F1Linear { .. } => "f1",
            RegFn::F2Rational => "f2",
            RegFn::F3InverseSquare => "f3",
        }
    }

    /// Smallest solution size the penalty is defined for.
    pub fn min_domain(&self) -> usize {
        match self {
            RegFn::F3InverseSquare => 1,
            _ => 0,
        }
    }

    /// Evaluate f(n).
    pub fn eval(&self, n: usize) -> Result<f64> {
        match *self {
            RegFn::F1Linear { n1, n2 } => {
                let m = 3 * n1.max(n2);
                if n > m {
                    return Err(Error::Domain(format!(
                        "f1 is defined for n <= {m}, got {n}"
                    )));
                }
                Ok((m as f64 - n as f64) / m as f64)
            }
            RegFn::F2Rational => Ok((1.0 + n as f64) / (1.0 + 3.0 * n as f64)),
            RegFn::F3InverseSquare => {
                if n == 0 {
                    return Err(Error::Domain("f3 is undefined at n = 0".into()));
                }
                Ok(1.0 / (n as f64 * n as f64))
            }
        }
    }
}

/// J(U) * f(|U|). The empty set scores 0 without consulting f, so it stays
/// well-defined even for f3.
pub fn regularized_objective(
    k: &AffinityMatrix,
    sol: &PartialSolution,
    f: &RegFn,
) -> Result<f64> {
    if sol.is_empty() {
        return Ok(0.0);
    }
    Ok(objective_score(k, sol) * f.eval(sol.len())?)
}

/// Quadratic fit of 1 - f(n) over a window of integer sizes.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Inclusive window of integer sizes the fit was taken over.
    pub lo: usize,
    pub hi: usize,
    /// max over integer n in [lo, hi] of |a*n^2 + b*n + c - (1 - f(n))|.
    pub max_residual: f64,
}

impl QuadFit {
    pub fn g(&self, n: f64) -> f64 {
        self.a * n * n + self.b * n + self.c
    }
}

/// Default fit-window half-width around the current solution size.
pub const DEFAULT_FIT_HALF_WIDTH: usize = 2;

/// Least-squares fit of 1 - f(n) on [currentSize - hw, currentSize + hw],
/// clipped below at f's domain; when clipping for f3 shrinks the window, the
/// upper end extends so the point count stays at 2*hw + 1.
pub fn quad_fit(f: &RegFn, current_size: usize, half_width: usize) -> Result<QuadFit> {
    let lo_nat = current_size.saturating_sub(half_width);
    let mut lo = lo_nat.max(f.min_domain());
    let mut hi = current_size + half_width;
    if *f == RegFn::F3InverseSquare && lo_nat < f.min_domain() {
        hi = hi.max(lo + 2 * half_width);
    }
    if lo > hi {
        lo = hi;
    }
    let count = hi - lo + 1;
    if count < 3 {
        return Err(Error::UnderdeterminedFit(format!(
            "window [{lo}, {hi}] has {count} points, need at least 3"
        )));
    }
    let mut pts = Vec::with_capacity(count);
    for n in lo..=hi {
        pts.push((n as f64, 1.0 - f.eval(n)?));
    }
    let (a, b, c) = fit_quadratic(&pts)?;
    let mut max_residual: f64 = 0.0;
    for &(n, t) in &pts {
        max_residual = max_residual.max((a * n * n + b * n + c - t).abs());
    }
    Ok(QuadFit {
        a,
        b,
        c,
        lo,
        hi,
        max_residual,
    })
}

/// Least-squares (a, b, c) minimizing sum (a*x^2 + b*x + c - y)^2 via the
/// 3x3 normal equations with partial pivoting.
pub fn fit_quadratic(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 3 {
        return Err(Error::UnderdeterminedFit(format!(
            "{} points cannot determine a quadratic",
            points.len()
        )));
    }
    let mut s = [0.0f64; 5]; // sums of x^0 .. x^4
    let mut t = [0.0f64; 3]; // sums of y * x^0 .. y * x^2
    for &(x, y) in points {
        let mut xp = 1.0;
        for sk in s.iter_mut() {
            *sk += xp;
            xp *= x;
        }
        t[0] += y;
        t[1] += y * x;
        t[2] += y * x * x;
    }
    // Unknown order (a, b, c); row i is d/d(unknown_i) of the squared error.
    let mut m = [
        [s[4], s[3], s[2], t[2]],
        [s[3], s[2], s[1], t[1]],
        [s[2], s[1], s[0], t[0]],
    ];
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&r1, &r2| m[r1][col].abs().total_cmp(&m[r2][col].abs()))
            .unwrap();
        if m[pivot][col].abs() < 1e-12 {
            return Err(Error::UnderdeterminedFit(
                "normal equations are singular".into(),
            ));
        }
        m.swap(col, pivot);
        for row in 0..3 {
            if row == col {
                continue;
            }
            let factor = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= factor * m[col][k];
            }
        }
    }
    Ok((m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]))
}

/// K_hat = K - a*Cx*ones - b*Cx*I: every entry drops by a*Cx and each
/// diagonal entry additionally by b*Cx. Sense is inherited from K.
pub fn regularized_affinity(k: &AffinityMatrix, cx: f64, fit: &QuadFit) -> AffinityMatrix {
    let dim = k.dim();
    let all_shift = fit.a * cx;
    let diag_shift = fit.b * cx;
    let mut out = k.clone();
    for p in 0..dim {
        for q in 0..dim {
            let mut v = k.at(p, q) - all_shift;
            if p == q {
                v -= diag_shift;
            }
            out.set(p, q, v);
        }
    }
    out
}
