//! QAP flow/distance text files and their lift to Lawler form.
//!
//! The file format is bare whitespace-separated numbers: a size n, then n*n
//! flow entries, then n*n distance entries, all row-major. The induced
//! minimization objective for a permutation s is
//! sum_{i,j} flow[i][j] * dist[s(i)][s(j)].

use super::Instance;
use crate::affinity::{AffinityMatrix, Sense};
use crate::error::{Error, Result};

/// A quadratic assignment instance in flow/distance form.
#[derive(Debug, Clone)]
pub struct KbInstance {
    pub name: String,
    pub n: usize,
    /// n*n row-major.
    pub flow: Vec<f64>,
    /// n*n row-major.
    pub dist: Vec<f64>,
    pub known_optimal: Option<f64>,
}

impl KbInstance {
    /// Objective of a permutation given as position -> location.
    pub fn permutation_cost(&self, perm: &[usize]) -> f64 {
        assert_eq!(perm.len(), self.n);
        let n = self.n;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                total += self.flow[i * n + j] * self.dist[perm[i] * n + perm[j]];
            }
        }
        total
    }
}

/// Parse the whitespace-separated flow/distance format. Anything after the
/// final distance entry is ignored; missing or malformed tokens fail with
/// the byte offset where parsing stopped.
pub fn parse_qaplib(text: &str, name: &str) -> Result<KbInstance> {
    let mut tokens = Tokens::new(text);
    let (off, tok) = tokens.next().ok_or_else(|| Error::Parse {
        offset: text.len(),
        msg: "empty input, expected a size".into(),
    })?;
    let n: usize = tok.parse().map_err(|_| Error::Parse {
        offset: off,
        msg: format!("size token {tok:?} is not a non-negative integer"),
    })?;
    if n < 2 {
        return Err(Error::InvalidInstance(format!(
            "instance size must be at least 2, got {n}"
        )));
    }
    let mut read_matrix = |what: &str| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n * n);
        for idx in 0..n * n {
            let (off, tok) = tokens.next().ok_or_else(|| Error::Parse {
                offset: text.len(),
                msg: format!("unexpected end of input in {what} entry {idx} of {}", n * n),
            })?;
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                offset: off,
                msg: format!("{what} entry {idx} {tok:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidInstance(format!(
                    "{what} entry {idx} is not finite"
                )));
            }
            out.push(v);
        }
        Ok(out)
    };
    let flow = read_matrix("flow")?;
    let dist = read_matrix("distance")?;
    Ok(KbInstance {
        name: name.to_string(),
        n,
        flow,
        dist,
        known_optimal: None,
    })
}

/// Lift flow/distance form to a Lawler affinity: K[ia][jb] =
/// flow[i][j] * dist[a][b], symmetrized, with Minimize sense. The quadratic
/// form of any permutation matrix equals the flow/distance objective.
pub fn kb_to_lawler(kb: &KbInstance) -> Result<Instance> {
    let n = kb.n;
    let affinity = AffinityMatrix::from_fn(n, n, Sense::Minimize, |p, q| {
        let (i, a) = (p / n, p % n);
        let (j, b) = (q / n, q % n);
        kb.flow[i * n + j] * kb.dist[a * n + b]
    })?;
    Ok(Instance {
        name: kb.name.clone(),
        affinity,
        gt: None,
        known_optimal: kb.known_optimal,
    })
}

/// Whitespace tokenizer that reports byte offsets.
struct Tokens<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        Tokens { text, pos: 0 }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let bytes = self.text.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < bytes.len() && !bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        Some((start, &self.text[start..self.pos]))
    }
}
