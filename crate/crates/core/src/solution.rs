//! Partial permutation solutions over the association graph.
//!
//! A candidate match between G1 node `i` and G2 node `a` is one vertex of the
//! association graph, flattened row-major: vertex `p = i * n2 + a`. A solution
//! is a conflict-free vertex set: no two selected vertices share a G1 node or a
//! G2 node, so it is exactly a partial permutation matrix.

use crate::error::{Error, Result};

/// Flatten a (G1 node, G2 node) pair to its association-graph vertex index.
#[inline]
pub fn vertex_index(i: usize, a: usize, n2: usize) -> usize {
    assert!(a < n2, "G2 node {a} out of range for n2 = {n2}");
    i * n2 + a
}

/// Inverse of [`vertex_index`].
#[inline]
pub fn vertex_unindex(p: usize, n2: usize) -> (usize, usize) {
    assert!(n2 > 0, "n2 must be positive");
    (p / n2, p % n2)
}

/// An insertion-ordered, conflict-free set of association-graph vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialSolution {
    n1: usize,
    n2: usize,
    selected: Vec<usize>,
    row_owner: Vec<Option<usize>>,
    col_owner: Vec<Option<usize>>,
}

impl PartialSolution {
    pub fn new(n1: usize, n2: usize) -> Self {
        assert!(n1 > 0 && n2 > 0, "graph sizes must be positive");
        PartialSolution {
            n1,
            n2,
            selected: Vec::new(),
            row_owner: vec![None; n1],
            col_owner: vec![None; n2],
        }
    }

    /// Build a solution from (i, a) pairs, failing on any conflict.
    pub fn from_pairs(n1: usize, n2: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut sol = PartialSolution::new(n1, n2);
        for &(i, a) in pairs {
            if i >= n1 || a >= n2 {
                return Err(Error::Contract(format!(
                    "pair ({i}, {a}) out of range for {n1}x{n2}"
                )));
            }
            sol.insert(vertex_index(i, a, n2))?;
        }
        Ok(sol)
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// Selected vertices in insertion order.
    pub fn vertices(&self) -> &[usize] {
        &self.selected
    }

    /// Selected vertices in ascending index order.
    pub fn sorted_vertices(&self) -> Vec<usize> {
        let mut v = self.selected.clone();
        v.sort_unstable();
        v
    }

    pub fn contains(&self, p: usize) -> bool {
        let (i, _) = vertex_unindex(p, self.n2);
        i < self.n1 && self.row_owner[i] == Some(p)
    }

    pub fn row_used(&self, i: usize) -> bool {
        self.row_owner[i].is_some()
    }

    pub fn col_used(&self, a: usize) -> bool {
        self.col_owner[a].is_some()
    }

    /// Selected vertices conflicting with `p`: the one sharing its G1 node and
    /// the one sharing its G2 node, if any. `p` itself counts as both.
    pub fn conflicts(&self, p: usize) -> (Option<usize>, Option<usize>) {
        let (i, a) = self.check_range(p);
        (self.row_owner[i], self.col_owner[a])
    }

    /// True if inserting `p` would keep the set conflict-free.
    pub fn is_free(&self, p: usize) -> bool {
        let (i, a) = self.check_range(p);
        self.row_owner[i].is_none() && self.col_owner[a].is_none()
    }

    pub fn insert(&mut self, p: usize) -> Result<()> {
        let (i, a) = self.check_range(p);
        if self.row_owner[i].is_some() || self.col_owner[a].is_some() {
            return Err(Error::Contract(format!(
                "vertex {p} conflicts with the current solution"
            )));
        }
        self.row_owner[i] = Some(p);
        self.col_owner[a] = Some(p);
        self.selected.push(p);
        Ok(())
    }

    /// Remove `p` if selected; returns whether it was present.
    pub fn remove(&mut self, p: usize) -> bool {
        if !self.contains(p) {
            return false;
        }
        let (i, a) = vertex_unindex(p, self.n2);
        self.row_owner[i] = None;
        self.col_owner[a] = None;
        let pos = self.selected.iter().position(|&q| q == p).unwrap();
        self.selected.remove(pos);
        true
    }

    /// 0/1 indicator over all n1*n2 vertices (the network's xVec).
    pub fn indicator(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n1 * self.n2];
        for &p in &self.selected {
            x[p] = 1.0;
        }
        x
    }

    fn check_range(&self, p: usize) -> (usize, usize) {
        assert!(
            p < self.n1 * self.n2,
            "vertex {p} out of range for {}x{} association graph",
            self.n1,
            self.n2
        );
        vertex_unindex(p, self.n2)
    }
}
