//! Dense affinity matrices in Lawler form and their association-graph view.
//!
//! For graphs with n1 and n2 nodes the matrix K is (n1*n2) x (n1*n2); entry
//! K[p][q] with p = i*n2 + a and q = j*n2 + b scores picking both candidate
//! matches (i, a) and (j, b). Diagonal entries are node-to-node affinities,
//! off-diagonal entries edge-to-edge affinities. The objective of a solution U
//! is vec(X)' K vec(X), equivalently a sum over selected vertices and ordered
//! pairs of distinct selected vertices.

use crate::error::{Error, Result};
use crate::solution::{vertex_unindex, PartialSolution};

/// Optimization direction of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

impl Sense {
    /// +1 for Maximize, -1 for Minimize: internal scores are `signum * raw`
    /// so that "larger is better" holds everywhere downstream.
    pub fn signum(self) -> f64 {
        match self {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sense::Maximize => "max",
            Sense::Minimize => "min",
        }
    }

    pub fn parse(s: &str) -> Result<Sense> {
        match s {
            "max" | "maximize" => Ok(Sense::Maximize),
            "min" | "minimize" => Ok(Sense::Minimize),
            other => Err(Error::Config(format!("unknown sense {other:?}"))),
        }
    }
}

/// Symmetric dense affinity matrix over association-graph vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n1: usize,
    n2: usize,
    dim: usize,
    data: Vec<f64>,
    sense: Sense,
}

/// Asymmetry above this bound is reported when a matrix is symmetrized.
pub const SYMMETRY_WARN_TOL: f64 = 1e-9;

impl AffinityMatrix {
    /// Build from row-major entries, checking finiteness and symmetrizing.
    ///
    /// Asymmetric input is averaged with its transpose, which preserves the
    /// quadratic form; asymmetry beyond [`SYMMETRY_WARN_TOL`] is logged.
    pub fn new(n1: usize, n2: usize, data: Vec<f64>, sense: Sense) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::Contract("graph sizes must be positive".into()));
        }
        let dim = n1 * n2;
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!(
                "non-finite affinity entry at flat index {bad}"
            )));
        }
        let mut m = AffinityMatrix {
            n1,
            n2,
            dim,
            data,
            sense,
        };
        let asym = m.symmetrize();
        if asym > SYMMETRY_WARN_TOL {
            log::warn!("affinity matrix symmetrized; max asymmetry {asym:.3e}");
        }
        Ok(m)
    }

    pub fn from_fn(
        n1: usize,
        n2: usize,
        sense: Sense,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let dim = n1 * n2;
        let mut data = vec![0.0; dim * dim];
        for p in 0..dim {
            for q in 0..dim {
                data[p * dim + q] = f(p, q);
            }
        }
        AffinityMatrix::new(n1, n2, data, sense)
    }

    pub fn zeros(n1: usize, n2: usize, sense: Sense) -> Self {
        let dim = n1 * n2;
        AffinityMatrix {
            n1,
            n2,
            dim,
            data: vec![0.0; dim * dim],
            sense,
        }
    }

    /// Average with the transpose in place; returns the max asymmetry seen.
    /// The midpoint is computed as `a + (b - a) / 2`, which is exact when the
    /// matrix is already symmetric.
    fn symmetrize(&mut self) -> f64 {
        let dim = self.dim;
        let mut max_asym: f64 = 0.0;
        for p in 0..dim {
            for q in (p + 1)..dim {
                let a = self.data[p * dim + q];
                let b = self.data[q * dim + p];
                let diff = (a - b).abs();
                if diff > 0.0 {
                    max_asym = max_asym.max(diff);
                    let mid = a + (b - a) / 2.0;
                    self.data[p * dim + q] = mid;
                    self.data[q * dim + p] = mid;
                }
            }
        }
        max_asym
    }

    #[inline]
    pub fn at(&self, p: usize, q: usize) -> f64 {
        self.data[p * self.dim + q]
    }

    /// Set K[p][q] and K[q][p].
    pub fn set(&mut self, p: usize, q: usize, v: f64) {
        assert!(v.is_finite(), "affinity entries must be finite");
        self.data[p * self.dim + q] = v;
        self.data[q * self.dim + p] = v;
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    /// Number of association-graph vertices, n1*n2.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn set_sense(&mut self, sense: Sense) {
        self.sense = sense;
    }

    /// Copy with every entry negated (sense is preserved; callers that
    /// orient a Minimize instance for an internal maximizer flip it there).
    pub fn negated(&self) -> AffinityMatrix {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = -*v;
        }
        out
    }

    /// Precompute the association-graph view of this matrix.
    pub fn view(&self) -> AssociationView {
        AssociationView::new(self)
    }
}

/// The affinity matrix reorganized as a vertex-weighted, edge-weighted
/// association graph, with the neighbor aggregates the embedding needs.
///
/// Vertices p = ia and q = jb are adjacent iff i != j and a != b, so every
/// vertex has exactly (n1-1)*(n2-1) neighbors.
#[derive(Debug, Clone)]
pub struct AssociationView {
    n1: usize,
    n2: usize,
    dim: usize,
    /// Vertex weights: the diagonal of K.
    f: Vec<f64>,
    /// Edge weights: off-diagonal K with a zeroed diagonal, dense row-major.
    w: Vec<f64>,
    degree: usize,
    /// Per vertex, sum over neighbors of max(w, 0) and of min(w, 0); these
    /// let the edge-term of the embedding avoid an O(dim^2) pass per forward.
    pos_nbr_sum: Vec<f64>,
    neg_nbr_sum: Vec<f64>,
    /// A.f: per vertex, sum of neighbor vertex weights.
    nbr_f_sum: Vec<f64>,
}

impl AssociationView {
    pub fn new(k: &AffinityMatrix) -> Self {
        let (n1, n2, dim) = (k.n1, k.n2, k.dim);
        let mut f = vec![0.0; dim];
        let mut w = k.data.clone();
        for p in 0..dim {
            f[p] = k.at(p, p);
            w[p * dim + p] = 0.0;
        }
        let mut pos = vec![0.0; dim];
        let mut neg = vec![0.0; dim];
        for p in 0..dim {
            let (i, a) = vertex_unindex(p, n2);
            let row = &w[p * dim..(p + 1) * dim];
            let (mut ps, mut ns) = (0.0, 0.0);
            for (q, &wpq) in row.iter().enumerate() {
                let (j, b) = vertex_unindex(q, n2);
                if j == i || b == a {
                    continue;
                }
                if wpq > 0.0 {
                    ps += wpq;
                } else {
                    ns += wpq;
                }
            }
            pos[p] = ps;
            neg[p] = ns;
        }
        let mut view = AssociationView {
            n1,
            n2,
            dim,
            f,
            w,
            degree: (n1 - 1) * (n2 - 1),
            pos_nbr_sum: pos,
            neg_nbr_sum: neg,
            nbr_f_sum: vec![0.0; dim],
        };
        view.nbr_f_sum = view.neighbor_sum_vec(&view.f);
        view
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    #[inline]
    pub fn vertex_weight(&self, p: usize) -> f64 {
        self.f[p]
    }

    #[inline]
    pub fn edge_weight(&self, p: usize, q: usize) -> f64 {
        self.w[p * self.dim + q]
    }

    pub fn pos_nbr_sum(&self) -> &[f64] {
        &self.pos_nbr_sum
    }

    pub fn neg_nbr_sum(&self) -> &[f64] {
        &self.neg_nbr_sum
    }

    pub fn nbr_f_sum(&self) -> &[f64] {
        &self.nbr_f_sum
    }

    /// Adjacent iff the pairs use distinct G1 nodes and distinct G2 nodes.
    #[inline]
    pub fn adjacent(&self, p: usize, q: usize) -> bool {
        let (i, a) = vertex_unindex(p, self.n2);
        let (j, b) = vertex_unindex(q, self.n2);
        i != j && a != b
    }

    /// (A.x)[p] for the implicit adjacency A, in O(dim) total via
    /// inclusion-exclusion over the row and column groups:
    /// sum over neighbors = total - rowGroup(i) - colGroup(a) + x[p].
    pub fn neighbor_sum_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "vector length must equal n1*n2");
        let (n1, n2) = (self.n1, self.n2);
        let mut row_sums = vec![0.0; n1];
        let mut col_sums = vec![0.0; n2];
        let mut total = 0.0;
        for i in 0..n1 {
            for a in 0..n2 {
                let v = x[i * n2 + a];
                row_sums[i] += v;
                col_sums[a] += v;
                total += v;
            }
        }
        let mut out = vec![0.0; self.dim];
        for i in 0..n1 {
            for a in 0..n2 {
                let p = i * n2 + a;
                out[p] = total - row_sums[i] - col_sums[a] + x[p];
            }
        }
        out
    }

    /// A.E for a dim x d row-major matrix, one inclusion-exclusion pass per
    /// column, O(dim*d) total.
    pub fn neighbor_sum_mat(&self, e: &[f64], d: usize) -> Vec<f64> {
        assert_eq!(e.len(), self.dim * d, "matrix must be dim x d");
        let (n1, n2) = (self.n1, self.n2);
        let mut row_sums = vec![0.0; n1 * d];
        let mut col_sums = vec![0.0; n2 * d];
        let mut total = vec![0.0; d];
        for i in 0..n1 {
            for a in 0..n2 {
                let base = (i * n2 + a) * d;
                for k in 0..d {
                    let v = e[base + k];
                    row_sums[i * d + k] += v;
                    col_sums[a * d + k] += v;
                    total[k] += v;
                }
            }
        }
        let mut out = vec![0.0; self.dim * d];
        for i in 0..n1 {
            for a in 0..n2 {
                let base = (i * n2 + a) * d;
                for k in 0..d {
                    out[base + k] =
                        total[k] - row_sums[i * d + k] - col_sums[a * d + k] + e[base + k];
                }
            }
        }
        out
    }

    /// Change in the vertex-set objective from adding `p` to `sol`.
    /// Every selected vertex is adjacent to `p` because the solution stays
    /// conflict-free, so the pair terms are plain edge weights.
    pub fn marginal_gain(&self, sol: &PartialSolution, p: usize) -> f64 {
        debug_assert!(sol.is_free(p), "marginal gain queried for a conflicting vertex");
        let mut pair = 0.0;
        for &q in sol.vertices() {
            pair += self.edge_weight(p, q);
        }
        self.f[p] + 2.0 * pair
    }
}

/// vec(X)' K vec(X) for the 0/1 assignment encoded by `sol`: the sum of
/// selected diagonal entries plus all ordered off-diagonal pairs.
pub fn objective_score(k: &AffinityMatrix, sol: &PartialSolution) -> f64 {
    assert_eq!(
        (sol.n1(), sol.n2()),
        (k.n1, k.n2),
        "solution and matrix dimensions must agree"
    );
    let vs = sol.vertices();
    let mut total = 0.0;
    for &p in vs {
        total += k.at(p, p);
    }
    for &p in vs {
        for &q in vs {
            if p != q {
                total += k.at(p, q);
            }
        }
    }
    total
}

/// The same objective computed from the association-graph view:
/// sum of selected vertex weights plus ordered pairs of edge weights.
pub fn objective_from_set(view: &AssociationView, sol: &PartialSolution) -> f64 {
    assert_eq!(
        (sol.n1(), sol.n2()),
        (view.n1, view.n2),
        "solution and view dimensions must agree"
    );
    let vs = sol.vertices();
    let mut total = 0.0;
    for &p in vs {
        total += view.f[p];
    }
    for &p in vs {
        for &q in vs {
            if p != q {
                total += view.edge_weight(p, q);
            }
        }
    }
    total
}
