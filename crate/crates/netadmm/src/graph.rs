//! Network topology and the constraint matrices of the consensus splitting.
//!
//! A network is a simple undirected graph whose every edge {i, j} is tracked
//! as the two directed links (i, j) and (j, i). The directed-link list is
//! kept in lexicographic order; that order fixes the block layout of every
//! per-link quantity in the solvers (the z and mu blocks).
//!
//! The splitting constraints `x = y` and `x_j = z_ij` are encoded by the
//! block matrices A (one identity block per directed link, in column j for
//! link (i, j)) and B = [I; A]. Both are stored sparsely as the
//! link-to-target-node map; `B^T B` is block diagonal with block j equal to
//! `(1 + deg(j)) I`.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub enum GraphError {
    InvalidArgument(String),
    /// Power iteration failed to converge or disagreed with the closed
    /// form; this indicates a broken constraint-matrix construction.
    SpectralNormDiagnostic(String),
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            GraphError::SpectralNormDiagnostic(msg) => {
                write!(f, "spectral norm diagnostic: {msg}")
            }
        }
    }
}

impl std::error::Error for GraphError {}

/// Deterministic named topologies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    Line,
    Star,
    Complete,
    Cycle,
}

/// Undirected simple graph with directed-link bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    n: usize,
    undirected_edges: Vec<(usize, usize)>,
    directed_links: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    /// Link ids whose source is node i, ascending by target.
    links_from: Vec<Vec<usize>>,
    /// Link ids whose target is node i, ascending by source.
    links_to: Vec<Vec<usize>>,
}

impl Network {
    /// Builds a network from undirected edges. Edges may be given in either
    /// endpoint order; self-loops, duplicates and out-of-range endpoints are
    /// rejected.
    pub fn from_undirected_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::InvalidArgument(
                "network needs at least one node".into(),
            ));
        }
        let mut normalized: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(GraphError::InvalidArgument(format!(
                    "self-loop at node {a}"
                )));
            }
            if a >= n || b >= n {
                return Err(GraphError::InvalidArgument(format!(
                    "edge ({a},{b}) out of range for n={n}"
                )));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        if normalized.windows(2).any(|w| w[0] == w[1]) {
            return Err(GraphError::InvalidArgument(
                "duplicate undirected edge".into(),
            ));
        }

        let mut directed: Vec<(usize, usize)> = normalized
            .iter()
            .flat_map(|&(a, b)| [(a, b), (b, a)])
            .collect();
        directed.sort_unstable();

        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &normalized {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for adj in &mut neighbors {
            adj.sort_unstable();
        }

        let mut links_from = vec![Vec::new(); n];
        let mut links_to = vec![Vec::new(); n];
        for (k, &(i, j)) in directed.iter().enumerate() {
            links_from[i].push(k);
            links_to[j].push(k);
        }

        Ok(Network {
            n,
            undirected_edges: normalized,
            directed_links: directed,
            neighbors,
            links_from,
            links_to,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Number of directed links (twice the undirected edge count).
    pub fn link_count(&self) -> usize {
        self.directed_links.len()
    }

    pub fn undirected_edges(&self) -> &[(usize, usize)] {
        &self.undirected_edges
    }

    /// Directed links in canonical (lexicographic) order.
    pub fn directed_links(&self) -> &[(usize, usize)] {
        &self.directed_links
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    /// Link ids with source i, i.e. the blocks z_ij / mu_ij owned by node i.
    pub fn links_from(&self, i: usize) -> &[usize] {
        &self.links_from[i]
    }

    /// Link ids with target i, i.e. the blocks z_li / mu_li that reach
    /// node i as neighbor messages.
    pub fn links_to(&self, i: usize) -> &[usize] {
        &self.links_to[i]
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in self.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.n
    }
}

/// Builds one of the deterministic named topologies. The star is centered
/// at node 0 and the line is the path 0-1-...-(n-1).
pub fn build_topology(kind: TopologyKind, n: usize) -> Result<Network, GraphError> {
    let min_n = match kind {
        TopologyKind::Cycle => 3,
        _ => 2,
    };
    if n < min_n {
        return Err(GraphError::InvalidArgument(format!(
            "{kind:?} topology needs at least {min_n} nodes, got {n}"
        )));
    }
    let edges: Vec<(usize, usize)> = match kind {
        TopologyKind::Line => (0..n - 1).map(|i| (i, i + 1)).collect(),
        TopologyKind::Star => (1..n).map(|i| (0, i)).collect(),
        TopologyKind::Complete => (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect(),
        TopologyKind::Cycle => (0..n).map(|i| (i, (i + 1) % n)).collect(),
    };
    Network::from_undirected_edges(n, &edges)
}

/// Cycle over n nodes plus `extra_links` distinct random chords, sampled
/// uniformly without replacement from the non-edges. Deterministic given
/// the seed.
pub fn build_small_world(n: usize, extra_links: usize, seed: u64) -> Result<Network, GraphError> {
    if n < 3 {
        return Err(GraphError::InvalidArgument(format!(
            "small-world network needs at least 3 nodes, got {n}"
        )));
    }
    let max_extra = n * (n - 1) / 2 - n;
    if extra_links > max_extra {
        return Err(GraphError::InvalidArgument(format!(
            "cannot add {extra_links} links to a {n}-cycle (max {max_extra})"
        )));
    }
    let mut edges: Vec<(usize, usize)> = (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            (i.min(j), i.max(j))
        })
        .collect();
    let cycle: std::collections::HashSet<(usize, usize)> = edges.iter().copied().collect();
    let mut non_edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|e| !cycle.contains(e))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    non_edges.shuffle(&mut rng);
    edges.extend(non_edges.into_iter().take(extra_links));
    Network::from_undirected_edges(n, &edges)
}

/// Connected random graph hitting the edge budget `round(n * avg_degree) / 2`
/// exactly: a random attachment tree first, then uniformly random extra
/// edges with resampling on duplicates. Deterministic given the seed.
pub fn build_random_avg_degree(
    n: usize,
    avg_degree: f64,
    seed: u64,
) -> Result<Network, GraphError> {
    if n < 2 {
        return Err(GraphError::InvalidArgument(format!(
            "random network needs at least 2 nodes, got {n}"
        )));
    }
    if avg_degree < 1.0 || avg_degree >= n as f64 {
        return Err(GraphError::InvalidArgument(format!(
            "average degree {avg_degree} not in [1, {n})"
        )));
    }
    let total_degree = (n as f64 * avg_degree).round() as usize;
    if total_degree % 2 != 0 {
        return Err(GraphError::InvalidArgument(format!(
            "n * avg_degree = {total_degree} must round to an even integer"
        )));
    }
    let target_edges = total_degree / 2;
    let max_edges = n * (n - 1) / 2;
    if target_edges < n - 1 || target_edges > max_edges {
        return Err(GraphError::InvalidArgument(format!(
            "edge budget {target_edges} cannot yield a connected simple graph on {n} nodes"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut present = std::collections::HashSet::new();
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(target_edges);
    for k in 1..n {
        let a = order[k];
        let b = order[rng.random_range(0..k)];
        let e = (a.min(b), a.max(b));
        present.insert(e);
        edges.push(e);
    }
    while edges.len() < target_edges {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        let e = (a.min(b), a.max(b));
        if present.insert(e) {
            edges.push(e);
        }
    }
    Network::from_undirected_edges(n, &edges)
}

/// Sparse representation of the splitting constraint matrices A and
/// B = [I; A] over p-dimensional blocks.
#[derive(Debug, Clone)]
pub struct ConstraintMatrices {
    p: usize,
    n: usize,
    /// Target node j of each directed link k: block row k of A has its
    /// identity block in block column j.
    link_target: Vec<usize>,
    degrees: Vec<usize>,
}

pub fn constraint_matrices(net: &Network, p: usize) -> Result<ConstraintMatrices, GraphError> {
    if p == 0 {
        return Err(GraphError::InvalidArgument(
            "block dimension p must be at least 1".into(),
        ));
    }
    Ok(ConstraintMatrices {
        p,
        n: net.node_count(),
        link_target: net.directed_links().iter().map(|&(_, j)| j).collect(),
        degrees: (0..net.node_count()).map(|i| net.degree(i)).collect(),
    })
}

impl ConstraintMatrices {
    pub fn block_dim(&self) -> usize {
        self.p
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn link_count(&self) -> usize {
        self.link_target.len()
    }

    /// Dimension of the stacked node variable x.
    pub fn x_dim(&self) -> usize {
        self.n * self.p
    }

    /// Dimension of the stacked splitting variable w = (y, z).
    pub fn w_dim(&self) -> usize {
        (self.n + self.link_target.len()) * self.p
    }

    /// `B x = [x; A x]` where block k of `A x` is the block of x at the
    /// target node of link k.
    pub fn apply_b(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.x_dim(), "apply_b: dimension mismatch");
        let p = self.p;
        let mut out = Vec::with_capacity(self.w_dim());
        out.extend_from_slice(x);
        for &j in &self.link_target {
            out.extend_from_slice(&x[j * p..(j + 1) * p]);
        }
        out
    }

    /// `B^T v` for a stacked v = (v_y, v_z): block j is
    /// `v_y[j] + sum over links targeting j of v_z[k]`.
    pub fn apply_b_transpose(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(
            v.len(),
            self.w_dim(),
            "apply_b_transpose: dimension mismatch"
        );
        let p = self.p;
        let mut out = v[..self.x_dim()].to_vec();
        for (k, &j) in self.link_target.iter().enumerate() {
            let zk = &v[(self.n + k) * p..(self.n + k + 1) * p];
            linalg::axpy(1.0, zk, &mut out[j * p..(j + 1) * p]);
        }
        out
    }

    pub fn apply_btb(&self, x: &[f64]) -> Vec<f64> {
        let bx = self.apply_b(x);
        self.apply_b_transpose(&bx)
    }

    /// The scalar diagonal of `B^T B`: entry j is `1 + deg(j)`, repeated
    /// over the p coordinates of the block.
    pub fn btb_diag_blocks(&self) -> Vec<f64> {
        self.degrees.iter().map(|&d| 1.0 + d as f64).collect()
    }

    /// Materializes B densely; intended for tests on small networks.
    pub fn dense_b(&self) -> Vec<Vec<f64>> {
        let p = self.p;
        let rows = self.w_dim();
        let cols = self.x_dim();
        let mut b = vec![vec![0.0; cols]; rows];
        for i in 0..self.x_dim() {
            b[i][i] = 1.0;
        }
        for (k, &j) in self.link_target.iter().enumerate() {
            for q in 0..p {
                b[(self.n + k) * p + q][j * p + q] = 1.0;
            }
        }
        b
    }
}

const POWER_ITERATION_CAP: usize = 10_000;

/// Spectral norm of B, computed two ways: the closed form
/// `sqrt(max_j (1 + deg(j)))` from the block-diagonal structure of `B^T B`,
/// and power iteration on `B^T B` started from the all-ones vector. The two
/// must agree to the given relative tolerance; the closed form is returned.
pub fn spectral_norm_b(cm: &ConstraintMatrices, tol: f64) -> Result<f64, GraphError> {
    if tol <= 0.0 {
        return Err(GraphError::InvalidArgument(
            "tolerance must be positive".into(),
        ));
    }
    let closed_form = cm
        .btb_diag_blocks()
        .iter()
        .fold(0.0_f64, |m, &d| m.max(d))
        .sqrt();

    let dim = cm.x_dim() as f64;
    let mut v: Vec<f64> = vec![1.0 / dim.sqrt(); cm.x_dim()];
    let mut converged = false;
    let mut eigen = 0.0;
    for _ in 0..POWER_ITERATION_CAP {
        let av = cm.apply_btb(&v);
        eigen = linalg::dot(&v, &av);
        // for symmetric operators the eigenvalue error is bounded by the
        // residual norm, so this stop certifies the requested accuracy
        let mut residual = av.clone();
        linalg::axpy(-eigen, &v, &mut residual);
        if linalg::norm2(&residual) <= 0.1 * tol * eigen.abs() {
            converged = true;
            break;
        }
        let scale = linalg::norm2(&av);
        if scale == 0.0 {
            return Err(GraphError::SpectralNormDiagnostic(
                "B^T B annihilated the iterate".into(),
            ));
        }
        v = av.iter().map(|x| x / scale).collect();
    }
    if !converged {
        return Err(GraphError::SpectralNormDiagnostic(format!(
            "power iteration did not converge within {POWER_ITERATION_CAP} iterations"
        )));
    }
    let power = eigen.sqrt();
    if (power - closed_form).abs() > tol * closed_form {
        return Err(GraphError::SpectralNormDiagnostic(format!(
            "power iteration ({power}) disagrees with closed form ({closed_form})"
        )));
    }
    Ok(closed_form)
}
