//! Cost-function oracles and the derived network-level constants.
//!
//! Every oracle supplies values, gradients, and its own smoothness /
//! strong-convexity constants. The library never estimates constants: the
//! rate theory needs them exactly, so oracles declare them and the test
//! suite cross-checks the declarations by sampling.

use std::fmt;

use crate::graph::{spectral_norm_b, GraphError, Network};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemError {
    InvalidArgument(String),
    DimensionMismatch { expected: usize, got: usize },
}

impl fmt::Display for ProblemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemError::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            ProblemError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
        }
    }
}

impl std::error::Error for ProblemError {}

/// Borrowed view of a quadratic cost `1/2 v^T H v + b^T v`, exposed by
/// oracles that have one so exact subproblem solvers can use it.
pub struct QuadraticParts<'a> {
    pub hessian: &'a [Vec<f64>],
    pub linear: &'a [f64],
}

/// Cost at a single node, a function of that node's p-vector only.
pub trait NodeCost: Send + Sync {
    fn eval(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;
    /// Gradient Lipschitz constant declared by the oracle.
    fn lipschitz(&self) -> f64;
    /// Strong-convexity modulus; 0 means merely convex.
    fn strong_convexity(&self) -> f64;
    fn quadratic_parts(&self) -> Option<QuadraticParts<'_>> {
        None
    }
}

/// Cost on a directed link, a function of the stacked 2p-vector of its two
/// endpoint blocks. Constants are declared on the stacked argument.
pub trait LinkCost: Send + Sync {
    fn eval(&self, x_i: &[f64], x_j: &[f64]) -> f64;
    /// Returns the pair of partial gradients (d/dx_i, d/dx_j).
    fn grad(&self, x_i: &[f64], x_j: &[f64]) -> (Vec<f64>, Vec<f64>);
    fn lipschitz(&self) -> f64;
    fn strong_convexity(&self) -> f64;
    fn quadratic_parts(&self) -> Option<QuadraticParts<'_>> {
        None
    }
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(a)) without overflow for large a.
fn log1p_exp(a: f64) -> f64 {
    if a > 30.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

/// Logistic loss over a node's labeled samples:
/// `f(x) = sum_l log(1 + exp(-t_l * u_l^T x))`.
pub struct LogisticNodeCost {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
    lipschitz: f64,
}

impl LogisticNodeCost {
    /// Labels must be -1 or +1. The declared Lipschitz constant is
    /// `1/4 * sum_l ||u_l||^2`.
    pub fn new(samples: Vec<(Vec<f64>, i8)>) -> Result<Self, ProblemError> {
        if samples.is_empty() {
            return Err(ProblemError::InvalidArgument(
                "logistic cost needs at least one sample".into(),
            ));
        }
        let dim = samples[0].0.len();
        let mut features = Vec::with_capacity(samples.len());
        let mut labels = Vec::with_capacity(samples.len());
        let mut lipschitz = 0.0;
        for (u, t) in samples {
            if u.len() != dim {
                return Err(ProblemError::DimensionMismatch {
                    expected: dim,
                    got: u.len(),
                });
            }
            if t != 1 && t != -1 {
                return Err(ProblemError::InvalidArgument(format!(
                    "label must be -1 or +1, got {t}"
                )));
            }
            lipschitz += 0.25 * linalg::dot(&u, &u);
            features.push(u);
            labels.push(t as f64);
        }
        Ok(LogisticNodeCost {
            features,
            labels,
            lipschitz,
        })
    }
}

impl NodeCost for LogisticNodeCost {
    fn eval(&self, x: &[f64]) -> f64 {
        self.features
            .iter()
            .zip(&self.labels)
            .map(|(u, t)| log1p_exp(-t * linalg::dot(u, x)))
            .sum()
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for (u, t) in self.features.iter().zip(&self.labels) {
            let s = sigmoid(-t * linalg::dot(u, x));
            linalg::axpy(-t * s, u, &mut g);
        }
        g
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn strong_convexity(&self) -> f64 {
        0.0
    }
}

/// Quadratic coupling `g(x_i, x_j) = beta * ||x_i - x_j||^2`.
///
/// The stacked Hessian is `2*beta*[[I,-I],[-I,I]]`: Lipschitz constant
/// `4*beta`, strong convexity 0 (singular along x_i = x_j).
pub struct QuadraticLinkCost {
    beta: f64,
    hessian: Vec<Vec<f64>>,
    linear: Vec<f64>,
}

impl QuadraticLinkCost {
    pub fn new(beta_reg: f64, p: usize) -> Result<Self, ProblemError> {
        if beta_reg <= 0.0 {
            return Err(ProblemError::InvalidArgument(format!(
                "beta_reg must be positive, got {beta_reg}"
            )));
        }
        let mut hessian = vec![vec![0.0; 2 * p]; 2 * p];
        for q in 0..p {
            hessian[q][q] = 2.0 * beta_reg;
            hessian[p + q][p + q] = 2.0 * beta_reg;
            hessian[q][p + q] = -2.0 * beta_reg;
            hessian[p + q][q] = -2.0 * beta_reg;
        }
        Ok(QuadraticLinkCost {
            beta: beta_reg,
            hessian,
            linear: vec![0.0; 2 * p],
        })
    }
}

impl LinkCost for QuadraticLinkCost {
    fn eval(&self, x_i: &[f64], x_j: &[f64]) -> f64 {
        let d = linalg::dist2(x_i, x_j);
        self.beta * d * d
    }

    fn grad(&self, x_i: &[f64], x_j: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let gi: Vec<f64> = x_i
            .iter()
            .zip(x_j)
            .map(|(a, b)| 2.0 * self.beta * (a - b))
            .collect();
        let gj = gi.iter().map(|v| -v).collect();
        (gi, gj)
    }

    fn lipschitz(&self) -> f64 {
        4.0 * self.beta
    }

    fn strong_convexity(&self) -> f64 {
        0.0
    }

    fn quadratic_parts(&self) -> Option<QuadraticParts<'_>> {
        Some(QuadraticParts {
            hessian: &self.hessian,
            linear: &self.linear,
        })
    }
}

/// Node cost `1/2 x^T Q x + b^T x` with Q symmetric positive definite.
/// Declared constants are the extreme eigenvalues of Q.
pub struct QuadraticNodeCost {
    q: Vec<Vec<f64>>,
    b: Vec<f64>,
    lipschitz: f64,
    strong_convexity: f64,
}

impl QuadraticNodeCost {
    pub fn new(q: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self, ProblemError> {
        if q.len() != b.len() || q.iter().any(|row| row.len() != b.len()) {
            return Err(ProblemError::DimensionMismatch {
                expected: b.len(),
                got: q.len(),
            });
        }
        if !linalg::is_symmetric(&q, 1e-12) {
            return Err(ProblemError::InvalidArgument(
                "quadratic node cost matrix must be symmetric".into(),
            ));
        }
        let eig = linalg::sym_eigenvalues(&q);
        let (min, max) = (eig[0], eig[eig.len() - 1]);
        if min <= 0.0 {
            return Err(ProblemError::InvalidArgument(format!(
                "quadratic node cost matrix must be positive definite (min eigenvalue {min})"
            )));
        }
        Ok(QuadraticNodeCost {
            q,
            b,
            lipschitz: max,
            strong_convexity: min,
        })
    }
}

impl NodeCost for QuadraticNodeCost {
    fn eval(&self, x: &[f64]) -> f64 {
        0.5 * linalg::dot(x, &linalg::mat_vec(&self.q, x)) + linalg::dot(&self.b, x)
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = linalg::mat_vec(&self.q, x);
        linalg::axpy(1.0, &self.b, &mut g);
        g
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    fn quadratic_parts(&self) -> Option<QuadraticParts<'_>> {
        Some(QuadraticParts {
            hessian: &self.q,
            linear: &self.b,
        })
    }
}

/// Link cost `1/2 v^T H v + b^T v` on the stacked v = [x_i; x_j], with H
/// symmetric positive semidefinite. Declared constants are the extreme
/// eigenvalues of H; a strictly positive minimum eigenvalue makes the link
/// strongly convex on the stacked argument.
pub struct QuadraticFormLinkCost {
    p: usize,
    h: Vec<Vec<f64>>,
    b: Vec<f64>,
    lipschitz: f64,
    strong_convexity: f64,
}

impl QuadraticFormLinkCost {
    pub fn new(h: Vec<Vec<f64>>, b: Vec<f64>, p: usize) -> Result<Self, ProblemError> {
        if h.len() != 2 * p || b.len() != 2 * p || h.iter().any(|row| row.len() != 2 * p) {
            return Err(ProblemError::DimensionMismatch {
                expected: 2 * p,
                got: h.len(),
            });
        }
        if !linalg::is_symmetric(&h, 1e-12) {
            return Err(ProblemError::InvalidArgument(
                "quadratic link cost matrix must be symmetric".into(),
            ));
        }
        let eig = linalg::sym_eigenvalues(&h);
        let (min, max) = (eig[0], eig[eig.len() - 1]);
        if min < -1e-12 * max.abs().max(1.0) {
            return Err(ProblemError::InvalidArgument(format!(
                "quadratic link cost matrix must be positive semidefinite (min eigenvalue {min})"
            )));
        }
        Ok(QuadraticFormLinkCost {
            p,
            h,
            b,
            lipschitz: max,
            strong_convexity: min.max(0.0),
        })
    }

    fn stacked(&self, x_i: &[f64], x_j: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.p);
        v.extend_from_slice(x_i);
        v.extend_from_slice(x_j);
        v
    }
}

impl LinkCost for QuadraticFormLinkCost {
    fn eval(&self, x_i: &[f64], x_j: &[f64]) -> f64 {
        let v = self.stacked(x_i, x_j);
        0.5 * linalg::dot(&v, &linalg::mat_vec(&self.h, &v)) + linalg::dot(&self.b, &v)
    }

    fn grad(&self, x_i: &[f64], x_j: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let v = self.stacked(x_i, x_j);
        let mut g = linalg::mat_vec(&self.h, &v);
        linalg::axpy(1.0, &self.b, &mut g);
        let gj = g.split_off(self.p);
        (g, gj)
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    fn quadratic_parts(&self) -> Option<QuadraticParts<'_>> {
        Some(QuadraticParts {
            hessian: &self.h,
            linear: &self.b,
        })
    }
}

/// A network together with one node oracle per node and one link oracle per
/// directed link (in canonical link order). The oracles for (i, j) and
/// (j, i) are independent.
pub struct ProblemInstance {
    network: Network,
    p: usize,
    node_costs: Vec<Box<dyn NodeCost>>,
    link_costs: Vec<Box<dyn LinkCost>>,
}

impl ProblemInstance {
    pub fn new(
        network: Network,
        p: usize,
        node_costs: Vec<Box<dyn NodeCost>>,
        link_costs: Vec<Box<dyn LinkCost>>,
    ) -> Result<Self, ProblemError> {
        if node_costs.len() != network.node_count() {
            return Err(ProblemError::DimensionMismatch {
                expected: network.node_count(),
                got: node_costs.len(),
            });
        }
        if link_costs.len() != network.link_count() {
            return Err(ProblemError::DimensionMismatch {
                expected: network.link_count(),
                got: link_costs.len(),
            });
        }
        if p == 0 {
            return Err(ProblemError::InvalidArgument(
                "block dimension p must be at least 1".into(),
            ));
        }
        Ok(ProblemInstance {
            network,
            p,
            node_costs,
            link_costs,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn block_dim(&self) -> usize {
        self.p
    }

    pub fn node_cost(&self, i: usize) -> &dyn NodeCost {
        self.node_costs[i].as_ref()
    }

    pub fn link_cost(&self, k: usize) -> &dyn LinkCost {
        self.link_costs[k].as_ref()
    }

    pub fn x_dim(&self) -> usize {
        self.network.node_count() * self.p
    }

    pub fn w_dim(&self) -> usize {
        (self.network.node_count() + self.network.link_count()) * self.p
    }

    pub fn block<'a>(&self, v: &'a [f64], i: usize) -> &'a [f64] {
        &v[i * self.p..(i + 1) * self.p]
    }

    /// Gradient of `f(x) = sum_i f_i(x_i)` as one stacked np-vector.
    pub fn grad_f_stacked(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.x_dim());
        let mut g = Vec::with_capacity(x.len());
        for i in 0..self.network.node_count() {
            g.extend(self.node_costs[i].grad(self.block(x, i)));
        }
        g
    }

    /// Gradient of `g(y, z) = sum over links (i,j) of g_ij(y_i, z_ij)`,
    /// returned as the (y-part, z-part) pair of stacked vectors. Link
    /// contributions accumulate in canonical link order.
    pub fn grad_g_stacked(&self, y: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(y.len(), self.x_dim());
        assert_eq!(z.len(), self.network.link_count() * self.p);
        let p = self.p;
        let mut gy = vec![0.0; y.len()];
        let mut gz = vec![0.0; z.len()];
        for (k, &(i, _)) in self.network.directed_links().iter().enumerate() {
            let (gi, gk) = self.link_costs[k].grad(self.block(y, i), self.block(z, k));
            linalg::axpy(1.0, &gi, &mut gy[i * p..(i + 1) * p]);
            gz[k * p..(k + 1) * p].copy_from_slice(&gk);
        }
        (gy, gz)
    }

    /// Total network cost at a per-node decision vector: each directed link
    /// (i, j) contributes `g_ij(x_i, x_j)`.
    pub fn total_cost(&self, x: &[f64]) -> Result<f64, ProblemError> {
        if x.len() != self.x_dim() {
            return Err(ProblemError::DimensionMismatch {
                expected: self.x_dim(),
                got: x.len(),
            });
        }
        let mut total = 0.0;
        for i in 0..self.network.node_count() {
            total += self.node_costs[i].eval(self.block(x, i));
        }
        for (k, &(i, j)) in self.network.directed_links().iter().enumerate() {
            total += self.link_costs[k].eval(self.block(x, i), self.block(x, j));
        }
        Ok(total)
    }
}

/// The constants that drive the convergence theory: the worst declared
/// gradient Lipschitz constant L, the maximum degree K, the stacked-gradient
/// constant `M = L * sqrt(K^2 + K)`, the weakest declared strong-convexity
/// modulus, and the spectral norm of B.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct NetworkConstants {
    pub lipschitz: f64,
    pub max_degree: usize,
    pub stacked_lipschitz: f64,
    pub strong_convexity: f64,
    pub b_spectral_norm: f64,
}

pub fn network_constants(inst: &ProblemInstance) -> Result<NetworkConstants, GraphError> {
    let net = inst.network();
    let lipschitz = (0..net.node_count())
        .map(|i| inst.node_cost(i).lipschitz())
        .chain((0..net.link_count()).map(|k| inst.link_cost(k).lipschitz()))
        .fold(0.0_f64, f64::max);
    let strong_convexity = (0..net.node_count())
        .map(|i| inst.node_cost(i).strong_convexity())
        .chain((0..net.link_count()).map(|k| inst.link_cost(k).strong_convexity()))
        .fold(f64::INFINITY, f64::min);
    let max_degree = net.max_degree();
    let k = max_degree as f64;
    let cm = crate::graph::constraint_matrices(net, inst.block_dim())?;
    Ok(NetworkConstants {
        lipschitz,
        max_degree,
        stacked_lipschitz: (lipschitz * lipschitz * (k * k + k)).sqrt(),
        strong_convexity: if strong_convexity.is_finite() {
            strong_convexity
        } else {
            0.0
        },
        b_spectral_norm: spectral_norm_b(&cm, 1e-10)?,
    })
}
