//! Centralized ground truth: the optimal primal/dual point, the first-order
//! optimality residuals, and the weighted norm the descent diagnostics use.
//!
//! The primal optimum minimizes the substituted objective
//! `F(x) = sum_i f_i(x_i) + sum_{(i,j)} g_ij(x_i, x_j)` by accelerated
//! gradient descent with a fixed step derived from the declared constants;
//! the dual reference is then determined analytically: `w* = B x*` and
//! `alpha* = grad g(w*)`, which leaves `grad f(x*) + B^T alpha*` as the one
//! residual the solve must drive to zero.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::ConstraintMatrices;
use crate::linalg;
use crate::problem::ProblemInstance;

#[derive(Debug, Clone)]
pub enum ReferenceError {
    IterationCap {
        grad_norm: f64,
        best: Vec<f64>,
    },
    /// The analytically constructed dual point failed its residual check,
    /// which indicates inconsistent oracles or constraint matrices.
    Inconsistent {
        residual: f64,
        bound: f64,
    },
}

impl fmt::Display for ReferenceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReferenceError::IterationCap { grad_norm, .. } => write!(
                f,
                "centralized solve hit its iteration cap (gradient norm {grad_norm:e})"
            ),
            ReferenceError::Inconsistent { residual, bound } => write!(
                f,
                "dual construction inconsistent: residual {residual:e} exceeds {bound:e}"
            ),
        }
    }
}

impl std::error::Error for ReferenceError {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    #[serde(default = "default_reference_tol")]
    pub tol: f64,
    #[serde(default = "default_reference_iters")]
    pub max_iters: usize,
}

fn default_reference_tol() -> f64 {
    1e-10
}

fn default_reference_iters() -> usize {
    1_000_000
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            tol: default_reference_tol(),
            max_iters: default_reference_iters(),
        }
    }
}

/// The optimal primal/dual point. Serialized floats round-trip exactly
/// (shortest-representation JSON), so persisted points are binary-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalPoint {
    pub x_star: Vec<f64>,
    pub w_star: Vec<f64>,
    pub alpha_star: Vec<f64>,
    pub grad_norm_at_solution: f64,
    pub kkt_residuals: [f64; 3],
}

impl OptimalPoint {
    /// u* = (x*, w*, alpha*) as one flat vector.
    pub fn stacked(&self) -> Vec<f64> {
        let mut u =
            Vec::with_capacity(self.x_star.len() + self.w_star.len() + self.alpha_star.len());
        u.extend_from_slice(&self.x_star);
        u.extend_from_slice(&self.w_star);
        u.extend_from_slice(&self.alpha_star);
        u
    }
}

/// Gradient of the substituted objective F at a per-node decision vector.
fn grad_total(inst: &ProblemInstance, cm: &ConstraintMatrices, x: &[f64]) -> Vec<f64> {
    let bx = cm.apply_b(x);
    let (gy, gz) = split_w(inst, &bx);
    let (gy, gz) = inst.grad_g_stacked(gy, gz);
    let mut gw = gy;
    gw.extend(gz);
    let mut g = inst.grad_f_stacked(x);
    linalg::axpy(1.0, &cm.apply_b_transpose(&gw), &mut g);
    g
}

fn split_w<'a>(inst: &ProblemInstance, w: &'a [f64]) -> (&'a [f64], &'a [f64]) {
    w.split_at(inst.x_dim())
}

/// Conservative Lipschitz constant for grad F from the declared per-oracle
/// constants: the node block plus `2 K L_link` for the edge sum, since each
/// link touches two node blocks.
fn total_lipschitz(inst: &ProblemInstance) -> f64 {
    let net = inst.network();
    let node = (0..net.node_count())
        .map(|i| inst.node_cost(i).lipschitz())
        .fold(0.0_f64, f64::max);
    let link = (0..net.link_count())
        .map(|k| inst.link_cost(k).lipschitz())
        .fold(0.0_f64, f64::max);
    node + 2.0 * net.max_degree() as f64 * link
}

/// Minimizes F by accelerated gradient descent (fixed step 1/L, gradient
/// restart), then constructs the dual reference analytically.
pub fn solve_reference(
    inst: &ProblemInstance,
    cm: &ConstraintMatrices,
    cfg: &ReferenceConfig,
) -> Result<OptimalPoint, ReferenceError> {
    let step = 1.0 / total_lipschitz(inst).max(1e-12);
    let dim = inst.x_dim();

    let mut x = vec![0.0; dim];
    let mut x_prev = x.clone();
    let mut t = 1.0_f64;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;

    for _ in 0..cfg.max_iters {
        // momentum point
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        let mut y = x.clone();
        for (yq, (xq, pq)) in y.iter_mut().zip(x.iter().zip(&x_prev)) {
            *yq = xq + momentum * (xq - pq);
        }
        let g = grad_total(inst, cm, &y);
        let mut x_next = y;
        linalg::axpy(-step, &g, &mut x_next);

        // gradient restart: momentum is fighting the descent direction
        let advance = linalg::sub(&x_next, &x);
        if linalg::dot(&g, &advance) > 0.0 {
            t = 1.0;
        } else {
            t = t_next;
        }
        x_prev = x;
        x = x_next;

        grad_norm = linalg::norm2(&grad_total(inst, cm, &x));
        if grad_norm <= cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(ReferenceError::IterationCap { grad_norm, best: x });
    }

    let w_star = cm.apply_b(&x);
    let (y_star, z_star) = split_w(inst, &w_star);
    let (gy, gz) = inst.grad_g_stacked(y_star, z_star);
    let mut alpha_star = gy;
    alpha_star.extend(gz);

    let point = OptimalPoint {
        kkt_residuals: kkt_residuals_parts(inst, cm, &x, &w_star, &alpha_star),
        grad_norm_at_solution: grad_norm,
        x_star: x,
        w_star,
        alpha_star,
    };
    let bound = 10.0 * cfg.tol;
    if point.kkt_residuals[0] > bound {
        return Err(ReferenceError::Inconsistent {
            residual: point.kkt_residuals[0],
            bound,
        });
    }
    Ok(point)
}

/// The three first-order optimality residual norms at a stacked point
/// u = (x, w, alpha):
/// `|| grad f(x) + B^T alpha ||`, `|| grad g(w) - alpha ||`, `|| B x - w ||`.
pub fn kkt_residuals(inst: &ProblemInstance, cm: &ConstraintMatrices, u: &[f64]) -> [f64; 3] {
    let xd = cm.x_dim();
    let wd = cm.w_dim();
    assert_eq!(u.len(), xd + 2 * wd, "kkt_residuals: dimension mismatch");
    let (x, rest) = u.split_at(xd);
    let (w, alpha) = rest.split_at(wd);
    kkt_residuals_parts(inst, cm, x, w, alpha)
}

fn kkt_residuals_parts(
    inst: &ProblemInstance,
    cm: &ConstraintMatrices,
    x: &[f64],
    w: &[f64],
    alpha: &[f64],
) -> [f64; 3] {
    let mut r1 = inst.grad_f_stacked(x);
    linalg::axpy(1.0, &cm.apply_b_transpose(alpha), &mut r1);

    let (y, z) = split_w(inst, w);
    let (gy, gz) = inst.grad_g_stacked(y, z);
    let mut r2 = gy;
    r2.extend(gz);
    linalg::axpy(-1.0, alpha, &mut r2);

    let mut r3 = cm.apply_b(x);
    linalg::axpy(-1.0, w, &mut r3);

    [linalg::norm2(&r1), linalg::norm2(&r2), linalg::norm2(&r3)]
}

/// Weighted distance `|| u - u_ref ||` in the block-diagonal metric with
/// weight c/2 on the x block, (rho + c)/2 on the w block and 1/(2 rho) on
/// the dual block. `x_dim` tells the block split; w and alpha have equal
/// lengths.
pub fn lambda_norm(c: f64, rho: f64, x_dim: usize, u: &[f64], u_ref: &[f64]) -> f64 {
    assert_eq!(u.len(), u_ref.len(), "lambda_norm: dimension mismatch");
    assert!(rho > 0.0, "lambda_norm needs rho > 0");
    assert!((u.len() - x_dim) % 2 == 0, "lambda_norm: bad block split");
    let w_dim = (u.len() - x_dim) / 2;
    let mut acc = 0.0;
    for (q, (a, b)) in u.iter().zip(u_ref).enumerate() {
        let weight = if q < x_dim {
            0.5 * c
        } else if q < x_dim + w_dim {
            0.5 * (rho + c)
        } else {
            0.5 / rho
        };
        let d = a - b;
        acc += weight * d * d;
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{constraint_matrices, Network};
    use crate::problem::{
        LinkCost, NodeCost, ProblemInstance, QuadraticFormLinkCost, QuadraticLinkCost,
        QuadraticNodeCost,
    };
    use approx::assert_relative_eq;

    fn zero_link(p: usize) -> Box<dyn LinkCost> {
        Box::new(
            QuadraticFormLinkCost::new(vec![vec![0.0; 2 * p]; 2 * p], vec![0.0; 2 * p], p).unwrap(),
        )
    }

    #[test]
    fn identity_quadratic_without_coupling_solves_to_zero() {
        let net = Network::from_undirected_edges(2, &[(0, 1)]).unwrap();
        let nodes: Vec<Box<dyn NodeCost>> = (0..2)
            .map(|_| {
                Box::new(QuadraticNodeCost::new(vec![vec![1.0]], vec![0.0]).unwrap())
                    as Box<dyn NodeCost>
            })
            .collect();
        let links: Vec<Box<dyn LinkCost>> = vec![zero_link(1), zero_link(1)];
        let inst = ProblemInstance::new(net, 1, nodes, links).unwrap();
        let cm = constraint_matrices(inst.network(), 1).unwrap();
        let point = solve_reference(&inst, &cm, &ReferenceConfig::default()).unwrap();
        assert!(linalg::norm2(&point.x_star) <= 1e-10);
        assert!(linalg::norm2(&point.alpha_star) <= 1e-10);
    }

    fn anchored_pair(beta: f64, anchors: [f64; 2]) -> ProblemInstance {
        let net = Network::from_undirected_edges(2, &[(0, 1)]).unwrap();
        let nodes: Vec<Box<dyn NodeCost>> = anchors
            .iter()
            .map(|&a| {
                Box::new(QuadraticNodeCost::new(vec![vec![1.0]], vec![-a]).unwrap())
                    as Box<dyn NodeCost>
            })
            .collect();
        let links: Vec<Box<dyn LinkCost>> = vec![
            Box::new(QuadraticLinkCost::new(beta, 1).unwrap()),
            Box::new(QuadraticLinkCost::new(beta, 1).unwrap()),
        ];
        ProblemInstance::new(net, 1, nodes, links).unwrap()
    }

    #[test]
    fn coupled_pair_matches_stationarity_system_and_consensus_limit() {
        let anchors = [1.0, -3.0];
        let mut previous_spread = f64::INFINITY;
        for beta in [0.5, 5.0, 50.0] {
            let inst = anchored_pair(beta, anchors);
            let cm = constraint_matrices(inst.network(), 1).unwrap();
            let point = solve_reference(&inst, &cm, &ReferenceConfig::default()).unwrap();

            // stationarity of 1/2 (x0 - a0)^2 + 1/2 (x1 - a1)^2 + 2 beta (x0 - x1)^2
            let expected = linalg::solve_dense(
                &[
                    vec![1.0 + 4.0 * beta, -4.0 * beta],
                    vec![-4.0 * beta, 1.0 + 4.0 * beta],
                ],
                &anchors,
            )
            .unwrap();
            assert_relative_eq!(point.x_star[0], expected[0], epsilon = 1e-8);
            assert_relative_eq!(point.x_star[1], expected[1], epsilon = 1e-8);

            // with growing coupling both components approach mean(anchors)
            let spread = (point.x_star[0] - point.x_star[1]).abs();
            assert!(spread < previous_spread);
            previous_spread = spread;
            let mean = 0.5 * (anchors[0] + anchors[1]);
            if beta == 50.0 {
                assert!((point.x_star[0] - mean).abs() < 0.02);
            }
        }
    }

    #[test]
    fn kkt_residuals_at_reference_meet_bounds() {
        let inst = anchored_pair(2.0, [2.0, 0.5]);
        let cm = constraint_matrices(inst.network(), 1).unwrap();
        let cfg = ReferenceConfig::default();
        let point = solve_reference(&inst, &cm, &cfg).unwrap();
        let [r1, r2, r3] = kkt_residuals(&inst, &cm, &point.stacked());
        assert!(r1 <= 10.0 * cfg.tol);
        assert_eq!(r2, 0.0); // alpha* is grad g(w*) by construction
        assert_eq!(r3, 0.0); // w* is B x* by construction
    }

    #[test]
    fn kkt_residuals_at_zero_state_reduce_to_grad_f() {
        let inst = anchored_pair(1.0, [1.0, 2.0]);
        let cm = constraint_matrices(inst.network(), 1).unwrap();
        let u = vec![0.0; cm.x_dim() + 2 * cm.w_dim()];
        let [r1, _, r3] = kkt_residuals(&inst, &cm, &u);
        let gf = inst.grad_f_stacked(&vec![0.0; cm.x_dim()]);
        assert_relative_eq!(r1, linalg::norm2(&gf), epsilon = 1e-15);
        assert_eq!(r3, 0.0);
    }

    #[test]
    fn reference_is_stable_under_tighter_tolerance() {
        let inst = anchored_pair(3.0, [0.7, -0.9]);
        let cm = constraint_matrices(inst.network(), 1).unwrap();
        let loose = solve_reference(
            &inst,
            &cm,
            &ReferenceConfig {
                tol: 1e-9,
                max_iters: 1_000_000,
            },
        )
        .unwrap();
        let tight = solve_reference(
            &inst,
            &cm,
            &ReferenceConfig {
                tol: 1e-10,
                max_iters: 1_000_000,
            },
        )
        .unwrap();
        let rel =
            linalg::dist2(&loose.x_star, &tight.x_star) / linalg::norm2(&tight.x_star).max(1e-12);
        assert!(rel <= 1e-6, "reference moved by {rel}");
    }

    #[test]
    fn iteration_cap_carries_best_iterate() {
        let inst = anchored_pair(1.0, [5.0, -2.0]);
        let cm = constraint_matrices(inst.network(), 1).unwrap();
        let res = solve_reference(
            &inst,
            &cm,
            &ReferenceConfig {
                tol: 1e-12,
                max_iters: 2,
            },
        );
        match res {
            Err(ReferenceError::IterationCap { best, grad_norm }) => {
                assert_eq!(best.len(), 2);
                assert!(grad_norm > 1e-12);
            }
            other => panic!("expected iteration cap, got {other:?}"),
        }
    }

    #[test]
    fn lambda_norm_is_a_weighted_norm() {
        let x_dim = 2;
        let u = vec![1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let zero = vec![0.0; u.len()];
        // c = 2: x-block weight is c/2 = 1, so the value is the plain norm
        let d = lambda_norm(2.0, 2.0, x_dim, &u, &zero);
        assert_relative_eq!(d, 2.0_f64.sqrt(), epsilon = 1e-15);

        assert_eq!(lambda_norm(2.0, 2.0, x_dim, &u, &u), 0.0);

        // homogeneity
        let doubled: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
        assert_relative_eq!(
            lambda_norm(2.0, 2.0, x_dim, &doubled, &zero),
            2.0 * d,
            epsilon = 1e-15
        );
    }

    #[test]
    fn lambda_norm_positive_definite_on_probes() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let u: Vec<f64> = (0..8).map(|_| rng.random::<f64>() - 0.5).collect();
            let zero = vec![0.0; 8];
            let v = lambda_norm(0.7, 1.9, 2, &u, &zero);
            if u.iter().any(|&q| q != 0.0) {
                assert!(v > 0.0);
            }
        }
    }
}
