//! Baseline distributed ADMM whose x and (y, z) phases solve the local
//! proximal subproblems exactly (to an inner gradient tolerance) instead of
//! linearizing them. Round structure, message semantics and the dual phase
//! are identical to the linearized solver; only the primal phases differ.
//!
//! The inner solver is gradient descent with Armijo backtracking, adequate
//! at desk scale because the proximal terms make every subproblem strongly
//! convex. Quadratic costs can opt into a closed-form solve instead.

use std::fmt;

use crate::dladmm::{dual_update, SolverState};
use crate::linalg;
use crate::problem::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerMethod {
    /// Armijo backtracking gradient descent (start step 1, shrink 0.5,
    /// slope factor 1e-4).
    GradientDescent,
    /// Closed-form solve of the quadratic stationarity system; requires
    /// every oracle to expose its quadratic parts.
    ExactQuadratic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolverConfig {
    pub grad_tol: f64,
    pub max_inner_iters: usize,
    pub method: InnerMethod,
}

impl Default for InnerSolverConfig {
    fn default() -> Self {
        InnerSolverConfig {
            grad_tol: 1e-10,
            max_inner_iters: 10_000,
            method: InnerMethod::GradientDescent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DadmmConfig {
    pub rho: f64,
    pub max_iters: usize,
    pub inner: InnerSolverConfig,
    /// Relative-error ceiling past which a run is flagged diverged.
    pub divergence_guard: f64,
}

impl DadmmConfig {
    pub fn new(rho: f64, max_iters: usize, inner: InnerSolverConfig) -> Self {
        DadmmConfig {
            rho,
            max_iters,
            inner,
            divergence_guard: 1e6,
        }
    }
}

#[derive(Debug, Clone)]
pub enum DadmmError {
    /// The inner iteration cap was reached; carries the best iterate found
    /// and its subproblem gradient norm.
    InnerIterationCap {
        node: usize,
        best: Vec<f64>,
        grad_norm: f64,
    },
    /// Exact-quadratic solves need quadratic oracles.
    NotQuadratic {
        node: usize,
    },
    SingularSystem {
        node: usize,
    },
    NonFinite,
}

impl fmt::Display for DadmmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DadmmError::InnerIterationCap {
                node, grad_norm, ..
            } => write!(
                f,
                "inner solver hit its iteration cap at node {node} (gradient norm {grad_norm:e})"
            ),
            DadmmError::NotQuadratic { node } => write!(
                f,
                "exact-quadratic inner solve requested but the cost at node {node} is not quadratic"
            ),
            DadmmError::SingularSystem { node } => {
                write!(f, "singular stationarity system at node {node}")
            }
            DadmmError::NonFinite => write!(f, "solver step produced a non-finite value"),
        }
    }
}

impl std::error::Error for DadmmError {}

const ARMIJO_SLOPE: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const MIN_STEP: f64 = 1e-20;

/// Armijo backtracking gradient descent. Returns the minimizer and the
/// number of gradient steps taken; a warm start already at the optimum
/// returns after zero steps.
///
/// The trial step starts at `min(1, 1/curvature_bound)`. Near a minimum
/// whose value is O(1) the sufficient-decrease test saturates in double
/// precision (any tiny change rounds away), so an uncapped step of 1 can
/// slip through while expanding the gradient; capping by the declared
/// curvature keeps the iteration contractive all the way to grad_tol.
fn minimize_gd<V, G>(
    value: V,
    gradient: G,
    start: Vec<f64>,
    curvature_bound: f64,
    grad_tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, usize), (Vec<f64>, f64)>
where
    V: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let start_step = if curvature_bound > 1.0 {
        1.0 / curvature_bound
    } else {
        1.0
    };
    let mut x = start;
    for iter in 0..=max_iters {
        let g = gradient(&x);
        let gnorm = linalg::norm2(&g);
        if gnorm <= grad_tol {
            return Ok((x, iter));
        }
        if iter == max_iters {
            return Err((x, gnorm));
        }
        let fx = value(&x);
        let noise = 4.0 * f64::EPSILON * fx.abs().max(f64::MIN_POSITIVE);
        let mut step = start_step;
        loop {
            let predicted = ARMIJO_SLOPE * step * gnorm * gnorm;
            let mut trial = x.clone();
            linalg::axpy(-step, &g, &mut trial);
            // once the predicted decrease is below evaluation noise the
            // value test is uninformative; the capped step still descends
            if predicted <= noise || value(&trial) <= fx - predicted {
                x = trial;
                break;
            }
            step *= ARMIJO_SHRINK;
            if step < MIN_STEP {
                return Err((x, gnorm));
            }
        }
    }
    unreachable!()
}

/// Gathers the dual and splitting blocks node i reads in its x phase.
struct XSubproblemData<'a> {
    inst: &'a ProblemInstance,
    node: usize,
    rho: f64,
    /// lambda_i + sum of incoming mu_li
    dual_sum: Vec<f64>,
    y_i: &'a [f64],
    /// incoming z_li blocks
    z_in: Vec<&'a [f64]>,
}

impl<'a> XSubproblemData<'a> {
    fn new(node: usize, state: &'a SolverState, inst: &'a ProblemInstance, rho: f64) -> Self {
        let mut dual_sum = inst.block(&state.lambda, node).to_vec();
        let mut z_in = Vec::new();
        for &k in inst.network().links_to(node) {
            linalg::axpy(1.0, inst.block(&state.mu, k), &mut dual_sum);
            z_in.push(inst.block(&state.z, k));
        }
        XSubproblemData {
            inst,
            node,
            rho,
            dual_sum,
            y_i: inst.block(&state.y, node),
            z_in,
        }
    }

    fn value(&self, v: &[f64]) -> f64 {
        let mut total = self.inst.node_cost(self.node).eval(v) + linalg::dot(&self.dual_sum, v);
        let d = linalg::dist2(v, self.y_i);
        total += 0.5 * self.rho * d * d;
        for z in &self.z_in {
            let d = linalg::dist2(v, z);
            total += 0.5 * self.rho * d * d;
        }
        total
    }

    fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let mut g = self.inst.node_cost(self.node).grad(v);
        linalg::axpy(1.0, &self.dual_sum, &mut g);
        for (gq, (vq, yq)) in g.iter_mut().zip(v.iter().zip(self.y_i)) {
            *gq += self.rho * (vq - yq);
        }
        for z in &self.z_in {
            for (gq, (vq, zq)) in g.iter_mut().zip(v.iter().zip(*z)) {
                *gq += self.rho * (vq - zq);
            }
        }
        g
    }
}

/// Solves node i's x subproblem: minimize
/// `f_i(v) + (lambda_i + sum_l mu_li)^T v + rho/2 ||v - y_i||^2
///  + rho/2 sum_l ||v - z_li||^2`,
/// warm-started from the current x_i.
pub fn x_subproblem(
    node: usize,
    state: &SolverState,
    inst: &ProblemInstance,
    cfg: &DadmmConfig,
    inner: &InnerSolverConfig,
) -> Result<Vec<f64>, DadmmError> {
    let data = XSubproblemData::new(node, state, inst, cfg.rho);
    match inner.method {
        InnerMethod::GradientDescent => {
            let warm = inst.block(&state.x, node).to_vec();
            let degree = inst.network().degree(node) as f64;
            let curvature = inst.node_cost(node).lipschitz() + cfg.rho * (1.0 + degree);
            let (solution, _iters) = minimize_gd(
                |v| data.value(v),
                |v| data.gradient(v),
                warm,
                curvature,
                inner.grad_tol,
                inner.max_inner_iters,
            )
            .map_err(|(best, grad_norm)| DadmmError::InnerIterationCap {
                node,
                best,
                grad_norm,
            })?;
            debug_assert!(linalg::norm2(&data.gradient(&solution)) <= inner.grad_tol);
            Ok(solution)
        }
        InnerMethod::ExactQuadratic => {
            let parts = inst
                .node_cost(node)
                .quadratic_parts()
                .ok_or(DadmmError::NotQuadratic { node })?;
            let p = inst.block_dim();
            let degree = inst.network().degree(node) as f64;
            // (Q + rho (1 + deg) I) v = rho (y_i + sum_l z_li) - b - dual_sum
            let mut a: Vec<Vec<f64>> = parts.hessian.to_vec();
            for (q, row) in a.iter_mut().enumerate() {
                row[q] += cfg.rho * (1.0 + degree);
            }
            let mut rhs = vec![0.0; p];
            linalg::axpy(cfg.rho, data.y_i, &mut rhs);
            for z in &data.z_in {
                linalg::axpy(cfg.rho, z, &mut rhs);
            }
            linalg::axpy(-1.0, parts.linear, &mut rhs);
            linalg::axpy(-1.0, &data.dual_sum, &mut rhs);
            linalg::solve_dense(&a, &rhs).ok_or(DadmmError::SingularSystem { node })
        }
    }
}

/// Node i's joint (y_i, {z_ij}) subproblem over the stacked
/// (1 + deg(i)) * p variables. Returns the new y_i block and the new z_ij
/// blocks in `links_from(i)` order.
pub fn yz_subproblem(
    node: usize,
    state: &SolverState,
    inst: &ProblemInstance,
    cfg: &DadmmConfig,
    inner: &InnerSolverConfig,
    x_next: &[f64],
) -> Result<(Vec<f64>, Vec<Vec<f64>>), DadmmError> {
    let net = inst.network();
    let p = inst.block_dim();
    let out_links: Vec<usize> = net.links_from(node).to_vec();
    let degree = out_links.len();
    let dim = (1 + degree) * p;

    let lambda_i = inst.block(&state.lambda, node);
    let x_i_next = inst.block(x_next, node);
    // proximal pull targets for each z_ij: the freshly broadcast x_j
    let z_targets: Vec<&[f64]> = out_links
        .iter()
        .map(|&k| inst.block(x_next, net.directed_links()[k].1))
        .collect();
    let mu_blocks: Vec<&[f64]> = out_links
        .iter()
        .map(|&k| inst.block(&state.mu, k))
        .collect();

    let value = |v: &[f64]| {
        let y = &v[..p];
        let mut total = -linalg::dot(lambda_i, y);
        let d = linalg::dist2(y, x_i_next);
        total += 0.5 * cfg.rho * d * d;
        for (s, &k) in out_links.iter().enumerate() {
            let z = &v[(1 + s) * p..(2 + s) * p];
            total += inst.link_cost(k).eval(y, z);
            total -= linalg::dot(mu_blocks[s], z);
            let d = linalg::dist2(z, z_targets[s]);
            total += 0.5 * cfg.rho * d * d;
        }
        total
    };
    let gradient = |v: &[f64]| {
        let y = &v[..p];
        let mut g = vec![0.0; dim];
        for (q, (yq, xq)) in y.iter().zip(x_i_next).enumerate() {
            g[q] = -lambda_i[q] + cfg.rho * (yq - xq);
        }
        for (s, &k) in out_links.iter().enumerate() {
            let z = &v[(1 + s) * p..(2 + s) * p];
            let (gy, gz) = inst.link_cost(k).grad(y, z);
            linalg::axpy(1.0, &gy, &mut g[..p]);
            let gz_out = &mut g[(1 + s) * p..(2 + s) * p];
            linalg::axpy(1.0, &gz, gz_out);
            for (q, (zq, tq)) in z.iter().zip(z_targets[s]).enumerate() {
                gz_out[q] += -mu_blocks[s][q] + cfg.rho * (zq - tq);
            }
        }
        g
    };

    let warm = {
        let mut v = inst.block(&state.y, node).to_vec();
        for &k in &out_links {
            v.extend_from_slice(inst.block(&state.z, k));
        }
        v
    };

    let solution = match inner.method {
        InnerMethod::GradientDescent => {
            let curvature = cfg.rho
                + out_links
                    .iter()
                    .map(|&k| inst.link_cost(k).lipschitz())
                    .sum::<f64>();
            let (solution, _iters) = minimize_gd(
                value,
                gradient,
                warm,
                curvature,
                inner.grad_tol,
                inner.max_inner_iters,
            )
            .map_err(|(best, grad_norm)| DadmmError::InnerIterationCap {
                node,
                best,
                grad_norm,
            })?;
            debug_assert!(linalg::norm2(&gradient(&solution)) <= inner.grad_tol);
            solution
        }
        InnerMethod::ExactQuadratic => {
            // sum of lifted link Hessians plus the proximal rho I
            let mut a = vec![vec![0.0; dim]; dim];
            let mut rhs = vec![0.0; dim];
            for q in 0..dim {
                a[q][q] = cfg.rho;
            }
            linalg::axpy(1.0, lambda_i, &mut rhs[..p]);
            linalg::axpy(cfg.rho, x_i_next, &mut rhs[..p]);
            for (s, &k) in out_links.iter().enumerate() {
                let parts = inst
                    .link_cost(k)
                    .quadratic_parts()
                    .ok_or(DadmmError::NotQuadratic { node })?;
                // stacked coordinates of link k: (y, z_s)
                let map = |q: usize| if q < p { q } else { (1 + s) * p + (q - p) };
                for qa in 0..2 * p {
                    for qb in 0..2 * p {
                        a[map(qa)][map(qb)] += parts.hessian[qa][qb];
                    }
                    rhs[map(qa)] -= parts.linear[qa];
                }
                let z_rhs = &mut rhs[(1 + s) * p..(2 + s) * p];
                linalg::axpy(1.0, mu_blocks[s], z_rhs);
                linalg::axpy(cfg.rho, z_targets[s], z_rhs);
            }
            linalg::solve_dense(&a, &rhs).ok_or(DadmmError::SingularSystem { node })?
        }
    };

    let y_next = solution[..p].to_vec();
    let z_next = (0..degree)
        .map(|s| solution[(1 + s) * p..(2 + s) * p].to_vec())
        .collect();
    Ok((y_next, z_next))
}

/// One synchronous round of the exact baseline; same phase order, message
/// semantics and dual phase as the linearized solver.
pub fn iterate(
    state: &mut SolverState,
    inst: &ProblemInstance,
    cfg: &DadmmConfig,
) -> Result<(), DadmmError> {
    let net = inst.network();
    let p = inst.block_dim();

    let mut x_next = vec![0.0; state.x.len()];
    for i in 0..net.node_count() {
        let xi = x_subproblem(i, state, inst, cfg, &cfg.inner)?;
        x_next[i * p..(i + 1) * p].copy_from_slice(&xi);
    }

    let mut y_next = vec![0.0; state.y.len()];
    let mut z_next = vec![0.0; state.z.len()];
    for i in 0..net.node_count() {
        let (yi, zis) = yz_subproblem(i, state, inst, cfg, &cfg.inner, &x_next)?;
        y_next[i * p..(i + 1) * p].copy_from_slice(&yi);
        for (&k, zk) in net.links_from(i).iter().zip(&zis) {
            z_next[k * p..(k + 1) * p].copy_from_slice(zk);
        }
    }

    let (lambda_next, mu_next) = dual_update(state, cfg.rho, inst, &x_next, &y_next, &z_next);

    if !(linalg::all_finite(&x_next)
        && linalg::all_finite(&y_next)
        && linalg::all_finite(&z_next)
        && linalg::all_finite(&lambda_next)
        && linalg::all_finite(&mu_next))
    {
        return Err(DadmmError::NonFinite);
    }
    state.x = x_next;
    state.y = y_next;
    state.z = z_next;
    state.lambda = lambda_next;
    state.mu = mu_next;
    state.iteration += 1;
    Ok(())
}
