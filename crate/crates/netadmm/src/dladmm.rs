//! Distributed linearized ADMM with closed-form per-node updates.
//!
//! Each synchronous round applies three phases in order, with the
//! Gauss-Seidel dependency that the splitting update reads the fresh x:
//!
//! ```text
//! x_i   <- (1 / (c + rho + rho*|N(i)|)) * [ -grad f_i(x_i) + c*x_i
//!            - lambda_i - sum_{l in N(i)} mu_li + rho*y_i + rho*sum_l z_li ]
//! y_i   <- (1 / (c + rho)) * [ -sum_j grad_y g_ij(y_i, z_ij) + c*y_i
//!            + lambda_i + rho*x_i^new ]
//! z_ij  <- (1 / (c + rho)) * [ -grad_z g_ij(y_i, z_ij) + c*z_ij
//!            + mu_ij + rho*x_j^new ]
//! lambda_i <- lambda_i + rho*(x_i^new - y_i^new)
//! mu_ij    <- mu_ij + rho*(x_j^new - z_ij^new)
//! ```
//!
//! Every node reads only its own blocks plus neighbor messages: the
//! broadcast x, and the z_li / mu_li blocks sent over incoming links. Note
//! the message bookkeeping transmits mu_ij to neighbor j each round even
//! though node i's own x-update consumes the incoming mu_li; both views are
//! equivalent for the synchronous simulator, which indexes links globally.

use std::fmt;

use crate::graph::ConstraintMatrices;
use crate::linalg;
use crate::problem::ProblemInstance;

/// Stacked iterate of one solver run. Per node i the blocks x_i, y_i,
/// lambda_i; per directed link (in canonical link order) the blocks z_ij,
/// mu_ij. The concatenation u = (x, w, alpha) with w = (y, z) and
/// alpha = (lambda, mu) is what the convergence diagnostics measure.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub p: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub iteration: usize,
}

impl SolverState {
    pub fn w(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.y.len() + self.z.len());
        w.extend_from_slice(&self.y);
        w.extend_from_slice(&self.z);
        w
    }

    pub fn alpha(&self) -> Vec<f64> {
        let mut a = Vec::with_capacity(self.lambda.len() + self.mu.len());
        a.extend_from_slice(&self.lambda);
        a.extend_from_slice(&self.mu);
        a
    }

    /// u = (x, w, alpha) as one flat vector.
    pub fn stacked(&self) -> Vec<f64> {
        let mut u = Vec::with_capacity(self.x.len() + 2 * (self.y.len() + self.z.len()));
        u.extend_from_slice(&self.x);
        u.extend_from_slice(&self.y);
        u.extend_from_slice(&self.z);
        u.extend_from_slice(&self.lambda);
        u.extend_from_slice(&self.mu);
        u
    }

    pub fn is_finite(&self) -> bool {
        linalg::all_finite(&self.x)
            && linalg::all_finite(&self.y)
            && linalg::all_finite(&self.z)
            && linalg::all_finite(&self.lambda)
            && linalg::all_finite(&self.mu)
    }
}

/// Penalty and linearization parameters of a run. Both must be positive;
/// they stay fixed for the whole run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub rho: f64,
    pub c: f64,
    pub max_iters: usize,
    /// Relative-error ceiling past which a run is flagged diverged.
    pub divergence_guard: f64,
}

impl SolverConfig {
    pub fn new(rho: f64, c: f64, max_iters: usize) -> Self {
        SolverConfig {
            rho,
            c,
            max_iters,
            divergence_guard: 1e6,
        }
    }
}

/// The state left an evaluable region (overflow / NaN); the caller keeps
/// the last finite state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NonFiniteStep;

impl fmt::Display for NonFiniteStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "solver step produced a non-finite value")
    }
}

impl std::error::Error for NonFiniteStep {}

/// All-zero state of the shapes the instance requires.
pub fn init_state(inst: &ProblemInstance) -> SolverState {
    let p = inst.block_dim();
    let np = inst.network().node_count() * p;
    let mp = inst.network().link_count() * p;
    SolverState {
        p,
        x: vec![0.0; np],
        y: vec![0.0; np],
        z: vec![0.0; mp],
        lambda: vec![0.0; np],
        mu: vec![0.0; mp],
        iteration: 0,
    }
}

/// Computes x at the next round from round-k state. Node i reads its own
/// blocks plus the incoming-link blocks z_li, mu_li.
pub fn x_update(state: &SolverState, inst: &ProblemInstance, cfg: &SolverConfig) -> Vec<f64> {
    let net = inst.network();
    let p = state.p;
    let mut x_next = vec![0.0; state.x.len()];
    for i in 0..net.node_count() {
        let degree = net.degree(i) as f64;
        let denom = cfg.c + cfg.rho + cfg.rho * degree;
        let xi = inst.block(&state.x, i);
        let grad = inst.node_cost(i).grad(xi);

        let out = &mut x_next[i * p..(i + 1) * p];
        linalg::axpy(-1.0, &grad, out);
        linalg::axpy(cfg.c, xi, out);
        linalg::axpy(-1.0, inst.block(&state.lambda, i), out);
        linalg::axpy(cfg.rho, inst.block(&state.y, i), out);
        for &k in net.links_to(i) {
            linalg::axpy(-1.0, inst.block(&state.mu, k), out);
            linalg::axpy(cfg.rho, inst.block(&state.z, k), out);
        }
        for v in out.iter_mut() {
            *v /= denom;
        }
    }
    x_next
}

/// Computes the splitting blocks (y, z) at the next round. Consumes the
/// freshly computed x (the z_ij update reads the broadcast x_j).
pub fn w_update(
    state: &SolverState,
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    x_next: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let net = inst.network();
    let p = state.p;
    let denom = cfg.c + cfg.rho;
    let mut y_next = vec![0.0; state.y.len()];
    let mut z_next = vec![0.0; state.z.len()];

    for i in 0..net.node_count() {
        let yi = inst.block(&state.y, i);
        let out_y = &mut y_next[i * p..(i + 1) * p];
        linalg::axpy(cfg.c, yi, out_y);
        linalg::axpy(1.0, inst.block(&state.lambda, i), out_y);
        linalg::axpy(cfg.rho, inst.block(x_next, i), out_y);

        for &k in net.links_from(i) {
            let j = net.directed_links()[k].1;
            let (gy, gz) = inst.link_cost(k).grad(yi, inst.block(&state.z, k));
            linalg::axpy(-1.0, &gy, out_y);

            let out_z = &mut z_next[k * p..(k + 1) * p];
            linalg::axpy(-1.0, &gz, out_z);
            linalg::axpy(cfg.c, inst.block(&state.z, k), out_z);
            linalg::axpy(1.0, inst.block(&state.mu, k), out_z);
            linalg::axpy(cfg.rho, inst.block(x_next, j), out_z);
            for v in out_z.iter_mut() {
                *v /= denom;
            }
        }
        let out_y = &mut y_next[i * p..(i + 1) * p];
        for v in out_y.iter_mut() {
            *v /= denom;
        }
    }
    (y_next, z_next)
}

/// Dual ascent on the splitting constraints; shared verbatim by the exact
/// baseline solver.
pub fn dual_update(
    state: &SolverState,
    rho: f64,
    inst: &ProblemInstance,
    x_next: &[f64],
    y_next: &[f64],
    z_next: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let net = inst.network();
    let p = state.p;
    let mut lambda_next = state.lambda.clone();
    for (l, (xi, yi)) in lambda_next.iter_mut().zip(x_next.iter().zip(y_next)) {
        *l += rho * (xi - yi);
    }
    let mut mu_next = state.mu.clone();
    for (k, &(_, j)) in net.directed_links().iter().enumerate() {
        for q in 0..p {
            mu_next[k * p + q] += rho * (x_next[j * p + q] - z_next[k * p + q]);
        }
    }
    (lambda_next, mu_next)
}

/// One synchronous round: x phase, then (y, z) phase, then dual phase.
/// On a non-finite result the state is left untouched.
pub fn iterate(
    state: &mut SolverState,
    inst: &ProblemInstance,
    cfg: &SolverConfig,
) -> Result<(), NonFiniteStep> {
    let x_next = x_update(state, inst, cfg);
    let (y_next, z_next) = w_update(state, inst, cfg, &x_next);
    let (lambda_next, mu_next) = dual_update(state, cfg.rho, inst, &x_next, &y_next, &z_next);

    if !(linalg::all_finite(&x_next)
        && linalg::all_finite(&y_next)
        && linalg::all_finite(&z_next)
        && linalg::all_finite(&lambda_next)
        && linalg::all_finite(&mu_next))
    {
        return Err(NonFiniteStep);
    }
    state.x = x_next;
    state.y = y_next;
    state.z = z_next;
    state.lambda = lambda_next;
    state.mu = mu_next;
    state.iteration += 1;
    Ok(())
}

/// Residual norms of the compact first-order conditions linking two
/// consecutive rounds: the x condition, the w condition, and the dual
/// recursion. All three vanish when the per-node updates were applied
/// exactly; this is the stacked view of the decentralized round.
pub fn compact_residuals(
    prev: &SolverState,
    next: &SolverState,
    inst: &ProblemInstance,
    cm: &ConstraintMatrices,
    cfg: &SolverConfig,
) -> [f64; 3] {
    let w_prev = prev.w();
    let w_next = next.w();
    let alpha_prev = prev.alpha();

    // grad f(x^k) + c (x^{k+1} - x^k) + B^T alpha^k + rho (B^T B x^{k+1} - B^T w^k)
    let mut rx = inst.grad_f_stacked(&prev.x);
    linalg::axpy(cfg.c, &next.x, &mut rx);
    linalg::axpy(-cfg.c, &prev.x, &mut rx);
    linalg::axpy(1.0, &cm.apply_b_transpose(&alpha_prev), &mut rx);
    linalg::axpy(cfg.rho, &cm.apply_btb(&next.x), &mut rx);
    linalg::axpy(-cfg.rho, &cm.apply_b_transpose(&w_prev), &mut rx);

    // grad g(w^k) + c (w^{k+1} - w^k) - alpha^k + rho (w^{k+1} - B x^{k+1})
    let (gy, gz) = inst.grad_g_stacked(&prev.y, &prev.z);
    let mut rw = gy;
    rw.extend(gz);
    linalg::axpy(cfg.c, &w_next, &mut rw);
    linalg::axpy(-cfg.c, &w_prev, &mut rw);
    linalg::axpy(-1.0, &alpha_prev, &mut rw);
    linalg::axpy(cfg.rho, &w_next, &mut rw);
    linalg::axpy(-cfg.rho, &cm.apply_b(&next.x), &mut rw);

    // alpha^{k+1} - alpha^k - rho (B x^{k+1} - w^{k+1})
    let mut ra = next.alpha();
    linalg::axpy(-1.0, &alpha_prev, &mut ra);
    linalg::axpy(-cfg.rho, &cm.apply_b(&next.x), &mut ra);
    linalg::axpy(cfg.rho, &w_next, &mut ra);

    [linalg::norm2(&rx), linalg::norm2(&rw), linalg::norm2(&ra)]
}
