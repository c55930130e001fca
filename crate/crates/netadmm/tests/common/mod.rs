#![allow(dead_code)]

//! Shared fixtures and the independently coded centralized ADMM oracle
//! used to cross-check the distributed solvers.

use netadmm::harness::config::ExperimentConfig;
use netadmm::linalg;
use netadmm::problem::ProblemInstance;

/// Ten-node random network, logistic costs: the small comparison scenario.
pub fn scenario_i_config() -> ExperimentConfig {
    ExperimentConfig::from_json(
        r#"{
            "topology": {"kind": "random_avg_degree", "n": 10, "avg_degree": 2, "seed": 7},
            "problem": {"kind": "logistic", "p": 2, "q": 50, "beta_reg": 1.0, "data_seed": 11},
            "solvers": [
                {"algorithm": "dladmm", "rho": 50, "c": 3, "max_iters": 2000},
                {"algorithm": "dadmm", "rho": 50, "max_iters": 400,
                 "inner": {"grad_tol": 1e-10, "max_inner_iters": 10000, "method": "gd"}}
            ],
            "reference": {"tol": 1e-10, "max_iters": 1000000},
            "run_seed": 1
        }"#,
    )
    .unwrap()
}

/// Strongly convex quadratic fixture on a six-node cycle (node costs have
/// eigenvalues spanning [1, 2], link forms [0.5, 1.5]).
pub fn q_net_a_config(max_iters: usize) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{
            "topology": {{"kind": "cycle", "n": 6}},
            "problem": {{"kind": "quadratic", "p": 2, "data_seed": 5}},
            "solvers": [{{"algorithm": "dladmm", "rho": 1, "c": 30, "max_iters": {max_iters}}}],
            "reference": {{"tol": 1e-12, "max_iters": 1000000}},
            "rel_err_target": 1e-8
        }}"#
    ))
    .unwrap()
}

/// Twenty-node small-world base used by the topology, connectivity and
/// c-sweep studies; generator seeds derive from run_seed.
pub fn small_world_study_config(run_seed: u64, rho: f64, c: f64) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{
            "topology": {{"kind": "small_world", "n": 20, "extra_links": 20}},
            "problem": {{"kind": "logistic", "p": 2, "q": 50, "beta_reg": 1.0}},
            "solvers": [{{"algorithm": "dladmm", "rho": {rho}, "c": {c}, "max_iters": 8000}}],
            "rel_err_target": 1e-4,
            "run_seed": {run_seed}
        }}"#
    ))
    .unwrap()
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let rows = a.len();
    let inner = b.len();
    let cols = b[0].len();
    let mut out = vec![vec![0.0; cols]; rows];
    for r in 0..rows {
        for k in 0..inner {
            let av = a[r][k];
            if av == 0.0 {
                continue;
            }
            for c in 0..cols {
                out[r][c] += av * b[k][c];
            }
        }
    }
    out
}

fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let rows = a.len();
    let cols = a[0].len();
    (0..cols)
        .map(|c| (0..rows).map(|r| a[r][c]).collect())
        .collect()
}

/// Centralized two-block ADMM on the stacked reformulation
/// `min f(x) + g(w)  s.t.  B x = w`, assembled densely from the quadratic
/// oracle data. This is a separate code path from the per-node solvers:
/// dense matrices, global linear solves, no neighbor bookkeeping.
pub struct StackedAdmmOracle {
    rho: f64,
    b: Vec<Vec<f64>>,
    bt: Vec<Vec<f64>>,
    x_system: Vec<Vec<f64>>,
    w_system: Vec<Vec<f64>>,
    f_linear: Vec<f64>,
    g_linear: Vec<f64>,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl StackedAdmmOracle {
    pub fn new(inst: &ProblemInstance, rho: f64) -> Self {
        let net = inst.network();
        let p = inst.block_dim();
        let n = net.node_count();
        let m = net.link_count();
        let np = n * p;
        let wd = (n + m) * p;

        let mut b = vec![vec![0.0; np]; wd];
        for q in 0..np {
            b[q][q] = 1.0;
        }
        for (k, &(_, j)) in net.directed_links().iter().enumerate() {
            for q in 0..p {
                b[(n + k) * p + q][j * p + q] = 1.0;
            }
        }

        let mut f_hessian = vec![vec![0.0; np]; np];
        let mut f_linear = vec![0.0; np];
        for i in 0..n {
            let parts = inst
                .node_cost(i)
                .quadratic_parts()
                .expect("oracle needs quadratic node costs");
            for a in 0..p {
                for c in 0..p {
                    f_hessian[i * p + a][i * p + c] = parts.hessian[a][c];
                }
                f_linear[i * p + a] = parts.linear[a];
            }
        }

        let mut g_hessian = vec![vec![0.0; wd]; wd];
        let mut g_linear = vec![0.0; wd];
        for (k, &(i, _)) in net.directed_links().iter().enumerate() {
            let parts = inst
                .link_cost(k)
                .quadratic_parts()
                .expect("oracle needs quadratic link costs");
            let map = |q: usize| {
                if q < p {
                    i * p + q
                } else {
                    (n + k) * p + (q - p)
                }
            };
            for a in 0..2 * p {
                for c in 0..2 * p {
                    g_hessian[map(a)][map(c)] += parts.hessian[a][c];
                }
                g_linear[map(a)] += parts.linear[a];
            }
        }

        let bt = transpose(&b);
        let btb = mat_mul(&bt, &b);
        let mut x_system = f_hessian;
        for r in 0..np {
            for c in 0..np {
                x_system[r][c] += rho * btb[r][c];
            }
        }
        let mut w_system = g_hessian;
        for (q, row) in w_system.iter_mut().enumerate() {
            row[q] += rho;
        }

        StackedAdmmOracle {
            rho,
            b,
            bt,
            x_system,
            w_system,
            f_linear,
            g_linear,
            x: vec![0.0; np],
            w: vec![0.0; wd],
            alpha: vec![0.0; wd],
        }
    }

    pub fn step(&mut self) {
        // x-step: (Q_f + rho B^T B) x = -b_f - B^T alpha + rho B^T w
        let mut rhs: Vec<f64> = self.f_linear.iter().map(|v| -v).collect();
        let bta = linalg::mat_vec(&self.bt, &self.alpha);
        linalg::axpy(-1.0, &bta, &mut rhs);
        let btw = linalg::mat_vec(&self.bt, &self.w);
        linalg::axpy(self.rho, &btw, &mut rhs);
        self.x = linalg::solve_dense(&self.x_system, &rhs).expect("x system solvable");

        // w-step: (Q_g + rho I) w = alpha + rho B x - b_g
        let bx = linalg::mat_vec(&self.b, &self.x);
        let mut rhs = self.alpha.clone();
        linalg::axpy(self.rho, &bx, &mut rhs);
        linalg::axpy(-1.0, &self.g_linear, &mut rhs);
        self.w = linalg::solve_dense(&self.w_system, &rhs).expect("w system solvable");

        // dual ascent on B x - w
        let mut residual = bx;
        linalg::axpy(-1.0, &self.w, &mut residual);
        linalg::axpy(self.rho, &residual, &mut self.alpha);
    }
}
