//! Cross-module solver invariants and property tests.

mod common;

use netadmm::dladmm::{self, SolverConfig};
use netadmm::graph::{build_small_world, constraint_matrices, Network};
use netadmm::harness::{prepare, run_solver, spot_check_rel_errors};
use netadmm::linalg;
use netadmm::reference::lambda_norm;

use common::q_net_a_config;
use proptest::prelude::*;

/// A state assembled at the optimal point is a fixed point of the round.
#[test]
fn optimal_point_is_stationary_under_the_linearized_round() {
    let cfg = q_net_a_config(10);
    let prep = prepare(&cfg).unwrap();
    let point = &prep.reference;
    let p = prep.instance.block_dim();

    let n = prep.instance.network().node_count();
    let np = n * p;
    let mut state = dladmm::init_state(&prep.instance);
    state.x = point.x_star.clone();
    state.y = point.w_star[..np].to_vec();
    state.z = point.w_star[np..].to_vec();
    state.lambda = point.alpha_star[..np].to_vec();
    state.mu = point.alpha_star[np..].to_vec();

    let before = state.stacked();
    let solver_cfg = SolverConfig::new(1.0, 30.0, 10);
    dladmm::iterate(&mut state, &prep.instance, &solver_cfg).unwrap();
    let moved = linalg::norm_inf(&linalg::sub(&state.stacked(), &before));
    assert!(moved <= 1e-12, "fixed point moved by {moved}");
}

/// The reference solve meets its own tolerance and the analytically built
/// dual point leaves only a round-off-sized stationarity residual when
/// re-evaluated along the independent first-order route.
#[test]
fn reference_residuals_on_the_logistic_fixture() {
    let cfg = common::scenario_i_config();
    let prep = prepare(&cfg).unwrap();
    let point = &prep.reference;
    assert!(point.grad_norm_at_solution <= 1e-10);
    assert!(point.kkt_residuals[0] <= 1e-9);
    assert_eq!(point.kkt_residuals[1], 0.0);
    assert_eq!(point.kkt_residuals[2], 0.0);
}

/// The recorded relative errors must be recomputable from the persisted
/// x iterates.
#[test]
fn traces_are_recomputable_from_iterates() {
    let cfg = q_net_a_config(200);
    let prep = prepare(&cfg).unwrap();
    let artifact = run_solver(&prep, &cfg.solvers[0], 1e-8).unwrap();
    spot_check_rel_errors(
        &artifact.trace.rows,
        &artifact.x_iterates,
        &prep.reference.x_star,
        10,
        99,
    )
    .unwrap();
}

/// Running twice produces bitwise-identical numeric columns (wall time is
/// the one nondeterministic field).
#[test]
fn end_to_end_runs_are_bitwise_deterministic() {
    let cfg = common::scenario_i_config();
    let prep_a = prepare(&cfg).unwrap();
    let prep_b = prepare(&cfg).unwrap();
    let a = run_solver(&prep_a, &cfg.solvers[0], 1e-6).unwrap();
    let b = run_solver(&prep_b, &cfg.solvers[0], 1e-6).unwrap();
    assert_eq!(a.trace.rows.len(), b.trace.rows.len());
    assert_eq!(a.trace.status, b.trace.status);
    for (ra, rb) in a.trace.rows.iter().zip(&b.trace.rows) {
        assert_eq!(ra.rel_error.to_bits(), rb.rel_error.to_bits());
        assert_eq!(ra.lambda_dist.to_bits(), rb.lambda_dist.to_bits());
        for q in 0..3 {
            assert_eq!(ra.kkt[q].to_bits(), rb.kkt[q].to_bits());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// B^T B is block diagonal with blocks (1 + deg) I for every generated
    /// network and block dimension.
    #[test]
    fn btb_identity_on_random_small_worlds(
        n in 3usize..12,
        extra_frac in 0.0f64..1.0,
        seed in 0u64..500,
        p in 1usize..4,
    ) {
        let max_extra = n * (n - 1) / 2 - n;
        let extra = (extra_frac * max_extra as f64) as usize;
        let net = build_small_world(n, extra, seed).unwrap();
        let cm = constraint_matrices(&net, p).unwrap();
        for i in 0..cm.x_dim() {
            let mut e = vec![0.0; cm.x_dim()];
            e[i] = 1.0;
            let col = cm.apply_btb(&e);
            for (j, v) in col.iter().enumerate() {
                let expect = if i == j { 1.0 + net.degree(i / p) as f64 } else { 0.0 };
                prop_assert_eq!(*v, expect);
            }
        }
    }

    /// Generators are pure functions of their seed.
    #[test]
    fn small_world_is_seed_deterministic(n in 3usize..20, seed in 0u64..1000) {
        let extra = (n / 2).min(n * (n - 1) / 2 - n);
        let a = build_small_world(n, extra, seed).unwrap();
        let b = build_small_world(n, extra, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    /// Rebuilding a network from its own edge list reproduces the canonical
    /// directed-link order exactly.
    #[test]
    fn directed_link_order_is_canonical(n in 3usize..15, seed in 0u64..1000) {
        let extra = (n / 3).min(n * (n - 1) / 2 - n);
        let net = build_small_world(n, extra, seed).unwrap();
        let rebuilt = Network::from_undirected_edges(n, net.undirected_edges()).unwrap();
        prop_assert_eq!(net.directed_links(), rebuilt.directed_links());
    }

    /// The weighted distance is homogeneous and positive definite.
    #[test]
    fn lambda_norm_is_a_norm(
        c in 0.01f64..100.0,
        rho in 0.01f64..100.0,
        blocks in prop::collection::vec(-10.0f64..10.0, 5),
        scale in -4.0f64..4.0,
    ) {
        // x block of 1, w and alpha blocks of 2 each
        let u: Vec<f64> = blocks.clone();
        let zero = vec![0.0; 5];
        let d = lambda_norm(c, rho, 1, &u, &zero);
        if u.iter().any(|v| *v != 0.0) {
            prop_assert!(d > 0.0);
        }
        let scaled: Vec<f64> = u.iter().map(|v| v * scale).collect();
        let ds = lambda_norm(c, rho, 1, &scaled, &zero);
        prop_assert!((ds - scale.abs() * d).abs() <= 1e-9 * (1.0 + ds));
    }
}
