//! Seeded synthetic problem generators.

use anyhow::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::graph::Network;
use crate::linalg;
use crate::problem::{
    LinkCost, LogisticNodeCost, NodeCost, ProblemInstance, QuadraticFormLinkCost,
    QuadraticLinkCost, QuadraticNodeCost,
};

fn normal_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Per-node labeled samples for the logistic experiments. Features are
/// i.i.d. standard normal; each node's true classifier is a shared base
/// vector plus a small per-node perturbation, so neighbors stay similar
/// and the quadratic coupling is meaningful; labels are sampled from the
/// classifier's own sigmoid probabilities.
pub fn generate_logistic_data(
    net: &Network,
    p: usize,
    q: usize,
    data_seed: u64,
) -> Vec<Vec<(Vec<f64>, i8)>> {
    assert!(p >= 1 && q >= 1, "need p >= 1 and q >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
    let n = net.node_count();
    let base = normal_vec(&mut rng, p);
    let truths: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut t = base.clone();
            linalg::axpy(0.1, &normal_vec(&mut rng, p), &mut t);
            t
        })
        .collect();
    truths
        .iter()
        .map(|truth| {
            (0..q)
                .map(|_| {
                    let u = normal_vec(&mut rng, p);
                    let prob = sigmoid(linalg::dot(&u, truth));
                    let label = if rng.random::<f64>() < prob { 1 } else { -1 };
                    (u, label)
                })
                .collect()
        })
        .collect()
}

/// Logistic losses at every node, quadratic coupling on every link.
pub fn logistic_instance(
    net: Network,
    p: usize,
    q: usize,
    beta_reg: f64,
    data_seed: u64,
) -> Result<ProblemInstance> {
    let data = generate_logistic_data(&net, p, q, data_seed);
    let mut node_costs: Vec<Box<dyn NodeCost>> = Vec::with_capacity(net.node_count());
    for samples in data {
        node_costs.push(Box::new(LogisticNodeCost::new(samples)?));
    }
    let link_costs: Vec<Box<dyn LinkCost>> = (0..net.link_count())
        .map(|_| Ok(Box::new(QuadraticLinkCost::new(beta_reg, p)?) as Box<dyn LinkCost>))
        .collect::<Result<_>>()?;
    Ok(ProblemInstance::new(net, p, node_costs, link_costs)?)
}

const NODE_SPECTRUM: (f64, f64) = (1.0, 2.0);
const LINK_SPECTRUM: (f64, f64) = (0.5, 1.5);

fn spectrum(lo: f64, hi: f64, dim: usize) -> Vec<f64> {
    if dim == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..dim)
        .map(|q| lo + (hi - lo) * q as f64 / (dim - 1) as f64)
        .collect()
}

/// Random orthogonal matrix via Gram-Schmidt on a Gaussian matrix.
fn random_rotation(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v = normal_vec(rng, dim);
        for col in &cols {
            let proj = linalg::dot(&v, col);
            linalg::axpy(-proj, col, &mut v);
        }
        let norm = linalg::norm2(&v);
        if norm > 1e-8 {
            cols.push(v.iter().map(|x| x / norm).collect());
        }
    }
    // rows of the rotation are the orthonormal columns transposed
    (0..dim)
        .map(|r| (0..dim).map(|c| cols[c][r]).collect())
        .collect()
}

fn rotated_spd(rng: &mut ChaCha8Rng, eigenvalues: &[f64]) -> Vec<Vec<f64>> {
    let dim = eigenvalues.len();
    let rot = random_rotation(rng, dim);
    let mut out = vec![vec![0.0; dim]; dim];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (0..dim)
                .map(|k| rot[r][k] * eigenvalues[k] * rot[c][k])
                .sum();
        }
    }
    // symmetrize away rounding
    for r in 0..dim {
        for c in 0..r {
            let avg = 0.5 * (out[r][c] + out[c][r]);
            out[r][c] = avg;
            out[c][r] = avg;
        }
    }
    out
}

/// Strongly convex quadratic instance: every node cost is a rotated
/// quadratic with eigenvalues spanning [1, 2] and a random linear term;
/// every directed link carries an independent rotated quadratic form with
/// eigenvalues spanning [0.5, 1.5] on the stacked argument.
pub fn quadratic_instance(net: Network, p: usize, data_seed: u64) -> Result<ProblemInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
    let node_eigs = spectrum(NODE_SPECTRUM.0, NODE_SPECTRUM.1, p);
    let link_eigs = spectrum(LINK_SPECTRUM.0, LINK_SPECTRUM.1, 2 * p);

    let mut node_costs: Vec<Box<dyn NodeCost>> = Vec::with_capacity(net.node_count());
    for _ in 0..net.node_count() {
        let q = rotated_spd(&mut rng, &node_eigs);
        let b = normal_vec(&mut rng, p);
        node_costs.push(Box::new(QuadraticNodeCost::new(q, b)?));
    }
    let mut link_costs: Vec<Box<dyn LinkCost>> = Vec::with_capacity(net.link_count());
    for _ in 0..net.link_count() {
        let h = rotated_spd(&mut rng, &link_eigs);
        let mut b = normal_vec(&mut rng, 2 * p);
        for v in &mut b {
            *v *= 0.3;
        }
        link_costs.push(Box::new(QuadraticFormLinkCost::new(h, b, p)?));
    }
    Ok(ProblemInstance::new(net, p, node_costs, link_costs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_topology, TopologyKind};
    use crate::problem::network_constants;
    use approx::assert_relative_eq;

    #[test]
    fn logistic_data_shapes() {
        let net = build_topology(TopologyKind::Cycle, 10).unwrap();
        let data = generate_logistic_data(&net, 2, 50, 3);
        assert_eq!(data.len(), 10);
        assert!(data.iter().all(|s| s.len() == 50));
        assert!(data
            .iter()
            .flatten()
            .all(|(u, t)| u.len() == 2 && (*t == 1 || *t == -1)));

        let net = build_topology(TopologyKind::Cycle, 30).unwrap();
        let data = generate_logistic_data(&net, 5, 10, 3);
        assert_eq!(data.len(), 30);
        assert!(data.iter().all(|s| s.len() == 10 && s[0].0.len() == 5));
    }

    #[test]
    fn logistic_labels_are_roughly_balanced_for_default_seed() {
        let net = build_topology(TopologyKind::Cycle, 10).unwrap();
        let data = generate_logistic_data(&net, 2, 50, 1);
        let total = 500.0;
        let positives = data.iter().flatten().filter(|(_, t)| *t == 1).count() as f64;
        let balance = positives / total;
        assert!(balance > 0.2 && balance < 0.8, "balance {balance}");
    }

    #[test]
    fn data_is_seed_deterministic() {
        let net = build_topology(TopologyKind::Cycle, 6).unwrap();
        let a = generate_logistic_data(&net, 3, 8, 42);
        let b = generate_logistic_data(&net, 3, 8, 42);
        assert_eq!(a, b);
        let c = generate_logistic_data(&net, 3, 8, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn logistic_constants_match_the_sample_formula() {
        // L = max(4 beta, 1/4 max_i sum_l ||u_il||^2), recomputed from the
        // generated samples
        let net = build_topology(TopologyKind::Cycle, 8).unwrap();
        let (p, q, beta, seed) = (2usize, 50usize, 1.0f64, 11u64);
        let data = generate_logistic_data(&net, p, q, seed);
        let worst_node = data
            .iter()
            .map(|samples| 0.25 * samples.iter().map(|(u, _)| linalg::dot(u, u)).sum::<f64>())
            .fold(0.0_f64, f64::max);
        let expect = (4.0 * beta).max(worst_node);

        let inst = logistic_instance(net, p, q, beta, seed).unwrap();
        let consts = network_constants(&inst).unwrap();
        assert_relative_eq!(consts.lipschitz, expect, epsilon = 1e-12);
        assert_eq!(consts.strong_convexity, 0.0);

        // at the zero vector every sample contributes log 2 and the
        // couplings vanish
        let total = inst.total_cost(&vec![0.0; inst.x_dim()]).unwrap();
        assert_relative_eq!(
            total,
            (8 * q) as f64 * std::f64::consts::LN_2,
            epsilon = 1e-9
        );
    }

    #[test]
    fn quadratic_instance_has_the_pinned_constants() {
        let net = build_topology(TopologyKind::Cycle, 6).unwrap();
        let inst = quadratic_instance(net, 2, 9).unwrap();
        let consts = network_constants(&inst).unwrap();
        assert_relative_eq!(consts.lipschitz, 2.0, epsilon = 1e-9);
        assert_relative_eq!(consts.strong_convexity, 0.5, epsilon = 1e-9);
        assert_eq!(consts.max_degree, 2);
        // M = L sqrt(K^2 + K) = 2 sqrt(6)
        assert_relative_eq!(
            consts.stacked_lipschitz,
            2.0 * 6.0_f64.sqrt(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn rotations_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rot = random_rotation(&mut rng, 4);
        for r in 0..4 {
            for c in 0..4 {
                let dot: f64 = (0..4).map(|k| rot[k][r] * rot[k][c]).sum();
                let expect = if r == c { 1.0 } else { 0.0 };
                assert_relative_eq!(dot, expect, epsilon = 1e-12);
            }
        }
    }
}
