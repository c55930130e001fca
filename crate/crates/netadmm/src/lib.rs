//! Decentralized network cost minimization over undirected graphs, where
//! every node and every directed link carries its own convex cost.
//!
//! Two synchronous round-based solvers share one consensus splitting:
//! a linearized ADMM whose per-node updates are closed form, and an exact
//! ADMM baseline that solves each local proximal subproblem with an inner
//! iterative method. A centralized reference solve, first-order residual
//! tracking, and a linear-rate certificate calculator provide the
//! convergence diagnostics; the harness module turns JSON experiment
//! configs into persisted traces.

pub mod analysis;
pub mod dadmm;
pub mod dladmm;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod problem;
pub mod reference;
