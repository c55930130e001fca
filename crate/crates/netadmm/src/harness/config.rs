//! JSON experiment configuration and instance construction.
//!
//! Every run is fully described by one config file; all randomness is
//! seeded. Generator seeds left out of the config derive deterministically
//! from `run_seed`, so a config file always reproduces the same run.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::graph::{
    build_random_avg_degree, build_small_world, build_topology, Network, TopologyKind,
};
use crate::harness::data::{logistic_instance, quadratic_instance};
use crate::problem::ProblemInstance;
use crate::reference::ReferenceConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    Line {
        n: usize,
    },
    Star {
        n: usize,
    },
    Complete {
        n: usize,
    },
    Cycle {
        n: usize,
    },
    SmallWorld {
        n: usize,
        extra_links: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    RandomAvgDegree {
        n: usize,
        avg_degree: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Per-node logistic losses over synthetic labeled samples with a
    /// quadratic coupling on every link.
    Logistic {
        p: usize,
        q: usize,
        #[serde(default = "default_beta_reg")]
        beta_reg: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data_seed: Option<u64>,
    },
    /// Strongly convex quadratic node and link costs with pinned spectra
    /// (node eigenvalues span [1, 2], link eigenvalues span [0.5, 1.5]).
    Quadratic {
        p: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data_seed: Option<u64>,
    },
}

fn default_beta_reg() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMethodSpec {
    Gd,
    ExactQuadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerSpec {
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_max_inner_iters")]
    pub max_inner_iters: usize,
    #[serde(default = "default_inner_method")]
    pub method: InnerMethodSpec,
}

fn default_grad_tol() -> f64 {
    1e-10
}

fn default_max_inner_iters() -> usize {
    10_000
}

fn default_inner_method() -> InnerMethodSpec {
    InnerMethodSpec::Gd
}

impl Default for InnerSpec {
    fn default() -> Self {
        InnerSpec {
            grad_tol: default_grad_tol(),
            max_inner_iters: default_max_inner_iters(),
            method: default_inner_method(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverSpec {
    Dladmm {
        rho: f64,
        c: f64,
        #[serde(default = "default_dladmm_iters")]
        max_iters: usize,
        #[serde(default = "default_divergence_guard")]
        divergence_guard: f64,
    },
    Dadmm {
        rho: f64,
        #[serde(default = "default_dadmm_iters")]
        max_iters: usize,
        #[serde(default)]
        inner: InnerSpec,
        #[serde(default = "default_divergence_guard")]
        divergence_guard: f64,
    },
}

fn default_dladmm_iters() -> usize {
    2_000
}

fn default_dadmm_iters() -> usize {
    400
}

fn default_divergence_guard() -> f64 {
    1e6
}

impl SolverSpec {
    pub fn algorithm_name(&self) -> &'static str {
        match self {
            SolverSpec::Dladmm { .. } => "dladmm",
            SolverSpec::Dadmm { .. } => "dadmm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologySpec,
    pub problem: ProblemSpec,
    pub solvers: Vec<SolverSpec>,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub run_seed: u64,
    /// Relative error at which a run counts as converged.
    #[serde(default = "default_rel_err_target")]
    pub rel_err_target: f64,
}

fn default_rel_err_target() -> f64 {
    1e-6
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).context("parsing experiment config")?;
        if cfg.solvers.is_empty() {
            bail!("config lists no solvers");
        }
        for (idx, solver) in cfg.solvers.iter().enumerate() {
            match solver {
                SolverSpec::Dladmm {
                    rho,
                    c,
                    divergence_guard,
                    ..
                } => {
                    if *rho <= 0.0 || *c <= 0.0 || *divergence_guard <= 0.0 {
                        bail!("solver {idx}: rho, c and divergence_guard must be positive");
                    }
                }
                SolverSpec::Dadmm {
                    rho,
                    inner,
                    divergence_guard,
                    ..
                } => {
                    if *rho <= 0.0 || *divergence_guard <= 0.0 {
                        bail!("solver {idx}: rho and divergence_guard must be positive");
                    }
                    if inner.grad_tol <= 0.0 {
                        bail!("solver {idx}: inner grad_tol must be positive");
                    }
                }
            }
        }
        if cfg.reference.tol <= 0.0 || cfg.rel_err_target <= 0.0 {
            bail!("reference tol and rel_err_target must be positive");
        }
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text)
    }

    /// Seed for the topology generator; explicit seeds win, otherwise it
    /// derives from the run seed.
    pub fn topology_seed(&self) -> u64 {
        let explicit = match &self.topology {
            TopologySpec::SmallWorld { seed, .. } => *seed,
            TopologySpec::RandomAvgDegree { seed, .. } => *seed,
            _ => None,
        };
        explicit.unwrap_or(self.run_seed)
    }

    pub fn data_seed(&self) -> u64 {
        let explicit = match &self.problem {
            ProblemSpec::Logistic { data_seed, .. } => *data_seed,
            ProblemSpec::Quadratic { data_seed, .. } => *data_seed,
        };
        explicit.unwrap_or_else(|| self.run_seed.wrapping_add(1))
    }

    pub fn block_dim(&self) -> usize {
        match &self.problem {
            ProblemSpec::Logistic { p, .. } => *p,
            ProblemSpec::Quadratic { p, .. } => *p,
        }
    }
}

pub fn build_network(cfg: &ExperimentConfig) -> Result<Network> {
    let seed = cfg.topology_seed();
    let net = match &cfg.topology {
        TopologySpec::Line { n } => build_topology(TopologyKind::Line, *n)?,
        TopologySpec::Star { n } => build_topology(TopologyKind::Star, *n)?,
        TopologySpec::Complete { n } => build_topology(TopologyKind::Complete, *n)?,
        TopologySpec::Cycle { n } => build_topology(TopologyKind::Cycle, *n)?,
        TopologySpec::SmallWorld { n, extra_links, .. } => {
            build_small_world(*n, *extra_links, seed)?
        }
        TopologySpec::RandomAvgDegree { n, avg_degree, .. } => {
            build_random_avg_degree(*n, *avg_degree, seed)?
        }
    };
    Ok(net)
}

pub fn build_instance(net: Network, cfg: &ExperimentConfig) -> Result<ProblemInstance> {
    let data_seed = cfg.data_seed();
    let inst = match &cfg.problem {
        ProblemSpec::Logistic { p, q, beta_reg, .. } => {
            logistic_instance(net, *p, *q, *beta_reg, data_seed)?
        }
        ProblemSpec::Quadratic { p, .. } => quadratic_instance(net, *p, data_seed)?,
    };
    Ok(inst)
}
