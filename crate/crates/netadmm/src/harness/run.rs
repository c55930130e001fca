//! Experiment orchestration: build, solve, trace, persist.
//!
//! A run directory holds `reference.json` (the persisted optimal point),
//! one subdirectory per solver with `trace.csv`, `x_iterates.json` and,
//! for the linearized solver, `certificate.json`, plus `plot.csv` and
//! `summary.json` at the top. Runs inside a sweep execute in parallel;
//! every run writes only its own directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{certify_run, rate_certificate, CertificationReport, RateCertificate};
use crate::dadmm::{self, DadmmConfig, DadmmError, InnerMethod, InnerSolverConfig};
use crate::dladmm::{self, SolverConfig, SolverState};
use crate::graph::{constraint_matrices, ConstraintMatrices};
use crate::harness::config::{
    build_instance, build_network, ExperimentConfig, InnerMethodSpec, SolverSpec, TopologySpec,
};
use crate::harness::trace::{emit_plot_data, write_trace_csv, RunStatus, RunTrace, TraceRow};
use crate::linalg;
use crate::problem::{network_constants, NetworkConstants, ProblemInstance};
use crate::reference::{kkt_residuals, lambda_norm, solve_reference, OptimalPoint};

/// Everything a solver run needs that is independent of the solver choice.
pub struct PreparedExperiment {
    pub instance: ProblemInstance,
    pub matrices: ConstraintMatrices,
    pub constants: NetworkConstants,
    pub reference: OptimalPoint,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedExperiment> {
    let net = build_network(cfg)?;
    let instance = build_instance(net, cfg)?;
    let matrices = constraint_matrices(instance.network(), instance.block_dim())?;
    let constants = network_constants(&instance)?;
    let reference = solve_reference(&instance, &matrices, &cfg.reference)
        .map_err(|e| anyhow!("reference solve failed: {e}"))?;
    Ok(PreparedExperiment {
        instance,
        matrices,
        constants,
        reference,
    })
}

pub struct RunArtifacts {
    pub label: String,
    pub trace: RunTrace,
    pub x_iterates: Vec<Vec<f64>>,
    pub certificate: Option<RateCertificate>,
    pub report: Option<CertificationReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub status: RunStatus,
    pub rows: usize,
    pub final_rel_error: f64,
    pub iterations_to_target: Option<usize>,
    pub mean_wall_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub output_dir: PathBuf,
    pub rel_err_target: f64,
    pub runs: Vec<RunSummary>,
}

impl ExperimentSummary {
    pub fn any_diverged(&self) -> bool {
        self.runs.iter().any(|r| r.status == RunStatus::Diverged)
    }
}

pub struct ExperimentOutcome {
    pub summary: ExperimentSummary,
    pub artifacts: Vec<RunArtifacts>,
}

enum StepFailure {
    NonFinite,
    Fatal(anyhow::Error),
}

/// Runs one solver against a prepared experiment and records the full
/// diagnostic trace. The weighted distance uses the solver's own c for the
/// linearized algorithm and c = 0 for the exact baseline (the classic
/// two-block metric, which has no linearization weight).
pub fn run_solver(
    prep: &PreparedExperiment,
    spec: &SolverSpec,
    rel_err_target: f64,
) -> Result<RunArtifacts> {
    let inst = &prep.instance;
    let cm = &prep.matrices;
    let u_star = prep.reference.stacked();
    let x_star = &prep.reference.x_star;
    let x_star_norm = linalg::norm2(x_star).max(f64::MIN_POSITIVE);
    let x_dim = cm.x_dim();

    let (rho, lambda_c, max_iters, guard) = match spec {
        SolverSpec::Dladmm {
            rho,
            c,
            max_iters,
            divergence_guard,
        } => (*rho, *c, *max_iters, *divergence_guard),
        SolverSpec::Dadmm {
            rho,
            max_iters,
            divergence_guard,
            ..
        } => (*rho, 0.0, *max_iters, *divergence_guard),
    };

    let dladmm_cfg = match spec {
        SolverSpec::Dladmm {
            rho,
            c,
            max_iters,
            divergence_guard,
        } => Some(SolverConfig {
            rho: *rho,
            c: *c,
            max_iters: *max_iters,
            divergence_guard: *divergence_guard,
        }),
        _ => None,
    };
    let dadmm_cfg = match spec {
        SolverSpec::Dadmm {
            rho,
            max_iters,
            inner,
            divergence_guard,
        } => Some(DadmmConfig {
            rho: *rho,
            max_iters: *max_iters,
            inner: InnerSolverConfig {
                grad_tol: inner.grad_tol,
                max_inner_iters: inner.max_inner_iters,
                method: match inner.method {
                    InnerMethodSpec::Gd => InnerMethod::GradientDescent,
                    InnerMethodSpec::ExactQuadratic => InnerMethod::ExactQuadratic,
                },
            },
            divergence_guard: *divergence_guard,
        }),
        _ => None,
    };

    let step = |state: &mut SolverState| -> Result<(), StepFailure> {
        if let Some(cfg) = &dladmm_cfg {
            dladmm::iterate(state, inst, cfg).map_err(|_| StepFailure::NonFinite)
        } else {
            let cfg = dadmm_cfg.as_ref().unwrap();
            dadmm::iterate(state, inst, cfg).map_err(|e| match e {
                DadmmError::NonFinite => StepFailure::NonFinite,
                other => StepFailure::Fatal(anyhow!("inner solve failed: {other}")),
            })
        }
    };

    let measure = |k: usize, state: &SolverState, wall_ms: f64| -> TraceRow {
        let u = state.stacked();
        TraceRow {
            k,
            rel_error: linalg::dist2(&state.x, x_star) / x_star_norm,
            lambda_dist: lambda_norm(lambda_c, rho, x_dim, &u, &u_star),
            kkt: kkt_residuals(inst, cm, &u),
            wall_ms,
        }
    };

    let mut state = dladmm::init_state(inst);
    let mut rows = vec![measure(0, &state, 0.0)];
    let mut x_iterates = vec![state.x.clone()];
    let mut status = RunStatus::BudgetExhausted;
    let mut state_scale: Option<f64> = None;

    for k in 1..=max_iters {
        let started = Instant::now();
        let stepped = step(&mut state);
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        match stepped {
            Ok(()) => {}
            Err(StepFailure::NonFinite) => {
                status = RunStatus::Diverged;
                break;
            }
            Err(StepFailure::Fatal(e)) => return Err(e),
        }
        let row = measure(k, &state, wall_ms);
        let u_inf = linalg::norm_inf(&state.stacked());
        let scale = *state_scale.get_or_insert(u_inf.max(1.0));
        let runaway = !row.rel_error.is_finite() || row.rel_error > guard || u_inf > guard * scale;
        rows.push(row);
        x_iterates.push(state.x.clone());
        if runaway {
            status = RunStatus::Diverged;
            break;
        }
    }
    if status != RunStatus::Diverged {
        status = if rows.last().unwrap().rel_error <= rel_err_target {
            RunStatus::Converged
        } else {
            RunStatus::BudgetExhausted
        };
    }

    let trace = RunTrace { rows, status };
    let (certificate, report) = if let SolverSpec::Dladmm { rho, c, .. } = spec {
        let cert = rate_certificate(&prep.constants, *c, *rho, 2.0);
        let report = certify_run(&trace.lambda_dists(), &cert);
        (Some(cert), Some(report))
    } else {
        (None, None)
    };

    Ok(RunArtifacts {
        label: spec.algorithm_name().to_string(),
        trace,
        x_iterates,
        certificate,
        report,
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn summarize(artifact: &RunArtifacts, rel_err_target: f64) -> RunSummary {
    RunSummary {
        label: artifact.label.clone(),
        status: artifact.trace.status,
        rows: artifact.trace.rows.len(),
        final_rel_error: artifact.trace.final_rel_error(),
        iterations_to_target: artifact.trace.iterations_to_target(rel_err_target),
        mean_wall_ms: artifact.trace.mean_wall_ms(),
    }
}

/// Runs every solver in the config against a prepared experiment and
/// persists all artifacts under `out_dir`.
pub fn run_prepared(
    prep: &PreparedExperiment,
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<ExperimentOutcome> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write_json(&prep.reference, &out_dir.join("reference.json"))?;
    write_json(&prep.constants, &out_dir.join("constants.json"))?;

    let mut artifacts = Vec::with_capacity(cfg.solvers.len());
    let mut label_counts: std::collections::HashMap<&str, usize> = Default::default();
    for spec in &cfg.solvers {
        let mut artifact = run_solver(prep, spec, cfg.rel_err_target)?;
        let count = label_counts.entry(spec.algorithm_name()).or_insert(0);
        *count += 1;
        if *count > 1 {
            artifact.label = format!("{}_{}", artifact.label, count);
        }
        let solver_dir = out_dir.join(&artifact.label);
        std::fs::create_dir_all(&solver_dir)?;
        write_trace_csv(&artifact.trace, &solver_dir.join("trace.csv"))?;
        write_json(&artifact.x_iterates, &solver_dir.join("x_iterates.json"))?;
        if let (Some(cert), Some(report)) = (&artifact.certificate, &artifact.report) {
            #[derive(Serialize)]
            struct CertificateFile<'a> {
                certificate: &'a RateCertificate,
                report: &'a CertificationReport,
            }
            write_json(
                &CertificateFile {
                    certificate: cert,
                    report,
                },
                &solver_dir.join("certificate.json"),
            )?;
        }
        artifacts.push(artifact);
    }

    let labeled: Vec<(String, &RunTrace)> = artifacts
        .iter()
        .map(|a| (a.label.clone(), &a.trace))
        .collect();
    emit_plot_data(&labeled, &out_dir.join("plot.csv"))?;

    let summary = ExperimentSummary {
        output_dir: out_dir.to_path_buf(),
        rel_err_target: cfg.rel_err_target,
        runs: artifacts
            .iter()
            .map(|a| summarize(a, cfg.rel_err_target))
            .collect(),
    };
    write_json(&summary, &out_dir.join("summary.json"))?;
    Ok(ExperimentOutcome { summary, artifacts })
}

pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_override: Option<&Path>,
) -> Result<ExperimentOutcome> {
    let out_dir = out_override
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("netadmm_out"));
    let prep = prepare(cfg)?;
    run_prepared(&prep, cfg, &out_dir)
}

/// Parameters the sweep runner knows how to vary.
const SWEEPABLE: [&str; 5] = [
    "c",
    "rho",
    "topology.kind",
    "topology.extra_links",
    "topology.avg_degree",
];

fn apply_param(cfg: &ExperimentConfig, param: &str, value: &str) -> Result<ExperimentConfig> {
    let mut out = cfg.clone();
    match param {
        "c" => {
            let c: f64 = value.parse().context("parsing c value")?;
            let mut touched = false;
            for spec in &mut out.solvers {
                if let SolverSpec::Dladmm { c: slot, .. } = spec {
                    *slot = c;
                    touched = true;
                }
            }
            if !touched {
                bail!("sweeping c requires a dladmm solver in the config");
            }
        }
        "rho" => {
            let rho: f64 = value.parse().context("parsing rho value")?;
            for spec in &mut out.solvers {
                match spec {
                    SolverSpec::Dladmm { rho: slot, .. } => *slot = rho,
                    SolverSpec::Dadmm { rho: slot, .. } => *slot = rho,
                }
            }
        }
        "topology.kind" => {
            let (n, seed, extra) = match &cfg.topology {
                TopologySpec::Line { n }
                | TopologySpec::Star { n }
                | TopologySpec::Complete { n }
                | TopologySpec::Cycle { n } => (*n, None, None),
                TopologySpec::SmallWorld {
                    n,
                    extra_links,
                    seed,
                } => (*n, *seed, Some(*extra_links)),
                TopologySpec::RandomAvgDegree { n, seed, .. } => (*n, *seed, None),
            };
            out.topology = match value {
                "line" => TopologySpec::Line { n },
                "star" => TopologySpec::Star { n },
                "complete" => TopologySpec::Complete { n },
                "cycle" => TopologySpec::Cycle { n },
                "small_world" => TopologySpec::SmallWorld {
                    n,
                    extra_links: extra.ok_or_else(|| {
                        anyhow!("switching to small_world needs extra_links in the base config")
                    })?,
                    seed,
                },
                other => bail!("unknown topology kind {other:?}"),
            };
        }
        "topology.extra_links" => {
            let links: usize = value.parse().context("parsing extra_links value")?;
            match &mut out.topology {
                TopologySpec::SmallWorld { extra_links, .. } => *extra_links = links,
                _ => bail!("sweeping extra_links requires a small_world topology"),
            }
        }
        "topology.avg_degree" => {
            let deg: f64 = value.parse().context("parsing avg_degree value")?;
            match &mut out.topology {
                TopologySpec::RandomAvgDegree { avg_degree, .. } => *avg_degree = deg,
                _ => bail!("sweeping avg_degree requires a random_avg_degree topology"),
            }
        }
        other => bail!("unknown sweep parameter {other:?} (known: {SWEEPABLE:?})"),
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub param: String,
    pub output_dir: PathBuf,
    pub runs: Vec<(String, ExperimentSummary)>,
}

impl SweepSummary {
    pub fn any_diverged(&self) -> bool {
        self.runs.iter().any(|(_, s)| s.any_diverged())
    }
}

/// Runs the config once per parameter value, in parallel. Parameter values
/// that leave the instance unchanged (c, rho) share one reference solve.
pub fn sweep(
    cfg: &ExperimentConfig,
    param: &str,
    values: &[String],
    out_dir: &Path,
) -> Result<SweepSummary> {
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    std::fs::create_dir_all(out_dir)?;
    let shared_prep = if matches!(param, "c" | "rho") {
        Some(prepare(cfg)?)
    } else {
        None
    };

    let outcomes: Vec<(String, ExperimentOutcome)> = values
        .par_iter()
        .map(|value| -> Result<(String, ExperimentOutcome)> {
            let run_cfg = apply_param(cfg, param, value)?;
            let subdir = out_dir.join(format!("{}={}", param.replace('.', "_"), value));
            let outcome = match &shared_prep {
                Some(prep) => run_prepared(prep, &run_cfg, &subdir)?,
                None => {
                    let prep = prepare(&run_cfg)?;
                    run_prepared(&prep, &run_cfg, &subdir)?
                }
            };
            Ok((value.clone(), outcome))
        })
        .collect::<Result<_>>()?;

    let single_solver = cfg.solvers.len() == 1;
    let labeled: Vec<(String, &RunTrace)> = outcomes
        .iter()
        .flat_map(|(value, outcome)| {
            outcome.artifacts.iter().map(move |a| {
                let label = if single_solver {
                    format!("{param}={value}")
                } else {
                    format!("{param}={value}:{}", a.label)
                };
                (label, &a.trace)
            })
        })
        .collect();
    emit_plot_data(&labeled, &out_dir.join("sweep_plot.csv"))?;

    let summary = SweepSummary {
        param: param.to_string(),
        output_dir: out_dir.to_path_buf(),
        runs: outcomes
            .into_iter()
            .map(|(value, outcome)| (value, outcome.summary))
            .collect(),
    };
    write_json(&summary, &out_dir.join("sweep_summary.json"))?;
    Ok(summary)
}
