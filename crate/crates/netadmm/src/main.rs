use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use netadmm::analysis::{certify_run, rate_certificate};
use netadmm::harness::config::{build_instance, build_network, ExperimentConfig, SolverSpec};
use netadmm::harness::{read_trace_rows, run_experiment, sweep};
use netadmm::problem::network_constants;

/// Simulator for decentralized network cost minimization with convergence
/// diagnostics.
#[derive(Parser)]
#[command(name = "netadmm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every solver in a config file and persist traces.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Exit nonzero when any run diverges.
        #[arg(long)]
        strict: bool,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the config once per value of a swept parameter
    /// (c, rho, topology.kind, topology.extra_links, topology.avg_degree).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a recorded trace against the rate certificate of the config's
    /// linearized solver.
    Certify {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("NETADMM_THREADS") {
        let threads: usize = value
            .parse()
            .context("NETADMM_THREADS must be a positive integer")?;
        if threads == 0 {
            bail!("NETADMM_THREADS must be a positive integer");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring worker pool")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run() -> Result<ExitCode> {
    configure_threads()?;
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            strict,
            out,
        } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let outcome = run_experiment(&cfg, out.as_deref())?;
            for run in &outcome.summary.runs {
                println!(
                    "{}: {} after {} rows (final rel error {:.3e}, to target: {})",
                    run.label,
                    run.status,
                    run.rows,
                    run.final_rel_error,
                    run.iterations_to_target
                        .map_or_else(|| "never".to_string(), |k| k.to_string()),
                );
            }
            println!("artifacts in {}", outcome.summary.output_dir.display());
            if strict && outcome.summary.any_diverged() {
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            config,
            param,
            values,
            strict,
            out,
        } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let out_dir = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("netadmm_sweep"));
            let summary = sweep(&cfg, &param, &values, &out_dir)?;
            for (value, experiment) in &summary.runs {
                for run in &experiment.runs {
                    println!(
                        "{param}={value} {}: {} (to target: {})",
                        run.label,
                        run.status,
                        run.iterations_to_target
                            .map_or_else(|| "never".to_string(), |k| k.to_string()),
                    );
                }
            }
            println!("artifacts in {}", summary.output_dir.display());
            if strict && summary.any_diverged() {
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Certify { trace, config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let (c, rho) = cfg
                .solvers
                .iter()
                .find_map(|s| match s {
                    SolverSpec::Dladmm { rho, c, .. } => Some((*c, *rho)),
                    _ => None,
                })
                .context("certify needs a dladmm solver in the config")?;
            let net = build_network(&cfg)?;
            let inst = build_instance(net, &cfg)?;
            let consts = network_constants(&inst)?;
            let certificate = rate_certificate(&consts, c, rho, 2.0);
            let rows = read_trace_rows(&trace)?;
            let dists: Vec<f64> = rows.iter().map(|r| r.lambda_dist).collect();
            let report = certify_run(&dists, &certificate);
            #[derive(serde::Serialize)]
            struct CertifyOutput<'a> {
                certificate: &'a netadmm::analysis::RateCertificate,
                report: &'a netadmm::analysis::CertificationReport,
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&CertifyOutput {
                    certificate: &certificate,
                    report: &report,
                })?
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
