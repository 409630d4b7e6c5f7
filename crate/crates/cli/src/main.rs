//! `reclaim`: reclaim, verify, synthesize and recompose reach-avoid
//! certificates from the command line.
//!
//! Every run prints one JSON report (stdout, or `--report FILE`). Exit status
//! is 0 on success, 1 on a negative verdict and 2 on invalid input.

mod inputs;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use reclaim_core::bounds::PolicySpec;
use reclaim_core::compose::recycle_graph;
use reclaim_core::infimum::RefinementConfig;
use reclaim_core::learner::{synthesize_with_log, TrainConfig};
use reclaim_core::model::{Aabb, Edge, ReachAvoidSpec};
use reclaim_core::reclaim::reclaim;
use reclaim_core::scenarios::Scenario;
use reclaim_core::simulate::{estimate_reach_avoid, make_absorbing, SimConfig};
use reclaim_core::verifier::{
    max_certifiable_threshold, recertify_worstcase, verify_certificate, worst_case_setting,
    VerificationConfig, VerificationReport,
};
use serde::Serialize;
use serde_json::{json, Value};

use inputs::{InputRecord, Inputs};

/// Counterexample cells listed in a verification report.
const REPORTED_CELLS: usize = 100;

#[derive(Parser)]
#[command(
    name = "reclaim",
    version,
    about = "Reclaim reach-avoid guarantees after local dynamics changes"
)]
struct Cli {
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    report: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bound the certificate infimum over a changed region and reclaim a threshold.
    Reclaim {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long)]
        certificate: PathBuf,
        /// Changed region: a region file, `room:V`, or `empty`.
        #[arg(long)]
        region: String,
        #[command(flatten)]
        refine: RefineArgs,
    },
    /// Check the certificate conditions soundly.
    Verify {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long)]
        certificate: PathBuf,
        /// Verify on the worst case for this changed region (absorbing and unsafe).
        #[arg(long)]
        worst_case: Option<String>,
        #[command(flatten)]
        verify: VerifyArgs,
    },
    /// Learn a certificate with counterexample-guided training.
    Synthesize {
        #[command(flatten)]
        task: TaskArgs,
        /// Training configuration (JSON); missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the certified network.
        #[arg(long)]
        out: PathBuf,
        /// Training log, one JSON object per round.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        verify: VerifyArgs,
    },
    /// Binary search for the largest certified threshold.
    MaxThreshold {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long)]
        certificate: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        verify: VerifyArgs,
    },
    /// Threshold search on the worst-case system for a changed region.
    Recertify {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long)]
        certificate: PathBuf,
        #[arg(long)]
        region: String,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        verify: VerifyArgs,
    },
    /// Reclaim every edge of a task graph and pick the best path.
    Compose {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        region: String,
        #[command(flatten)]
        refine: RefineArgs,
    },
    /// Monte Carlo reach-avoid estimate.
    Simulate {
        #[command(flatten)]
        task: TaskArgs,
        /// Make this region absorbing before simulating.
        #[arg(long)]
        absorbing: Option<String>,
        /// Initial state as comma-separated coordinates; repeatable.
        /// Defaults to the corners and centre of every initial box.
        #[arg(long = "init", value_parser = parse_point)]
        init: Vec<Vec<f64>>,
        #[arg(long, default_value_t = 10_000)]
        trajectories: usize,
        #[arg(long, default_value_t = 300)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.99)]
        confidence: f64,
    },
    /// Certificate values on an N×N grid as `x,y,value` CSV rows.
    Heatmap {
        #[arg(long)]
        certificate: PathBuf,
        #[arg(long, default_value_t = 100)]
        grid: usize,
        /// CSV destination.
        #[arg(long)]
        out: PathBuf,
        /// Take the domain from this scenario's state space.
        #[arg(long, conflicts_with = "domain")]
        scenario: Option<String>,
        /// Domain as `x0,y0,x1,y1`.
        #[arg(long, value_parser = parse_point)]
        domain: Option<std::vec::Vec<f64>>,
    },
}

#[derive(Args, Serialize)]
struct TaskArgs {
    /// Scenario file or `builtin:nine_rooms` / `builtin:toy_1d`.
    #[arg(long)]
    scenario: String,
    /// Use the subtask of this graph edge, as `FROM,TO`.
    #[arg(long, value_parser = parse_edge)]
    edge: Option<Edge>,
    /// Override the specification threshold.
    #[arg(long)]
    rho: Option<f64>,
    /// Policy file overriding the scenario or edge policy.
    #[arg(long)]
    policy: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct RefineArgs {
    /// Stop when I⁺ - I⁻ falls to this gap.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Maximum number of cells to explore.
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
}

impl RefineArgs {
    fn config(&self) -> RefinementConfig {
        RefinementConfig {
            gap_tolerance: self.tol,
            max_cells: self.budget,
            target_value: None,
        }
    }
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    noise_cells: Option<usize>,
}

impl VerifyArgs {
    fn apply(&self, base: VerificationConfig) -> VerificationConfig {
        VerificationConfig {
            epsilon: self.epsilon.unwrap_or(base.epsilon),
            initial_cells_per_dim: self.cells.unwrap_or(base.initial_cells_per_dim),
            max_refine_depth: self.depth.unwrap_or(base.max_refine_depth),
            noise_cells_per_dim: self.noise_cells.unwrap_or(base.noise_cells_per_dim),
        }
    }
}

#[derive(Args, Serialize)]
struct SearchArgs {
    #[arg(long, default_value_t = 0.0)]
    lo: f64,
    #[arg(long, default_value_t = 0.999)]
    hi: f64,
    #[arg(long = "search-tol", default_value_t = 1e-3)]
    search_tol: f64,
}

fn parse_point(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect()
}

fn parse_edge(s: &str) -> Result<Edge, String> {
    let (a, b) = s.split_once(',').ok_or("edge must look like FROM,TO")?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

/// Why a run did not succeed.
#[derive(Debug)]
pub struct Failure {
    message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

impl From<reclaim_core::Error> for Failure {
    fn from(e: reclaim_core::Error) -> Self {
        Failure::input(e.to_string())
    }
}

/// Result payload and exit status of a completed run.
struct Outcome {
    result: Value,
    status: u8,
}

impl Outcome {
    fn new(result: impl Serialize, success: bool) -> Self {
        Self {
            result: serde_json::to_value(result).expect("reports serialize"),
            status: if success { 0 } else { 1 },
        }
    }
}

#[derive(Serialize)]
struct RunReport {
    command: &'static str,
    inputs: Vec<InputRecord>,
    parameters: Value,
    wall_time_seconds: f64,
    result: Value,
    exit_status: u8,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, parameters) = describe(&cli.command);
    let mut inputs = Inputs::default();
    let start = Instant::now();
    let outcome = run(cli.command, &mut inputs).unwrap_or_else(|f| {
        eprintln!("error: {}", f.message);
        Outcome {
            result: json!({ "error": f.message }),
            status: 2,
        }
    });
    let report = RunReport {
        command: name,
        inputs: inputs.records,
        parameters,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        result: outcome.result,
        exit_status: outcome.status,
    };
    let text = serde_json::to_string_pretty(&report).expect("reports serialize");
    let written = match &cli.report {
        Some(path) => std::fs::write(path, text + "\n"),
        None => writeln!(std::io::stdout(), "{text}"),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return ExitCode::from(2);
    }
    ExitCode::from(outcome.status)
}

fn describe(cmd: &Command) -> (&'static str, Value) {
    match cmd {
        Command::Reclaim {
            task,
            certificate,
            region,
            refine,
        } => (
            "reclaim",
            json!({ "task": task, "certificate": certificate, "region": region, "refine": refine }),
        ),
        Command::Verify {
            task,
            certificate,
            worst_case,
            verify,
        } => (
            "verify",
            json!({ "task": task, "certificate": certificate, "worst_case": worst_case, "verify": verify }),
        ),
        Command::Synthesize {
            task,
            config,
            seed,
            out,
            log,
            verify,
        } => (
            "synthesize",
            json!({ "task": task, "config": config, "seed": seed, "out": out, "log": log, "verify": verify }),
        ),
        Command::MaxThreshold {
            task,
            certificate,
            search,
            verify,
        } => (
            "max-threshold",
            json!({ "task": task, "certificate": certificate, "search": search, "verify": verify }),
        ),
        Command::Recertify {
            task,
            certificate,
            region,
            search,
            verify,
        } => (
            "recertify",
            json!({ "task": task, "certificate": certificate, "region": region, "search": search, "verify": verify }),
        ),
        Command::Compose {
            graph,
            region,
            refine,
        } => (
            "compose",
            json!({ "graph": graph, "region": region, "refine": refine }),
        ),
        Command::Simulate {
            task,
            absorbing,
            init,
            trajectories,
            horizon,
            seed,
            confidence,
        } => (
            "simulate",
            json!({
                "task": task, "absorbing": absorbing, "init": init, "trajectories": trajectories,
                "horizon": horizon, "seed": seed, "confidence": confidence,
            }),
        ),
        Command::Heatmap {
            certificate,
            grid,
            out,
            scenario,
            domain,
        } => (
            "heatmap",
            json!({ "certificate": certificate, "grid": grid, "out": out, "scenario": scenario, "domain": domain }),
        ),
    }
}

/// Scenario, specification and policy selected by `args`.
fn load_task(
    args: &TaskArgs,
    inputs: &mut Inputs,
) -> Result<(Scenario, ReachAvoidSpec, PolicySpec), Failure> {
    let scenario = inputs.scenario(&args.scenario)?;
    let (mut spec, mut policy) = match args.edge {
        Some(e) => (
            scenario.edge_subtask(e, scenario.global_spec.rho)?,
            scenario.edge_policy(e)?,
        ),
        None => (scenario.global_spec.clone(), scenario.policy.clone()),
    };
    if let Some(rho) = args.rho {
        spec = spec.with_rho(rho)?;
    }
    if let Some(path) = &args.policy {
        policy = inputs.policy(path)?;
    }
    policy.validate_for(&scenario.system)?;
    Ok((scenario, spec, policy))
}

fn verification_summary(r: &VerificationReport) -> Value {
    json!({
        "verdict": r.verdict,
        "failed_condition": r.failed_condition,
        "counterexample_count": r.counterexample_cells.len(),
        "counterexample_cells": r.counterexample_cells.iter().take(REPORTED_CELLS).collect::<Vec<_>>(),
        "cells_checked": r.cells_checked,
        "epsilon_used": r.epsilon_used,
    })
}

fn run(cmd: Command, inputs: &mut Inputs) -> Result<Outcome, Failure> {
    match cmd {
        Command::Reclaim {
            task,
            certificate,
            region,
            refine,
        } => {
            let (scenario, spec, _) = load_task(&task, inputs)?;
            let cert = inputs.network("certificate", &certificate)?;
            let changed = inputs.region(
                &region,
                scenario.system.state_dim(),
                Some(&scenario.system.state_space),
            )?;
            let r = reclaim(&cert, spec.rho, &changed, &refine.config())?;
            let mut result = r.report();
            result["rho"] = json!(spec.rho);
            result["converged"] = json!(r.inf_bounds.converged);
            Ok(Outcome::new(result, r.is_reclaimed()))
        }
        Command::Verify {
            task,
            certificate,
            worst_case,
            verify,
        } => {
            let (scenario, spec, policy) = load_task(&task, inputs)?;
            let cert = inputs.network("certificate", &certificate)?;
            let cfg = verify.apply(VerificationConfig::default());
            let (sys, spec) = match worst_case {
                Some(region) => {
                    let changed = inputs.region(
                        &region,
                        scenario.system.state_dim(),
                        Some(&scenario.system.state_space),
                    )?;
                    worst_case_setting(&scenario.system, &spec, &changed)?
                }
                None => (scenario.system.clone(), spec),
            };
            let report = verify_certificate(&cert, &sys, &policy, &spec, &cfg)?;
            let mut result = verification_summary(&report);
            result["rho"] = json!(spec.rho);
            Ok(Outcome::new(result, report.is_certified()))
        }
        Command::Synthesize {
            task,
            config,
            seed,
            out,
            log,
            verify,
        } => {
            let (scenario, spec, policy) = load_task(&task, inputs)?;
            let mut cfg: TrainConfig = match &config {
                Some(path) => inputs.json("training config", path)?,
                None => TrainConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            cfg.verification = verify.apply(cfg.verification);
            let mut lines = String::new();
            let syn = synthesize_with_log(&scenario.system, &policy, &spec, &cfg, |entry| {
                let line = serde_json::to_string(entry).expect("log entries serialize");
                eprintln!("{line}");
                lines.push_str(&line);
                lines.push('\n');
            })?;
            if let Some(path) = &log {
                write_file(path, &lines)?;
            }
            let certified = syn.report.is_certified();
            if certified {
                let text =
                    serde_json::to_string_pretty(&syn.certificate).expect("networks serialize");
                write_file(&out, &(text + "\n"))?;
            }
            Ok(Outcome::new(
                json!({
                    "verdict": syn.report.verdict,
                    "rho": spec.rho,
                    "rounds": syn.log.len(),
                    "certificate": certified.then_some(&out),
                    "parameter_count": syn.certificate.parameter_count(),
                    "log": syn.log,
                    "verification": verification_summary(&syn.report),
                }),
                certified,
            ))
        }
        Command::MaxThreshold {
            task,
            certificate,
            search,
            verify,
        } => {
            let (scenario, spec, policy) = load_task(&task, inputs)?;
            let cert = inputs.network("certificate", &certificate)?;
            let cfg = verify.apply(VerificationConfig::default());
            let best = max_certifiable_threshold(
                &cert,
                &scenario.system,
                &policy,
                &spec,
                search.lo,
                search.hi,
                search.search_tol,
                &cfg,
            )?;
            Ok(Outcome::new(json!({ "threshold": best }), best.is_some()))
        }
        Command::Recertify {
            task,
            certificate,
            region,
            search,
            verify,
        } => {
            let (scenario, spec, policy) = load_task(&task, inputs)?;
            let cert = inputs.network("certificate", &certificate)?;
            let changed = inputs.region(
                &region,
                scenario.system.state_dim(),
                Some(&scenario.system.state_space),
            )?;
            let cfg = verify.apply(VerificationConfig::default());
            let best = recertify_worstcase(
                &cert,
                &scenario.system,
                &policy,
                &spec,
                &changed,
                &cfg,
                search.lo,
                search.hi,
                search.search_tol,
            )?;
            Ok(Outcome::new(json!({ "threshold": best }), best.is_some()))
        }
        Command::Compose {
            graph,
            region,
            refine,
        } => {
            let (graph, assets) = inputs.graph(&graph)?;
            let dim = assets
                .iter()
                .next()
                .map(|(_, a)| a.certificate.input_dim())
                .ok_or_else(|| Failure::input("graph has no edges"))?;
            // Certificates are defined everywhere, so only the dimension is checked.
            let changed = inputs.region(&region, dim, None)?;
            let r = recycle_graph(&graph, &assets, &changed, &refine.config())?;
            let ok = r.plan.is_some();
            Ok(Outcome::new(r, ok))
        }
        Command::Simulate {
            task,
            absorbing,
            init,
            trajectories,
            horizon,
            seed,
            confidence,
        } => {
            let (scenario, spec, policy) = load_task(&task, inputs)?;
            let sys = match absorbing {
                Some(region) => {
                    let r = inputs.region(
                        &region,
                        scenario.system.state_dim(),
                        Some(&scenario.system.state_space),
                    )?;
                    make_absorbing(&scenario.system, &r)?
                }
                None => scenario.system.clone(),
            };
            let init = if init.is_empty() {
                default_starts(&spec)
            } else {
                init
            };
            let cfg = SimConfig {
                horizon,
                trajectories,
                seed,
                confidence,
            };
            let summary = estimate_reach_avoid(&sys, &policy, &spec, &init, &cfg)?;
            Ok(Outcome::new(summary, true))
        }
        Command::Heatmap {
            certificate,
            grid,
            out,
            scenario,
            domain,
        } => {
            let cert = inputs.network("certificate", &certificate)?;
            let space = match (scenario, domain) {
                (Some(s), None) => inputs.scenario(&s)?.system.state_space,
                (None, Some(d)) if d.len() == 4 => Aabb::new(vec![d[0], d[1]], vec![d[2], d[3]])?,
                (None, Some(_)) => return Err(Failure::input("--domain needs x0,y0,x1,y1")),
                _ => return Err(Failure::input("heatmap needs --scenario or --domain")),
            };
            let (rows, lo, hi) = heatmap(&cert, &space, grid)?;
            write_file(&out, &rows)?;
            Ok(Outcome::new(
                json!({ "out": out, "rows": grid * grid, "min": lo, "max": hi }),
                true,
            ))
        }
    }
}

/// Corners and centre of each initial box.
fn default_starts(spec: &ReachAvoidSpec) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for b in spec.initial.boxes() {
        let d = b.dim();
        for mask in 0..(1usize << d) {
            out.push(
                (0..d)
                    .map(|i| {
                        if mask >> i & 1 == 1 {
                            b.upper()[i]
                        } else {
                            b.lower()[i]
                        }
                    })
                    .collect(),
            );
        }
        out.push(b.center());
    }
    out
}

/// Round to nine significant digits and print the shortest exact form.
fn sig9(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn heatmap(
    cert: &reclaim_core::bounds::FeedForwardNetwork,
    space: &Aabb,
    n: usize,
) -> Result<(String, f64, f64), Failure> {
    if space.dim() != 2 || cert.input_dim() != 2 {
        return Err(Failure::input(
            "heatmap needs a two-dimensional state space and certificate",
        ));
    }
    if n < 2 {
        return Err(Failure::input("heatmap grid must be at least 2"));
    }
    let coord = |i: usize, k: usize| {
        let t = k as f64 / (n - 1) as f64;
        space.lower()[i] + t * space.width(i)
    };
    let mut out = String::new();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for row in 0..n {
        for col in 0..n {
            let (x, y) = (coord(0, col), coord(1, row));
            let c = cert.evaluate(&[x, y])?[0];
            lo = lo.min(c);
            hi = hi.max(c);
            out.push_str(&format!("{},{},{}\n", sig9(x), sig9(y), sig9(c)));
        }
    }
    Ok((out, lo, hi))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}
