//! Command-line front end for the consensus simulator.
//!
//! Four subcommands: `check` validates a scenario file and reports the
//! derived quantities (graph spectrum, convexity bounds, gain floors),
//! `run` integrates one scenario or a directory of them and writes the
//! trace/metrics/plot bundle, `oracle` prints the team minimizer a run
//! should converge to, and `scaffold` writes the two ready-made demo
//! scenarios as editable JSON.
//!
//! Logging is controlled by the `OPTCON_LOG` environment variable
//! (`error|warn|info|debug|trace`, default `warn`).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use optcon::controller::certified_gains;
use optcon::costs::{aggregate_convexity, global_minimizer};
use optcon::error::Error;
use optcon::presets::{example1, example2};
use optcon::sim::{run_scenario, run_scenarios, Scenario};

use optcon_cli::output::{print_summary, write_outputs, write_partial_trace};
use optcon_cli::scenario_file::ScenarioFile;

#[derive(Parser)]
#[command(
    name = "optcon",
    version,
    about = "Distributed optimal-consensus simulator for integrator teams \
             with unknown control directions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a scenario file and print its derived quantities.
    Check {
        /// Scenario JSON file.
        scenario: PathBuf,
    },
    /// Run a scenario file, or every *.json scenario in a directory.
    Run {
        /// Scenario JSON file or a directory of them.
        path: PathBuf,
        /// Output directory (default: the scenario's `out_dir`, else
        /// `out/<stem>`).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Override the integration step.
        #[arg(long, value_name = "H")]
        step: Option<f64>,
        /// Override the end time; events past the new horizon are dropped.
        #[arg(long, value_name = "T")]
        t_end: Option<f64>,
    },
    /// Print the team minimizer for a scenario's cost set.
    Oracle {
        /// Scenario JSON file.
        scenario: PathBuf,
    },
    /// Write a ready-made scenario file.
    Scaffold {
        /// Which scenario: 1 (double-integrator team with a node dropout)
        /// or 2 (mixed-order team with a matched disturbance).
        #[arg(value_parser = clap::value_parser!(u8).range(1..=2))]
        which: u8,
        /// Destination path (default: scenario<N>.json).
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("OPTCON_LOG", "warn"),
    )
    .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check { scenario } => cmd_check(&scenario),
        Command::Run {
            path,
            out,
            step,
            t_end,
        } => cmd_run(&path, out.as_deref(), step, t_end),
        Command::Oracle { scenario } => cmd_oracle(&scenario),
        Command::Scaffold { which, out } => cmd_scaffold(which, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_check(path: &Path) -> anyhow::Result<()> {
    let file = ScenarioFile::load(path)?;
    let scenario = file.to_scenario()?;
    let warnings = scenario.validate()?;

    let n = scenario.graph.node_count();
    let edge_count = scenario
        .graph
        .weights()
        .iter()
        .filter(|&&w| w > 0.0)
        .count();
    println!(
        "{}: {n} agents, {edge_count} edges",
        file.name.as_deref().unwrap_or("scenario")
    );
    let spectrum = scenario.graph.sym_spectrum()?;
    println!("  graph            weight-balanced, strongly connected");
    println!(
        "  connectivity     lambda_2 = {:.9}, lambda_n = {:.9}",
        spectrum.lambda2, spectrum.lambda_n
    );
    let (l_under, l_bar) = aggregate_convexity(&scenario.costs)?;
    println!("  convexity        mu = {l_under:.6}, lipschitz = {l_bar:.6}");
    let floors = certified_gains(l_under, l_bar, &spectrum)?;
    println!(
        "  certified floors alpha = {:.6}, beta = {:.6}",
        floors.alpha, floors.beta
    );
    let resolved = scenario.resolved_gains()?;
    let origin = if scenario.gains.is_some() {
        "pinned by the scenario"
    } else {
        "derived floors"
    };
    println!(
        "  run gains        alpha = {:.6}, beta = {:.6} ({origin})",
        resolved.alpha, resolved.beta
    );
    let orders = scenario
        .agents
        .iter()
        .map(|a| a.order().to_string())
        .collect::<Vec<_>>()
        .join(", ");
    println!("  agent orders     [{orders}]");
    println!(
        "  horizon          t_end = {}, h = {}, {} recorded samples",
        scenario.t_end,
        scenario.h,
        (scenario.t_end / scenario.h).round() as usize / scenario.record_every + 1
    );
    for w in &warnings {
        println!("  warning          {w}");
    }
    println!("scenario OK");
    Ok(())
}

fn cmd_oracle(path: &Path) -> anyhow::Result<()> {
    let file = ScenarioFile::load(path)?;
    if file.costs.is_empty() {
        bail!("scenario has no costs");
    }
    let y_star = global_minimizer(&file.costs)?;
    let mut residual = 0.0;
    for f in &file.costs {
        residual += f.grad(y_star)?;
    }
    println!("team minimizer   {y_star:.12}");
    println!("gradient residual {residual:.3e}");
    Ok(())
}

fn cmd_scaffold(which: u8, out: Option<PathBuf>) -> anyhow::Result<()> {
    let (scenario, name, description) = match which {
        1 => (
            example1(),
            "dropout-recovery",
            "Eight double integrators with quadratic costs and mixed gain \
             signs; one node drops out mid-run and rejoins later.",
        ),
        2 => (
            example2(),
            "disturbance-rejection",
            "Mixed-order team (orders 1-4) with heterogeneous convex costs, \
             online gradient coupling, and a sinusoidal input disturbance.",
        ),
        _ => unreachable!("clap bounds the choice"),
    };
    let file = ScenarioFile::from_scenario(&scenario, name, description)?;
    let path = out.unwrap_or_else(|| PathBuf::from(format!("scenario{which}.json")));
    let json = serde_json::to_string_pretty(&file).context("encoding scenario")?;
    std::fs::write(&path, json + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_run(
    path: &Path,
    out: Option<&Path>,
    step: Option<f64>,
    t_end: Option<f64>,
) -> anyhow::Result<()> {
    if path.is_dir() {
        run_directory(path, out, step, t_end)
    } else {
        run_single(path, out, step, t_end)
    }
}

/// Applies the command-line overrides.  Shortening the horizon drops
/// events that no longer fit, so a truncated rerun of a long scenario
/// stays valid.
fn apply_overrides(scenario: &mut Scenario, step: Option<f64>, t_end: Option<f64>) {
    if let Some(h) = step {
        scenario.h = h;
    }
    if let Some(t) = t_end {
        scenario.t_end = t;
        let before = scenario.events.len();
        scenario.events.retain(|e| e.time <= t);
        let dropped = before - scenario.events.len();
        if dropped > 0 {
            log::info!("dropped {dropped} event(s) past the new end time {t}");
        }
    }
}

fn run_single(
    path: &Path,
    out: Option<&Path>,
    step: Option<f64>,
    t_end: Option<f64>,
) -> anyhow::Result<()> {
    let file = ScenarioFile::load(path)?;
    let mut scenario = file.to_scenario()?;
    apply_overrides(&mut scenario, step, t_end);
    for w in scenario.validate()? {
        log::warn!("{w}");
    }
    let dir = match (out, &file.out_dir) {
        (Some(dir), _) => dir.to_path_buf(),
        (None, Some(dir)) => dir.clone(),
        (None, None) => default_out_dir(path),
    };
    let label = file.name.clone().unwrap_or_else(|| stem_of(path));
    match run_scenario(&scenario) {
        Ok(trace) => {
            let outputs = write_outputs(&dir, &scenario, &trace)?;
            print_summary(&label, &trace, &outputs);
            Ok(())
        }
        Err(Error::BlowUp {
            agent,
            time,
            theta,
            partial,
        }) => {
            let saved = write_partial_trace(&dir, partial.as_deref())?;
            if let Some(csv) = &saved {
                eprintln!("partial trace saved to {}", csv.display());
            }
            bail!(
                "{label}: blow-up at t = {time:.6} on agent {agent} \
                 (theta = {theta:.6e})"
            );
        }
        Err(e) => Err(e.into()),
    }
}

fn run_directory(
    dir: &Path,
    out: Option<&Path>,
    step: Option<f64>,
    t_end: Option<f64>,
) -> anyhow::Result<()> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no *.json scenarios in {}", dir.display());
    }

    let base = out.map(Path::to_path_buf).unwrap_or_else(|| "out".into());
    let mut scenarios = Vec::with_capacity(files.len());
    let mut labels = Vec::with_capacity(files.len());
    for path in &files {
        let file = ScenarioFile::load(path)?;
        let mut scenario = file.to_scenario()?;
        apply_overrides(&mut scenario, step, t_end);
        for w in scenario.validate()? {
            log::warn!("{}: {w}", path.display());
        }
        labels.push(file.name.clone().unwrap_or_else(|| stem_of(path)));
        scenarios.push((stem_of(path), scenario));
    }

    let traces = run_scenarios(
        &scenarios.iter().map(|(_, s)| s.clone()).collect::<Vec<_>>(),
    );
    let mut failures = 0usize;
    for (((stem, scenario), label), result) in
        scenarios.iter().zip(&labels).zip(traces)
    {
        let sub = base.join(stem);
        match result {
            Ok(trace) => {
                let outputs = write_outputs(&sub, scenario, &trace)?;
                print_summary(label, &trace, &outputs);
            }
            Err(Error::BlowUp {
                agent,
                time,
                theta,
                partial,
            }) => {
                failures += 1;
                if let Some(csv) = write_partial_trace(&sub, partial.as_deref())? {
                    eprintln!("partial trace saved to {}", csv.display());
                }
                eprintln!(
                    "error: {label}: blow-up at t = {time:.6} on agent {agent} \
                     (theta = {theta:.6e})"
                );
            }
            Err(e) => {
                failures += 1;
                eprintln!("error: {label}: {e}");
            }
        }
    }
    if failures > 0 {
        bail!("{failures} of {} scenarios failed", scenarios.len());
    }
    Ok(())
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string())
}

fn default_out_dir(path: &Path) -> PathBuf {
    Path::new("out").join(stem_of(path))
}
