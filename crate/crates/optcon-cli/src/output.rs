//! Output bundle for a finished run: trace CSV, metrics JSON, and a
//! gnuplot script that renders outputs, controls, and adaptation gains
//! from the CSV.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use optcon::analysis::{consensus_error, export_csv, optimality_gap, MetricsReport};
use optcon::costs::global_minimizer;
use optcon::sim::{Scenario, Trace};

pub struct RunOutputs {
    pub trace_csv: PathBuf,
    pub metrics_json: PathBuf,
    pub plot_script: PathBuf,
    pub report: MetricsReport,
}

/// Writes the full output bundle for one run into `dir`.
pub fn write_outputs(dir: &Path, scenario: &Scenario, trace: &Trace) -> anyhow::Result<RunOutputs> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))?;

    let trace_csv = dir.join("trace.csv");
    export_csv(trace, &trace_csv)?;

    let y_star = global_minimizer(&scenario.costs)?;
    let report = MetricsReport::from_trace(trace, y_star, fit_range(scenario));
    let metrics_json = dir.join("metrics.json");
    let json = serde_json::to_string_pretty(&report).context("encoding metrics")?;
    std::fs::write(&metrics_json, json + "\n")
        .with_context(|| format!("writing {}", metrics_json.display()))?;

    let plot_script = dir.join("plot.gp");
    std::fs::write(&plot_script, plot_script_text(trace.agents.len()))
        .with_context(|| format!("writing {}", plot_script.display()))?;

    Ok(RunOutputs {
        trace_csv,
        metrics_json,
        plot_script,
        report,
    })
}

/// Exponential-rate fit window: the later half of the undisturbed head of
/// the run, i.e. up to the first event (or the whole run without events).
/// The early transient is excluded so the fit sees the settled decay.
fn fit_range(scenario: &Scenario) -> Option<(f64, f64)> {
    let quiet_end = scenario
        .events
        .iter()
        .map(|e| e.time)
        .fold(scenario.t_end, f64::min);
    (quiet_end > 0.0).then_some((0.5 * quiet_end, quiet_end))
}

/// Saves whatever was recorded before a blow-up, so the divergence can be
/// inspected. Returns the CSV path if a partial trace was available.
pub fn write_partial_trace(dir: &Path, partial: Option<&Trace>) -> anyhow::Result<Option<PathBuf>> {
    let Some(trace) = partial else {
        return Ok(None);
    };
    if trace.sample_count() == 0 {
        return Ok(None);
    }
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("trace_partial.csv");
    export_csv(trace, &path)?;
    Ok(Some(path))
}

/// Prints the one-paragraph run summary to stdout.
pub fn print_summary(label: &str, trace: &Trace, out: &RunOutputs) {
    let errs = consensus_error(trace);
    let gaps = optimality_gap(trace, out.report.y_star);
    let finals = out
        .report
        .final_values
        .iter()
        .map(|y| format!("{y:.6}"))
        .collect::<Vec<_>>()
        .join(", ");
    println!(
        "{label}: {} agents, {} samples over {:.6} s",
        trace.agents.len(),
        trace.sample_count(),
        trace.times.last().copied().unwrap_or(0.0)
    );
    println!("  team minimizer   {:.9}", out.report.y_star);
    println!("  final outputs    [{finals}]");
    println!("  consensus error  {:.3e} (final)", errs.last().copied().unwrap_or(f64::NAN));
    println!("  optimality gap   {:.3e} (final)", gaps.last().copied().unwrap_or(f64::NAN));
    match out.report.fitted_rate {
        Some(rate) => println!("  fitted decay     {rate:.3} per s (pre-event window)"),
        None => println!("  fitted decay     not available"),
    }
    println!("  wrote {}", out.trace_csv.display());
    println!("  wrote {}", out.metrics_json.display());
    println!("  wrote {}", out.plot_script.display());
    let _ = std::io::stdout().flush();
}

fn plot_script_text(n_agents: usize) -> String {
    let mut s = String::new();
    s.push_str("# Renders the run trace next to this script:\n");
    s.push_str("#   gnuplot plot.gp      (writes outputs.png beside trace.csv)\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set terminal pngcairo size 1200,900\n");
    s.push_str("set output 'outputs.png'\n");
    s.push_str("set multiplot layout 3,1\n");
    s.push_str("set key outside right\n");
    s.push_str("set xlabel 't'\n");
    // One series per agent, selected by the integer agent column.
    for (title, column) in [("output y", 3), ("control u", 4), ("adaptation theta", 5)] {
        s.push_str(&format!("set ylabel '{title}'\n"));
        s.push_str("plot \\\n");
        for agent in 0..n_agents {
            let sep = if agent + 1 == n_agents { "\n" } else { ", \\\n" };
            s.push_str(&format!(
                "  'trace.csv' using 1:($2=={agent}?${column}:1/0) with lines title 'agent {agent}'{sep}"
            ));
        }
    }
    s.push_str("unset multiplot\n");
    s
}
