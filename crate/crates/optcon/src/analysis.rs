//! Post-run analysis: agreement and optimality metrics, exponential-rate
//! fitting, and the CSV trace exporter.

use std::io::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Trace;

/// Per-sample worst deviation of any output from the sample mean.
pub fn consensus_error(trace: &Trace) -> Vec<f64> {
    let n = trace.agents.len() as f64;
    (0..trace.sample_count())
        .map(|k| {
            let ys = trace.outputs_at(k);
            let mean: f64 = ys.iter().sum::<f64>() / n;
            ys.iter().map(|y| (y - mean).abs()).fold(0.0, f64::max)
        })
        .collect()
}

/// Per-sample worst deviation of any output from the team minimizer.
pub fn optimality_gap(trace: &Trace, y_star: f64) -> Vec<f64> {
    (0..trace.sample_count())
        .map(|k| {
            trace
                .outputs_at(k)
                .iter()
                .map(|y| (y - y_star).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Values at or below this are treated as "already at the numerical
/// floor" and excluded from exponential fits.
const FIT_FLOOR: f64 = 1e-10;

/// Least-squares slope of `ln(values)` against `times`, negated, so a
/// decaying series yields a positive rate.  Values at the numerical floor
/// (and anything non-positive) are dropped first; at least three usable
/// points with distinct times are required.
pub fn fit_exponential_rate(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch {
            what: "fit sample times",
            expected: values.len(),
            got: times.len(),
        });
    }
    let usable: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|&(_, &v)| v > FIT_FLOOR)
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if usable.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: usable.len(),
        });
    }
    let n = usable.len() as f64;
    let t_mean: f64 = usable.iter().map(|(t, _)| t).sum::<f64>() / n;
    let l_mean: f64 = usable.iter().map(|(_, l)| l).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(t, l) in &usable {
        num += (t - t_mean) * (l - l_mean);
        den += (t - t_mean) * (t - t_mean);
    }
    if den <= 0.0 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: 1,
        });
    }
    Ok(-(num / den))
}

/// Summary of a run, ready for JSON serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub y_star: f64,
    pub times: Vec<f64>,
    pub consensus_error: Vec<f64>,
    pub optimality_gap: Vec<f64>,
    /// Fitted decay rate of the optimality gap over `fit_range` (absent
    /// when the fit was impossible, e.g. gap already at the floor).
    pub fitted_rate: Option<f64>,
    pub final_values: Vec<f64>,
}

impl MetricsReport {
    /// Builds the report; `fit_range` restricts the rate fit to samples
    /// with `lo <= t <= hi` (the whole series when `None`).
    pub fn from_trace(trace: &Trace, y_star: f64, fit_range: Option<(f64, f64)>) -> Self {
        let times = trace.times.clone();
        let gap = optimality_gap(trace, y_star);
        let (lo, hi) = fit_range.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
        let (fit_t, fit_v): (Vec<f64>, Vec<f64>) = times
            .iter()
            .zip(&gap)
            .filter(|&(&t, _)| t >= lo && t <= hi)
            .map(|(&t, &v)| (t, v))
            .unzip();
        let fitted_rate = fit_exponential_rate(&fit_t, &fit_v).ok();
        MetricsReport {
            y_star,
            consensus_error: consensus_error(trace),
            optimality_gap: gap,
            fitted_rate,
            final_values: trace.final_outputs(),
            times,
        }
    }
}

/// Writes a trace as CSV: header `t,agent,y,u,theta,r,v,zeta`, rows
/// time-major then agent-minor, every float with 17 significant digits so
/// values round-trip exactly and identical runs produce identical bytes.
pub fn export_csv(trace: &Trace, path: &std::path::Path) -> Result<()> {
    let io_err = |source: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut out = std::io::BufWriter::new(file);
    let mut write = |line: String| out.write_all(line.as_bytes()).map_err(io_err);
    write("t,agent,y,u,theta,r,v,zeta\n".to_string())?;
    for k in 0..trace.sample_count() {
        let t = trace.times[k];
        for (i, a) in trace.agents.iter().enumerate() {
            write(format!(
                "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                t, i, a.y[k], a.u[k], a.theta[k], a.r[k], a.v[k], a.zeta[k]
            ))?;
        }
    }
    out.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::AgentTrace;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn toy_trace() -> Trace {
        let agent = |ys: Vec<f64>| AgentTrace {
            u: vec![0.0; ys.len()],
            theta: vec![0.0; ys.len()],
            r: vec![0.0; ys.len()],
            v: vec![0.0; ys.len()],
            zeta: vec![0.0; ys.len()],
            y: ys,
        };
        Trace {
            times: vec![0.0, 1.0],
            agents: vec![agent(vec![0.0, 3.0]), agent(vec![2.0, 3.0])],
        }
    }

    #[test]
    fn consensus_error_measures_spread_around_the_mean() {
        assert_eq!(consensus_error(&toy_trace()), vec![1.0, 0.0]);
    }

    #[test]
    fn optimality_gap_measures_distance_to_the_optimum() {
        assert_eq!(optimality_gap(&toy_trace(), 1.5), vec![1.5, 1.5]);
    }

    #[test]
    fn fit_recovers_a_clean_decay_rate() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.01).collect();
        let values: Vec<f64> = times.iter().map(|t| 3.0 * (-2.0 * t).exp()).collect();
        let rate = fit_exponential_rate(&times, &values).unwrap();
        assert_relative_eq!(rate, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn fit_of_a_constant_is_zero() {
        let times: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let values = vec![5.0; 10];
        let rate = fit_exponential_rate(&times, &values).unwrap();
        assert!(rate.abs() < 1e-12);
    }

    #[test]
    fn fit_ignores_the_numerical_floor() {
        // exp(-t) clipped at 1e-14: only the pre-floor stretch counts.
        let times: Vec<f64> = (0..=100).map(|k| k as f64).collect();
        let values: Vec<f64> = times.iter().map(|t| (-t).exp().max(1e-14)).collect();
        let rate = fit_exponential_rate(&times, &values).unwrap();
        assert_relative_eq!(rate, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn fit_needs_enough_usable_points() {
        assert!(matches!(
            fit_exponential_rate(&[0.0, 1.0], &[1.0, 0.5]).unwrap_err(),
            Error::TooFewPoints { .. }
        ));
        // All samples at the floor.
        let times = [0.0, 1.0, 2.0, 3.0];
        let values = [1e-12; 4];
        assert!(matches!(
            fit_exponential_rate(&times, &values).unwrap_err(),
            Error::TooFewPoints { .. }
        ));
        assert!(matches!(
            fit_exponential_rate(&[0.0], &[1.0, 2.0]).unwrap_err(),
            Error::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn metrics_report_assembles_and_serializes() {
        let trace = toy_trace();
        let report = MetricsReport::from_trace(&trace, 1.5, None);
        assert_eq!(report.final_values, vec![3.0, 3.0]);
        assert_eq!(report.consensus_error, vec![1.0, 0.0]);
        assert!(report.fitted_rate.is_none(), "two samples cannot be fit");

        let json = serde_json::to_string(&report).unwrap();
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn csv_export_round_trips_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let trace = toy_trace();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        export_csv(&trace, &p1).unwrap();
        export_csv(&trace, &p2).unwrap();

        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2);

        let text = String::from_utf8(b1).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,agent,y,u,theta,r,v,zeta");
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), trace.sample_count() * trace.agents.len());
        // Values parse back to exactly the stored floats.
        let first: Vec<&str> = rows[0].split(',').collect();
        assert_eq!(first[1], "0");
        assert_eq!(first[2].parse::<f64>().unwrap(), trace.agents[0].y[0]);
        let last: Vec<&str> = rows.last().unwrap().split(',').collect();
        assert_eq!(last[0].parse::<f64>().unwrap(), 1.0);
        assert_eq!(last[2].parse::<f64>().unwrap(), 3.0);
    }

    proptest! {
        // Positive rescaling shifts ln(values) by a constant and must not
        // move the fitted slope.
        #[test]
        fn fit_is_invariant_under_positive_scaling(
            scale in 1e-3f64..1e3,
            rate in 0.1f64..5.0,
        ) {
            let times: Vec<f64> = (0..=50).map(|k| k as f64 * 0.1).collect();
            let values: Vec<f64> = times.iter().map(|t| (-rate * t).exp()).collect();
            let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
            let base = fit_exponential_rate(&times, &values).unwrap();
            let shifted = fit_exponential_rate(&times, &scaled).unwrap();
            prop_assert!((base - shifted).abs() <= 1e-9 * base.abs().max(1.0));
        }
    }
}
