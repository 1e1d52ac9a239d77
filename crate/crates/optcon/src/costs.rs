//! The catalog of scalar convex cost functions, their analytic gradients,
//! and the helpers built on top of them: aggregate convexity parameters,
//! a bracketing/bisection solver for the team minimizer, and a
//! finite-difference gradient checker.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scalar convex cost from the built-in catalog.
///
/// Every entry is strongly convex with a Lipschitz-continuous gradient on
/// the range the simulations explore; [`CostFn::mu`] and
/// [`CostFn::lipschitz`] report the declared bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostFn {
    /// `c * (y - center)^2`.
    Quadratic { c: f64, center: f64 },
    /// `y^2 / (20 * sqrt(y^2 + 1)) + y^2`.
    SqrtRatio,
    /// `y^2 / (80 * ln(y^2 + 2)) + (y - 5)^2`.
    LogRatio,
    /// `ln(e^(-0.05 y) + e^(0.05 y)) + y^2`.
    SoftPlusPair,
}

fn require_finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { what, value })
    }
}

impl CostFn {
    /// Evaluates the cost at `y`.
    pub fn eval(&self, y: f64) -> Result<f64> {
        let y = require_finite("cost argument", y)?;
        Ok(match *self {
            CostFn::Quadratic { c, center } => c * (y - center) * (y - center),
            CostFn::SqrtRatio => y * y / (20.0 * (y * y + 1.0).sqrt()) + y * y,
            CostFn::LogRatio => {
                y * y / (80.0 * (y * y + 2.0).ln()) + (y - 5.0) * (y - 5.0)
            }
            CostFn::SoftPlusPair => {
                ((-0.05 * y).exp() + (0.05 * y).exp()).ln() + y * y
            }
        })
    }

    /// Analytic gradient of the cost at `y`.
    pub fn grad(&self, y: f64) -> Result<f64> {
        let y = require_finite("gradient argument", y)?;
        Ok(match *self {
            CostFn::Quadratic { c, center } => 2.0 * c * (y - center),
            CostFn::SqrtRatio => {
                // d/dy [y^2 / (20 (y^2+1)^(1/2))] = (y^3 + 2y) / (20 (y^2+1)^(3/2))
                (y * y * y + 2.0 * y) / (20.0 * (y * y + 1.0).powf(1.5)) + 2.0 * y
            }
            CostFn::LogRatio => {
                let q = y * y + 2.0;
                let ln_q = q.ln();
                (2.0 * y * ln_q - y * y * (2.0 * y / q)) / (80.0 * ln_q * ln_q)
                    + 2.0 * (y - 5.0)
            }
            CostFn::SoftPlusPair => 0.05 * (0.05 * y).tanh() + 2.0 * y,
        })
    }

    /// Declared strong-convexity modulus.
    pub fn mu(&self) -> f64 {
        match *self {
            CostFn::Quadratic { c, .. } => 2.0 * c,
            _ => 1.0,
        }
    }

    /// Declared gradient Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            CostFn::Quadratic { c, .. } => 2.0 * c,
            _ => 3.0,
        }
    }
}

/// Worst-case convexity parameters across a team: the smallest modulus and
/// the largest Lipschitz constant, `(l_under, l_bar)`.
pub fn aggregate_convexity(costs: &[CostFn]) -> Result<(f64, f64)> {
    if costs.is_empty() {
        return Err(Error::EmptyCostList);
    }
    let l_under = costs.iter().map(CostFn::mu).fold(f64::INFINITY, f64::min);
    let l_bar = costs.iter().map(CostFn::lipschitz).fold(0.0, f64::max);
    Ok((l_under, l_bar))
}

/// Search cap for the minimizer bracket; the catalog entries all have
/// their minimizers well inside this range.
const BRACKET_LIMIT: f64 = 1e9;

/// Finds the unique minimizer of `sum_i f_i(y)` by bracketing a sign
/// change of the aggregate gradient and bisecting it down to an aggregate
/// gradient magnitude of at most `1e-8`.
pub fn global_minimizer(costs: &[CostFn]) -> Result<f64> {
    if costs.is_empty() {
        return Err(Error::EmptyCostList);
    }
    let g = |y: f64| -> Result<f64> {
        let mut sum = 0.0;
        for c in costs {
            sum += c.grad(y)?;
        }
        Ok(sum)
    };

    let (mut lo, mut hi) = (-1.0, 1.0);
    while g(lo)? > 0.0 && lo > -BRACKET_LIMIT {
        lo *= 2.0;
    }
    while g(hi)? < 0.0 && hi < BRACKET_LIMIT {
        hi *= 2.0;
    }
    if g(lo)? > 0.0 || g(hi)? < 0.0 {
        return Err(Error::BracketNotFound { lo, hi });
    }

    // The aggregate gradient is continuous and strictly increasing, so
    // bisection converges; iterate until the residual is far below the
    // guaranteed 1e-8.
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let gm = g(mid)?;
        if gm.abs() <= 1e-10 || (hi - lo) <= f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// One sample where the analytic and central-difference gradients
/// disagreed beyond tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckFailure {
    pub y: f64,
    pub analytic: f64,
    pub numeric: f64,
}

/// Outcome of comparing an analytic gradient against central differences
/// over a set of sample points.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub step: f64,
    pub tol: f64,
    pub checked: usize,
    pub failures: Vec<GradCheckFailure>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compares `grad` against the central difference of `eval` at each
/// sample, with relative tolerance `tol` (floored at magnitude 1).
pub fn grad_check_fns(
    eval: impl Fn(f64) -> Result<f64>,
    grad: impl Fn(f64) -> Result<f64>,
    samples: &[f64],
    step: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let mut failures = Vec::new();
    for &y in samples {
        let analytic = grad(y)?;
        let numeric = (eval(y + step)? - eval(y - step)?) / (2.0 * step);
        let scale = analytic.abs().max(numeric.abs()).max(1.0);
        if (analytic - numeric).abs() > tol * scale {
            failures.push(GradCheckFailure {
                y,
                analytic,
                numeric,
            });
        }
    }
    Ok(GradCheckReport {
        step,
        tol,
        checked: samples.len(),
        failures,
    })
}

/// [`grad_check_fns`] specialized to a catalog entry.
pub fn grad_check(cost: &CostFn, samples: &[f64], step: f64, tol: f64) -> Result<GradCheckReport> {
    grad_check_fns(|y| cost.eval(y), |y| cost.grad(y), samples, step, tol)
}
