//! The coordination layer and the adaptive gain machinery: certified gain
//! floors derived from convexity and connectivity, the reference-generator
//! vector field, and the Nussbaum gains that let each agent track its
//! reference without knowing its control direction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Digraph, SpectralInfo};

/// Coordination gains: `alpha` weighs the gradient push, `beta` the
/// consensus coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSchedule {
    pub alpha: f64,
    pub beta: f64,
}

/// Smallest gains certified by the convergence analysis:
/// `alpha = max(1, 1/l_under, 2 l_bar^2 / (l_under lambda2))` and
/// `beta = max(1, 1/lambda2, 6 alpha^2 lambda_n^2 / lambda2^2)`.
pub fn certified_gains(
    l_under: f64,
    l_bar: f64,
    spectrum: &SpectralInfo,
) -> Result<GainSchedule> {
    if !(l_under.is_finite() && l_bar.is_finite()) || l_under <= 0.0 || l_bar < l_under {
        return Err(Error::InvalidConvexity {
            mu: l_under,
            lipschitz: l_bar,
        });
    }
    if spectrum.lambda2 <= 0.0 {
        return Err(Error::NonPositiveConnectivity {
            lambda2: spectrum.lambda2,
        });
    }
    let l2 = spectrum.lambda2;
    let ln = spectrum.lambda_n;
    let alpha = 1.0f64
        .max(1.0 / l_under)
        .max(2.0 * l_bar * l_bar / (l_under * l2));
    let beta = 1.0f64
        .max(1.0 / l2)
        .max(6.0 * alpha * alpha * ln * ln / (l2 * l2));
    Ok(GainSchedule { alpha, beta })
}

/// One step of the reference-generator vector field.
///
/// Each node integrates
/// `r_i' = -alpha g_i - beta sum_j a_ij (r_i - r_j) - sum_j a_ij (v_i - v_j)`
/// and `v_i' = alpha beta sum_j a_ij (r_i - r_j)`, where `g_i` is the
/// local cost gradient evaluated by the caller (at `r_i` when the
/// generator runs open-loop, at the plant output when it is embedded in
/// the closed loop).
pub fn generator_derivative(
    r: &[f64],
    v: &[f64],
    grads: &[f64],
    graph: &Digraph,
    gains: GainSchedule,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = graph.node_count();
    for (what, len) in [
        ("generator references", r.len()),
        ("generator integrators", v.len()),
        ("cost gradients", grads.len()),
    ] {
        if len != n {
            return Err(Error::DimensionMismatch {
                what,
                expected: n,
                got: len,
            });
        }
    }
    let w = graph.weights();
    let mut dr = Vec::with_capacity(n);
    let mut dv = Vec::with_capacity(n);
    for i in 0..n {
        let mut r_spread = 0.0;
        let mut v_spread = 0.0;
        for j in 0..n {
            let a = w[(i, j)];
            if a > 0.0 {
                r_spread += a * (r[i] - r[j]);
                v_spread += a * (v[i] - v[j]);
            }
        }
        dr.push(-gains.alpha * grads[i] - gains.beta * r_spread - v_spread);
        dv.push(gains.alpha * gains.beta * r_spread);
    }
    Ok((dr, dv))
}

/// The two Nussbaum gain shapes used by the adaptive controllers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NussbaumFn {
    /// `theta^2 sin(theta)`.
    ThetaSqSin,
    /// `exp(theta^2) sin(theta)`.
    ExpSqSin,
}

/// Largest `theta^2` for which `exp(theta^2)` still leaves multiplicative
/// headroom in `f64` (half the exponent budget).
const EXP_SQ_LIMIT: f64 = 354.9;

impl NussbaumFn {
    /// Evaluates the gain, rejecting arguments where `exp(theta^2)` would
    /// exhaust the floating-point range.
    pub fn eval(&self, theta: f64) -> Result<f64> {
        if !theta.is_finite() {
            return Err(Error::NonFinite {
                what: "Nussbaum argument",
                value: theta,
            });
        }
        match self {
            NussbaumFn::ThetaSqSin => Ok(theta * theta * theta.sin()),
            NussbaumFn::ExpSqSin => {
                if theta * theta > EXP_SQ_LIMIT {
                    return Err(Error::NussbaumOverflow { theta });
                }
                Ok((theta * theta).exp() * theta.sin())
            }
        }
    }

    /// Probes this gain's oscillation properties over `[0, theta_max]`.
    pub fn probe(&self, theta_max: f64, windows: usize) -> Result<NussbaumProbe> {
        probe_swing(|t| self.eval(t), theta_max, windows)
    }
}

/// The adaptive law: control `u = N(theta) zeta` and adaptation rate
/// `theta' = zeta^2`.
pub fn control_law(zeta: f64, theta: f64, gain: NussbaumFn) -> Result<(f64, f64)> {
    if !zeta.is_finite() {
        return Err(Error::NonFinite {
            what: "tracking coordinate",
            value: zeta,
        });
    }
    let u = gain.eval(theta)? * zeta;
    Ok((u, zeta * zeta))
}

/// Numeric evidence for the oscillation properties a Nussbaum gain must
/// have, gathered by integrating the gain (and its positive/negative
/// parts) over `[0, theta_max]` and sampling running means at `windows`
/// evenly spaced endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct NussbaumProbe {
    pub theta_max: f64,
    pub windows: usize,
    /// `(theta_k, integral(0..theta_k) / theta_k)` at each window endpoint.
    pub mean_samples: Vec<(f64, f64)>,
    /// Extremes of the running mean over the endpoints.
    pub swing_max: f64,
    pub swing_min: f64,
    /// Largest running means of the positive/negative parts.
    pub pos_over_theta: f64,
    pub neg_over_theta: f64,
    /// Largest mutual ratios of the positive/negative part integrals
    /// (0 when the denominator never becomes positive).
    pub pos_over_neg: f64,
    pub neg_over_pos: f64,
}

/// Threshold a running mean or ratio must exceed before the probe counts
/// it as "grows without bound" over the probed range.
const PROBE_BOUND: f64 = 10.0;

impl NussbaumProbe {
    /// The running mean of the integral swings past both `+10` and `-10`:
    /// the classic two-sided Nussbaum oscillation.
    pub fn two_sided_swing(&self) -> bool {
        self.swing_max > PROBE_BOUND && self.swing_min < -PROBE_BOUND
    }

    /// The positive and negative parts each outgrow `theta` and each
    /// other: the stronger property needed when several adaptive loops
    /// share one analysis.
    pub fn split_dominance(&self) -> bool {
        self.pos_over_theta > PROBE_BOUND
            && self.neg_over_theta > PROBE_BOUND
            && self.pos_over_neg > PROBE_BOUND
            && self.neg_over_pos > PROBE_BOUND
    }
}

/// Number of trapezoid substeps per window; sized so even the
/// fastest-growing catalog gain integrates to a few parts in 1e7 over
/// the ranges the probes use.
const SUBSTEPS_PER_WINDOW: usize = 20_000;

/// Integrates an arbitrary gain shape and reports its oscillation
/// statistics; see [`NussbaumProbe`].
pub fn probe_swing(
    f: impl Fn(f64) -> Result<f64>,
    theta_max: f64,
    windows: usize,
) -> Result<NussbaumProbe> {
    if !theta_max.is_finite() || theta_max <= 0.0 {
        return Err(Error::NonFinite {
            what: "probe range",
            value: theta_max,
        });
    }
    if windows == 0 {
        return Err(Error::DimensionMismatch {
            what: "probe windows",
            expected: 1,
            got: 0,
        });
    }

    let dt = theta_max / (windows * SUBSTEPS_PER_WINDOW) as f64;
    let mut integral = 0.0;
    let mut pos_integral = 0.0;
    let mut neg_integral = 0.0;
    let mut prev = f(0.0)?;

    let mut mean_samples = Vec::with_capacity(windows);
    let mut swing_max = f64::NEG_INFINITY;
    let mut swing_min = f64::INFINITY;
    let mut pos_over_theta: f64 = 0.0;
    let mut neg_over_theta: f64 = 0.0;
    let mut pos_over_neg: f64 = 0.0;
    let mut neg_over_pos: f64 = 0.0;

    for w in 1..=windows {
        for s in 1..=SUBSTEPS_PER_WINDOW {
            let t = ((w - 1) * SUBSTEPS_PER_WINDOW + s) as f64 * dt;
            let cur = f(t)?;
            integral += 0.5 * (prev + cur) * dt;
            pos_integral += 0.5 * (prev.max(0.0) + cur.max(0.0)) * dt;
            neg_integral += 0.5 * ((-prev).max(0.0) + (-cur).max(0.0)) * dt;
            prev = cur;
        }
        let theta = w as f64 * theta_max / windows as f64;
        let mean = integral / theta;
        mean_samples.push((theta, mean));
        swing_max = swing_max.max(mean);
        swing_min = swing_min.min(mean);
        pos_over_theta = pos_over_theta.max(pos_integral / theta);
        neg_over_theta = neg_over_theta.max(neg_integral / theta);
        if neg_integral > 0.0 {
            pos_over_neg = pos_over_neg.max(pos_integral / neg_integral);
        }
        if pos_integral > 0.0 {
            neg_over_pos = neg_over_pos.max(neg_integral / pos_integral);
        }
    }

    Ok(NussbaumProbe {
        theta_max,
        windows,
        mean_samples,
        swing_max,
        swing_min,
        pos_over_theta,
        neg_over_theta,
        pos_over_neg,
        neg_over_pos,
    })
}
