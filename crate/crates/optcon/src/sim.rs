//! Scenario description and the fixed-step closed-loop integrator.
//!
//! A scenario couples three layers per agent: the integrator-chain plant,
//! the Nussbaum-adaptive tracking law, and the shared reference generator.
//! The whole network integrates as one flat state vector under classical
//! RK4 with events (node isolation, graph restoration, input
//! disturbances) snapped to the step grid, so a run is deterministic down
//! to the last bit for a given scenario.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::controller::{
    control_law, generator_derivative, certified_gains, GainSchedule, NussbaumFn,
};
use crate::costs::{aggregate_convexity, CostFn};
use crate::error::{Error, Result};
use crate::graph::Digraph;
use crate::plant::{build_translation, is_hurwitz, plant_derivative, zeta, AgentDynamics,
    TranslationData};

/// Where the generator reads its cost gradients: at its own reference
/// (decoupled from the plants) or at the live plant outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Offline,
    Online,
}

/// Something that happens to the network at a fixed time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub action: EventAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventAction {
    /// Cut one node out of the communication graph (both directions).
    IsolateNode { node: usize },
    /// Reinstate the original communication graph.
    RestoreGraph,
    /// Register a sinusoidal input disturbance `amplitude *
    /// sin(frequency * t)` acting on every agent while `t` is inside
    /// `[t_on, t_off]`.
    Disturbance {
        amplitude: f64,
        frequency: f64,
        t_on: f64,
        t_off: f64,
    },
}

/// Initial conditions; anything left `None` takes its default (references
/// start at the plant outputs, integrators and adaptation states at zero).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InitialState {
    pub x: Vec<Vec<f64>>,
    #[serde(default)]
    pub r: Option<Vec<f64>>,
    #[serde(default)]
    pub v: Option<Vec<f64>>,
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
}

/// A complete simulation setup.  `gains: None` means "derive the
/// certified floors from the costs and the graph spectrum at run start".
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub graph: Digraph,
    pub agents: Vec<AgentDynamics>,
    /// Per-agent stabilizing coefficients, length `order - 1` each.
    pub coeffs: Vec<Vec<f64>>,
    pub costs: Vec<CostFn>,
    pub mode: Mode,
    pub eps: f64,
    pub gains: Option<GainSchedule>,
    pub gain_fn: NussbaumFn,
    pub t_end: f64,
    pub h: f64,
    pub record_every: usize,
    pub init: InitialState,
    pub events: Vec<Event>,
}

/// Anything whose magnitude crosses this is treated as a blown-up run.
const BLOWUP_LIMIT: f64 = 1e9;

impl Scenario {
    /// Checks internal consistency; hard violations error, soft ones come
    /// back as warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let n = self.graph.node_count();
        let fail = |reason: String| Err(Error::InvalidScenario { reason });
        if n == 0 {
            return fail("graph has no nodes".into());
        }
        for (what, len) in [
            ("agents", self.agents.len()),
            ("coefficient vectors", self.coeffs.len()),
            ("costs", self.costs.len()),
            ("initial plant states", self.init.x.len()),
        ] {
            if len != n {
                return fail(format!("{what}: expected {n} entries, got {len}"));
            }
        }
        for (i, (agent, k)) in self.agents.iter().zip(&self.coeffs).enumerate() {
            if k.len() != agent.order() - 1 {
                return fail(format!(
                    "agent {i}: order {} needs {} coefficients, got {}",
                    agent.order(),
                    agent.order() - 1,
                    k.len()
                ));
            }
            if !is_hurwitz(k) {
                return fail(format!("agent {i}: coefficients {k:?} are not Hurwitz"));
            }
            if self.init.x[i].len() != agent.order() {
                return fail(format!(
                    "agent {i}: initial state needs {} components, got {}",
                    agent.order(),
                    self.init.x[i].len()
                ));
            }
        }
        for (what, opt) in [
            ("initial references", &self.init.r),
            ("initial integrators", &self.init.v),
            ("initial adaptation states", &self.init.theta),
        ] {
            if let Some(vec) = opt {
                if vec.len() != n {
                    return fail(format!("{what}: expected {n} entries, got {}", vec.len()));
                }
            }
        }
        if !self.eps.is_finite() || self.eps <= 0.0 {
            return fail(format!("eps must be positive, got {}", self.eps));
        }
        if !self.h.is_finite() || self.h <= 0.0 {
            return fail(format!("step size must be positive, got {}", self.h));
        }
        if !self.t_end.is_finite() || self.t_end < self.h {
            return fail(format!(
                "t_end must be at least one step, got {} (h = {})",
                self.t_end, self.h
            ));
        }
        if self.record_every == 0 {
            return fail("record_every must be at least 1".into());
        }
        if let Some(g) = &self.gains {
            if !(g.alpha.is_finite() && g.beta.is_finite()) || g.alpha <= 0.0 || g.beta <= 0.0 {
                return fail(format!(
                    "gains must be positive, got alpha = {}, beta = {}",
                    g.alpha, g.beta
                ));
            }
        }
        for (idx, ev) in self.events.iter().enumerate() {
            if !ev.time.is_finite() || ev.time < 0.0 || ev.time > self.t_end {
                return fail(format!(
                    "event {idx}: time {} outside [0, {}]",
                    ev.time, self.t_end
                ));
            }
            match ev.action {
                EventAction::IsolateNode { node } if node >= n => {
                    return fail(format!("event {idx}: node {node} out of range"));
                }
                EventAction::Disturbance {
                    amplitude,
                    frequency,
                    t_on,
                    t_off,
                } => {
                    if !(amplitude.is_finite() && frequency.is_finite()) {
                        return fail(format!("event {idx}: non-finite disturbance parameters"));
                    }
                    if !(t_on.is_finite() && t_off.is_finite()) || t_on > t_off {
                        return fail(format!(
                            "event {idx}: bad disturbance window [{t_on}, {t_off}]"
                        ));
                    }
                    if t_on < ev.time {
                        return fail(format!(
                            "event {idx}: disturbance window opens at {t_on}, before the \
                             event fires at {}",
                            ev.time
                        ));
                    }
                }
                _ => {}
            }
        }

        let mut warnings = Vec::new();
        if self.mode == Mode::Online && self.gain_fn == NussbaumFn::ThetaSqSin {
            warnings.push(
                "online gradient coupling is only certified for gains with the \
                 split-dominance property; theta_sq_sin is not known to have it"
                    .to_string(),
            );
        }
        Ok(warnings)
    }

    /// The gains a run will actually use: pinned values, or the certified
    /// floors derived from the cost set and the graph spectrum.
    pub fn resolved_gains(&self) -> Result<GainSchedule> {
        match self.gains {
            Some(g) => Ok(g),
            None => {
                let (l_under, l_bar) = aggregate_convexity(&self.costs)?;
                let spectrum = self.graph.sym_spectrum()?;
                certified_gains(l_under, l_bar, &spectrum)
            }
        }
    }
}

/// One agent's recorded series.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgentTrace {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub theta: Vec<f64>,
    pub r: Vec<f64>,
    pub v: Vec<f64>,
    pub zeta: Vec<f64>,
}

/// Recorded run: sample times plus one series bundle per agent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub times: Vec<f64>,
    pub agents: Vec<AgentTrace>,
}

impl Trace {
    pub fn sample_count(&self) -> usize {
        self.times.len()
    }

    /// All agent outputs at sample `idx`.
    pub fn outputs_at(&self, idx: usize) -> Vec<f64> {
        self.agents.iter().map(|a| a.y[idx]).collect()
    }

    pub fn final_outputs(&self) -> Vec<f64> {
        self.outputs_at(self.sample_count() - 1)
    }

    /// Index of the recorded sample closest to time `t`.
    pub fn sample_near(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, &ti) in self.times.iter().enumerate() {
            if (ti - t).abs() < (self.times[best] - t).abs() {
                best = i;
            }
        }
        best
    }
}

/// Open-loop generator run: reference and integrator series per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorTrace {
    pub times: Vec<f64>,
    /// Sample-major: `r[k][i]` is node `i`'s reference at sample `k`.
    pub r: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

/// One classical Runge-Kutta step of size `h` for `state' = f(t, state)`.
pub fn rk4_step<F>(f: &mut F, t: f64, state: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let n = state.len();
    let stage = |state: &[f64], k: &[f64], scale: f64| -> Vec<f64> {
        state.iter().zip(k).map(|(s, ki)| s + scale * ki).collect()
    };
    let k1 = f(t, state)?;
    let k2 = f(t + 0.5 * h, &stage(state, &k1, 0.5 * h))?;
    let k3 = f(t + 0.5 * h, &stage(state, &k2, 0.5 * h))?;
    let k4 = f(t + h, &stage(state, &k3, h))?;
    let mut next = Vec::with_capacity(n);
    for i in 0..n {
        next.push(state[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    Ok(next)
}

/// The assembled closed loop: per-agent plant and translation data, the
/// resolved gains, and the mutable run state (working graph, registered
/// disturbances) that events act on.
pub struct ClosedLoop {
    agents: Vec<AgentDynamics>,
    tds: Vec<TranslationData>,
    costs: Vec<CostFn>,
    mode: Mode,
    gain_fn: NussbaumFn,
    gains: GainSchedule,
    pristine: Digraph,
    working: Digraph,
    disturbances: Vec<(f64, f64, f64, f64)>,
    /// Packed layout: agent `i` owns `offsets[i] .. offsets[i+1]`, as
    /// `(x_0..x_(order-1), r, v, theta)`.
    offsets: Vec<usize>,
}

impl ClosedLoop {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let gains = scenario.resolved_gains()?;
        let mut tds = Vec::with_capacity(scenario.agents.len());
        for (agent, k) in scenario.agents.iter().zip(&scenario.coeffs) {
            tds.push(build_translation(agent.order(), k, scenario.eps)?);
        }
        let mut offsets = vec![0];
        for agent in &scenario.agents {
            offsets.push(offsets.last().unwrap() + agent.order() + 3);
        }
        Ok(Self {
            agents: scenario.agents.clone(),
            tds,
            costs: scenario.costs.clone(),
            mode: scenario.mode,
            gain_fn: scenario.gain_fn,
            gains,
            pristine: scenario.graph.clone(),
            working: scenario.graph.clone(),
            disturbances: Vec::new(),
            offsets,
        })
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn gains(&self) -> GainSchedule {
        self.gains
    }

    /// The event-adjusted adjacency currently in force.
    pub fn working_weights(&self) -> &DMatrix<f64> {
        self.working.weights()
    }

    /// Mutates the run state for one event.
    pub fn apply_event(&mut self, action: &EventAction) -> Result<()> {
        match *action {
            EventAction::IsolateNode { node } => {
                let n = self.working.node_count();
                if node >= n {
                    return Err(Error::DimensionMismatch {
                        what: "isolated node",
                        expected: n,
                        got: node,
                    });
                }
                let mut w = self.working.weights().clone();
                for j in 0..n {
                    w[(node, j)] = 0.0;
                    w[(j, node)] = 0.0;
                }
                self.working = Digraph::from_weights(w)?;
            }
            EventAction::RestoreGraph => {
                self.working = self.pristine.clone();
            }
            EventAction::Disturbance {
                amplitude,
                frequency,
                t_on,
                t_off,
            } => {
                self.disturbances.push((amplitude, frequency, t_on, t_off));
            }
        }
        Ok(())
    }

    /// Sum of registered disturbance signals active at time `t`.
    fn disturbance_at(&self, t: f64) -> f64 {
        self.disturbances
            .iter()
            .filter(|&&(_, _, on, off)| t >= on && t <= off)
            .map(|&(amp, freq, _, _)| amp * (freq * t).sin())
            .sum()
    }

    /// Builds the packed initial state from a scenario's initial
    /// conditions (defaults as documented on [`InitialState`]).
    pub fn pack_initial(&self, init: &InitialState) -> Result<Vec<f64>> {
        let n = self.agents.len();
        let mut state = Vec::with_capacity(self.dim());
        for i in 0..n {
            if init.x[i].len() != self.agents[i].order() {
                return Err(Error::DimensionMismatch {
                    what: "initial plant state",
                    expected: self.agents[i].order(),
                    got: init.x[i].len(),
                });
            }
            state.extend_from_slice(&init.x[i]);
            state.push(match &init.r {
                Some(r) => r[i],
                None => init.x[i][0],
            });
            state.push(init.v.as_ref().map_or(0.0, |v| v[i]));
            state.push(init.theta.as_ref().map_or(0.0, |th| th[i]));
        }
        Ok(state)
    }

    fn agent_slices<'a>(&self, state: &'a [f64], i: usize) -> (&'a [f64], f64, f64, f64) {
        let lo = self.offsets[i];
        let order = self.agents[i].order();
        (
            &state[lo..lo + order],
            state[lo + order],
            state[lo + order + 1],
            state[lo + order + 2],
        )
    }

    /// The full closed-loop vector field at time `t`, using the
    /// event-adjusted graph and any active disturbances.
    pub fn derivative(&self, t: f64, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "packed state",
                expected: self.dim(),
                got: state.len(),
            });
        }
        let n = self.agents.len();

        // Sanity envelope first so diagnostics name the right agent.
        for i in 0..n {
            let lo = self.offsets[i];
            let hi = self.offsets[i + 1];
            if state[lo..hi].iter().any(|s| !s.is_finite() || s.abs() > BLOWUP_LIMIT) {
                let (_, _, _, theta) = self.agent_slices(state, i);
                return Err(Error::BlowUp {
                    agent: i,
                    time: t,
                    theta,
                    partial: None,
                });
            }
        }

        let mut r = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        let mut grads = Vec::with_capacity(n);
        for i in 0..n {
            let (x, ri, vi, _) = self.agent_slices(state, i);
            r.push(ri);
            v.push(vi);
            let at = match self.mode {
                Mode::Offline => ri,
                Mode::Online => x[0],
            };
            grads.push(self.costs[i].grad(at)?);
        }
        let (dr, dv) = generator_derivative(&r, &v, &grads, &self.working, self.gains)?;

        let disturbance = self.disturbance_at(t);
        let mut deriv = Vec::with_capacity(self.dim());
        for i in 0..n {
            let (x, ri, _, theta) = self.agent_slices(state, i);
            let per_agent = (|| -> Result<(Vec<f64>, f64)> {
                let z = zeta(x, ri, &self.tds[i])?;
                let (u, theta_dot) = control_law(z, theta, self.gain_fn)?;
                if u.abs() > BLOWUP_LIMIT {
                    return Err(Error::BlowUp {
                        agent: i,
                        time: t,
                        theta,
                        partial: None,
                    });
                }
                let dx = plant_derivative(x, &self.agents[i], u + disturbance)?;
                Ok((dx, theta_dot))
            })();
            let (dx, theta_dot) = per_agent.map_err(|e| match e {
                Error::BlowUp { .. } => e,
                // Overflow and non-finite failures inside one agent's loop
                // are blow-ups as far as the run is concerned.
                _ => Error::BlowUp {
                    agent: i,
                    time: t,
                    theta,
                    partial: None,
                },
            })?;
            deriv.extend_from_slice(&dx);
            deriv.push(dr[i]);
            deriv.push(dv[i]);
            deriv.push(theta_dot);
        }
        Ok(deriv)
    }

    /// Control-layer quantities at `(t, state)` for recording: per-agent
    /// `(u, zeta)`.  Failures are reported as blow-ups naming the agent.
    fn control_outputs(&self, t: f64, state: &[f64]) -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::with_capacity(self.agents.len());
        for i in 0..self.agents.len() {
            let (x, ri, _, theta) = self.agent_slices(state, i);
            let pair = zeta(x, ri, &self.tds[i])
                .and_then(|z| control_law(z, theta, self.gain_fn).map(|(u, _)| (u, z)))
                .map_err(|_| Error::BlowUp {
                    agent: i,
                    time: t,
                    theta,
                    partial: None,
                })?;
            out.push(pair);
        }
        Ok(out)
    }
}

/// Runs one scenario to completion, recording every `record_every`-th
/// step (plus the final one).  A blow-up abort carries the partial trace
/// recorded so far.
pub fn run_scenario(scenario: &Scenario) -> Result<Trace> {
    for w in scenario.validate()? {
        log::warn!("{w}");
    }
    let mut lp = ClosedLoop::new(scenario)?;
    let steps = (scenario.t_end / scenario.h).round() as usize;
    let h = scenario.h;

    // Events snap to the nearest grid point and fire before that step's
    // sample is recorded; ties keep file order.
    let mut events: Vec<(usize, &EventAction)> = scenario
        .events
        .iter()
        .map(|ev| ((ev.time / h).round() as usize, &ev.action))
        .collect();
    events.sort_by_key(|&(k, _)| k);

    let n = scenario.agents.len();
    let mut trace = Trace {
        times: Vec::new(),
        agents: vec![AgentTrace::default(); n],
    };
    let mut state = lp.pack_initial(&scenario.init)?;
    let mut next_event = 0;

    let record =
        |lp: &ClosedLoop, trace: &mut Trace, t: f64, state: &[f64]| -> Result<()> {
            let controls = lp.control_outputs(t, state)?;
            trace.times.push(t);
            for i in 0..n {
                let (x, ri, vi, theta) = lp.agent_slices(state, i);
                let a = &mut trace.agents[i];
                a.y.push(x[0]);
                a.u.push(controls[i].0);
                a.theta.push(theta);
                a.r.push(ri);
                a.v.push(vi);
                a.zeta.push(controls[i].1);
            }
            Ok(())
        };

    fn attach_partial(e: Error, trace: &mut Trace) -> Error {
        match e {
            Error::BlowUp {
                agent,
                time,
                theta,
                ..
            } => Error::BlowUp {
                agent,
                time,
                theta,
                partial: Some(Box::new(std::mem::take(trace))),
            },
            other => other,
        }
    }

    for k in 0..=steps {
        let t = k as f64 * h;
        while next_event < events.len() && events[next_event].0 <= k {
            lp.apply_event(events[next_event].1)?;
            next_event += 1;
        }
        if k % scenario.record_every == 0 || k == steps {
            if let Err(e) = record(&lp, &mut trace, t, &state) {
                return Err(attach_partial(e, &mut trace));
            }
        }
        if k < steps {
            match rk4_step(&mut |t, s| lp.derivative(t, s), t, &state, h) {
                Ok(next) => state = next,
                Err(e) => return Err(attach_partial(e, &mut trace)),
            }
        }
    }
    Ok(trace)
}

/// Runs a batch of scenarios, in parallel when the `parallel` feature is
/// enabled.
#[cfg(feature = "parallel")]
pub fn run_scenarios(scenarios: &[Scenario]) -> Vec<Result<Trace>> {
    use rayon::prelude::*;
    scenarios.par_iter().map(run_scenario).collect()
}

/// Runs a batch of scenarios, in parallel when the `parallel` feature is
/// enabled.
#[cfg(not(feature = "parallel"))]
pub fn run_scenarios(scenarios: &[Scenario]) -> Vec<Result<Trace>> {
    run_scenarios_seq(scenarios)
}

/// Sequential batch runner (the fallback path, always available so the
/// two can be compared).
pub fn run_scenarios_seq(scenarios: &[Scenario]) -> Vec<Result<Trace>> {
    scenarios.iter().map(run_scenario).collect()
}

/// Integrates the reference generator alone (gradients read at the
/// references), without any plants attached.
#[allow(clippy::too_many_arguments)]
pub fn run_generator_only(
    graph: &Digraph,
    costs: &[CostFn],
    gains: GainSchedule,
    r0: &[f64],
    v0: &[f64],
    t_end: f64,
    h: f64,
    record_every: usize,
) -> Result<GeneratorTrace> {
    let n = graph.node_count();
    for (what, len) in [
        ("costs", costs.len()),
        ("initial references", r0.len()),
        ("initial integrators", v0.len()),
    ] {
        if len != n {
            return Err(Error::DimensionMismatch {
                what,
                expected: n,
                got: len,
            });
        }
    }
    if !h.is_finite() || h <= 0.0 || !t_end.is_finite() || t_end < h {
        return Err(Error::InvalidScenario {
            reason: format!("bad time grid: t_end = {t_end}, h = {h}"),
        });
    }
    if record_every == 0 {
        return Err(Error::InvalidScenario {
            reason: "record_every must be at least 1".into(),
        });
    }

    let mut deriv = |_t: f64, s: &[f64]| -> Result<Vec<f64>> {
        let (r, v) = s.split_at(n);
        let mut grads = Vec::with_capacity(n);
        for (c, &ri) in costs.iter().zip(r) {
            grads.push(c.grad(ri)?);
        }
        let (dr, dv) = generator_derivative(r, v, &grads, graph, gains)?;
        Ok(dr.into_iter().chain(dv).collect())
    };

    let steps = (t_end / h).round() as usize;
    let mut state: Vec<f64> = r0.iter().chain(v0).copied().collect();
    let mut trace = GeneratorTrace {
        times: Vec::new(),
        r: Vec::new(),
        v: Vec::new(),
    };
    for k in 0..=steps {
        let t = k as f64 * h;
        if k % record_every == 0 || k == steps {
            trace.times.push(t);
            trace.r.push(state[..n].to_vec());
            trace.v.push(state[n..].to_vec());
        }
        if k < steps {
            state = rk4_step(&mut deriv, t, &state, h)?;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{demo_graph, example1};
    use approx::assert_relative_eq;

    #[test]
    fn rk4_decay_step_is_exact() {
        let mut f = |_t: f64, s: &[f64]| Ok(vec![-s[0]]);
        let next = rk4_step(&mut f, 0.0, &[1.0], 0.1).unwrap();
        // Fourth-order Taylor polynomial of exp(-0.1), exactly.
        assert_eq!(next[0], 0.9048375);
    }

    #[test]
    fn rk4_integrates_cubics_exactly() {
        let mut f = |t: f64, _s: &[f64]| Ok(vec![t * t * t]);
        let mut state = vec![0.0];
        for k in 0..10 {
            state = rk4_step(&mut f, k as f64 * 0.1, &state, 0.1).unwrap();
        }
        assert_relative_eq!(state[0], 0.25, epsilon = 1e-14);
    }

    fn single_agent_scenario() -> Scenario {
        Scenario {
            graph: Digraph::from_edges(1, &[]).unwrap(),
            agents: vec![AgentDynamics::new(1, 1.0).unwrap()],
            coeffs: vec![vec![]],
            costs: vec![CostFn::Quadratic { c: 1.0, center: 2.0 }],
            mode: Mode::Offline,
            eps: 1.0,
            gains: Some(GainSchedule {
                alpha: 1.0,
                beta: 1.0,
            }),
            gain_fn: NussbaumFn::ThetaSqSin,
            t_end: 1.0,
            h: 0.1,
            record_every: 1,
            init: InitialState {
                x: vec![vec![2.0]],
                ..Default::default()
            },
            events: vec![],
        }
    }

    #[test]
    fn settled_agent_has_zero_derivative() {
        // Output, reference, and cost minimum all coincide: nothing moves.
        let lp = ClosedLoop::new(&single_agent_scenario()).unwrap();
        let state = lp
            .pack_initial(&single_agent_scenario().init)
            .unwrap();
        let deriv = lp.derivative(0.0, &state).unwrap();
        assert!(deriv.iter().all(|d| d.abs() < 1e-15), "{deriv:?}");
    }

    #[test]
    fn two_node_rest_point_is_stationary() {
        let scenario = Scenario {
            graph: Digraph::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap(),
            agents: vec![
                AgentDynamics::new(1, 1.0).unwrap(),
                AgentDynamics::new(1, -1.0).unwrap(),
            ],
            coeffs: vec![vec![], vec![]],
            costs: vec![
                CostFn::Quadratic { c: 1.0, center: 0.0 },
                CostFn::Quadratic { c: 1.0, center: 2.0 },
            ],
            mode: Mode::Offline,
            eps: 1.0,
            gains: Some(GainSchedule {
                alpha: 1.0,
                beta: 1.0,
            }),
            gain_fn: NussbaumFn::ThetaSqSin,
            t_end: 1.0,
            h: 0.1,
            record_every: 1,
            init: InitialState {
                x: vec![vec![1.0], vec![1.0]],
                r: Some(vec![1.0, 1.0]),
                v: Some(vec![-2.0, 0.0]),
                theta: Some(vec![0.7, -0.3]),
            },
            events: vec![],
        };
        let lp = ClosedLoop::new(&scenario).unwrap();
        let state = lp.pack_initial(&scenario.init).unwrap();
        let deriv = lp.derivative(0.0, &state).unwrap();
        assert!(deriv.iter().all(|d| d.abs() < 1e-15), "{deriv:?}");
    }

    #[test]
    fn offline_and_online_agree_when_outputs_sit_on_references() {
        let mut scenario = example1();
        scenario.t_end = 1.0;
        scenario.events.clear();
        // Defaults already put r(0) = y(0); both modes then read the same
        // gradient arguments.
        let offline = ClosedLoop::new(&scenario).unwrap();
        scenario.mode = Mode::Online;
        let online = ClosedLoop::new(&scenario).unwrap();
        let state = offline.pack_initial(&scenario.init).unwrap();
        assert_eq!(
            offline.derivative(0.0, &state).unwrap(),
            online.derivative(0.0, &state).unwrap()
        );
    }

    #[test]
    fn isolation_masks_both_directions_and_restore_undoes_it() {
        let scenario = example1();
        let mut lp = ClosedLoop::new(&scenario).unwrap();
        let before = lp.working_weights().clone();
        lp.apply_event(&EventAction::IsolateNode { node: 7 }).unwrap();
        let w = lp.working_weights();
        for j in 0..8 {
            assert_eq!(w[(7, j)], 0.0);
            assert_eq!(w[(j, 7)], 0.0);
        }
        // Unrelated entries stay put.
        assert_eq!(w[(0, 1)], before[(0, 1)]);
        lp.apply_event(&EventAction::RestoreGraph).unwrap();
        assert_eq!(lp.working_weights(), &before);
    }

    #[test]
    fn disturbance_shifts_only_the_driven_components() {
        let scenario = single_agent_scenario();
        let mut lp = ClosedLoop::new(&scenario).unwrap();
        let state = lp.pack_initial(&scenario.init).unwrap();
        let quiet = lp.derivative(0.3, &state).unwrap();
        lp.apply_event(&EventAction::Disturbance {
            amplitude: 10.0,
            frequency: 1.0,
            t_on: 0.0,
            t_off: 1.0,
        })
        .unwrap();
        let driven = lp.derivative(0.3, &state).unwrap();
        // Order-1 chain: the output derivative picks up gain * d(t).
        assert_relative_eq!(driven[0] - quiet[0], 10.0 * 0.3f64.sin(), epsilon = 1e-12);
        assert_eq!(&driven[1..], &quiet[1..]);
        // Outside its window the signal is gone.
        assert_eq!(lp.derivative(5.0, &state).unwrap()[0], quiet[0]);
    }

    #[test]
    fn events_snap_to_the_step_grid() {
        let mut a = example1();
        a.t_end = 0.5;
        a.h = 0.1;
        a.record_every = 1;
        a.events = vec![Event {
            time: 0.2,
            action: EventAction::IsolateNode { node: 7 },
        }];
        let mut b = a.clone();
        b.events[0].time = 0.2499; // rounds to the same step
        let mut c = a.clone();
        c.events[0].time = 0.2501; // rounds one step later

        let ta = run_scenario(&a).unwrap();
        let tb = run_scenario(&b).unwrap();
        let tc = run_scenario(&c).unwrap();
        assert_eq!(ta, tb);
        assert_ne!(ta, tc);
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let mut scenario = example1();
        scenario.t_end = 2.0;
        scenario.events.clear();
        let a = run_scenario(&scenario).unwrap();
        let b = run_scenario(&scenario).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn recording_cadence_includes_endpoints() {
        let mut scenario = single_agent_scenario();
        scenario.t_end = 1.0;
        scenario.h = 0.1;
        scenario.record_every = 3;
        let trace = run_scenario(&scenario).unwrap();
        assert_eq!(trace.times.len(), 5); // k = 0, 3, 6, 9, 10
        assert_relative_eq!(*trace.times.last().unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn blow_up_names_the_agent_and_keeps_the_partial_trace() {
        let mut scenario = single_agent_scenario();
        scenario.gain_fn = NussbaumFn::ExpSqSin;
        scenario.init.r = Some(vec![0.0]); // zeta = 2, adaptation active
        scenario.init.theta = Some(vec![18.0]); // exp(324): astronomic gain
        let err = run_scenario(&scenario).unwrap_err();
        match err {
            Error::BlowUp {
                agent,
                time,
                theta,
                partial,
            } => {
                assert_eq!(agent, 0);
                assert_eq!(time, 0.0);
                assert_eq!(theta, 18.0);
                let partial = partial.expect("partial trace attached");
                assert_eq!(partial.times, vec![0.0]);
            }
            other => panic!("expected blow-up, got {other}"),
        }
    }

    #[test]
    fn nussbaum_overflow_surfaces_as_blow_up() {
        let mut scenario = single_agent_scenario();
        scenario.gain_fn = NussbaumFn::ExpSqSin;
        scenario.init.theta = Some(vec![20.0]); // beyond the eval guard
        let err = run_scenario(&scenario).unwrap_err();
        assert!(matches!(err, Error::BlowUp { agent: 0, .. }), "{err}");
    }

    #[test]
    fn batch_runners_agree() {
        let mut s1 = example1();
        s1.t_end = 0.5;
        s1.events.clear();
        let mut s2 = s1.clone();
        s2.gains = Some(GainSchedule {
            alpha: 1.0,
            beta: 4.0,
        });
        let batch = vec![s1.clone(), s2.clone()];
        let par = run_scenarios(&batch);
        let seq = run_scenarios_seq(&batch);
        assert_eq!(par.len(), 2);
        for (a, b) in par.iter().zip(&seq) {
            assert_eq!(a.as_ref().unwrap(), b.as_ref().unwrap());
        }
        assert_eq!(seq[0].as_ref().unwrap(), &run_scenario(&s1).unwrap());
    }

    #[test]
    fn generator_only_run_contracts_and_conserves() {
        let graph = demo_graph();
        let centers = [-3.0, -2.0, 0.0, -1.0, 1.0, 4.0, 2.0, 5.0];
        let costs: Vec<CostFn> = centers
            .iter()
            .map(|&center| CostFn::Quadratic { c: 1.0, center })
            .collect();
        let gains = GainSchedule {
            alpha: 2.0,
            beta: 8.0,
        };
        let v0 = [0.0; 8];
        let trace =
            run_generator_only(&graph, &costs, gains, &centers, &v0, 2.0, 1e-3, 100).unwrap();

        let spread = |r: &[f64]| -> f64 {
            r.iter().map(|ri| (ri - 0.75).abs()).fold(0.0, f64::max)
        };
        let first = spread(&trace.r[0]);
        let last = spread(trace.r.last().unwrap());
        assert!(last < 0.05 * first, "spread {first:.3} -> {last:.3}");

        for v in &trace.v {
            let total: f64 = v.iter().sum();
            assert!(total.abs() <= 1e-9, "integrator sum drifted: {total:.3e}");
        }
    }

    #[test]
    fn validation_catches_structural_mistakes() {
        let good = example1();
        assert!(good.validate().unwrap().is_empty());

        let mut bad = good.clone();
        bad.costs.pop();
        assert!(bad.validate().is_err());

        let mut bad = good.clone();
        bad.coeffs[0] = vec![-1.0];
        assert!(bad.validate().is_err());

        let mut bad = good.clone();
        bad.events.push(Event {
            time: 99.0,
            action: EventAction::RestoreGraph,
        });
        assert!(bad.validate().is_err());

        let mut bad = good.clone();
        bad.events.push(Event {
            time: 1.0,
            action: EventAction::Disturbance {
                amplitude: 1.0,
                frequency: 1.0,
                t_on: 0.5,
                t_off: 2.0,
            },
        });
        assert!(bad.validate().is_err(), "window opens before the event");

        let mut warned = good.clone();
        warned.mode = Mode::Online;
        assert_eq!(warned.validate().unwrap().len(), 1);
    }

    #[test]
    fn auto_gains_resolve_to_certified_floors() {
        let mut scenario = example1();
        scenario.gains = None;
        let g = scenario.resolved_gains().unwrap();
        assert_relative_eq!(g.alpha, 7.055907339, epsilon = 1e-6);
        assert_relative_eq!(g.beta, 11477.355175, max_relative = 1e-6);
    }
}
