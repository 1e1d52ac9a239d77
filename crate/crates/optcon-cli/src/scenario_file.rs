//! On-disk scenario schema and its conversion to and from the library's
//! [`Scenario`].
//!
//! The JSON layout favors hand-editing: node ids are zero-based, edges
//! are `[from, to, weight]` triples, per-agent stabilizing coefficients
//! and all initial conditions are optional (defaults: critically damped
//! coefficients, zero initial state, references starting at the outputs),
//! and `"gains": null` (or omitting the field) asks the runner to derive
//! the certified floors from the costs and the graph.

use serde::{Deserialize, Serialize};

use anyhow::{bail, Context};
use optcon::controller::{GainSchedule, NussbaumFn};
use optcon::costs::CostFn;
use optcon::graph::Digraph;
use optcon::plant::{default_stabilizing_coeffs, AgentDynamics};
use optcon::sim::{Event, InitialState, Mode, Scenario};

fn default_record_every() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub graph: GraphFile,
    pub agents: Vec<AgentFile>,
    pub costs: Vec<CostFn>,
    pub mode: Mode,
    pub eps: f64,
    /// `null` or absent: derive the certified gain floors at run start.
    #[serde(default)]
    pub gains: Option<GainSchedule>,
    pub nussbaum: NussbaumFn,
    pub t_end: f64,
    pub h: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub init: InitFile,
    #[serde(default)]
    pub events: Vec<Event>,
    /// Default output directory for `run` (overridden by `--out`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub nodes: usize,
    /// `[from, to, weight]` per edge, zero-based nodes.
    pub edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    pub order: usize,
    pub gain: f64,
    /// Stabilizing coefficients; absent means the critically damped
    /// defaults for this order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitFile {
    /// Per-agent chain state; absent means all zeros.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
}

impl ScenarioFile {
    /// Parses a scenario file, keeping serde's line/column context in the
    /// error chain.
    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))
    }

    /// Builds the runnable scenario, filling in every documented default.
    pub fn to_scenario(&self) -> anyhow::Result<Scenario> {
        let graph = Digraph::from_edges(self.graph.nodes, &self.graph.edges)
            .context("building the communication graph")?;
        let mut agents = Vec::with_capacity(self.agents.len());
        let mut coeffs = Vec::with_capacity(self.agents.len());
        for (i, a) in self.agents.iter().enumerate() {
            agents.push(
                AgentDynamics::new(a.order, a.gain)
                    .with_context(|| format!("agent {i}"))?,
            );
            coeffs.push(
                a.k.clone()
                    .unwrap_or_else(|| default_stabilizing_coeffs(a.order)),
            );
        }
        let x = match &self.init.x {
            Some(x) => x.clone(),
            None => self.agents.iter().map(|a| vec![0.0; a.order]).collect(),
        };
        let scenario = Scenario {
            graph,
            agents,
            coeffs,
            costs: self.costs.clone(),
            mode: self.mode,
            eps: self.eps,
            gains: self.gains,
            gain_fn: self.nussbaum,
            t_end: self.t_end,
            h: self.h,
            record_every: self.record_every,
            init: InitialState {
                x,
                r: self.init.r.clone(),
                v: self.init.v.clone(),
                theta: self.init.theta.clone(),
            },
            events: self.events.clone(),
        };
        Ok(scenario)
    }

    /// Captures a library scenario in file form (used by `scaffold`).
    pub fn from_scenario(
        scenario: &Scenario,
        name: &str,
        description: &str,
    ) -> anyhow::Result<Self> {
        let n = scenario.graph.node_count();
        let w = scenario.graph.weights();
        let mut edges = Vec::new();
        for from in 0..n {
            for to in 0..n {
                if w[(to, from)] > 0.0 {
                    edges.push((from, to, w[(to, from)]));
                }
            }
        }
        if scenario.agents.len() != scenario.coeffs.len() {
            bail!("scenario has mismatched agent and coefficient lists");
        }
        let agents = scenario
            .agents
            .iter()
            .zip(&scenario.coeffs)
            .map(|(a, k)| AgentFile {
                order: a.order(),
                gain: a.gain(),
                k: (*k != default_stabilizing_coeffs(a.order())).then(|| k.clone()),
            })
            .collect();
        Ok(ScenarioFile {
            name: Some(name.to_string()),
            description: Some(description.to_string()),
            graph: GraphFile {
                nodes: n,
                edges,
            },
            agents,
            costs: scenario.costs.clone(),
            mode: scenario.mode,
            eps: scenario.eps,
            gains: scenario.gains,
            nussbaum: scenario.gain_fn,
            t_end: scenario.t_end,
            h: scenario.h,
            record_every: scenario.record_every,
            init: InitFile {
                x: Some(scenario.init.x.clone()),
                r: scenario.init.r.clone(),
                v: scenario.init.v.clone(),
                theta: scenario.init.theta.clone(),
            },
            events: scenario.events.clone(),
            out_dir: None,
        })
    }
}
