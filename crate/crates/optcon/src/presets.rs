//! Ready-made scenarios exercising the full feature surface: a
//! homogeneous double-integrator team that loses and regains a node, and
//! a heterogeneous mixed-order team that rides out an input disturbance.

use crate::controller::{GainSchedule, NussbaumFn};
use crate::costs::CostFn;
use crate::graph::Digraph;
use crate::plant::{default_stabilizing_coeffs, AgentDynamics};
use crate::sim::{Event, EventAction, InitialState, Mode, Scenario};

/// The 8-node communication graph shared by both built-in scenarios: a
/// directed ring with cross-links, unit weights, weight-balanced and
/// strongly connected.
pub fn demo_graph() -> Digraph {
    let edges: [(usize, usize); 13] = [
        (1, 0),
        (2, 1),
        (0, 2),
        (4, 2),
        (2, 3),
        (3, 4),
        (6, 4),
        (4, 5),
        (5, 6),
        (7, 6),
        (6, 7),
        (0, 7),
        (7, 0),
    ];
    let weighted: Vec<(usize, usize, f64)> =
        edges.iter().map(|&(a, b)| (a, b, 1.0)).collect();
    Digraph::from_edges(8, &weighted).expect("demo graph edges are valid")
}

/// Eight double integrators with unknown control directions and private
/// quadratic costs centered at their starting outputs.  Node 7 is cut out
/// of the graph at t = 15 and reconnected at t = 30; the rest of the team
/// keeps agreeing on its own optimum in the meantime.
pub fn example1() -> Scenario {
    let centers = [-3.0, -2.0, 0.0, -1.0, 1.0, 4.0, 2.0, 5.0];
    let gains = [-1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0];
    Scenario {
        graph: demo_graph(),
        agents: gains
            .iter()
            .map(|&b| AgentDynamics::new(2, b).expect("valid double integrator"))
            .collect(),
        coeffs: vec![default_stabilizing_coeffs(2); 8],
        costs: centers
            .iter()
            .map(|&center| CostFn::Quadratic { c: 1.0, center })
            .collect(),
        mode: Mode::Offline,
        eps: 1.0,
        gains: Some(GainSchedule {
            alpha: 2.0,
            beta: 8.0,
        }),
        gain_fn: NussbaumFn::ThetaSqSin,
        t_end: 45.0,
        h: 1e-3,
        record_every: 10,
        init: InitialState {
            x: centers.iter().map(|&c| vec![c, 0.0]).collect(),
            ..Default::default()
        },
        events: vec![
            Event {
                time: 15.0,
                action: EventAction::IsolateNode { node: 7 },
            },
            Event {
                time: 30.0,
                action: EventAction::RestoreGraph,
            },
        ],
    }
}

/// A heterogeneous team - chain lengths (1, 2, 3, 4) twice over, all
/// control gains negative - with four different cost shapes, the
/// generator fed by live outputs, and a sinusoidal input disturbance on
/// t in [15, 30].
pub fn example2() -> Scenario {
    let orders = [1usize, 2, 3, 4, 1, 2, 3, 4];
    let costs = [
        CostFn::Quadratic { c: 1.0, center: 8.0 },
        CostFn::SqrtRatio,
        CostFn::LogRatio,
        CostFn::SoftPlusPair,
        CostFn::Quadratic { c: 1.0, center: 8.0 },
        CostFn::SqrtRatio,
        CostFn::LogRatio,
        CostFn::SoftPlusPair,
    ];
    Scenario {
        graph: demo_graph(),
        agents: orders
            .iter()
            .map(|&n| AgentDynamics::new(n, -1.0).expect("valid chain"))
            .collect(),
        coeffs: orders.iter().map(|&n| default_stabilizing_coeffs(n)).collect(),
        costs: costs.to_vec(),
        mode: Mode::Online,
        eps: 0.5,
        gains: Some(GainSchedule {
            alpha: 2.0,
            beta: 8.0,
        }),
        gain_fn: NussbaumFn::ExpSqSin,
        t_end: 45.0,
        h: 1e-3,
        record_every: 10,
        init: InitialState {
            x: orders.iter().map(|&n| vec![0.0; n]).collect(),
            ..Default::default()
        },
        events: vec![Event {
            time: 15.0,
            action: EventAction::Disturbance {
                amplitude: 10.0,
                frequency: 1.0,
                t_on: 15.0,
                t_off: 30.0,
            },
        }],
    }
}
