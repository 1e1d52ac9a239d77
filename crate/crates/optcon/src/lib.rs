//! Simulator for distributed optimal consensus over networks of
//! integrator-chain agents whose control directions are unknown.
//!
//! Every agent owns a private convex cost and a chain of integrators
//! driven through a gain of unknown sign.  A shared reference generator
//! pushes local references toward the minimizer of the summed costs using
//! only neighbor-to-neighbor exchange, while each agent tracks its
//! reference with a Nussbaum-adaptive law that probes the control
//! direction on the fly.  The crate provides:
//!
//! - [`graph`]: weighted digraphs, Laplacians, and the spectrum checks
//!   behind the connectivity assumptions;
//! - [`costs`]: the convex cost catalog, aggregate convexity parameters,
//!   and an independent minimizer solver;
//! - [`plant`]: integrator chains, the scaled change of variables, and
//!   Lyapunov certificates for the stabilized subsystem;
//! - [`controller`]: certified gain floors, the generator vector field,
//!   Nussbaum gains and their oscillation probes;
//! - [`sim`]: scenario description, events, and the fixed-step RK4
//!   closed-loop runner;
//! - [`analysis`]: consensus/optimality metrics, rate fitting, CSV
//!   export;
//! - [`presets`]: two ready-made demonstration scenarios.
//!
//! Runs are deterministic: the same scenario always produces bitwise
//! identical traces.  With the default `parallel` feature, batch helpers
//! fan out over a thread pool; single runs always integrate sequentially.

// Index-coupled numeric loops (one index over several parallel
// structures, or mirroring a summation formula) read closer to the math
// than the equivalent iterator chains.
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod controller;
pub mod costs;
pub mod error;
pub mod graph;
pub mod plant;
pub mod presets;
pub mod sim;

pub use analysis::{
    consensus_error, export_csv, fit_exponential_rate, optimality_gap, MetricsReport,
};
pub use controller::{certified_gains, GainSchedule, NussbaumFn};
pub use costs::{aggregate_convexity, global_minimizer, CostFn};
pub use error::{Error, Result};
pub use graph::{Digraph, SpectralInfo};
pub use plant::AgentDynamics;
pub use presets::{demo_graph, example1, example2};
pub use sim::{
    run_generator_only, run_scenario, run_scenarios, run_scenarios_seq, Event, EventAction,
    InitialState, Mode, Scenario, Trace,
};
