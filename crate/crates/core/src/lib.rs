//! Cooperative offloading of video-processing tasks to a swarm of edge nodes.
//!
//! The crate has two independent routes to a task's completion time:
//! closed-form expressions in [`latency`] and a discrete-event simulation in
//! [`sim`] that drives the swarm-formation protocol of [`swarmproto`]. Both
//! consume a [`scenario::Scenario`] and must agree in the strict-barrier mode.

pub mod cli;
pub mod latency;
pub mod model;
pub mod policies;
pub mod scenario;
pub mod sim;
pub mod swarmproto;

pub use latency::{analytic_scenario, DelayBreakdown};
pub use scenario::{Scenario, ScenarioError, Violation};
pub use sim::{run, sweep, SimMode, SimReport, SweepPoint};
