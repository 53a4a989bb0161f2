//! Commutativity checking for concurrent objects.
//!
//! Concurrent programs are modeled in a small action language
//! ([`program`]), every interleaving is enumerated under sequential
//! consistency ([`explorer`]), equivalent interleavings are collapsed into
//! Mazurkiewicz traces ([`trace_monoid`]), and the surviving traces are
//! merged into a state-chart graph ([`statechart`]). A scenario
//! ([`commutativity`]) runs a setup phase, a concurrent phase and a probe
//! phase over one of the modeled objects in [`structures`]; two operations
//! commute when every trace leaves the same probe footprint and every
//! operation returns the same response. [`graph_io`] exports the chart as a
//! Cypher import script, DOT or JSON.

pub mod commutativity;
pub mod error;
pub mod explorer;
pub mod graph_io;
pub mod program;
pub mod scenario;
pub mod statechart;
pub mod structures;
pub mod trace_monoid;

pub use commutativity::{run_scenario, FootprintMode, ProbeFootprint, ScenarioRun, Verdict};
pub use error::{Error, Result};
pub use explorer::{explore, quotient, ActionRecord, ActionType, Execution, ExploreConfig, TraceSet};
pub use program::{LocationId, NodeRef, Phase, ProgramSpec, ThreadId, Value};
pub use scenario::{Operation, Scenario, Structure};
pub use statechart::{build_statechart, NodeId, StateChart, TraceId};
