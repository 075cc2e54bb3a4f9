//! Deterministic adversarial network simulator.
//!
//! A [`Scenario`] names a roster of nodes with behaviors, a communication
//! graph, a delay model and a production schedule. [`Simulator`] executes
//! it step by step and [`SimReport`] summarizes the final states, the harm
//! ledger and the outcome of the scenario's assertions.

pub mod cordial;
pub mod engine;
pub mod gen;
pub mod report;
pub mod scenario;

pub use cordial::{cordial_targets, PeerKnowledge};
pub use engine::{axioms_hold, Simulator};
pub use report::{
    check_byzantine_convergence, check_convergence, check_eventual_visibility, EvidenceRecord, HarmEntry, SimReport, TraceEvent,
};
pub use scenario::{Assertion, Behavior, DelayModel, NodeSpec, Scenario, ScenarioError, ValidityKind};
