//! Blocklace: a signed-hash DAG used as a Byzantine fault tolerant,
//! universal replicated data type.
//!
//! * [`codec`]: identities, keys, signatures and the canonical content encoding.
//! * [`block`] and [`lace`]: blocks and the closed, acyclic blocklace.
//! * [`detect`]: well-formedness, validity, equivocation, Byzantine sets,
//!   PO-Log extraction and self-certifying evidence.
//! * [`repel`]: the Byzantine-repelling predicate and buffered acceptance.
//! * [`crdt`]: operation-based and delta-state interfaces plus an OR-Set.
//! * [`sim`]: a deterministic adversarial network simulator.
//! * [`cli`]: the `blocklace` command-line tool.
//!
//! The `examples/` directory has one runnable program per capability.

pub mod block;
pub mod cli;
pub mod codec;
pub mod crdt;
pub mod detect;
pub mod lace;
pub mod repel;
pub mod sim;

pub use block::Block;
pub use codec::{keygen, BlockId, NodeId, PrivateKey};
pub use crdt::{DeltaGroup, DeltaReplica, Op, OrSetState};
pub use detect::{AlwaysValid, ByzEvidence, Detector, Mode, PoLog, UniqueIdRegistry, ValidityPredicate};
pub use lace::{Blocklace, Frontier, LaceError};
pub use repel::{brep, Buffer, NodeState};
