//! Simulation reports and the property checks evaluated over them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::detect::Mode;
use crate::sim::scenario::{Assertion, Scenario};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub name: String,
    pub id: String,
    pub behavior: String,
    pub forks: usize,
    pub produced: u64,
    pub accepted: usize,
    pub buffered: usize,
    pub frontier: usize,
    /// Digest of the sorted accepted identities.
    pub blocklace_digest: String,
    pub polog_len: usize,
    /// Digest of the sorted PO-Log identities. Each identity fixes its
    /// past, so equal digests imply equal orders.
    pub polog_digest: String,
    pub orset: Vec<String>,
    pub byz: Vec<String>,
    /// One self-certifying accusation per Byzantine node in the blocklace.
    pub evidence: Vec<EvidenceRecord>,
    pub equivocators: Vec<String>,
    /// Accepted blocklace satisfied the repelling predicate after every
    /// step that changed it (repelling mode only; `true` otherwise).
    pub brep_every_step: bool,
    pub audit_ok: bool,
    /// Closed, acyclic, and chains for every correct creator.
    pub axioms_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub accused: String,
    pub kind: String,
    /// Full hex identities of the offending blocks.
    pub blocks: Vec<String>,
    /// Blocks in the witness down-set.
    pub witness_size: usize,
    /// When this node first held the evidence, if it is a correct node.
    pub detection_step: Option<u64>,
}

/// Harm inflicted by `accused` on the correct node `observer`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarmEntry {
    pub observer: String,
    pub accused: String,
    pub detection_step: Option<u64>,
    /// First step at which any correct node held evidence.
    pub public_step: Option<u64>,
    /// Nodes neither Byzantine nor acknowledging `accused` in the
    /// observer's blocklace right after detection.
    pub r_at_detection: Option<usize>,
    /// Accepted chunks containing `accused` blocks after detection.
    pub chunks_after_detection: u64,
    pub accepted_after_detection: u64,
    pub accepted_after_public: u64,
    pub accepted_total: u64,
    pub accepted_at_settle: u64,
    /// Last step at which `accepted_after_detection` grew.
    pub last_increase_step: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bct {
    pub step: u64,
    pub convergent: Vec<String>,
    /// Every correct node's last block reports the convergent set.
    pub settled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionOutcome {
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Produce {
        step: u64,
        node: String,
        fork: usize,
        block: String,
        preds: usize,
        /// Hex of the block's wire encoding.
        wire: String,
    },
    Send {
        step: u64,
        from: String,
        to: String,
        blocks: usize,
        deliver_at: u64,
    },
    Accept {
        step: u64,
        node: String,
        fork: usize,
        top: String,
        rule: Option<String>,
        size: usize,
    },
    Detect {
        step: u64,
        observer: String,
        accused: String,
        kind: String,
        blocks: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimReport {
    pub scenario: String,
    pub seed: u64,
    pub mode: Mode,
    pub validity: String,
    pub steps: u64,
    pub quiescent: bool,
    pub messages: u64,
    pub block_transmissions: u64,
    pub settle_step: u64,
    /// Distinct blocks accepted by at least one correct node.
    pub correct_union: usize,
    pub detectable: Vec<String>,
    pub nodes: Vec<NodeSummary>,
    pub bct: Option<Bct>,
    pub harm: Vec<HarmEntry>,
    pub assertions: Vec<AssertionOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEvent>>,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn correct(&self) -> impl Iterator<Item = &NodeSummary> + '_ {
        self.nodes.iter().filter(|n| n.behavior == "correct")
    }

    pub fn node(&self, name: &str) -> Option<&NodeSummary> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn harm_for(&self, observer: &str, accused: &str) -> Option<&HarmEntry> {
        self.harm
            .iter()
            .find(|h| h.observer == observer && h.accused == accused)
    }

    pub fn evaluate(&mut self, sc: &Scenario) {
        self.assertions = sc.assertions.iter().map(|a| evaluate(self, a)).collect();
    }
}

fn outcome(check: &str, passed: bool, detail: String) -> AssertionOutcome {
    AssertionOutcome {
        check: check.to_string(),
        passed,
        detail,
    }
}

/// Every block accepted by some correct node is accepted by all of them.
pub fn check_eventual_visibility(r: &SimReport) -> bool {
    r.quiescent && r.correct().all(|n| n.accepted == r.correct_union)
}

/// All correct nodes hold identical PO-Logs and OR-Set views.
pub fn check_convergence(r: &SimReport) -> bool {
    let mut it = r.correct();
    let Some(first) = it.next() else {
        return true;
    };
    r.quiescent
        && it.all(|n| n.polog_digest == first.polog_digest && n.orset == first.orset)
}

/// The Byzantine convergence time and convergent set, if every correct node
/// settled on the same set.
pub fn check_byzantine_convergence(r: &SimReport) -> Option<(u64, BTreeSet<String>)> {
    r.bct
        .as_ref()
        .filter(|b| b.settled)
        .map(|b| (b.step, b.convergent.iter().cloned().collect()))
}

fn evaluate(r: &SimReport, a: &Assertion) -> AssertionOutcome {
    let name = a.name();
    match a {
        Assertion::EventualVisibility => {
            let sizes: Vec<usize> = r.correct().map(|n| n.accepted).collect();
            outcome(
                name,
                check_eventual_visibility(r),
                format!("quiescent={} union={} per-node={sizes:?}", r.quiescent, r.correct_union),
            )
        }
        Assertion::Convergence => outcome(
            name,
            check_convergence(r),
            format!(
                "{} distinct polog digests",
                r.correct().map(|n| &n.polog_digest).collect::<BTreeSet<_>>().len()
            ),
        ),
        Assertion::ByzantineConvergence { expected } => {
            let expected: BTreeSet<String> = match expected {
                Some(v) => v.iter().cloned().collect(),
                None => r.detectable.iter().cloned().collect(),
            };
            match check_byzantine_convergence(r) {
                Some((step, set)) => outcome(
                    name,
                    set == expected,
                    format!("bct={step} convergent={set:?} expected={expected:?}"),
                ),
                None => outcome(name, false, format!("no convergence; bct={:?}", r.bct)),
            }
        }
        Assertion::Equivocators { expected } => {
            let expected: Vec<String> = expected.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
            let wrong: Vec<&str> = r
                .correct()
                .filter(|n| n.equivocators != expected)
                .map(|n| n.name.as_str())
                .collect();
            outcome(name, wrong.is_empty(), format!("expected={expected:?} mismatching={wrong:?}"))
        }
        Assertion::NoFalseAccusations => {
            let correct: BTreeSet<&str> = r.correct().map(|n| n.name.as_str()).collect();
            let false_acc: Vec<(String, String)> = r
                .correct()
                .flat_map(|n| {
                    n.byz
                        .iter()
                        .filter(|b| correct.contains(b.as_str()))
                        .map(|b| (n.name.clone(), b.clone()))
                })
                .collect();
            outcome(name, false_acc.is_empty(), format!("false accusations={false_acc:?}"))
        }
        Assertion::FiniteHarm { accused } => {
            let mut fails = Vec::new();
            for n in r.correct() {
                match r.harm_for(&n.name, accused) {
                    Some(h) if finite_harm(h, r.settle_step) => {}
                    other => fails.push(format!("{}: {:?}", n.name, other)),
                }
            }
            outcome(name, fails.is_empty(), format!("violations=[{}]", fails.join("; ")))
        }
        Assertion::UnboundedHarm { accused } => {
            let mut fails = Vec::new();
            for n in r.correct() {
                match r.harm_for(&n.name, accused) {
                    Some(h) if h.accepted_total > h.accepted_at_settle => {}
                    other => fails.push(format!("{}: {:?}", n.name, other)),
                }
            }
            outcome(name, fails.is_empty(), format!("violations=[{}]", fails.join("; ")))
        }
        Assertion::BrepInvariant => {
            let bad: Vec<&str> = r
                .correct()
                .filter(|n| !(n.brep_every_step && n.audit_ok))
                .map(|n| n.name.as_str())
                .collect();
            outcome(name, bad.is_empty(), format!("violations={bad:?}"))
        }
        Assertion::Axioms => {
            let bad: Vec<&str> = r.correct().filter(|n| !n.axioms_ok).map(|n| n.name.as_str()).collect();
            outcome(name, bad.is_empty(), format!("violations={bad:?}"))
        }
    }
}

/// Detected, post-detection acceptances within the measured bound, and no
/// growth after the settle step.
pub fn finite_harm(h: &HarmEntry, settle_step: u64) -> bool {
    let (Some(_), Some(bound)) = (h.detection_step, h.r_at_detection) else {
        return false;
    };
    h.accepted_after_detection <= bound as u64 && h.last_increase_step.is_none_or(|s| s < settle_step)
}
