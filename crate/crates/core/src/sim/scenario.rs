//! Scenario files: TOML documents describing a roster, its behaviors, the
//! network and the checks to run. See `docs/FORMATS.md` for the schema.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::Path;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{keygen, NodeId, PrivateKey};
use crate::crdt::Op;
use crate::detect::Mode;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ValidityKind {
    #[default]
    Always,
    UniqueId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayModel {
    /// Uniform in `[1, max_delay]` from the scenario's generator.
    Bounded { max_delay: u64 },
    /// Fixed per directed edge, `default` elsewhere.
    Scripted {
        default: u64,
        #[serde(default)]
        edges: Vec<EdgeDelay>,
    },
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel::Bounded { max_delay: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDelay {
    pub from: String,
    pub to: String,
    pub delay: u64,
}

/// Payload of a scripted bad block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PayloadSpec {
    Register(String),
    Add(String),
    Hex(String),
}

impl PayloadSpec {
    pub fn bytes(&self) -> Result<Vec<u8>, ScenarioError> {
        Ok(match self {
            PayloadSpec::Register(n) => Op::Register(n.as_bytes().to_vec()).encode(),
            PayloadSpec::Add(e) => Op::Add(e.as_bytes().to_vec()).encode(),
            PayloadSpec::Hex(h) => hex::decode(h).map_err(|e| ScenarioError::Invalid(format!("bad hex payload: {e}")))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "behavior", rename_all = "snake_case")]
pub enum Behavior {
    Correct,
    /// Splits into `forks` replicas at `fork_step`; each serves a disjoint
    /// share of the neighbours and never acknowledges the split.
    Equivocator {
        #[serde(default = "two")]
        forks: usize,
        fork_step: u64,
    },
    /// Follows the protocol but never accepts anything that would expose
    /// `partner`.
    Colluder { partner: String },
    /// At its first production slot at or after `step`, points at a
    /// predecessor together with one of its ancestors.
    MalformedSender { step: u64 },
    /// At its first production slot at or after `step`, issues `bad_payload`.
    InvalidSender { step: u64, bad_payload: PayloadSpec },
    /// Produces blocks but forwards nothing it receives.
    Dropper,
}

fn two() -> usize {
    2
}

impl Behavior {
    pub fn label(&self) -> &'static str {
        match self {
            Behavior::Correct => "correct",
            Behavior::Equivocator { .. } => "equivocator",
            Behavior::Colluder { .. } => "colluder",
            Behavior::MalformedSender { .. } => "malformed_sender",
            Behavior::InvalidSender { .. } => "invalid_sender",
            Behavior::Dropper => "dropper",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    #[serde(flatten)]
    pub behavior: Behavior,
    /// Production period in steps; defaults to the scenario's.
    #[serde(default)]
    pub period: Option<u64>,
    /// First production step; defaults to the node's roster position modulo
    /// its period.
    #[serde(default)]
    pub offset: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Assertion {
    EventualVisibility,
    Convergence,
    /// `expected` defaults to the scripted detectable Byzantine nodes.
    ByzantineConvergence {
        #[serde(default)]
        expected: Option<Vec<String>>,
    },
    Equivocators {
        expected: Vec<String>,
    },
    NoFalseAccusations,
    FiniteHarm {
        accused: String,
    },
    UnboundedHarm {
        accused: String,
    },
    BrepInvariant,
    Axioms,
}

impl Assertion {
    pub fn name(&self) -> &'static str {
        match self {
            Assertion::EventualVisibility => "eventual_visibility",
            Assertion::Convergence => "convergence",
            Assertion::ByzantineConvergence { .. } => "byzantine_convergence",
            Assertion::Equivocators { .. } => "equivocators",
            Assertion::NoFalseAccusations => "no_false_accusations",
            Assertion::FiniteHarm { .. } => "finite_harm",
            Assertion::UnboundedHarm { .. } => "unbounded_harm",
            Assertion::BrepInvariant => "brep_invariant",
            Assertion::Axioms => "axioms",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub max_steps: u64,
    /// No block is produced at or after this step, except acknowledgments.
    pub production_stop: u64,
    /// Harm counters are compared at this step and at the end; defaults to
    /// half of `production_stop`.
    #[serde(default)]
    pub settle_step: Option<u64>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub validity: ValidityKind,
    #[serde(default)]
    pub delay: DelayModel,
    #[serde(default = "one")]
    pub period: u64,
    #[serde(default = "five")]
    pub sync_interval: u64,
    /// Undirected communication graph; complete when absent.
    #[serde(default)]
    pub edges: Option<Vec<(String, String)>>,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

fn one() -> u64 {
    1
}

fn five() -> u64 {
    5
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let sc: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut sc = Scenario::from_toml(&text)?;
        if sc.name.is_empty() {
            sc.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(sc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn settle(&self) -> u64 {
        self.settle_step.unwrap_or(self.production_stop / 2)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Key pair derived from the node's name, memoized per process.
    pub fn key(&self, i: usize) -> (NodeId, PrivateKey) {
        static KEYS: OnceLock<Mutex<HashMap<String, (NodeId, PrivateKey)>>> = OnceLock::new();
        let name = &self.nodes[i].name;
        let mut keys = KEYS.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
        keys.entry(name.clone())
            .or_insert_with(|| keygen(name.as_bytes()))
            .clone()
    }

    pub fn period_of(&self, i: usize) -> u64 {
        self.nodes[i].period.unwrap_or(self.period)
    }

    pub fn offset_of(&self, i: usize) -> u64 {
        self.nodes[i]
            .offset
            .unwrap_or(i as u64 % self.period_of(i))
    }

    pub fn produces_at(&self, i: usize, step: u64) -> bool {
        let (p, o) = (self.period_of(i), self.offset_of(i));
        step < self.production_stop && step >= o && (step - o) % p == 0
    }

    pub fn is_correct(&self, i: usize) -> bool {
        self.nodes[i].behavior == Behavior::Correct
    }

    /// Neighbour lists, sorted by roster index.
    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let n = self.nodes.len();
        match &self.edges {
            None => (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect(),
            Some(edges) => {
                let mut adj = vec![BTreeSet::new(); n];
                for (a, b) in edges {
                    // Names were checked by `validate`.
                    let (a, b) = (self.index_of(a).unwrap_or(0), self.index_of(b).unwrap_or(0));
                    if a != b {
                        adj[a].insert(b);
                        adj[b].insert(a);
                    }
                }
                adj.into_iter().map(|s| s.into_iter().collect()).collect()
            }
        }
    }

    /// Nodes whose misbehaviour leaves evidence in some blocklace. An
    /// equivocator qualifies when two of its forks serve a neighbour and it
    /// has a production slot after forking.
    pub fn detectable(&self) -> BTreeSet<String> {
        let adj = self.neighbours();
        self.nodes
            .iter()
            .enumerate()
            .filter(|(i, n)| match &n.behavior {
                Behavior::Equivocator { forks, fork_step } => {
                    *forks >= 2
                        && adj[*i].len() >= 2
                        && (*fork_step..self.production_stop).any(|t| self.produces_at(*i, t))
                }
                Behavior::MalformedSender { step } => *step < self.production_stop,
                Behavior::InvalidSender { step, .. } => {
                    self.validity == ValidityKind::UniqueId && *step < self.production_stop
                }
                _ => false,
            })
            .map(|(_, n)| n.name.clone())
            .collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        let mut names = BTreeSet::new();
        for n in &self.nodes {
            if n.name.is_empty() || !names.insert(n.name.as_str()) {
                return bad(format!("empty or duplicate node name {:?}", n.name));
            }
        }
        if self.production_stop > self.max_steps {
            return bad("production_stop exceeds max_steps".into());
        }
        if self.period == 0 || self.sync_interval == 0 {
            return bad("period and sync_interval must be positive".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if self.period_of(i) == 0 {
                return bad(format!("node {} has period 0", n.name));
            }
            match &n.behavior {
                Behavior::Equivocator { forks, .. } if *forks < 2 => {
                    return bad(format!("equivocator {} needs at least 2 forks", n.name));
                }
                Behavior::Colluder { partner } if self.index_of(partner).is_none() || *partner == n.name => {
                    return bad(format!("colluder {} has unknown partner {partner:?}", n.name));
                }
                Behavior::InvalidSender { bad_payload, .. } => {
                    bad_payload.bytes()?;
                }
                _ => {}
            }
        }
        match &self.delay {
            DelayModel::Bounded { max_delay } if *max_delay == 0 => return bad("max_delay must be positive".into()),
            DelayModel::Scripted { default, edges } => {
                if *default == 0 || edges.iter().any(|e| e.delay == 0) {
                    return bad("delays must be positive".into());
                }
                for e in edges {
                    if self.index_of(&e.from).is_none() || self.index_of(&e.to).is_none() {
                        return bad(format!("delay edge {} -> {} names an unknown node", e.from, e.to));
                    }
                }
            }
            _ => {}
        }
        if let Some(edges) = &self.edges {
            for (a, b) in edges {
                if self.index_of(a).is_none() || self.index_of(b).is_none() {
                    return bad(format!("edge {a} -- {b} names an unknown node"));
                }
            }
        }
        for a in &self.assertions {
            let named: Vec<&String> = match a {
                Assertion::ByzantineConvergence { expected: Some(v) } | Assertion::Equivocators { expected: v } => {
                    v.iter().collect()
                }
                Assertion::FiniteHarm { accused } | Assertion::UnboundedHarm { accused } => vec![accused],
                _ => vec![],
            };
            if let Some(n) = named.into_iter().find(|n| self.index_of(n).is_none()) {
                return bad(format!("assertion {} names unknown node {n:?}", a.name()));
            }
        }
        self.check_connected()
    }

    fn check_connected(&self) -> Result<(), ScenarioError> {
        let adj = self.neighbours();
        let correct: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.is_correct(i)).collect();
        let Some(&start) = correct.first() else {
            return Ok(());
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if self.is_correct(j) && seen.insert(j) {
                    queue.push_back(j);
                }
            }
        }
        if seen.len() != correct.len() {
            return Err(ScenarioError::Invalid(
                "correct nodes do not form a connected graph".into(),
            ));
        }
        Ok(())
    }

    /// Roster identities by name.
    pub fn roster(&self) -> BTreeMap<NodeId, String> {
        (0..self.nodes.len())
            .map(|i| (self.key(i).0, self.nodes[i].name.clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7
max_steps = 100
production_stop = 60
mode = "repelling"
validity = "unique-id"
period = 4
delay = { kind = "bounded", max_delay = 2 }

[[nodes]]
name = "a"
behavior = "correct"

[[nodes]]
name = "b"
behavior = "equivocator"
fork_step = 10

[[nodes]]
name = "c"
behavior = "invalid_sender"
step = 20
bad_payload = { register = "a" }

[[nodes]]
name = "d"
behavior = "correct"
offset = 1

[[assertions]]
check = "equivocators"
expected = ["b"]

[[assertions]]
check = "eventual_visibility"
"#;

    #[test]
    fn parses_and_round_trips() {
        let sc = Scenario::from_toml(SAMPLE).unwrap();
        assert_eq!(sc.nodes.len(), 4);
        assert_eq!(sc.nodes[1].behavior, Behavior::Equivocator { forks: 2, fork_step: 10 });
        assert_eq!(sc.offset_of(2), 2);
        assert_eq!(sc.offset_of(3), 1);
        assert!(sc.produces_at(3, 5) && !sc.produces_at(3, 6) && !sc.produces_at(3, 61));
        assert_eq!(sc.detectable(), BTreeSet::from(["b".to_string(), "c".to_string()]));
        let back = Scenario::from_toml(&sc.to_toml()).unwrap();
        assert_eq!(back, sc);
    }

    #[test]
    fn rejects_disconnected_correct_graph() {
        let text = SAMPLE.replace("mode = \"repelling\"", "edges = [[\"a\", \"b\"], [\"b\", \"d\"]]");
        let err = Scenario::from_toml(&text).unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid(m) if m.contains("connected")));
    }

    #[test]
    fn rejects_unknown_behavior_and_partner() {
        assert!(matches!(
            Scenario::from_toml(&SAMPLE.replace("\"equivocator\"", "\"sleeper\"")),
            Err(ScenarioError::Parse(_))
        ));
        let text = SAMPLE.replace(
            "behavior = \"equivocator\"\nfork_step = 10",
            "behavior = \"colluder\"\npartner = \"zz\"",
        );
        assert!(matches!(Scenario::from_toml(&text), Err(ScenarioError::Invalid(_))));
    }
}
