//! Deterministic discrete-event execution of a [`Scenario`].
//!
//! One logical clock. Each step first delivers every message due at that
//! step (in send order), then lets scheduled nodes produce, then, once
//! production has stopped, lets nodes that hold unacknowledged Byzantine
//! material produce one acknowledgment block, and finally runs the lazy
//! sync tick on multiples of `sync_interval`. A run ends at the first tick
//! after `production_stop` with nothing in flight and nothing to send, or
//! at `max_steps`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::block::Block;
use crate::codec::{BlockId, IdSet, NodeId, NodeMap, PrivateKey};
use crate::crdt::{orset_query, Op};
use crate::detect::{AlwaysValid, Mode, PeelRule, UniqueIdRegistry, ValidityPredicate};
use crate::repel::{AcceptFilter, NodeState};
use crate::sim::cordial::PeerKnowledge;
use crate::sim::report::{Bct, EvidenceRecord, HarmEntry, NodeSummary, SimReport, TraceEvent};
use crate::sim::scenario::{Behavior, DelayModel, Scenario, ScenarioError, ValidityKind};

const ELEMENTS: u32 = 8;

struct Message {
    from: usize,
    to: usize,
    blocks: Vec<Arc<Block>>,
}

#[derive(Clone)]
struct Replica {
    state: NodeState,
    /// Roster indices this replica talks to.
    peers: Vec<usize>,
    knowledge: PeerKnowledge,
    order_seen: usize,
    log_seen: usize,
    own_last: Option<BlockId>,
    registered: bool,
    /// Visible adds per element, for generating removes.
    elems: BTreeMap<Vec<u8>, BTreeSet<BlockId>>,
    brep_ok: bool,
    axioms_ok: bool,
    axioms: AxiomCursor,
    changed: bool,
    ack_check: bool,
}

struct SimNode {
    id: NodeId,
    key: PrivateKey,
    behavior: Behavior,
    neighbours: Vec<usize>,
    replicas: Vec<Replica>,
    produced: u64,
    script_done: bool,
}

#[derive(Default, Clone)]
struct Harm {
    detection_step: Option<u64>,
    r_at_detection: Option<usize>,
    chunks_after_detection: u64,
    accepted_after_detection: u64,
    accepted_after_public: u64,
    accepted_total: u64,
    accepted_at_settle: u64,
    last_increase_step: Option<u64>,
}

pub struct Simulator {
    sc: Scenario,
    nodes: Vec<SimNode>,
    index: NodeMap<usize>,
    correct_ids: BTreeSet<NodeId>,
    queue: BTreeMap<(u64, u64), Message>,
    seq: u64,
    rng: ChaCha8Rng,
    step: u64,
    finished: bool,
    quiescent: bool,
    messages: u64,
    transmissions: u64,
    harm: BTreeMap<(usize, usize), Harm>,
    public_step: Vec<Option<u64>>,
    /// Correct-node productions: step, producer, Byzantine set of the block.
    productions: Vec<(u64, usize, BTreeSet<NodeId>)>,
    trace: Option<Vec<TraceEvent>>,
}

impl Simulator {
    pub fn new(sc: Scenario) -> Result<Self, ScenarioError> {
        sc.validate()?;
        let validity: Arc<dyn ValidityPredicate> = match sc.validity {
            ValidityKind::Always => Arc::new(AlwaysValid),
            ValidityKind::UniqueId => Arc::new(UniqueIdRegistry),
        };
        let adj = sc.neighbours();
        let mut nodes = Vec::with_capacity(sc.nodes.len());
        let mut index = NodeMap::default();
        let keys: Vec<(NodeId, PrivateKey)> = (0..sc.nodes.len()).map(|i| sc.key(i)).collect();
        let ids: Vec<NodeId> = keys.iter().map(|k| k.0).collect();
        for (i, spec) in sc.nodes.iter().enumerate() {
            let (id, key) = keys[i].clone();
            index.insert(id, i);
            let mut state = NodeState::new(sc.mode, validity.clone());
            if let Behavior::Colluder { partner } = &spec.behavior {
                let p = sc.index_of(partner).expect("validated partner");
                state.set_filter(AcceptFilter::Shield(ids[p]));
            }
            let replica = Replica {
                state,
                peers: adj[i].clone(),
                knowledge: PeerKnowledge::new(adj[i].iter().map(|&j| ids[j])),
                order_seen: 0,
                log_seen: 0,
                own_last: None,
                registered: false,
                elems: BTreeMap::new(),
                brep_ok: true,
                axioms_ok: true,
                axioms: AxiomCursor::default(),
                changed: false,
                ack_check: false,
            };
            nodes.push(SimNode {
                id,
                key,
                behavior: spec.behavior.clone(),
                neighbours: adj[i].clone(),
                replicas: vec![replica],
                produced: 0,
                script_done: false,
            });
        }
        let n = nodes.len();
        let mut harm = BTreeMap::new();
        for p in (0..n).filter(|&p| sc.is_correct(p)) {
            for q in (0..n).filter(|&q| q != p) {
                harm.insert((p, q), Harm::default());
            }
        }
        let correct_ids = (0..n).filter(|&i| sc.is_correct(i)).map(|i| ids[i]).collect();
        Ok(Simulator {
            rng: ChaCha8Rng::seed_from_u64(sc.seed),
            correct_ids,
            sc,
            nodes,
            index,
            queue: BTreeMap::new(),
            seq: 0,
            step: 0,
            finished: false,
            quiescent: false,
            messages: 0,
            transmissions: 0,
            harm,
            public_step: vec![None; n],
            productions: Vec::new(),
            trace: None,
        })
    }

    /// Record a per-event trace in the report.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    /// Run to completion.
    pub fn run(sc: Scenario) -> Result<SimReport, ScenarioError> {
        let mut sim = Simulator::new(sc)?;
        while sim.step() {}
        Ok(sim.finish())
    }

    pub fn scenario(&self) -> &Scenario {
        &self.sc
    }

    /// The next step to execute.
    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn is_quiescent(&self) -> bool {
        self.quiescent
    }

    pub fn node_id(&self, i: usize) -> NodeId {
        self.nodes[i].id
    }

    /// State of node `i` (its first replica for a forked equivocator).
    pub fn state(&self, i: usize) -> &NodeState {
        &self.nodes[i].replicas[0].state
    }

    pub fn replicas(&self, i: usize) -> impl Iterator<Item = &NodeState> + '_ {
        self.nodes[i].replicas.iter().map(|r| &r.state)
    }

    pub fn correct_indices(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.sc.is_correct(i)).collect()
    }

    fn name(&self, i: usize) -> String {
        self.sc.nodes[i].name.clone()
    }

    fn node_name(&self, id: &NodeId) -> String {
        self.index
            .get(id)
            .map(|&i| self.name(i))
            .unwrap_or_else(|| id.short())
    }

    fn names(&self, ids: &BTreeSet<NodeId>) -> Vec<String> {
        let mut v: Vec<String> = ids.iter().map(|id| self.node_name(id)).collect();
        v.sort();
        v
    }

    /// Execute one step. Returns `false` once the run is over.
    pub fn step(&mut self) -> bool {
        if self.finished {
            return false;
        }
        let t = self.step;
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 != t {
                break;
            }
            let msg = entry.remove();
            self.deliver(msg);
        }
        for i in 0..self.nodes.len() {
            if let Behavior::Equivocator { forks, fork_step } = self.nodes[i].behavior {
                if fork_step == t && self.nodes[i].replicas.len() == 1 {
                    self.fork(i, forks);
                }
            }
        }
        for i in 0..self.nodes.len() {
            if self.sc.produces_at(i, t) {
                for r in 0..self.nodes[i].replicas.len() {
                    self.produce(i, r);
                }
            }
        }
        let mut active = false;
        if t >= self.sc.production_stop {
            for i in 0..self.nodes.len() {
                if matches!(self.nodes[i].behavior, Behavior::Correct | Behavior::Colluder { .. })
                    && self.needs_ack(i)
                {
                    self.produce(i, 0);
                    active = true;
                }
            }
        }
        let tick = t % self.sc.sync_interval == 0;
        if tick {
            for i in 0..self.nodes.len() {
                if self.nodes[i].behavior == Behavior::Dropper {
                    continue;
                }
                for r in 0..self.nodes[i].replicas.len() {
                    let peers = self.nodes[i].replicas[r].peers.clone();
                    for p in peers {
                        active |= self.send_missing(i, r, p);
                    }
                }
            }
        }
        self.check_invariants();
        self.step += 1;
        if t >= self.sc.production_stop && tick && !active && self.queue.is_empty() {
            self.quiescent = true;
            self.finished = true;
        } else if self.step > self.sc.max_steps {
            self.finished = true;
        }
        !self.finished
    }

    /// Axioms, and in repelling mode the repelling predicate, for every
    /// correct replica whose blocklace changed this step.
    fn check_invariants(&mut self) {
        let repelling = self.sc.mode == Mode::Repelling;
        for i in 0..self.nodes.len() {
            let correct = self.sc.is_correct(i);
            for rep in &mut self.nodes[i].replicas {
                if !std::mem::take(&mut rep.changed) || !correct {
                    continue;
                }
                if rep.axioms_ok {
                    rep.axioms_ok = rep.axioms.advance(&rep.state, &self.correct_ids);
                }
                if repelling && rep.brep_ok {
                    rep.brep_ok = rep.state.is_brep();
                }
            }
        }
    }

    fn fork(&mut self, i: usize, forks: usize) {
        let id = self.nodes[i].id;
        let base = self.nodes[i].replicas.pop().expect("one replica before forking");
        let neighbours = self.nodes[i].neighbours.clone();
        for f in 0..forks {
            let mut rep = base.clone();
            rep.state.set_filter(AcceptFilter::Shield(id));
            rep.peers = neighbours
                .iter()
                .enumerate()
                .filter(|(k, _)| k % forks == f)
                .map(|(_, &p)| p)
                .collect();
            let keep: BTreeSet<NodeId> = rep.peers.iter().map(|&p| self.nodes[p].id).collect();
            rep.knowledge.retain(|n| keep.contains(n));
            self.nodes[i].replicas.push(rep);
        }
    }

    fn route(&self, to: usize, from: usize) -> usize {
        self.nodes[to]
            .replicas
            .iter()
            .position(|r| r.peers.contains(&from))
            .unwrap_or(0)
    }

    fn delay(&mut self, from: usize, to: usize) -> u64 {
        match &self.sc.delay {
            DelayModel::Bounded { max_delay } => self.rng.random_range(1..=*max_delay),
            DelayModel::Scripted { default, edges } => edges
                .iter()
                .find(|e| e.from == self.sc.nodes[from].name && e.to == self.sc.nodes[to].name)
                .map_or(*default, |e| e.delay),
        }
    }

    fn send(&mut self, from: usize, r: usize, to: usize, blocks: Vec<Arc<Block>>) {
        if blocks.is_empty() {
            return;
        }
        let peer = self.nodes[to].id;
        let rep = &mut self.nodes[from].replicas[r];
        rep.knowledge.mark_sent(&rep.state, &peer, &blocks);
        let at = self.step + self.delay(from, to);
        self.messages += 1;
        self.transmissions += blocks.len() as u64;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEvent::Send {
                step: self.step,
                from: self.sc.nodes[from].name.clone(),
                to: self.sc.nodes[to].name.clone(),
                blocks: blocks.len(),
                deliver_at: at,
            });
        }
        self.queue.insert((at, self.seq), Message { from, to, blocks });
        self.seq += 1;
    }

    fn send_missing(&mut self, i: usize, r: usize, to: usize) -> bool {
        let rep = &self.nodes[i].replicas[r];
        let missing = rep.knowledge.missing(&rep.state, &self.nodes[to].id);
        let any = !missing.is_empty();
        self.send(i, r, to, missing);
        any
    }

    fn deliver(&mut self, msg: Message) {
        let Message { from, to, blocks } = msg;
        let r = self.route(to, from);
        let rep = &mut self.nodes[to].replicas[r];
        for b in blocks {
            rep.state.receive(b);
        }
        let accepted = rep.state.try_accept();
        if accepted.is_empty() {
            return;
        }
        self.after_accept(to, r);
        if self.nodes[to].behavior == Behavior::Dropper {
            return;
        }
        let rep = &mut self.nodes[to].replicas[r];
        let mut owed = BTreeSet::new();
        for id in &accepted {
            let b = rep.state.known().get(id).expect("accepted block known").clone();
            if rep.knowledge.acknowledge(&rep.state, &b) {
                owed.insert(self.index[&b.creator()]);
            }
        }
        for p in owed {
            self.send_missing(to, r, p);
        }
    }

    /// Bookkeeping after node `i`'s replica `r` accepted blocks: payload
    /// tracking, trace, and (for correct observers) the harm ledger.
    fn after_accept(&mut self, i: usize, r: usize) {
        let t = self.step;
        let correct = self.sc.is_correct(i);
        let settle = self.sc.settle();
        let n = self.nodes.len();
        let rep = &mut self.nodes[i].replicas[r];
        rep.changed = true;
        rep.ack_check = true;
        let (order_seen, log_seen) = (rep.order_seen, rep.log_seen);
        for b in rep.state.accepted_since(order_seen) {
            match Op::decode(b.payload()) {
                Ok(Op::Add(e)) => {
                    rep.elems.entry(e).or_default().insert(b.id());
                }
                Ok(Op::Remove(e, ids)) => {
                    if let Some(s) = rep.elems.get_mut(&e) {
                        for id in &ids {
                            s.remove(id);
                        }
                        if s.is_empty() {
                            rep.elems.remove(&e);
                        }
                    }
                }
                _ => {}
            }
        }
        rep.order_seen = rep.state.accepted_len();
        rep.log_seen = rep.state.incorporation_log().len();

        let rep = &self.nodes[i].replicas[r];
        let st = &rep.state;
        let known = st.known();
        let order = &st.accepted_order()[order_seen..];
        let mut pos = 0usize;
        let mut detections = Vec::new();
        let mut traces = Vec::new();
        for inc in &st.incorporation_log()[log_seen..] {
            let chunk = &order[pos..pos + inc.size];
            pos += inc.size;
            if self.trace.is_some() {
                traces.push(TraceEvent::Accept {
                    step: t,
                    node: self.sc.nodes[i].name.clone(),
                    fork: r,
                    top: inc.top.short(),
                    rule: inc.rule.map(|r| match r {
                        PeelRule::NewByzantine => "new_byzantine".to_string(),
                        PeelRule::AcknowledgesKnown => "acknowledges_known".to_string(),
                    }),
                    size: inc.size,
                });
            }
            if !correct {
                continue;
            }
            let prefix: Vec<u32> = inc.prefix.iter().map(|id| known.index_of(id).expect("prefix known")).collect();
            let mut roots = prefix.clone();
            roots.push(known.index_of(&inc.top).expect("top known"));
            let before = st.detector().byz_of(known, &prefix);
            let after = st.detector().byz_of(known, &roots);
            let mut counts = vec![0u64; n];
            for &b in chunk {
                if let Some(&q) = self.index.get(&known.block_at(b).creator()) {
                    counts[q] += 1;
                }
            }
            for q in (0..n).filter(|&q| q != i) {
                let qid = self.nodes[q].id;
                let public = self.public_step[q];
                let h = self.harm.get_mut(&(i, q)).expect("ledger entry");
                let c = counts[q];
                h.accepted_total += c;
                if t <= settle {
                    h.accepted_at_settle += c;
                }
                if before.contains(&qid) && c > 0 {
                    h.accepted_after_detection += c;
                    h.chunks_after_detection += 1;
                    h.last_increase_step = Some(t);
                }
                if public.is_some_and(|p| p < t) {
                    h.accepted_after_public += c;
                }
                if after.contains(&qid) && !before.contains(&qid) && h.detection_step.is_none() {
                    h.detection_step = Some(t);
                    h.r_at_detection = Some(r_set_size(st, &roots, &after, &qid, &self.index, n, q));
                    detections.push((q, roots.clone()));
                }
            }
        }
        for (q, roots) in detections {
            if self.public_step[q].is_none() {
                self.public_step[q] = Some(t);
            }
            if self.trace.is_some() {
                let st = &self.nodes[i].replicas[r].state;
                let qid = self.nodes[q].id;
                let (kind, blocks) = st
                    .detector()
                    .evidence(st.known(), &roots)
                    .into_iter()
                    .find(|e| e.accused == qid)
                    .map(|e| (e.kind.label().to_string(), e.kind.blocks().iter().map(|b| b.to_hex()).collect()))
                    .unwrap_or_default();
                let event = TraceEvent::Detect {
                    step: t,
                    observer: self.sc.nodes[i].name.clone(),
                    accused: self.sc.nodes[q].name.clone(),
                    kind,
                    blocks,
                };
                self.trace.as_mut().expect("tracing").push(event);
            }
        }
        if let Some(trace) = self.trace.as_mut() {
            trace.extend(traces);
        }
    }

    /// An acknowledgment is owed when the node's Byzantine set grew since
    /// its last block, or it accepted blocks of Byzantine creators that its
    /// last block does not cover.
    fn needs_ack(&mut self, i: usize) -> bool {
        let rep = &mut self.nodes[i].replicas[0];
        if !rep.ack_check {
            return false;
        }
        rep.ack_check = false;
        let Some(last) = rep.own_last else {
            return false;
        };
        let st = &rep.state;
        let idx = st.known().index_of(&last).expect("own block known");
        let now = st.byz();
        if !now.is_subset(&st.detector().facts(idx).byz) {
            return true;
        }
        let mut outside = st.accepted_bits().clone();
        outside.difference_with(st.known().below_at(idx));
        outside.set(idx as usize, false);
        outside
            .ones()
            .any(|j| now.contains(&st.known().block_at(j as u32).creator()))
    }

    fn next_payload(&mut self, i: usize, r: usize) -> Vec<u8> {
        let name = self.sc.nodes[i].name.clone();
        let rep = &mut self.nodes[i].replicas[r];
        if !rep.registered {
            rep.registered = true;
            return Op::Register(name.into_bytes()).encode();
        }
        let roll = self.rng.random_range(0..10u32);
        if roll >= 7 && !rep.elems.is_empty() {
            let k = self.rng.random_range(0..rep.elems.len());
            let (e, ids) = rep.elems.iter().nth(k).expect("index in range");
            return Op::Remove(e.clone(), ids.iter().copied().collect()).encode();
        }
        let e = self.rng.random_range(0..ELEMENTS);
        Op::Add(format!("e{e}").into_bytes()).encode()
    }

    fn produce(&mut self, i: usize, r: usize) {
        let t = self.step;
        let script = match &self.nodes[i].behavior {
            Behavior::MalformedSender { step } if t >= *step && !self.nodes[i].script_done => Some(None),
            Behavior::InvalidSender { step, bad_payload } if t >= *step && !self.nodes[i].script_done => {
                Some(Some(bad_payload.bytes().expect("validated payload")))
            }
            _ => None,
        };
        let block = match script {
            Some(None) => {
                let st = &self.nodes[i].replicas[r].state;
                let frontier = st.frontier();
                let extra = frontier.iter().find_map(|tip| {
                    let b = st.known().get(tip).expect("tip known");
                    b.preds().first().copied()
                });
                match extra {
                    Some(extra) => {
                        let mut preds = frontier;
                        preds.push(extra);
                        let payload = self.next_payload(i, r);
                        let node = &mut self.nodes[i];
                        node.script_done = true;
                        let key = node.key.clone();
                        node.replicas[r]
                            .state
                            .produce_with_preds(&key, payload, preds)
                            .expect("predecessors accepted")
                    }
                    None => self.produce_plain(i, r),
                }
            }
            Some(Some(payload)) => {
                self.nodes[i].script_done = true;
                let node = &mut self.nodes[i];
                node.replicas[r].registered = true;
                let key = node.key.clone();
                node.replicas[r].state.produce(&key, payload)
            }
            None => self.produce_plain(i, r),
        };
        self.after_produce(i, r, block);
    }

    fn produce_plain(&mut self, i: usize, r: usize) -> Arc<Block> {
        let payload = self.next_payload(i, r);
        let node = &mut self.nodes[i];
        let key = node.key.clone();
        node.replicas[r].state.produce(&key, payload)
    }

    fn after_produce(&mut self, i: usize, r: usize, b: Arc<Block>) {
        let t = self.step;
        self.nodes[i].produced += 1;
        self.nodes[i].replicas[r].own_last = Some(b.id());
        self.after_accept(i, r);
        if self.sc.is_correct(i) {
            let st = &self.nodes[i].replicas[r].state;
            let idx = st.known().index_of(&b.id()).expect("own block known");
            self.productions.push((t, i, st.detector().facts(idx).byz));
        }
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEvent::Produce {
                step: t,
                node: self.sc.nodes[i].name.clone(),
                fork: r,
                block: b.id().short(),
                preds: b.preds().len(),
                wire: b.to_hex(),
            });
        }
        let peers = self.nodes[i].replicas[r].peers.clone();
        for p in peers {
            if self.nodes[i].behavior == Behavior::Dropper {
                self.send(i, r, p, vec![b.clone()]);
            } else {
                self.send_missing(i, r, p);
            }
        }
    }

    /// Summarize the run and evaluate the scenario's assertions.
    pub fn finish(mut self) -> SimReport {
        let correct = self.correct_indices();
        let mut union = IdSet::default();
        for &i in &correct {
            union.extend(self.state(i).accepted().map(|b| b.id()));
        }
        let mut nodes = Vec::new();
        let mut digests = DigestCache::default();
        let mut views: Vec<(String, Vec<String>)> = Vec::new();
        for i in 0..self.nodes.len() {
            let forks = self.nodes[i].replicas.len();
            let produced = self.nodes[i].produced;
            let behavior = self.nodes[i].behavior.label().to_string();
            let id = self.nodes[i].id.to_hex();
            let rep = &mut self.nodes[i].replicas[0];
            if self.sc.mode == Mode::Repelling && self.sc.is_correct(i) && rep.brep_ok {
                rep.brep_ok = rep.state.is_brep();
            }
            let st = &rep.state;
            let blocklace_digest = digests.digest(st.accepted().map(|b| b.id()));
            let polog_len = st.polog_ids().count();
            // Identities fix every block's whole past, so the order the PO-Log
            // induces is determined by its event set.
            let polog_digest = digests.digest(st.polog_ids());
            let orset = match views.iter().find(|(d, _)| *d == polog_digest) {
                Some((_, v)) => v.clone(),
                None => {
                    let v: Vec<String> = orset_query(&st.polog())
                        .into_iter()
                        .map(|e| String::from_utf8_lossy(&e).into_owned())
                        .collect();
                    views.push((polog_digest.clone(), v.clone()));
                    v
                }
            };
            let summary = NodeSummary {
                name: self.sc.nodes[i].name.clone(),
                id,
                behavior,
                forks,
                produced,
                accepted: st.accepted_len(),
                buffered: st.buffer().len(),
                frontier: st.frontier().len(),
                blocklace_digest,
                polog_len,
                polog_digest,
                orset,
                byz: Vec::new(),
                evidence: Vec::new(),
                equivocators: Vec::new(),
                brep_every_step: rep.brep_ok,
                audit_ok: st.audit().is_ok(),
                axioms_ok: rep.axioms_ok && axioms_hold(st, &self.correct_ids),
            };
            let byz = st.byz();
            let eq = st.equivocators();
            let evidence = if byz.is_empty() { Vec::new() } else { st.evidence() };
            nodes.push((summary, byz, eq, evidence));
        }
        let nodes = nodes
            .into_iter()
            .enumerate()
            .map(|(i, (mut s, byz, eq, evidence))| {
                s.byz = self.names(&byz);
                s.equivocators = self.names(&eq);
                s.evidence = evidence
                    .iter()
                    .map(|e| {
                        let q = self.index.get(&e.accused).copied();
                        EvidenceRecord {
                            accused: self.node_name(&e.accused),
                            kind: e.kind.label().to_string(),
                            blocks: e.kind.blocks().iter().map(|b| b.to_hex()).collect(),
                            witness_size: e.witness.len(),
                            detection_step: q.and_then(|q| self.harm.get(&(i, q))).and_then(|h| h.detection_step),
                        }
                    })
                    .collect();
                s
            })
            .collect();

        let harm = self
            .harm
            .iter()
            .filter(|((_, q), h)| !self.sc.is_correct(*q) || h.detection_step.is_some())
            .map(|(&(p, q), h)| HarmEntry {
                observer: self.name(p),
                accused: self.name(q),
                detection_step: h.detection_step,
                public_step: self.public_step[q],
                r_at_detection: h.r_at_detection,
                chunks_after_detection: h.chunks_after_detection,
                accepted_after_detection: h.accepted_after_detection,
                accepted_after_public: h.accepted_after_public,
                accepted_total: h.accepted_total,
                accepted_at_settle: h.accepted_at_settle,
                last_increase_step: h.last_increase_step,
            })
            .collect();

        let mut report = SimReport {
            scenario: self.sc.name.clone(),
            seed: self.sc.seed,
            mode: self.sc.mode,
            validity: match self.sc.validity {
                ValidityKind::Always => "always".into(),
                ValidityKind::UniqueId => "unique-id".into(),
            },
            steps: self.step.saturating_sub(1),
            quiescent: self.quiescent,
            messages: self.messages,
            block_transmissions: self.transmissions,
            settle_step: self.sc.settle(),
            correct_union: union.len(),
            detectable: self.sc.detectable().into_iter().collect(),
            nodes,
            bct: self.bct(),
            harm,
            assertions: Vec::new(),
            trace: self.trace.take(),
        };
        report.evaluate(&self.sc);
        report
    }

    fn bct(&self) -> Option<Bct> {
        let (_, _, last_set) = self.productions.last()?;
        let mut last_of: BTreeMap<usize, &BTreeSet<NodeId>> = BTreeMap::new();
        for (_, i, s) in &self.productions {
            last_of.insert(*i, s);
        }
        let settled = self.correct_indices().iter().all(|i| last_of.get(i) == Some(&last_set));
        let step = self
            .productions
            .iter()
            .filter(|(_, _, s)| s != last_set)
            .map(|(t, _, _)| t + 1)
            .max()
            .unwrap_or(0);
        Some(Bct {
            step,
            convergent: self.names(last_set),
            settled,
        })
    }
}

/// `|R_q|` in the blocklace `⪯roots`: roster nodes other than `q` that are
/// not Byzantine there and have no block there that shows `q` Byzantine.
fn r_set_size(
    st: &NodeState,
    roots: &[u32],
    byz: &BTreeSet<NodeId>,
    q: &NodeId,
    index: &NodeMap<usize>,
    n: usize,
    qi: usize,
) -> usize {
    let known = st.known();
    let mut acknowledged = vec![false; n];
    for j in known.downset_idx(roots.iter().copied()).ones() {
        let j = j as u32;
        if st.detector().block_accuses(j, q) {
            if let Some(&c) = index.get(&known.block_at(j).creator()) {
                acknowledged[c] = true;
            }
        }
    }
    let by_index: BTreeMap<usize, NodeId> = index.iter().map(|(id, &i)| (i, *id)).collect();
    (0..n)
        .filter(|&r| r != qi && !acknowledged[r] && !byz.contains(&by_index[&r]))
        .count()
}

/// Digests of id sets seen so far in one report; converged nodes share a set.
#[derive(Default)]
struct DigestCache {
    seen: Vec<(IdSet, String)>,
}

impl DigestCache {
    /// Digest of a duplicate-free set of ids.
    fn digest(&mut self, ids: impl Iterator<Item = BlockId>) -> String {
        let mut v: Vec<BlockId> = ids.collect();
        if let Some((_, d)) = self
            .seen
            .iter()
            .find(|(s, _)| s.len() == v.len() && v.iter().all(|id| s.contains(id)))
        {
            return d.clone();
        }
        let set: IdSet = v.iter().copied().collect();
        v.sort_unstable();
        let mut h = Sha256::new();
        for id in &v {
            h.update(id.to_bytes());
        }
        let d = hex::encode(h.finalize());
        self.seen.push((set, d.clone()));
        d
    }
}


/// Incremental form of [`axioms_hold`] over the acceptance order. Each
/// accepted block is checked once, against the accepted set at that time
/// and the creator's previously accepted block.
#[derive(Clone, Default)]
struct AxiomCursor {
    seen: usize,
    last: NodeMap<u32>,
}

impl AxiomCursor {
    fn advance(&mut self, st: &NodeState, chain: &BTreeSet<NodeId>) -> bool {
        let known = st.known();
        let acc = st.accepted_bits();
        let order = st.accepted_order();
        for &i in &order[self.seen..] {
            if known.preds_at(i).iter().any(|&p| p >= i || !acc.contains(p as usize)) {
                return false;
            }
            let c = known.block_at(i).creator();
            if chain.contains(&c) {
                // Acceptance is closed, so a later chain member cannot precede an earlier one.
                if let Some(prev) = self.last.insert(c, i) {
                    if !known.precedes_idx(prev, i) {
                        return false;
                    }
                }
            }
        }
        self.seen = order.len();
        true
    }
}

/// Closed, acyclic in arena order, and chains for every creator in `chain`.
pub fn axioms_hold(st: &NodeState, chain: &BTreeSet<NodeId>) -> bool {
    let known = st.known();
    let acc = st.accepted_bits();
    let mut last: NodeMap<u32> = NodeMap::default();
    for i in acc.ones() {
        let i = i as u32;
        if known.preds_at(i).iter().any(|&p| p >= i || !acc.contains(p as usize)) {
            return false;
        }
        let c = known.block_at(i).creator();
        if chain.contains(&c) {
            if let Some(prev) = last.insert(c, i) {
                if !known.precedes_idx(prev, i) {
                    return false;
                }
            }
        }
    }
    true
}
