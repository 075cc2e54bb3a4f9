//! Classification of blocks and nodes: well-formedness, validity,
//! equivocation, the Byzantine set and PO-Log extraction.
//!
//! Everything a block contributes depends only on its own down-set, so the
//! [`Detector`] computes one [`BlockFacts`] record per block, in arena
//! (topological) order, and answers questions about any union of down-sets
//! by merging those records. The Byzantine-repelling predicate is part of
//! the same recursion: a block whose strict past is not repelling marks its
//! creator as Byzantine.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::block::Block;
use crate::codec::{BlockId, NodeId, NodeMap};
use crate::crdt::Op;
use crate::lace::{Blocklace, LaceError};

/// Which definition of the Byzantine set is in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Equivocators plus creators of ill-formed or invalid blocks; every
    /// block whose closure is available is accepted.
    Plain,
    /// Additionally, creators of blocks whose strict past is not
    /// Byzantine-repelling; acceptance is gated by the repelling rule.
    #[default]
    Repelling,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Plain => "plain",
            Mode::Repelling => "repelling",
        })
    }
}

/// Decides whether a payload could have been produced by a correct node
/// given the PO-Log of the block's strict past. Must be deterministic.
pub trait ValidityPredicate: Send + Sync {
    fn name(&self) -> &str;
    fn is_valid(&self, payload: &[u8], past: &PoLogView<'_>) -> bool;
}

/// Accepts every payload.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysValid;

impl ValidityPredicate for AlwaysValid {
    fn name(&self) -> &str {
        "always"
    }

    fn is_valid(&self, _payload: &[u8], _past: &PoLogView<'_>) -> bool {
        true
    }
}

/// A `Register(name)` payload is invalid if `name` is already registered
/// by an event in the PO-Log of the strict past. Other payloads are valid.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniqueIdRegistry;

impl ValidityPredicate for UniqueIdRegistry {
    fn name(&self) -> &str {
        "unique-id"
    }

    fn is_valid(&self, payload: &[u8], past: &PoLogView<'_>) -> bool {
        let Ok(Op::Register(name)) = Op::decode(payload) else {
            return true;
        };
        !past
            .events()
            .any(|b| matches!(Op::decode(b.payload()), Ok(Op::Register(n)) if n == name))
    }
}

/// The PO-Log events inside some down-set, as seen by a validity predicate.
pub struct PoLogView<'a> {
    lace: &'a Blocklace,
    below: &'a FixedBitSet,
    in_polog: &'a FixedBitSet,
}

impl<'a> PoLogView<'a> {
    /// Events in topological order.
    pub fn events(&self) -> impl Iterator<Item = &'a Arc<Block>> + '_ {
        self.below.intersection(self.in_polog).map(|i| self.lace.block_at(i as u32))
    }

    pub fn len(&self) -> usize {
        self.below.intersection_count(self.in_polog)
    }

    pub fn is_empty(&self) -> bool {
        self.below.intersection(self.in_polog).next().is_none()
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.lace
            .index_of(id)
            .is_some_and(|i| self.below.contains(i as usize) && self.in_polog.contains(i as usize))
    }

    pub fn precedes(&self, a: &BlockId, b: &BlockId) -> bool {
        match (self.lace.index_of(a), self.lace.index_of(b)) {
            (Some(a), Some(b)) => self.lace.precedes_idx(a, b),
            _ => false,
        }
    }
}

/// Partially ordered log: the events that count as data-type state, with
/// the precedes relation restricted to them.
#[derive(Debug, Clone, Default)]
pub struct PoLog {
    /// Events in a topological order of the host blocklace.
    events: Vec<Arc<Block>>,
    index: BTreeMap<BlockId, usize>,
    /// Positions of the strictly preceding events of each event.
    before: Vec<FixedBitSet>,
}

impl PartialEq for PoLog {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self.index.keys().eq(other.index.keys())
            && self.ids().all(|id| self.predecessors(&id).eq(other.predecessors(&id)))
    }
}

impl Eq for PoLog {}

impl PoLog {
    fn from_members(lace: &Blocklace, members: &FixedBitSet) -> Self {
        let n = members.count_ones(..);
        let mut rank = vec![u32::MAX; lace.len()];
        let mut log = PoLog {
            events: Vec::with_capacity(n),
            index: BTreeMap::new(),
            before: Vec::with_capacity(n),
        };
        for (pos, i) in members.ones().enumerate() {
            rank[i] = pos as u32;
            let b = lace.block_at(i as u32);
            let below = lace.below_at(i as u32);
            let before = if pos == i {
                // Every earlier slot is a member, so ranks are arena indices.
                FixedBitSet::with_capacity_and_blocks(n, below.as_slice().iter().copied())
            } else {
                let mut before = FixedBitSet::with_capacity(n);
                for j in below.ones() {
                    if members.contains(j) {
                        before.insert(rank[j] as usize);
                    }
                }
                before
            };
            log.index.insert(b.id(), pos);
            log.events.push(b.clone());
            log.before.push(before);
        }
        log
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &BlockId) -> Option<&Arc<Block>> {
        self.index.get(id).map(|&p| &self.events[p])
    }

    /// Events in identity order.
    pub fn events(&self) -> impl Iterator<Item = &Arc<Block>> + '_ {
        self.index.values().map(|&p| &self.events[p])
    }

    pub fn ids(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.index.keys().copied()
    }

    pub fn precedes(&self, a: &BlockId, b: &BlockId) -> bool {
        match (self.index.get(a), self.index.get(b)) {
            (Some(&a), Some(&b)) => self.before[b].contains(a),
            _ => false,
        }
    }

    /// Strictly preceding events of `id`, in identity order.
    pub fn predecessors(&self, id: &BlockId) -> impl Iterator<Item = BlockId> + '_ {
        let mut v: Vec<BlockId> = self
            .index
            .get(id)
            .into_iter()
            .flat_map(|&p| self.before[p].ones().map(|j| self.events[j].id()))
            .collect();
        v.sort_unstable();
        v.into_iter()
    }

    /// A deterministic linear extension: by number of preceding events,
    /// then identity.
    pub fn linearize(&self) -> Vec<&Arc<Block>> {
        let mut v: Vec<(usize, BlockId, usize)> = self
            .index
            .iter()
            .map(|(id, &p)| (self.before[p].count_ones(..), *id, p))
            .collect();
        v.sort_unstable();
        v.into_iter().map(|(_, _, p)| &self.events[p]).collect()
    }
}

/// Per-block facts, all functions of the block's down-set only.
#[derive(Debug, Clone)]
struct Facts {
    creator: usize,
    well_formed: bool,
    valid: bool,
    past_repelling: bool,
    /// Equivocators in the down-set.
    eqvc: FixedBitSet,
    /// Byzantine nodes in the down-set.
    byz: FixedBitSet,
    /// Latest block of each creator in the down-set, for creators whose
    /// blocks there form a chain.
    latest: Vec<u32>,
}

const NONE: u32 = u32::MAX;

/// Public summary of one block's classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockFacts {
    pub well_formed: bool,
    pub valid: bool,
    /// Whether the strict past is Byzantine-repelling (always `true` in
    /// plain mode, where the clause is not part of the Byzantine set).
    pub past_repelling: bool,
    /// Byzantine nodes in the block's down-set.
    pub byz: BTreeSet<NodeId>,
    pub in_polog: bool,
}

struct Union {
    eqvc: FixedBitSet,
    byz: FixedBitSet,
    latest: Vec<u32>,
}

/// Memoized classifier bound to one growing [`Blocklace`]. Call
/// [`Detector::sync`] after inserting blocks; facts are computed for new
/// arena slots only.
#[derive(Clone)]
pub struct Detector {
    mode: Mode,
    validity: Arc<dyn ValidityPredicate>,
    creators: Vec<NodeId>,
    creator_ix: NodeMap<usize>,
    facts: Vec<Facts>,
    in_polog: FixedBitSet,
    brep_memo: HashMap<Vec<u32>, bool>,
    // Last arena index per creator, and whether any block so far is
    // Byzantine evidence (a fork or a bad block). While clean, every
    // Byzantine set over this arena is empty.
    last_of: Vec<u32>,
    dirty: bool,
}

impl fmt::Debug for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Detector")
            .field("mode", &self.mode)
            .field("validity", &self.validity.name())
            .field("blocks", &self.facts.len())
            .finish()
    }
}

impl Detector {
    pub fn new(mode: Mode, validity: Arc<dyn ValidityPredicate>) -> Self {
        Detector {
            mode,
            validity,
            creators: Vec::new(),
            creator_ix: NodeMap::default(),
            facts: Vec::new(),
            in_polog: FixedBitSet::new(),
            brep_memo: HashMap::new(),
            last_of: Vec::new(),
            dirty: false,
        }
    }

    /// Detector over `lace` with all facts computed.
    pub fn over(lace: &Blocklace, mode: Mode, validity: Arc<dyn ValidityPredicate>) -> Self {
        let mut d = Detector::new(mode, validity);
        d.sync(lace);
        d
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn validity(&self) -> &Arc<dyn ValidityPredicate> {
        &self.validity
    }

    fn intern(&mut self, node: NodeId) -> usize {
        if let Some(&i) = self.creator_ix.get(&node) {
            return i;
        }
        let i = self.creators.len();
        self.creators.push(node);
        self.creator_ix.insert(node, i);
        i
    }

    pub(crate) fn to_nodes(&self, set: &FixedBitSet) -> BTreeSet<NodeId> {
        set.ones().map(|i| self.creators[i]).collect()
    }

    pub(crate) fn creator_index(&self, node: &NodeId) -> Option<usize> {
        self.creator_ix.get(node).copied()
    }

    /// Compute facts for every block of `lace` not yet classified.
    pub fn sync(&mut self, lace: &Blocklace) {
        for idx in self.facts.len()..lace.len() {
            self.classify(lace, idx as u32);
        }
    }

    fn classify(&mut self, lace: &Blocklace, idx: u32) {
        let block = lace.block_at(idx).clone();
        let creator = self.intern(block.creator());
        let preds = lace.preds_at(idx);
        // Recursion is over strictly smaller down-sets only.
        debug_assert!(preds.iter().all(|&p| p < idx && (p as usize) < self.facts.len()));

        let well_formed = block.is_authentic()
            && preds
                .iter()
                .enumerate()
                .all(|(i, &a)| preds[i + 1..].iter().all(|&b| lace.incomparable_idx(a, b)));

        let past = self.union(lace, preds);
        let past_repelling = match self.mode {
            Mode::Plain => true,
            Mode::Repelling => self.brep_roots(lace, preds),
        };

        let view = PoLogView {
            lace,
            below: lace.below_at(idx),
            in_polog: &self.in_polog,
        };
        let valid = self.validity.is_valid(block.payload(), &view);

        let Union {
            eqvc,
            mut byz,
            mut latest,
        } = past;
        if !(well_formed && valid && past_repelling) {
            byz.grow(self.creators.len());
            byz.insert(creator);
        }
        if latest.len() <= creator {
            latest.resize(creator + 1, NONE);
        }
        latest[creator] = if eqvc.contains(creator) { NONE } else { idx };

        if self.last_of.len() <= creator {
            self.last_of.resize(creator + 1, NONE);
        }
        let last = std::mem::replace(&mut self.last_of[creator], idx);
        if !byz.is_clear() || (last != NONE && !lace.precedes_idx(last, idx)) {
            self.dirty = true;
        }

        let in_polog = !byz.contains(creator);
        self.in_polog.grow(idx as usize + 1);
        self.in_polog.set(idx as usize, in_polog);
        self.facts.push(Facts {
            creator,
            well_formed,
            valid,
            past_repelling,
            eqvc,
            byz,
            latest,
        });
    }

    /// Equivocators, Byzantine set and per-creator latest blocks of the
    /// union of the down-sets of `roots`.
    fn union(&self, lace: &Blocklace, roots: &[u32]) -> Union {
        let mut eqvc = FixedBitSet::new();
        let mut byz = FixedBitSet::new();
        for &r in roots {
            eqvc.union_with(&self.facts[r as usize].eqvc);
            byz.union_with(&self.facts[r as usize].byz);
        }
        let mut latest = vec![NONE; self.creators.len()];
        for (c, slot) in latest.iter_mut().enumerate() {
            if eqvc.contains(c) {
                continue;
            }
            let mut top = NONE;
            for &r in roots {
                let x = self.facts[r as usize].latest.get(c).copied().unwrap_or(NONE);
                if x == NONE || x == top {
                    continue;
                }
                if top == NONE || lace.precedes_idx(top, x) {
                    top = x;
                } else if !lace.precedes_idx(x, top) {
                    top = NONE;
                    eqvc.grow(c + 1);
                    eqvc.insert(c);
                    byz.grow(c + 1);
                    byz.insert(c);
                    break;
                }
            }
            *slot = top;
        }
        Union { eqvc, byz, latest }
    }

    fn byz_set(&self, lace: &Blocklace, roots: &[u32]) -> FixedBitSet {
        if !self.dirty {
            return FixedBitSet::new();
        }
        let mut set = self.union(lace, roots).byz;
        set.grow(self.creators.len());
        set
    }

    fn block_byz(&self, idx: u32) -> FixedBitSet {
        let mut set = self.facts[idx as usize].byz.clone();
        set.grow(self.creators.len());
        set
    }

    /// Whether the union of down-sets of `roots` is Byzantine-repelling.
    fn brep_roots(&mut self, lace: &Blocklace, roots: &[u32]) -> bool {
        let mut frontier: Vec<u32> = roots
            .iter()
            .copied()
            .filter(|&r| !roots.iter().any(|&o| lace.precedes_idx(r, o)))
            .collect();
        frontier.sort_unstable();
        frontier.dedup();
        if frontier.is_empty() || self.byz_set(lace, &frontier).is_clear() {
            // With no Byzantine node anywhere, every peel acknowledges all.
            return true;
        }
        self.brep_frontier(lace, frontier)
    }

    /// Decide `brep(⪯F)` for an antichain `F` (sorted arena indices).
    ///
    /// A closed set with maximal antichain `F` is repelling iff some `f` in
    /// `F` can be peeled with prefix `⪯(F \ {f})`, that prefix is itself
    /// repelling, and either `f` exposes a new Byzantine node or `f`'s
    /// creator is not Byzantine and `f` acknowledges every Byzantine node of
    /// the prefix. Memoized per antichain.
    fn brep_frontier(&mut self, lace: &Blocklace, frontier: Vec<u32>) -> bool {
        if frontier.is_empty() {
            return true;
        }
        if let Some(&v) = self.brep_memo.get(&frontier) {
            return v;
        }
        let whole = self.byz_set(lace, &frontier);
        let mut result = false;
        for (i, &f) in frontier.iter().enumerate() {
            let mut rest = frontier.clone();
            rest.remove(i);
            if self.peel_allowed(lace, &whole, &rest, f) && self.brep_frontier(lace, rest) {
                result = true;
                break;
            }
        }
        self.brep_memo.insert(frontier, result);
        result
    }

    /// Condition for incorporating `⪯top` on top of the prefix `⪯prefix`,
    /// where `whole` is the Byzantine set of the combined blocklace.
    fn peel_allowed(&self, lace: &Blocklace, whole: &FixedBitSet, prefix: &[u32], top: u32) -> bool {
        self.peel_rule(lace, whole, prefix, top).is_some()
    }

    pub(crate) fn peel_rule(
        &self,
        lace: &Blocklace,
        whole: &FixedBitSet,
        prefix: &[u32],
        top: u32,
    ) -> Option<PeelRule> {
        if !self.dirty {
            // Nothing Byzantine anywhere: the first clause holds trivially.
            return Some(PeelRule::AcknowledgesKnown);
        }
        let creator = self.facts[top as usize].creator;
        if !whole.contains(creator) && self.byz_set(lace, prefix).is_subset(&self.block_byz(top)) {
            return Some(PeelRule::AcknowledgesKnown);
        }
        let mut without_roots = prefix.to_vec();
        without_roots.extend_from_slice(lace.preds_at(top));
        let without = self.byz_set(lace, &without_roots);
        if without.is_subset(whole) && without != *whole {
            return Some(PeelRule::NewByzantine);
        }
        None
    }

    /// Byzantine set of the union of down-sets of `roots`, as an internal
    /// bitset over interned creators.
    pub(crate) fn byz_bits(&self, lace: &Blocklace, roots: &[u32]) -> FixedBitSet {
        self.byz_set(lace, roots)
    }

    /// `brep(⪯roots)` for arbitrary roots in the blocklace.
    pub fn brep_of(&mut self, lace: &Blocklace, roots: &[u32]) -> bool {
        self.sync(lace);
        self.brep_roots(lace, roots)
    }

    /// Byzantine set of the union of the down-sets of `roots`.
    pub fn byz_of(&self, lace: &Blocklace, roots: &[u32]) -> BTreeSet<NodeId> {
        self.to_nodes(&self.byz_set(lace, roots))
    }

    /// Equivocators in the union of the down-sets of `roots`.
    pub fn equivocators_of(&self, lace: &Blocklace, roots: &[u32]) -> BTreeSet<NodeId> {
        self.to_nodes(&self.union(lace, roots).eqvc)
    }

    pub fn facts(&self, idx: u32) -> BlockFacts {
        let f = &self.facts[idx as usize];
        BlockFacts {
            well_formed: f.well_formed,
            valid: f.valid,
            past_repelling: f.past_repelling,
            byz: self.to_nodes(&f.byz),
            in_polog: self.in_polog.contains(idx as usize),
        }
    }

    pub fn in_polog(&self, idx: u32) -> bool {
        self.in_polog.contains(idx as usize)
    }

    /// Whether `node` is Byzantine in the down-set of block `idx`.
    pub fn block_accuses(&self, idx: u32, node: &NodeId) -> bool {
        self.creator_index(node)
            .is_some_and(|c| self.facts[idx as usize].byz.contains(c))
    }

    /// PO-Log of the closed subset `members` of `lace`.
    pub fn polog_of(&self, lace: &Blocklace, members: &FixedBitSet) -> PoLog {
        let mut m = members.clone();
        m.intersect_with(&self.in_polog);
        PoLog::from_members(lace, &m)
    }

    /// Self-certifying evidence for every Byzantine node in the down-set of
    /// `roots`: one record per accused, earliest cause in arena order.
    pub fn evidence(&self, lace: &Blocklace, roots: &[u32]) -> Vec<ByzEvidence> {
        let scope = lace.downset_idx(roots.iter().copied());
        let accused = self.byz_set(lace, roots);
        let mut found: BTreeMap<NodeId, ByzEvidence> = BTreeMap::new();
        let mut by_creator: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
        for i in scope.ones() {
            let i = i as u32;
            let f = &self.facts[i as usize];
            let node = self.creators[f.creator];
            if !accused.contains(f.creator) || found.contains_key(&node) {
                continue;
            }
            let id = lace.block_at(i).id();
            let kind = if !f.well_formed {
                Some(EvidenceKind::Malformed(id))
            } else if !f.valid {
                Some(EvidenceKind::Invalid(id))
            } else if !f.past_repelling {
                Some(EvidenceKind::NonRepelling(id))
            } else {
                None
            };
            if let Some(kind) = kind {
                found.insert(node, ByzEvidence::new(node, kind, lace, &[i]));
                continue;
            }
            let chain = by_creator.entry(f.creator).or_default();
            if let Some(&prev) = chain.last() {
                // Arena order extends ≺, so a creator's blocks form a chain
                // iff consecutive ones are comparable.
                if !lace.precedes_idx(prev, i) {
                    let kind = EvidenceKind::Equivocation(lace.block_at(prev).id(), id);
                    found.insert(node, ByzEvidence::new(node, kind, lace, &[prev, i]));
                    continue;
                }
            }
            chain.push(i);
        }
        found.into_values().collect()
    }
}

/// Which clause admitted a chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeelRule {
    /// The chunk's top block exposes a new Byzantine node.
    NewByzantine,
    /// The top block's creator is not Byzantine and its down-set
    /// acknowledges every Byzantine node already known.
    AcknowledgesKnown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    Equivocation(BlockId, BlockId),
    Malformed(BlockId),
    Invalid(BlockId),
    NonRepelling(BlockId),
}

impl EvidenceKind {
    pub fn label(&self) -> &'static str {
        match self {
            EvidenceKind::Equivocation(..) => "equivocation",
            EvidenceKind::Malformed(_) => "malformed",
            EvidenceKind::Invalid(_) => "invalid",
            EvidenceKind::NonRepelling(_) => "non_repelling",
        }
    }

    /// The offending block or blocks.
    pub fn blocks(&self) -> Vec<BlockId> {
        match self {
            EvidenceKind::Equivocation(a, b) => vec![*a, *b],
            EvidenceKind::Malformed(a) | EvidenceKind::Invalid(a) | EvidenceKind::NonRepelling(a) => vec![*a],
        }
    }
}

/// A minimal, self-certifying accusation: the witness blocks are the
/// down-set of the offending block(s).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ByzEvidence {
    pub accused: NodeId,
    pub kind: EvidenceKind,
    pub witness: Vec<Arc<Block>>,
}

impl ByzEvidence {
    fn new(accused: NodeId, kind: EvidenceKind, lace: &Blocklace, roots: &[u32]) -> Self {
        let witness = lace
            .downset_idx(roots.iter().copied())
            .ones()
            .map(|i| lace.block_at(i as u32).clone())
            .collect();
        ByzEvidence {
            accused,
            kind,
            witness,
        }
    }
}

/// True iff `e.witness` alone proves `e.accused` Byzantine in the way `e.kind`
/// claims.
pub fn verify_evidence(e: &ByzEvidence, mode: Mode, validity: Arc<dyn ValidityPredicate>) -> bool {
    let Ok(lace) = Blocklace::from_blocks(e.witness.iter().cloned()) else {
        return false;
    };
    let d = Detector::over(&lace, mode, validity);
    let idx = |id: &BlockId| lace.index_of(id).filter(|_| id.creator() == e.accused);
    let claim = match &e.kind {
        EvidenceKind::Equivocation(a, b) => match (idx(a), idx(b)) {
            (Some(a), Some(b)) => lace.incomparable_idx(a, b),
            _ => false,
        },
        EvidenceKind::Malformed(x) => idx(x).is_some_and(|i| !d.facts[i as usize].well_formed),
        EvidenceKind::Invalid(x) => idx(x).is_some_and(|i| !d.facts[i as usize].valid),
        EvidenceKind::NonRepelling(x) => {
            mode == Mode::Repelling && idx(x).is_some_and(|i| !d.facts[i as usize].past_repelling)
        }
    };
    claim && d.byz_of(&lace, &lace.tip_indices()).contains(&e.accused)
}

/// `wf(b, B)`: authentic, and predecessors pairwise incomparable in `B`.
pub fn well_formed(b: &Block, lace: &Blocklace) -> Result<bool, LaceError> {
    let idx: Vec<u32> = b
        .preds()
        .iter()
        .map(|p| lace.index_of(p).ok_or(LaceError::UnknownBlock(*p)))
        .collect::<Result<_, _>>()?;
    Ok(b.is_authentic()
        && idx
            .iter()
            .enumerate()
            .all(|(i, &a)| idx[i + 1..].iter().all(|&c| lace.incomparable_idx(a, c))))
}

/// Nodes with two incomparable blocks in `lace`.
pub fn equivocators(lace: &Blocklace) -> BTreeSet<NodeId> {
    let mut last: NodeMap<u32> = NodeMap::default();
    let mut out = BTreeSet::new();
    for i in 0..lace.len() as u32 {
        let c = lace.block_at(i).creator();
        if let Some(prev) = last.insert(c, i) {
            if !lace.precedes_idx(prev, i) {
                out.insert(c);
            }
        }
    }
    out
}

/// Byzantine nodes of `lace` under `mode`.
pub fn byz(lace: &Blocklace, mode: Mode, validity: Arc<dyn ValidityPredicate>) -> BTreeSet<NodeId> {
    Detector::over(lace, mode, validity).byz_of(lace, &lace.tip_indices())
}

/// PO-Log of `lace` under `mode`.
pub fn polog(lace: &Blocklace, mode: Mode, validity: Arc<dyn ValidityPredicate>) -> PoLog {
    let d = Detector::over(lace, mode, validity);
    let mut all = FixedBitSet::with_capacity(lace.len());
    all.insert_range(..);
    d.polog_of(lace, &all)
}
