//! Byzantine-repelling acceptance.
//!
//! A [`NodeState`] keeps every authentic block it has heard of in a local
//! universe, and a subset of them as its accepted blocklace. Blocks move
//! from the buffer to the blocklace in chunks `⪯b \ B`, and in repelling
//! mode only when the chunk's top block either exposes a new Byzantine node
//! or comes from a non-Byzantine creator that acknowledges every Byzantine
//! node already known. The sequence of chunks is recorded and doubles as a
//! peel witness for the accepted blocklace.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use serde::Serialize;
use thiserror::Error;

use crate::block::Block;
use crate::codec::{BlockId, CodecError, IdMap, NodeId, PrivateKey};
use crate::detect::{ByzEvidence, Detector, Mode, PeelRule, PoLog, ValidityPredicate};
use crate::lace::{Blocklace, LaceError};

/// `brep(B)` for a blocklace, with the Byzantine set of the given predicate.
pub fn brep(lace: &Blocklace, validity: Arc<dyn ValidityPredicate>) -> bool {
    let mut d = Detector::over(lace, Mode::Repelling, validity);
    d.brep_of(lace, &lace.tip_indices())
}

/// `brep` of an arbitrary block set, which must be closed.
pub fn brep_blocks(
    blocks: impl IntoIterator<Item = Arc<Block>>,
    validity: Arc<dyn ValidityPredicate>,
) -> Result<bool, LaceError> {
    Ok(brep(&Blocklace::from_blocks(blocks)?, validity))
}

/// Received blocks that are not (yet) part of the blocklace.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Buffer {
    pub delayed: BTreeMap<BlockId, Arc<Block>>,
}

impl Buffer {
    pub fn len(&self) -> usize {
        self.delayed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delayed.is_empty()
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.delayed.contains_key(id)
    }
}

/// Extra acceptance constraint used by Byzantine behaviors: never accept a
/// chunk that would make `shield` Byzantine in the resulting blocklace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcceptFilter {
    Open,
    Shield(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Receipt {
    Duplicate,
    /// Signature does not verify; dropped.
    Rejected,
    /// Waiting for predecessors that have not arrived.
    Buffered,
    /// All predecessors known; candidate for acceptance.
    Ready,
}

/// One accepted chunk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Incorporation {
    pub top: BlockId,
    /// Clause that admitted the chunk; `None` in plain mode and for the
    /// node's own blocks when neither clause applies.
    pub rule: Option<PeelRule>,
    pub size: usize,
    /// Maximal blocks of the blocklace before this chunk.
    #[serde(skip)]
    pub prefix: Vec<BlockId>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuditError {
    #[error("chunk {index} topped by {top} does not extend its recorded prefix")]
    Shape { index: usize, top: BlockId },
    #[error("chunk {index} topped by {top} satisfies neither acceptance clause")]
    Clause { index: usize, top: BlockId },
    #[error("replayed log does not yield the accepted blocklace")]
    Mismatch,
}

#[derive(Debug, Error)]
pub enum ProduceError {
    #[error("predecessor {0} is not accepted")]
    NotAccepted(BlockId),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Clone)]
pub struct NodeState {
    mode: Mode,
    filter: AcceptFilter,
    known: Blocklace,
    detector: Detector,
    accepted: FixedBitSet,
    order: Vec<u32>,
    tips: BTreeSet<u32>,
    pending: BTreeMap<BlockId, Arc<Block>>,
    missing: IdMap<usize>,
    waiters: IdMap<Vec<BlockId>>,
    candidates: BTreeMap<BlockId, u32>,
    unchecked: BTreeSet<BlockId>,
    dirty: bool,
    log: Vec<Incorporation>,
}

impl std::fmt::Debug for NodeState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NodeState")
            .field("mode", &self.mode)
            .field("accepted", &self.order.len())
            .field("buffered", &(self.pending.len() + self.candidates.len()))
            .finish()
    }
}

impl NodeState {
    pub fn new(mode: Mode, validity: Arc<dyn ValidityPredicate>) -> Self {
        NodeState {
            mode,
            filter: AcceptFilter::Open,
            known: Blocklace::new(),
            detector: Detector::new(mode, validity),
            accepted: FixedBitSet::new(),
            order: Vec::new(),
            tips: BTreeSet::new(),
            pending: BTreeMap::new(),
            missing: IdMap::default(),
            waiters: IdMap::default(),
            candidates: BTreeMap::new(),
            unchecked: BTreeSet::new(),
            dirty: false,
            log: Vec::new(),
        }
    }

    pub fn with_filter(mut self, filter: AcceptFilter) -> Self {
        self.filter = filter;
        self
    }

    pub fn set_filter(&mut self, filter: AcceptFilter) {
        self.filter = filter;
        self.dirty = true;
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn filter(&self) -> AcceptFilter {
        self.filter
    }

    /// Every block whose closure is locally available, accepted or not.
    pub fn known(&self) -> &Blocklace {
        &self.known
    }

    pub fn detector(&self) -> &Detector {
        &self.detector
    }

    pub fn accepted_bits(&self) -> &FixedBitSet {
        &self.accepted
    }

    pub fn accepted_len(&self) -> usize {
        self.order.len()
    }

    pub fn is_accepted(&self, id: &BlockId) -> bool {
        self.known
            .index_of(id)
            .is_some_and(|i| self.accepted.contains(i as usize))
    }

    /// Arena indices of the accepted blocks in acceptance order.
    pub fn accepted_order(&self) -> &[u32] {
        &self.order
    }

    /// Accepted blocks in acceptance order.
    pub fn accepted(&self) -> impl Iterator<Item = &Arc<Block>> + '_ {
        self.order.iter().map(|&i| self.known.block_at(i))
    }

    /// Accepted blocks from position `from` of the acceptance order on.
    pub fn accepted_since(&self, from: usize) -> impl Iterator<Item = &Arc<Block>> + '_ {
        self.order[from.min(self.order.len())..]
            .iter()
            .map(|&i| self.known.block_at(i))
    }

    /// Maximal accepted blocks, in identity order.
    pub fn frontier(&self) -> Vec<BlockId> {
        let mut v: Vec<BlockId> = self.tips.iter().map(|&i| self.known.block_at(i).id()).collect();
        v.sort_unstable();
        v
    }

    pub(crate) fn tip_indices(&self) -> Vec<u32> {
        self.tips.iter().copied().collect()
    }

    /// The accepted blocklace as a standalone value.
    pub fn blocklace(&self) -> Blocklace {
        self.known.restrict(&self.accepted)
    }

    pub fn buffer(&self) -> Buffer {
        let mut delayed = self.pending.clone();
        for &i in self.candidates.values() {
            let b = self.known.block_at(i);
            delayed.insert(b.id(), b.clone());
        }
        Buffer { delayed }
    }

    pub fn incorporation_log(&self) -> &[Incorporation] {
        &self.log
    }

    pub fn byz(&self) -> BTreeSet<NodeId> {
        self.detector.byz_of(&self.known, &self.tip_indices())
    }

    pub fn equivocators(&self) -> BTreeSet<NodeId> {
        self.detector.equivocators_of(&self.known, &self.tip_indices())
    }

    pub fn polog(&self) -> PoLog {
        self.detector.polog_of(&self.known, &self.accepted)
    }

    /// Identities of the events of [`Self::polog`], without building it.
    pub fn polog_ids(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.accepted
            .ones()
            .filter(|&i| self.detector.facts(i as u32).in_polog)
            .map(|i| self.known.block_at(i as u32).id())
    }

    pub fn evidence(&self) -> Vec<ByzEvidence> {
        self.detector.evidence(&self.known, &self.tip_indices())
    }

    /// Decide `brep` of the accepted blocklace from scratch (memoized), without
    /// consulting the incorporation log.
    pub fn is_brep(&mut self) -> bool {
        let tips = self.tip_indices();
        self.detector.brep_of(&self.known, &tips)
    }

    /// Hand a block to the node. Authentic blocks are kept until accepted.
    pub fn receive(&mut self, b: Arc<Block>) -> Receipt {
        let id = b.id();
        if self.known.contains(&id) || self.pending.contains_key(&id) {
            return Receipt::Duplicate;
        }
        if !b.is_authentic() {
            return Receipt::Rejected;
        }
        let absent: Vec<BlockId> = b
            .preds()
            .iter()
            .filter(|p| !self.known.contains(p))
            .copied()
            .collect();
        if absent.is_empty() {
            self.admit(b);
            return Receipt::Ready;
        }
        for p in &absent {
            self.waiters.entry(*p).or_default().push(id);
        }
        self.missing.insert(id, absent.len());
        self.pending.insert(id, b);
        Receipt::Buffered
    }

    /// Move `b` into the universe and release any blocks waiting on it.
    fn admit(&mut self, b: Arc<Block>) {
        let mut stack = vec![b];
        while let Some(b) = stack.pop() {
            let id = b.id();
            let idx = self.known.insert(b).expect("predecessors present");
            self.candidates.insert(id, idx);
            self.unchecked.insert(id);
            for w in self.waiters.remove(&id).unwrap_or_default() {
                let n = self.missing.get_mut(&w).expect("waiter counted");
                *n -= 1;
                if *n == 0 {
                    self.missing.remove(&w);
                    stack.push(self.pending.remove(&w).expect("waiter pending"));
                }
            }
        }
    }

    /// Incorporate buffered chunks until no candidate passes. Returns the
    /// newly accepted blocks in acceptance order.
    pub fn try_accept(&mut self) -> Vec<BlockId> {
        self.detector.sync(&self.known);
        let start = self.order.len();
        loop {
            let scan: Vec<(BlockId, u32)> = if self.dirty {
                self.candidates.iter().map(|(k, v)| (*k, *v)).collect()
            } else {
                self.unchecked
                    .iter()
                    .filter_map(|id| self.candidates.get(id).map(|&i| (*id, i)))
                    .collect()
            };
            self.dirty = false;
            self.unchecked.clear();
            if scan.is_empty() {
                break;
            }
            let tips = self.tip_indices();
            let mut chosen = None;
            for (_, idx) in scan {
                if let Some(rule) = self.admissible(&tips, idx) {
                    chosen = Some((idx, rule));
                    break;
                }
            }
            match chosen {
                Some((idx, rule)) => self.incorporate(idx, rule),
                None => break,
            }
        }
        self.order[start..]
            .iter()
            .map(|&i| self.known.block_at(i).id())
            .collect()
    }

    /// Acceptance test for the chunk topped by `idx`. `Some(rule)` admits it.
    fn admissible(&self, tips: &[u32], idx: u32) -> Option<Option<PeelRule>> {
        let mut roots = tips.to_vec();
        roots.push(idx);
        let whole = self.detector.byz_bits(&self.known, &roots);
        if let AcceptFilter::Shield(node) = self.filter {
            if self
                .detector
                .creator_index(&node)
                .is_some_and(|c| whole.contains(c))
            {
                return None;
            }
        }
        match self.mode {
            Mode::Plain => Some(None),
            Mode::Repelling => self.detector.peel_rule(&self.known, &whole, tips, idx).map(Some),
        }
    }

    fn incorporate(&mut self, top: u32, rule: Option<PeelRule>) {
        let prefix = self.frontier();
        self.accepted.grow(self.known.len());
        let start = self.order.len();
        let below = self.known.below_at(top);
        for i in below.ones().chain([top as usize]) {
            if !self.accepted.contains(i) {
                self.order.push(i as u32);
            }
        }
        for &i in &self.order[start..] {
            self.accepted.insert(i as usize);
            self.candidates.remove(&self.known.block_at(i).id());
        }
        let size = self.order.len() - start;
        self.tips.retain(|&t| !below.contains(t as usize));
        self.tips.insert(top);
        self.log.push(Incorporation {
            top: self.known.block_at(top).id(),
            rule,
            size,
            prefix,
        });
        self.dirty = true;
    }

    /// A new block over the current frontier, not yet inserted.
    pub fn prepare(&self, key: &PrivateKey, payload: Vec<u8>) -> Block {
        Block::create(key, payload, self.frontier()).expect("frontier identities are distinct")
    }

    /// Create, insert and accept a new block over the current frontier.
    pub fn produce(&mut self, key: &PrivateKey, payload: Vec<u8>) -> Arc<Block> {
        let b = Arc::new(self.prepare(key, payload));
        self.incorporate_own(b.clone());
        b
    }

    /// Create and accept a block with explicit predecessors, all of which
    /// must be accepted. Used by scripted Byzantine behaviors.
    pub fn produce_with_preds(
        &mut self,
        key: &PrivateKey,
        payload: Vec<u8>,
        preds: Vec<BlockId>,
    ) -> Result<Arc<Block>, ProduceError> {
        if let Some(p) = preds.iter().find(|p| !self.is_accepted(p)) {
            return Err(ProduceError::NotAccepted(*p));
        }
        let b = Arc::new(Block::create(key, payload, preds)?);
        self.incorporate_own(b.clone());
        Ok(b)
    }

    fn incorporate_own(&mut self, b: Arc<Block>) {
        let id = b.id();
        self.admit(b);
        self.unchecked.remove(&id);
        self.detector.sync(&self.known);
        let idx = self.known.index_of(&id).expect("just admitted");
        let tips = self.tip_indices();
        let rule = match self.mode {
            Mode::Plain => None,
            Mode::Repelling => {
                let mut roots = tips.clone();
                roots.push(idx);
                let whole = self.detector.byz_bits(&self.known, &roots);
                self.detector.peel_rule(&self.known, &whole, &tips, idx)
            }
        };
        self.incorporate(idx, rule);
    }

    /// Re-check the incorporation log as a peel sequence: each chunk must be
    /// the down-set of its top over the recorded prefix, and (in repelling
    /// mode) satisfy one of the two clauses with the prefix as witness.
    pub fn audit(&self) -> Result<(), AuditError> {
        let mut members = FixedBitSet::with_capacity(self.known.len());
        let mut tips: BTreeSet<u32> = BTreeSet::new();
        for (index, inc) in self.log.iter().enumerate() {
            let top = self.known.index_of(&inc.top).ok_or(AuditError::Mismatch)?;
            let current: Vec<u32> = tips.iter().copied().collect();
            // Prefixes are recorded in identity order, as `frontier` yields them.
            let mut current_ids: Vec<BlockId> = current.iter().map(|&t| self.known.block_at(t).id()).collect();
            current_ids.sort_unstable();
            if inc.prefix != current_ids || members.contains(top as usize) {
                return Err(AuditError::Shape { index, top: inc.top });
            }
            if self.mode == Mode::Repelling {
                let mut roots = current.clone();
                roots.push(top);
                let whole = self.detector.byz_bits(&self.known, &roots);
                let rule = self.detector.peel_rule(&self.known, &whole, &current, top);
                if rule.is_none() || (inc.rule.is_some() && rule != inc.rule) {
                    return Err(AuditError::Clause { index, top: inc.top });
                }
            }
            self.known.extend_downset(&mut members, top);
            let below = self.known.below_at(top);
            tips.retain(|&t| !below.contains(t as usize));
            tips.insert(top);
        }
        members.grow(self.accepted.len());
        let mut accepted = self.accepted.clone();
        accepted.grow(members.len());
        if members != accepted {
            return Err(AuditError::Mismatch);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::keygen;
    use crate::detect::AlwaysValid;

    fn key(s: &str) -> PrivateKey {
        keygen(s.as_bytes()).1
    }

    fn blk(k: &PrivateKey, payload: &[u8], preds: &[&Arc<Block>]) -> Arc<Block> {
        Arc::new(Block::create(k, payload.to_vec(), preds.iter().map(|b| b.id()).collect()).unwrap())
    }

    fn state() -> NodeState {
        NodeState::new(Mode::Repelling, Arc::new(AlwaysValid))
    }

    #[test]
    fn lone_genesis_is_accepted() {
        let mut st = state();
        let g = blk(&key("a"), b"g", &[]);
        assert_eq!(st.receive(g.clone()), Receipt::Ready);
        assert_eq!(st.try_accept(), vec![g.id()]);
        assert_eq!(st.receive(g.clone()), Receipt::Duplicate);
        assert!(st.buffer().is_empty());
        assert!(st.audit().is_ok());
        assert!(st.is_brep());
    }

    #[test]
    fn out_of_order_delivery_cascades() {
        let a = key("a");
        let g = blk(&a, b"g", &[]);
        let h = blk(&a, b"h", &[&g]);
        let i = blk(&a, b"i", &[&h]);
        let mut st = state();
        assert_eq!(st.receive(i.clone()), Receipt::Buffered);
        assert_eq!(st.receive(h.clone()), Receipt::Buffered);
        assert!(st.try_accept().is_empty());
        assert_eq!(st.buffer().len(), 2);
        st.receive(g.clone());
        assert_eq!(st.try_accept().len(), 3);
        assert_eq!(st.frontier(), vec![i.id()]);
        assert_eq!(st.incorporation_log().iter().map(|c| c.size).sum::<usize>(), 3);
    }

    #[test]
    fn forged_block_is_rejected() {
        let g = blk(&key("a"), b"g", &[]);
        let forged = Arc::new(Block::from_parts(g.id(), b"other".to_vec(), vec![]).unwrap());
        assert_eq!(state().receive(forged), Receipt::Rejected);
    }

    #[test]
    fn produce_points_at_frontier_and_acknowledges() {
        let (p, q, c) = (key("p"), key("q"), key("c"));
        let g = blk(&p, b"g", &[]);
        let x = blk(&q, b"x", &[&g]);
        let y = blk(&q, b"y", &[&g]);
        let mut st = state();
        for b in [&g, &x, &y] {
            st.receive((*b).clone());
        }
        st.try_accept();
        assert_eq!(st.byz(), BTreeSet::from([q.node_id()]));
        let own = st.produce(&c, b"ack".to_vec());
        assert_eq!(own.preds().len(), 2);
        let idx = st.known().index_of(&own.id()).unwrap();
        assert!(st.detector().block_accuses(idx, &q.node_id()));
        assert!(st.audit().is_ok());
        assert!(st.is_brep());
    }

    #[test]
    fn known_equivocator_block_stays_buffered() {
        let (p, q) = (key("p"), key("q"));
        let g = blk(&p, b"g", &[]);
        let x = blk(&q, b"x", &[&g]);
        let y = blk(&q, b"y", &[&g]);
        let z = blk(&q, b"z", &[&y]);
        let mut st = state();
        for b in [&g, &x, &y] {
            st.receive((*b).clone());
        }
        st.try_accept();
        st.receive(z.clone());
        assert!(st.try_accept().is_empty());
        assert!(st.buffer().contains(&z.id()));
    }

    #[test]
    fn shield_filter_refuses_evidence() {
        let (p, q) = (key("p"), key("q"));
        let g = blk(&p, b"g", &[]);
        let x = blk(&q, b"x", &[&g]);
        let y = blk(&q, b"y", &[&g]);
        let mut st = state().with_filter(AcceptFilter::Shield(q.node_id()));
        for b in [&g, &x, &y] {
            st.receive((*b).clone());
        }
        st.try_accept();
        assert_eq!(st.accepted_len(), 2);
        assert!(st.byz().is_empty());
    }

    #[test]
    fn plain_mode_accepts_everything_available() {
        let (p, q) = (key("p"), key("q"));
        let g = blk(&p, b"g", &[]);
        let x = blk(&q, b"x", &[&g]);
        let y = blk(&q, b"y", &[&g]);
        let z = blk(&q, b"z", &[&y]);
        let mut st = NodeState::new(Mode::Plain, Arc::new(AlwaysValid));
        for b in [&g, &x, &y, &z] {
            st.receive((*b).clone());
        }
        assert_eq!(st.try_accept().len(), 4);
        assert!(st.audit().is_ok());
    }
}
