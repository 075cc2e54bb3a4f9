//! The blocklace as a replicated data type.
//!
//! Operation-based view: `prepare` turns a payload into a block over the
//! local frontier and `effect` delivers a block into a [`NodeState`]. The
//! state of any data type is a query over the PO-Log.
//!
//! Delta-state view: a [`DeltaGroup`] is any set of blocks (joined by
//! union), and a replica state is a closed set. A group may be merged into
//! a state only when the union is closed again.
//!
//! The example data type is an add-wins observed-remove set whose
//! operations are encoded as payloads:
//!
//! ```text
//! add      := 0x01 len:u32be elem
//! remove   := 0x02 len:u32be elem count:u32be block_id*
//! register := 0x03 len:u32be name
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::block::Block;
use crate::codec::{BlockId, CodecError, PrivateKey, BLOCK_ID_LEN};
use crate::detect::PoLog;
use crate::lace::Blocklace;
use crate::repel::NodeState;

const TAG_ADD: u8 = 0x01;
const TAG_REMOVE: u8 = 0x02;
const TAG_REGISTER: u8 = 0x03;

/// Example data-type operation carried in a block payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Add(Vec<u8>),
    /// Remove `elem`, cancelling exactly the named add events.
    Remove(Vec<u8>, Vec<BlockId>),
    /// Claim a unique name.
    Register(Vec<u8>),
}

impl Op {
    pub fn encode(&self) -> Vec<u8> {
        let (tag, elem) = match self {
            Op::Add(e) => (TAG_ADD, e),
            Op::Remove(e, _) => (TAG_REMOVE, e),
            Op::Register(e) => (TAG_REGISTER, e),
        };
        let mut out = vec![tag];
        out.extend((elem.len() as u32).to_be_bytes());
        out.extend(elem);
        if let Op::Remove(_, ids) = self {
            out.extend((ids.len() as u32).to_be_bytes());
            for id in ids {
                out.extend(id.to_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Op, CodecError> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], CodecError> {
            let end = pos.checked_add(n).ok_or(CodecError::TooLarge(n))?;
            let s = bytes.get(pos..end).ok_or(CodecError::Truncated { offset: pos, needed: n })?;
            pos = end;
            Ok(s)
        };
        let tag = take(1)?[0];
        let len = u32::from_be_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let elem = take(len)?.to_vec();
        let op = match tag {
            TAG_ADD => Op::Add(elem),
            TAG_REGISTER => Op::Register(elem),
            TAG_REMOVE => {
                let n = u32::from_be_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
                let mut ids = Vec::with_capacity(n.min(1024));
                for _ in 0..n {
                    ids.push(BlockId::from_slice(take(BLOCK_ID_LEN)?)?);
                }
                Op::Remove(elem, ids)
            }
            _ => return Err(CodecError::NonCanonical),
        };
        if pos != bytes.len() {
            return Err(CodecError::TrailingBytes(bytes.len() - pos));
        }
        Ok(op)
    }
}

/// Derived OR-Set view: each present element with its surviving add events.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OrSetState {
    pub entries: BTreeMap<Vec<u8>, BTreeSet<BlockId>>,
}

impl OrSetState {
    /// Recompute the view from a PO-Log. An add survives unless some
    /// remove event that it precedes names it. Undecodable payloads and
    /// other operations are ignored.
    pub fn from_polog(log: &PoLog) -> Self {
        let mut adds: BTreeMap<BlockId, Vec<u8>> = BTreeMap::new();
        let mut removes: BTreeMap<Vec<u8>, Vec<(BlockId, Vec<BlockId>)>> = BTreeMap::new();
        for b in log.events() {
            match Op::decode(b.payload()) {
                Ok(Op::Add(e)) => {
                    adds.insert(b.id(), e);
                }
                Ok(Op::Remove(e, ids)) => removes.entry(e).or_default().push((b.id(), ids)),
                _ => {}
            }
        }
        let mut entries: BTreeMap<Vec<u8>, BTreeSet<BlockId>> = BTreeMap::new();
        for (id, elem) in adds {
            let covered = removes
                .get(&elem)
                .is_some_and(|rs| rs.iter().any(|(rid, named)| named.contains(&id) && log.precedes(&id, rid)));
            if !covered {
                entries.entry(elem).or_default().insert(id);
            }
        }
        OrSetState { entries }
    }

    pub fn elements(&self) -> BTreeSet<Vec<u8>> {
        self.entries.keys().cloned().collect()
    }

    pub fn contains(&self, elem: &[u8]) -> bool {
        self.entries.contains_key(elem)
    }
}

/// Elements present in the add-wins OR-Set described by `log`.
pub fn orset_query(log: &PoLog) -> BTreeSet<Vec<u8>> {
    OrSetState::from_polog(log).elements()
}

/// Payload removing every add of `elem` currently visible in `log`.
pub fn remove_observed(log: &PoLog, elem: &[u8]) -> Vec<u8> {
    let ids = OrSetState::from_polog(log)
        .entries
        .remove(elem)
        .map(|s| s.into_iter().collect())
        .unwrap_or_default();
    Op::Remove(elem.to_vec(), ids).encode()
}

/// The block a node would create for `payload` in its current state.
pub fn prepare(st: &NodeState, key: &PrivateKey, payload: Vec<u8>) -> Block {
    st.prepare(key, payload)
}

/// Deliver `b`: buffer it and run acceptance to a fixpoint. Returns the
/// newly accepted blocks.
pub fn effect(b: Arc<Block>, st: &mut NodeState) -> Vec<BlockId> {
    st.receive(b);
    st.try_accept()
}

/// An element of the support lattice: any set of blocks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeltaGroup {
    pub blocks: BTreeMap<BlockId, Arc<Block>>,
}

impl DeltaGroup {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(b: Arc<Block>) -> Self {
        let mut g = DeltaGroup::new();
        g.insert(b);
        g
    }

    pub fn insert(&mut self, b: Arc<Block>) {
        self.blocks.insert(b.id(), b);
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

impl FromIterator<Arc<Block>> for DeltaGroup {
    fn from_iter<I: IntoIterator<Item = Arc<Block>>>(iter: I) -> Self {
        let mut g = DeltaGroup::new();
        for b in iter {
            g.insert(b);
        }
        g
    }
}

/// Join of the support lattice: set union.
pub fn delta_join(a: &DeltaGroup, b: &DeltaGroup) -> DeltaGroup {
    let mut out = a.clone();
    for (id, blk) in &b.blocks {
        out.blocks.entry(*id).or_insert_with(|| blk.clone());
    }
    out
}

/// True iff `B ∪ D` is closed: every predecessor of a block of `D` is in
/// `B` or in `D`. Since `B` is closed, this covers everything reachable.
pub fn delta_merge_condition(state: &Blocklace, d: &DeltaGroup) -> bool {
    d.blocks
        .values()
        .all(|b| b.preds().iter().all(|p| state.contains(p) || d.blocks.contains_key(p)))
}

/// Replica of the state lattice fed by delta groups. Groups that cannot be
/// merged yet are held back and retried after every successful merge.
#[derive(Debug, Clone, Default)]
pub struct DeltaReplica {
    lace: Blocklace,
    held: DeltaGroup,
}

impl DeltaReplica {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn blocklace(&self) -> &Blocklace {
        &self.lace
    }

    pub fn held(&self) -> &DeltaGroup {
        &self.held
    }

    /// Offer a delta group. Returns whether anything was merged. Blocks
    /// that fail signature checks are discarded.
    pub fn merge(&mut self, d: &DeltaGroup) -> bool {
        let fresh: DeltaGroup = d
            .blocks
            .values()
            .filter(|b| !self.lace.contains(&b.id()) && b.is_authentic())
            .cloned()
            .collect();
        self.held = delta_join(&self.held, &fresh);
        let mut merged = false;
        loop {
            // Largest mergeable subset of what is held: drop blocks whose
            // closure is missing until the rest is closed over the state.
            let mut ready = self.held.clone();
            while !delta_merge_condition(&self.lace, &ready) {
                let lacking: Vec<BlockId> = ready
                    .blocks
                    .values()
                    .filter(|b| {
                        b.preds()
                            .iter()
                            .any(|p| !self.lace.contains(p) && !ready.blocks.contains_key(p))
                    })
                    .map(|b| b.id())
                    .collect();
                for id in lacking {
                    ready.blocks.remove(&id);
                }
            }
            if ready.is_empty() {
                break;
            }
            while !ready.is_empty() {
                let next: Vec<BlockId> = ready
                    .blocks
                    .values()
                    .filter(|b| b.preds().iter().all(|p| self.lace.contains(p)))
                    .map(|b| b.id())
                    .collect();
                for id in next {
                    let b = ready.blocks.remove(&id).expect("listed");
                    self.held.blocks.remove(&id);
                    self.lace.insert(b).expect("merge condition holds");
                }
            }
            merged = true;
        }
        merged
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::keygen;
    use crate::detect::{polog, AlwaysValid, Mode};

    fn blk(k: &PrivateKey, op: &Op, preds: &[&Arc<Block>]) -> Arc<Block> {
        Arc::new(Block::create(k, op.encode(), preds.iter().map(|b| b.id()).collect()).unwrap())
    }

    #[test]
    fn op_round_trip() {
        let k = keygen(b"k").1;
        let g = Block::create(&k, vec![], vec![]).unwrap();
        for op in [
            Op::Add(b"x".to_vec()),
            Op::Remove(b"x".to_vec(), vec![g.id()]),
            Op::Register(b"alice".to_vec()),
            Op::Add(vec![]),
        ] {
            assert_eq!(Op::decode(&op.encode()).unwrap(), op);
        }
        assert!(Op::decode(&[0x09, 0, 0, 0, 0]).is_err());
        assert!(Op::decode(&[0x01, 0, 0, 0, 2, b'a']).is_err());
        assert!(Op::decode(&[0x01, 0, 0, 0, 0, 7]).is_err());
    }

    #[test]
    fn add_then_remove() {
        let k = keygen(b"k").1;
        let a = blk(&k, &Op::Add(b"x".to_vec()), &[]);
        let r = blk(&k, &Op::Remove(b"x".to_vec(), vec![a.id()]), &[&a]);
        let lone = Blocklace::from_blocks([a.clone()]).unwrap();
        let log = polog(&lone, Mode::Repelling, Arc::new(AlwaysValid));
        assert_eq!(orset_query(&log), BTreeSet::from([b"x".to_vec()]));
        let both = Blocklace::from_blocks([a.clone(), r]).unwrap();
        let log = polog(&both, Mode::Repelling, Arc::new(AlwaysValid));
        assert!(orset_query(&log).is_empty());
    }

    #[test]
    fn concurrent_add_wins() {
        let (p, q) = (keygen(b"p").1, keygen(b"q").1);
        let a0 = blk(&p, &Op::Add(b"x".to_vec()), &[]);
        let a1 = blk(&p, &Op::Add(b"x".to_vec()), &[&a0]);
        let r = blk(&q, &Op::Remove(b"x".to_vec(), vec![a0.id()]), &[&a0]);
        let lace = Blocklace::from_blocks([a0, a1.clone(), r]).unwrap();
        let st = OrSetState::from_polog(&polog(&lace, Mode::Repelling, Arc::new(AlwaysValid)));
        assert_eq!(st.entries[&b"x".to_vec()], BTreeSet::from([a1.id()]));
    }

    #[test]
    fn merge_condition_and_replica() {
        let k = keygen(b"k").1;
        let g = blk(&k, &Op::Add(b"a".to_vec()), &[]);
        let m = blk(&k, &Op::Add(b"b".to_vec()), &[&g]);
        let t = blk(&k, &Op::Add(b"c".to_vec()), &[&m]);
        let empty = Blocklace::new();
        assert!(delta_merge_condition(&empty, &DeltaGroup::new()));
        assert!(delta_merge_condition(&empty, &DeltaGroup::singleton(g.clone())));
        let gapped: DeltaGroup = [g.clone(), t.clone()].into_iter().collect();
        assert!(!delta_merge_condition(&empty, &gapped));

        let mut r = DeltaReplica::new();
        assert!(r.merge(&gapped));
        assert_eq!(r.blocklace().len(), 1);
        assert_eq!(r.held().len(), 1);
        assert!(r.merge(&DeltaGroup::singleton(m)));
        assert_eq!(r.blocklace().len(), 3);
        assert!(r.held().is_empty());
    }

    #[test]
    fn join_laws_on_small_groups() {
        let k = keygen(b"k").1;
        let g = blk(&k, &Op::Add(b"a".to_vec()), &[]);
        let h = blk(&k, &Op::Add(b"b".to_vec()), &[&g]);
        let x = DeltaGroup::singleton(g);
        let y = DeltaGroup::singleton(h);
        assert_eq!(delta_join(&x, &DeltaGroup::new()), x);
        assert_eq!(delta_join(&x, &x), x);
        assert_eq!(delta_join(&x, &y), delta_join(&y, &x));
    }

    #[test]
    fn effect_is_idempotent() {
        let k = keygen(b"k").1;
        let mut st = NodeState::new(Mode::Repelling, Arc::new(AlwaysValid));
        let g = Arc::new(prepare(&st, &k, Op::Add(b"a".to_vec()).encode()));
        assert_eq!(effect(g.clone(), &mut st), vec![g.id()]);
        assert!(effect(g, &mut st).is_empty());
        assert_eq!(st.accepted_len(), 1);
    }
}
