//! The blocklace: a closed, acyclic set of blocks keyed by identity.
//!
//! Blocks are stored in an insert-only arena. Because a block can only be
//! inserted after all of its predecessors, arena order is a topological
//! order of the precedes relation, and each block's strict down-set is a
//! bitset over smaller arena indices computed once at insertion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::block::Block;
use crate::codec::{BlockId, CodecError, IdMap, NodeId, PrivateKey};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LaceError {
    #[error("block {0} is not in the blocklace")]
    UnknownBlock(BlockId),
    #[error("missing predecessors: {0:?}")]
    MissingPredecessors(Vec<BlockId>),
    #[error("block {0} is already present")]
    DuplicateBlock(BlockId),
    #[error("block {0} does not verify against its content")]
    NotAuthentic(BlockId),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Set of pairwise incomparable block identities, iterated in identity order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Frontier {
    tips: BTreeSet<BlockId>,
}

impl Frontier {
    pub fn ids(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.tips.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<BlockId> {
        self.tips.iter().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.tips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tips.is_empty()
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.tips.contains(id)
    }
}

/// `a` is pointed from `b` iff `a.id` is one of `b`'s predecessors.
pub fn pointed(a: &Block, b: &Block) -> bool {
    b.preds().binary_search(&a.id()).is_ok()
}

#[derive(Clone, Default)]
pub struct Blocklace {
    blocks: Vec<Arc<Block>>,
    index: IdMap<u32>,
    preds: Vec<Vec<u32>>,
    /// Strict down-set of each block, over arena indices.
    below: Vec<FixedBitSet>,
    tips: BTreeMap<BlockId, u32>,
}

impl std::fmt::Debug for Blocklace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Blocklace")
            .field("len", &self.blocks.len())
            .field("tips", &self.tips.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl PartialEq for Blocklace {
    /// Equal entry sets, regardless of insertion order.
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.index.keys().all(|id| other.contains(id))
    }
}

impl Eq for Blocklace {}

impl Blocklace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build a blocklace from blocks given in any order. Fails if the set is
    /// not closed or contains an unauthentic block.
    pub fn from_blocks<I>(blocks: I) -> Result<Self, LaceError>
    where
        I: IntoIterator<Item = Arc<Block>>,
    {
        let mut lace = Blocklace::new();
        let mut pending: BTreeMap<BlockId, Arc<Block>> = BTreeMap::new();
        for b in blocks {
            pending.insert(b.id(), b);
        }
        loop {
            let ready: Vec<BlockId> = pending
                .values()
                .filter(|b| b.preds().iter().all(|p| lace.contains(p)))
                .map(|b| b.id())
                .collect();
            if ready.is_empty() {
                break;
            }
            for id in ready {
                let b = pending.remove(&id).expect("ready block pending");
                lace.insert(b)?;
            }
        }
        if let Some(b) = pending.values().next() {
            let missing = pending
                .values()
                .flat_map(|b| b.preds().iter().copied())
                .filter(|p| !lace.contains(p) && !pending.contains_key(p))
                .collect::<BTreeSet<_>>();
            if missing.is_empty() {
                // Every pending block waits on another pending block: only
                // possible with a hash cycle, which cannot be signed.
                return Err(LaceError::MissingPredecessors(vec![b.id()]));
            }
            return Err(LaceError::MissingPredecessors(missing.into_iter().collect()));
        }
        Ok(lace)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &BlockId) -> Option<&Arc<Block>> {
        self.index.get(id).map(|&i| &self.blocks[i as usize])
    }

    pub fn index_of(&self, id: &BlockId) -> Option<u32> {
        self.index.get(id).copied()
    }

    pub fn block_at(&self, idx: u32) -> &Arc<Block> {
        &self.blocks[idx as usize]
    }

    pub fn preds_at(&self, idx: u32) -> &[u32] {
        &self.preds[idx as usize]
    }

    /// Strict down-set of the block at `idx`.
    pub fn below_at(&self, idx: u32) -> &FixedBitSet {
        &self.below[idx as usize]
    }

    /// Blocks in insertion order, which is topological.
    pub fn blocks(&self) -> impl Iterator<Item = &Arc<Block>> + '_ {
        self.blocks.iter()
    }

    /// Identities in ascending byte order.
    pub fn ids(&self) -> Vec<BlockId> {
        let mut ids: Vec<BlockId> = self.index.keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    /// Blocks sorted by identity.
    pub fn sorted_blocks(&self) -> Vec<&Arc<Block>> {
        let mut v: Vec<&Arc<Block>> = self.blocks.iter().collect();
        v.sort_unstable_by_key(|b| b.id());
        v
    }

    pub fn creators(&self) -> BTreeSet<NodeId> {
        self.blocks.iter().map(|b| b.creator()).collect()
    }

    /// Add `b`, whose predecessors must all be present. Returns its arena
    /// index.
    pub fn insert(&mut self, b: Arc<Block>) -> Result<u32, LaceError> {
        let id = b.id();
        if self.index.contains_key(&id) {
            return Err(LaceError::DuplicateBlock(id));
        }
        let missing: Vec<BlockId> = b.preds().iter().filter(|p| !self.contains(p)).copied().collect();
        if !missing.is_empty() {
            return Err(LaceError::MissingPredecessors(missing));
        }
        if !b.is_authentic() {
            return Err(LaceError::NotAuthentic(id));
        }
        Ok(self.push(b))
    }

    fn push(&mut self, b: Arc<Block>) -> u32 {
        let idx = self.blocks.len() as u32;
        let preds: Vec<u32> = b.preds().iter().map(|p| self.index[p]).collect();
        let mut below = FixedBitSet::with_capacity(idx as usize);
        for &p in &preds {
            below.union_with(&self.below[p as usize]);
            below.insert(p as usize);
            self.tips.remove(&self.blocks[p as usize].id());
        }
        debug_assert!(!below.contains(idx as usize), "cycle through {}", b.id());
        self.index.insert(b.id(), idx);
        self.tips.insert(b.id(), idx);
        self.preds.push(preds);
        self.below.push(below);
        self.blocks.push(b);
        idx
    }

    /// Index-level precedes: `a ≺ b`.
    pub fn precedes_idx(&self, a: u32, b: u32) -> bool {
        self.below[b as usize].contains(a as usize)
    }

    /// `a ≺ b`: `a` is reachable from `b` by following predecessor pointers
    /// one or more times.
    pub fn precedes(&self, a: &BlockId, b: &BlockId) -> Result<bool, LaceError> {
        let ia = self.index_of(a).ok_or(LaceError::UnknownBlock(*a))?;
        let ib = self.index_of(b).ok_or(LaceError::UnknownBlock(*b))?;
        Ok(self.precedes_idx(ia, ib))
    }

    /// Neither `a ≺ b` nor `b ≺ a`, and `a != b`.
    pub fn incomparable_idx(&self, a: u32, b: u32) -> bool {
        a != b && !self.precedes_idx(a, b) && !self.precedes_idx(b, a)
    }

    /// Down-set (⪯) of a set of arena indices.
    pub fn downset_idx(&self, roots: impl IntoIterator<Item = u32>) -> FixedBitSet {
        let mut set = FixedBitSet::with_capacity(self.len());
        for r in roots {
            set.union_with(&self.below[r as usize]);
            set.grow(self.len());
            set.insert(r as usize);
        }
        set
    }

    /// Add the down-set (⪯) of `idx` to `set`, growing it as needed.
    pub fn extend_downset(&self, set: &mut FixedBitSet, idx: u32) {
        set.grow(self.len());
        set.union_with(&self.below[idx as usize]);
        set.insert(idx as usize);
    }

    fn indices_of(&self, ids: &[BlockId]) -> Result<Vec<u32>, LaceError> {
        ids.iter()
            .map(|id| self.index_of(id).ok_or(LaceError::UnknownBlock(*id)))
            .collect()
    }

    /// Sub-blocklace of the given arena indices, which must form a closed set.
    pub fn restrict(&self, members: &FixedBitSet) -> Blocklace {
        let mut out = Blocklace::new();
        for i in members.ones() {
            out.push(self.blocks[i].clone());
        }
        out
    }

    /// The down-set of `roots` as a blocklace of its own.
    pub fn closure(&self, roots: &[BlockId]) -> Result<Blocklace, LaceError> {
        let idx = self.indices_of(roots)?;
        Ok(self.restrict(&self.downset_idx(idx)))
    }

    /// Blocks not pointed from any other block.
    pub fn maximals(&self) -> Frontier {
        Frontier {
            tips: self.tips.keys().copied().collect(),
        }
    }

    pub fn tip_indices(&self) -> Vec<u32> {
        self.tips.values().copied().collect()
    }

    /// A new block by `key` pointing at the current maximals.
    pub fn new_block(&self, key: &PrivateKey, payload: Vec<u8>) -> Block {
        Block::create(key, payload, self.maximals().to_vec())
            .expect("maximal identities are distinct")
    }

    /// Graphviz rendering: one vertex per block labelled by short identity and
    /// creator, edges from each block to its predecessors. Vertices are listed
    /// in identity order.
    pub fn to_dot(&self, label: &dyn Fn(NodeId) -> String) -> String {
        let palette = [
            "lightblue", "lightpink", "palegreen", "khaki", "plum", "lightsalmon", "lightcyan",
            "wheat",
        ];
        let creators: Vec<NodeId> = self.creators().into_iter().collect();
        let mut out = String::from("digraph blocklace {\n  rankdir=BT;\n  node [style=filled];\n");
        let sorted = self.sorted_blocks();
        for b in &sorted {
            let c = creators.binary_search(&b.creator()).unwrap_or(0);
            let _ = writeln!(
                out,
                "  \"{}\" [label=\"{}\\n{}\", fillcolor={}];",
                b.id().to_hex(),
                b.id().short(),
                label(b.creator()),
                palette[c % palette.len()]
            );
        }
        for b in &sorted {
            for p in b.preds() {
                let _ = writeln!(out, "  \"{}\" -> \"{}\";", b.id().to_hex(), p.to_hex());
            }
        }
        out.push_str("}\n");
        out
    }
}
