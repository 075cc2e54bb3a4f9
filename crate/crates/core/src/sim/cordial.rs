//! Cordial dissemination: a block from a neighbour tells us everything that
//! neighbour had when it created the block, so the reply is the set
//! difference between our accepted blocks and that knowledge.

use std::collections::BTreeMap;
use std::sync::Arc;

use fixedbitset::FixedBitSet;

use crate::block::Block;
use crate::codec::NodeId;
use crate::repel::NodeState;

/// Per-neighbour record of the blocks a node believes the neighbour holds:
/// the down-sets of the neighbour's own blocks plus everything already
/// sent to it. Bitsets range over the owner's local arena.
#[derive(Debug, Clone, Default)]
pub struct PeerKnowledge {
    held: BTreeMap<NodeId, FixedBitSet>,
}

impl PeerKnowledge {
    pub fn new(peers: impl IntoIterator<Item = NodeId>) -> Self {
        PeerKnowledge {
            held: peers.into_iter().map(|p| (p, FixedBitSet::new())).collect(),
        }
    }

    pub fn peers(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.held.keys().copied()
    }

    pub fn retain(&mut self, keep: impl Fn(&NodeId) -> bool) {
        self.held.retain(|n, _| keep(n));
    }

    pub fn is_peer(&self, node: &NodeId) -> bool {
        self.held.contains_key(node)
    }

    /// Record that `b`, created by a neighbour and known to `state`, proves
    /// the neighbour holds `⪯b`. Returns whether `b`'s creator is a peer.
    pub fn acknowledge(&mut self, state: &NodeState, b: &Block) -> bool {
        let Some(set) = self.held.get_mut(&b.creator()) else {
            return false;
        };
        if let Some(i) = state.known().index_of(&b.id()) {
            state.known().extend_downset(set, i);
        }
        true
    }

    /// Accepted blocks `peer` is not known to hold, in topological order.
    pub fn missing(&self, state: &NodeState, peer: &NodeId) -> Vec<Arc<Block>> {
        let mut diff = state.accepted_bits().clone();
        if let Some(held) = self.held.get(peer) {
            diff.difference_with(held);
        }
        diff.ones().map(|i| state.known().block_at(i as u32).clone()).collect()
    }

    pub fn mark_sent(&mut self, state: &NodeState, peer: &NodeId, blocks: &[Arc<Block>]) {
        if let Some(set) = self.held.get_mut(peer) {
            set.grow(state.known().len());
            for b in blocks {
                if let Some(i) = state.known().index_of(&b.id()) {
                    set.insert(i as usize);
                }
            }
        }
    }
}

/// The reply owed for accepting `b`: if `b`'s creator is a neighbour, every
/// accepted block outside `⪯b` and outside what was already sent to it.
pub fn cordial_targets(
    b: &Block,
    state: &NodeState,
    knowledge: &PeerKnowledge,
) -> Vec<(NodeId, Vec<Arc<Block>>)> {
    let mut k = knowledge.clone();
    if !k.acknowledge(state, b) {
        return Vec::new();
    }
    let missing = k.missing(state, &b.creator());
    if missing.is_empty() {
        return Vec::new();
    }
    vec![(b.creator(), missing)]
}
