//! Brute-force oracles shared by the integration tests. Nothing here uses the
//! library's reachability bitsets, detector or peel search.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use blocklace::crdt::Op;
use blocklace::{keygen, Block, BlockId, NodeId, PrivateKey};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Strict precedence over an arbitrary block list: `at(a, b)` iff block `a`
/// is reachable from block `b` through one or more predecessor pointers.
/// Predecessors outside the list are ignored. Transitive closure by
/// Warshall's algorithm over bit rows.
pub struct Reach {
    pub ids: Vec<BlockId>,
    pub index: HashMap<BlockId, usize>,
    words: usize,
    rows: Vec<u64>,
}

impl Reach {
    pub fn new(blocks: &[Arc<Block>]) -> Self {
        let n = blocks.len();
        let words = n.div_ceil(64).max(1);
        let index: HashMap<BlockId, usize> = blocks.iter().enumerate().map(|(i, b)| (b.id(), i)).collect();
        let mut rows = vec![0u64; n * words];
        for (j, b) in blocks.iter().enumerate() {
            for p in b.preds() {
                if let Some(&i) = index.get(p) {
                    rows[i * words + j / 64] |= 1 << (j % 64);
                }
            }
        }
        for k in 0..n {
            let row_k: Vec<u64> = rows[k * words..(k + 1) * words].to_vec();
            for i in 0..n {
                if rows[i * words + k / 64] >> (k % 64) & 1 == 1 {
                    for (w, x) in row_k.iter().enumerate() {
                        rows[i * words + w] |= x;
                    }
                }
            }
        }
        Reach {
            ids: blocks.iter().map(|b| b.id()).collect(),
            index,
            words,
            rows,
        }
    }

    /// Block `a` precedes block `b`, by list position.
    pub fn at(&self, a: usize, b: usize) -> bool {
        self.rows[a * self.words + b / 64] >> (b % 64) & 1 == 1
    }

    pub fn precedes(&self, a: &BlockId, b: &BlockId) -> bool {
        self.at(self.index[a], self.index[b])
    }
}

/// Every predecessor of every block is in the set.
pub fn is_closed<'a>(blocks: impl IntoIterator<Item = &'a Arc<Block>>) -> bool {
    let blocks: Vec<&Arc<Block>> = blocks.into_iter().collect();
    let ids: BTreeSet<BlockId> = blocks.iter().map(|b| b.id()).collect();
    blocks.iter().all(|b| b.preds().iter().all(|p| ids.contains(p)))
}

/// CLOSED, acyclic, and every creator's blocks pairwise comparable.
pub fn axioms(blocks: &[Arc<Block>], chain_for: &BTreeSet<NodeId>) -> bool {
    if !is_closed(blocks) {
        return false;
    }
    let r = Reach::new(blocks);
    let n = blocks.len();
    if (0..n).any(|i| r.at(i, i)) {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            let c = blocks[i].creator();
            if c == blocks[j].creator() && chain_for.contains(&c) && !r.at(i, j) && !r.at(j, i) {
                return false;
            }
        }
    }
    true
}

/// Incremental form of [`axioms`] for a block set that only grows. Each call
/// passes the whole current set; blocks not seen before are admitted once all
/// their predecessors are present (so a stuck remainder means a missing
/// predecessor or a cycle) and compared against the earlier blocks of their
/// creator through ancestor sets kept here.
#[derive(Default)]
pub struct AxiomTracker {
    index: HashMap<BlockId, usize>,
    ancestors: Vec<Vec<u64>>,
    by_creator: HashMap<NodeId, Vec<usize>>,
}

impl AxiomTracker {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn extend(&mut self, blocks: &[Arc<Block>], chain_for: &BTreeSet<NodeId>) -> bool {
        let mut fresh: Vec<&Arc<Block>> = blocks.iter().filter(|b| !self.index.contains_key(&b.id())).collect();
        if self.index.len() + fresh.len() != blocks.len() {
            return false;
        }
        while !fresh.is_empty() {
            let (ready, rest): (Vec<&Arc<Block>>, Vec<&Arc<Block>>) = fresh
                .into_iter()
                .partition(|b| b.preds().iter().all(|p| self.index.contains_key(p)));
            if ready.is_empty() {
                return false;
            }
            for b in ready {
                if !self.admit(b, chain_for) {
                    return false;
                }
            }
            fresh = rest;
        }
        true
    }

    fn admit(&mut self, b: &Arc<Block>, chain_for: &BTreeSet<NodeId>) -> bool {
        let i = self.ancestors.len();
        let mut anc = vec![0u64; i / 64 + 1];
        for p in b.preds() {
            let j = self.index[p];
            for (w, x) in self.ancestors[j].iter().enumerate() {
                anc[w] |= x;
            }
            anc[j / 64] |= 1 << (j % 64);
        }
        let c = b.creator();
        let same = self.by_creator.entry(c).or_default();
        // Earlier blocks cannot have `b` below them.
        if chain_for.contains(&c) && same.iter().any(|&x| anc[x / 64] >> (x % 64) & 1 == 0) {
            return false;
        }
        same.push(i);
        self.index.insert(b.id(), i);
        self.ancestors.push(anc);
        true
    }
}

/// The recursive repelling definition evaluated literally over subsets of a
/// small closed blocklace (at most 32 blocks, in practice 12), with every
/// block valid. Sets are bitmasks over the input order.
pub struct NaiveRepel {
    n: usize,
    creator: Vec<usize>,
    /// Mask of direct predecessors.
    preds: Vec<u32>,
    /// Mask of `⪯b`.
    down: Vec<u32>,
    wf: Vec<bool>,
    brep_memo: HashMap<u32, bool>,
    byz_memo: HashMap<u32, u32>,
}

impl NaiveRepel {
    pub fn new(blocks: &[Arc<Block>]) -> Self {
        assert!(blocks.len() <= 32);
        let r = Reach::new(blocks);
        let n = blocks.len();
        let mut creators: Vec<NodeId> = blocks.iter().map(|b| b.creator()).collect();
        creators.sort();
        creators.dedup();
        let creator = blocks
            .iter()
            .map(|b| creators.iter().position(|c| *c == b.creator()).unwrap())
            .collect();
        let mut preds = vec![0u32; n];
        let mut down = vec![0u32; n];
        let mut wf = vec![true; n];
        for (j, b) in blocks.iter().enumerate() {
            let ps: Vec<usize> = b.preds().iter().map(|p| r.index[p]).collect();
            for &p in &ps {
                preds[j] |= 1 << p;
            }
            for (x, &a) in ps.iter().enumerate() {
                for &c in &ps[x + 1..] {
                    if r.at(a, c) || r.at(c, a) {
                        wf[j] = false;
                    }
                }
            }
            wf[j] &= b.is_authentic();
            down[j] = 1 << j;
            for i in 0..n {
                if r.at(i, j) {
                    down[j] |= 1 << i;
                }
            }
        }
        NaiveRepel {
            n,
            creator,
            preds,
            down,
            wf,
            brep_memo: HashMap::new(),
            byz_memo: HashMap::new(),
        }
    }

    pub fn full(&self) -> u32 {
        if self.n == 32 {
            u32::MAX
        } else {
            (1u32 << self.n) - 1
        }
    }

    pub fn down(&self, i: usize) -> u32 {
        self.down[i]
    }

    pub fn strict_down(&self, i: usize) -> u32 {
        self.down[i] & !(1 << i)
    }

    pub fn closed(&self, s: u32) -> bool {
        (0..self.n).all(|i| s & (1 << i) == 0 || self.preds[i] & !s == 0)
    }

    fn members(&self, s: u32) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |i| s & (1 << i) != 0)
    }

    fn maximal(&self, s: u32) -> Vec<usize> {
        self.members(s)
            .filter(|&i| self.members(s).all(|j| j == i || self.down[j] & (1 << i) == 0))
            .collect()
    }

    /// Creator indices, as a mask, of the Byzantine nodes of the closed set `s`.
    pub fn byz(&mut self, s: u32) -> u32 {
        if let Some(&v) = self.byz_memo.get(&s) {
            return v;
        }
        let mut out = 0u32;
        let ms: Vec<usize> = self.members(s).collect();
        for (x, &a) in ms.iter().enumerate() {
            for &b in &ms[x + 1..] {
                if self.creator[a] == self.creator[b] && self.down[a] & (1 << b) == 0 && self.down[b] & (1 << a) == 0 {
                    out |= 1 << self.creator[a];
                }
            }
        }
        for &c in &ms {
            let sd = self.strict_down(c);
            if !self.wf[c] || !self.brep(sd) {
                out |= 1 << self.creator[c];
            }
        }
        self.byz_memo.insert(s, out);
        out
    }

    /// The definition: empty, or some maximal `b` and closed `B' ⊂ B` with
    /// `B = B' ∪ ⪯b`, `brep(B')`, and a new Byzantine node or an
    /// acknowledging non-Byzantine creator.
    pub fn brep(&mut self, s: u32) -> bool {
        if s == 0 {
            return true;
        }
        if let Some(&v) = self.brep_memo.get(&s) {
            return v;
        }
        let mut result = false;
        'outer: for b in self.maximal(s) {
            let db = self.down[b];
            let rest = s & !db;
            let byz_s = self.byz(s);
            let byz_minus = self.byz(s & !(1 << b));
            let rule1 = byz_minus & !byz_s == 0 && byz_minus != byz_s;
            let creator_ok = byz_s & (1 << self.creator[b]) == 0;
            let byz_b = self.byz(db);
            // B' = rest ∪ sub for every sub ⊆ ⪯b \ {b}.
            let free = db & !(1 << b);
            let mut sub = free;
            loop {
                let bp = rest | sub;
                if self.closed(bp) && (rule1 || (creator_ok && self.byz(bp) & !byz_b == 0)) && self.brep(bp) {
                    result = true;
                    break 'outer;
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & free;
            }
        }
        self.brep_memo.insert(s, result);
        result
    }

    /// Every closed subset of the blocklace.
    pub fn closed_subsets(&self) -> Vec<u32> {
        let mut out = Vec::new();
        let full = self.full();
        let mut s = full;
        loop {
            if self.closed(s) {
                out.push(s);
            }
            if s == 0 {
                break;
            }
            s = (s - 1) & full;
        }
        out
    }

    pub fn byz_nodes(&mut self, s: u32, blocks: &[Arc<Block>]) -> BTreeSet<NodeId> {
        let mask = self.byz(s);
        let mut creators: Vec<NodeId> = blocks.iter().map(|b| b.creator()).collect();
        creators.sort();
        creators.dedup();
        creators
            .into_iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, c)| c)
            .collect()
    }
}

pub fn keys(names: &[&str]) -> Vec<PrivateKey> {
    names.iter().map(|n| keygen(n.as_bytes()).1).collect()
}

/// A closed blocklace of at most `max` blocks built to stress the repelling
/// rules: forks, duplicate genesis blocks, comparable predecessors, blocks
/// that skip their creator's previous block, and blocks that ignore known
/// equivocations. Returned in creation order.
pub fn adversarial_lace(seed: u64, max: usize) -> Vec<Arc<Block>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ks = keys(&["a", "b", "c", "d"]);
    let creators = rng.random_range(2..=4usize);
    let n = rng.random_range(1..=max);
    let malformed_rate = rng.random_range(0.0..0.25);
    let own_rate = rng.random_range(0.3..0.95);
    let mut blocks: Vec<Arc<Block>> = Vec::new();
    let mut last: Vec<Option<usize>> = vec![None; creators];
    for k in 0..n {
        let c = rng.random_range(0..creators);
        let mut chosen: BTreeSet<usize> = BTreeSet::new();
        if !blocks.is_empty() {
            let want = rng.random_range(0..=3usize.min(blocks.len()));
            let mut idx: Vec<usize> = (0..blocks.len()).collect();
            idx.shuffle(&mut rng);
            chosen.extend(idx.into_iter().take(want));
        }
        if let Some(l) = last[c] {
            if rng.random_bool(own_rate) {
                chosen.insert(l);
            }
        }
        let picked: Vec<Arc<Block>> = chosen.iter().map(|&i| blocks[i].clone()).collect();
        let preds: Vec<BlockId> = if rng.random_bool(malformed_rate) {
            picked.iter().map(|b| b.id()).collect()
        } else {
            // Keep only the maximal ones so the block is well-formed.
            let r = Reach::new(&blocks);
            picked
                .iter()
                .filter(|a| !picked.iter().any(|b| r.precedes(&a.id(), &b.id())))
                .map(|b| b.id())
                .collect()
        };
        let b = Block::create(&ks[c], vec![k as u8], preds).expect("distinct predecessors");
        last[c] = Some(blocks.len());
        blocks.push(Arc::new(b));
    }
    blocks
}

/// All linear extensions of the strict order `before` over `0..n`.
pub fn linear_extensions(n: usize, before: &dyn Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    fn go(n: usize, before: &dyn Fn(usize, usize) -> bool, cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for i in 0..n {
            if !used[i] && (0..n).all(|j| used[j] || !before(j, i)) {
                used[i] = true;
                cur.push(i);
                go(n, before, cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(n, before, &mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Sequential OR-Set over one interleaving: an add inserts its tag, a
/// remove deletes the tags it names.
pub fn orset_sequential(events: &[&Arc<Block>]) -> BTreeSet<Vec<u8>> {
    let mut tags: BTreeMap<Vec<u8>, BTreeSet<BlockId>> = BTreeMap::new();
    for b in events {
        match Op::decode(b.payload()) {
            Ok(Op::Add(e)) => {
                tags.entry(e).or_default().insert(b.id());
            }
            Ok(Op::Remove(e, ids)) => {
                if let Some(s) = tags.get_mut(&e) {
                    for id in ids {
                        s.remove(&id);
                    }
                }
            }
            _ => {}
        }
    }
    tags.into_iter().filter(|(_, s)| !s.is_empty()).map(|(e, _)| e).collect()
}
