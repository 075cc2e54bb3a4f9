//! Randomized invariants over the public API.

mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use blocklace::block::{read_dump, write_dump};
use blocklace::crdt::{delta_join, orset_query, DeltaGroup, DeltaReplica, Op};
use blocklace::detect::{equivocators, polog};
use blocklace::{AlwaysValid, Block, BlockId, Blocklace, Mode, NodeState};
use common::{adversarial_lace, is_closed, keys, Reach};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `blocks` reordered so predecessors come first, shuffled among ties.
fn shuffled_topological(blocks: &[Arc<Block>], seed: u64) -> Vec<Arc<Block>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rest: Vec<Arc<Block>> = blocks.to_vec();
    let mut placed: BTreeSet<BlockId> = BTreeSet::new();
    let mut out = Vec::new();
    while !rest.is_empty() {
        let mut ready: Vec<usize> = (0..rest.len())
            .filter(|&i| rest[i].preds().iter().all(|p| placed.contains(p)))
            .collect();
        ready.shuffle(&mut rng);
        let b = rest.swap_remove(ready[0]);
        placed.insert(b.id());
        out.push(b);
    }
    out
}

fn brute_equivocators(blocks: &[Arc<Block>]) -> BTreeSet<blocklace::NodeId> {
    let r = Reach::new(blocks);
    let mut out = BTreeSet::new();
    for (i, a) in blocks.iter().enumerate() {
        for (j, b) in blocks.iter().enumerate() {
            if i < j && a.creator() == b.creator() && !r.at(i, j) && !r.at(j, i) {
                out.insert(a.creator());
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wire_round_trip(payload in proptest::collection::vec(any::<u8>(), 0..64), npreds in 0usize..4) {
        let k = keys(&["w"]);
        let preds: Vec<Arc<Block>> = (0..npreds)
            .map(|i| Arc::new(Block::create(&k[0], vec![i as u8], vec![]).unwrap()))
            .collect();
        let b = Block::create(&k[0], payload, preds.iter().map(|p| p.id()).collect()).unwrap();
        let back = Block::from_wire(&b.to_wire()).unwrap();
        prop_assert_eq!(back.id(), b.id());
        prop_assert_eq!(back.payload(), b.payload());
        prop_assert_eq!(back.preds(), b.preds());
        prop_assert!(back.is_authentic());
        let text = write_dump([&b]);
        let parsed = read_dump(&text).unwrap();
        prop_assert_eq!(parsed.len(), 1);
        prop_assert_eq!(parsed[0].id(), b.id());
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
        if let Ok(b) = Block::from_wire(&bytes) {
            // Whatever decodes re-encodes to the same bytes.
            prop_assert_eq!(&b.to_wire(), &bytes);
        }
        let _ = Op::decode(&bytes);
    }

    #[test]
    fn flipped_payload_bit_is_not_authentic(payload in proptest::collection::vec(any::<u8>(), 1..32), bit in 0usize..256) {
        let k = keys(&["f"]);
        let b = Block::create(&k[0], payload.clone(), vec![]).unwrap();
        let mut tampered = payload;
        let at = bit % (tampered.len() * 8);
        tampered[at / 8] ^= 1 << (at % 8);
        let forged = Block::from_parts(b.id(), tampered, vec![]).unwrap();
        prop_assert!(!forged.is_authentic());
    }

    #[test]
    fn precedence_matches_reachability(seed in any::<u64>()) {
        let blocks = adversarial_lace(seed, 14);
        let lace = Blocklace::from_blocks(blocks.clone()).unwrap();
        let r = Reach::new(&blocks);
        for (i, a) in blocks.iter().enumerate() {
            prop_assert!(!lace.precedes(&a.id(), &a.id()).unwrap());
            for (j, b) in blocks.iter().enumerate() {
                prop_assert_eq!(lace.precedes(&a.id(), &b.id()).unwrap(), r.at(i, j));
            }
        }
    }

    #[test]
    fn equivocators_match_pairwise_search(seed in any::<u64>()) {
        let blocks = adversarial_lace(seed, 14);
        let lace = Blocklace::from_blocks(blocks.clone()).unwrap();
        prop_assert_eq!(equivocators(&lace), brute_equivocators(&blocks));
    }

    #[test]
    fn polog_independent_of_insertion_order(seed in any::<u64>(), order in any::<u64>()) {
        let blocks = adversarial_lace(seed, 14);
        let a = Blocklace::from_blocks(blocks.clone()).unwrap();
        let b = Blocklace::from_blocks(shuffled_topological(&blocks, order)).unwrap();
        for mode in [Mode::Plain, Mode::Repelling] {
            let (pa, pb) = (polog(&a, mode, Arc::new(AlwaysValid)), polog(&b, mode, Arc::new(AlwaysValid)));
            prop_assert!(pa == pb);
            prop_assert_eq!(orset_query(&pa), orset_query(&pb));
        }
    }

    #[test]
    fn accepted_set_is_closed_and_order_independent(seed in any::<u64>(), order in any::<u64>()) {
        let blocks = adversarial_lace(seed, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(order);
        let mut arrivals = blocks.clone();
        arrivals.shuffle(&mut rng);
        let feed = |input: &[Arc<Block>]| {
            let mut st = NodeState::new(Mode::Repelling, Arc::new(AlwaysValid));
            for b in input {
                st.receive(b.clone());
                st.try_accept();
            }
            st
        };
        let (mut x, mut y) = (feed(&blocks), feed(&arrivals));
        prop_assert!(x.is_brep() && y.is_brep());
        let ax: Vec<Arc<Block>> = x.accepted().cloned().collect();
        prop_assert!(is_closed(&ax));
        prop_assert!(x.audit().is_ok());
        prop_assert!(y.audit().is_ok());
        // Every admitted set is repelling; arrival order may change which
        // one, but never for a lace without Byzantine nodes.
        let xs: BTreeSet<BlockId> = x.accepted().map(|b| b.id()).collect();
        let ys: BTreeSet<BlockId> = y.accepted().map(|b| b.id()).collect();
        if x.byz().is_empty() && y.byz().is_empty() {
            prop_assert_eq!(xs, ys);
        }
    }

    #[test]
    fn delta_join_is_a_semilattice(seed in any::<u64>(), cut1 in 0usize..16, cut2 in 0usize..16) {
        let blocks = adversarial_lace(seed, 12);
        let n = blocks.len();
        let a: DeltaGroup = blocks[..cut1.min(n)].iter().cloned().collect();
        let b: DeltaGroup = blocks[cut2.min(n)..].iter().cloned().collect();
        let c: DeltaGroup = blocks.iter().step_by(2).cloned().collect();
        prop_assert_eq!(delta_join(&a, &b), delta_join(&b, &a));
        prop_assert_eq!(delta_join(&a, &a), a.clone());
        prop_assert_eq!(delta_join(&delta_join(&a, &b), &c), delta_join(&a, &delta_join(&b, &c)));
    }

    #[test]
    fn delta_replicas_converge(seed in any::<u64>(), order in any::<u64>()) {
        let blocks = adversarial_lace(seed, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(order);
        let mut shuffled = blocks.clone();
        shuffled.shuffle(&mut rng);
        let mut x = DeltaReplica::new();
        let mut y = DeltaReplica::new();
        for b in &blocks {
            x.merge(&DeltaGroup::singleton(b.clone()));
        }
        for chunk in shuffled.chunks(3) {
            y.merge(&chunk.iter().cloned().collect());
        }
        prop_assert!(x.held().is_empty() && y.held().is_empty());
        let xs: BTreeSet<BlockId> = x.blocklace().ids().into_iter().collect();
        let ys: BTreeSet<BlockId> = y.blocklace().ids().into_iter().collect();
        prop_assert_eq!(xs, ys);
    }
}

#[test]
fn concurrent_add_beats_remove() {
    let k = keys(&["a", "b"]);
    let add = Arc::new(Block::create(&k[0], Op::Add(b"x".to_vec()).encode(), vec![]).unwrap());
    let readd = Arc::new(Block::create(&k[1], Op::Add(b"x".to_vec()).encode(), vec![]).unwrap());
    let remove = Arc::new(Block::create(&k[0], Op::Remove(b"x".to_vec(), vec![add.id()]).encode(), vec![add.id()]).unwrap());
    let lace = Blocklace::from_blocks(vec![add, readd.clone(), remove.clone()]).unwrap();
    let log = polog(&lace, Mode::Repelling, Arc::new(AlwaysValid));
    assert!(orset_query(&log).contains(&b"x".to_vec()));
    let gone = Blocklace::from_blocks(vec![lace.get(&remove.preds()[0]).unwrap().clone(), remove]).unwrap();
    let log = polog(&gone, Mode::Repelling, Arc::new(AlwaysValid));
    assert!(orset_query(&log).is_empty());
}
