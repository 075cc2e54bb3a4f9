//! Equivocation: two incomparable blocks by one creator expose it, and the
//! evidence record verifies on its own.

use std::sync::Arc;

use blocklace::detect::{equivocators, verify_evidence};
use blocklace::{keygen, AlwaysValid, Block, Blocklace, Detector, Mode};

fn main() {
    let (p, q) = (keygen(b"p"), keygen(b"q"));
    let g = Arc::new(Block::create(&p.1, vec![0], vec![]).unwrap());
    let fork1 = Arc::new(Block::create(&q.1, vec![1], vec![g.id()]).unwrap());
    let fork2 = Arc::new(Block::create(&q.1, vec![2], vec![g.id()]).unwrap());
    let mut ids = vec![fork1.id(), fork2.id()];
    ids.sort();
    let witness = Arc::new(Block::create(&p.1, vec![3], ids).unwrap());

    let lace = Blocklace::from_blocks(vec![g, fork1, fork2, witness]).unwrap();
    let eq = equivocators(&lace);
    println!("equivocators: {:?}", eq.iter().map(|n| n.short()).collect::<Vec<_>>());
    println!("q exposed: {}", eq.contains(&q.0));

    let d = Detector::over(&lace, Mode::Repelling, Arc::new(AlwaysValid));
    for e in d.evidence(&lace, &lace.tip_indices()) {
        let ok = verify_evidence(&e, Mode::Repelling, Arc::new(AlwaysValid));
        println!("evidence against {}: {:?}, {} witness blocks, verifies: {ok}", e.accused.short(), e.kind, e.witness.len());
    }
}
