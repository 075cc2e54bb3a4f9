//! Buffered acceptance. Out-of-order blocks wait for their predecessors. In
//! repelling mode, once an equivocation is known, blocks from the exposed
//! node that ignore it are held back; plain mode takes everything.

use std::sync::Arc;

use blocklace::{keygen, AlwaysValid, Block, Mode, NodeState};

fn main() {
    let (p, q) = (keygen(b"p").1, keygen(b"q").1);
    let g = Arc::new(Block::create(&p, vec![0], vec![]).unwrap());
    let f1 = Arc::new(Block::create(&q, vec![1], vec![g.id()]).unwrap());
    let f2 = Arc::new(Block::create(&q, vec![2], vec![g.id()]).unwrap());
    let mut both = vec![f1.id(), f2.id()];
    both.sort();
    let seen = Arc::new(Block::create(&p, vec![3], both).unwrap());
    // q keeps building on one branch and never acknowledges its own fork.
    let later = Arc::new(Block::create(&q, vec![4], vec![f1.id()]).unwrap());

    for mode in [Mode::Plain, Mode::Repelling] {
        let mut st = NodeState::new(mode, Arc::new(AlwaysValid));
        // Deliberately out of order.
        for b in [&seen, &f2, &f1, &g, &later] {
            let receipt = st.receive(b.clone());
            let accepted = st.try_accept();
            println!("{mode:?}: {} -> {receipt:?}, accepted {}", b.id().short(), accepted.len());
        }
        println!(
            "{mode:?}: accepted {} of 5, buffered {}, byz {}, repelling {}",
            st.accepted_len(),
            st.buffer().len(),
            st.byz().len(),
            st.is_brep()
        );
    }
}
