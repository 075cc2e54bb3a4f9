//! A small blocklace: insertion enforces closure, precedence is the
//! transitive pointer relation, and the whole thing renders as DOT.

use std::sync::Arc;

use blocklace::{keygen, Block, Blocklace, LaceError};

fn main() {
    let (a, b) = (keygen(b"a").1, keygen(b"b").1);
    let mut lace = Blocklace::new();

    let g = Arc::new(Block::create(&a, vec![0], vec![]).unwrap());
    let orphan = Arc::new(Block::create(&b, vec![9], vec![g.id()]).unwrap());
    match lace.insert(orphan.clone()) {
        Err(LaceError::MissingPredecessors(m)) => println!("rejected orphan: {} missing", m.len()),
        other => println!("unexpected: {other:?}"),
    }

    lace.insert(g.clone()).unwrap();
    lace.insert(orphan.clone()).unwrap();
    let top = Arc::new(lace.new_block(&a, vec![1]));
    lace.insert(top.clone()).unwrap();

    println!("blocks   {}", lace.len());
    println!("g < top  {}", lace.precedes(&g.id(), &top.id()).unwrap());
    println!("top < g  {}", lace.precedes(&top.id(), &g.id()).unwrap());
    println!("tips     {}", lace.maximals().len());
    print!("{}", lace.to_dot(&|n| n.short()));
}
