//! Delta-state replication: a delta group joins a replica only when the
//! union stays closed; early groups wait until their past arrives.

use std::sync::Arc;

use blocklace::crdt::{delta_merge_condition, DeltaGroup, DeltaReplica};
use blocklace::{keygen, Blocklace};

fn main() {
    let k = keygen(b"writer").1;
    let mut source = Blocklace::new();
    let mut blocks = Vec::new();
    for i in 0..4u8 {
        let b = Arc::new(source.new_block(&k, vec![i]));
        source.insert(b.clone()).unwrap();
        blocks.push(b);
    }

    let mut replica = DeltaReplica::new();
    let late: DeltaGroup = blocks[2..].iter().cloned().collect();
    let early: DeltaGroup = blocks[..2].iter().cloned().collect();
    println!("late group mergeable now: {}", delta_merge_condition(replica.blocklace(), &late));
    println!("merged late: {}, held {}", replica.merge(&late), replica.held().len());
    println!("merged early: {}, held {}", replica.merge(&early), replica.held().len());
    println!("replica has {} of {} blocks", replica.blocklace().len(), source.len());
}
