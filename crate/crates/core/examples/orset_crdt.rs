//! The OR-Set over a PO-Log: removes only cancel the adds they observed, so
//! a concurrent add wins.

use std::sync::Arc;

use blocklace::crdt::{orset_query, remove_observed, Op};
use blocklace::detect::polog;
use blocklace::{keygen, AlwaysValid, Block, Blocklace, Mode};

fn show(label: &str, lace: &Blocklace) {
    let log = polog(lace, Mode::Repelling, Arc::new(AlwaysValid));
    let elems: Vec<String> = orset_query(&log).iter().map(|e| String::from_utf8_lossy(e).into_owned()).collect();
    println!("{label:<28} {elems:?}");
}

fn main() {
    let (a, b) = (keygen(b"a").1, keygen(b"b").1);
    let mut lace = Blocklace::new();
    let add = |lace: &Blocklace, k, e: &str| Arc::new(lace.new_block(k, Op::Add(e.as_bytes().to_vec()).encode()));

    let x = add(&lace, &a, "milk");
    lace.insert(x).unwrap();
    let y = add(&lace, &a, "eggs");
    lace.insert(y).unwrap();
    show("after two adds", &lace);

    // b re-adds "milk" without seeing a's remove.
    let concurrent = Arc::new(Block::create(&b, Op::Add(b"milk".to_vec()).encode(), lace.maximals().to_vec()).unwrap());
    let log = polog(&lace, Mode::Repelling, Arc::new(AlwaysValid));
    let rm = Arc::new(lace.new_block(&a, remove_observed(&log, b"milk")));
    lace.insert(rm).unwrap();
    show("after remove(milk)", &lace);
    lace.insert(concurrent).unwrap();
    show("after concurrent add(milk)", &lace);
}
