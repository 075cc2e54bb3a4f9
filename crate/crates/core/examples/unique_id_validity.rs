//! A custom validity predicate: names may be registered once. Re-registering
//! a taken name makes the block invalid and its creator Byzantine, and its
//! block leaves the PO-Log.

use std::sync::Arc;

use blocklace::crdt::Op;
use blocklace::detect::{byz, polog};
use blocklace::{keygen, Blocklace, Mode, UniqueIdRegistry};

fn main() {
    let (a, m) = (keygen(b"a"), keygen(b"mallory"));
    let mut lace = Blocklace::new();
    let reg = |name: &str| Op::Register(name.as_bytes().to_vec()).encode();

    let first = Arc::new(lace.new_block(&a.1, reg("alice")));
    lace.insert(first).unwrap();
    let dup = Arc::new(lace.new_block(&m.1, reg("alice")));
    lace.insert(dup).unwrap();

    let accused = byz(&lace, Mode::Repelling, Arc::new(UniqueIdRegistry));
    println!("mallory Byzantine: {}", accused.contains(&m.0));
    let log = polog(&lace, Mode::Repelling, Arc::new(UniqueIdRegistry));
    println!("PO-Log keeps {} of {} blocks", log.len(), lace.len());
}
