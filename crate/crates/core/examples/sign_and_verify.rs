//! Block identities: create a signed block, ship it over the wire format and
//! watch a tampered copy fail authentication.

use blocklace::{keygen, Block};

fn main() {
    let (alice, key) = keygen(b"alice");
    let genesis = Block::create(&key, b"hello".to_vec(), vec![]).expect("no predecessors");
    let next = Block::create(&key, b"world".to_vec(), vec![genesis.id()]).expect("one predecessor");

    println!("creator  {}", alice.to_hex());
    println!("genesis  {}", genesis.id().short());
    println!("next     {} -> {}", next.id().short(), genesis.id().short());

    let wire = next.to_wire();
    let back = Block::from_wire(&wire).expect("round trip");
    println!("wire     {} bytes, authentic after decode: {}", wire.len(), back.is_authentic());

    let forged = Block::from_parts(next.id(), b"w0rld".to_vec(), next.preds().to_vec()).expect("well-formed parts");
    println!("tampered payload authentic: {}", forged.is_authentic());
}
