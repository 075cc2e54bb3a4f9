//! Run a scenario file in the simulator and print the per-node summary and
//! assertion outcomes. Defaults to the shipped equivocator scenario.
//!
//! `cargo run --example simulate -- crates/core/scenarios/dropper.scn`

use blocklace::sim::{Scenario, Simulator};

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/equivocator.scn").to_string());
    let sc = match Scenario::load(&path) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    };
    let mut sim = Simulator::new(sc).expect("valid scenario");
    while sim.step() {}
    let report = sim.finish();
    println!("{} after {} steps", report.scenario, report.steps);
    for n in &report.nodes {
        println!(
            "  {:<4} {:<12} accepted {:>4}  polog {:>4}  byz {:?}",
            n.name, n.behavior, n.accepted, n.polog_len, n.byz
        );
    }
    for a in &report.assertions {
        println!("  {} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.check, a.detail);
    }
}
