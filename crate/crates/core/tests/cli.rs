//! The `blocklace` binary end to end: exit codes, dumps, DOT and PO-Log output.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use blocklace::block::write_dump;
use blocklace::{keygen, Block};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_blocklace"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

/// Run `scenario` with `--dump-dir` and return the directory.
fn dumps_of(scn: &str, tag: &str) -> PathBuf {
    let dir = scratch(tag);
    let o = run(&["run", scenario(scn).to_str().unwrap(), "--quiet", "--dump-dir", dir.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    dir
}

#[test]
fn run_honest_passes_with_json_report() {
    let o = run(&["run", scenario("honest3.scn").to_str().unwrap(), "--quiet"]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let checks = report["assertions"].as_array().unwrap();
    assert!(!checks.is_empty());
    assert!(checks.iter().all(|c| c["passed"] == true));
}

#[test]
fn run_plain_equivocator_shows_unbounded_harm() {
    let o = run(&["run", scenario("equivocator_plain.scn").to_str().unwrap(), "--quiet"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn failed_assertion_exits_one() {
    // Repelling acceptance stops the harm the plain scenario asserts.
    let o = run(&["run", scenario("equivocator_plain.scn").to_str().unwrap(), "--mode", "repelling", "--quiet"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn missing_or_malformed_inputs_exit_two() {
    assert_eq!(code(&run(&["run", "missing.scn"])), 2);
    let dir = scratch("bad_inputs");
    let scn = write(&dir, "bad.scn", "seed = \"x\"\n");
    assert_eq!(code(&run(&["run", &scn])), 2);
    let dump = write(&dir, "bad.dump", "zz\n");
    for sub in ["check", "dot", "polog"] {
        assert_eq!(code(&run(&[sub, &dump])), 2, "{sub}");
    }
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn run_output_is_byte_deterministic() {
    let dir = scratch("determinism");
    let scn = scenario("equivocator.scn");
    let a = dir.join("a.json");
    let b = dir.join("b.json");
    for out in [&a, &b] {
        let o = run(&["run", scn.to_str().unwrap(), "--trace", "--seed", "9", "--quiet", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn check_accepts_correct_node_dumps() {
    let dir = dumps_of("honest3.scn", "honest_dumps");
    for name in ["alice", "bob", "carol"] {
        let dump = dir.join(format!("{name}.dump"));
        let o = run(&["check", dump.to_str().unwrap()]);
        let text = stdout(&o);
        assert_eq!(code(&o), 0, "{text}");
        assert!(text.contains("closed: yes") && text.contains("chain: yes") && text.contains("brep: yes"));
        assert!(text.contains("equivocators: []"));
    }
}

#[test]
fn check_names_the_scripted_equivocator() {
    let dir = dumps_of("equivocator.scn", "equivocator_dumps");
    let q = keygen(b"q").0.to_hex();
    let sc = blocklace::sim::Scenario::load(scenario("equivocator.scn")).unwrap();
    for n in sc.nodes.iter().filter(|n| n.name != "q") {
        let dump = dir.join(format!("{}.dump", n.name));
        let o = run(&["check", dump.to_str().unwrap()]);
        let text = stdout(&o);
        assert_eq!(code(&o), 0, "{text}");
        assert!(text.contains(&format!("equivocators: [{q}]")), "{}: {text}", n.name);
    }
}

#[test]
fn check_flags_dangling_predecessor() {
    let dir = dumps_of("honest3.scn", "dangling");
    let text = std::fs::read_to_string(dir.join("alice.dump")).unwrap();
    // Dumps list blocks predecessor-first, so the first line is a genesis block.
    let rest: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    let dump = write(&dir, "cut.dump", &rest);
    let o = run(&["check", &dump]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("closed: no"));
}

fn dot_counts(dot: &str) -> (usize, usize) {
    let edges = dot.lines().filter(|l| l.contains(" -> ")).count();
    let vertices = dot.lines().filter(|l| l.contains("[label=")).count();
    (vertices, edges)
}

#[test]
fn dot_shapes() {
    let dir = scratch("dot");
    let empty = write(&dir, "empty.dump", "");
    let o = run(&["dot", &empty]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("digraph"));
    assert_eq!(dot_counts(&stdout(&o)), (0, 0));

    let k = keygen(b"x").1;
    let a = Block::create(&k, vec![0], vec![]).unwrap();
    let b = Block::create(&k, vec![1], vec![a.id()]).unwrap();
    let c = Block::create(&k, vec![2], vec![b.id()]).unwrap();
    let chain = write(&dir, "chain.dump", &write_dump([&a, &b, &c]));
    let dot = stdout(&run(&["dot", &chain]));
    assert_eq!(dot_counts(&dot), (3, 2));
    assert!(dot.contains(&format!("\"{}\" -> \"{}\"", b.id().to_hex(), a.id().to_hex())));
    assert!(dot.contains(&format!("\"{}\" -> \"{}\"", c.id().to_hex(), b.id().to_hex())));

    let (p, q) = (keygen(b"p").1, keygen(b"q").1);
    let top = Block::create(&k, vec![0], vec![]).unwrap();
    let left = Block::create(&p, vec![1], vec![top.id()]).unwrap();
    let right = Block::create(&q, vec![2], vec![top.id()]).unwrap();
    let mut join_preds = vec![left.id(), right.id()];
    join_preds.sort();
    let join = Block::create(&k, vec![3], join_preds).unwrap();
    let blocks = [&top, &left, &right, &join];
    let diamond = write(&dir, "diamond.dump", &write_dump(blocks));
    let dot = stdout(&run(&["dot", &diamond]));
    let pointed: usize = blocks.iter().map(|b| b.preds().len()).sum();
    assert_eq!(dot_counts(&dot), (4, pointed));
    assert_eq!(pointed, 4);
}

#[test]
fn polog_views_agree_across_correct_nodes() {
    let dir = dumps_of("honest3.scn", "polog");
    let views: Vec<String> = ["alice", "bob", "carol"]
        .iter()
        .map(|n| {
            let o = run(&["polog", dir.join(format!("{n}.dump")).to_str().unwrap(), "--orset"]);
            assert_eq!(code(&o), 0);
            stdout(&o)
        })
        .collect();
    assert!(!views[0].is_empty());
    assert!(views.iter().all(|v| *v == views[0]));
    let events = stdout(&run(&["polog", dir.join("alice.dump").to_str().unwrap()]));
    assert_eq!(events.lines().count(), 200);
}
