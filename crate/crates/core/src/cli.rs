//! The `blocklace` command-line tool.
//!
//! Exit codes: 0 when everything checked holds, 1 when a property or
//! assertion fails, 2 when the input cannot be read or parsed.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::block::{read_dump, write_dump, Block};
use crate::codec::NodeId;
use crate::crdt::{orset_query, Op};
use crate::detect::{equivocators, AlwaysValid, Detector, Mode, UniqueIdRegistry, ValidityPredicate};
use crate::lace::{Blocklace, LaceError};
use crate::sim::{Scenario, Simulator};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "blocklace", version, about = "Blocklace simulator and validator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Suppress non-essential output on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write its JSON report.
    Run(RunArgs),
    /// Validate a block dump: closure, acyclicity, chains, Byzantine set, repelling.
    Check(DumpArgs),
    /// Render a block dump as a Graphviz digraph.
    Dot(DumpArgs),
    /// Print the PO-Log (or the OR-Set view) of a block dump.
    Polog(PologArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Plain,
    Repelling,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Plain => Mode::Plain,
            ModeArg::Repelling => Mode::Repelling,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Default)]
pub enum ValidityArg {
    #[default]
    Always,
    UniqueId,
}

impl ValidityArg {
    fn predicate(self) -> Arc<dyn ValidityPredicate> {
        match self {
            ValidityArg::Always => Arc::new(AlwaysValid),
            ValidityArg::UniqueId => Arc::new(UniqueIdRegistry),
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub scenario: PathBuf,
    /// Override the scenario's acceptance mode.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Override the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Include the per-event trace in the report.
    #[arg(long)]
    pub trace: bool,
    /// Write each node's final blocklace as `<name>.dump` into this directory.
    #[arg(long)]
    pub dump_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    pub dump: PathBuf,
    #[arg(long, value_enum, default_value = "repelling")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "always")]
    pub validity: ValidityArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PologArgs {
    #[command(flatten)]
    pub dump: DumpArgs,
    /// Print the OR-Set elements instead of the events.
    #[arg(long)]
    pub orset: bool,
}

/// Parse the process arguments and run. Returns the exit code.
pub fn main() -> i32 {
    match Cli::try_parse() {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_INPUT
            } else {
                EXIT_OK
            }
        }
    }
}

pub fn execute(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, cli.quiet),
        Command::Check(a) => cmd_check(a),
        Command::Dot(a) => cmd_dot(a),
        Command::Polog(a) => cmd_polog(a),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), String> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn cmd_run(a: &RunArgs, quiet: bool) -> Result<i32, String> {
    let mut sc = Scenario::load(&a.scenario).map_err(|e| e.to_string())?;
    if let Some(m) = a.mode {
        sc.mode = m.into();
    }
    if let Some(s) = a.seed {
        sc.seed = s;
    }
    let mut sim = Simulator::new(sc).map_err(|e| e.to_string())?;
    if a.trace {
        sim = sim.with_trace();
    }
    while sim.step() {}
    if let Some(dir) = &a.dump_dir {
        write_dumps(&sim, dir)?;
    }
    let report = sim.finish();
    emit(&a.out, &report.to_json())?;
    if !quiet {
        for o in &report.assertions {
            eprintln!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.check, o.detail);
        }
    }
    Ok(if report.passed() { EXIT_OK } else { EXIT_FAIL })
}

fn write_dumps(sim: &Simulator, dir: &Path) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    for (i, node) in sim.scenario().nodes.iter().enumerate() {
        let st = sim.state(i);
        let text = write_dump(st.accepted().map(|b| b.as_ref()));
        let path = dir.join(format!("{}.dump", node.name));
        std::fs::write(&path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }
    Ok(())
}

fn load_dump(path: &Path) -> Result<Vec<Arc<Block>>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    read_dump(&text).map_err(|(line, e)| format!("{}:{line}: {e}", path.display()))
}

fn node_list(ids: &BTreeSet<NodeId>) -> String {
    let v: Vec<String> = ids.iter().map(|n| n.to_hex()).collect();
    format!("[{}]", v.join(", "))
}

/// Text report of the structural and Byzantine predicates over a dump.
/// Returns the report and whether the dump is closed and repelling.
pub fn check_report(blocks: Vec<Arc<Block>>, mode: Mode, validity: Arc<dyn ValidityPredicate>) -> (String, bool) {
    let mut out = String::new();
    let _ = writeln!(out, "blocks: {}", blocks.len());
    let forged: Vec<String> = blocks.iter().filter(|b| !b.is_authentic()).map(|b| b.id().to_hex()).collect();
    if !forged.is_empty() {
        let _ = writeln!(out, "authentic: no {forged:?}");
    }
    let lace = match Blocklace::from_blocks(blocks) {
        Ok(l) => l,
        Err(LaceError::MissingPredecessors(m)) => {
            let ids: Vec<String> = m.iter().map(|id| id.to_hex()).collect();
            let _ = writeln!(out, "closed: no (missing {})", ids.join(", "));
            let _ = writeln!(out, "verdict: fail");
            return (out, false);
        }
        Err(e) => {
            let _ = writeln!(out, "closed: no ({e})");
            let _ = writeln!(out, "verdict: fail");
            return (out, false);
        }
    };
    let _ = writeln!(out, "closed: yes");
    // Insertion succeeded only in predecessor-first order.
    let _ = writeln!(out, "acyclic: yes");
    let eq = equivocators(&lace);
    let _ = writeln!(out, "chain: {}", if eq.is_empty() { "yes" } else { "no" });
    let _ = writeln!(out, "equivocators: {}", node_list(&eq));
    let d = Detector::over(&lace, mode, validity.clone());
    let tips = lace.tip_indices();
    let _ = writeln!(out, "byzantine: {}", node_list(&d.byz_of(&lace, &tips)));
    let repelling = crate::repel::brep(&lace, validity);
    let _ = writeln!(out, "brep: {}", if repelling { "yes" } else { "no" });
    let _ = writeln!(out, "verdict: {}", if repelling { "pass" } else { "fail" });
    (out, repelling)
}

pub fn cmd_check(a: &DumpArgs) -> Result<i32, String> {
    let blocks = load_dump(&a.dump)?;
    let (text, ok) = check_report(blocks, a.mode.into(), a.validity.predicate());
    emit(&a.out, &text)?;
    Ok(if ok { EXIT_OK } else { EXIT_FAIL })
}

pub fn cmd_dot(a: &DumpArgs) -> Result<i32, String> {
    let blocks = load_dump(&a.dump)?;
    let lace = Blocklace::from_blocks(blocks).map_err(|e| e.to_string())?;
    emit(&a.out, &lace.to_dot(&|n: NodeId| n.short()))?;
    Ok(EXIT_OK)
}

/// Human-readable rendering of an example-datatype payload.
pub fn describe_payload(payload: &[u8]) -> String {
    let s = |b: &[u8]| String::from_utf8_lossy(b).into_owned();
    match Op::decode(payload) {
        Ok(Op::Add(e)) => format!("add({})", s(&e)),
        Ok(Op::Remove(e, ids)) => format!("remove({}, {} adds)", s(&e), ids.len()),
        Ok(Op::Register(n)) => format!("register({})", s(&n)),
        Err(_) => format!("raw({})", hex::encode(payload)),
    }
}

pub fn cmd_polog(a: &PologArgs) -> Result<i32, String> {
    let blocks = load_dump(&a.dump.dump)?;
    let lace = Blocklace::from_blocks(blocks).map_err(|e| e.to_string())?;
    let log = crate::detect::polog(&lace, a.dump.mode.into(), a.dump.validity.predicate());
    let mut out = String::new();
    if a.orset {
        for e in orset_query(&log) {
            let _ = writeln!(out, "{}", String::from_utf8_lossy(&e));
        }
    } else {
        for b in log.linearize() {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                b.id().to_hex(),
                b.creator().short(),
                log.predecessors(&b.id()).count(),
                describe_payload(b.payload())
            );
        }
    }
    emit(&a.dump.out, &out)?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::keygen;

    #[test]
    fn check_flags_dangling_and_equivocation() {
        let (q, p) = (keygen(b"q").1, keygen(b"p").1);
        let g = Arc::new(Block::create(&p, vec![], vec![]).unwrap());
        let a = Arc::new(Block::create(&q, vec![1], vec![g.id()]).unwrap());
        let b = Arc::new(Block::create(&q, vec![2], vec![g.id()]).unwrap());
        let (text, ok) = check_report(vec![a.clone()], Mode::Repelling, Arc::new(AlwaysValid));
        assert!(!ok && text.contains("closed: no"));
        let (text, ok) = check_report(vec![g, a, b], Mode::Repelling, Arc::new(AlwaysValid));
        assert!(ok, "{text}");
        assert!(text.contains(&format!("equivocators: [{}]", q.node_id().to_hex())));
    }

    #[test]
    fn payload_descriptions() {
        assert_eq!(describe_payload(&Op::Add(b"x".to_vec()).encode()), "add(x)");
        assert_eq!(describe_payload(&[0xff]), "raw(ff)");
    }
}
