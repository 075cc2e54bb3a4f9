//! Seeded scenario generators for randomized runs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detect::Mode;
use crate::sim::scenario::{Assertion, Behavior, DelayModel, NodeSpec, Scenario};

fn node(name: String, behavior: Behavior) -> NodeSpec {
    NodeSpec {
        name,
        behavior,
        period: None,
        offset: None,
    }
}

/// A random spanning tree over `names` plus each other pair with
/// probability `extra`.
fn connected_edges(rng: &mut ChaCha8Rng, names: &[String], extra: f64) -> Vec<(String, String)> {
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for k in 1..order.len() {
        let j = order[rng.random_range(0..k)];
        edges.push((names[j].clone(), names[order[k]].clone()));
    }
    for a in 0..names.len() {
        for b in a + 1..names.len() {
            let present = edges
                .iter()
                .any(|(x, y)| (x == &names[a] && y == &names[b]) || (x == &names[b] && y == &names[a]));
            if !present && rng.random_bool(extra) {
                edges.push((names[a].clone(), names[b].clone()));
            }
        }
    }
    edges
}

fn sample(rng: &mut ChaCha8Rng, names: &[String], k: usize) -> Vec<String> {
    let mut v = names.to_vec();
    v.shuffle(rng);
    v.truncate(k);
    v
}

/// Blocks the production schedule creates, acknowledgments excluded.
pub fn scheduled_blocks(sc: &Scenario) -> u64 {
    (0..sc.nodes.len())
        .map(|i| {
            let (p, o) = (sc.period_of(i), sc.offset_of(i));
            if sc.production_stop <= o {
                0
            } else {
                (sc.production_stop - o).div_ceil(p)
            }
        })
        .sum()
}

/// All-correct run: 2 to 8 nodes, a random connected topology and at most
/// `max_blocks` scheduled blocks.
pub fn honest(seed: u64, max_blocks: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=8usize);
    let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let period = rng.random_range(1..=n as u64);
    let per_node = rng.random_range(1..=(max_blocks / n as u64).max(1));
    let extra = rng.random_range(0.0..0.6);
    let edges = connected_edges(&mut rng, &names, extra);
    let mut sc = Scenario {
        name: format!("honest-{seed}"),
        seed,
        max_steps: 0,
        production_stop: per_node * period,
        settle_step: None,
        mode: Mode::Repelling,
        validity: Default::default(),
        delay: DelayModel::Bounded {
            max_delay: rng.random_range(1..=5),
        },
        period,
        sync_interval: rng.random_range(1..=6),
        edges: Some(edges),
        nodes: names.iter().map(|nm| node(nm.clone(), Behavior::Correct)).collect(),
        assertions: vec![
            Assertion::Axioms,
            Assertion::EventualVisibility,
            Assertion::Convergence,
            Assertion::NoFalseAccusations,
        ],
    };
    while scheduled_blocks(&sc) > max_blocks {
        sc.production_stop -= 1;
    }
    sc.max_steps = sc.production_stop + 300;
    sc
}

/// Four correct nodes and one two-way equivocator `q` forking at a random
/// step, complete graph, 500-step budget.
pub fn scripted_equivocation(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let production_stop = 150;
    let mut nodes: Vec<NodeSpec> = (0..4).map(|i| node(format!("n{i}"), Behavior::Correct)).collect();
    nodes.push(node(
        "q".into(),
        Behavior::Equivocator {
            forks: 2,
            fork_step: rng.random_range(0..production_stop - 10),
        },
    ));
    Scenario {
        name: format!("equivocation-{seed}"),
        seed,
        max_steps: 500,
        production_stop,
        settle_step: None,
        mode: Mode::Repelling,
        validity: Default::default(),
        delay: DelayModel::Bounded {
            max_delay: rng.random_range(1..=4),
        },
        period: 5,
        sync_interval: 5,
        edges: None,
        nodes,
        assertions: vec![
            Assertion::Equivocators {
                expected: vec!["q".into()],
            },
            Assertion::NoFalseAccusations,
            Assertion::EventualVisibility,
            Assertion::Convergence,
        ],
    }
}

/// Three to six correct nodes on a random connected graph, one or two
/// equivocators and one or two droppers attached to random correct nodes.
pub fn mixed(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = rng.random_range(3..=6usize);
    let e = rng.random_range(1..=2usize);
    let d = rng.random_range(1..=2usize);
    let correct: Vec<String> = (0..c).map(|i| format!("n{i}")).collect();
    let extra = rng.random_range(0.0..0.5);
    let mut edges = connected_edges(&mut rng, &correct, extra);
    let period = rng.random_range(2..=6u64);
    let production_stop = period * rng.random_range(8..=25u64);
    let mut nodes: Vec<NodeSpec> = correct.iter().map(|n| node(n.clone(), Behavior::Correct)).collect();
    for k in 0..e {
        let name = format!("q{k}");
        let forks = rng.random_range(2..=c.min(3));
        // One correct neighbour per fork, so every branch reaches someone.
        let deg = rng.random_range(forks..=c);
        for peer in sample(&mut rng, &correct, deg) {
            edges.push((name.clone(), peer));
        }
        let fork_step = rng.random_range(0..production_stop - 2 * period);
        nodes.push(node(name, Behavior::Equivocator { forks, fork_step }));
    }
    for k in 0..d {
        let name = format!("d{k}");
        let deg = rng.random_range(1..=c);
        for peer in sample(&mut rng, &correct, deg) {
            edges.push((name.clone(), peer));
        }
        nodes.push(node(name, Behavior::Dropper));
    }
    Scenario {
        name: format!("mixed-{seed}"),
        seed,
        max_steps: production_stop + 1000,
        production_stop,
        settle_step: None,
        mode: Mode::Repelling,
        validity: Default::default(),
        delay: DelayModel::Bounded {
            max_delay: rng.random_range(1..=5),
        },
        period,
        sync_interval: rng.random_range(2..=6),
        edges: Some(edges),
        nodes,
        assertions: vec![
            Assertion::EventualVisibility,
            Assertion::Convergence,
            Assertion::ByzantineConvergence { expected: None },
            Assertion::NoFalseAccusations,
            Assertion::BrepInvariant,
            Assertion::Axioms,
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_valid_and_deterministic() {
        for seed in 0..50 {
            let h = honest(seed, 200);
            h.validate().unwrap();
            assert!(scheduled_blocks(&h) <= 200 && h.nodes.len() <= 8);
            assert_eq!(h, honest(seed, 200));
            scripted_equivocation(seed).validate().unwrap();
            let m = mixed(seed);
            m.validate().unwrap();
            assert_eq!(m.detectable().len(), m.nodes.iter().filter(|n| n.name.starts_with('q')).count());
        }
    }
}
