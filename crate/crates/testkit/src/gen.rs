//! Seeded random instances.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write;

use arwac_core::field::{FieldModel, RowAxis, TargetSet, Threshold, WeedMap};
use arwac_core::planner::WeedingProblemConfig;
use num_rational::Rational64;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{GridAction, GridInstance};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn reachable(width: usize, height: usize, blocked: &BTreeSet<usize>, home: usize) -> Vec<usize> {
    let probe = GridInstance {
        width,
        height,
        blocked: blocked.clone(),
        home,
        targets: Vec::new(),
        move_cost: Rational64::from_integer(1),
        weed_cost: Rational64::from_integer(1),
        return_home: false,
    };
    let mut seen = BTreeSet::from([home]);
    let mut queue = VecDeque::from([home]);
    while let Some(c) = queue.pop_front() {
        for n in probe.neighbors(c) {
            if seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen.into_iter().collect()
}

/// A random blocked layout on a `width`×`height` grid with an unblocked home.
pub fn random_layout(rng: &mut impl Rng, width: usize, height: usize, blocked_p: f64) -> (BTreeSet<usize>, usize) {
    let cells = width * height;
    let home = rng.random_range(0..cells);
    let blocked = (0..cells)
        .filter(|&c| c != home && rng.random_bool(blocked_p))
        .collect();
    (blocked, home)
}

/// Every cell reachable from home in the layout, home included.
pub fn reachable_cells(width: usize, height: usize, blocked: &BTreeSet<usize>, home: usize) -> Vec<usize> {
    reachable(width, height, blocked, home)
}

fn random_cost(rng: &mut impl Rng) -> Rational64 {
    *[
        Rational64::from_integer(1),
        Rational64::from_integer(1),
        Rational64::from_integer(2),
        Rational64::new(1, 2),
        Rational64::new(3, 2),
        Rational64::from_integer(0),
    ]
    .choose(rng)
    .unwrap()
}

/// A random instance with up to `max_targets` reachable targets.
pub fn random_grid(
    rng: &mut impl Rng,
    width: usize,
    height: usize,
    blocked_p: f64,
    max_targets: usize,
    vary_costs: bool,
) -> GridInstance {
    let (blocked, home) = random_layout(rng, width, height, blocked_p);
    let mut open = reachable(width, height, &blocked, home);
    open.shuffle(rng);
    let k = rng.random_range(0..=max_targets.min(open.len()));
    let mut targets: Vec<usize> = open[..k].to_vec();
    targets.sort_unstable();
    let (move_cost, weed_cost) = if vary_costs {
        (random_cost(rng), random_cost(rng))
    } else {
        (Rational64::from_integer(1), Rational64::from_integer(1))
    };
    GridInstance {
        width,
        height,
        blocked,
        home,
        targets,
        move_cost,
        weed_cost,
        return_home: vary_costs && rng.random_bool(0.3),
    }
}

pub fn to_field(g: &GridInstance) -> (FieldModel, TargetSet, WeedingProblemConfig) {
    let mut probs = vec![0.0; g.width * g.height];
    for &t in &g.targets {
        probs[t] = 1.0;
    }
    let map = WeedMap::new(g.width, g.height, 1.0, (0.0, 0.0), probs).expect("valid map");
    let field = FieldModel::new(map, RowAxis::ByRow, g.blocked.clone(), g.home).expect("valid field");
    let targets = TargetSet {
        threshold: Threshold::default(),
        targets: g.targets.iter().copied().collect(),
    };
    let cfg = WeedingProblemConfig {
        weed_cost: g.weed_cost,
        move_cost_per_cell: g.move_cost,
        require_return_home: g.return_home,
    };
    (field, targets, cfg)
}

/// Every action that exists in the instance's grounded task.
pub fn grid_actions(g: &GridInstance) -> Vec<GridAction> {
    let mut out = Vec::new();
    for c in reachable(g.width, g.height, &g.blocked, g.home) {
        for n in g.neighbors(c) {
            out.push(GridAction::Move(c, n));
        }
        if g.targets.contains(&c) {
            out.push(GridAction::Weed(c));
        }
    }
    out
}

pub fn random_weed_map(rng: &mut impl Rng, max_side: usize) -> WeedMap {
    let width = rng.random_range(1..=max_side);
    let height = rng.random_range(1..=max_side);
    let probs = (0..width * height)
        .map(|_| match rng.random_range(0..5) {
            0 => 0.0,
            1 => 1.0,
            2 => rng.random_range(0..=8) as f64 / 8.0,
            _ => rng.random::<f64>(),
        })
        .collect();
    let cell_size = [0.25, 0.5, 1.0, 2.5, rng.random_range(0.01..10.0)][rng.random_range(0..5)];
    let origin = (rng.random_range(-1e6..1e6), rng.random_range(-1e6..1e6));
    WeedMap::new(width, height, cell_size, origin, probs).expect("valid map")
}

/// A small random typed STRIPS domain and problem, as PDDL text.
pub fn random_strips(rng: &mut impl Rng) -> (String, String) {
    let n_preds = rng.random_range(1..=4);
    let arities: Vec<usize> = (0..n_preds).map(|_| rng.random_range(0..=2)).collect();
    let mut d = String::from(
        "(define (domain rnd) (:requirements :strips :typing :negative-preconditions :action-costs)\n  (:types item - thing)\n  (:predicates",
    );
    for (i, &ar) in arities.iter().enumerate() {
        write!(d, " (p{i}").unwrap();
        for v in 0..ar {
            write!(d, " ?v{v} - thing").unwrap();
        }
        d.push(')');
    }
    d.push_str(")\n  (:functions (total-cost) - number (unit) - number)\n");
    let n_actions = rng.random_range(1..=4);
    for a in 0..n_actions {
        let params = rng.random_range(0..=2);
        let ptypes: Vec<&str> = (0..params).map(|_| if rng.random_bool(0.5) { "thing" } else { "item" }).collect();
        let lit = |rng: &mut dyn rand::RngCore| {
            let p = rng.random_range(0..n_preds);
            let mut s = format!("(p{p}");
            for _ in 0..arities[p] {
                if params == 0 {
                    return None;
                }
                write!(s, " ?x{}", rng.random_range(0..params)).unwrap();
            }
            s.push(')');
            Some(s)
        };
        let mut pre = Vec::new();
        for _ in 0..rng.random_range(0..=2) {
            if let Some(l) = lit(rng) {
                pre.push(if rng.random_bool(0.25) { format!("(not {l})") } else { l });
            }
        }
        let mut eff = Vec::new();
        for _ in 0..rng.random_range(1..=2) {
            if let Some(l) = lit(rng) {
                eff.push(l);
            }
        }
        for _ in 0..rng.random_range(0..=1) {
            if let Some(l) = lit(rng) {
                eff.push(format!("(not {l})"));
            }
        }
        let cost = match rng.random_range(0..4) {
            0 => "(increase (total-cost) (unit))".to_string(),
            1 => "(increase (total-cost) 1/2)".to_string(),
            _ => format!("(increase (total-cost) {})", rng.random_range(0..=3)),
        };
        eff.push(cost);
        write!(d, "  (:action a{a} :parameters (").unwrap();
        for (i, t) in ptypes.iter().enumerate() {
            write!(d, " ?x{i} - {t}").unwrap();
        }
        writeln!(d, ")\n    :precondition (and {})\n    :effect (and {}))", pre.join(" "), eff.join(" ")).unwrap();
    }
    d.push(')');

    let objects = ["o1", "o2", "o3"];
    let types: Vec<&str> = objects.iter().map(|_| if rng.random_bool(0.6) { "item" } else { "thing" }).collect();
    let mut atoms = Vec::new();
    for (i, &ar) in arities.iter().enumerate() {
        let mut combos: Vec<Vec<&str>> = vec![vec![]];
        for _ in 0..ar {
            combos = combos
                .into_iter()
                .flat_map(|c| objects.iter().map(move |o| [c.clone(), vec![*o]].concat()))
                .collect();
        }
        for c in combos {
            atoms.push(format!("(p{i}{})", c.iter().map(|o| format!(" {o}")).collect::<String>()));
        }
    }
    let init: Vec<&String> = atoms.iter().filter(|_| rng.random_bool(0.3)).collect();
    let goal: Vec<&String> = (0..rng.random_range(1..=2)).map(|_| atoms.choose(rng).unwrap()).collect();
    let mut p = String::from("(define (problem rp) (:domain rnd)\n  (:objects");
    for (o, t) in objects.iter().zip(&types) {
        write!(p, " {o} - {t}").unwrap();
    }
    p.push_str(")\n  (:init");
    for a in init {
        write!(p, " {a}").unwrap();
    }
    writeln!(p, " (= (total-cost) 0) (= (unit) {}))", rng.random_range(0..=2)).unwrap();
    write!(p, "  (:goal (and").unwrap();
    for g in goal {
        write!(p, " {g}").unwrap();
    }
    p.push_str("))\n  (:metric minimize (total-cost)))");
    (d, p)
}

/// Raw bytes of log-uniform length in `[0, max_len]`, biased towards PDDL-ish
/// characters.
pub fn fuzz_bytes(rng: &mut impl Rng, max_len: usize) -> Vec<u8> {
    let len = if rng.random_bool(0.02) {
        max_len
    } else {
        let bits = (max_len as f64).log2();
        (2f64.powf(rng.random_range(0.0..bits)) as usize).min(max_len)
    };
    const ALPHABET: &[u8] = b"()()()  \n:?-abcdefinorstu0123456789;./\"\xff";
    match rng.random_range(0..3) {
        0 => (0..len).map(|_| rng.random()).collect(),
        1 => (0..len).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect(),
        _ => {
            // Deep or ragged nesting.
            let depth = len / 2;
            let mut v = vec![b'('; depth];
            v.extend((0..len - depth).map(|_| if rng.random_bool(0.7) { b')' } else { b'a' }));
            v
        }
    }
}

/// Splice, delete and duplicate regions of a valid text.
pub fn mutate_text(rng: &mut impl Rng, base: &str, max_len: usize) -> Vec<u8> {
    let mut v = base.as_bytes().to_vec();
    for _ in 0..rng.random_range(1..=8) {
        if v.is_empty() {
            break;
        }
        let i = rng.random_range(0..v.len());
        let j = (i + rng.random_range(0..=16)).min(v.len());
        match rng.random_range(0..4) {
            0 => {
                v.drain(i..j);
            }
            1 => {
                let chunk: Vec<u8> = v[i..j].to_vec();
                let times = rng.random_range(1..=64);
                for _ in 0..times {
                    if v.len() + chunk.len() > max_len {
                        break;
                    }
                    v.splice(i..i, chunk.iter().copied());
                }
            }
            2 => v[i] = [b'(', b')', b'?', b'-', b':', b' ', b'x', b'1'][rng.random_range(0..8)],
            _ => v.truncate(i),
        }
    }
    v.truncate(max_len);
    v
}
