//! Uniform-cost search over any grounded task, using its own set-based
//! progression rather than the library's transition function.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use arwac_core::pddl::{FactId, GroundedTask};
use num_rational::Rational64;
use num_traits::Zero;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Solved(Rational64),
    Unsolvable,
    /// More than the allowed number of states were reached.
    TooLarge,
}

fn holds(task: &GroundedTask, state: &BTreeSet<FactId>, f: FactId) -> bool {
    task.is_always_true(f) || state.contains(&f)
}

pub fn optimal_cost(task: &GroundedTask, max_states: usize) -> Outcome {
    let start: BTreeSet<FactId> = task.init().facts().iter().copied().collect();
    let mut dist = HashMap::from([(start.clone(), Rational64::zero())]);
    let mut heap = BinaryHeap::from([Reverse((Rational64::zero(), start))]);
    while let Some(Reverse((d, state))) = heap.pop() {
        if dist.get(&state).is_some_and(|&best| best < d) {
            continue;
        }
        if task.goal().iter().all(|&g| holds(task, &state, g)) {
            return Outcome::Solved(d);
        }
        for a in task.actions() {
            let ok = a.pre.iter().all(|&f| holds(task, &state, f))
                && a.pre_neg.iter().all(|&f| !holds(task, &state, f));
            if !ok {
                continue;
            }
            let mut next: BTreeSet<FactId> = state.difference(&a.del.iter().copied().collect()).copied().collect();
            next.extend(a.add.iter().copied());
            let nd = d + a.cost;
            if dist.get(&next).is_none_or(|&old| nd < old) {
                if dist.len() >= max_states {
                    return Outcome::TooLarge;
                }
                dist.insert(next.clone(), nd);
                heap.push(Reverse((nd, next)));
            }
        }
    }
    Outcome::Unsolvable
}
