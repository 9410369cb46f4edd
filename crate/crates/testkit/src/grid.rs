//! Dijkstra directly over the weeding state space: robot cell, set of
//! cleared targets, and whatever bookkeeping a foil constraint needs. No
//! PDDL is involved.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use num_rational::Rational64;
use num_traits::Zero;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GridAction {
    Move(usize, usize),
    Weed(usize),
}

impl GridAction {
    pub fn from_label(label: &str) -> Option<Self> {
        let inner = label.trim().strip_prefix('(')?.strip_suffix(')')?;
        let words: Vec<&str> = inner.split_whitespace().collect();
        let cell = |w: &str| w.strip_prefix('c')?.parse().ok();
        match words.as_slice() {
            ["move", a, b] => Some(GridAction::Move(cell(a)?, cell(b)?)),
            ["weed", c] => Some(GridAction::Weed(cell(c)?)),
            _ => None,
        }
    }

    pub fn label(self) -> String {
        match self {
            GridAction::Move(a, b) => format!("(move c{a} c{b})"),
            GridAction::Weed(c) => format!("(weed c{c})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridInstance {
    pub width: usize,
    pub height: usize,
    pub blocked: BTreeSet<usize>,
    pub home: usize,
    pub targets: Vec<usize>,
    pub move_cost: Rational64,
    pub weed_cost: Rational64,
    pub return_home: bool,
}

/// Constraints layered on top of the plain instance.
#[derive(Debug, Clone, Default)]
pub struct GridQuery {
    pub forbidden: BTreeSet<GridAction>,
    /// Each must occur at least once.
    pub required: Vec<GridAction>,
    /// `(a, b)`: `b` may only occur after some occurrence of `a`.
    pub before: Vec<(GridAction, GridAction)>,
    /// Targets removed from the goal; they stay weedy and may still be weeded.
    pub dropped: BTreeSet<usize>,
    /// The robot must finish on this cell.
    pub end_at: Option<usize>,
}

impl GridInstance {
    pub fn neighbors(&self, c: usize) -> Vec<usize> {
        let (r, col) = (c / self.width, c % self.width);
        let mut out = Vec::new();
        if r > 0 {
            out.push(c - self.width);
        }
        if col > 0 {
            out.push(c - 1);
        }
        if col + 1 < self.width {
            out.push(c + 1);
        }
        if r + 1 < self.height {
            out.push(c + self.width);
        }
        out.retain(|n| !self.blocked.contains(n));
        out
    }

    pub fn optimal_cost(&self) -> Option<Rational64> {
        self.solve(&GridQuery::default()).map(|(c, _)| c)
    }

    /// Minimum cost and one optimal action sequence under `query`.
    pub fn solve(&self, query: &GridQuery) -> Option<(Rational64, Vec<GridAction>)> {
        assert!(self.targets.len() <= 20, "mask oracle supports at most 20 targets");
        let tracked: Vec<GridAction> = query
            .required
            .iter()
            .copied()
            .chain(query.before.iter().map(|&(a, _)| a))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        assert!(tracked.len() <= 16);
        let flag = |a: GridAction| tracked.iter().position(|&t| t == a);
        let goal_mask: u32 = self
            .targets
            .iter()
            .enumerate()
            .filter(|(_, t)| !query.dropped.contains(t))
            .fold(0, |m, (i, _)| m | (1 << i));
        let required_flags: u32 = query
            .required
            .iter()
            .fold(0, |m, &a| m | (1 << flag(a).unwrap()));

        type Key = (usize, u32, u32);
        let start: Key = (self.home, 0, 0);
        let mut dist: HashMap<Key, Rational64> = HashMap::from([(start, Rational64::zero())]);
        let mut parent: HashMap<Key, (Key, GridAction)> = HashMap::new();
        let mut heap = BinaryHeap::from([Reverse((Rational64::zero(), start))]);
        while let Some(Reverse((d, key))) = heap.pop() {
            if dist.get(&key).is_some_and(|&best| best < d) {
                continue;
            }
            let (cell, mask, flags) = key;
            if mask & goal_mask == goal_mask
                && flags & required_flags == required_flags
                && (!self.return_home || cell == self.home)
                && query.end_at.is_none_or(|e| e == cell)
            {
                let mut steps = Vec::new();
                let mut at = key;
                while let Some(&(prev, a)) = parent.get(&at) {
                    steps.push(a);
                    at = prev;
                }
                steps.reverse();
                return Some((d, steps));
            }
            let mut options: Vec<(GridAction, Key, Rational64)> = self
                .neighbors(cell)
                .into_iter()
                .map(|n| (GridAction::Move(cell, n), (n, mask, flags), self.move_cost))
                .collect();
            if let Some(i) = self.targets.iter().position(|&t| t == cell) {
                if mask & (1 << i) == 0 {
                    options.push((GridAction::Weed(cell), (cell, mask | (1 << i), flags), self.weed_cost));
                }
            }
            for (action, mut next, cost) in options {
                if query.forbidden.contains(&action) {
                    continue;
                }
                if query
                    .before
                    .iter()
                    .any(|&(a, b)| b == action && flags & (1 << flag(a).unwrap()) == 0)
                {
                    continue;
                }
                if let Some(f) = flag(action) {
                    next.2 |= 1 << f;
                }
                let nd = d + cost;
                if dist.get(&next).is_none_or(|&old| nd < old) {
                    dist.insert(next, nd);
                    parent.insert(next, (key, action));
                    heap.push(Reverse((nd, next)));
                }
            }
        }
        None
    }
}
