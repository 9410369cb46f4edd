//! Delete-relaxation heuristics over integer-scaled costs.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::pddl::{FactId, GroundedTask, State};

pub(crate) const INFINITE: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Relaxation {
    /// Costliest single goal: admissible.
    Max,
    /// Sum over goals: informative, not admissible.
    Add,
}

/// h_max / h_add evaluator with reusable scratch buffers.
pub(crate) struct RelaxedHeuristic<'t> {
    task: &'t GroundedTask,
    kind: Relaxation,
    costs: &'t [u64],
    /// Number of positive preconditions of each action.
    pre_count: Vec<u32>,
    /// Actions having a fact as positive precondition.
    consumers: Vec<Vec<u32>>,
    no_pre: Vec<u32>,
    is_goal: Vec<bool>,
    dist: Vec<u64>,
    remaining: Vec<u32>,
    acc: Vec<u64>,
    heap: BinaryHeap<Reverse<(u64, FactId)>>,
}

impl<'t> RelaxedHeuristic<'t> {
    pub(crate) fn new(task: &'t GroundedTask, costs: &'t [u64], kind: Relaxation) -> Self {
        let n = task.facts().len();
        let mut consumers = vec![Vec::new(); n];
        let mut no_pre = Vec::new();
        let mut pre_count = Vec::with_capacity(task.actions().len());
        for (i, a) in task.actions().iter().enumerate() {
            let pre: Vec<FactId> = a.pre.iter().copied().filter(|&f| !task.is_always_true(f)).collect();
            for &f in &pre {
                consumers[f as usize].push(i as u32);
            }
            if pre.is_empty() {
                no_pre.push(i as u32);
            }
            pre_count.push(pre.len() as u32);
        }
        let mut is_goal = vec![false; n];
        for &g in task.goal() {
            is_goal[g as usize] = true;
        }
        RelaxedHeuristic {
            task,
            kind,
            costs,
            pre_count,
            consumers,
            no_pre,
            is_goal,
            dist: vec![INFINITE; n],
            remaining: Vec::new(),
            acc: Vec::new(),
            heap: BinaryHeap::new(),
        }
    }

    fn combine(&self, a: u64, b: u64) -> u64 {
        match self.kind {
            Relaxation::Max => a.max(b),
            Relaxation::Add => a.saturating_add(b),
        }
    }

    /// Heuristic value of `state`, or [`INFINITE`] for a relaxed dead end.
    pub(crate) fn eval(&mut self, state: &State) -> u64 {
        let task = self.task;
        self.dist.fill(INFINITE);
        self.remaining.clear();
        self.remaining.extend_from_slice(&self.pre_count);
        self.acc.clear();
        self.acc.resize(self.pre_count.len(), 0);
        self.heap.clear();

        let mut open_goals = 0usize;
        for &g in task.goal() {
            if !task.holds(state, g) {
                open_goals += 1;
            }
        }
        if open_goals == 0 {
            return 0;
        }
        for &f in state.facts() {
            self.dist[f as usize] = 0;
            self.heap.push(Reverse((0, f)));
        }
        for i in 0..self.no_pre.len() {
            let a = self.no_pre[i] as usize;
            self.achieve(a, 0);
        }

        let mut goal_total = 0u64;
        while let Some(Reverse((d, f))) = self.heap.pop() {
            if d > self.dist[f as usize] {
                continue;
            }
            if self.is_goal[f as usize] && !task.holds(state, f) {
                goal_total = self.combine(goal_total, d);
                open_goals -= 1;
                if open_goals == 0 {
                    return goal_total;
                }
            }
            for i in 0..self.consumers[f as usize].len() {
                let a = self.consumers[f as usize][i] as usize;
                self.acc[a] = self.combine(self.acc[a], d);
                self.remaining[a] -= 1;
                if self.remaining[a] == 0 {
                    let base = self.acc[a];
                    self.achieve(a, base);
                }
            }
        }
        INFINITE
    }

    fn achieve(&mut self, action: usize, base: u64) {
        let reached = base.saturating_add(self.costs[action]);
        for &f in &self.task.actions()[action].add {
            if reached < self.dist[f as usize] {
                self.dist[f as usize] = reached;
                self.heap.push(Reverse((reached, f)));
            }
        }
    }
}
