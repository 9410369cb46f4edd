use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use num_integer::Integer;
use num_traits::ToPrimitive;

use super::heuristic::{Relaxation, RelaxedHeuristic, INFINITE};
use super::{Limit, PlanError, SearchConfig, SearchMode};
use crate::pddl::{apply, ActionId, GroundedTask, Plan, State};

/// Scale every action cost by the LCM of their denominators so search can
/// run on integers without losing exactness.
pub(crate) fn integer_costs(task: &GroundedTask) -> Result<Vec<u64>, PlanError> {
    let mut lcm: i64 = 1;
    for a in task.actions() {
        lcm = lcm.lcm(a.cost.denom());
        if lcm > (1 << 40) {
            return Err(PlanError::CostOverflow);
        }
    }
    task.actions()
        .iter()
        .map(|a| {
            (a.cost * lcm)
                .to_integer()
                .to_u64()
                .filter(|&c| c < (1 << 48))
                .ok_or(PlanError::CostOverflow)
        })
        .collect()
}

/// Successor enumeration in ascending action order.
struct Successors {
    /// Actions keyed by one of their fluent preconditions.
    by_key: Vec<Vec<ActionId>>,
    unkeyed: Vec<ActionId>,
    scratch: Vec<ActionId>,
}

impl Successors {
    fn new(task: &GroundedTask) -> Self {
        let mut by_key = vec![Vec::new(); task.facts().len()];
        let mut unkeyed = Vec::new();
        for (i, a) in task.actions().iter().enumerate() {
            match a.pre.iter().find(|&&f| !task.is_always_true(f)) {
                Some(&f) => by_key[f as usize].push(i),
                None => unkeyed.push(i),
            }
        }
        Successors {
            by_key,
            unkeyed,
            scratch: Vec::new(),
        }
    }

    fn applicable(&mut self, task: &GroundedTask, state: &State) -> &[ActionId] {
        self.scratch.clear();
        self.scratch.extend_from_slice(&self.unkeyed);
        for &f in state.facts() {
            self.scratch.extend_from_slice(&self.by_key[f as usize]);
        }
        self.scratch.sort_unstable();
        self.scratch.retain(|&a| task.is_applicable(&task.actions()[a], state));
        &self.scratch
    }
}

const DEAD_END: usize = usize::MAX;

struct Node {
    state: State,
    parent: Option<(usize, ActionId)>,
    g: u64,
}

fn extract(task: &GroundedTask, nodes: &[Node], mut at: usize) -> Plan {
    let mut steps = Vec::new();
    while let Some((parent, action)) = nodes[at].parent {
        steps.push(action);
        at = parent;
    }
    steps.reverse();
    Plan::new(task, steps).expect("search only emits task actions")
}

pub(crate) fn search(
    task: &GroundedTask,
    start: &State,
    cfg: &SearchConfig,
    cancel: Option<&AtomicBool>,
) -> Result<Plan, PlanError> {
    let costs = integer_costs(task)?;
    let relaxation = match cfg.mode {
        SearchMode::Optimal => Relaxation::Max,
        SearchMode::Satisficing => Relaxation::Add,
    };
    let mut h = RelaxedHeuristic::new(task, &costs, relaxation);
    let mut succ = Successors::new(task);
    let started = Instant::now();

    let h0 = h.eval(start);
    if h0 == INFINITE {
        return Err(PlanError::NoPlan);
    }
    let mut nodes = vec![Node {
        state: start.clone(),
        parent: None,
        g: 0,
    }];
    // Best known g per state, mapping to the node that holds it.
    let mut best: HashMap<State, usize> = HashMap::from([(start.clone(), 0)]);
    // (primary key, insertion sequence, node)
    let mut open: BinaryHeap<Reverse<(u64, u64, usize)>> = BinaryHeap::new();
    let mut seq = 0u64;
    let key = |g: u64, hv: u64| match cfg.mode {
        SearchMode::Optimal => g.saturating_add(hv),
        SearchMode::Satisficing => hv,
    };
    open.push(Reverse((key(0, h0), seq, 0)));
    let mut expanded = 0u64;
    let mut closed = vec![false];

    while let Some(Reverse((_, _, id))) = open.pop() {
        if closed[id] {
            continue;
        }
        closed[id] = true;
        if task.is_goal(&nodes[id].state) {
            tracing::debug!(expanded, generated = nodes.len(), "plan found");
            return Ok(extract(task, &nodes, id));
        }
        expanded += 1;
        if expanded > cfg.node_limit {
            return Err(PlanError::ResourceLimit { limit: Limit::Nodes });
        }
        if expanded % 256 == 0 {
            if started.elapsed() > cfg.time_limit {
                return Err(PlanError::ResourceLimit { limit: Limit::Time });
            }
            if cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
                return Err(PlanError::Cancelled);
            }
        }
        let state = nodes[id].state.clone();
        let g = nodes[id].g;
        let applicable: Vec<ActionId> = succ.applicable(task, &state).to_vec();
        for a in applicable {
            let next = apply(&task.actions()[a], &state);
            let ng = g.saturating_add(costs[a]);
            let child = nodes.len();
            match best.entry(next) {
                Entry::Occupied(mut e) => {
                    let old = *e.get();
                    // Greedy search never reopens; A* reopens on strictly better g.
                    if old == DEAD_END || cfg.mode == SearchMode::Satisficing || nodes[old].g <= ng {
                        continue;
                    }
                    closed[old] = true;
                    e.insert(child);
                    let hv = h.eval(e.key());
                    nodes.push(Node {
                        state: e.key().clone(),
                        parent: Some((id, a)),
                        g: ng,
                    });
                    closed.push(false);
                    seq += 1;
                    open.push(Reverse((key(ng, hv), seq, child)));
                }
                Entry::Vacant(e) => {
                    let hv = h.eval(e.key());
                    if hv == INFINITE {
                        e.insert(DEAD_END);
                        continue;
                    }
                    nodes.push(Node {
                        state: e.key().clone(),
                        parent: Some((id, a)),
                        g: ng,
                    });
                    closed.push(false);
                    e.insert(child);
                    seq += 1;
                    open.push(Reverse((key(ng, hv), seq, child)));
                }
            }
        }
    }
    Err(PlanError::NoPlan)
}
