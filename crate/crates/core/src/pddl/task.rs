use std::collections::HashMap;
use std::fmt;

use num_traits::Zero;

use super::ast::GroundAtom;
use crate::rational::{format_rational, Cost};

pub type FactId = u32;
pub type ActionId = usize;

/// A set of fluent facts, kept sorted.
///
/// Facts that hold in every reachable state are not stored; ask the task
/// ([`GroundedTask::holds`]) rather than the state when that matters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct State(Box<[FactId]>);

impl State {
    pub fn from_facts(facts: impl IntoIterator<Item = FactId>) -> Self {
        let mut v: Vec<FactId> = facts.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        State(v.into_boxed_slice())
    }

    pub fn contains(&self, fact: FactId) -> bool {
        self.0.binary_search(&fact).is_ok()
    }

    pub fn facts(&self) -> &[FactId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A fully instantiated action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundAction {
    pub schema: String,
    pub args: Vec<String>,
    pub pre: Vec<FactId>,
    pub pre_neg: Vec<FactId>,
    pub add: Vec<FactId>,
    pub del: Vec<FactId>,
    pub cost: Cost,
    label: String,
}

impl GroundAction {
    pub fn new(
        schema: String,
        args: Vec<String>,
        pre: Vec<FactId>,
        pre_neg: Vec<FactId>,
        add: Vec<FactId>,
        del: Vec<FactId>,
        cost: Cost,
    ) -> Self {
        let label = GroundAtom::new(schema.clone(), args.iter().cloned()).to_string();
        let sorted = |mut v: Vec<FactId>| {
            v.sort_unstable();
            v.dedup();
            v
        };
        GroundAction {
            schema,
            args,
            pre: sorted(pre),
            pre_neg: sorted(pre_neg),
            add: sorted(add),
            del: sorted(del),
            cost,
            label,
        }
    }

    pub(crate) fn add_effect(&mut self, fact: FactId) {
        if let Err(at) = self.add.binary_search(&fact) {
            self.add.insert(at, fact);
        }
    }

    pub(crate) fn add_precondition(&mut self, fact: FactId) {
        if let Err(at) = self.pre.binary_search(&fact) {
            self.pre.insert(at, fact);
        }
    }

    /// Canonical `(name arg...)` form, also the plan-file syntax.
    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// A literal over a task fact, used in validation reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FactLiteral {
    pub fact: FactId,
    pub positive: bool,
}

/// A propositional planning task with exact action costs.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundedTask {
    facts: Vec<GroundAtom>,
    fact_ids: HashMap<GroundAtom, FactId>,
    /// Facts true initially that no action deletes; excluded from states.
    always_true: Vec<bool>,
    actions: Vec<GroundAction>,
    action_ids: HashMap<String, ActionId>,
    init: State,
    goal: Vec<FactId>,
    /// Facts added by foil compilation rather than by grounding.
    markers: Vec<FactId>,
}

impl GroundedTask {
    /// Assemble a task. `always_true` must be indexed by fact id.
    pub(crate) fn from_parts(
        facts: Vec<GroundAtom>,
        always_true: Vec<bool>,
        actions: Vec<GroundAction>,
        init: State,
        goal: Vec<FactId>,
    ) -> Self {
        let fact_ids = facts
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i as FactId))
            .collect();
        let mut goal = goal;
        goal.sort_unstable();
        goal.dedup();
        let mut task = GroundedTask {
            facts,
            fact_ids,
            always_true,
            actions,
            action_ids: HashMap::new(),
            init,
            goal,
            markers: Vec::new(),
        };
        task.reindex_actions();
        task
    }

    fn reindex_actions(&mut self) {
        self.action_ids = self
            .actions
            .iter()
            .enumerate()
            .map(|(i, a)| (a.label.clone(), i))
            .collect();
    }

    pub fn facts(&self) -> &[GroundAtom] {
        &self.facts
    }

    pub fn fact(&self, id: FactId) -> &GroundAtom {
        &self.facts[id as usize]
    }

    pub fn fact_id(&self, atom: &GroundAtom) -> Option<FactId> {
        self.fact_ids.get(atom).copied()
    }

    pub fn actions(&self) -> &[GroundAction] {
        &self.actions
    }

    pub fn action(&self, id: ActionId) -> Option<&GroundAction> {
        self.actions.get(id)
    }

    /// Look an action up by its `(name arg...)` label, case-insensitively.
    pub fn action_id(&self, label: &str) -> Option<ActionId> {
        if let Some(&id) = self.action_ids.get(label) {
            return Some(id);
        }
        let atom = GroundAtom::parse(label)?;
        self.action_ids.get(&atom.to_string()).copied()
    }

    pub fn init(&self) -> &State {
        &self.init
    }

    pub fn goal(&self) -> &[FactId] {
        &self.goal
    }

    pub fn is_always_true(&self, fact: FactId) -> bool {
        self.always_true.get(fact as usize).copied().unwrap_or(false)
    }

    pub fn holds(&self, state: &State, fact: FactId) -> bool {
        self.is_always_true(fact) || state.contains(fact)
    }

    pub fn is_applicable(&self, action: &GroundAction, state: &State) -> bool {
        action.pre.iter().all(|&f| self.holds(state, f))
            && action.pre_neg.iter().all(|&f| !self.holds(state, f))
    }

    /// Precondition literals of `action` that fail in `state`.
    pub fn unsatisfied(&self, action: &GroundAction, state: &State) -> Vec<FactLiteral> {
        let pos = action
            .pre
            .iter()
            .filter(|&&f| !self.holds(state, f))
            .map(|&fact| FactLiteral { fact, positive: true });
        let neg = action
            .pre_neg
            .iter()
            .filter(|&&f| self.holds(state, f))
            .map(|&fact| FactLiteral { fact, positive: false });
        pos.chain(neg).collect()
    }

    pub fn is_goal(&self, state: &State) -> bool {
        self.goal.iter().all(|&g| self.holds(state, g))
    }

    pub fn missing_goals(&self, state: &State) -> Vec<FactId> {
        self.goal
            .iter()
            .copied()
            .filter(|&g| !self.holds(state, g))
            .collect()
    }

    pub fn render_literal(&self, lit: FactLiteral) -> String {
        if lit.positive {
            self.fact(lit.fact).to_string()
        } else {
            format!("(not {})", self.fact(lit.fact))
        }
    }

    pub(crate) fn set_goal(&mut self, mut goal: Vec<FactId>) {
        goal.sort_unstable();
        goal.dedup();
        self.goal = goal;
    }

    /// Intern a bookkeeping fact introduced by a task transformation.
    pub(crate) fn intern_marker(&mut self, atom: GroundAtom) -> FactId {
        if let Some(id) = self.fact_id(&atom) {
            return id;
        }
        let id = self.facts.len() as FactId;
        self.fact_ids.insert(atom.clone(), id);
        self.facts.push(atom);
        self.always_true.push(false);
        self.markers.push(id);
        id
    }

    pub fn is_marker(&self, atom: &GroundAtom) -> bool {
        self.fact_id(atom).is_some_and(|id| self.markers.contains(&id))
    }

    pub(crate) fn action_mut(&mut self, id: ActionId) -> &mut GroundAction {
        &mut self.actions[id]
    }

    pub(crate) fn remove_action(&mut self, id: ActionId) -> GroundAction {
        let removed = self.actions.remove(id);
        self.reindex_actions();
        removed
    }
}

/// Progress a state through one action: `(s \ del(a)) ∪ add(a)`.
///
/// This is the only implementation of the transition; search, validation and
/// the session draft all go through it.
pub fn apply(action: &GroundAction, state: &State) -> State {
    let mut out = Vec::with_capacity(state.len() + action.add.len());
    let (facts, add, del) = (state.facts(), &action.add, &action.del);
    let (mut i, mut j) = (0, 0);
    while i < facts.len() || j < add.len() {
        let next = match (facts.get(i), add.get(j)) {
            (Some(&f), Some(&a)) if f == a => {
                i += 1;
                j += 1;
                out.push(f);
                continue;
            }
            (Some(&f), Some(&a)) if f < a => {
                i += 1;
                f
            }
            (Some(_), Some(&a)) => {
                j += 1;
                out.push(a);
                continue;
            }
            (Some(&f), None) => {
                i += 1;
                f
            }
            (None, Some(&a)) => {
                j += 1;
                out.push(a);
                continue;
            }
            (None, None) => unreachable!(),
        };
        if del.binary_search(&next).is_err() {
            out.push(next);
        }
    }
    State(out.into_boxed_slice())
}

/// An ordered sequence of actions of one task.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Plan {
    steps: Vec<ActionId>,
    total_cost: Cost,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanFileError {
    #[error("step {step}: {label} is not an action of this task")]
    ForeignAction { step: usize, label: String },
}

impl Plan {
    pub fn empty() -> Self {
        Plan::default()
    }

    /// Build a plan, summing step costs. Fails on ids outside the task.
    pub fn new(task: &GroundedTask, steps: Vec<ActionId>) -> Result<Self, PlanFileError> {
        let mut total = Cost::zero();
        for (step, &id) in steps.iter().enumerate() {
            let action = task.action(id).ok_or(PlanFileError::ForeignAction {
                step,
                label: format!("#{id}"),
            })?;
            total += action.cost;
        }
        Ok(Plan {
            steps,
            total_cost: total,
        })
    }

    pub fn from_labels<S: AsRef<str>>(task: &GroundedTask, labels: &[S]) -> Result<Self, PlanFileError> {
        let steps = labels
            .iter()
            .enumerate()
            .map(|(step, l)| {
                task.action_id(l.as_ref()).ok_or_else(|| PlanFileError::ForeignAction {
                    step,
                    label: l.as_ref().to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Plan::new(task, steps)
    }

    /// Read a VAL-style plan: one `(action obj...)` per line, `;` comments,
    /// optional `N:` step prefixes and `[duration]` suffixes.
    pub fn parse(task: &GroundedTask, text: &str) -> Result<Self, PlanFileError> {
        let labels: Vec<String> = text
            .lines()
            .map(|l| l.split(';').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| {
                let l = match l.find('(') {
                    Some(start) => &l[start..],
                    None => l,
                };
                match l.find(')') {
                    Some(end) => l[..=end].to_string(),
                    None => l.to_string(),
                }
            })
            .collect();
        Plan::from_labels(task, &labels)
    }

    pub fn steps(&self) -> &[ActionId] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_cost(&self) -> Cost {
        self.total_cost
    }

    pub fn labels<'t>(&self, task: &'t GroundedTask) -> Vec<&'t str> {
        self.steps.iter().map(|&id| task.actions[id].label()).collect()
    }

    /// First `n` steps as a plan of its own.
    pub fn prefix(&self, task: &GroundedTask, n: usize) -> Plan {
        Plan::new(task, self.steps[..n.min(self.steps.len())].to_vec())
            .expect("prefix of a plan refers to the same task")
    }

    pub fn concat(&self, task: &GroundedTask, rest: &Plan) -> Plan {
        let mut steps = self.steps.clone();
        steps.extend_from_slice(&rest.steps);
        Plan::new(task, steps).expect("both plans refer to the same task")
    }

    pub fn to_text(&self, task: &GroundedTask) -> String {
        let mut out = String::new();
        for label in self.labels(task) {
            out.push_str(label);
            out.push('\n');
        }
        out.push_str(&format!("; cost = {} (general cost)\n", format_rational(&self.total_cost)));
        out
    }
}
