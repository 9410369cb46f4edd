//! Contrastive challenges: "why this plan and not one where ...?"
//!
//! A query is compiled into a constrained copy of the task, the planner is
//! run on it, and the two plans are compared step by step.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::pddl::{validate_plan, FactId, GroundAtom, GroundedTask, Plan, PlanFileError};
use crate::planner::{plan, PlanError, SearchConfig};
use crate::rational::{serde_cost, Cost};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContrastiveQuery {
    ForbidAction { action: String },
    RequireAction { action: String },
    /// `first` must happen before any occurrence of `then`.
    OrderBefore { first: String, then: String },
    AddGoal { literal: String },
    DropGoal { literal: String },
}

impl ContrastiveQuery {
    /// Parse the foil expression syntax:
    ///
    /// ```text
    /// forbid (move c1 c2)
    /// require (weed c4)
    /// order (weed c2) before (move c0 c1)
    /// add-goal (cleared c4)
    /// drop-goal (cleared c4)
    /// ```
    pub fn parse(text: &str) -> Result<Self, ExplainError> {
        let text = text.trim();
        let bad = || ExplainError::Syntax(text.to_string());
        let (head, rest) = text.split_once(char::is_whitespace).ok_or_else(bad)?;
        let atom = |s: &str| {
            let s = s.trim();
            if !s.starts_with('(') {
                return Err(bad());
            }
            GroundAtom::parse(s).map(|a| a.to_string()).ok_or_else(bad)
        };
        Ok(match head.to_ascii_lowercase().as_str() {
            "forbid" => ContrastiveQuery::ForbidAction { action: atom(rest)? },
            "require" => ContrastiveQuery::RequireAction { action: atom(rest)? },
            "add-goal" => ContrastiveQuery::AddGoal { literal: atom(rest)? },
            "drop-goal" => ContrastiveQuery::DropGoal { literal: atom(rest)? },
            "order" => {
                let lower = rest.to_ascii_lowercase();
                let at = lower.find(")").ok_or_else(bad)? + 1;
                let (first, tail) = rest.split_at(at);
                let then = tail.trim_start().strip_prefix("before").ok_or_else(bad)?;
                ContrastiveQuery::OrderBefore {
                    first: atom(first)?,
                    then: atom(then)?,
                }
            }
            _ => return Err(bad()),
        })
    }

    /// Whether the foil can only make the problem harder.
    pub fn is_constraining(&self) -> bool {
        !matches!(self, ContrastiveQuery::DropGoal { .. })
    }
}

impl fmt::Display for ContrastiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContrastiveQuery::ForbidAction { action } => write!(f, "forbid {action}"),
            ContrastiveQuery::RequireAction { action } => write!(f, "require {action}"),
            ContrastiveQuery::OrderBefore { first, then } => write!(f, "order {first} before {then}"),
            ContrastiveQuery::AddGoal { literal } => write!(f, "add-goal {literal}"),
            ContrastiveQuery::DropGoal { literal } => write!(f, "drop-goal {literal}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExplainError {
    #[error("cannot read foil {0:?}")]
    Syntax(String),
    #[error("{label} is not an action of this task")]
    UnknownAction { label: String },
    #[error("{literal} is not a fact of this task")]
    UnknownLiteral { literal: String },
    #[error("{literal} is not part of the goal")]
    NotInGoal { literal: String },
    #[error("the plan being challenged does not validate")]
    InvalidOriginal,
    #[error(transparent)]
    ForeignAction(#[from] PlanFileError),
    #[error("foil search failed: {0}")]
    FoilSearch(PlanError),
}

fn action_id(task: &GroundedTask, label: &str) -> Result<usize, ExplainError> {
    task.action_id(label).ok_or_else(|| ExplainError::UnknownAction {
        label: label.to_string(),
    })
}

fn literal_id(task: &GroundedTask, text: &str) -> Result<FactId, ExplainError> {
    GroundAtom::parse(text)
        .and_then(|a| task.fact_id(&a))
        .ok_or_else(|| ExplainError::UnknownLiteral {
            literal: text.to_string(),
        })
}

/// A bookkeeping atom named after `action`, distinct from every fact the
/// task already has under another meaning.
fn marker(task: &mut GroundedTask, prefix: &str, label: &str) -> FactId {
    let action = GroundAtom::parse(label).expect("labels are atoms");
    let mut name = format!("{prefix}-{}", action.predicate);
    // A clash with a domain predicate of the same name gets a numeric suffix.
    let mut n = 0;
    while task
        .facts()
        .iter()
        .any(|f| f.predicate == name && !task.is_marker(f))
    {
        n += 1;
        name = format!("{prefix}{n}-{}", action.predicate);
    }
    task.intern_marker(GroundAtom::new(name, action.args))
}

/// A constrained copy of `task`; the input is left untouched. Queries apply
/// in order, so a drop followed by an add of the same goal is the identity.
pub fn compile_foil(task: &GroundedTask, queries: &[ContrastiveQuery]) -> Result<GroundedTask, ExplainError> {
    let mut foil = task.clone();
    for q in queries {
        match q {
            ContrastiveQuery::ForbidAction { action } => {
                let id = action_id(&foil, action)?;
                foil.remove_action(id);
            }
            ContrastiveQuery::RequireAction { action } => {
                let id = action_id(&foil, action)?;
                let label = foil.actions()[id].label().to_string();
                let executed = marker(&mut foil, "executed", &label);
                foil.action_mut(id).add_effect(executed);
                let mut goal = foil.goal().to_vec();
                goal.push(executed);
                foil.set_goal(goal);
            }
            ContrastiveQuery::OrderBefore { first, then } => {
                let a = action_id(&foil, first)?;
                let b = action_id(&foil, then)?;
                let label = foil.actions()[a].label().to_string();
                let done = marker(&mut foil, "done", &label);
                foil.action_mut(a).add_effect(done);
                foil.action_mut(b).add_precondition(done);
            }
            ContrastiveQuery::AddGoal { literal } => {
                let fact = literal_id(&foil, literal)?;
                let mut goal = foil.goal().to_vec();
                goal.push(fact);
                foil.set_goal(goal);
            }
            ContrastiveQuery::DropGoal { literal } => {
                let fact = literal_id(&foil, literal)?;
                if !foil.goal().contains(&fact) {
                    return Err(ExplainError::NotInGoal {
                        literal: literal.clone(),
                    });
                }
                let goal = foil.goal().iter().copied().filter(|&g| g != fact).collect();
                foil.set_goal(goal);
            }
        }
    }
    Ok(foil)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", content = "step", rename_all = "snake_case")]
pub enum DiffEntry {
    Kept(String),
    Removed(String),
    Added(String),
}

/// Align two step sequences by longest common subsequence.
pub fn diff_steps<S: AsRef<str>>(original: &[S], foil: &[S]) -> Vec<DiffEntry> {
    let a: Vec<&str> = original.iter().map(AsRef::as_ref).collect();
    let b: Vec<&str> = foil.iter().map(AsRef::as_ref).collect();
    let prefix = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let suffix = a[prefix..]
        .iter()
        .rev()
        .zip(b[prefix..].iter().rev())
        .take_while(|(x, y)| x == y)
        .count();
    let (ma, mb) = (&a[prefix..a.len() - suffix], &b[prefix..b.len() - suffix]);

    let mut out: Vec<DiffEntry> = a[..prefix].iter().map(|s| DiffEntry::Kept(s.to_string())).collect();
    // lcs[i][j] = LCS length of ma[i..] and mb[j..]
    let w = mb.len() + 1;
    let mut lcs = vec![0u32; (ma.len() + 1) * w];
    for i in (0..ma.len()).rev() {
        for j in (0..mb.len()).rev() {
            lcs[i * w + j] = if ma[i] == mb[j] {
                lcs[(i + 1) * w + j + 1] + 1
            } else {
                lcs[(i + 1) * w + j].max(lcs[i * w + j + 1])
            };
        }
    }
    let (mut i, mut j) = (0, 0);
    while i < ma.len() || j < mb.len() {
        if i < ma.len() && j < mb.len() && ma[i] == mb[j] {
            out.push(DiffEntry::Kept(ma[i].to_string()));
            i += 1;
            j += 1;
        } else if i < ma.len() && (j == mb.len() || lcs[(i + 1) * w + j] >= lcs[i * w + j + 1]) {
            out.push(DiffEntry::Removed(ma[i].to_string()));
            i += 1;
        } else {
            out.push(DiffEntry::Added(mb[j].to_string()));
            j += 1;
        }
    }
    out.extend(a[a.len() - suffix..].iter().map(|s| DiffEntry::Kept(s.to_string())));
    out
}

/// Replay a diff against the sequence it was computed from.
pub fn apply_diff<S: AsRef<str>>(original: &[S], diff: &[DiffEntry]) -> Option<Vec<String>> {
    let mut rest = original.iter().map(AsRef::as_ref);
    let mut out = Vec::new();
    for entry in diff {
        match entry {
            DiffEntry::Kept(s) => {
                if rest.next()? != s {
                    return None;
                }
                out.push(s.clone());
            }
            DiffEntry::Removed(s) => {
                if rest.next()? != s {
                    return None;
                }
            }
            DiffEntry::Added(s) => out.push(s.clone()),
        }
    }
    rest.next().is_none().then_some(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FoilResult {
    ContrastivePlan {
        steps: Vec<String>,
        #[serde(with = "serde_cost")]
        cost: Cost,
        #[serde(with = "serde_cost")]
        cost_delta: Cost,
    },
    FoilInfeasible { reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Explanation {
    pub queries: Vec<ContrastiveQuery>,
    pub original_steps: Vec<String>,
    #[serde(with = "serde_cost")]
    pub original_cost: Cost,
    pub foil: FoilResult,
    /// Empty when the foil is infeasible.
    pub diff: Vec<DiffEntry>,
    /// The compiled task and the foil plan on it, kept so the foil can be
    /// adopted and executed as-is.
    #[serde(skip)]
    pub compiled: Option<(Arc<GroundedTask>, Plan)>,
}

impl Explanation {
    pub fn is_feasible(&self) -> bool {
        matches!(self.foil, FoilResult::ContrastivePlan { .. })
    }

    pub fn cost_delta(&self) -> Option<Cost> {
        match &self.foil {
            FoilResult::ContrastivePlan { cost_delta, .. } => Some(*cost_delta),
            FoilResult::FoilInfeasible { .. } => None,
        }
    }

    /// `true` when the foil plan is step-for-step the original.
    pub fn is_identity(&self) -> bool {
        self.is_feasible() && self.diff.iter().all(|d| matches!(d, DiffEntry::Kept(_)))
    }
}

impl PartialEq for Explanation {
    fn eq(&self, other: &Self) -> bool {
        self.queries == other.queries
            && self.original_steps == other.original_steps
            && self.original_cost == other.original_cost
            && self.foil == other.foil
            && self.diff == other.diff
    }
}

pub fn explain(
    task: &GroundedTask,
    original: &Plan,
    queries: &[ContrastiveQuery],
    search: &SearchConfig,
) -> Result<Explanation, ExplainError> {
    if !validate_plan(task, original)?.is_valid() {
        return Err(ExplainError::InvalidOriginal);
    }
    let foil_task = compile_foil(task, queries)?;
    let original_steps: Vec<String> = original.labels(task).into_iter().map(String::from).collect();
    let base = Explanation {
        queries: queries.to_vec(),
        original_steps,
        original_cost: original.total_cost(),
        foil: FoilResult::FoilInfeasible { reason: String::new() },
        diff: Vec::new(),
        compiled: None,
    };
    match plan(&foil_task, search) {
        Ok(found) => {
            // Satisficing search can come back worse than the original even
            // when the original already meets the foil.
            let foil_plan = match Plan::from_labels(&foil_task, &base.original_steps) {
                Ok(p)
                    if p.total_cost() < found.total_cost()
                        && validate_plan(&foil_task, &p).is_ok_and(|r| r.is_valid()) =>
                {
                    p
                }
                _ => found,
            };
            let steps: Vec<String> = foil_plan.labels(&foil_task).into_iter().map(String::from).collect();
            let diff = diff_steps(&base.original_steps, &steps);
            Ok(Explanation {
                foil: FoilResult::ContrastivePlan {
                    cost: foil_plan.total_cost(),
                    cost_delta: foil_plan.total_cost() - original.total_cost(),
                    steps,
                },
                diff,
                compiled: Some((Arc::new(foil_task), foil_plan)),
                ..base
            })
        }
        Err(PlanError::NoPlan) => Ok(Explanation {
            foil: FoilResult::FoilInfeasible {
                reason: format!("no plan satisfies the foil: {}", PlanError::NoPlan),
            },
            ..base
        }),
        Err(e) => Err(ExplainError::FoilSearch(e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldModel, TargetSet, Threshold, WeedMap};
    use crate::planner::build_task;

    fn line() -> (GroundedTask, Plan) {
        let field = FieldModel::open(WeedMap::uniform(3, 1, 0.0).unwrap());
        let targets = TargetSet {
            threshold: Threshold::default(),
            targets: [2].into(),
        };
        let task = build_task(&field, &targets, &Default::default()).unwrap();
        let p = plan(&task, &SearchConfig::optimal()).unwrap();
        (task, p)
    }

    #[test]
    fn parse_foils() {
        let q = ContrastiveQuery::parse("order (Weed c2) before (move c0 c1)").unwrap();
        assert_eq!(
            q,
            ContrastiveQuery::OrderBefore {
                first: "(weed c2)".into(),
                then: "(move c0 c1)".into()
            }
        );
        assert_eq!(ContrastiveQuery::parse(&q.to_string()).unwrap(), q);
        assert!(ContrastiveQuery::parse("forbid").is_err());
        assert!(ContrastiveQuery::parse("maybe (weed c1)").is_err());
        let json = serde_json::to_string(&ContrastiveQuery::ForbidAction { action: "(weed c1)".into() }).unwrap();
        assert_eq!(json, r#"{"kind":"forbid_action","action":"(weed c1)"}"#);
    }

    #[test]
    fn only_achiever_forbidden() {
        let (task, p) = line();
        let q = [ContrastiveQuery::ForbidAction { action: "(weed c2)".into() }];
        let e = explain(&task, &p, &q, &SearchConfig::optimal()).unwrap();
        assert!(matches!(e.foil, FoilResult::FoilInfeasible { .. }));
        assert_eq!(task.actions().len(), compile_foil(&task, &[]).unwrap().actions().len());
    }

    #[test]
    fn impossible_order() {
        let (task, p) = line();
        let q = [ContrastiveQuery::parse("order (weed c2) before (move c0 c1)").unwrap()];
        let e = explain(&task, &p, &q, &SearchConfig::optimal()).unwrap();
        assert!(!e.is_feasible());
    }

    #[test]
    fn satisficing_foil_never_worse_than_a_compliant_original() {
        let field = FieldModel::open(WeedMap::new(3, 2, 1.0, (0.0, 0.0), vec![0.1, 0.8, 0.2, 0.0, 0.6, 0.9]).unwrap());
        let targets = crate::field::select_targets(&field, Threshold::default());
        let task = build_task(&field, &targets, &Default::default()).unwrap();
        let p = plan(&task, &SearchConfig::optimal()).unwrap();
        let q = [ContrastiveQuery::parse("forbid (move c1 c2)").unwrap()];
        let e = explain(&task, &p, &q, &SearchConfig::satisficing()).unwrap();
        assert_eq!(e.cost_delta(), Some(Cost::from_integer(0)));
    }

    #[test]
    fn drop_then_add_is_identity() {
        let (task, p) = line();
        let q = [
            ContrastiveQuery::DropGoal { literal: "(cleared c2)".into() },
            ContrastiveQuery::AddGoal { literal: "(cleared c2)".into() },
        ];
        let e = explain(&task, &p, &q, &SearchConfig::optimal()).unwrap();
        assert_eq!(e.cost_delta(), Some(Cost::from_integer(0)));
        assert!(e.is_identity());
    }

    #[test]
    fn require_detour() {
        let (task, p) = line();
        let q = [ContrastiveQuery::RequireAction { action: "(move c1 c0)".into() }];
        let e = explain(&task, &p, &q, &SearchConfig::optimal()).unwrap();
        assert_eq!(e.cost_delta(), Some(Cost::from_integer(2)));
        let (foil_task, foil_plan) = e.compiled.as_ref().unwrap();
        assert!(validate_plan(foil_task, foil_plan).unwrap().is_valid());
        assert_eq!(apply_diff(&e.original_steps, &e.diff).unwrap(), foil_plan.labels(foil_task));
    }

    #[test]
    fn query_errors() {
        let (task, p) = line();
        let run = |q: ContrastiveQuery| explain(&task, &p, &[q], &SearchConfig::optimal()).unwrap_err();
        assert!(matches!(run(ContrastiveQuery::ForbidAction { action: "(fly c0)".into() }), ExplainError::UnknownAction { .. }));
        assert!(matches!(run(ContrastiveQuery::AddGoal { literal: "(cleared c1)".into() }), ExplainError::UnknownLiteral { .. }));
        assert!(matches!(run(ContrastiveQuery::DropGoal { literal: "(at c0)".into() }), ExplainError::NotInGoal { .. }));
    }

    #[test]
    fn diff_alignment() {
        let a = ["a", "b", "c", "d"];
        let b = ["a", "x", "c", "d", "e"];
        let d = diff_steps(&a, &b);
        assert_eq!(
            d,
            vec![
                DiffEntry::Kept("a".into()),
                DiffEntry::Removed("b".into()),
                DiffEntry::Added("x".into()),
                DiffEntry::Kept("c".into()),
                DiffEntry::Kept("d".into()),
                DiffEntry::Added("e".into()),
            ]
        );
        assert_eq!(apply_diff(&a, &d).unwrap(), b);
        assert_eq!(apply_diff(&["a"], &d), None);
    }
}
