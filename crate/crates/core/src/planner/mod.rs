//! Weeding problem compilation and forward heuristic search.

mod compile;
mod heuristic;
mod search;

use std::sync::atomic::AtomicBool;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use compile::{
    build_task, cell_object, compile_problem, parse_cell_object, weeding_domain, CompileError,
    WeedingProblemConfig, CELL_TYPE, DOMAIN_NAME, MOVE_COST, WEED_COST,
};

use crate::pddl::{apply, FactLiteral, GroundedTask, Plan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// A* with h_max; returns a minimum-cost plan.
    Optimal,
    /// Greedy best-first with h_add.
    #[default]
    Satisficing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub mode: SearchMode,
    /// Maximum number of expanded nodes.
    pub node_limit: u64,
    #[serde(with = "duration_ms")]
    pub time_limit: Duration,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            mode: SearchMode::default(),
            node_limit: 2_000_000,
            time_limit: Duration::from_secs(30),
        }
    }
}

impl SearchConfig {
    pub fn optimal() -> Self {
        SearchConfig {
            mode: SearchMode::Optimal,
            ..Default::default()
        }
    }

    pub fn satisficing() -> Self {
        SearchConfig {
            mode: SearchMode::Satisficing,
            ..Default::default()
        }
    }
}

mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis().min(u64::MAX as u128) as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limit {
    Nodes,
    Time,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("goal is unreachable")]
    NoPlan,
    #[error("search stopped at the {limit:?} limit")]
    ResourceLimit { limit: Limit },
    #[error("search was cancelled")]
    Cancelled,
    #[error("action costs are too fine-grained to scale to integers")]
    CostOverflow,
    #[error("prefix step {step} is not applicable")]
    InvalidPrefix { step: usize, unsatisfied: Vec<FactLiteral> },
    #[error("search limits must be positive")]
    InvalidConfig,
}

pub fn plan(task: &GroundedTask, cfg: &SearchConfig) -> Result<Plan, PlanError> {
    plan_with_cancel(task, cfg, None)
}

/// [`plan`] that polls `cancel` and gives up with [`PlanError::Cancelled`].
pub fn plan_with_cancel(
    task: &GroundedTask,
    cfg: &SearchConfig,
    cancel: Option<&AtomicBool>,
) -> Result<Plan, PlanError> {
    if cfg.node_limit == 0 || cfg.time_limit.is_zero() {
        return Err(PlanError::InvalidConfig);
    }
    search::search(task, task.init(), cfg, cancel)
}

/// Plan the rest of a mission after `prefix` has been executed. The returned
/// plan holds only the continuation.
pub fn replan_from(task: &GroundedTask, prefix: &Plan, cfg: &SearchConfig) -> Result<Plan, PlanError> {
    if cfg.node_limit == 0 || cfg.time_limit.is_zero() {
        return Err(PlanError::InvalidConfig);
    }
    let mut state = task.init().clone();
    for (step, &id) in prefix.steps().iter().enumerate() {
        let action = task.action(id).ok_or(PlanError::InvalidPrefix {
            step,
            unsatisfied: Vec::new(),
        })?;
        let unsatisfied = task.unsatisfied(action, &state);
        if !unsatisfied.is_empty() {
            return Err(PlanError::InvalidPrefix { step, unsatisfied });
        }
        state = apply(action, &state);
    }
    search::search(task, &state, cfg, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldModel, TargetSet, Threshold, WeedMap};
    use crate::pddl::validate_plan;
    use crate::rational::Cost;
    use std::collections::BTreeSet;

    fn line_task(targets: &[usize], return_home: bool) -> GroundedTask {
        let field = FieldModel::open(WeedMap::uniform(3, 1, 0.0).unwrap());
        let targets = TargetSet {
            threshold: Threshold::default(),
            targets: targets.iter().copied().collect::<BTreeSet<_>>(),
        };
        let cfg = WeedingProblemConfig {
            require_return_home: return_home,
            ..Default::default()
        };
        build_task(&field, &targets, &cfg).unwrap()
    }

    #[test]
    fn one_by_three() {
        let task = line_task(&[2], false);
        for cfg in [SearchConfig::optimal(), SearchConfig::satisficing()] {
            let p = plan(&task, &cfg).unwrap();
            assert_eq!(p.labels(&task), ["(move c0 c1)", "(move c1 c2)", "(weed c2)"]);
            assert_eq!(p.total_cost(), Cost::from_integer(3));
            assert!(validate_plan(&task, &p).unwrap().is_valid());
        }
        let back = line_task(&[2], true);
        assert_eq!(plan(&back, &SearchConfig::optimal()).unwrap().total_cost(), Cost::from_integer(5));
    }

    #[test]
    fn trivial_goal_gives_empty_plan() {
        let task = line_task(&[], false);
        assert!(plan(&task, &SearchConfig::optimal()).unwrap().is_empty());
    }

    #[test]
    fn replanning() {
        let task = line_task(&[0, 2], false);
        let cfg = SearchConfig::optimal();
        let full = plan(&task, &cfg).unwrap();
        assert_eq!(replan_from(&task, &Plan::empty(), &cfg).unwrap(), full);
        assert!(replan_from(&task, &full, &cfg).unwrap().is_empty());
        let bad = Plan::from_labels(&task, &["(weed c2)"]).unwrap();
        assert!(matches!(replan_from(&task, &bad, &cfg), Err(PlanError::InvalidPrefix { step: 0, .. })));
    }

    #[test]
    fn limits() {
        let task = line_task(&[0, 2], false);
        let cfg = SearchConfig {
            node_limit: 1,
            ..SearchConfig::optimal()
        };
        assert_eq!(plan(&task, &cfg), Err(PlanError::ResourceLimit { limit: Limit::Nodes }));
        let cancel = AtomicBool::new(true);
        let field = FieldModel::open(WeedMap::uniform(20, 20, 1.0).unwrap());
        let all = crate::field::select_targets(&field, Threshold::default());
        let big = build_task(&field, &all, &Default::default()).unwrap();
        assert_eq!(
            plan_with_cancel(&big, &SearchConfig::optimal(), Some(&cancel)),
            Err(PlanError::Cancelled)
        );
    }
}
