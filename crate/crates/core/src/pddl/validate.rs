use num_traits::Zero;

use super::task::{apply, FactId, FactLiteral, GroundedTask, Plan, PlanFileError, State};
use crate::rational::Cost;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InvalidReason {
    UnsatisfiedPreconditions(Vec<FactLiteral>),
    MissingGoals(Vec<FactId>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationReport {
    Valid { final_state: State, total_cost: Cost },
    /// `failing_step` is the index of the offending step, or the plan length
    /// when every step applied but the goal was not reached.
    Invalid { failing_step: usize, reason: InvalidReason },
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        matches!(self, ValidationReport::Valid { .. })
    }
}

/// Replay `plan` from the initial state by STRIPS progression.
pub fn validate_plan(task: &GroundedTask, plan: &Plan) -> Result<ValidationReport, PlanFileError> {
    validate_from(task, task.init(), plan)
}

pub(crate) fn validate_from(
    task: &GroundedTask,
    start: &State,
    plan: &Plan,
) -> Result<ValidationReport, PlanFileError> {
    let mut state = start.clone();
    let mut total = Cost::zero();
    for (step, &id) in plan.steps().iter().enumerate() {
        let action = task.action(id).ok_or_else(|| PlanFileError::ForeignAction {
            step,
            label: format!("#{id}"),
        })?;
        let unsatisfied = task.unsatisfied(action, &state);
        if !unsatisfied.is_empty() {
            return Ok(ValidationReport::Invalid {
                failing_step: step,
                reason: InvalidReason::UnsatisfiedPreconditions(unsatisfied),
            });
        }
        state = apply(action, &state);
        total += action.cost;
    }
    let missing = task.missing_goals(&state);
    if !missing.is_empty() {
        return Ok(ValidationReport::Invalid {
            failing_step: plan.len(),
            reason: InvalidReason::MissingGoals(missing),
        });
    }
    Ok(ValidationReport::Valid {
        final_state: state,
        total_cost: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pddl::{ground, parse_domain, parse_problem, GroundAtom};

    const DOMAIN: &str = "(define (domain d) (:requirements :strips :typing :action-costs) (:types cell)
        (:predicates (at ?c - cell) (adj ?a ?b - cell) (clean ?c - cell))
        (:functions (total-cost) - number)
        (:action move :parameters (?a ?b - cell) :precondition (and (at ?a) (adj ?a ?b))
          :effect (and (not (at ?a)) (at ?b) (increase (total-cost) 1)))
        (:action wipe :parameters (?c - cell) :precondition (and (at ?c) (not (clean ?c)))
          :effect (and (clean ?c) (increase (total-cost) 2))))";

    fn task(goal: &str) -> GroundedTask {
        let d = parse_domain(DOMAIN).unwrap();
        let p = parse_problem(
            &format!("(define (problem p) (:domain d) (:objects a b - cell) (:init (at a) (adj a b) (adj b a)) (:goal (and {goal})))"),
            &d,
        )
        .unwrap();
        ground(&d, &p).unwrap()
    }

    #[test]
    fn empty_plan() {
        let t = task("(at a)");
        let r = validate_plan(&t, &Plan::empty()).unwrap();
        assert!(matches!(r, ValidationReport::Valid { total_cost, .. } if total_cost == Cost::zero()));

        let t = task("(at b)");
        let r = validate_plan(&t, &Plan::empty()).unwrap();
        let at_b = t.fact_id(&GroundAtom::new("at", ["b"])).unwrap();
        assert_eq!(
            r,
            ValidationReport::Invalid {
                failing_step: 0,
                reason: InvalidReason::MissingGoals(vec![at_b])
            }
        );
    }

    #[test]
    fn reports_first_failing_step() {
        let t = task("(clean b)");
        let plan = Plan::from_labels(&t, &["(wipe b)", "(move a b)"]).unwrap();
        match validate_plan(&t, &plan).unwrap() {
            ValidationReport::Invalid {
                failing_step: 0,
                reason: InvalidReason::UnsatisfiedPreconditions(lits),
            } => {
                let rendered: Vec<_> = lits.iter().map(|&l| t.render_literal(l)).collect();
                assert_eq!(rendered, ["(at b)"]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let plan = Plan::from_labels(&t, &["(move a b)", "(wipe b)", "(wipe b)"]).unwrap();
        match validate_plan(&t, &plan).unwrap() {
            ValidationReport::Invalid {
                failing_step: 2,
                reason: InvalidReason::UnsatisfiedPreconditions(lits),
            } => assert_eq!(t.render_literal(lits[0]), "(not (clean b))"),
            other => panic!("unexpected {other:?}"),
        }
        let plan = Plan::from_labels(&t, &["(MOVE a B)", "(wipe b)"]).unwrap();
        let r = validate_plan(&t, &plan).unwrap();
        assert_eq!(r, validate_plan(&t, &plan).unwrap());
        assert!(matches!(r, ValidationReport::Valid { total_cost, .. } if total_cost == Cost::from_integer(3)));
    }

    #[test]
    fn foreign_labels_and_plan_files() {
        let t = task("(at b)");
        assert!(matches!(
            Plan::from_labels(&t, &["(move b b)"]),
            Err(PlanFileError::ForeignAction { step: 0, .. })
        ));
        let plan = Plan::parse(&t, "; plan\n0: (move a b) [1]\n\n").unwrap();
        assert_eq!(plan.labels(&t), ["(move a b)"]);
        let text = plan.to_text(&t);
        assert_eq!(Plan::parse(&t, &text).unwrap(), plan);
    }
}
