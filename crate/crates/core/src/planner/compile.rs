//! Field + targets to a weeding planning problem.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::field::{CellIndex, FieldModel, TargetSet};
use crate::pddl::ast::*;
use crate::pddl::{ground, GroundError, GroundedTask};
use crate::rational::{serde_cost, Cost};

pub const DOMAIN_NAME: &str = "weeding";
pub const CELL_TYPE: &str = "cell";
pub const MOVE_COST: &str = "move-cost";
pub const WEED_COST: &str = "weed-cost";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeedingProblemConfig {
    #[serde(with = "serde_cost")]
    pub weed_cost: Cost,
    #[serde(with = "serde_cost")]
    pub move_cost_per_cell: Cost,
    pub require_return_home: bool,
}

impl Default for WeedingProblemConfig {
    fn default() -> Self {
        WeedingProblemConfig {
            weed_cost: Cost::from_integer(1),
            move_cost_per_cell: Cost::from_integer(1),
            require_return_home: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompileError {
    #[error("target cell {cell} cannot be reached from home")]
    TargetUnreachable { cell: CellIndex },
    #[error("target cell {cell} is blocked or outside the field")]
    InvalidTarget { cell: CellIndex },
    #[error("negative action cost in problem configuration")]
    NegativeCost,
    #[error(transparent)]
    Ground(#[from] GroundError),
}

/// PDDL object name of a cell.
pub fn cell_object(cell: CellIndex) -> String {
    format!("c{cell}")
}

pub fn parse_cell_object(name: &str) -> Option<CellIndex> {
    let digits = name.strip_prefix('c')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || (digits.len() > 1 && digits.starts_with('0')) {
        return None;
    }
    digits.parse().ok()
}

fn fluent(name: &str) -> AtomExpr {
    AtomExpr::lifted(name, &[])
}

/// The fixed weeding domain; costs come from problem-level fluents.
pub fn weeding_domain() -> DomainAst {
    let cell = |v: &str| TypedParam::new(v, CELL_TYPE);
    let lit = |positive, pred: &str, vars: &[&str]| Literal {
        positive,
        atom: AtomExpr::lifted(pred, vars),
    };
    let pred = |name: &str, vars: &[&str]| PredicateDecl {
        name: name.into(),
        params: vars.iter().map(|v| cell(v)).collect(),
        span: Span::default(),
    };
    DomainAst {
        name: DOMAIN_NAME.into(),
        requirements: vec![Requirement::Strips, Requirement::Typing, Requirement::ActionCosts],
        types: vec![TypeDecl {
            name: CELL_TYPE.into(),
            parent: ROOT_TYPE.into(),
        }],
        predicates: vec![
            pred("at", &["c"]),
            pred("weedy", &["c"]),
            pred("cleared", &["c"]),
            pred("adjacent", &["from", "to"]),
        ],
        functions: [TOTAL_COST, MOVE_COST, WEED_COST]
            .iter()
            .map(|&name| FunctionDecl {
                name: name.into(),
                params: Vec::new(),
            })
            .collect(),
        actions: vec![
            ActionSchema {
                name: "move".into(),
                params: vec![cell("from"), cell("to")],
                precondition: vec![lit(true, "at", &["from"]), lit(true, "adjacent", &["from", "to"])],
                add: vec![AtomExpr::lifted("at", &["to"])],
                delete: vec![AtomExpr::lifted("at", &["from"])],
                cost: Some(CostExpr::Fluent(fluent(MOVE_COST))),
                span: Span::default(),
            },
            ActionSchema {
                name: "weed".into(),
                params: vec![cell("c")],
                precondition: vec![lit(true, "at", &["c"]), lit(true, "weedy", &["c"])],
                add: vec![AtomExpr::lifted("cleared", &["c"])],
                delete: vec![AtomExpr::lifted("weedy", &["c"])],
                cost: Some(CostExpr::Fluent(fluent(WEED_COST))),
                span: Span::default(),
            },
        ],
    }
}

/// Encode the field as a problem over [`weeding_domain`]. Blocked cells get
/// no object at all.
pub fn compile_problem(
    field: &FieldModel,
    targets: &TargetSet,
    cfg: &WeedingProblemConfig,
) -> Result<(DomainAst, ProblemAst), CompileError> {
    if cfg.weed_cost < Cost::zero() || cfg.move_cost_per_cell < Cost::zero() {
        return Err(CompileError::NegativeCost);
    }
    let cells = field.map().len();
    if let Some(&cell) = targets
        .targets
        .iter()
        .find(|&&c| c >= cells || field.is_blocked(c))
    {
        return Err(CompileError::InvalidTarget { cell });
    }
    let reachable = field.reachable_from_home();
    if let Some(&cell) = targets.targets.iter().find(|c| !reachable.contains(c)) {
        return Err(CompileError::TargetUnreachable { cell });
    }

    let open: Vec<CellIndex> = (0..cells).filter(|&c| !field.is_blocked(c)).collect();
    let objects = open
        .iter()
        .map(|&c| ObjectDecl {
            name: cell_object(c),
            ty: CELL_TYPE.into(),
        })
        .collect();
    let mut init = vec![GroundAtom::new("at", [cell_object(field.home())])];
    for &t in &targets.targets {
        init.push(GroundAtom::new("weedy", [cell_object(t)]));
    }
    for &c in &open {
        for n in field.open_neighbors(c) {
            init.push(GroundAtom::new("adjacent", [cell_object(c), cell_object(n)]));
        }
    }
    let fluents = vec![
        FluentInit {
            fluent: GroundAtom::new(TOTAL_COST, Vec::<String>::new()),
            value: Cost::zero(),
        },
        FluentInit {
            fluent: GroundAtom::new(MOVE_COST, Vec::<String>::new()),
            value: cfg.move_cost_per_cell,
        },
        FluentInit {
            fluent: GroundAtom::new(WEED_COST, Vec::<String>::new()),
            value: cfg.weed_cost,
        },
    ];
    let mut goal: Vec<GroundAtom> = targets
        .targets
        .iter()
        .map(|&t| GroundAtom::new("cleared", [cell_object(t)]))
        .collect();
    if cfg.require_return_home {
        goal.push(GroundAtom::new("at", [cell_object(field.home())]));
    }
    let w = field.map().width();
    let h = field.map().height();
    let problem = ProblemAst {
        name: format!("field-{w}x{h}"),
        domain_name: DOMAIN_NAME.into(),
        objects,
        init,
        fluents,
        goal,
        minimize_total_cost: true,
    };
    Ok((weeding_domain(), problem))
}

/// [`compile_problem`] followed by grounding.
pub fn build_task(
    field: &FieldModel,
    targets: &TargetSet,
    cfg: &WeedingProblemConfig,
) -> Result<GroundedTask, CompileError> {
    let (domain, problem) = compile_problem(field, targets, cfg)?;
    Ok(ground(&domain, &problem)?)
}
