//! The trust-level session: who authors the plan, what needs a human
//! decision, and when the robot may move.
//!
//! Transition table (any pair not listed is rejected with `IllegalPhase`):
//!
//! | event                        | trust   | from                              | to                    |
//! |------------------------------|---------|-----------------------------------|-----------------------|
//! | set_trust, load_map, set_threshold, edit_cell | any | Idle, Done, Aborted   | Idle                  |
//! | append_action                | Low     | Idle, Drafting                    | Drafting              |
//! | undo_last                    | Low     | Drafting                          | Drafting              |
//! | commit_draft                 | Low     | Drafting                          | Committed             |
//! | propose                      | Partial | Idle                              | Proposed              |
//! | challenge                    | Partial | Proposed, Challenging             | Challenging           |
//! | resolve accept / adopt_foil  | Partial | Proposed, Challenging             | Committed             |
//! | resolve reject               | Partial | Proposed, Challenging             | Idle                  |
//! | start                        | Low, Partial | Committed                    | Executing             |
//! | start                        | Full    | Idle                              | Executing             |
//! | pause                        | any     | Executing                         | Paused                |
//! | resume                       | any     | Paused                            | Executing             |
//! | tick                         | any     | Executing                         | Executing, Done       |
//! | abort                        | any     | Drafting, Proposed, Challenging, Committed, Executing, Paused | Aborted |

mod log;

use std::fmt;
use std::sync::Arc;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

pub use log::{read_log, replay, write_log_line, LogRecord, SessionLogError};

use crate::explain::{explain, ContrastiveQuery, ExplainError, Explanation};
use crate::field::{select_targets, CellIndex, FieldError, FieldModel, TargetSet, Threshold, WeedMap};
use crate::pddl::{apply, validate_plan, ActionId, GroundedTask, Plan, State, ValidationReport};
use crate::planner::{build_task, plan, CompileError, PlanError, SearchConfig, WeedingProblemConfig};
use crate::rational::{serde_cost, Cost};
use crate::sim::{MissionMetrics, RobotConfig, SimError, SimStatus, Simulator, StepEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustLevel {
    /// The operator composes the plan action by action.
    #[default]
    LowTrust,
    /// The robot proposes; the operator challenges, then accepts or rejects.
    PartialTrust,
    /// The robot plans and executes without approval.
    FullTrust,
}

impl TrustLevel {
    pub const ALL: [TrustLevel; 3] = [TrustLevel::LowTrust, TrustLevel::PartialTrust, TrustLevel::FullTrust];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Drafting,
    Proposed,
    Challenging,
    Committed,
    Executing,
    Paused,
    Done,
    Aborted,
}

impl Phase {
    pub const ALL: [Phase; 9] = [
        Phase::Idle,
        Phase::Drafting,
        Phase::Proposed,
        Phase::Challenging,
        Phase::Committed,
        Phase::Executing,
        Phase::Paused,
        Phase::Done,
        Phase::Aborted,
    ];

    fn is_rest(self) -> bool {
        matches!(self, Phase::Idle | Phase::Done | Phase::Aborted)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("phase serializes");
        f.write_str(s.as_str().expect("unit variant"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Accept,
    AdoptFoil { index: usize },
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    SetTrust { level: TrustLevel },
    AppendAction { action: String },
    UndoLast,
    CommitDraft {
        #[serde(default)]
        partial: bool,
    },
    Propose {
        #[serde(default)]
        search: Option<SearchConfig>,
    },
    Challenge { queries: Vec<ContrastiveQuery> },
    Resolve { decision: Decision },
    Start,
    Pause,
    Resume,
    Abort,
    Tick,
    LoadMap { map: WeedMap },
    SetThreshold { threshold: Threshold },
    EditCell { cell: CellIndex, probability: f64 },
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::SetTrust { .. } => "set_trust",
            Event::AppendAction { .. } => "append_action",
            Event::UndoLast => "undo_last",
            Event::CommitDraft { .. } => "commit_draft",
            Event::Propose { .. } => "propose",
            Event::Challenge { .. } => "challenge",
            Event::Resolve { .. } => "resolve",
            Event::Start => "start",
            Event::Pause => "pause",
            Event::Resume => "resume",
            Event::Abort => "abort",
            Event::Tick => "tick",
            Event::LoadMap { .. } => "load_map",
            Event::SetThreshold { .. } => "set_threshold",
            Event::EditCell { .. } => "edit_cell",
        }
    }

    /// Events that record a human approving a plan for execution.
    pub fn is_approval(&self) -> bool {
        matches!(
            self,
            Event::CommitDraft { .. }
                | Event::Resolve {
                    decision: Decision::Accept | Decision::AdoptFoil { .. }
                }
        )
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("{event} is not allowed in phase {phase} at {trust:?}")]
    IllegalPhase {
        phase: Phase,
        trust: TrustLevel,
        event: &'static str,
    },
    #[error("{label} is not an action of this task")]
    ForeignAction { label: String },
    #[error("preconditions do not hold: {}", unsatisfied.join(", "))]
    PreconditionUnsatisfied { unsatisfied: Vec<String> },
    #[error("the draft is empty")]
    EmptyDraft,
    #[error("goals not reached: {}", missing.join(", "))]
    GoalNotSatisfied { missing: Vec<String> },
    #[error("no challenge with index {index}")]
    FoilIndexInvalid { index: usize },
    #[error("challenge {index} has no feasible foil plan")]
    FoilWasInfeasible { index: usize },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("{0}")]
    Map(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl SessionError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::IllegalPhase { .. } => "illegal_phase",
            SessionError::ForeignAction { .. } => "foreign_action",
            SessionError::PreconditionUnsatisfied { .. } => "precondition_unsatisfied",
            SessionError::EmptyDraft => "empty_draft",
            SessionError::GoalNotSatisfied { .. } => "goal_not_satisfied",
            SessionError::FoilIndexInvalid { .. } => "foil_index_invalid",
            SessionError::FoilWasInfeasible { .. } => "foil_was_infeasible",
            SessionError::Plan(e) => match e {
                PlanError::NoPlan => "no_plan",
                PlanError::ResourceLimit { .. } => "resource_limit",
                PlanError::Cancelled => "cancelled",
                PlanError::CostOverflow => "cost_overflow",
                PlanError::InvalidPrefix { .. } => "invalid_prefix",
                PlanError::InvalidConfig => "invalid_config",
            },
            SessionError::Explain(e) => match e {
                ExplainError::Syntax(_) => "invalid_foil",
                ExplainError::UnknownAction { .. } | ExplainError::ForeignAction(_) => "unknown_action",
                ExplainError::UnknownLiteral { .. } => "unknown_literal",
                ExplainError::NotInGoal { .. } => "not_in_goal",
                ExplainError::InvalidOriginal => "invalid_plan",
                ExplainError::FoilSearch(_) => "foil_search_failed",
            },
            SessionError::Compile(e) => match e {
                CompileError::TargetUnreachable { .. } => "target_unreachable",
                CompileError::InvalidTarget { .. } => "invalid_target",
                CompileError::NegativeCost => "invalid_config",
                CompileError::Ground(_) => "grounding_failed",
            },
            SessionError::Field(_) => "invalid_field",
            SessionError::Map(_) => "invalid_map",
            SessionError::Sim(_) => "sim_error",
        }
    }
}

/// Everything needed to create a session; also the first record of its log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub id: String,
    pub field: FieldModel,
    #[serde(default)]
    pub threshold: Threshold,
    #[serde(default)]
    pub trust: TrustLevel,
    #[serde(default)]
    pub problem: WeedingProblemConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub robot: RobotConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    Draft,
    Proposal,
    Committed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approval {
    /// LowTrust: the operator committed a draft built step by step.
    DraftCommit,
    /// PartialTrust: the operator accepted the proposal or a foil.
    Resolve,
    /// FullTrust: no human decision.
    Autonomous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanView {
    pub kind: PlanKind,
    pub steps: Vec<String>,
    #[serde(with = "serde_cost")]
    pub cost: Cost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Notification {
    PhaseChanged { from: Phase, to: Phase },
    PlanChanged { plan: Option<PlanView>, kind: PlanKind },
    Explained { index: usize, explanation: Explanation },
    Step { event: StepEvent },
    Metrics { metrics: MissionMetrics },
    MissionFinished { status: SimStatus, metrics: MissionMetrics },
}

#[derive(Debug, Clone)]
pub struct Committed {
    pub task: Arc<GroundedTask>,
    pub plan: Plan,
    pub partial: bool,
    pub approval: Approval,
    pub validation: ValidationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotView {
    pub cell: CellIndex,
    pub battery: f64,
    pub status: SimStatus,
    pub tick: u64,
}

/// Read-only view published to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub id: String,
    pub trust: TrustLevel,
    pub phase: Phase,
    pub threshold: Threshold,
    pub targets: Vec<CellIndex>,
    pub draft: Option<PlanView>,
    pub proposal: Option<PlanView>,
    pub committed: Option<PlanView>,
    pub partial: bool,
    pub challenges: usize,
    /// Committed steps already executed.
    pub executed: usize,
    pub robot: Option<RobotView>,
    pub metrics: Option<MissionMetrics>,
    /// Actions applicable after the draft, offered while composing.
    pub legal_actions: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Session {
    cfg: SessionConfig,
    trust: TrustLevel,
    phase: Phase,
    field: FieldModel,
    threshold: Threshold,
    targets: TargetSet,
    task: Arc<GroundedTask>,
    draft: Vec<ActionId>,
    draft_state: State,
    draft_cost: Cost,
    proposal: Option<(Arc<GroundedTask>, Plan)>,
    challenge_log: Vec<Explanation>,
    committed: Option<Committed>,
    sim: Option<Simulator>,
    executed: usize,
    log: Vec<Event>,
}

impl Session {
    pub fn new(cfg: SessionConfig) -> Result<Self, SessionError> {
        cfg.robot.validate()?;
        let targets = select_targets(&cfg.field, cfg.threshold);
        let task = Arc::new(build_task(&cfg.field, &targets, &cfg.problem)?);
        Ok(Session {
            trust: cfg.trust,
            phase: Phase::Idle,
            field: cfg.field.clone(),
            threshold: cfg.threshold,
            targets,
            draft: Vec::new(),
            draft_state: task.init().clone(),
            draft_cost: Cost::zero(),
            task,
            proposal: None,
            challenge_log: Vec::new(),
            committed: None,
            sim: None,
            executed: 0,
            log: Vec::new(),
            cfg,
        })
    }

    pub fn id(&self) -> &str {
        &self.cfg.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn trust(&self) -> TrustLevel {
        self.trust
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn field(&self) -> &FieldModel {
        &self.field
    }

    pub fn targets(&self) -> &TargetSet {
        &self.targets
    }

    pub fn task(&self) -> &Arc<GroundedTask> {
        &self.task
    }

    pub fn draft(&self) -> &[ActionId] {
        &self.draft
    }

    pub fn proposal(&self) -> Option<&Plan> {
        self.proposal.as_ref().map(|(_, p)| p)
    }

    pub fn challenge_log(&self) -> &[Explanation] {
        &self.challenge_log
    }

    pub fn committed(&self) -> Option<&Committed> {
        self.committed.as_ref()
    }

    pub fn simulator(&self) -> Option<&Simulator> {
        self.sim.as_ref()
    }

    pub fn executed_steps(&self) -> usize {
        self.executed
    }

    /// Successfully applied events, in order.
    pub fn log(&self) -> &[Event] {
        &self.log
    }

    pub fn metrics(&self) -> Option<&MissionMetrics> {
        self.sim.as_ref().map(Simulator::metrics)
    }

    fn illegal(&self, event: &Event) -> SessionError {
        SessionError::IllegalPhase {
            phase: self.phase,
            trust: self.trust,
            event: event.name(),
        }
    }

    fn draft_view(&self) -> PlanView {
        PlanView {
            kind: PlanKind::Draft,
            steps: self.draft.iter().map(|&a| self.task.actions()[a].label().to_string()).collect(),
            cost: self.draft_cost,
        }
    }

    fn proposal_view(&self) -> Option<PlanView> {
        self.proposal.as_ref().map(|(task, p)| PlanView {
            kind: PlanKind::Proposal,
            steps: p.labels(task).into_iter().map(String::from).collect(),
            cost: p.total_cost(),
        })
    }

    fn committed_view(&self) -> Option<PlanView> {
        self.committed.as_ref().map(|c| PlanView {
            kind: PlanKind::Committed,
            steps: c.plan.labels(&c.task).into_iter().map(String::from).collect(),
            cost: c.plan.total_cost(),
        })
    }

    pub fn legal_actions(&self) -> Vec<String> {
        self.task
            .actions()
            .iter()
            .filter(|a| self.task.is_applicable(a, &self.draft_state))
            .map(|a| a.label().to_string())
            .collect()
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        let composing = self.trust == TrustLevel::LowTrust && matches!(self.phase, Phase::Idle | Phase::Drafting);
        SessionSnapshot {
            id: self.cfg.id.clone(),
            trust: self.trust,
            phase: self.phase,
            threshold: self.threshold,
            targets: self.targets.targets.iter().copied().collect(),
            draft: (self.trust == TrustLevel::LowTrust).then(|| self.draft_view()),
            proposal: self.proposal_view(),
            committed: self.committed_view(),
            partial: self.committed.as_ref().is_some_and(|c| c.partial),
            challenges: self.challenge_log.len(),
            executed: self.executed,
            robot: self.sim.as_ref().map(|s| RobotView {
                cell: s.state().robot,
                battery: s.state().battery,
                status: s.state().status.clone(),
                tick: s.state().tick,
            }),
            metrics: self.metrics().cloned(),
            legal_actions: if composing { self.legal_actions() } else { Vec::new() },
        }
    }

    fn set_phase(&mut self, to: Phase, out: &mut Vec<Notification>) {
        if self.phase != to {
            out.push(Notification::PhaseChanged { from: self.phase, to });
            self.phase = to;
        }
    }

    /// Back to Idle with no draft, proposal, challenges or commitment.
    fn clear_mission(&mut self, out: &mut Vec<Notification>) {
        let had_plan = !self.draft.is_empty() || self.proposal.is_some() || self.committed.is_some();
        self.draft.clear();
        self.draft_state = self.task.init().clone();
        self.draft_cost = Cost::zero();
        self.proposal = None;
        self.challenge_log.clear();
        self.committed = None;
        self.executed = 0;
        if had_plan {
            out.push(Notification::PlanChanged {
                plan: None,
                kind: PlanKind::Committed,
            });
        }
        self.set_phase(Phase::Idle, out);
    }

    fn recompile(&mut self, field: FieldModel, threshold: Threshold) -> Result<(), SessionError> {
        let targets = select_targets(&field, threshold);
        let task = build_task(&field, &targets, &self.cfg.problem)?;
        self.field = field;
        self.threshold = threshold;
        self.targets = targets;
        self.task = Arc::new(task);
        self.sim = None;
        Ok(())
    }

    fn commit(&mut self, task: Arc<GroundedTask>, plan: Plan, partial: bool, approval: Approval) -> Result<(), SessionError> {
        let validation = if partial {
            let mut relaxed = (*task).clone();
            relaxed.set_goal(Vec::new());
            validate_plan(&relaxed, &plan).expect("plan built on this task")
        } else {
            validate_plan(&task, &plan).expect("plan built on this task")
        };
        match &validation {
            ValidationReport::Valid { .. } => {}
            ValidationReport::Invalid { reason, .. } => {
                let missing = match reason {
                    crate::pddl::InvalidReason::MissingGoals(g) => g.iter().map(|&f| task.fact(f).to_string()).collect(),
                    crate::pddl::InvalidReason::UnsatisfiedPreconditions(l) => {
                        l.iter().map(|&l| task.render_literal(l)).collect()
                    }
                };
                return Err(SessionError::GoalNotSatisfied { missing });
            }
        }
        self.committed = Some(Committed {
            task,
            plan,
            partial,
            approval,
            validation,
        });
        Ok(())
    }

    fn begin_execution(&mut self, out: &mut Vec<Notification>) -> Result<(), SessionError> {
        let committed = self.committed.as_ref().expect("execution needs a commitment");
        // The only path into Executing; guarded by the recorded report.
        assert!(committed.validation.is_valid(), "committed plan must have validated");
        self.sim = Some(Simulator::new(self.field.clone(), self.cfg.robot.clone(), self.cfg.seed)?);
        self.executed = 0;
        self.set_phase(Phase::Executing, out);
        out.push(Notification::Metrics {
            metrics: self.metrics().cloned().unwrap_or_default(),
        });
        Ok(())
    }

    /// Apply one event. On error the session is unchanged.
    pub fn apply(&mut self, event: Event) -> Result<Vec<Notification>, SessionError> {
        let mut out = Vec::new();
        self.dispatch(&event, &mut out)?;
        self.log.push(event);
        Ok(out)
    }

    fn dispatch(&mut self, event: &Event, out: &mut Vec<Notification>) -> Result<(), SessionError> {
        use TrustLevel::*;
        let (phase, trust) = (self.phase, self.trust);
        match event {
            Event::SetTrust { level } if phase.is_rest() => {
                self.trust = *level;
                self.sim = None;
                self.clear_mission(out);
            }
            Event::LoadMap { map } if phase.is_rest() => {
                let field = self.field.with_map(map.clone())?;
                self.recompile(field, self.threshold)?;
                self.clear_mission(out);
            }
            Event::SetThreshold { threshold } if phase.is_rest() => {
                self.recompile(self.field.clone(), *threshold)?;
                self.clear_mission(out);
            }
            Event::EditCell { cell, probability } if phase.is_rest() => {
                let mut map = self.field.map().clone();
                map.set_probability(*cell, *probability)
                    .map_err(|e| SessionError::Map(e.to_string()))?;
                let field = self.field.with_map(map)?;
                self.recompile(field, self.threshold)?;
                self.clear_mission(out);
            }
            Event::AppendAction { action } if trust == LowTrust && matches!(phase, Phase::Idle | Phase::Drafting) => {
                let id = self.task.action_id(action).ok_or_else(|| SessionError::ForeignAction {
                    label: action.clone(),
                })?;
                let ground = &self.task.actions()[id];
                let unsatisfied = self.task.unsatisfied(ground, &self.draft_state);
                if !unsatisfied.is_empty() {
                    return Err(SessionError::PreconditionUnsatisfied {
                        unsatisfied: unsatisfied.iter().map(|&l| self.task.render_literal(l)).collect(),
                    });
                }
                self.draft_state = apply(ground, &self.draft_state);
                self.draft_cost += ground.cost;
                self.draft.push(id);
                out.push(Notification::PlanChanged {
                    plan: Some(self.draft_view()),
                    kind: PlanKind::Draft,
                });
                self.set_phase(Phase::Drafting, out);
            }
            Event::UndoLast if trust == LowTrust && phase == Phase::Drafting => {
                if self.draft.pop().is_none() {
                    return Err(SessionError::EmptyDraft);
                }
                let mut state = self.task.init().clone();
                let mut cost = Cost::zero();
                for &a in &self.draft {
                    state = apply(&self.task.actions()[a], &state);
                    cost += self.task.actions()[a].cost;
                }
                self.draft_state = state;
                self.draft_cost = cost;
                out.push(Notification::PlanChanged {
                    plan: Some(self.draft_view()),
                    kind: PlanKind::Draft,
                });
            }
            Event::CommitDraft { partial } if trust == LowTrust && phase == Phase::Drafting => {
                let plan = Plan::new(&self.task, self.draft.clone()).expect("draft steps belong to the task");
                self.commit(self.task.clone(), plan, *partial, Approval::DraftCommit)?;
                out.push(Notification::PlanChanged {
                    plan: self.committed_view(),
                    kind: PlanKind::Committed,
                });
                self.set_phase(Phase::Committed, out);
            }
            Event::Propose { search } if trust == PartialTrust && phase == Phase::Idle => {
                let cfg = search.clone().unwrap_or_else(|| self.cfg.search.clone());
                let p = plan(&self.task, &cfg)?;
                self.proposal = Some((self.task.clone(), p));
                self.challenge_log.clear();
                out.push(Notification::PlanChanged {
                    plan: self.proposal_view(),
                    kind: PlanKind::Proposal,
                });
                self.set_phase(Phase::Proposed, out);
            }
            Event::Challenge { queries }
                if trust == PartialTrust && matches!(phase, Phase::Proposed | Phase::Challenging) =>
            {
                let (task, proposal) = self.proposal.as_ref().expect("proposal exists while Proposed");
                let explanation = explain(task, proposal, queries, &self.cfg.search)?;
                let index = self.challenge_log.len();
                self.challenge_log.push(explanation.clone());
                out.push(Notification::Explained { index, explanation });
                self.set_phase(Phase::Challenging, out);
            }
            Event::Resolve { decision }
                if trust == PartialTrust && matches!(phase, Phase::Proposed | Phase::Challenging) =>
            {
                match decision {
                    Decision::Accept => {
                        let (task, p) = self.proposal.clone().expect("proposal exists while Proposed");
                        self.commit(task, p, false, Approval::Resolve)?;
                    }
                    Decision::AdoptFoil { index } => {
                        let e = self
                            .challenge_log
                            .get(*index)
                            .ok_or(SessionError::FoilIndexInvalid { index: *index })?;
                        let (task, p) = e
                            .compiled
                            .clone()
                            .ok_or(SessionError::FoilWasInfeasible { index: *index })?;
                        self.commit(task.clone(), p.clone(), false, Approval::Resolve)?;
                        self.proposal = Some((task, p));
                    }
                    Decision::Reject => {
                        self.proposal = None;
                        self.challenge_log.clear();
                        out.push(Notification::PlanChanged {
                            plan: None,
                            kind: PlanKind::Proposal,
                        });
                        self.set_phase(Phase::Idle, out);
                        return Ok(());
                    }
                }
                out.push(Notification::PlanChanged {
                    plan: self.committed_view(),
                    kind: PlanKind::Committed,
                });
                self.set_phase(Phase::Committed, out);
            }
            Event::Start if trust != FullTrust && phase == Phase::Committed => {
                self.begin_execution(out)?;
            }
            Event::Start if trust == FullTrust && phase == Phase::Idle => {
                let p = plan(&self.task, &self.cfg.search)?;
                self.commit(self.task.clone(), p, false, Approval::Autonomous)?;
                // Streamed for passive viewing; nobody is asked to approve it.
                out.push(Notification::PlanChanged {
                    plan: self.committed_view(),
                    kind: PlanKind::Committed,
                });
                self.begin_execution(out)?;
            }
            Event::Pause if phase == Phase::Executing => self.set_phase(Phase::Paused, out),
            Event::Resume if phase == Phase::Paused => self.set_phase(Phase::Executing, out),
            Event::Abort
                if !matches!(phase, Phase::Idle | Phase::Done | Phase::Aborted) =>
            {
                if let Some(sim) = self.sim.as_mut() {
                    sim.halt_in_place("aborted by operator");
                }
                self.set_phase(Phase::Aborted, out);
                if let Some(sim) = &self.sim {
                    out.push(Notification::MissionFinished {
                        status: sim.state().status.clone(),
                        metrics: sim.metrics().clone(),
                    });
                }
            }
            Event::Tick if phase == Phase::Executing => self.tick(out)?,
            _ => return Err(self.illegal(event)),
        }
        Ok(())
    }

    fn tick(&mut self, out: &mut Vec<Notification>) -> Result<(), SessionError> {
        let committed = self.committed.as_ref().expect("executing a commitment");
        let sim = self.sim.as_mut().expect("executing with a simulator");
        if let Some(&id) = committed.plan.steps().get(self.executed) {
            let label = committed.task.actions()[id].label();
            let event = sim.step(label)?;
            self.executed += 1;
            out.push(Notification::Step { event });
            out.push(Notification::Metrics {
                metrics: sim.metrics().clone(),
            });
        }
        let finished = self.executed == committed.plan.len() || sim.state().status != SimStatus::Ok;
        if finished {
            let status = sim.state().status.clone();
            let metrics = sim.metrics().clone();
            self.set_phase(Phase::Done, out);
            out.push(Notification::MissionFinished { status, metrics });
        }
        Ok(())
    }

    /// Tick until the mission is no longer executing.
    pub fn run_to_completion(&mut self) -> Result<Vec<Notification>, SessionError> {
        let mut out = Vec::new();
        while self.phase == Phase::Executing {
            out.extend(self.apply(Event::Tick)?);
        }
        Ok(out)
    }
}
