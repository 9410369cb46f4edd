//! Independent statement of the session transition table, plus drivers
//! that check the session against it.

use arwac_core::autonomy::{Approval, Decision, Event, Phase, Session, SessionConfig, TrustLevel};
use arwac_core::explain::ContrastiveQuery;
use arwac_core::field::{FieldModel, Threshold, WeedMap};
use arwac_core::planner::{SearchConfig, SearchMode};
use arwac_core::sim::RobotConfig;
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::gen;

/// Event kinds distinguished by the table. Resolve splits by decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    SetTrust,
    LoadMap,
    SetThreshold,
    EditCell,
    AppendAction,
    UndoLast,
    CommitDraft,
    Propose,
    Challenge,
    ResolveAccept,
    ResolveReject,
    Start,
    Pause,
    Resume,
    Tick,
    Abort,
}

impl Kind {
    pub const ALL: [Kind; 16] = [
        Kind::SetTrust,
        Kind::LoadMap,
        Kind::SetThreshold,
        Kind::EditCell,
        Kind::AppendAction,
        Kind::UndoLast,
        Kind::CommitDraft,
        Kind::Propose,
        Kind::Challenge,
        Kind::ResolveAccept,
        Kind::ResolveReject,
        Kind::Start,
        Kind::Pause,
        Kind::Resume,
        Kind::Tick,
        Kind::Abort,
    ];

    pub fn of(e: &Event) -> Kind {
        match e {
            Event::SetTrust { .. } => Kind::SetTrust,
            Event::LoadMap { .. } => Kind::LoadMap,
            Event::SetThreshold { .. } => Kind::SetThreshold,
            Event::EditCell { .. } => Kind::EditCell,
            Event::AppendAction { .. } => Kind::AppendAction,
            Event::UndoLast => Kind::UndoLast,
            Event::CommitDraft { .. } => Kind::CommitDraft,
            Event::Propose { .. } => Kind::Propose,
            Event::Challenge { .. } => Kind::Challenge,
            Event::Resolve {
                decision: Decision::Reject,
            } => Kind::ResolveReject,
            Event::Resolve { .. } => Kind::ResolveAccept,
            Event::Start => Kind::Start,
            Event::Pause => Kind::Pause,
            Event::Resume => Kind::Resume,
            Event::Tick => Kind::Tick,
            Event::Abort => Kind::Abort,
        }
    }
}

/// Phases the event may lead to; empty when the event must be refused.
pub fn expected(trust: TrustLevel, phase: Phase, kind: Kind) -> &'static [Phase] {
    use Phase::*;
    use TrustLevel::*;
    let rest = matches!(phase, Idle | Done | Aborted);
    match kind {
        Kind::SetTrust | Kind::LoadMap | Kind::SetThreshold | Kind::EditCell if rest => &[Idle],
        Kind::AppendAction if trust == LowTrust && matches!(phase, Idle | Drafting) => &[Drafting],
        Kind::UndoLast if trust == LowTrust && phase == Drafting => &[Drafting],
        Kind::CommitDraft if trust == LowTrust && phase == Drafting => &[Committed],
        Kind::Propose if trust == PartialTrust && phase == Idle => &[Proposed],
        Kind::Challenge if trust == PartialTrust && matches!(phase, Proposed | Challenging) => &[Challenging],
        Kind::ResolveAccept if trust == PartialTrust && matches!(phase, Proposed | Challenging) => &[Committed],
        Kind::ResolveReject if trust == PartialTrust && matches!(phase, Proposed | Challenging) => &[Idle],
        Kind::Start if trust != FullTrust && phase == Committed => &[Executing],
        Kind::Start if trust == FullTrust && phase == Idle => &[Executing],
        Kind::Pause if phase == Executing => &[Paused],
        Kind::Resume if phase == Paused => &[Executing],
        Kind::Tick if phase == Executing => &[Executing, Done],
        Kind::Abort if !rest => &[Aborted],
        _ => &[],
    }
}

/// (trust, phase) pairs a session can be in.
pub fn reachable(trust: TrustLevel, phase: Phase) -> bool {
    use Phase::*;
    match trust {
        TrustLevel::LowTrust => !matches!(phase, Proposed | Challenging),
        TrustLevel::PartialTrust => phase != Drafting,
        TrustLevel::FullTrust => matches!(phase, Idle | Executing | Paused | Done | Aborted),
    }
}

/// 1×3 strip with a certain weed at the far end.
pub fn fixture_config(trust: TrustLevel, seed: u64, p_kill: f64) -> SessionConfig {
    let map = WeedMap::new(3, 1, 1.0, (0.0, 0.0), vec![0.0, 0.0, 1.0]).unwrap();
    SessionConfig {
        id: format!("fixture-{seed}"),
        field: FieldModel::open(map),
        threshold: Threshold::default(),
        trust,
        problem: Default::default(),
        search: SearchConfig {
            mode: SearchMode::Optimal,
            ..Default::default()
        },
        robot: RobotConfig {
            p_kill,
            p_crop_damage: 0.0,
            ..Default::default()
        },
        seed,
    }
}

const PLAN: [&str; 3] = ["(move c0 c1)", "(move c1 c2)", "(weed c2)"];

fn append(a: &str) -> Event {
    Event::AppendAction { action: a.into() }
}

/// Events that drive a fresh fixture session into `phase`.
fn script(trust: TrustLevel, phase: Phase) -> Vec<Event> {
    use Phase::*;
    let commit: Vec<Event> = match trust {
        TrustLevel::LowTrust => PLAN.iter().map(|a| append(a)).chain([Event::CommitDraft { partial: false }]).collect(),
        TrustLevel::PartialTrust => vec![
            Event::Propose { search: None },
            Event::Resolve {
                decision: Decision::Accept,
            },
        ],
        TrustLevel::FullTrust => Vec::new(),
    };
    let mut run = commit.clone();
    run.push(Event::Start);
    match phase {
        Idle => Vec::new(),
        Drafting => vec![append(PLAN[0])],
        Proposed => vec![Event::Propose { search: None }],
        Challenging => vec![
            Event::Propose { search: None },
            Event::Challenge {
                queries: vec![ContrastiveQuery::ForbidAction { action: PLAN[1].into() }],
            },
        ],
        Committed => commit,
        Executing => run,
        Paused => run.into_iter().chain([Event::Pause]).collect(),
        Done => run.into_iter().chain([Event::Tick, Event::Tick, Event::Tick]).collect(),
        Aborted => run.into_iter().chain([Event::Abort]).collect(),
    }
}

/// A well-formed instance of `kind` for the session's current state, so a
/// refusal can only come from the table.
fn representative(kind: Kind, s: &Session) -> Event {
    match kind {
        Kind::SetTrust => Event::SetTrust { level: s.trust() },
        Kind::LoadMap => Event::LoadMap {
            map: s.field().map().clone(),
        },
        Kind::SetThreshold => Event::SetThreshold {
            threshold: Threshold::new(0.6).unwrap(),
        },
        Kind::EditCell => Event::EditCell { cell: 1, probability: 0.1 },
        Kind::AppendAction => append(
            s.legal_actions()
                .into_iter()
                .next()
                .as_deref()
                .unwrap_or(PLAN[0]),
        ),
        Kind::UndoLast => Event::UndoLast,
        Kind::CommitDraft => Event::CommitDraft { partial: true },
        Kind::Propose => Event::Propose { search: None },
        Kind::Challenge => Event::Challenge {
            queries: vec![ContrastiveQuery::RequireAction { action: "(move c1 c0)".into() }],
        },
        Kind::ResolveAccept => Event::Resolve {
            decision: Decision::Accept,
        },
        Kind::ResolveReject => Event::Resolve {
            decision: Decision::Reject,
        },
        Kind::Start => Event::Start,
        Kind::Pause => Event::Pause,
        Kind::Resume => Event::Resume,
        Kind::Tick => Event::Tick,
        Kind::Abort => Event::Abort,
    }
}

/// Every reachable (trust, phase) against every event kind. Returns the
/// number of cells checked and any mismatches.
pub fn check_table() -> (usize, Vec<String>) {
    let mut failures = Vec::new();
    let mut cells = 0;
    for trust in TrustLevel::ALL {
        for phase in Phase::ALL {
            if !reachable(trust, phase) {
                continue;
            }
            let mut base = Session::new(fixture_config(trust, 1, 1.0)).unwrap();
            for e in script(trust, phase) {
                if let Err(err) = base.apply(e.clone()) {
                    failures.push(format!("fixture {trust:?}/{phase}: {} failed: {err}", e.name()));
                }
            }
            if base.phase() != phase {
                failures.push(format!("fixture {trust:?}/{phase} reached {}", base.phase()));
                continue;
            }
            for kind in Kind::ALL {
                cells += 1;
                let mut s = base.clone();
                let before = s.snapshot();
                let event = representative(kind, &s);
                let allowed = expected(trust, phase, kind);
                match s.apply(event) {
                    Ok(_) if allowed.contains(&s.phase()) => {}
                    Ok(_) => failures.push(format!("{trust:?}/{phase}/{kind:?}: went to {}, table says {allowed:?}", s.phase())),
                    Err(e) if allowed.is_empty() && e.code() == "illegal_phase" && s.snapshot() == before => {}
                    Err(e) => failures.push(format!("{trust:?}/{phase}/{kind:?}: {e} (table says {allowed:?})")),
                }
            }
        }
    }
    for trust in TrustLevel::ALL {
        for phase in Phase::ALL {
            for kind in [Kind::Pause, Kind::Resume, Kind::Tick] {
                // Execution controls are trust-independent.
                if expected(trust, phase, kind) != expected(TrustLevel::LowTrust, phase, kind) {
                    failures.push(format!("{kind:?} depends on trust"));
                }
            }
        }
    }
    (cells, failures)
}

fn random_event(rng: &mut impl Rng, s: &Session) -> Event {
    let kind = *Kind::ALL.choose(rng).unwrap();
    match kind {
        Kind::SetTrust => Event::SetTrust {
            level: *TrustLevel::ALL.choose(rng).unwrap(),
        },
        Kind::LoadMap => {
            let probs = (0..3).map(|_| rng.random_range(0.0..=1.0)).collect();
            Event::LoadMap {
                map: WeedMap::new(3, 1, 1.0, (0.0, 0.0), probs).unwrap(),
            }
        }
        Kind::SetThreshold => Event::SetThreshold {
            threshold: Threshold::new(rng.random_range(0.1..=1.0)).unwrap(),
        },
        Kind::EditCell => Event::EditCell {
            cell: rng.random_range(0..4),
            probability: rng.random_range(0.0..=1.0),
        },
        Kind::AppendAction => {
            let legal = s.legal_actions();
            let label = if !legal.is_empty() && rng.random_bool(0.8) {
                legal.choose(rng).unwrap().clone()
            } else {
                ["(weed c1)", "(move c2 c1)", "(move c0 c2)", "(fly c0)"].choose(rng).unwrap().to_string()
            };
            append(&label)
        }
        Kind::UndoLast => Event::UndoLast,
        Kind::CommitDraft => Event::CommitDraft {
            partial: rng.random_bool(0.5),
        },
        Kind::Propose => Event::Propose { search: None },
        Kind::Challenge => {
            let q = [
                ContrastiveQuery::ForbidAction { action: PLAN[1].into() },
                ContrastiveQuery::RequireAction { action: "(move c1 c0)".into() },
                ContrastiveQuery::OrderBefore {
                    first: PLAN[2].into(),
                    then: PLAN[0].into(),
                },
                ContrastiveQuery::AddGoal { literal: "(at c0)".into() },
                ContrastiveQuery::ForbidAction { action: "(fly c0)".into() },
            ];
            Event::Challenge {
                queries: vec![q.choose(rng).unwrap().clone()],
            }
        }
        Kind::ResolveAccept => Event::Resolve {
            decision: if rng.random_bool(0.5) {
                Decision::Accept
            } else {
                Decision::AdoptFoil {
                    index: rng.random_range(0..3),
                }
            },
        },
        Kind::ResolveReject => Event::Resolve {
            decision: Decision::Reject,
        },
        Kind::Start => Event::Start,
        Kind::Pause => Event::Pause,
        Kind::Resume => Event::Resume,
        Kind::Tick => Event::Tick,
        Kind::Abort => Event::Abort,
    }
}

/// Random event sequences. After every event: the phase obeys the table,
/// refusals leave the session untouched, the robot only runs plans that
/// validated, a LowTrust/PartialTrust run always follows a human approval,
/// and a committed LowTrust plan is exactly the operator's draft.
pub fn random_sequences(count: usize, seed: u64) -> (usize, Vec<String>) {
    let mut failures = Vec::new();
    let mut rng = gen::rng(seed);
    for n in 0..count {
        let trust = *TrustLevel::ALL.choose(&mut rng).unwrap();
        let p_kill = [0.0, 0.5, 1.0].choose(&mut rng).copied().unwrap();
        let mut s = Session::new(fixture_config(trust, n as u64, p_kill)).unwrap();
        let mut draft: Vec<String> = Vec::new();
        let mut approved = false;
        let mut fail = |msg: String| {
            if failures.len() < 20 {
                failures.push(format!("sequence {n}: {msg}"));
            }
        };
        for _ in 0..rng.random_range(5..40) {
            let event = random_event(&mut rng, &s);
            let kind = Kind::of(&event);
            let (trust, phase) = (s.trust(), s.phase());
            let before = s.snapshot();
            let allowed = expected(trust, phase, kind);
            match s.apply(event.clone()) {
                Err(e) => {
                    if s.snapshot() != before {
                        fail(format!("refused {} changed the session", event.name()));
                    }
                    if (e.code() == "illegal_phase") != allowed.is_empty() {
                        fail(format!("{trust:?}/{phase}/{kind:?}: {e}"));
                    }
                    continue;
                }
                Ok(_) => {
                    if !allowed.contains(&s.phase()) {
                        fail(format!("{trust:?}/{phase}/{kind:?} went to {}", s.phase()));
                    }
                }
            }
            match &event {
                Event::AppendAction { action } => draft.push(action.clone()),
                Event::UndoLast => {
                    draft.pop();
                }
                e if e.is_approval() => approved = true,
                _ => {}
            }
            if s.phase() == Phase::Idle {
                draft.clear();
                approved = false;
            }
            if !reachable(s.trust(), s.phase()) {
                fail(format!("unreachable state {:?}/{}", s.trust(), s.phase()));
            }
            if matches!(s.phase(), Phase::Executing | Phase::Paused) {
                let c = s.committed().expect("commitment while executing");
                if !c.validation.is_valid() {
                    fail("executing an unvalidated plan".into());
                }
                let human = matches!(c.approval, Approval::DraftCommit | Approval::Resolve);
                if s.trust() == TrustLevel::FullTrust {
                    if human {
                        fail("FullTrust run carries a human approval".into());
                    }
                } else if !human || !approved {
                    fail("run started without an approval event".into());
                }
            }
            if s.phase() == Phase::Committed && s.trust() == TrustLevel::LowTrust {
                let c = s.committed().unwrap();
                let labels: Vec<&str> = c.plan.labels(&c.task);
                if labels != draft.iter().map(String::as_str).collect::<Vec<_>>() {
                    fail(format!("committed {labels:?} but draft was {draft:?}"));
                }
            }
        }
    }
    (count, failures)
}
