use arwac_core::autonomy::{Event, Phase, Session, SessionConfig, TrustLevel};
use arwac_core::explain::{explain, ContrastiveQuery, FoilResult};
use arwac_core::field::{select_targets, FieldModel, Threshold, WeedMap};
use arwac_core::pddl::{ground_with, parse_domain, parse_problem, validate_plan, GroundingOptions, Plan};
use arwac_core::planner::{build_task, plan, replan_from, PlanError, SearchConfig, SearchMode};
use arwac_core::sim::{run_mission, sample_weedy, RobotConfig};
use arwac_testkit::gen::{random_grid, random_strips, rng, to_field};
use arwac_testkit::statespace::{optimal_cost, Outcome};
use arwac_testkit::{GridAction, GridInstance, GridQuery};
use num_rational::Rational64;
use rand::Rng;

fn optimal() -> SearchConfig {
    SearchConfig {
        mode: SearchMode::Optimal,
        ..Default::default()
    }
}

fn strip(width: usize, height: usize, targets: &[usize]) -> GridInstance {
    GridInstance {
        width,
        height,
        blocked: Default::default(),
        home: 0,
        targets: targets.to_vec(),
        move_cost: 1.into(),
        weed_cost: 1.into(),
        return_home: false,
    }
}

#[test]
fn pruning_keeps_optimal_cost() {
    let mut r = rng(301);
    let mut compared = 0;
    for _ in 0..40 {
        let (d, p) = random_strips(&mut r);
        let domain = parse_domain(&d).unwrap();
        let problem = parse_problem(&p, &domain).unwrap();
        let pruned = ground_with(&domain, &problem, GroundingOptions { prune: true }).unwrap();
        let full = ground_with(&domain, &problem, GroundingOptions { prune: false }).unwrap();
        assert!(pruned.actions().len() <= full.actions().len());
        let a = optimal_cost(&pruned, 200_000);
        let b = optimal_cost(&full, 200_000);
        if a == Outcome::TooLarge || b == Outcome::TooLarge {
            continue;
        }
        assert_eq!(a, b, "{p}");
        match (plan(&pruned, &optimal()), a) {
            (Ok(found), Outcome::Solved(cost)) => {
                assert_eq!(found.total_cost(), cost);
                assert!(validate_plan(&pruned, &found).unwrap().is_valid());
            }
            (Err(PlanError::NoPlan), Outcome::Unsolvable) => {}
            (got, want) => panic!("planner {got:?}, oracle {want:?}\n{p}"),
        }
        compared += 1;
    }
    assert!(compared >= 20, "only {compared} tasks small enough");
}

#[test]
fn replan_after_prefix() {
    let mut r = rng(302);
    for _ in 0..30 {
        let g = random_grid(&mut r, 3, 3, 0.15, 4, true);
        let (field, targets, cfg) = to_field(&g);
        let task = build_task(&field, &targets, &cfg).unwrap();
        let best = plan(&task, &optimal()).unwrap();
        let n = r.random_range(0..=best.len());
        let prefix = best.prefix(&task, n);
        let rest = replan_from(&task, &prefix, &optimal()).unwrap();
        let whole = prefix.concat(&task, &rest);
        assert!(validate_plan(&task, &whole).unwrap().is_valid());
        assert_eq!(whole.total_cost(), g.optimal_cost().unwrap());
        if n == best.len() {
            assert!(rest.is_empty());
        }
    }
    // A detour prefix can only cost more.
    let g = strip(3, 1, &[2]);
    let (field, targets, cfg) = to_field(&g);
    let task = build_task(&field, &targets, &cfg).unwrap();
    let detour = Plan::from_labels(&task, &["(move c0 c1)", "(move c1 c0)"]).unwrap();
    let rest = replan_from(&task, &detour, &optimal()).unwrap();
    assert_eq!(detour.concat(&task, &rest).total_cost(), Rational64::from_integer(5));
    let rest = replan_from(&task, &Plan::empty(), &optimal()).unwrap();
    assert_eq!(rest.total_cost(), Rational64::from_integer(3));
    let bad = Plan::from_labels(&task, &["(weed c2)"]).unwrap();
    assert!(matches!(replan_from(&task, &bad, &optimal()), Err(PlanError::InvalidPrefix { step: 0, .. })));
}

fn explain_one(g: &GridInstance, foil: &str) -> arwac_core::explain::Explanation {
    let (field, targets, cfg) = to_field(g);
    let task = build_task(&field, &targets, &cfg).unwrap();
    let original = plan(&task, &optimal()).unwrap();
    let q = ContrastiveQuery::parse(foil).unwrap();
    explain(&task, &original, &[q], &optimal()).unwrap()
}

#[test]
fn forbid_move_matches_grid_oracle() {
    let g = strip(3, 2, &[2, 5]);
    let e = explain_one(&g, "forbid (move c1 c2)");
    let base = g.optimal_cost().unwrap();
    let query = GridQuery {
        forbidden: [GridAction::Move(1, 2)].into(),
        ..Default::default()
    };
    let (foil_cost, _) = g.solve(&query).unwrap();
    assert_eq!(e.cost_delta(), Some(foil_cost - base));
    let FoilResult::ContrastivePlan { steps, .. } = &e.foil else {
        panic!("{:?}", e.foil)
    };
    assert!(!steps.iter().any(|s| s == "(move c1 c2)"));
}

#[test]
fn order_weed_before_first_move_is_infeasible() {
    let e = explain_one(&strip(3, 1, &[2]), "order (weed c2) before (move c0 c1)");
    assert!(matches!(e.foil, FoilResult::FoilInfeasible { .. }));
    assert!(e.diff.is_empty());
}

#[test]
fn add_goal_end_cell() {
    let g = strip(3, 1, &[2]);
    let e = explain_one(&g, "add-goal (at c0)");
    let query = GridQuery {
        end_at: Some(0),
        ..Default::default()
    };
    let (cost, _) = g.solve(&query).unwrap();
    assert_eq!(e.cost_delta(), Some(cost - g.optimal_cost().unwrap()));
    assert_eq!(e.cost_delta(), Some(Rational64::from_integer(2)));
}

#[test]
fn drop_then_add_goal_is_identity() {
    let g = strip(3, 2, &[2, 4]);
    let (field, targets, cfg) = to_field(&g);
    let task = build_task(&field, &targets, &cfg).unwrap();
    let original = plan(&task, &optimal()).unwrap();
    let qs = [
        ContrastiveQuery::parse("drop-goal (cleared c4)").unwrap(),
        ContrastiveQuery::parse("add-goal (cleared c4)").unwrap(),
    ];
    let e = explain(&task, &original, &qs, &optimal()).unwrap();
    assert_eq!(e.cost_delta(), Some(Rational64::from_integer(0)));
}

#[test]
fn drop_goal_matches_grid_oracle() {
    let g = strip(3, 2, &[2, 3]);
    let e = explain_one(&g, "drop-goal (cleared c2)");
    let query = GridQuery {
        dropped: [2].into(),
        ..Default::default()
    };
    let (cost, _) = g.solve(&query).unwrap();
    assert_eq!(e.cost_delta(), Some(cost - g.optimal_cost().unwrap()));
}

fn session(map: WeedMap, trust: TrustLevel) -> Session {
    Session::new(SessionConfig {
        id: "t".into(),
        field: FieldModel::open(map),
        threshold: Threshold::default(),
        trust,
        problem: Default::default(),
        search: optimal(),
        robot: RobotConfig::default(),
        seed: 3,
    })
    .unwrap()
}

#[test]
fn oracle_optimal_draft_commits() {
    let g = strip(3, 2, &[1, 5]);
    let (_, steps) = g.solve(&GridQuery::default()).unwrap();
    let map = WeedMap::new(3, 2, 1.0, (0.0, 0.0), vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    let mut s = session(map, TrustLevel::LowTrust);
    for a in &steps {
        s.apply(Event::AppendAction { action: a.label() }).unwrap();
    }
    s.apply(Event::CommitDraft { partial: false }).unwrap();
    assert_eq!(s.phase(), Phase::Committed);
    assert_eq!(s.committed().unwrap().plan.total_cost(), g.optimal_cost().unwrap());
}

#[test]
fn empty_target_set_proposes_empty_plan() {
    let mut s = session(WeedMap::uniform(2, 2, 0.1).unwrap(), TrustLevel::PartialTrust);
    assert!(s.targets().is_empty());
    s.apply(Event::Propose { search: None }).unwrap();
    assert_eq!(s.phase(), Phase::Proposed);
    assert!(s.proposal().unwrap().is_empty());
}

#[test]
fn failed_proposal_stays_idle() {
    let mut s = session(WeedMap::uniform(3, 3, 1.0).unwrap(), TrustLevel::PartialTrust);
    let tight = SearchConfig {
        node_limit: 1,
        ..optimal()
    };
    assert!(s.apply(Event::Propose { search: Some(tight) }).is_err());
    assert_eq!(s.phase(), Phase::Idle);
    assert!(s.proposal().is_none());
}

#[test]
fn certain_kills_remove_every_weedy_target() {
    let mut r = rng(303);
    for seed in 0..20u64 {
        let probs: Vec<f64> = (0..12).map(|_| r.random_range(0.0..1.0)).collect();
        let map = WeedMap::new(4, 3, 1.0, (0.0, 0.0), probs.clone()).unwrap();
        let field = FieldModel::open(map);
        let targets = select_targets(&field, Threshold::default());
        let task = build_task(&field, &targets, &Default::default()).unwrap();
        let p = plan(&task, &optimal()).unwrap();
        let robot = RobotConfig {
            p_kill: 1.0,
            p_crop_damage: 0.0,
            battery_capacity: 1e6,
            ..Default::default()
        };
        let out = run_mission(&field, &robot, seed, &p.labels(&task)).unwrap();
        let expect = targets
            .targets
            .iter()
            .filter(|&&c| sample_weedy(seed, c, probs[c]))
            .count() as u64;
        assert_eq!(out.metrics.weeds_removed, expect);
        assert_eq!(out.metrics.crops_damaged, 0);
    }
}

#[test]
fn degenerate_probabilities() {
    let robot = RobotConfig::default();
    for (p, weedy) in [(0.0, 0), (1.0, 6)] {
        let field = FieldModel::open(WeedMap::uniform(3, 2, p).unwrap());
        let out = run_mission(&field, &robot, 9, &[] as &[&str]).unwrap();
        assert_eq!(out.metrics.weeds_present_initially, weedy);
        assert_eq!(out.metrics.weeds_removed, 0);
        assert_eq!(out.metrics.distance_cells, 0);
        assert!(out.trace.is_empty());
    }
}

#[test]
fn weed_maps_round_trip_both_formats() {
    arwac_testkit::criteria::weed_map_round_trip(100, 304).unwrap();
}
