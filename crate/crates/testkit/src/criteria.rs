//! Desk-scale acceptance checks. Each returns a report instead of panicking
//! so a runner can print every verdict.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use arwac_core::explain::{compile_foil, explain, ContrastiveQuery, DiffEntry, FoilResult};
use arwac_core::field::{save_weed_map, load_weed_map, FieldModel, MapFormat, WeedMap};
use arwac_core::pddl::{parse_domain, parse_domain_bytes, parse_problem, parse_problem_bytes, validate_plan, GroundedTask};
use arwac_core::planner::{build_task, compile_problem, plan, weeding_domain, SearchConfig, SearchMode};
use arwac_core::sim::{reset, run_mission, trace_to_jsonl, RobotConfig};
use num_rational::Rational64;
use num_traits::Zero;
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::gen::{self, fuzz_bytes, grid_actions, mutate_text, random_grid, random_layout, reachable_cells, to_field};
use crate::grid::{GridAction, GridInstance, GridQuery};
use crate::table;

#[derive(Debug, Clone)]
pub struct Report {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl Report {
    pub fn line(&self) -> String {
        format!(
            "{} {} ({:.1}s of {}s budget): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs(),
            self.detail
        )
    }
}

struct Checker {
    failures: Vec<String>,
    checked: usize,
}

impl Checker {
    fn new() -> Self {
        Checker {
            failures: Vec::new(),
            checked: 0,
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok && self.failures.len() < 5 {
            self.failures.push(what());
        } else if !ok {
            self.failures.push(String::new());
        }
    }

    fn finish(self, name: &'static str, started: Instant, budget: u64, summary: String) -> Report {
        let elapsed = started.elapsed();
        let budget = Duration::from_secs(budget);
        let passed = self.failures.is_empty() && elapsed <= budget;
        let detail = if self.failures.is_empty() {
            if elapsed > budget {
                format!("{summary}; over time budget")
            } else {
                summary
            }
        } else {
            let shown: Vec<&str> = self.failures.iter().filter(|f| !f.is_empty()).map(String::as_str).collect();
            format!("{} of {} checks failed; first: {}", self.failures.len(), self.checked, shown.join(" | "))
        };
        Report {
            name,
            passed,
            detail,
            elapsed,
            budget,
        }
    }
}

fn task_of(g: &GridInstance) -> GroundedTask {
    let (field, targets, cfg) = to_field(g);
    build_task(&field, &targets, &cfg).expect("generated instances compile")
}

fn subsets(cells: &[usize], max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &c in cells {
        let extended: Vec<Vec<usize>> = out
            .iter()
            .filter(|s| s.len() < max)
            .map(|s| {
                let mut t = s.clone();
                t.push(c);
                t
            })
            .collect();
        out.extend(extended);
    }
    out
}

/// Optimal-mode cost equals the grid Dijkstra on every field up to 3×3
/// (all target subsets of size ≤ 3, 20 blocked layouts per shape) and on
/// 200 random 5×5 instances.
pub fn planner_optimality() -> Report {
    let started = Instant::now();
    let mut c = Checker::new();
    let mut rng = gen::rng(1);
    let cfg = SearchConfig::optimal();
    for w in 1..=3 {
        for h in 1..=3 {
            for layout in 0..20 {
                let (blocked, home) = random_layout(&mut rng, w, h, 0.2);
                let open = reachable_cells(w, h, &blocked, home);
                for (i, targets) in subsets(&open, 3).into_iter().enumerate() {
                    let mut g = GridInstance {
                        width: w,
                        height: h,
                        blocked: blocked.clone(),
                        home,
                        targets,
                        move_cost: Rational64::from_integer(1),
                        weed_cost: Rational64::from_integer(1),
                        return_home: (i + layout) % 2 == 1,
                    };
                    if layout % 5 == 4 {
                        g.move_cost = Rational64::new(1, 2);
                        g.weed_cost = Rational64::from_integer(2);
                    }
                    let expected = g.optimal_cost();
                    let got = plan(&task_of(&g), &cfg).ok().map(|p| p.total_cost());
                    c.check(got == expected, || format!("{g:?}: planner {got:?} vs oracle {expected:?}"));
                }
            }
        }
    }
    let exhaustive = c.checked;
    for _ in 0..200 {
        let g = random_grid(&mut rng, 5, 5, 0.2, 4, true);
        let expected = g.optimal_cost();
        let got = plan(&task_of(&g), &cfg).ok().map(|p| p.total_cost());
        c.check(got == expected, || format!("{g:?}: planner {got:?} vs oracle {expected:?}"));
    }
    let summary = format!("{exhaustive} exhaustive small-field instances and 200 random 5x5 instances match the oracle exactly");
    c.finish("planner optimality", started, 60, summary)
}

/// Every plan from either mode validates, over 200 random fields.
pub fn planner_validator_coherence() -> Report {
    let started = Instant::now();
    let mut c = Checker::new();
    let mut rng = gen::rng(2);
    let mut plans = 0;
    for i in 0..200 {
        let side = rng.random_range(2..=8);
        let h = rng.random_range(1..=8);
        let g = random_grid(&mut rng, side, h, 0.15, if i % 4 == 0 { 12 } else { 5 }, true);
        let task = task_of(&g);
        let mut optimal_cost = None;
        for mode in [SearchMode::Optimal, SearchMode::Satisficing] {
            if mode == SearchMode::Optimal && g.targets.len() > 6 {
                continue;
            }
            let cfg = SearchConfig {
                mode,
                ..Default::default()
            };
            match plan(&task, &cfg) {
                Ok(p) => {
                    plans += 1;
                    let valid = validate_plan(&task, &p).map(|r| r.is_valid()).unwrap_or(false);
                    c.check(valid, || format!("{mode:?} plan does not validate on {g:?}"));
                    match mode {
                        SearchMode::Optimal => optimal_cost = Some(p.total_cost()),
                        SearchMode::Satisficing => {
                            if let Some(o) = optimal_cost {
                                c.check(p.total_cost() >= o, || format!("satisficing below optimal on {g:?}"));
                            }
                        }
                    }
                }
                Err(e) => c.check(false, || format!("{mode:?} failed on a solvable field {g:?}: {e}")),
            }
        }
    }
    c.finish("planner/validator coherence", started, 30, format!("{plans} plans from both modes over 200 fields all validate"))
}

fn random_foil(rng: &mut impl Rng, g: &GridInstance, task: &GroundedTask, original: &[String]) -> (ContrastiveQuery, GridQuery) {
    let actions = grid_actions(g);
    let mut q = GridQuery::default();
    let pick = |rng: &mut dyn rand::RngCore| -> GridAction {
        // Favour actions that the original plan uses, so foils bite.
        if !original.is_empty() && rng.random_bool(0.6) {
            GridAction::from_label(original.choose(rng).unwrap()).unwrap()
        } else {
            *actions.choose(rng).unwrap()
        }
    };
    match rng.random_range(0..4) {
        0 => {
            let a = pick(rng);
            q.forbidden.insert(a);
            (ContrastiveQuery::ForbidAction { action: a.label() }, q)
        }
        1 => {
            let a = pick(rng);
            q.required.push(a);
            (ContrastiveQuery::RequireAction { action: a.label() }, q)
        }
        2 => {
            let (a, b) = (pick(rng), pick(rng));
            q.before.push((a, b));
            (
                ContrastiveQuery::OrderBefore {
                    first: a.label(),
                    then: b.label(),
                },
                q,
            )
        }
        _ => {
            let cells = reachable_cells(g.width, g.height, &g.blocked, g.home);
            let end = *cells.choose(rng).unwrap();
            debug_assert!(task.fact_id(&arwac_core::pddl::GroundAtom::new("at", [format!("c{end}")])).is_some());
            q.end_at = Some(end);
            (ContrastiveQuery::AddGoal { literal: format!("(at c{end})") }, q)
        }
    }
}

/// Constraining foils never make the optimal plan cheaper, each feasible
/// foil plan validates on its compiled task, its cost matches the grid
/// oracle under the same constraint, and the diff patches the original
/// into the foil.
pub fn contrastive_soundness() -> Report {
    let started = Instant::now();
    let mut c = Checker::new();
    let mut rng = gen::rng(3);
    let cfg = SearchConfig::optimal();
    let mut feasible = 0;
    let mut pairs = 0;
    while pairs < 100 {
        let (w, h) = (rng.random_range(2..=4), rng.random_range(2..=4));
        let g = random_grid(&mut rng, w, h, 0.15, 3, pairs % 3 == 0);
        if g.targets.is_empty() {
            continue;
        }
        pairs += 1;
        let task = task_of(&g);
        let original = plan(&task, &cfg).expect("generated fields are solvable");
        let labels: Vec<String> = original.labels(&task).into_iter().map(String::from).collect();
        let (query, grid_query) = random_foil(&mut rng, &g, &task, &labels);
        let e = match explain(&task, &original, std::slice::from_ref(&query), &cfg) {
            Ok(e) => e,
            Err(err) => {
                c.check(false, || format!("{query} on {g:?}: {err}"));
                continue;
            }
        };
        let oracle = g.solve(&grid_query).map(|(cost, _)| cost);
        match &e.foil {
            FoilResult::ContrastivePlan { cost, cost_delta, steps } => {
                feasible += 1;
                c.check(*cost_delta >= Rational64::zero(), || format!("{query}: negative delta {cost_delta}"));
                c.check(*cost_delta == *cost - original.total_cost(), || "delta is not foil - original".into());
                c.check(oracle == Some(*cost), || format!("{query} on {g:?}: foil cost {cost} vs oracle {oracle:?}"));
                let (foil_task, foil_plan) = e.compiled.as_ref().expect("feasible foils keep their task");
                let valid = validate_plan(foil_task, foil_plan).map(|r| r.is_valid()).unwrap_or(false);
                c.check(valid, || format!("{query}: foil plan does not validate"));
                let patched = arwac_core::explain::apply_diff(&labels, &e.diff);
                c.check(patched.as_ref() == Some(steps), || format!("{query}: diff does not reproduce the foil"));
            }
            FoilResult::FoilInfeasible { .. } => {
                c.check(oracle.is_none(), || format!("{query} on {g:?}: infeasible but oracle found {oracle:?}"));
            }
        }
        c.check(compile_foil(&task, &[]).map(|t| t == task).unwrap_or(false), || "identity compilation changed the task".into());
    }
    // Non-constraining foils: drop a goal, again against the oracle.
    let mut dropped = 0;
    for _ in 0..40 {
        let g = random_grid(&mut rng, 3, 3, 0.1, 3, false);
        let Some(&t) = g.targets.first() else { continue };
        let task = task_of(&g);
        let original = plan(&task, &cfg).unwrap();
        let q = ContrastiveQuery::DropGoal { literal: format!("(cleared c{t})") };
        let e = explain(&task, &original, &[q], &cfg).unwrap();
        let oracle = g
            .solve(&GridQuery {
                dropped: BTreeSet::from([t]),
                ..Default::default()
            })
            .map(|(cost, _)| cost);
        c.check(e.cost_delta().map(|d| d + original.total_cost()) == oracle, || format!("drop-goal on {g:?}"));
        c.check(e.diff.iter().all(|d| !matches!(d, DiffEntry::Added(_))) || e.cost_delta() <= Some(Rational64::zero()), || "drop-goal".into());
        dropped += 1;
    }
    let summary = format!("100 constraining foils ({feasible} feasible) and {dropped} drop-goal foils agree with the oracle; all deltas >= 0");
    c.finish("contrastive soundness", started, 60, summary)
}

fn no_panic<T>(f: impl FnOnce() -> T) -> bool {
    catch_unwind(AssertUnwindSafe(f)).is_ok()
}

/// 10,000 fuzzed inputs up to 1 MB never panic either parser; generated
/// weeding domains and problems reparse to equal trees.
pub fn parser_robustness() -> Report {
    let started = Instant::now();
    let mut c = Checker::new();
    let mut rng = gen::rng(4);
    const MAX: usize = 1 << 20;
    let domain = weeding_domain();
    let domain_text = domain.to_string();
    let field = FieldModel::open(WeedMap::uniform(4, 3, 0.7).unwrap());
    let targets = arwac_core::field::select_targets(&field, Default::default());
    let (_, problem) = compile_problem(&field, &targets, &Default::default()).unwrap();
    let problem_text = problem.to_string();
    let prev_hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut largest = 0;
    for i in 0..10_000 {
        let input = match i % 3 {
            0 => fuzz_bytes(&mut rng, MAX),
            1 => mutate_text(&mut rng, &domain_text, MAX),
            _ => mutate_text(&mut rng, &problem_text, MAX),
        };
        largest = largest.max(input.len());
        let ok = no_panic(|| {
            let _ = parse_domain_bytes(&input);
            let _ = parse_problem_bytes(&input, &domain);
        });
        c.check(ok, || format!("panic on case {i} ({} bytes)", input.len()));
    }
    std::panic::set_hook(prev_hook);

    let mut rng = gen::rng(40);
    for _ in 0..50 {
        let (w, h) = (rng.random_range(1..=7), rng.random_range(1..=7));
        let g = random_grid(&mut rng, w, h, 0.2, 6, true);
        let (field, targets, cfg) = to_field(&g);
        let (d, p) = compile_problem(&field, &targets, &cfg).unwrap();
        let d2 = parse_domain(&d.to_string());
        c.check(d2.as_ref() == Ok(&d), || format!("domain did not round-trip: {d2:?}"));
        let p2 = parse_problem(&p.to_string(), &d);
        c.check(p2.as_ref() == Ok(&p), || "problem did not round-trip".into());
    }
    let summary = format!("10000 fuzz cases (largest {largest} bytes) without a panic; 50 generated domains/problems round-trip");
    c.finish("parser robustness", started, 60, summary)
}

/// Kill-rate and ground-truth Monte-Carlo checks, degenerate probabilities
/// and weed conservation.
pub fn simulator_statistics() -> Report {
    let started = Instant::now();
    let mut c = Checker::new();
    let field = FieldModel::open(WeedMap::uniform(1, 1, 1.0).unwrap());
    let trials = 10_000u64;
    let mut cleared = 0u64;
    for (p_kill, check_exact) in [(0.9, false), (0.0, true), (1.0, true)] {
        let cfg = RobotConfig {
            p_kill,
            ..Default::default()
        };
        let mut hits = 0u64;
        for seed in 0..trials {
            let out = run_mission(&field, &cfg, seed, &["(weed c0)"]).unwrap();
            let m = &out.metrics;
            c.check(m.weeds_present_initially == m.weeds_removed + out.state.weedy.len() as u64, || {
                format!("conservation broken at seed {seed}")
            });
            hits += m.weeds_removed;
        }
        if check_exact {
            c.check(hits == (p_kill as u64) * trials, || format!("p_kill={p_kill}: {hits} of {trials} cleared"));
        } else {
            cleared = hits;
            let rate = hits as f64 / trials as f64;
            c.check((rate - 0.9).abs() <= 0.01, || format!("clear rate {rate}"));
        }
    }
    // Ground truth on a uniform 0.3 map.
    let map = FieldModel::open(WeedMap::uniform(10, 10, 0.3).unwrap());
    let weedy: usize = (0..10_000).map(|s| reset(&map, &RobotConfig::default(), s).weedy.len()).sum();
    let fraction = weedy as f64 / 1_000_000.0;
    c.check((fraction - 0.3).abs() <= 0.01, || format!("weedy fraction {fraction}"));
    // Conservation over whole missions on random maps.
    let mut rng = gen::rng(5);
    for seed in 0..300 {
        let g = random_grid(&mut rng, 4, 4, 0.1, 6, false);
        let (field, targets, problem) = to_field(&g);
        let task = build_task(&field, &targets, &problem).unwrap();
        let p = plan(&task, &SearchConfig::satisficing()).unwrap();
        let labels = p.labels(&task);
        let out = run_mission(&field, &RobotConfig::default(), seed, &labels).unwrap();
        let m = &out.metrics;
        c.check(m.weeds_present_initially == m.weeds_removed + out.state.weedy.len() as u64, || "mission conservation".into());
        c.check(m.weeds_removed <= m.weeds_present_initially, || "removed more than present".into());
    }
    let summary = format!(
        "clear rate {:.4} over {trials} trials; p_kill 0 and 1 exact; weedy fraction {fraction:.4}; conservation on every trial",
        cleared as f64 / trials as f64
    );
    c.finish("simulator statistics", started, 30, summary)
}

/// Two runs with the same inputs give byte-identical traces.
pub fn replay_determinism() -> Report {
    let started = Instant::now();
    let mut c = Checker::new();
    let mut rng = gen::rng(6);
    for seed in 0..100u64 {
        let g = random_grid(&mut rng, 5, 5, 0.15, 6, true);
        let (field, targets, problem) = to_field(&g);
        // Keep the blocked layout, but draw ground truth from varied probabilities.
        let probs: Vec<f64> = (0..field.map().len()).map(|_| rng.random_range(0.0..=1.0)).collect();
        let field = field
            .with_map(WeedMap::new(g.width, g.height, 1.0, (0.0, 0.0), probs).unwrap())
            .unwrap();
        let task = build_task(&field, &targets, &problem).unwrap();
        let p = plan(&task, &SearchConfig::satisficing()).unwrap();
        let labels = p.labels(&task);
        let cfg = RobotConfig {
            p_crop_damage: 0.3,
            battery_capacity: rng.random_range(5.0..60.0),
            ..Default::default()
        };
        let a = trace_to_jsonl(&run_mission(&field, &cfg, seed, &labels).unwrap().trace);
        let b = trace_to_jsonl(&run_mission(&field, &cfg, seed, &labels).unwrap().trace);
        c.check(a == b, || format!("trace differs for seed {seed}"));
    }
    c.finish("replay determinism", started, 30, "100 random missions replay byte-identically".into())
}

/// The exhaustive phase × event × trust table and the random-sequence
/// safety property.
pub fn autonomy_table() -> Report {
    let started = Instant::now();
    let mut c = Checker::new();
    let (cells, failures) = table::check_table();
    for f in failures {
        c.check(false, || f);
    }
    let (sequences, failures) = table::random_sequences(1000, 7);
    for f in failures {
        c.check(false, || f);
    }
    let summary = format!("{cells} (phase, event, trust) cells match the table; {sequences} random event sequences keep every invariant");
    c.finish("autonomy table", started, 60, summary)
}

pub fn weed_map_round_trip(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = gen::rng(seed);
    for _ in 0..cases {
        let map = gen::random_weed_map(&mut rng, 12);
        for format in [MapFormat::GridCsv, MapFormat::GridJson] {
            let bytes = save_weed_map(&map, format);
            let back = load_weed_map(bytes.as_slice(), format).map_err(|e| e.to_string())?;
            if back != map {
                return Err(format!("{format:?} round trip changed {map:?}"));
            }
        }
    }
    Ok(())
}
