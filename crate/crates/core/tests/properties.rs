use arwac_core::explain::{apply_diff, diff_steps};
use arwac_core::field::{select_targets, FieldModel, Threshold, WeedMap};
use arwac_core::pddl::{apply, validate_plan, Plan};
use arwac_core::planner::build_task;
use arwac_testkit::gen::{random_grid, rng, to_field};
use proptest::prelude::*;

fn map_strategy() -> impl Strategy<Value = WeedMap> {
    (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
        proptest::collection::vec(0.0f64..=1.0, w * h)
            .prop_map(move |p| WeedMap::new(w, h, 0.5, (0.0, 0.0), p).unwrap())
    })
}

proptest! {
    #[test]
    fn higher_threshold_selects_fewer(map in map_strategy(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let field = FieldModel::open(map);
        let low = select_targets(&field, Threshold::new(lo).unwrap());
        let high = select_targets(&field, Threshold::new(hi).unwrap());
        prop_assert!(high.targets.is_subset(&low.targets));
    }

    #[test]
    fn diff_patches_original_into_foil(
        a in proptest::collection::vec("[a-d]", 0..12),
        b in proptest::collection::vec("[a-d]", 0..12),
    ) {
        let d = diff_steps(&a, &b);
        prop_assert_eq!(apply_diff(&a, &d), Some(b.clone()));
        prop_assert_eq!(diff_steps(&a, &a).len(), a.len());
    }

    #[test]
    fn validation_is_deterministic(seed in any::<u64>(), len in 0usize..15) {
        let mut r = rng(seed);
        let g = random_grid(&mut r, 3, 3, 0.2, 3, true);
        let (field, targets, cfg) = to_field(&g);
        let task = build_task(&field, &targets, &cfg).unwrap();
        // Random walk over applicable actions.
        let mut state = task.init().clone();
        let mut steps = Vec::new();
        for _ in 0..len {
            let legal: Vec<_> = (0..task.actions().len())
                .filter(|&i| task.is_applicable(&task.actions()[i], &state))
                .collect();
            if legal.is_empty() {
                break;
            }
            let pick = legal[(seed as usize + steps.len()) % legal.len()];
            state = apply(&task.actions()[pick], &state);
            steps.push(task.actions()[pick].label().to_string());
        }
        let plan = Plan::from_labels(&task, &steps).unwrap();
        let once = validate_plan(&task, &plan).unwrap();
        prop_assert_eq!(&once, &validate_plan(&task, &plan).unwrap());
        prop_assert_eq!(once.is_valid(), task.is_goal(&state));
        let mut again = task.init().clone();
        for &id in plan.steps() {
            again = apply(task.action(id).unwrap(), &again);
        }
        prop_assert_eq!(again, state);
    }
}
