mod common;

use std::time::Duration;

use common::fixtures::{four_action_graph, four_actions, id, random_task, RandomAction};
use common::schedule::{longest_path_times, max_time_error};
use proptest::prelude::*;
use tagplan::graph::TaGraph;
use tagplan::instance::Instance;
use tagplan::search::{anytime_loop, QualityMode, SearchConfig};
use tagplan::ActionId;

#[test]
fn fixture_graph_times_match_longest_paths() {
    let inst = four_actions();
    let mut g = four_action_graph(&inst);
    assert!(max_time_error(&inst, &g) < 1e-9);
    g.insert_action(&inst, id(&inst, "a5"), 3);
    assert!(g.is_solution(&inst));
    assert!(max_time_error(&inst, &g) < 1e-9);
    let t = longest_path_times(&inst, &g);
    assert!((t[4].unwrap() - 270.0).abs() < 1e-9);
}

#[test]
fn every_solution_of_the_bundled_tasks_is_scheduled_consistently() {
    let mut checked = 0;
    for name in common::BUNDLED {
        let inst = common::load(name);
        for seed in 0..3 {
            let config = SearchConfig {
                seed,
                mode: QualityMode::Anytime,
                cpu_budget: Duration::from_millis(300),
                ..SearchConfig::default()
            };
            let out = anytime_loop(&inst, &config, |_| {});
            for r in &out.records {
                let err = max_time_error(&inst, &r.graph);
                assert!(err < 1e-9, "{name} seed {seed}: {err}");
                checked += 1;
            }
        }
    }
    assert!(checked >= 12);
}

fn action() -> impl Strategy<Value = RandomAction> {
    (any::<u8>(), any::<u8>(), any::<u8>(), 1u8..10).prop_map(|(pre, add, del, duration)| RandomAction {
        pre: pre & pre.rotate_left(2),
        add,
        del: del & del.rotate_left(3),
        duration,
    })
}

/// Insert (`Some(action index)`) or remove (`None`) at a position picked from the u8.
type Move = (Option<u8>, u8);

fn apply(inst: &Instance, g: &mut TaGraph, (action, at): Move) {
    let n_actions = inst.task.actions.len();
    match action {
        Some(a) if n_actions > 0 => {
            let l = usize::from(at) % (g.n_levels() + 1);
            g.insert_action(inst, ActionId(usize::from(a) % n_actions), l);
        }
        _ => {
            let levels: Vec<usize> = g.actions().map(|(l, _)| l).collect();
            if !levels.is_empty() {
                g.remove_action(inst, levels[usize::from(at) % levels.len()], at % 2 == 0).unwrap();
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mutations_keep_times_on_longest_paths(
        init in any::<u8>(),
        goals in any::<u8>(),
        actions in prop::collection::vec(action(), 1..7),
        moves in prop::collection::vec((prop::option::of(any::<u8>()), any::<u8>()), 0..12),
    ) {
        let inst = Instance::new(random_task(init, goals, &actions));
        let mut g = TaGraph::empty(&inst);
        for m in moves {
            apply(&inst, &mut g, m);
            // panics inside on a cyclic Ω
            prop_assert!(max_time_error(&inst, &g) < 1e-9);
            for c in g.omega() {
                prop_assert!(c.before < c.after);
                prop_assert!(g.action_at(c.before).is_some() && g.action_at(c.after).is_some());
            }
        }
    }

    #[test]
    fn insert_then_remove_restores_the_plan(
        init in any::<u8>(),
        actions in prop::collection::vec(action(), 2..7),
        plan in prop::collection::vec(any::<u8>(), 0..5),
        extra in any::<u8>(),
        at in any::<u8>(),
    ) {
        let inst = Instance::new(random_task(init, 0, &actions));
        let n = inst.task.actions.len();
        let plan: Vec<ActionId> = plan.iter().map(|&a| ActionId(usize::from(a) % n)).collect();
        let mut g = TaGraph::from_plan(&inst, &plan).unwrap();
        let before = g.clone();
        let l = g.insert_action(&inst, ActionId(usize::from(extra) % n), usize::from(at) % (g.n_levels() + 1));
        g.remove_action(&inst, l, false).unwrap();
        g.compact(&inst);
        let mut b = before.clone();
        b.compact(&inst);
        prop_assert_eq!(g.plan(), b.plan());
        prop_assert_eq!(g.inconsistencies(), b.inconsistencies());
        prop_assert_eq!(g.makespan(), b.makespan());
    }
}
