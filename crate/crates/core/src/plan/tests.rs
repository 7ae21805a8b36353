use super::*;
use crate::numeric::{AssignOp, Expr};
use crate::task::{Metric, NumEffect, TaskBuilder};

fn four_actions() -> Instance {
    let mut b = TaskBuilder::new("four");
    b.init(&["f1", "f2", "f3", "f4", "f5"]);
    b.simple("a1", 50.0, &["f1"], &["f6"], &["f10"]);
    b.simple("a2", 70.0, &["f2"], &["f8", "f9", "f10"], &[]);
    b.simple("a3", 100.0, &["f9"], &["f12"], &["f10"]);
    b.simple("a4", 40.0, &["f6", "f7"], &["f12", "f13"], &["f10"]);
    b.simple("a5", 110.0, &["f8"], &["f7"], &[]);
    b.simple("a6", 10.0, &["f5"], &["f7"], &[]);
    b.goal(&["f12", "f13"]);
    Instance::new(b.build())
}

fn id(inst: &Instance, n: &str) -> ActionId {
    inst.task.action_by_name(&format!("({n})")).unwrap()
}

fn solved_four(inst: &Instance) -> TaGraph {
    let plan: Vec<ActionId> = ["a1", "a2", "a3", "a5", "a4"].iter().map(|n| id(inst, n)).collect();
    TaGraph::from_plan(inst, &plan).unwrap()
}

#[test]
fn extraction_schedules_at_time_minus_duration() {
    let inst = four_actions();
    let g = solved_four(&inst);
    let p = extract_plan(&inst, &g).unwrap();
    assert_eq!(p.makespan, 270.0);
    let starts: Vec<f64> = p.steps.iter().map(|s| s.start).collect();
    assert_eq!(starts, vec![0.0, 50.0, 120.0, 120.0, 230.0]);
    assert_eq!(p.certificate.len(), g.omega().len());
    for &(x, y) in &p.certificate {
        assert!(p.steps[y].start >= p.steps[x].end() - 1e-9);
    }
    let r = validate(&inst, &p).unwrap();
    assert!(r.valid, "{:?}", r.violation);
    assert_eq!(p.metric, 5.0);
}

#[test]
fn non_solution_cannot_be_extracted() {
    let inst = four_actions();
    let g = TaGraph::empty(&inst);
    assert_eq!(extract_plan(&inst, &g), Err(PlanError::NotASolution(2)));
}

#[test]
fn empty_plan_has_zero_makespan() {
    let mut b = TaskBuilder::new("t");
    b.init(&["p"]);
    b.goal(&["p"]);
    b.metric(Metric::Linear { constant: 0.0, total_time: 4.0, terms: vec![] });
    let inst = Instance::new(b.build());
    let p = extract_plan(&inst, &TaGraph::empty(&inst)).unwrap();
    assert!(p.steps.is_empty());
    assert_eq!((p.makespan, p.metric), (0.0, 0.0));
    let text = format_plan(&inst, &p, &PlanHeader::default());
    assert!(text.lines().all(|l| l.starts_with(';')));
}

#[test]
fn independent_actions_run_in_parallel() {
    let mut b = TaskBuilder::new("t");
    b.init(&["p", "q"]);
    b.simple("x", 3.0, &["p"], &["gx"], &[]);
    b.simple("y", 5.0, &["q"], &["gy"], &[]);
    b.goal(&["gx", "gy"]);
    let inst = Instance::new(b.build());
    let g = TaGraph::from_plan(&inst, &[ActionId(0), ActionId(1)]).unwrap();
    let p = extract_plan(&inst, &g).unwrap();
    assert_eq!(p.steps[0].start, 0.0);
    assert_eq!(p.steps[1].start, 0.0);
    assert_eq!(p.makespan, 5.0);
    assert!(validate(&inst, &p).unwrap().valid);
}

#[test]
fn dropping_a_step_names_the_earliest_unmet_condition() {
    let inst = four_actions();
    let mut p = extract_plan(&inst, &solved_four(&inst)).unwrap();
    p.steps.remove(3); // a5, the supporter of f7
    let r = validate(&inst, &p).unwrap();
    assert!(!r.valid);
    let v = r.violation.unwrap();
    assert_eq!(v.action, Some((3, "(a4)".to_string())));
    assert!(v.detail.contains("f7"), "{}", v.detail);
    assert_eq!(v.time, 230.0);
}

#[test]
fn overlapping_mutex_actions_are_reported() {
    let inst = four_actions();
    let (a1, a2) = (id(&inst, "a1"), id(&inst, "a2"));
    assert!(inst.mutex.actions.is_mutex(a1, a2));
    let steps =
        vec![PlanStep { start: 0.0, action: a1, duration: 50.0 }, PlanStep { start: 10.0, action: a2, duration: 70.0 }];
    let p = PlanSolution { steps, ..Default::default() };
    let v = validate(&inst, &p).unwrap().violation.unwrap();
    assert!(v.detail.contains("(a1)") && v.detail.contains("(a2)") && v.detail.contains("overlap"), "{}", v.detail);
}

#[test]
fn unknown_action_is_an_error_not_invalid() {
    let inst = four_actions();
    let p = PlanSolution {
        steps: vec![PlanStep { start: 0.0, action: ActionId(99), duration: 1.0 }],
        ..Default::default()
    };
    assert_eq!(validate(&inst, &p), Err(PlanError::UnknownActionId { step: 0, id: 99 }));
}

#[test]
fn wrong_duration_is_invalid() {
    let inst = four_actions();
    let p = PlanSolution {
        steps: vec![PlanStep { start: 0.0, action: id(&inst, "a1"), duration: 5.0 }],
        ..Default::default()
    };
    let v = validate(&inst, &p).unwrap().violation.unwrap();
    assert!(v.detail.contains("duration"));
}

#[test]
fn fly_metric_adds_time_and_fuel_terms() {
    let mut b = TaskBuilder::new("zeno");
    let fuel = b.var("total-fuel-used", 0.0);
    b.init(&["at-c0"]);
    let fly = b.simple("fly", 7.0, &["at-c0"], &["at-c1"], &["at-c0"]);
    b.action_mut(fly).num_eff_end.push(NumEffect {
        var: fuel,
        op: AssignOp::Increase,
        expr: Expr::bin(crate::numeric::BinOp::Mul, Expr::Const(678.0), Expr::Const(4.0)),
    });
    b.goal(&["at-c1"]);
    b.metric(Metric::Linear { constant: 0.0, total_time: 4.0, terms: vec![(fuel, 5.0)] });
    let inst = Instance::new(b.build());
    assert_eq!(inst.task.action(fly).cost, 13560.0);
    let p = PlanSolution { steps: vec![PlanStep { start: 0.0, action: fly, duration: 7.0 }], ..Default::default() };
    assert_eq!(metric_value(&inst, &p), 4.0 * 7.0 + 13560.0);
}

#[test]
fn without_a_metric_the_step_count_is_measured() {
    let inst = four_actions();
    let p = extract_plan(&inst, &solved_four(&inst)).unwrap();
    assert_eq!(metric_value(&inst, &p), 5.0);
}

fn serial() -> Instance {
    let mut b = TaskBuilder::new("serial");
    b.init(&["a"]);
    b.simple("load pkg truck", 1.5, &["a"], &["b"], &[]);
    b.simple("drive truck", 2.25, &["b"], &["c"], &[]);
    b.goal(&["c"]);
    Instance::new(b.build())
}

#[test]
fn serial_plan_file() {
    let inst = serial();
    let g = TaGraph::from_plan(&inst, &[ActionId(0), ActionId(1)]).unwrap();
    let p = extract_plan(&inst, &g).unwrap();
    let text = format_plan(&inst, &p, &PlanHeader { seed: Some(7) });
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with(';')).collect();
    assert_eq!(body, vec!["0.0000: (load pkg truck) [1.5000]", "1.5000: (drive truck) [2.2500]"]);
    assert!(text.contains("; seed: 7\n"));
    assert!(text.contains("; makespan: 3.7500\n"));
    assert!(!text.contains('\r'));
}

#[test]
fn emitted_plans_read_back() {
    let inst = four_actions();
    let p = extract_plan(&inst, &solved_four(&inst)).unwrap();
    let text = format_plan(&inst, &p, &PlanHeader::default());
    let q = read_plan(&inst, &text).unwrap();
    let mut want: Vec<(i64, ActionId)> = p.steps.iter().map(|s| ((s.start * 1e4).round() as i64, s.action)).collect();
    want.sort_by_key(|(t, a)| (*t, inst.task.action(*a).name()));
    let got: Vec<(i64, ActionId)> = q.steps.iter().map(|s| ((s.start * 1e4).round() as i64, s.action)).collect();
    assert_eq!(got, want);
    assert!(validate(&inst, &q).unwrap().valid);
    // start-time order rebuilds an equivalent graph
    let g = TaGraph::from_plan(&inst, &q.steps.iter().map(|s| s.action).collect::<Vec<_>>()).unwrap();
    assert!(g.is_solution(&inst));
}

#[test]
fn plan_reader_errors() {
    let inst = four_actions();
    assert!(matches!(parse_plan("0.0 (a1)"), Err(PlanError::Syntax { line: 1, .. })));
    assert!(matches!(parse_plan("; c\nx: (a1)"), Err(PlanError::Syntax { line: 2, .. })));
    assert!(matches!(parse_plan("0: (a1) 5"), Err(PlanError::Syntax { .. })));
    assert!(matches!(parse_plan("0: ()"), Err(PlanError::Syntax { .. })));
    assert!(matches!(read_plan(&inst, "0: (zzz)"), Err(PlanError::UnknownAction { line: 1, .. })));
    let p = read_plan(&inst, "0:  ( A1 )\n").unwrap();
    assert_eq!(p.steps[0].duration, 50.0);
}

#[test]
fn stats_csv() {
    let rows = vec![
        StatsRow { solution_index: 1, wall_ms: 5, steps: 10, restarts: 1, metric: 20.0, makespan: 1.0 },
        StatsRow { solution_index: 2, wall_ms: 9, steps: 30, restarts: 2, metric: 6.0, makespan: 3.0 },
    ];
    let mut buf = Vec::new();
    emit_stats(&rows, &mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "solution_index,wall_ms,steps,restarts,metric,makespan\n1,5,10,1,20.0000,1.0000\n2,9,30,2,6.0000,3.0000\n"
    );
}
