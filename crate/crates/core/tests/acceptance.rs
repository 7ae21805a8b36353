mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::fixtures::{
    candidate_graph, candidate_task, complement_pairs, fact, fly_task, four_action_graph, four_actions, id,
    mutex_tasks, seven_actions,
};
use common::schedule::max_time_error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tagplan::eval::{eval_add, pre_goals, EvalCtx, RelaxedPlan};
use tagplan::graph::TaGraph;
use tagplan::index::TaskIndex;
use tagplan::instance::Instance;
use tagplan::mutex::{brute_force_persistent_mutex, compute_mutex_facts, ORACLE_STATE_CAP};
use tagplan::plan::{extract_plan, format_plan, validate, PlanHeader};
use tagplan::reach::{canonical_order, compute_reachability, state_bits, ReachCache};
use tagplan::search::{anytime_loop, write_trace, NoiseController, QualityMode, SearchConfig, SolutionRecord};
use tagplan::ActionId;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn under(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    ensure(elapsed < limit, || format!("{what} took {elapsed:?}, limit {limit:?}"))
}

fn relaxed_plan_fixture() -> Check {
    let inst = candidate_task();
    let g = candidate_graph(&inst);
    let a = id(&inst, "a");
    let t0 = Instant::now();
    let mut cache = ReachCache::new();
    let rp = {
        let mut ctx = EvalCtx::new(&inst, &g, 4, &mut cache);
        ctx.relaxed_plan(&pre_goals(&inst, a), &RelaxedPlan::default())
    };
    let e = eval_add(&inst, &g, &mut cache, a, 4);
    let elapsed = t0.elapsed();
    let names = |s: BTreeSet<ActionId>| s.into_iter().map(|x| inst.task.action(x).name()).collect::<Vec<_>>();
    let want: BTreeSet<ActionId> = ["a1", "a4", "a5"].iter().map(|n| id(&inst, n)).collect();
    ensure(rp.action_set() == want, || format!("relaxed plan {:?}", names(rp.action_set())))?;
    ensure(close(rp.end_time, 240.0), || format!("relaxed plan end {}", rp.end_time))?;
    let want: BTreeSet<ActionId> = ["a1", "a4", "a5", "a", "a7"].iter().map(|n| id(&inst, n)).collect();
    ensure(e.plan.action_set() == want, || format!("insertion plan {:?}", names(e.plan.action_set())))?;
    ensure(close(e.end_time, 270.0), || format!("insertion end {}", e.end_time))?;
    under(elapsed, Duration::from_millis(1), "evaluation")?;
    Ok(format!("({{a1,a4,a5}}, 240) then {{a1,a4,a5,a,a7}} ending 270 in {elapsed:?}"))
}

fn reachability_fixture() -> Check {
    let t = seven_actions();
    let idx = TaskIndex::new(&t);
    let t0 = Instant::now();
    let r = compute_reachability(&t, &idx, &state_bits(t.n_facts(), &t.init), &[], &canonical_order(&t));
    let a7 = t.action_by_name("(a7)").unwrap();
    let required = r.required_actions(&idx, &idx.pre[a7.0]);
    let elapsed = t0.elapsed();
    let want = [(1, 10.0), (1, 30.0), (1, 30.0), (1, 50.0), (3, 80.0), (3, 120.0), (2, 80.0), (2, 80.0), (7, 140.0)];
    for (i, (n, time)) in want.into_iter().enumerate() {
        let name = format!("f{}", i + 9);
        let f = t.fact(&name).unwrap();
        ensure(r.num_acts(f) == Some(n) && r.time(f) == Some(time), || {
            format!("{name}: ({:?}, {:?}), expected ({n}, {time})", r.num_acts(f), r.time(f))
        })?;
    }
    ensure(required == Ok(6), || format!("required actions {required:?}"))?;
    under(elapsed, Duration::from_millis(1), "reachability")?;
    Ok(format!("f9..f17 match, 6 actions required in {elapsed:?}"))
}

fn insertion_fixture() -> Check {
    let inst = four_actions();
    let mut g = four_action_graph(&inst);
    let t0 = Instant::now();
    let l = g.insert_action(&inst, id(&inst, "a5"), 3);
    let elapsed = t0.elapsed();
    let a4 = l + 1;
    let f7 = g.node(a4, fact(&inst, "f7")).map(|n| n.time);
    let goal = g.goal_level();
    let f12 = g.node(goal, fact(&inst, "f12")).map(|n| n.time);
    let f13 = g.node(goal, fact(&inst, "f13")).map(|n| n.time);
    let got = (f7, g.time(a4), f12, f13);
    let ok = [(f7, 230.0), (g.time(a4), 270.0), (f12, 220.0), (f13, 270.0)]
        .iter()
        .all(|(x, want)| x.is_some_and(|x| close(x, *want)));
    ensure(ok, || format!("got {got:?}"))?;
    ensure(g.action_at(a4) == Some(id(&inst, "a4")), || "a4 not after a5".into())?;
    under(elapsed, Duration::from_millis(1), "insertion")?;
    Ok(format!("Time(f7)=230, Time(a4)=270, Time(f12)=220, Time(f13)=270 in {elapsed:?}"))
}

fn mutex_soundness() -> Check {
    let t0 = Instant::now();
    let tasks = mutex_tasks();
    let mut pairs = 0;
    let mut complements = 0;
    for (name, task) in &tasks {
        ensure(task.n_facts() <= 20, || format!("{name} has {} facts", task.n_facts()))?;
        let m = compute_mutex_facts(task.n_facts(), &task.init, &task.actions);
        let oracle = brute_force_persistent_mutex(task, ORACLE_STATE_CAP).map_err(|e| format!("{name}: {e}"))?;
        for (f, g) in m.pairs() {
            ensure(oracle.is_mutex(f, g), || format!("{name}: false mutex {} / {}", task.facts[f.0], task.facts[g.0]))?;
        }
        for (p, np) in complement_pairs(task) {
            ensure(m.is_mutex(p, np), || format!("{name}: missed {} / {}", task.facts[p.0], task.facts[np.0]))?;
            complements += 1;
        }
        pairs += m.len();
    }
    ensure(tasks.len() >= 5, || "fewer than five tasks".into())?;
    ensure(complements > 0, || "no compiled complement pairs checked".into())?;
    let elapsed = t0.elapsed();
    under(elapsed, Duration::from_secs(5), "mutex checks")?;
    Ok(format!("{} tasks, {pairs} pairs, {complements} complement pairs, no false positives, {elapsed:?}", tasks.len()))
}

/// Runs the default configuration on a bundled task, checking each solution as it arrives.
fn solve(inst: &Instance, config: &SearchConfig) -> (Vec<SolutionRecord>, Vec<String>) {
    let mut problems = Vec::new();
    let out = anytime_loop(inst, config, |rec| match extract_plan(inst, &rec.graph).map(|p| validate(inst, &p)) {
        Ok(Ok(r)) if r.valid => {}
        other => problems.push(format!("solution {:.4} rejected: {other:?}", rec.metric)),
    });
    (out.records, problems)
}

fn end_to_end(graphs: &mut Vec<(String, TaGraph)>) -> Check {
    let mut summary = Vec::new();
    for name in ["logistics", "zeno", "rocket"] {
        let inst = common::load(name);
        let t0 = Instant::now();
        let (records, problems) = solve(&inst, &SearchConfig::default());
        let elapsed = t0.elapsed();
        ensure(problems.is_empty(), || format!("{name}: {problems:?}"))?;
        let best = records.last().ok_or_else(|| format!("{name}: no solution"))?;
        under(elapsed, Duration::from_secs(2), name)?;
        summary.push(format!("{name} {} actions in {elapsed:.1?}", best.plan.len()));
        graphs.extend(records.iter().map(|r| (name.to_string(), r.graph.clone())));
    }
    Ok(summary.join(", "))
}

/// Cheapest metric over all sequential plans of at most `depth` actions.
/// Only meaningful for metrics without a total-time term.
fn enumerate_optimum(inst: &Instance, depth: usize) -> Option<f64> {
    fn go(inst: &Instance, facts: &BTreeSet<usize>, values: &[f64], n: usize, depth: usize, best: &mut Option<f64>) {
        let task = &inst.task;
        let goals =
            task.goals.iter().all(|g| facts.contains(&g.0)) && task.goal_num.iter().all(|c| c.holds(values, None));
        if goals {
            let m = task.metric.value(values, 0.0, n);
            if best.is_none_or(|b| m < b) {
                *best = Some(m);
            }
        }
        if n == depth {
            return;
        }
        for a in &task.actions {
            let Ok(d) = tagplan::task::eval_duration(a, values) else { continue };
            if !a.pre_all().iter().all(|p| facts.contains(&p.0)) || !a.num_pre_all().all(|c| c.holds(values, Some(d))) {
                continue;
            }
            let mut next = facts.clone();
            for f in a.del_all() {
                next.remove(&f.0);
            }
            next.extend(a.add_all().iter().map(|f| f.0));
            let mut vals = values.to_vec();
            if a.apply_numeric(false, &mut vals, Some(d)).is_err() || a.apply_numeric(true, &mut vals, Some(d)).is_err()
            {
                continue;
            }
            go(inst, &next, &vals, n + 1, depth, best);
        }
    }
    assert_eq!(inst.task.metric.total_time_coef(), 0.0);
    let init: BTreeSet<usize> = inst.task.init.iter().map(|f| f.0).collect();
    let mut best = None;
    go(inst, &init, &inst.task.init_values, 0, depth, &mut best);
    best
}

fn anytime(graphs: &mut Vec<(String, TaGraph)>) -> Check {
    let inst = common::load("shortcut");
    let optimum = enumerate_optimum(&inst, 5).ok_or("enumeration found no plan")?;
    let budget = Duration::from_secs(10);
    let mut reached = 0;
    let mut runs = Vec::new();
    for seed in 1..=5 {
        let config = SearchConfig {
            seed,
            mode: QualityMode::Anytime,
            cpu_budget: budget,
            metric_target: Some(optimum),
            ..SearchConfig::default()
        };
        let (records, problems) = solve(&inst, &config);
        ensure(problems.is_empty(), || format!("seed {seed}: {problems:?}"))?;
        let metrics: Vec<f64> = records.iter().map(|r| r.metric).collect();
        ensure(metrics.len() >= 2, || format!("seed {seed}: solutions {metrics:?}"))?;
        ensure(metrics.windows(2).all(|w| w[1] < w[0]), || format!("seed {seed}: not decreasing {metrics:?}"))?;
        if let Some(r) = records.iter().find(|r| close(r.metric, optimum)) {
            if r.found_at <= budget {
                reached += 1;
            }
        }
        runs.push(format!("{metrics:?}"));
        graphs.extend(records.iter().map(|r| ("shortcut".to_string(), r.graph.clone())));
    }
    ensure(reached >= 4, || format!("optimum {optimum} reached in {reached}/5 runs: {}", runs.join(" ")))?;
    Ok(format!("optimum {optimum} reached in {reached}/5 runs, e.g. {}", runs[0]))
}

fn schedule_soundness(graphs: &[(String, TaGraph)]) -> Check {
    ensure(!graphs.is_empty(), || "no solution graphs collected".into())?;
    let mut worst = 0.0f64;
    let mut cache: Vec<(String, Instance)> = Vec::new();
    for (name, g) in graphs {
        if !cache.iter().any(|(n, _)| n == name) {
            cache.push((name.clone(), common::load(name)));
        }
        let inst = &cache.iter().find(|(n, _)| n == name).unwrap().1;
        let err = max_time_error(inst, g);
        ensure(err <= 1e-9, || format!("{name}: stored times off by {err}"))?;
        worst = worst.max(err);
    }
    let inst = four_actions();
    let mut g = four_action_graph(&inst);
    g.insert_action(&inst, id(&inst, "a5"), 3);
    let err = max_time_error(&inst, &g);
    ensure(err <= 1e-9, || format!("fixture graph off by {err}"))?;
    Ok(format!("{} solution graphs, largest deviation {worst:e}", graphs.len() + 1))
}

fn determinism() -> Check {
    let inst = common::load("zeno");
    let run = || {
        let config = SearchConfig {
            seed: 11,
            mode: QualityMode::Anytime,
            max_total_steps: Some(3000),
            cpu_budget: Duration::from_secs(60),
            record_trace: true,
            ..SearchConfig::default()
        };
        let out = anytime_loop(&inst, &config, |_| {});
        let plans: Vec<String> = out
            .records
            .iter()
            .map(|r| format_plan(&inst, &extract_plan(&inst, &r.graph).unwrap(), &PlanHeader { seed: Some(11) }))
            .collect();
        let mut trace = Vec::new();
        write_trace(&out.trace, &mut trace).unwrap();
        (plans, trace)
    };
    let (p1, t1) = run();
    let (p2, t2) = run();
    ensure(!p1.is_empty(), || "no plans".into())?;
    ensure(p1 == p2, || "plan files differ".into())?;
    ensure(t1 == t2, || "traces differ".into())?;
    Ok(format!("{} plan files and a {}-byte trace identical across runs", p1.len(), t1.len()))
}

fn cost_computation() -> Check {
    let (task, fly) = fly_task(4.0, 5.0);
    let cost = task.action(fly).cost;
    ensure(cost == 13560.0, || format!("fly cost {cost}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..100 {
        common::metric::invariance_case(&mut rng).map_err(|e| format!("case {i}: {e}"))?;
    }
    Ok("fly costs 13560; 100 random metrics unaffected by total-time".into())
}

fn noise_adaptation() -> Check {
    let config = SearchConfig::default();
    let mut c = NoiseController::new(&config);
    for _ in 0..60 {
        c.observe(3);
    }
    let raised = c.p();
    ensure(raised > 0.1, || format!("constant trace left p at {raised}"))?;
    for i in 0..60 {
        c.observe(if i % 2 == 0 { 1 } else { 9 });
    }
    let reset = c.p();
    ensure(reset == 0.1, || format!("high-variance trace left p at {reset}"))?;
    Ok(format!("p rose to {raised:.3}, then reset to {reset}"))
}

fn main() -> ExitCode {
    let mut graphs = Vec::new();
    let results: Vec<(usize, &str, Check)> = vec![
        (1, "relaxed plan and insertion estimate fixture", relaxed_plan_fixture()),
        (2, "reachability fixture", reachability_fixture()),
        (3, "time propagation on insertion", insertion_fixture()),
        (4, "mutex soundness", mutex_soundness()),
        (6, "end-to-end on bundled tasks", end_to_end(&mut graphs)),
        (7, "anytime improvement to the optimum", anytime(&mut graphs)),
        (5, "schedule soundness", schedule_soundness(&graphs)),
        (8, "determinism", determinism()),
        (9, "action cost computation", cost_computation()),
        (10, "noise adaptation", noise_adaptation()),
    ];
    let mut results = results;
    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (n, what, r) in &results {
        match r {
            Ok(detail) => println!("PASS {n:>2} {what}: {detail}"),
            Err(e) => {
                failed += 1;
                println!("FAIL {n:>2} {what}: {e}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
