//! Scheduled plans: extraction from solution graphs, an independent
//! execution simulator used as validator, metric evaluation, and the plan
//! and statistics file formats.
//!
//! Plan file: `;` header comments, then one line per step
//! `<start>: (<name> <args>) [<duration>]`, sorted by start time then name,
//! with times printed to four decimals.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io;

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::graph::TaGraph;
use crate::instance::Instance;
use crate::task::{eval_duration, ActionId, GroundAction};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PlanError {
    #[error("the graph still has {0} inconsistencies")]
    NotASolution(usize),
    #[error("plan step {step}: unknown action id {id}")]
    UnknownActionId { step: usize, id: usize },
    #[error("line {line}: unknown action `{name}`")]
    UnknownAction { line: usize, name: String },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanStep {
    pub start: f64,
    pub action: ActionId,
    pub duration: f64,
}

impl PlanStep {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// A scheduled plan. Steps keep the graph's level order; `certificate`
/// holds the ordering constraints as pairs of step indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanSolution {
    pub steps: Vec<PlanStep>,
    pub makespan: f64,
    pub metric: f64,
    pub certificate: Vec<(usize, usize)>,
}

/// Schedules the actions of a solution graph at `Time(a) - Duration(a)`.
pub fn extract_plan(inst: &Instance, graph: &TaGraph) -> Result<PlanSolution, PlanError> {
    if !graph.inconsistencies().is_empty() {
        return Err(PlanError::NotASolution(graph.inconsistencies().len()));
    }
    let mut step_of = HashMap::new();
    let mut steps = Vec::new();
    for (l, a) in graph.actions() {
        step_of.insert(l, steps.len());
        let duration = graph.duration(l).unwrap_or(0.0);
        let end = graph.time(l).unwrap_or(0.0);
        steps.push(PlanStep { start: end - duration, action: a, duration });
    }
    let certificate = graph.omega().iter().map(|c| (step_of[&c.before], step_of[&c.after])).collect();
    let makespan = steps.iter().map(PlanStep::end).fold(0.0, f64::max);
    let mut plan = PlanSolution { steps, makespan, metric: 0.0, certificate };
    plan.metric = metric_value(inst, &plan);
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub time: f64,
    /// Step index and action name, when a step is to blame.
    pub action: Option<(usize, String)>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub valid: bool,
    pub violation: Option<Violation>,
    pub goals_hold: bool,
    /// Metric recomputed from the simulated final state.
    pub metric: f64,
    pub makespan: f64,
}

/// Tolerances used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateOptions {
    /// Events closer than this are simultaneous; also the slack for
    /// ordering and duration checks.
    pub time_tolerance: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions { time_tolerance: 1e-9 }
    }
}

/// Slack for plans read back from plan files, whose times carry four decimals.
pub const FILE_TIME_TOLERANCE: f64 = 1e-4;

impl ValidateOptions {
    pub fn for_files() -> Self {
        ValidateOptions { time_tolerance: FILE_TIME_TOLERANCE }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Phase {
    End,
    Start,
}

struct Sim<'a> {
    inst: &'a Instance,
    facts: FixedBitSet,
    values: Vec<f64>,
    violation: Option<Violation>,
}

/// Which precondition set of an action is being checked.
#[derive(Debug, Clone, Copy)]
enum When {
    Start,
    End,
    OverAll,
}

impl Sim<'_> {
    fn fail(&mut self, time: f64, step: Option<(usize, &GroundAction)>, detail: String) {
        if self.violation.is_none() {
            self.violation = Some(Violation { time, action: step.map(|(i, a)| (i, a.name())), detail });
        }
    }

    fn check(&mut self, time: f64, i: usize, a: &GroundAction, when: When, dur: f64) {
        let (facts, nums, what) = match when {
            When::Start => (&a.pre_start, &a.num_pre_start, "at-start"),
            When::End => (&a.pre_end, &a.num_pre_end, "at-end"),
            When::OverAll => (&a.pre_overall, &a.num_pre_overall, "over-all"),
        };
        for f in facts {
            if !self.facts.contains(f.0) {
                let name = self.inst.task.facts[f.0].clone();
                self.fail(time, Some((i, a)), format!("{what} condition {name} does not hold"));
            }
        }
        for c in nums {
            if !c.holds(&self.values, Some(dur)) {
                self.fail(
                    time,
                    Some((i, a)),
                    format!("{what} numeric condition {} {} {} does not hold", c.lhs, c.rel.symbol(), c.rhs),
                );
            }
        }
    }

    fn apply(&mut self, time: f64, i: usize, a: &GroundAction, at_end: bool, dur: f64) {
        let (add, del) = if at_end { (&a.add_end, &a.del_end) } else { (&a.add_start, &a.del_start) };
        for f in del {
            self.facts.set(f.0, false);
        }
        for f in add {
            self.facts.insert(f.0);
        }
        if let Err(e) = a.apply_numeric(at_end, &mut self.values, Some(dur)) {
            self.fail(time, Some((i, a)), format!("numeric effect failed: {e}"));
        }
    }
}

fn simulate(inst: &Instance, plan: &PlanSolution, opts: ValidateOptions) -> Result<ValidationReport, PlanError> {
    let task = &inst.task;
    let tol = opts.time_tolerance;
    for (i, s) in plan.steps.iter().enumerate() {
        if s.action.0 >= task.actions.len() {
            return Err(PlanError::UnknownActionId { step: i, id: s.action.0 });
        }
    }
    let mut sim = Sim {
        inst,
        facts: crate::reach::state_bits(task.n_facts(), &task.init),
        values: task.init_values.clone(),
        violation: None,
    };
    let steps = &plan.steps;
    for (i, s) in steps.iter().enumerate() {
        if s.start < -tol {
            sim.fail(s.start, Some((i, task.action(s.action))), "negative start time".into());
        }
    }
    // every event, ends before starts at the same time point
    let mut events: Vec<(f64, Phase, usize)> = Vec::new();
    for (i, s) in steps.iter().enumerate() {
        events.push((s.start, Phase::Start, i));
        events.push((s.end(), Phase::End, i));
    }
    events.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut groups: Vec<Vec<(f64, Phase, usize)>> = Vec::new();
    for e in events {
        match groups.last_mut() {
            Some(g) if e.0 - g[0].0 <= tol => g.push(e),
            _ => groups.push(vec![e]),
        }
    }
    let mut started = vec![false; steps.len()];
    for mut group in groups {
        // the end of a step never precedes its own start
        group.sort_by_key(|e| (if e.1 == Phase::End && !started[e.2] { 2 } else { e.1 as u8 }, e.2));
        let t = group[0].0;
        for &(_, phase, i) in &group {
            let s = steps[i];
            let a = task.action(s.action);
            match phase {
                Phase::Start => {
                    started[i] = true;
                    match eval_duration(a, &sim.values) {
                        Ok(d) if (d - s.duration).abs() <= tol.max(1e-9 * d.abs()) => {}
                        Ok(d) => sim.fail(t, Some((i, a)), format!("duration {} differs from {d}", s.duration)),
                        Err(e) => sim.fail(t, Some((i, a)), e.to_string()),
                    }
                    sim.check(t, i, a, When::Start, s.duration);
                    sim.apply(t, i, a, false, s.duration);
                }
                Phase::End => {
                    sim.check(t, i, a, When::End, s.duration);
                    sim.apply(t, i, a, true, s.duration);
                }
            }
        }
        // over-all conditions on the open interval following this point
        for (i, s) in steps.iter().enumerate() {
            if s.start <= t + tol && s.end() > t + tol {
                let a = task.action(s.action);
                sim.check(t, i, a, When::OverAll, s.duration);
            }
        }
    }
    for i in 0..steps.len() {
        for j in i + 1..steps.len() {
            let (x, y) = (steps[i], steps[j]);
            if inst.mutex.actions.is_mutex(x.action, y.action) && x.end() > y.start + tol && y.end() > x.start + tol {
                let (nx, ny) = (task.action(x.action).name(), task.action(y.action).name());
                sim.fail(
                    x.start.max(y.start),
                    None,
                    format!("mutex actions {nx} (step {i}) and {ny} (step {j}) overlap"),
                );
            }
        }
    }
    let makespan = steps.iter().map(PlanStep::end).fold(0.0, f64::max);
    let mut goals_hold = true;
    for g in &task.goals {
        if !sim.facts.contains(g.0) {
            goals_hold = false;
            let name = task.facts[g.0].clone();
            sim.fail(makespan, None, format!("goal {name} does not hold"));
        }
    }
    for c in &task.goal_num {
        if !c.holds(&sim.values, None) {
            goals_hold = false;
            sim.fail(makespan, None, format!("numeric goal {} {} {} does not hold", c.lhs, c.rel.symbol(), c.rhs));
        }
    }
    let metric = task.metric.value(&sim.values, makespan, steps.len());
    Ok(ValidationReport { valid: sim.violation.is_none(), violation: sim.violation, goals_hold, metric, makespan })
}

/// Simulates `plan` from the initial state and reports the first violated
/// condition, mutex overlap, or unmet goal.
pub fn validate(inst: &Instance, plan: &PlanSolution) -> Result<ValidationReport, PlanError> {
    simulate(inst, plan, ValidateOptions::default())
}

pub fn validate_with(
    inst: &Instance,
    plan: &PlanSolution,
    opts: ValidateOptions,
) -> Result<ValidationReport, PlanError> {
    simulate(inst, plan, opts)
}

/// The task metric at the final state with `total-time` = makespan; the
/// number of steps when the task has no metric.
pub fn metric_value(inst: &Instance, plan: &PlanSolution) -> f64 {
    match simulate(inst, plan, ValidateOptions::default()) {
        Ok(r) => r.metric,
        Err(_) => f64::NAN,
    }
}

/// Header fields of a plan file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanHeader {
    pub seed: Option<u64>,
}

/// Writes `plan` in the plan file format.
pub fn emit<W: io::Write>(inst: &Instance, plan: &PlanSolution, header: &PlanHeader, mut w: W) -> io::Result<()> {
    w.write_all(format_plan(inst, plan, header).as_bytes())
}

pub fn format_plan(inst: &Instance, plan: &PlanSolution, header: &PlanHeader) -> String {
    let task = &inst.task;
    let mut s = String::new();
    let _ = writeln!(s, "; domain: {}", task.domain_name);
    let _ = writeln!(s, "; problem: {}", task.problem_name);
    if let Some(seed) = header.seed {
        let _ = writeln!(s, "; seed: {seed}");
    }
    let _ = writeln!(s, "; metric: {:.4}", plan.metric);
    let _ = writeln!(s, "; makespan: {:.4}", plan.makespan);
    let mut lines: Vec<(f64, String, f64)> =
        plan.steps.iter().map(|st| (st.start, task.action(st.action).name(), st.duration)).collect();
    lines.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    for (start, name, dur) in lines {
        let _ = writeln!(s, "{:.4}: {name} [{:.4}]", start + 0.0, dur);
    }
    s
}

/// One row of the statistics file.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub solution_index: usize,
    pub wall_ms: u128,
    pub steps: u64,
    pub restarts: usize,
    pub metric: f64,
    pub makespan: f64,
}

/// Writes the statistics CSV.
pub fn emit_stats<W: io::Write>(rows: &[StatsRow], w: W) -> csv::Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(["solution_index", "wall_ms", "steps", "restarts", "metric", "makespan"])?;
    for r in rows {
        out.write_record([
            r.solution_index.to_string(),
            r.wall_ms.to_string(),
            r.steps.to_string(),
            r.restarts.to_string(),
            format!("{:.4}", r.metric),
            format!("{:.4}", r.makespan),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// A plan line as written, before name resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct RawStep {
    pub line: usize,
    pub start: f64,
    pub name: String,
    pub duration: Option<f64>,
}

fn normalize_name(s: &str) -> String {
    let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
    let words: Vec<String> = inner.split_whitespace().map(str::to_lowercase).collect();
    format!("({})", words.join(" "))
}

/// Parses plan lines `<start>: (<name> <args>) [<duration>]`; the duration
/// is optional, and blank lines and `;` comments are skipped.
pub fn parse_plan(text: &str) -> Result<Vec<RawStep>, PlanError> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split(';').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |msg: &str| PlanError::Syntax { line, msg: msg.to_string() };
        let (start, rest) = body.split_once(':').ok_or_else(|| err("expected `<start>: (<action>)`"))?;
        let start: f64 = start.trim().parse().map_err(|_| err("start time is not a number"))?;
        if !start.is_finite() {
            return Err(err("start time is not finite"));
        }
        let rest = rest.trim();
        if !rest.starts_with('(') {
            return Err(err("expected `(` before the action name"));
        }
        let close = rest.find(')').ok_or_else(|| err("unclosed action name"))?;
        let name = normalize_name(&rest[..=close]);
        if name == "()" {
            return Err(err("empty action name"));
        }
        let tail = rest[close + 1..].trim();
        let duration = if tail.is_empty() {
            None
        } else {
            let d = tail
                .strip_prefix('[')
                .and_then(|t| t.strip_suffix(']'))
                .ok_or_else(|| err("expected `[<duration>]`"))?;
            let d: f64 = d.trim().parse().map_err(|_| err("duration is not a number"))?;
            if !d.is_finite() || d < 0.0 {
                return Err(err("duration must be finite and non-negative"));
            }
            Some(d)
        };
        out.push(RawStep { line, start, name, duration });
    }
    Ok(out)
}

/// Reads a plan file against a task; steps come out in start-time order.
/// Missing durations are evaluated in the initial state.
pub fn read_plan(inst: &Instance, text: &str) -> Result<PlanSolution, PlanError> {
    let by_name: HashMap<String, ActionId> =
        inst.task.actions.iter().map(|a| (normalize_name(&a.name()), a.id)).collect();
    let mut raw = parse_plan(text)?;
    raw.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.line.cmp(&b.line)));
    let mut steps = Vec::with_capacity(raw.len());
    for r in raw {
        let id = *by_name.get(&r.name).ok_or(PlanError::UnknownAction { line: r.line, name: r.name.clone() })?;
        let duration = match r.duration {
            Some(d) => d,
            None => inst.index.static_duration[id.0]
                .or_else(|| eval_duration(inst.task.action(id), &inst.task.init_values).ok())
                .unwrap_or(0.0),
        };
        steps.push(PlanStep { start: r.start, action: id, duration });
    }
    let makespan = steps.iter().map(PlanStep::end).fold(0.0, f64::max);
    let mut plan = PlanSolution { steps, makespan, metric: 0.0, certificate: Vec::new() };
    plan.metric = metric_value(inst, &plan);
    Ok(plan)
}

#[cfg(test)]
mod tests;
