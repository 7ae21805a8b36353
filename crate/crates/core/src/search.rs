//! Walkplan: stochastic local search over temporal action graphs with
//! restarts and adaptive noise, wrapped in an anytime loop that keeps
//! looking for cheaper plans after the first one.

use std::collections::{BTreeSet, VecDeque};
use std::io;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eval::{decreases_gap, eval_add, eval_del, scores, Bounds, EvalTriple, Evaluation, Weights};
use crate::graph::{Flaw, Inconsistency, Supporter, TaGraph, TIME_TOLERANCE};
use crate::instance::Instance;
use crate::reach::ReachCache;
use crate::task::{ActionId, NumCond};

/// Minimum metric decrease for a solution to count as an improvement.
pub const IMPROVEMENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QualityMode {
    /// Stop at the first solution.
    FirstSolution,
    /// Keep improving until the budget runs out.
    Anytime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub max_steps: usize,
    pub max_restarts: usize,
    /// Initial noise; also the value the adaptation falls back to.
    pub noise: f64,
    pub seed: u64,
    pub cpu_budget: Duration,
    pub mode: QualityMode,
    pub induced_pruning: bool,
    /// Fraction of plan actions removed when forcing inconsistencies.
    pub removal_fraction: f64,
    /// Step budget multiplier applied at every restart.
    pub restart_growth: f64,
    pub noise_window: usize,
    /// Coefficient of variation below which the noise grows.
    pub noise_cv_threshold: f64,
    pub noise_growth: f64,
    /// Stop after this many solutions (anytime mode).
    pub max_solutions: Option<usize>,
    /// Stop after this many search steps in total.
    pub max_total_steps: Option<u64>,
    /// Stop once a solution with at most this metric is found.
    pub metric_target: Option<f64>,
    /// Keep a per-step trace.
    pub record_trace: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_steps: 500,
            max_restarts: 20,
            noise: 0.1,
            seed: 0,
            cpu_budget: Duration::from_secs(60),
            mode: QualityMode::FirstSolution,
            induced_pruning: true,
            removal_fraction: 0.05,
            restart_growth: 1.1,
            noise_window: 50,
            noise_cv_threshold: 0.05,
            noise_growth: 1.25,
            max_solutions: None,
            max_total_steps: None,
            metric_target: None,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ConfigError {
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("{name} must lie in [0, 1], got {value}")]
    OutOfRange { name: &'static str, value: f64 },
}

impl SearchConfig {
    /// Checks the bounds; the noise is clamped into [0, 1].
    pub fn validated(mut self) -> Result<Self, ConfigError> {
        if self.max_steps == 0 {
            return Err(ConfigError::NotPositive("max_steps"));
        }
        if self.max_restarts == 0 {
            return Err(ConfigError::NotPositive("max_restarts"));
        }
        if self.cpu_budget.is_zero() {
            return Err(ConfigError::NotPositive("cpu_budget"));
        }
        if self.noise_window == 0 {
            return Err(ConfigError::NotPositive("noise_window"));
        }
        if self.restart_growth.is_nan() || self.restart_growth < 1.0 {
            return Err(ConfigError::NotPositive("restart_growth - 1"));
        }
        if !(self.removal_fraction > 0.0 && self.removal_fraction <= 1.0) {
            return Err(ConfigError::OutOfRange { name: "removal_fraction", value: self.removal_fraction });
        }
        if self.noise.is_nan() {
            return Err(ConfigError::OutOfRange { name: "noise", value: self.noise });
        }
        self.noise = self.noise.clamp(0.0, 1.0);
        Ok(self)
    }
}

/// A graph modification resolving an inconsistency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mutation {
    Insert { action: ActionId, level: usize },
    Remove { level: usize },
}

impl Mutation {
    pub fn describe(&self, inst: &Instance, graph: &TaGraph) -> String {
        match *self {
            Mutation::Insert { action, level } => format!("insert {} @{level}", inst.task.action(action).name()),
            Mutation::Remove { level } => match graph.action_at(level) {
                Some(a) => format!("remove {} @{level}", inst.task.action(a).name()),
                None => format!("remove @{level}"),
            },
        }
    }
}

/// The numeric condition a numeric inconsistency refers to.
pub fn numeric_condition<'a>(inst: &'a Instance, graph: &TaGraph, level: usize, k: usize) -> Option<&'a NumCond> {
    if level == graph.goal_level() {
        inst.task.goal_num.get(k)
    } else {
        graph.action_at(level).and_then(|a| inst.task.action(a).num_pre_all().nth(k))
    }
}

fn applicable(inst: &Instance, a: ActionId) -> bool {
    inst.index.pre[a.0].iter().all(|p| inst.init_reach.is_reachable(*p))
}

/// Candidate modifications for `sigma`: removing its owner (never the goal
/// level) and inserting supporting actions. Insertion levels whose only
/// difference is the position among empty levels are merged, keeping the
/// latest empty level (or the splice point when there is none).
pub fn build_neighborhood(inst: &Instance, graph: &TaGraph, sigma: &Inconsistency) -> Vec<Mutation> {
    let l_max = sigma.level;
    let mut out = Vec::new();
    match sigma.flaw {
        Flaw::Fact(f) => {
            let blocker = (0..l_max.min(graph.n_levels())).rev().find(|&k| {
                graph.action_at(k).is_some_and(|b| {
                    inst.mutex.actions.blocks_noop(b, f) && inst.index.net_add[b.0].binary_search(&f).is_err()
                })
            });
            let first = blocker.map_or(0, |k| k + 1);
            let mut levels = Vec::new();
            let mut latest_empty = None;
            for l in first..=l_max {
                let occupied = l == l_max || graph.action_at(l).is_some();
                if occupied {
                    levels.push(latest_empty.unwrap_or(l));
                    latest_empty = None;
                } else {
                    latest_empty = Some(l);
                }
            }
            for &a in &inst.index.achievers[f.0] {
                if inst.index.net_add[a.0].binary_search(&f).is_err() || !applicable(inst, a) {
                    continue;
                }
                for &l in &levels {
                    out.push(Mutation::Insert { action: a, level: l });
                }
            }
        }
        Flaw::Numeric(k) => {
            if let Some(c) = numeric_condition(inst, graph, l_max, k) {
                let values = graph.values(l_max);
                let bounds = Bounds::point(values);
                let level = if l_max > 0 && graph.action_at(l_max - 1).is_none() { l_max - 1 } else { l_max };
                let mut cands = BTreeSet::new();
                for v in c.vars() {
                    for &a in &inst.index.writers[v.0] {
                        if applicable(inst, a) && decreases_gap(inst, a, c, &bounds, values) {
                            cands.insert(a);
                        }
                    }
                }
                out.extend(cands.into_iter().map(|a| Mutation::Insert { action: a, level }));
            }
        }
        Flaw::Duration | Flaw::Effect => {}
    }
    if l_max < graph.goal_level() && graph.action_at(l_max).is_some() {
        out.push(Mutation::Remove { level: l_max });
    }
    out
}

/// Noise update over the last `window` inconsistency counts: grow by
/// `growth` (capped at 1) when their coefficient of variation is below
/// `cv_threshold`, otherwise fall back to `initial`. Unchanged until the
/// window is full.
pub fn adapt_noise(history: &[usize], p: f64, initial: f64, window: usize, cv_threshold: f64, growth: f64) -> f64 {
    if history.len() < window || window == 0 {
        return p;
    }
    let w = &history[history.len() - window..];
    let n = w.len() as f64;
    let mean = w.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = w.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    let cv = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
    if cv < cv_threshold {
        (p * growth).min(1.0)
    } else {
        initial
    }
}

/// Sliding-window noise controller.
#[derive(Debug, Clone)]
pub struct NoiseController {
    initial: f64,
    p: f64,
    history: VecDeque<usize>,
    window: usize,
    cv_threshold: f64,
    growth: f64,
}

impl NoiseController {
    pub fn new(config: &SearchConfig) -> Self {
        NoiseController {
            initial: config.noise,
            p: config.noise,
            history: VecDeque::with_capacity(config.noise_window + 1),
            window: config.noise_window,
            cv_threshold: config.noise_cv_threshold,
            growth: config.noise_growth,
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Records the inconsistency count after a step and returns the new noise.
    pub fn observe(&mut self, count: usize) -> f64 {
        self.history.push_back(count);
        if self.history.len() > self.window {
            self.history.pop_front();
        }
        let h = self.history.make_contiguous();
        self.p = adapt_noise(h, self.p, self.initial, self.window, self.cv_threshold, self.growth);
        self.p
    }
}

/// One line of the step trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub restart: usize,
    pub level: usize,
    pub flaw: String,
    pub mutation: String,
    pub score: f64,
    pub inconsistencies: usize,
    pub noise: f64,
}

/// Writes the trace as CSV.
pub fn write_trace<W: io::Write>(rows: &[TraceRow], w: W) -> csv::Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(["step", "restart", "level", "flaw", "mutation", "score", "inconsistencies", "noise"])?;
    for r in rows {
        out.write_record([
            r.step.to_string(),
            r.restart.to_string(),
            r.level.to_string(),
            r.flaw.clone(),
            r.mutation.clone(),
            format!("{:.6}", r.score),
            r.inconsistencies.to_string(),
            format!("{:.6}", r.noise),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// A solution found during search.
#[derive(Debug, Clone)]
pub struct SolutionRecord {
    pub graph: TaGraph,
    pub plan: Vec<ActionId>,
    pub metric: f64,
    pub makespan: f64,
    pub found_at: Duration,
    pub steps: u64,
    pub restarts: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SearchOutcome {
    /// Solutions in the order found; metric strictly decreasing.
    pub records: Vec<SolutionRecord>,
    pub steps: u64,
    pub restarts: usize,
    pub trace: Vec<TraceRow>,
}

impl SearchOutcome {
    pub fn best(&self) -> Option<&SolutionRecord> {
        self.records.last()
    }
}

/// Metric value of a solution graph.
pub fn graph_metric(inst: &Instance, graph: &TaGraph) -> f64 {
    inst.task.metric.value(graph.values(graph.goal_level()), graph.makespan(), graph.n_actions())
}

fn flaw_label(inst: &Instance, f: &Flaw) -> String {
    match f {
        Flaw::Fact(f) => inst.task.facts[f.0].clone(),
        Flaw::Numeric(k) => format!("numeric#{k}"),
        Flaw::Duration => "duration".into(),
        Flaw::Effect => "effect".into(),
    }
}

/// Search state shared by the restarts of all Walkplan runs of one call.
pub struct Search<'a> {
    inst: &'a Instance,
    config: SearchConfig,
    weights: Weights,
    rng: ChaCha8Rng,
    cache: ReachCache,
    noise: NoiseController,
    started: Instant,
    steps: u64,
    restarts: usize,
    trace: Vec<TraceRow>,
    /// Estimated quality of the best plan so far.
    incumbent: Option<f64>,
}

impl<'a> Search<'a> {
    pub fn new(inst: &'a Instance, config: SearchConfig) -> Self {
        let noise = NoiseController::new(&config);
        Search {
            inst,
            weights: Weights::from_task(inst),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            cache: ReachCache::new(),
            noise,
            started: Instant::now(),
            steps: 0,
            restarts: 0,
            trace: Vec::new(),
            incumbent: None,
            config,
        }
    }

    pub fn noise(&self) -> f64 {
        self.noise.p()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn out_of_budget(&self) -> bool {
        self.config.max_total_steps.is_some_and(|m| self.steps >= m) || self.started.elapsed() >= self.config.cpu_budget
    }

    fn evaluate(&mut self, graph: &TaGraph, m: Mutation) -> Evaluation {
        match m {
            Mutation::Insert { action, level } => eval_add(self.inst, graph, &mut self.cache, action, level),
            Mutation::Remove { level } => eval_del(self.inst, graph, &mut self.cache, level),
        }
    }

    fn apply(&self, graph: &mut TaGraph, m: Mutation) {
        match m {
            Mutation::Insert { action, level } => {
                graph.insert_action(self.inst, action, level);
            }
            Mutation::Remove { level } => {
                if let Err(e) = graph.remove_action(self.inst, level, self.config.induced_pruning) {
                    log::warn!("skipping removal: {e}");
                }
            }
        }
    }

    /// One Walkplan step on a graph with at least one inconsistency.
    pub fn step(&mut self, graph: &mut TaGraph) {
        let sigma = graph.inconsistencies()[0];
        let neighborhood = build_neighborhood(self.inst, graph, &sigma);
        let kappa = graph.inconsistencies().len();
        let (chosen, score) = if neighborhood.is_empty() {
            let acts: Vec<usize> = graph.actions().map(|(l, _)| l).collect();
            match acts.choose(&mut self.rng) {
                Some(&level) => (Mutation::Remove { level }, f64::NAN),
                None => {
                    log::debug!("empty neighborhood on an empty graph");
                    self.steps += 1;
                    self.noise.observe(kappa);
                    return;
                }
            }
        } else {
            let evals: Vec<Evaluation> = neighborhood.iter().map(|m| self.evaluate(graph, *m)).collect();
            let triples: Vec<EvalTriple> = evals.iter().map(|e| e.triple).collect();
            let s = scores(&triples, self.weights, kappa);
            // not worse: the modification introduces no inconsistency of its own
            // and, once a plan is known, keeps the estimated quality below it
            let cost_now: f64 = graph.actions().map(|(_, a)| self.inst.task.action(a).cost).sum();
            let bound_ok = |m: &Mutation, t: &EvalTriple| match self.incumbent {
                None => true,
                Some(q) => {
                    let time = match m {
                        Mutation::Insert { .. } => graph.makespan().max(t.temporal_cost),
                        Mutation::Remove { .. } => graph.makespan(),
                    };
                    quality(self.weights, cost_now + t.execution_cost, time) < q - IMPROVEMENT_TOLERANCE
                }
            };
            let sideways: Vec<usize> = (0..neighborhood.len())
                .filter(|&i| evals[i].new_flaws == 0 && !evals[i].sentinel() && bound_ok(&neighborhood[i], &triples[i]))
                .collect();
            let idx = if !sideways.is_empty() {
                self.argmin_random(&sideways, &s)
            } else if self.rng.gen::<f64>() < self.noise.p() {
                self.rng.gen_range(0..neighborhood.len())
            } else {
                let all: Vec<usize> = (0..neighborhood.len()).collect();
                first_argmin(&all, &s)
            };
            (neighborhood[idx], s[idx])
        };
        let label = chosen.describe(self.inst, graph);
        self.apply(graph, chosen);
        self.steps += 1;
        let count = graph.inconsistencies().len();
        let p = self.noise.observe(count);
        log::trace!("step {} {} -> {} flaws", self.steps, label, count);
        if self.config.record_trace {
            self.trace.push(TraceRow {
                step: self.steps,
                restart: self.restarts,
                level: sigma.level,
                flaw: flaw_label(self.inst, &sigma.flaw),
                mutation: label,
                score,
                inconsistencies: count,
                noise: p,
            });
        }
    }

    fn argmin_random(&mut self, among: &[usize], s: &[f64]) -> usize {
        let best = among.iter().map(|&i| s[i]).fold(f64::INFINITY, f64::min);
        let ties: Vec<usize> = among.iter().copied().filter(|&i| s[i] <= best + 1e-12).collect();
        *ties.choose(&mut self.rng).expect("non-empty candidate set")
    }

    /// Weight of an action node when picking nodes to remove.
    fn removal_weights(&self, graph: &TaGraph, acts: &[(usize, ActionId)]) -> Vec<f64> {
        if self.weights.mu_e > self.weights.mu_t {
            return acts.iter().map(|(_, a)| self.inst.task.action(*a).cost.max(1e-9)).collect();
        }
        let critical = critical_levels(graph);
        acts.iter()
            .map(|(l, _)| {
                let d = graph.duration(*l).unwrap_or(0.0).max(1e-6);
                if critical.contains(l) {
                    d
                } else {
                    0.1 * d
                }
            })
            .collect()
    }

    /// Removes a small weighted-random set R of actions together with the
    /// supporters of their preconditions and the actions they support.
    pub fn force_inconsistencies(&mut self, graph: &TaGraph) -> TaGraph {
        let acts: Vec<(usize, ActionId)> = graph.actions().collect();
        let mut g = graph.clone();
        if acts.is_empty() {
            return g;
        }
        let k = ((self.config.removal_fraction * acts.len() as f64).ceil() as usize).clamp(1, acts.len());
        let mut w = self.removal_weights(graph, &acts);
        let mut chosen = BTreeSet::new();
        for _ in 0..k {
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                break;
            }
            let mut x = self.rng.gen::<f64>() * total;
            let mut pick = w.len() - 1;
            for (i, wi) in w.iter().enumerate() {
                if *wi > 0.0 && x < *wi {
                    pick = i;
                    break;
                }
                x -= wi;
            }
            chosen.insert(acts[pick].0);
            w[pick] = 0.0;
        }
        let mut levels = chosen.clone();
        for n in graph.nodes() {
            if chosen.contains(&n.level) {
                for s in &n.supporters {
                    if let Supporter::Level(j) = s {
                        levels.insert(*j);
                    }
                }
            }
            if n.level < graph.goal_level() && n.latest_supporter().flatten().is_some_and(|j| chosen.contains(&j)) {
                levels.insert(n.level);
            }
        }
        let levels: Vec<usize> = levels.into_iter().collect();
        if let Err(e) = g.remove_actions(self.inst, &levels, false) {
            log::warn!("perturbation failed: {e}");
        }
        g.compact(self.inst);
        g
    }

    fn initial_graph(&mut self, best: Option<&TaGraph>) -> TaGraph {
        match best {
            None => TaGraph::empty(self.inst),
            Some(g) => self.force_inconsistencies(g),
        }
    }

    /// Runs Walkplan searches until the mode, solution count or budget says
    /// stop, calling `on_solution` for every improving solution as it is found.
    pub fn run(mut self, mut on_solution: impl FnMut(&SolutionRecord)) -> SearchOutcome {
        self.started = Instant::now();
        let mut records: Vec<SolutionRecord> = Vec::new();
        'search: loop {
            let mut improved = false;
            'restarts: for r in 0..self.config.max_restarts {
                if self.out_of_budget() {
                    break 'search;
                }
                self.restarts += 1;
                let mut g = self.initial_graph(records.last().map(|b| &b.graph));
                let cap = (self.config.max_steps as f64 * self.config.restart_growth.powi(r as i32)).round() as usize;
                let mut j = 0;
                while j < cap {
                    if self.out_of_budget() {
                        break 'search;
                    }
                    if g.inconsistencies().is_empty() {
                        let metric = graph_metric(self.inst, &g);
                        if records.last().is_none_or(|b| metric < b.metric - IMPROVEMENT_TOLERANCE) {
                            let rec = SolutionRecord {
                                plan: g.plan(),
                                metric,
                                makespan: g.makespan(),
                                found_at: self.started.elapsed(),
                                steps: self.steps,
                                restarts: self.restarts,
                                graph: g.clone(),
                            };
                            log::info!("solution {} metric {metric} after {} steps", records.len() + 1, self.steps);
                            on_solution(&rec);
                            records.push(rec);
                            self.incumbent = Some(graph_quality(self.inst, self.weights, &g));
                            improved = true;
                            let enough = self.config.max_solutions.is_some_and(|n| records.len() >= n)
                                || self.config.metric_target.is_some_and(|t| metric <= t + IMPROVEMENT_TOLERANCE);
                            if self.config.mode == QualityMode::FirstSolution || enough || g.n_actions() == 0 {
                                break 'search;
                            }
                            break 'restarts;
                        }
                        g = self.force_inconsistencies(&g);
                        self.steps += 1;
                        j += 1;
                        continue;
                    }
                    self.step(&mut g);
                    j += 1;
                }
            }
            if !improved && (records.is_empty() || self.config.mode == QualityMode::FirstSolution) {
                break;
            }
        }
        SearchOutcome { records, steps: self.steps, restarts: self.restarts, trace: self.trace }
    }
}

/// Weighted execution cost and makespan, the quantity the evaluation function trades off.
pub fn quality(w: Weights, cost: f64, makespan: f64) -> f64 {
    w.mu_e * cost + w.mu_t * makespan
}

fn graph_quality(inst: &Instance, w: Weights, g: &TaGraph) -> f64 {
    let cost: f64 = g.actions().map(|(_, a)| inst.task.action(a).cost).sum();
    quality(w, cost, g.makespan())
}

fn first_argmin(among: &[usize], s: &[f64]) -> usize {
    let mut best = among[0];
    for &i in among {
        if s[i] < s[best] {
            best = i;
        }
    }
    best
}

/// Levels of actions on a longest chain of Ω constraints ending at the makespan.
pub fn critical_levels(graph: &TaGraph) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    let makespan = graph.makespan();
    let mut stack: Vec<usize> = graph
        .actions()
        .map(|(l, _)| l)
        .filter(|&l| graph.time(l).is_some_and(|t| (t - makespan).abs() <= TIME_TOLERANCE))
        .collect();
    while let Some(k) = stack.pop() {
        if !out.insert(k) {
            continue;
        }
        let start = graph.start(k).unwrap_or(0.0);
        for c in graph.predecessors(k) {
            if graph.time(c.before).is_some_and(|t| (t - start).abs() <= TIME_TOLERANCE) {
                stack.push(c.before);
            }
        }
    }
    out
}

/// First-solution Walkplan from the empty graph.
pub fn walkplan(inst: &Instance, config: &SearchConfig) -> Option<TaGraph> {
    let config = SearchConfig { mode: QualityMode::FirstSolution, ..config.clone() };
    Search::new(inst, config).run(|_| {}).records.pop().map(|r| r.graph)
}

/// Anytime search; `on_solution` sees each improving solution when found.
pub fn anytime_loop(inst: &Instance, config: &SearchConfig, on_solution: impl FnMut(&SolutionRecord)) -> SearchOutcome {
    Search::new(inst, config.clone()).run(on_solution)
}
