//! Relaxed plans and the action evaluation function used to rank the
//! elements of a search neighborhood.
//!
//! A relaxed plan ignores delete effects, reuses actions already chosen,
//! and picks for each open subgoal the achiever whose preconditions look
//! cheapest to reach from the state at the evaluated level while blocking the
//! fewest supported preconditions of the current graph.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use fixedbitset::FixedBitSet;

use crate::graph::{Flaw, TaGraph};
use crate::instance::Instance;
use crate::numeric::{AssignOp, BinOp, Expr};
use crate::reach::{canonical_order, timing_duration, ReachCache, ReachabilityTable};
use crate::task::{ActionId, FactId, NumCond};

/// Multiplier making the placeholder for an unreachable subgoal dominate
/// every real candidate.
pub const SENTINEL_FACTOR: f64 = 1e6;

/// Upper bound on actions a single relaxed plan may add while chasing
/// numeric subgoals.
pub const MAX_NUMERIC_REPEATS: usize = 1000;

/// Normalizers are floored at this value.
pub const NORM_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Subgoal {
    Fact(FactId),
    Num(NumCond),
}

/// Actions of a relaxed plan (with multiplicity, since numeric subgoals may
/// need an action several times) and its estimated end time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelaxedPlan {
    pub acts: BTreeMap<ActionId, usize>,
    pub end_time: f64,
    /// Some subgoal was unreachable; the plan stands for "very expensive".
    pub sentinel: bool,
}

impl RelaxedPlan {
    pub fn action_set(&self) -> BTreeSet<ActionId> {
        self.acts.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.acts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.acts.is_empty()
    }

    pub fn contains(&self, a: ActionId) -> bool {
        self.acts.contains_key(&a)
    }

    fn add(&mut self, a: ActionId) {
        *self.acts.entry(a).or_insert(0) += 1;
    }
}

/// Monotone bounds on numeric variables given the actions of a relaxed plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn point(values: &[f64]) -> Self {
        Bounds { lo: values.to_vec(), hi: values.to_vec() }
    }

    /// Widens the bounds by one application of `a`'s numeric effects, with
    /// right-hand sides evaluated in `values`.
    pub fn apply(&mut self, inst: &Instance, a: ActionId, values: &[f64]) {
        let act = inst.task.action(a);
        let dur = timing_duration(&inst.task, &inst.index, a, values);
        for e in act.num_eff_all() {
            let Ok(rhs) = e.expr.eval(&|v| values[v.0], Some(dur)) else {
                continue;
            };
            let v = e.var.0;
            let (lo, hi) = (self.lo[v], self.hi[v]);
            match e.op {
                AssignOp::Increase => {
                    if rhs >= 0.0 {
                        self.hi[v] = hi + rhs;
                    } else {
                        self.lo[v] = lo + rhs;
                    }
                }
                AssignOp::Decrease => {
                    if rhs >= 0.0 {
                        self.lo[v] = lo - rhs;
                    } else {
                        self.hi[v] = hi - rhs;
                    }
                }
                AssignOp::Assign => {
                    self.lo[v] = lo.min(rhs);
                    self.hi[v] = hi.max(rhs);
                }
                AssignOp::ScaleUp | AssignOp::ScaleDown => {
                    for old in [lo, hi] {
                        if let Ok(x) = e.op.apply(old, rhs) {
                            self.lo[v] = self.lo[v].min(x);
                            self.hi[v] = self.hi[v].max(x);
                        }
                    }
                }
            }
        }
    }

    /// Interval of `lhs - rhs` taking the most favourable combination of bounds.
    fn diff(&self, c: &NumCond, duration: Option<f64>) -> Option<(f64, f64)> {
        let e = Expr::bin(BinOp::Sub, c.lhs.clone(), c.rhs.clone());
        e.eval_interval(&|v| (self.lo[v.0], self.hi[v.0]), duration)
    }

    pub fn satisfies(&self, c: &NumCond, duration: Option<f64>) -> bool {
        self.diff(c, duration).is_some_and(|(lo, hi)| c.rel.possible(lo, hi))
    }

    /// Smallest distance from satisfaction within the bounds.
    pub fn gap(&self, c: &NumCond, duration: Option<f64>) -> f64 {
        match self.diff(c, duration) {
            None => f64::INFINITY,
            Some((lo, hi)) if c.rel.possible(lo, hi) => 0.0,
            Some((lo, hi)) => c.rel.gap(lo).min(c.rel.gap(hi)),
        }
    }
}

/// Does one application of `a` bring `c` closer to satisfaction from `bounds`?
pub fn decreases_gap(inst: &Instance, a: ActionId, c: &NumCond, bounds: &Bounds, values: &[f64]) -> bool {
    let vars = c.vars();
    if !inst.task.action(a).num_writes().iter().any(|(v, _)| vars.contains(v)) {
        return false;
    }
    let before = bounds.gap(c, None);
    let mut after = bounds.clone();
    after.apply(inst, a, values);
    after.gap(c, None) < before - crate::numeric::EQ_TOLERANCE
}

/// Boolean and numeric preconditions of `a` as subgoals.
pub fn pre_goals(inst: &Instance, a: ActionId) -> Vec<Subgoal> {
    let mut g: Vec<Subgoal> = inst.index.pre[a.0].iter().map(|f| Subgoal::Fact(*f)).collect();
    g.extend(inst.task.action(a).num_pre_all().cloned().map(Subgoal::Num));
    g
}

/// Relaxed-plan computations anchored at one level of one graph.
pub struct EvalCtx<'a> {
    inst: &'a Instance,
    graph: &'a TaGraph,
    level: usize,
    table: Arc<ReachabilityTable>,
    init: FixedBitSet,
    values: Vec<f64>,
    /// Estimated achievement times of effects of chosen actions.
    t: HashMap<FactId, f64>,
    threats: HashMap<ActionId, usize>,
    expanding: Vec<FactId>,
    /// Number of relaxed-plan invocations, for instrumentation.
    pub calls: usize,
}

impl<'a> EvalCtx<'a> {
    pub fn new(inst: &'a Instance, graph: &'a TaGraph, level: usize, cache: &mut ReachCache) -> Self {
        let init = graph.supported(level).clone();
        let values = graph.values(level).to_vec();
        let table = cache.refresh(&inst.task, &inst.index, &init, &values, &canonical_order(&inst.task));
        EvalCtx {
            inst,
            graph,
            level,
            table,
            init,
            values,
            t: HashMap::new(),
            threats: HashMap::new(),
            expanding: Vec::new(),
            calls: 0,
        }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn table(&self) -> &ReachabilityTable {
        &self.table
    }

    /// Removes facts from the state relaxed plans start from.
    pub fn remove_from_init(&mut self, facts: &[FactId]) {
        for f in facts {
            self.init.set(f.0, false);
        }
    }

    pub fn duration(&self, a: ActionId) -> f64 {
        timing_duration(&self.inst.task, &self.inst.index, a, &self.values)
    }

    /// |Threats(a)| if `a` were inserted at this context's level.
    pub fn threat_count(&mut self, a: ActionId) -> usize {
        if let Some(n) = self.threats.get(&a) {
            return *n;
        }
        let n = self.graph.threats(self.inst, a, self.level).len();
        self.threats.insert(a, n);
        n
    }

    /// Estimated achievement time recorded for `f`, if any.
    pub fn achieved_time(&self, f: FactId) -> Option<f64> {
        self.t.get(&f).copied()
    }

    fn init_time(&self, f: FactId) -> f64 {
        self.graph.fact_time(self.inst, self.level, f).unwrap_or(0.0)
    }

    fn effects(&self, acts: &RelaxedPlan) -> FixedBitSet {
        let mut f = FixedBitSet::with_capacity(self.inst.task.n_facts());
        for a in acts.acts.keys() {
            for e in &self.inst.index.add[a.0] {
                f.insert(e.0);
            }
        }
        f
    }

    pub fn bounds(&self, acts: &RelaxedPlan) -> Bounds {
        let mut b = Bounds::point(&self.values);
        for (a, n) in &acts.acts {
            for _ in 0..*n {
                b.apply(self.inst, *a, &self.values);
            }
        }
        b
    }

    fn num_acts(&self, p: FactId) -> i64 {
        if self.init.contains(p.0) {
            0
        } else {
            self.table.num_acts[p.0]
        }
    }

    /// Score of `a` as an achiever: the hardest precondition not yet
    /// provided by the plan, plus how many supported preconditions it blocks.
    /// Numeric preconditions not satisfiable within `bounds` count as 1.
    fn achiever_score(
        &mut self,
        a: ActionId,
        provided: &FixedBitSet,
        bounds: &Bounds,
    ) -> Option<(i64, f64, f64, usize)> {
        let mut hardest = 0i64;
        let mut ready = 0.0f64;
        for p in &self.inst.index.pre[a.0] {
            let n = self.table.num_acts[p.0];
            if n < 0 && !self.init.contains(p.0) {
                return None;
            }
            if self.expanding.contains(p) {
                return None;
            }
            if !provided.contains(p.0) {
                hardest = hardest.max(self.num_acts(*p));
            }
            ready = ready.max(self.table.time_fact[p.0]);
        }
        let dur = self.duration(a);
        if self.inst.task.action(a).num_pre_all().any(|c| !bounds.satisfies(c, Some(dur))) {
            hardest = hardest.max(1);
        }
        let score = hardest + self.threat_count(a) as i64;
        Some((score, self.inst.task.action(a).cost, ready + dur, a.0))
    }

    fn pick(
        &mut self,
        candidates: impl Iterator<Item = ActionId>,
        provided: &FixedBitSet,
        bounds: &Bounds,
    ) -> Option<ActionId> {
        let mut best: Option<((i64, f64, f64, usize), ActionId)> = None;
        for a in candidates {
            let Some(key) = self.achiever_score(a, provided, bounds) else {
                continue;
            };
            let better = match &best {
                None => true,
                Some((k, _)) => {
                    (key.0, key.1, key.2, key.3).partial_cmp(&(k.0, k.1, k.2, k.3)) == Some(std::cmp::Ordering::Less)
                }
            };
            if better {
                best = Some((key, a));
            }
        }
        best.map(|(_, a)| a)
    }

    /// The achiever of `g` minimising the score; ties go to lower cost,
    /// then earlier estimated support time, then lower action index.
    pub fn best_action(&mut self, g: FactId, provided: &FixedBitSet, bounds: &Bounds) -> Option<ActionId> {
        let achievers = self.inst.index.achievers[g.0].clone();
        self.pick(achievers.into_iter(), provided, bounds)
    }

    /// Best action among those whose single application narrows the gap of `c`.
    pub fn best_numeric_action(&mut self, c: &NumCond, provided: &FixedBitSet, bounds: &Bounds) -> Option<ActionId> {
        let mut cands = BTreeSet::new();
        for v in c.vars() {
            for a in &self.inst.index.writers[v.0] {
                if decreases_gap(self.inst, *a, c, bounds, &self.values) {
                    cands.insert(*a);
                }
            }
        }
        self.pick(cands.into_iter(), provided, bounds)
    }

    /// Relaxed plan achieving `goals` from this context's state, reusing `base`.
    pub fn relaxed_plan(&mut self, goals: &[Subgoal], base: &RelaxedPlan) -> RelaxedPlan {
        self.calls += 1;
        let mut t = 0.0f64;
        let mut open: Vec<FactId> = Vec::new();
        let mut nums: Vec<&NumCond> = Vec::new();
        for g in goals {
            match g {
                Subgoal::Fact(f) => {
                    if self.init.contains(f.0) {
                        t = t.max(self.init_time(*f));
                    } else if !open.contains(f) {
                        open.push(*f);
                    }
                }
                Subgoal::Num(c) => {
                    if !c.holds(&self.values, None) {
                        nums.push(c);
                    }
                }
            }
        }
        let mut acts = RelaxedPlan { acts: base.acts.clone(), end_time: 0.0, sentinel: false };
        let mut provided = self.effects(&acts);
        for g in &open {
            if provided.contains(g.0) {
                t = t.max(self.t.get(g).copied().unwrap_or(0.0));
            }
        }
        let mut added = 0usize;
        loop {
            // hardest open subgoal first; lower fact index on ties
            let next = open
                .iter()
                .copied()
                .filter(|g| !provided.contains(g.0))
                .max_by_key(|g| (self.table.num_acts[g.0], std::cmp::Reverse(g.0)));
            let bounds = self.bounds(&acts);
            let choice = if let Some(g) = next {
                self.best_action(g, &provided, &bounds).map(|b| (b, Some(g)))
            } else if let Some(c) = nums.iter().find(|c| !bounds.satisfies(c, None)) {
                if added >= MAX_NUMERIC_REPEATS {
                    None
                } else {
                    self.best_numeric_action(c, &provided, &bounds).map(|b| (b, None))
                }
            } else {
                break;
            };
            let Some((b, g)) = choice else {
                acts.end_time = t;
                acts.sentinel = true;
                return acts;
            };
            if let Some(g) = g {
                self.expanding.push(g);
            }
            let sub = self.relaxed_plan(&pre_goals(self.inst, b), &acts);
            if g.is_some() {
                self.expanding.pop();
            }
            if sub.sentinel {
                return RelaxedPlan { end_time: t, ..sub };
            }
            let end = sub.end_time + self.duration(b);
            for f in &self.inst.index.add[b.0] {
                if !provided.contains(f.0) {
                    self.t.insert(*f, end);
                }
            }
            acts = sub;
            acts.add(b);
            added += 1;
            provided = self.effects(&acts);
            t = t.max(end);
        }
        acts.end_time = t;
        acts
    }
}

/// The three cost estimates of a neighborhood element.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalTriple {
    pub execution_cost: f64,
    pub temporal_cost: f64,
    pub search_cost: f64,
}

/// An evaluated graph modification.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub plan: RelaxedPlan,
    pub end_time: f64,
    pub triple: EvalTriple,
    /// Inconsistencies the modification is expected to introduce.
    pub new_flaws: usize,
}

impl Evaluation {
    pub fn sentinel(&self) -> bool {
        self.plan.sentinel
    }
}

fn sentinel_cost(inst: &Instance) -> f64 {
    SENTINEL_FACTOR * inst.task.max_cost().max(1.0)
}

fn triple_for(
    ctx: &mut EvalCtx<'_>,
    inst: &Instance,
    plan: &RelaxedPlan,
    end_time: f64,
    cost_offset: f64,
) -> EvalTriple {
    let mut exec = -cost_offset;
    let mut search = 0.0;
    for (a, n) in &plan.acts {
        exec += inst.task.action(*a).cost * *n as f64;
        search += (*n + ctx.threat_count(*a) * *n) as f64;
    }
    if plan.sentinel {
        exec += sentinel_cost(inst);
        search += SENTINEL_FACTOR;
    }
    EvalTriple { execution_cost: exec, temporal_cost: end_time, search_cost: search }
}

/// Estimates inserting `a` at level `l`.
pub fn eval_add(inst: &Instance, graph: &TaGraph, cache: &mut ReachCache, a: ActionId, l: usize) -> Evaluation {
    let mut ctx = EvalCtx::new(inst, graph, l, cache);
    let goals = pre_goals(inst, a);
    let rp = ctx.relaxed_plan(&goals, &RelaxedPlan::default());
    let t1 = graph.exclusion_bound(inst, a, l);
    let t2 = t1.max(rp.end_time);
    let dur = ctx.duration(a);
    let threats = graph.threats(inst, a, l);
    let missing = goals
        .iter()
        .filter(|g| match g {
            Subgoal::Fact(f) => !graph.supported(l).contains(f.0),
            Subgoal::Num(c) => !c.holds(graph.values(l), Some(dur)),
        })
        .count();
    let plan = if rp.sentinel {
        rp
    } else {
        let mut with_a = rp;
        with_a.add(a);
        ctx.remove_from_init(&threats);
        let goals: Vec<Subgoal> = threats.iter().map(|f| Subgoal::Fact(*f)).collect();
        ctx.relaxed_plan(&goals, &with_a)
    };
    let end_time = t2 + dur;
    let triple = triple_for(&mut ctx, inst, &plan, end_time, 0.0);
    Evaluation { plan, end_time, triple, new_flaws: missing + threats.len() }
}

/// Inconsistencies that would appear if the action at `level` were removed
/// (without pruning), as subgoals.
pub fn unsupported_by_removal(inst: &Instance, graph: &TaGraph, level: usize) -> Vec<Subgoal> {
    let mut after = graph.clone();
    if after.remove_action(inst, level, false).is_err() {
        return Vec::new();
    }
    let before: BTreeSet<_> = graph.inconsistencies().iter().map(|i| (i.level, i.flaw)).collect();
    let mut out = Vec::new();
    for i in after.inconsistencies() {
        if i.level == level || before.contains(&(i.level, i.flaw)) {
            continue;
        }
        match i.flaw {
            Flaw::Fact(f) => {
                let g = Subgoal::Fact(f);
                if !out.contains(&g) {
                    out.push(g);
                }
            }
            Flaw::Numeric(k) => {
                let c = if i.level == after.goal_level() {
                    inst.task.goal_num.get(k).cloned()
                } else {
                    after.action_at(i.level).and_then(|b| inst.task.action(b).num_pre_all().nth(k).cloned())
                };
                if let Some(c) = c {
                    out.push(Subgoal::Num(c));
                }
            }
            Flaw::Duration | Flaw::Effect => {}
        }
    }
    out
}

/// Estimates removing the action at `level`.
pub fn eval_del(inst: &Instance, graph: &TaGraph, cache: &mut ReachCache, level: usize) -> Evaluation {
    let a = graph.action_at(level).expect("removal of a domain action");
    let goals = unsupported_by_removal(inst, graph, level);
    let mut ctx = EvalCtx::new(inst, graph, level, cache);
    let plan = ctx.relaxed_plan(&goals, &RelaxedPlan::default());
    let end_time = plan.end_time;
    let triple = triple_for(&mut ctx, inst, &plan, end_time, inst.task.action(a).cost);
    Evaluation { plan, end_time, triple, new_flaws: goals.len() }
}

/// Relative importance of execution cost and makespan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub mu_e: f64,
    pub mu_t: f64,
}

impl Weights {
    pub fn from_task(inst: &Instance) -> Self {
        let (mu_e, mu_t) = inst.task.weights();
        Weights { mu_e, mu_t }
    }
}

/// Normalized scores of a neighborhood; `kappa` is the current number of
/// inconsistencies. Execution and temporal terms are normalized by their
/// largest magnitude in the neighborhood times `kappa`, the search term by
/// its largest value.
pub fn scores(triples: &[EvalTriple], w: Weights, kappa: usize) -> Vec<f64> {
    let max_e = triples.iter().map(|t| t.execution_cost.abs()).fold(0.0, f64::max);
    let max_t = triples.iter().map(|t| t.temporal_cost.abs()).fold(0.0, f64::max);
    let max_s = triples.iter().map(|t| t.search_cost).fold(0.0, f64::max).max(NORM_FLOOR);
    let max_et = (kappa.max(1) as f64 * (w.mu_e * max_e + w.mu_t * max_t)).max(NORM_FLOOR);
    triples
        .iter()
        .map(|t| w.mu_e / max_et * t.execution_cost + w.mu_t / max_et * t.temporal_cost + t.search_cost / max_s)
        .collect()
}
