//! Grounding: instantiate operator schemas over typed objects, compile away
//! static facts and fluents, compile negative preconditions into `not-p`
//! facts, and prune actions that are unreachable or have mutex preconditions.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::mutex::compute_mutex_facts;
use crate::numeric::{BinOp, Expr};
use crate::pddl::{CondTag, Condition, DomainModel, EffTag, Effect, FluentRef, LiftedExpr, ProblemModel, Term};
use crate::task::{
    action_cost, ActionId, FactId, GroundAction, GroundExpr, GroundTask, Metric, NumCond, NumEffect, VarId,
    DEFAULT_EPSILON,
};

pub const DEFAULT_MAX_ACTIONS: usize = 2_000_000;

#[derive(Debug, Clone)]
pub struct GroundOptions {
    pub max_actions: usize,
    pub epsilon: f64,
    /// Run the mutex-based action filter after instantiation.
    pub mutex_filter: bool,
}

impl Default for GroundOptions {
    fn default() -> Self {
        GroundOptions { max_actions: DEFAULT_MAX_ACTIONS, epsilon: DEFAULT_EPSILON, mutex_filter: true }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GroundError {
    #[error("grounding produced more than {cap} actions")]
    TooManyActions { cap: usize },
    #[error("unsupported feature: {0}")]
    Unsupported(String),
    #[error("undeclared symbol `{0}`")]
    Undeclared(String),
}

pub fn ground(domain: &DomainModel, problem: &ProblemModel) -> Result<GroundTask, GroundError> {
    ground_with(domain, problem, &GroundOptions::default())
}

struct Grounder<'a> {
    d: &'a DomainModel,
    static_preds: Vec<bool>,
    static_funcs: Vec<bool>,
    init_atoms: HashSet<(usize, Vec<String>)>,
    init_values: HashMap<(usize, Vec<String>), f64>,
    facts: Vec<String>,
    fact_index: HashMap<String, FactId>,
    /// For `p(x)` facts of negated predicates: pred and args, to build twins.
    fact_atom: Vec<Option<(usize, Vec<String>)>>,
    negated: BTreeSet<usize>,
    vars: Vec<String>,
    var_index: HashMap<String, VarId>,
    var_init: Vec<f64>,
}

fn atom_name(name: &str, args: &[String]) -> String {
    let mut s = format!("({name}");
    for a in args {
        s.push(' ');
        s.push_str(a);
    }
    s.push(')');
    s
}

fn resolve(t: &Term, binding: &[String]) -> String {
    match t {
        Term::Param(i) => binding[*i].clone(),
        Term::Object(o) => o.clone(),
    }
}

/// Evaluates to a constant if the expression has no variables and no `?duration`.
fn fold(e: GroundExpr) -> GroundExpr {
    let mut vs = Vec::new();
    e.vars(&mut vs);
    if vs.is_empty() && !e.mentions_duration() && !e.mentions_total_time() {
        if let Ok(c) = e.eval(&|_: &VarId| 0.0, None) {
            return Expr::Const(c);
        }
    }
    e
}

enum Eval {
    True,
    False,
    Keep(NumCond),
}

impl<'a> Grounder<'a> {
    fn fact(&mut self, pred: usize, args: Vec<String>, positive: bool) -> FactId {
        let pname = &self.d.predicates[pred].name;
        let name = if positive { atom_name(pname, &args) } else { atom_name(&format!("not-{pname}"), &args) };
        if let Some(&f) = self.fact_index.get(&name) {
            return f;
        }
        let f = FactId(self.facts.len());
        self.facts.push(name.clone());
        self.fact_index.insert(name, f);
        self.fact_atom.push(if positive { Some((pred, args)) } else { None });
        f
    }

    fn var(&mut self, func: usize, args: Vec<String>) -> VarId {
        let name = atom_name(&self.d.functions[func].name, &args);
        if let Some(&v) = self.var_index.get(&name) {
            return v;
        }
        let v = VarId(self.vars.len());
        let init = self.init_values.get(&(func, args)).copied().unwrap_or(0.0);
        self.vars.push(name.clone());
        self.var_index.insert(name, v);
        self.var_init.push(init);
        v
    }

    fn fluent(&mut self, f: &FluentRef, binding: &[String]) -> GroundExpr {
        let args: Vec<String> = f.args.iter().map(|t| resolve(t, binding)).collect();
        if self.static_funcs[f.func] {
            Expr::Const(self.init_values.get(&(f.func, args)).copied().unwrap_or(0.0))
        } else {
            Expr::Var(self.var(f.func, args))
        }
    }

    fn expr(&mut self, e: &LiftedExpr, binding: &[String]) -> GroundExpr {
        let r: Result<GroundExpr, ()> = e.try_map(&mut |f| Ok(self.fluent(f, binding)));
        fold(r.expect("infallible"))
    }

    fn compare(&mut self, lhs: &LiftedExpr, rel: crate::numeric::Rel, rhs: &LiftedExpr, binding: &[String]) -> Eval {
        let l = self.expr(lhs, binding);
        let r = self.expr(rhs, binding);
        match (&l, &r) {
            (Expr::Const(a), Expr::Const(b)) => {
                if rel.holds(a - b) {
                    Eval::True
                } else {
                    Eval::False
                }
            }
            _ => Eval::Keep(NumCond { lhs: l, rel, rhs: r }),
        }
    }

    fn static_holds(&self, c: &Condition, binding: &[String]) -> Option<bool> {
        match c {
            Condition::Atom { pred, args, positive } if self.static_preds[*pred] => {
                let args: Vec<String> = args.iter().map(|t| resolve(t, binding)).collect();
                Some(self.init_atoms.contains(&(*pred, args)) == *positive)
            }
            Condition::Equal { a, b, positive } => Some((resolve(a, binding) == resolve(b, binding)) == *positive),
            _ => None,
        }
    }
}

fn max_param(c: &Condition) -> Option<usize> {
    let terms: Vec<&Term> = match c {
        Condition::Atom { args, .. } => args.iter().collect(),
        Condition::Equal { a, b, .. } => vec![a, b],
        Condition::Compare { .. } => return None,
    };
    terms
        .iter()
        .map(|t| match t {
            Term::Param(i) => *i as isize,
            Term::Object(_) => -1,
        })
        .max()
        .map(|m| m.max(-1))
        .map(|m| if m < 0 { usize::MAX } else { m as usize })
}

/// Linear form of the metric over ground variables.
fn linearize(g: &mut Grounder<'_>, e: &LiftedExpr) -> Result<(f64, f64, BTreeMap<VarId, f64>), GroundError> {
    type Lin = (f64, f64, BTreeMap<VarId, f64>);
    fn scale(l: Lin, k: f64) -> Lin {
        (l.0 * k, l.1 * k, l.2.into_iter().map(|(v, c)| (v, c * k)).collect())
    }
    fn is_const(l: &Lin) -> bool {
        l.1 == 0.0 && l.2.values().all(|&c| c == 0.0)
    }
    fn go(g: &mut Grounder<'_>, e: &LiftedExpr) -> Result<Lin, GroundError> {
        Ok(match e {
            Expr::Const(c) => (*c, 0.0, BTreeMap::new()),
            Expr::TotalTime => (0.0, 1.0, BTreeMap::new()),
            Expr::Duration => return Err(GroundError::Unsupported("`?duration` in metric".into())),
            Expr::Var(f) => match g.fluent(f, &[]) {
                Expr::Const(c) => (c, 0.0, BTreeMap::new()),
                Expr::Var(v) => (0.0, 0.0, BTreeMap::from([(v, 1.0)])),
                _ => unreachable!(),
            },
            Expr::Neg(a) => scale(go(g, a)?, -1.0),
            Expr::Bin(op, a, b) => {
                let x = go(g, a)?;
                let y = go(g, b)?;
                match op {
                    BinOp::Add | BinOp::Sub => {
                        let y = if *op == BinOp::Sub { scale(y, -1.0) } else { y };
                        let mut terms = x.2;
                        for (v, c) in y.2 {
                            *terms.entry(v).or_insert(0.0) += c;
                        }
                        (x.0 + y.0, x.1 + y.1, terms)
                    }
                    BinOp::Mul if is_const(&x) => scale(y, x.0),
                    BinOp::Mul if is_const(&y) => scale(x, y.0),
                    BinOp::Div if is_const(&y) && y.0 != 0.0 => scale(x, 1.0 / y.0),
                    _ => return Err(GroundError::Unsupported("non-linear metric".into())),
                }
            }
        })
    }
    go(g, e)
}

pub fn ground_with(
    domain: &DomainModel,
    problem: &ProblemModel,
    opts: &GroundOptions,
) -> Result<GroundTask, GroundError> {
    let mut static_preds = vec![true; domain.predicates.len()];
    let mut static_funcs = vec![true; domain.functions.len()];
    for op in &domain.operators {
        for (_, e) in &op.effects {
            match e {
                Effect::Add { pred, .. } | Effect::Del { pred, .. } => static_preds[*pred] = false,
                Effect::Numeric { target, .. } => static_funcs[target.func] = false,
            }
        }
    }
    let mut g = Grounder {
        d: domain,
        static_preds,
        static_funcs,
        init_atoms: problem.init_atoms.iter().cloned().collect(),
        init_values: problem.init_values.iter().map(|(f, a, v)| ((*f, a.clone()), *v)).collect(),
        facts: Vec::new(),
        fact_index: HashMap::new(),
        fact_atom: Vec::new(),
        negated: BTreeSet::new(),
        vars: Vec::new(),
        var_index: HashMap::new(),
        var_init: Vec::new(),
    };

    // init facts first so their indices are small and stable
    let mut init = Vec::new();
    for (pred, args) in &problem.init_atoms {
        if !g.static_preds[*pred] {
            init.push(g.fact(*pred, args.clone(), true));
        }
    }

    let mut actions: Vec<GroundAction> = Vec::new();
    for op in &domain.operators {
        let candidates: Vec<Vec<String>> = op
            .params
            .iter()
            .map(|(_, t)| {
                problem
                    .objects
                    .iter()
                    .filter(|(_, ot)| domain.types.is_subtype(*ot, *t))
                    .map(|(n, _)| n.clone())
                    .collect()
            })
            .collect();
        // static checks become decidable once their last parameter is bound
        let mut checks_at: Vec<Vec<&Condition>> = vec![Vec::new(); op.params.len() + 1];
        for (_, c) in &op.conditions {
            let decidable = match c {
                Condition::Atom { pred, .. } => g.static_preds[*pred],
                Condition::Equal { .. } => true,
                Condition::Compare { .. } => false,
            };
            if decidable {
                let slot = match max_param(c) {
                    Some(usize::MAX) | None => 0,
                    Some(m) => m + 1,
                };
                checks_at[slot].push(c);
            }
        }
        if checks_at[0].iter().any(|c| g.static_holds(c, &[]) == Some(false)) {
            continue;
        }
        let mut bindings = Vec::new();
        let mut binding: Vec<String> = Vec::new();
        enumerate(
            &candidates,
            &checks_at,
            &g,
            &mut binding,
            &mut bindings,
            opts.max_actions.saturating_sub(actions.len()),
        )?;
        for binding in bindings {
            if let Some(a) = instantiate(&mut g, op, &binding, ActionId(actions.len())) {
                actions.push(a);
                if actions.len() > opts.max_actions {
                    return Err(GroundError::TooManyActions { cap: opts.max_actions });
                }
            }
        }
    }

    let mut goals = Vec::new();
    let mut goal_num = Vec::new();
    let mut unsatisfiable_static_goal = None;
    for c in &problem.goals {
        match c {
            Condition::Atom { pred, args, positive } => {
                let args: Vec<String> = args.iter().map(|t| resolve(t, &[])).collect();
                if g.static_preds[*pred] {
                    if g.init_atoms.contains(&(*pred, args.clone())) != *positive {
                        // keep an unreachable fact so the task is visibly unsolvable
                        unsatisfiable_static_goal = Some(g.fact(*pred, args, *positive));
                    }
                } else {
                    if !positive {
                        g.negated.insert(*pred);
                        g.fact(*pred, args.clone(), true);
                    }
                    goals.push(g.fact(*pred, args, *positive));
                }
            }
            Condition::Equal { .. } => match g.static_holds(c, &[]) {
                Some(true) => {}
                _ => {
                    let f = g.fact_index.len();
                    let name = format!("(unsatisfiable-goal-{f})");
                    g.facts.push(name.clone());
                    g.fact_atom.push(None);
                    let id = FactId(f);
                    g.fact_index.insert(name, id);
                    goals.push(id);
                }
            },
            Condition::Compare { lhs, rel, rhs } => match g.compare(lhs, *rel, rhs, &[]) {
                Eval::True => {}
                Eval::False => goal_num.push(NumCond { lhs: Expr::Const(0.0), rel: *rel, rhs: Expr::Const(1.0) }),
                Eval::Keep(nc) => goal_num.push(nc),
            },
        }
    }
    if let Some(f) = unsatisfiable_static_goal {
        goals.push(f);
    }

    let metric = match &problem.metric {
        None => Metric::ActionCount,
        Some(e) => {
            let (constant, total_time, terms) = linearize(&mut g, e)?;
            Metric::Linear { constant, total_time, terms: terms.into_iter().filter(|(_, c)| *c != 0.0).collect() }
        }
    };

    // complement facts for negated predicates
    if !g.negated.is_empty() {
        let n_before = g.facts.len();
        let mut twin: HashMap<FactId, FactId> = HashMap::new();
        for f in 0..n_before {
            if let Some((pred, args)) = g.fact_atom[f].clone() {
                if g.negated.contains(&pred) {
                    let t = g.fact(pred, args, false);
                    twin.insert(FactId(f), t);
                }
            }
        }
        let init_set: HashSet<FactId> = init.iter().copied().collect();
        let mut pos: Vec<FactId> = twin.keys().copied().collect();
        pos.sort();
        for p in pos {
            if !init_set.contains(&p) {
                init.push(twin[&p]);
            }
        }
        for a in &mut actions {
            let tw = |v: &[FactId]| v.iter().filter_map(|f| twin.get(f).copied()).collect::<Vec<_>>();
            let (as_, ae, ds, de) = (tw(&a.add_start), tw(&a.add_end), tw(&a.del_start), tw(&a.del_end));
            a.del_start.extend(as_);
            a.del_end.extend(ae);
            a.add_start.extend(ds);
            a.add_end.extend(de);
        }
    }

    let metric_ref = &metric;
    for a in &mut actions {
        a.normalize();
        a.cost = match action_cost(a, metric_ref, &g.var_init, opts.epsilon) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("{e}; using the minimum cost");
                opts.epsilon
            }
        };
    }

    let mut task = GroundTask {
        domain_name: domain.name.clone(),
        problem_name: problem.name.clone(),
        facts: g.facts,
        vars: g.vars,
        actions,
        init,
        init_values: g.var_init,
        goals,
        goal_num,
        metric,
        epsilon: opts.epsilon,
    };
    task.init.sort();
    task.init.dedup();
    task.goals.sort();
    task.goals.dedup();
    if opts.mutex_filter {
        filter_actions(&mut task);
    }
    Ok(task)
}

fn enumerate(
    candidates: &[Vec<String>],
    checks_at: &[Vec<&Condition>],
    g: &Grounder<'_>,
    binding: &mut Vec<String>,
    out: &mut Vec<Vec<String>>,
    budget: usize,
) -> Result<(), GroundError> {
    let k = binding.len();
    if k == candidates.len() {
        if out.len() >= budget {
            return Err(GroundError::TooManyActions { cap: budget });
        }
        out.push(binding.clone());
        return Ok(());
    }
    for obj in &candidates[k] {
        binding.push(obj.clone());
        if checks_at[k + 1].iter().all(|c| g.static_holds(c, binding) != Some(false)) {
            enumerate(candidates, checks_at, g, binding, out, budget)?;
        }
        binding.pop();
    }
    Ok(())
}

fn instantiate(
    g: &mut Grounder<'_>,
    op: &crate::pddl::OperatorSchema,
    binding: &[String],
    id: ActionId,
) -> Option<GroundAction> {
    let mut a = GroundAction::new(id, op.name.clone(), binding.to_vec());
    a.durative = op.durative;
    a.duration = g.expr(&op.duration, binding);
    if let Expr::Const(d) = a.duration {
        if d <= 0.0 {
            return None;
        }
    }
    for (tag, c) in &op.conditions {
        match c {
            Condition::Atom { pred, args, positive } => {
                if g.static_preds[*pred] {
                    continue; // decided during enumeration
                }
                let args: Vec<String> = args.iter().map(|t| resolve(t, binding)).collect();
                if !positive {
                    g.negated.insert(*pred);
                    g.fact(*pred, args.clone(), true);
                }
                let f = g.fact(*pred, args, *positive);
                match tag {
                    CondTag::AtStart => a.pre_start.push(f),
                    CondTag::OverAll => a.pre_overall.push(f),
                    CondTag::AtEnd => a.pre_end.push(f),
                }
            }
            Condition::Equal { .. } => {}
            Condition::Compare { lhs, rel, rhs } => match g.compare(lhs, *rel, rhs, binding) {
                Eval::True => {}
                Eval::False => return None,
                Eval::Keep(nc) => match tag {
                    CondTag::AtStart => a.num_pre_start.push(nc),
                    CondTag::OverAll => a.num_pre_overall.push(nc),
                    CondTag::AtEnd => a.num_pre_end.push(nc),
                },
            },
        }
    }
    for (tag, e) in &op.effects {
        let at_end = *tag == EffTag::AtEnd;
        match e {
            Effect::Add { pred, args } | Effect::Del { pred, args } => {
                let args: Vec<String> = args.iter().map(|t| resolve(t, binding)).collect();
                let f = g.fact(*pred, args, true);
                let list = match (matches!(e, Effect::Add { .. }), at_end) {
                    (true, false) => &mut a.add_start,
                    (true, true) => &mut a.add_end,
                    (false, false) => &mut a.del_start,
                    (false, true) => &mut a.del_end,
                };
                list.push(f);
            }
            Effect::Numeric { op: aop, target, expr } => {
                let args: Vec<String> = target.args.iter().map(|t| resolve(t, binding)).collect();
                let var = g.var(target.func, args);
                let expr = g.expr(expr, binding);
                let ne = NumEffect { var, op: *aop, expr };
                if at_end {
                    a.num_eff_end.push(ne);
                } else {
                    a.num_eff_start.push(ne);
                }
            }
        }
    }
    Some(a)
}

/// Drops actions whose preconditions are unreachable or pairwise mutex, then
/// compacts the fact universe to the facts still referenced.
pub fn filter_actions(task: &mut GroundTask) {
    let m = compute_mutex_facts(task.n_facts(), &task.init, &task.actions);
    let before = task.actions.len();
    task.actions.retain(|a| {
        let pre = a.pre();
        pre.iter().all(|&p| m.is_reachable(p)) && !m.any_pair(&pre)
    });
    if task.actions.len() != before {
        log::info!("mutex analysis removed {} of {} actions", before - task.actions.len(), before);
    }
    for (i, a) in task.actions.iter_mut().enumerate() {
        a.id = ActionId(i);
    }

    let mut used = vec![false; task.n_facts()];
    let mut mark = |fs: &[FactId]| fs.iter().for_each(|f| used[f.0] = true);
    mark(&task.init);
    mark(&task.goals);
    for a in &task.actions {
        for v in [&a.pre_start, &a.pre_overall, &a.pre_end, &a.add_start, &a.add_end, &a.del_start, &a.del_end] {
            mark(v);
        }
    }
    if used.iter().all(|&u| u) {
        return;
    }
    let mut remap = vec![None; task.n_facts()];
    let mut facts = Vec::new();
    for (i, name) in task.facts.iter().enumerate() {
        if used[i] {
            remap[i] = Some(FactId(facts.len()));
            facts.push(name.clone());
        }
    }
    let r = |v: &mut Vec<FactId>| {
        for f in v.iter_mut() {
            *f = remap[f.0].expect("used fact");
        }
    };
    task.facts = facts;
    r(&mut task.init);
    r(&mut task.goals);
    for a in &mut task.actions {
        for v in [
            &mut a.pre_start,
            &mut a.pre_overall,
            &mut a.pre_end,
            &mut a.add_start,
            &mut a.add_end,
            &mut a.del_start,
            &mut a.del_end,
        ] {
            r(v);
        }
    }
}
