//! The grounded planning task: dense fact/variable/action universes.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::numeric::{AssignOp, EvalError, Expr, Rel};

/// Cost given to actions whose metric delta is not positive.
pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FactId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

pub type GroundExpr = Expr<VarId>;

/// `lhs rel rhs` over ground numeric variables.
#[derive(Debug, Clone, PartialEq)]
pub struct NumCond {
    pub lhs: GroundExpr,
    pub rel: Rel,
    pub rhs: GroundExpr,
}

impl NumCond {
    /// `lhs - rhs` in the given state.
    pub fn diff(&self, values: &[f64], duration: Option<f64>) -> Result<f64, EvalError> {
        let v = |x: &VarId| values[x.0];
        Ok(self.lhs.eval(&v, duration)? - self.rhs.eval(&v, duration)?)
    }

    /// Evaluation errors count as "not satisfied".
    pub fn holds(&self, values: &[f64], duration: Option<f64>) -> bool {
        self.diff(values, duration).is_ok_and(|d| self.rel.holds(d))
    }

    /// Distance from satisfaction; infinite when the expression cannot be evaluated.
    pub fn gap(&self, values: &[f64], duration: Option<f64>) -> f64 {
        self.diff(values, duration).map_or(f64::INFINITY, |d| self.rel.gap(d))
    }

    pub fn vars(&self) -> Vec<VarId> {
        let mut v = Vec::new();
        self.lhs.vars(&mut v);
        self.rhs.vars(&mut v);
        v.sort();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumEffect {
    pub var: VarId,
    pub op: AssignOp,
    pub expr: GroundExpr,
}

impl NumEffect {
    pub fn apply(&self, values: &mut [f64], read: &[f64], duration: Option<f64>) -> Result<(), EvalError> {
        let rhs = self.expr.eval(&|x: &VarId| read[x.0], duration)?;
        // increase/decrease effects on one variable accumulate
        values[self.var.0] = self.op.apply(values[self.var.0], rhs)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundAction {
    pub id: ActionId,
    pub schema: String,
    pub args: Vec<String>,
    pub durative: bool,
    pub pre_start: Vec<FactId>,
    pub pre_overall: Vec<FactId>,
    pub pre_end: Vec<FactId>,
    pub num_pre_start: Vec<NumCond>,
    pub num_pre_overall: Vec<NumCond>,
    pub num_pre_end: Vec<NumCond>,
    pub add_start: Vec<FactId>,
    pub add_end: Vec<FactId>,
    pub del_start: Vec<FactId>,
    pub del_end: Vec<FactId>,
    pub num_eff_start: Vec<NumEffect>,
    pub num_eff_end: Vec<NumEffect>,
    pub duration: GroundExpr,
    pub cost: f64,
}

fn union(parts: &[&[FactId]]) -> Vec<FactId> {
    let mut v: Vec<FactId> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    v.sort();
    v.dedup();
    v
}

fn minus(a: &[FactId], b: &[FactId]) -> Vec<FactId> {
    a.iter().copied().filter(|x| !b.contains(x)).collect()
}

impl GroundAction {
    pub fn new(id: ActionId, schema: impl Into<String>, args: Vec<String>) -> Self {
        GroundAction {
            id,
            schema: schema.into(),
            args,
            durative: true,
            pre_start: Vec::new(),
            pre_overall: Vec::new(),
            pre_end: Vec::new(),
            num_pre_start: Vec::new(),
            num_pre_overall: Vec::new(),
            num_pre_end: Vec::new(),
            add_start: Vec::new(),
            add_end: Vec::new(),
            del_start: Vec::new(),
            del_end: Vec::new(),
            num_eff_start: Vec::new(),
            num_eff_end: Vec::new(),
            duration: Expr::Const(1.0),
            cost: 1.0,
        }
    }

    /// `(name arg1 arg2)` as it appears in plan files.
    pub fn name(&self) -> String {
        let mut s = format!("({}", self.schema);
        for a in &self.args {
            s.push(' ');
            s.push_str(a);
        }
        s.push(')');
        s
    }

    /// Preconditions that must be supported in the graph: at-start ones,
    /// plus over-all/at-end ones the action does not achieve itself at start.
    pub fn pre(&self) -> Vec<FactId> {
        let later = union(&[&self.pre_overall, &self.pre_end]);
        union(&[&self.pre_start, &minus(&later, &self.add_start)])
    }

    /// Every boolean precondition regardless of tag.
    pub fn pre_all(&self) -> Vec<FactId> {
        union(&[&self.pre_start, &self.pre_overall, &self.pre_end])
    }

    pub fn add_all(&self) -> Vec<FactId> {
        union(&[&self.add_start, &self.add_end])
    }

    pub fn del_all(&self) -> Vec<FactId> {
        union(&[&self.del_start, &self.del_end])
    }

    /// Facts true after the whole action, viewed as one atomic step.
    pub fn net_add(&self) -> Vec<FactId> {
        union(&[&self.add_end, &minus(&self.add_start, &self.del_end)])
    }

    /// Facts false after the whole action, viewed as one atomic step.
    pub fn net_del(&self) -> Vec<FactId> {
        let add = self.net_add();
        minus(&self.del_all(), &add)
    }

    pub fn num_pre_all(&self) -> impl Iterator<Item = &NumCond> {
        self.num_pre_start.iter().chain(&self.num_pre_overall).chain(&self.num_pre_end)
    }

    pub fn num_eff_all(&self) -> impl Iterator<Item = &NumEffect> {
        self.num_eff_start.iter().chain(&self.num_eff_end)
    }

    pub fn has_numeric(&self) -> bool {
        self.num_pre_all().next().is_some() || self.num_eff_all().next().is_some()
    }

    /// Numeric variables read by preconditions, duration, and effect right-hand sides.
    pub fn num_reads(&self) -> Vec<VarId> {
        let mut v = Vec::new();
        for c in self.num_pre_all() {
            c.lhs.vars(&mut v);
            c.rhs.vars(&mut v);
        }
        self.duration.vars(&mut v);
        for e in self.num_eff_all() {
            e.expr.vars(&mut v);
        }
        v.sort();
        v.dedup();
        v
    }

    pub fn num_writes(&self) -> Vec<(VarId, AssignOp)> {
        self.num_eff_all().map(|e| (e.var, e.op)).collect()
    }

    /// Constant duration, if the expression does not depend on the state.
    pub fn static_duration(&self) -> Option<f64> {
        self.duration.eval(&|_: &VarId| f64::NAN, None).ok()
    }

    /// Removes facts added and deleted under the same tag from the delete list.
    pub fn normalize(&mut self) {
        for v in [
            &mut self.pre_start,
            &mut self.pre_overall,
            &mut self.pre_end,
            &mut self.add_start,
            &mut self.add_end,
            &mut self.del_start,
            &mut self.del_end,
        ] {
            v.sort();
            v.dedup();
        }
        self.del_start.retain(|f| !self.add_start.contains(f));
        self.del_end.retain(|f| !self.add_end.contains(f));
    }

    /// Applies numeric effects of `tag` (start or end) to `values`, reading the pre-effect values.
    pub fn apply_numeric(&self, at_end: bool, values: &mut [f64], duration: Option<f64>) -> Result<(), EvalError> {
        let effs = if at_end { &self.num_eff_end } else { &self.num_eff_start };
        if effs.is_empty() {
            return Ok(());
        }
        let read = values.to_vec();
        for e in effs {
            e.apply(values, &read, duration)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    /// Minimise the number of actions.
    ActionCount,
    /// `constant + total_time * (total-time) + Σ coef * var`.
    Linear { constant: f64, total_time: f64, terms: Vec<(VarId, f64)> },
}

impl Metric {
    pub fn total_time_coef(&self) -> f64 {
        match self {
            Metric::ActionCount => 0.0,
            Metric::Linear { total_time, .. } => *total_time,
        }
    }

    /// The metric without its total-time term.
    pub fn state_part(&self, values: &[f64]) -> f64 {
        match self {
            Metric::ActionCount => 0.0,
            Metric::Linear { constant, terms, .. } => {
                constant + terms.iter().map(|(v, c)| c * values[v.0]).sum::<f64>()
            }
        }
    }

    pub fn value(&self, values: &[f64], makespan: f64, n_actions: usize) -> f64 {
        match self {
            Metric::ActionCount => n_actions as f64,
            Metric::Linear { total_time, .. } => self.state_part(values) + total_time * makespan,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TaskError {
    #[error("action {action}: {source}")]
    Eval { action: String, source: EvalError },
    #[error("action {action}: duration {value} is not positive")]
    NonPositiveDuration { action: String, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTask {
    pub domain_name: String,
    pub problem_name: String,
    pub facts: Vec<String>,
    pub vars: Vec<String>,
    pub actions: Vec<GroundAction>,
    /// Sorted.
    pub init: Vec<FactId>,
    pub init_values: Vec<f64>,
    /// Sorted.
    pub goals: Vec<FactId>,
    pub goal_num: Vec<NumCond>,
    pub metric: Metric,
    pub epsilon: f64,
}

impl GroundTask {
    pub fn n_facts(&self) -> usize {
        self.facts.len()
    }

    pub fn fact(&self, name: &str) -> Option<FactId> {
        self.facts.iter().position(|f| f == name).map(FactId)
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|f| f == name).map(VarId)
    }

    pub fn action_by_name(&self, name: &str) -> Option<ActionId> {
        self.actions.iter().find(|a| a.name() == name).map(|a| a.id)
    }

    pub fn action(&self, id: ActionId) -> &GroundAction {
        &self.actions[id.0]
    }

    pub fn is_init(&self, f: FactId) -> bool {
        self.init.binary_search(&f).is_ok()
    }

    /// Without a metric, time and cost weigh equally; otherwise execution
    /// cost has weight 1 and time the metric's total-time coefficient.
    pub fn weights(&self) -> (f64, f64) {
        match &self.metric {
            Metric::ActionCount => (0.5, 0.0),
            Metric::Linear { total_time, .. } => (1.0, *total_time),
        }
    }

    pub fn is_temporal(&self) -> bool {
        self.actions.iter().any(|a| a.durative)
    }

    pub fn max_cost(&self) -> f64 {
        self.actions.iter().map(|a| a.cost).fold(self.epsilon, f64::max)
    }
}

/// Evaluates the duration of `a` in numeric state `values`.
pub fn eval_duration(a: &GroundAction, values: &[f64]) -> Result<f64, TaskError> {
    let d = a
        .duration
        .eval(&|v: &VarId| values[v.0], None)
        .map_err(|source| TaskError::Eval { action: a.name(), source })?;
    if d <= 0.0 {
        return Err(TaskError::NonPositiveDuration { action: a.name(), value: d });
    }
    Ok(d)
}

/// Metric delta caused by the numeric effects of `a` applied to `init`,
/// ignoring the total-time term; `epsilon` when the delta is not positive.
pub fn action_cost(a: &GroundAction, metric: &Metric, init: &[f64], epsilon: f64) -> Result<f64, TaskError> {
    let terms = match metric {
        Metric::ActionCount => return Ok(1.0),
        Metric::Linear { terms, .. } => terms,
    };
    let touches = a.num_eff_all().any(|e| terms.iter().any(|(v, _)| *v == e.var));
    if !touches {
        return Ok(epsilon);
    }
    let duration = match a.duration.mentions_duration() || a.num_eff_all().any(|e| e.expr.mentions_duration()) {
        true => Some(eval_duration(a, init)?),
        false => a.duration.eval(&|v: &VarId| init[v.0], None).ok(),
    };
    let m0 = metric.state_part(init);
    let mut vals = init.to_vec();
    let err = |source| TaskError::Eval { action: a.name(), source };
    a.apply_numeric(false, &mut vals, duration).map_err(err)?;
    a.apply_numeric(true, &mut vals, duration).map_err(err)?;
    let delta = metric.state_part(&vals) - m0;
    Ok(if delta <= 0.0 { epsilon } else { delta })
}

/// Programmatic construction of ground tasks, mainly for fixtures and tests.
#[derive(Debug, Clone)]
pub struct TaskBuilder {
    task: GroundTask,
    fact_index: BTreeMap<String, FactId>,
    explicit_cost: Vec<bool>,
}

impl TaskBuilder {
    pub fn new(name: &str) -> Self {
        TaskBuilder {
            task: GroundTask {
                domain_name: name.to_string(),
                problem_name: name.to_string(),
                facts: Vec::new(),
                vars: Vec::new(),
                actions: Vec::new(),
                init: Vec::new(),
                init_values: Vec::new(),
                goals: Vec::new(),
                goal_num: Vec::new(),
                metric: Metric::ActionCount,
                epsilon: DEFAULT_EPSILON,
            },
            fact_index: BTreeMap::new(),
            explicit_cost: Vec::new(),
        }
    }

    pub fn fact(&mut self, name: &str) -> FactId {
        if let Some(&f) = self.fact_index.get(name) {
            return f;
        }
        let f = FactId(self.task.facts.len());
        self.task.facts.push(name.to_string());
        self.fact_index.insert(name.to_string(), f);
        f
    }

    pub fn facts(&mut self, names: &[&str]) -> Vec<FactId> {
        names.iter().map(|n| self.fact(n)).collect()
    }

    pub fn var(&mut self, name: &str, init: f64) -> VarId {
        if let Some(v) = self.task.vars.iter().position(|x| x == name) {
            self.task.init_values[v] = init;
            return VarId(v);
        }
        self.task.vars.push(name.to_string());
        self.task.init_values.push(init);
        VarId(self.task.vars.len() - 1)
    }

    pub fn init(&mut self, names: &[&str]) -> &mut Self {
        let fs = self.facts(names);
        self.task.init.extend(fs);
        self
    }

    pub fn goal(&mut self, names: &[&str]) -> &mut Self {
        let fs = self.facts(names);
        self.task.goals.extend(fs);
        self
    }

    pub fn goal_num(&mut self, c: NumCond) -> &mut Self {
        self.task.goal_num.push(c);
        self
    }

    pub fn metric(&mut self, m: Metric) -> &mut Self {
        self.task.metric = m;
        self
    }

    /// A durative action with over-all preconditions and at-end effects.
    pub fn simple(&mut self, name: &str, duration: f64, pre: &[&str], add: &[&str], del: &[&str]) -> ActionId {
        let id = ActionId(self.task.actions.len());
        let mut a = GroundAction::new(id, name, Vec::new());
        a.duration = Expr::Const(duration);
        a.pre_overall = self.facts(pre);
        a.add_end = self.facts(add);
        a.del_end = self.facts(del);
        self.task.actions.push(a);
        self.explicit_cost.push(false);
        id
    }

    /// An action with no conditions or effects, to be filled in through [`Self::action_mut`].
    pub fn blank(&mut self, name: &str, duration: f64) -> ActionId {
        self.simple(name, duration, &[], &[], &[])
    }

    pub fn action_mut(&mut self, id: ActionId) -> &mut GroundAction {
        &mut self.task.actions[id.0]
    }

    pub fn set_cost(&mut self, id: ActionId, cost: f64) -> &mut Self {
        self.task.actions[id.0].cost = cost;
        self.explicit_cost[id.0] = true;
        self
    }

    pub fn build(&self) -> GroundTask {
        let mut t = self.task.clone();
        t.init.sort();
        t.init.dedup();
        t.goals.sort();
        t.goals.dedup();
        for (i, a) in t.actions.iter_mut().enumerate() {
            a.normalize();
            if !self.explicit_cost[i] {
                a.cost = action_cost(a, &t.metric, &t.init_values, t.epsilon).unwrap_or(t.epsilon);
            }
        }
        t
    }
}
