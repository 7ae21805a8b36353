//! Temporal action graphs: a sequence of levels holding at most one domain
//! action each, no-op propagation of facts between levels, ordering
//! constraints between actions, and earliest end times.
//!
//! Only the level sequence is stored as primary state; supports, times,
//! numeric layers, orderings and inconsistencies are recomputed from it
//! after every mutation, which keeps every derived view exactly consistent.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::instance::Instance;
use crate::reach::state_bits;
use crate::task::{eval_duration, ActionId, FactId};

/// Tolerance used when checking schedules.
pub const TIME_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("level {0} holds no domain action")]
    NotAnAction(usize),
    #[error("unknown action id {0}")]
    UnknownAction(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OrderKind {
    Causal,
    Exclusion,
}

/// `before` must end before `after` starts. Both are levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrderingConstraint {
    pub kind: OrderKind,
    pub before: usize,
    pub after: usize,
}

/// Who provides a fact to a precondition node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Supporter {
    /// The initial state.
    Start,
    Level(usize),
}

/// A precondition of the action at `level`, or a goal when `level` is the
/// goal level.
#[derive(Debug, Clone, PartialEq)]
pub struct PreNode {
    pub level: usize,
    pub fact: FactId,
    /// Supporters whose no-op chain reaches this node, latest level first.
    pub supporters: Vec<Supporter>,
    /// Minimum time over supporters, or the reachability default when unsupported.
    pub time: f64,
    /// Required at the end point only.
    pub end_only: bool,
}

impl PreNode {
    pub fn is_supported(&self) -> bool {
        !self.supporters.is_empty()
    }

    /// Level of the latest supporter; `None` for the initial state.
    pub fn latest_supporter(&self) -> Option<Option<usize>> {
        self.supporters.first().map(|s| match s {
            Supporter::Start => None,
            Supporter::Level(j) => Some(*j),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Flaw {
    /// Unsupported boolean precondition.
    Fact(FactId),
    /// Violated numeric precondition, by position in the owner's numeric
    /// precondition list (or the goal list at the goal level).
    Numeric(usize),
    /// The duration could not be evaluated to a positive number.
    Duration,
    /// A numeric effect could not be evaluated.
    Effect,
}

impl Flaw {
    fn class(&self) -> u8 {
        match self {
            Flaw::Fact(_) => 0,
            Flaw::Numeric(_) => 1,
            Flaw::Duration => 2,
            Flaw::Effect => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Inconsistency {
    /// Level of the owning action; the goal level for goals.
    pub level: usize,
    pub flaw: Flaw,
}

impl Inconsistency {
    pub fn is_numeric(&self) -> bool {
        !matches!(self.flaw, Flaw::Fact(_))
    }

    fn sort_key(&self) -> (usize, u8, usize) {
        let k = match self.flaw {
            Flaw::Fact(f) => f.0,
            Flaw::Numeric(i) => i,
            _ => 0,
        };
        (self.level, self.flaw.class(), k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaGraph {
    levels: Vec<Option<ActionId>>,
    support: Vec<FixedBitSet>,
    values: Vec<Vec<f64>>,
    duration: Vec<f64>,
    time: Vec<f64>,
    nodes: Vec<PreNode>,
    node_start: Vec<usize>,
    omega: Vec<OrderingConstraint>,
    flaws: Vec<Inconsistency>,
}

impl TaGraph {
    /// A graph with `horizon` empty levels.
    pub fn with_horizon(inst: &Instance, horizon: usize) -> Self {
        Self::from_levels(inst, vec![None; horizon])
    }

    /// The default starting graph: no actions, and as many empty levels as
    /// the delete-free layering needs to reach the goals, plus two.
    pub fn empty(inst: &Instance) -> Self {
        Self::with_horizon(inst, inst.relaxed_depth().unwrap_or(0) + 2)
    }

    /// One action per level, in the given order.
    pub fn from_plan(inst: &Instance, plan: &[ActionId]) -> Result<Self, GraphError> {
        if let Some(a) = plan.iter().find(|a| a.0 >= inst.task.actions.len()) {
            return Err(GraphError::UnknownAction(a.0));
        }
        Ok(Self::from_levels(inst, plan.iter().map(|a| Some(*a)).collect()))
    }

    pub fn from_levels(inst: &Instance, levels: Vec<Option<ActionId>>) -> Self {
        let mut g = TaGraph {
            levels,
            support: Vec::new(),
            values: Vec::new(),
            duration: Vec::new(),
            time: Vec::new(),
            nodes: Vec::new(),
            node_start: Vec::new(),
            omega: Vec::new(),
            flaws: Vec::new(),
        };
        g.recompute(inst);
        g
    }

    /// Number of action levels; the goals sit at this index.
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn goal_level(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[Option<ActionId>] {
        &self.levels
    }

    pub fn action_at(&self, level: usize) -> Option<ActionId> {
        self.levels.get(level).copied().flatten()
    }

    /// `(level, action)` pairs in level order.
    pub fn actions(&self) -> impl Iterator<Item = (usize, ActionId)> + '_ {
        self.levels.iter().enumerate().filter_map(|(k, a)| a.map(|a| (k, a)))
    }

    pub fn n_actions(&self) -> usize {
        self.levels.iter().filter(|a| a.is_some()).count()
    }

    /// Facts supported in the layer before level `l` (`INIT_l`).
    pub fn supported(&self, l: usize) -> &FixedBitSet {
        &self.support[l]
    }

    /// Numeric values in the layer before level `l`.
    pub fn values(&self, l: usize) -> &[f64] {
        &self.values[l]
    }

    /// End time of the action at `level`.
    pub fn time(&self, level: usize) -> Option<f64> {
        self.action_at(level).map(|_| self.time[level])
    }

    pub fn duration(&self, level: usize) -> Option<f64> {
        self.action_at(level).map(|_| self.duration[level])
    }

    pub fn start(&self, level: usize) -> Option<f64> {
        self.action_at(level).map(|_| self.time[level] - self.duration[level])
    }

    pub fn makespan(&self) -> f64 {
        self.actions().map(|(k, _)| self.time[k]).fold(0.0, f64::max)
    }

    pub fn nodes(&self) -> &[PreNode] {
        &self.nodes
    }

    /// Precondition nodes of the action at `level` (goals at the goal level).
    pub fn nodes_at(&self, level: usize) -> &[PreNode] {
        &self.nodes[self.node_start[level]..self.node_start[level + 1]]
    }

    pub fn node(&self, level: usize, f: FactId) -> Option<&PreNode> {
        self.nodes_at(level).iter().find(|n| n.fact == f)
    }

    pub fn omega(&self) -> &[OrderingConstraint] {
        &self.omega
    }

    /// Earliest level first; within a level boolean before numeric, then by fact.
    pub fn inconsistencies(&self) -> &[Inconsistency] {
        &self.flaws
    }

    /// Ω-predecessors of the action at `level`.
    pub fn predecessors(&self, level: usize) -> impl Iterator<Item = &OrderingConstraint> + '_ {
        self.omega.iter().filter(move |c| c.after == level)
    }

    /// Supporters of `f` in the layer before `l`, latest first.
    pub fn supporters(&self, inst: &Instance, l: usize, f: FactId) -> Vec<Supporter> {
        let mut out = Vec::new();
        for j in (0..l).rev() {
            if let Some(b) = self.levels[j] {
                if inst.index.net_add[b.0].binary_search(&f).is_ok() {
                    out.push(Supporter::Level(j));
                }
                if inst.mutex.actions.blocks_noop(b, f) {
                    return out;
                }
            }
        }
        if inst.task.is_init(f) {
            out.push(Supporter::Start);
        }
        out
    }

    fn supporter_time(&self, inst: &Instance, s: Supporter, f: FactId) -> f64 {
        match s {
            Supporter::Start => 0.0,
            Supporter::Level(j) => {
                let b = self.levels[j].expect("supporter level holds an action");
                if inst.index.add_start_only[b.0].contains(&f) {
                    self.time[j] - self.duration[j]
                } else {
                    self.time[j]
                }
            }
        }
    }

    /// Time of `f` in the layer before `l`, if supported there.
    pub fn fact_time(&self, inst: &Instance, l: usize, f: FactId) -> Option<f64> {
        if !self.support[l].contains(f.0) {
            return None;
        }
        let s = self.supporters(inst, l, f);
        Some(s.iter().map(|s| self.supporter_time(inst, *s, f)).fold(f64::INFINITY, f64::min))
    }

    fn recompute(&mut self, inst: &Instance) {
        let task = &inst.task;
        let l_max = self.levels.len();
        let mut cur = state_bits(task.n_facts(), &task.init);
        self.support = Vec::with_capacity(l_max + 1);
        self.values = Vec::with_capacity(l_max + 1);
        self.support.push(cur.clone());
        self.values.push(task.init_values.clone());
        self.duration = vec![0.0; l_max];
        self.time = vec![0.0; l_max];
        self.nodes.clear();
        self.node_start = Vec::with_capacity(l_max + 2);
        self.flaws.clear();
        let mut omega = BTreeSet::new();

        for k in 0..l_max {
            self.node_start.push(self.nodes.len());
            let Some(a) = self.levels[k] else {
                self.support.push(cur.clone());
                let v = self.values[k].clone();
                self.values.push(v);
                continue;
            };
            let act = task.action(a);
            let vals = self.values[k].clone();
            let dur = match inst.index.static_duration[a.0].map(Ok).unwrap_or_else(|| eval_duration(act, &vals)) {
                Ok(d) if d > 0.0 && d.is_finite() => d,
                _ => {
                    self.flaws.push(Inconsistency { level: k, flaw: Flaw::Duration });
                    0.0
                }
            };
            self.duration[k] = dur;

            let mut start = 0.0f64;
            for &p in &inst.index.pre[a.0] {
                let node = self.make_node(inst, k, p, inst.index.pre_end_only[a.0].contains(&p));
                let lower = if node.end_only { node.time - dur } else { node.time };
                start = start.max(lower);
                if let Some(j) = self.causal_supporter(inst, &node) {
                    omega.insert(OrderingConstraint { kind: OrderKind::Causal, before: j, after: k });
                }
                self.nodes.push(node);
            }
            for j in 0..k {
                if let Some(b) = self.levels[j] {
                    if inst.mutex.actions.is_mutex(b, a) {
                        omega.insert(OrderingConstraint { kind: OrderKind::Exclusion, before: j, after: k });
                        start = start.max(self.time[j]);
                    }
                }
            }
            for (i, c) in act.num_pre_all().enumerate() {
                if !c.holds(&vals, Some(dur)) {
                    self.flaws.push(Inconsistency { level: k, flaw: Flaw::Numeric(i) });
                }
            }
            self.time[k] = start + dur;

            let mut next = vals.clone();
            if act.apply_numeric(false, &mut next, Some(dur)).is_err()
                || act.apply_numeric(true, &mut next, Some(dur)).is_err()
            {
                log::debug!("numeric effect of {} at level {k} failed to evaluate", act.name());
                self.flaws.push(Inconsistency { level: k, flaw: Flaw::Effect });
                next = vals.clone();
            }
            self.values.push(next);
            for f in inst.mutex.actions.blocked_facts(a) {
                cur.set(f.0, false);
            }
            for f in &inst.index.net_add[a.0] {
                cur.insert(f.0);
            }
            self.support.push(cur.clone());
        }

        self.node_start.push(self.nodes.len());
        for &g in &task.goals {
            let node = self.make_node(inst, l_max, g, false);
            self.nodes.push(node);
        }
        for (i, c) in task.goal_num.iter().enumerate() {
            if !c.holds(&self.values[l_max], None) {
                self.flaws.push(Inconsistency { level: l_max, flaw: Flaw::Numeric(i) });
            }
        }
        self.node_start.push(self.nodes.len());
        self.omega = omega.into_iter().collect();
        self.flaws.sort_by_key(|f| f.sort_key());
    }

    fn make_node(&mut self, inst: &Instance, k: usize, p: FactId, end_only: bool) -> PreNode {
        let supporters = self.supporters(inst, k, p);
        let time = if supporters.is_empty() {
            self.flaws.push(Inconsistency { level: k, flaw: Flaw::Fact(p) });
            inst.default_time(p)
        } else {
            supporters.iter().map(|s| self.supporter_time(inst, *s, p)).fold(f64::INFINITY, f64::min)
        };
        PreNode { level: k, fact: p, supporters, time, end_only }
    }

    /// The supporter a causal ordering is recorded for: the one giving the
    /// node its time (latest level on ties), provided it supports through
    /// its end and the node is needed from the start.
    fn causal_supporter(&self, inst: &Instance, node: &PreNode) -> Option<usize> {
        if node.end_only {
            return None;
        }
        let s = node
            .supporters
            .iter()
            .copied()
            .find(|s| (self.supporter_time(inst, *s, node.fact) - node.time).abs() <= TIME_TOLERANCE)?;
        match s {
            Supporter::Level(j) => {
                let b = self.levels[j]?;
                (!inst.index.add_start_only[b.0].contains(&node.fact)).then_some(j)
            }
            Supporter::Start => None,
        }
    }

    /// Places `a` at level `l` (`l` may equal the goal level). An empty level
    /// is reused; otherwise a new level is spliced in and later actions shift.
    pub fn insert_action(&mut self, inst: &Instance, a: ActionId, l: usize) -> usize {
        assert!(l <= self.levels.len(), "insertion level {l} beyond goal level");
        if l < self.levels.len() && self.levels[l].is_none() {
            self.levels[l] = Some(a);
        } else {
            self.levels.insert(l, Some(a));
        }
        self.recompute(inst);
        l
    }

    /// Removes the action at `level`; with `prune`, also every action whose
    /// supported nodes all belong to removed actions, transitively.
    /// Returns the removed `(level, action)` pairs.
    pub fn remove_action(
        &mut self,
        inst: &Instance,
        level: usize,
        prune: bool,
    ) -> Result<Vec<(usize, ActionId)>, GraphError> {
        let removed = self.removal_set(&[level], prune)?;
        for (k, _) in &removed {
            self.levels[*k] = None;
        }
        self.recompute(inst);
        Ok(removed)
    }

    /// Removes several actions at once, with the same pruning rule.
    pub fn remove_actions(
        &mut self,
        inst: &Instance,
        levels: &[usize],
        prune: bool,
    ) -> Result<Vec<(usize, ActionId)>, GraphError> {
        let removed = self.removal_set(levels, prune)?;
        for (k, _) in &removed {
            self.levels[*k] = None;
        }
        self.recompute(inst);
        Ok(removed)
    }

    /// Actions that a removal of `levels` takes away, without applying it.
    pub fn removal_set(&self, levels: &[usize], prune: bool) -> Result<Vec<(usize, ActionId)>, GraphError> {
        let mut gone = BTreeSet::new();
        for &k in levels {
            self.action_at(k).ok_or(GraphError::NotAnAction(k))?;
            gone.insert(k);
        }
        if prune {
            loop {
                let mut more = Vec::new();
                for (j, _) in self.actions() {
                    if gone.contains(&j) {
                        continue;
                    }
                    let mut feeds_gone = false;
                    let mut feeds_other = false;
                    for n in &self.nodes {
                        if n.supporters.contains(&Supporter::Level(j)) {
                            if gone.contains(&n.level) {
                                feeds_gone = true;
                            } else {
                                feeds_other = true;
                                break;
                            }
                        }
                    }
                    if feeds_gone && !feeds_other {
                        more.push(j);
                    }
                }
                if more.is_empty() {
                    break;
                }
                gone.extend(more);
            }
        }
        Ok(gone.into_iter().map(|k| (k, self.levels[k].unwrap())).collect())
    }

    /// Facts whose no-op chains crossing level `l` the action `a` would block
    /// if placed there: supported precondition nodes at or after `l` with no
    /// supporter at or after `l`.
    pub fn threats(&self, inst: &Instance, a: ActionId, l: usize) -> Vec<FactId> {
        let blocked = inst.mutex.actions.blocked_facts(a);
        if blocked.is_empty() {
            return Vec::new();
        }
        let adds = &inst.index.net_add[a.0];
        let mut out = BTreeSet::new();
        for n in &self.nodes[self.node_start[l.min(self.levels.len())]..] {
            if !n.is_supported() || blocked.binary_search(&n.fact).is_err() || adds.binary_search(&n.fact).is_ok() {
                continue;
            }
            let crosses = match n.latest_supporter() {
                Some(None) => true,
                Some(Some(j)) => j < l,
                None => false,
            };
            if crosses {
                out.insert(n.fact);
            }
        }
        out.into_iter().collect()
    }

    /// Precondition nodes (of other actions and goals) left unsupported if
    /// the action at `level` is removed.
    pub fn unsupported_by_removal(&self, level: usize) -> Vec<&PreNode> {
        self.nodes
            .iter()
            .filter(|n| n.level != level && n.supporters.len() == 1 && n.supporters[0] == Supporter::Level(level))
            .collect()
    }

    /// Latest end time among actions before `l` that are mutex with `a`.
    pub fn exclusion_bound(&self, inst: &Instance, a: ActionId, l: usize) -> f64 {
        (0..l.min(self.levels.len()))
            .filter(|&j| self.levels[j].is_some_and(|b| inst.mutex.actions.is_mutex(b, a)))
            .map(|j| self.time[j])
            .fold(0.0, f64::max)
    }

    /// Drops empty levels.
    pub fn compact(&mut self, inst: &Instance) {
        if self.levels.iter().any(|l| l.is_none()) {
            self.levels.retain(|l| l.is_some());
            self.recompute(inst);
        }
    }

    /// Appends `n` empty levels before the goals.
    pub fn extend(&mut self, inst: &Instance, n: usize) {
        if n > 0 {
            self.levels.extend(std::iter::repeat_n(None, n));
            self.recompute(inst);
        }
    }

    /// No inconsistencies, Ω forward in level order, every mutex pair ordered,
    /// and times consistent with Ω and durations.
    pub fn is_solution(&self, inst: &Instance) -> bool {
        if !self.flaws.is_empty() {
            return false;
        }
        if self.omega.iter().any(|c| c.before >= c.after) {
            return false;
        }
        for c in &self.omega {
            if self.time[c.after] - self.duration[c.after] < self.time[c.before] - TIME_TOLERANCE {
                return false;
            }
        }
        let acts: Vec<(usize, ActionId)> = self.actions().collect();
        for (i, &(j, a)) in acts.iter().enumerate() {
            for &(k, b) in &acts[i + 1..] {
                if inst.mutex.actions.is_mutex(a, b)
                    && !self.omega.contains(&OrderingConstraint { kind: OrderKind::Exclusion, before: j, after: k })
                {
                    return false;
                }
            }
        }
        true
    }

    /// Domain actions in level order.
    pub fn plan(&self) -> Vec<ActionId> {
        self.actions().map(|(_, a)| a).collect()
    }

    /// Human-readable listing of levels, times and inconsistencies.
    pub fn dump(&self, inst: &Instance) -> String {
        let task = &inst.task;
        let mut s = String::new();
        for (k, a) in self.levels.iter().enumerate() {
            match a {
                None => {
                    let _ = writeln!(s, "{k:>4}: -");
                }
                Some(a) => {
                    let _ =
                        writeln!(s, "{k:>4}: {} [{}] ends {}", task.action(*a).name(), self.duration[k], self.time[k]);
                    for n in self.nodes_at(k) {
                        dump_node(&mut s, task, n);
                    }
                }
            }
        }
        let _ = writeln!(s, "goal:");
        for n in self.nodes_at(self.goal_level()) {
            dump_node(&mut s, task, n);
        }
        for c in &self.omega {
            let _ = writeln!(s, "order {:?}: {} < {}", c.kind, c.before, c.after);
        }
        for f in &self.flaws {
            let _ = writeln!(s, "flaw at {}: {:?}", f.level, f.flaw);
        }
        s
    }
}

fn dump_node(s: &mut String, task: &crate::task::GroundTask, n: &PreNode) {
    if n.is_supported() {
        let _ = writeln!(s, "        {} ({})", task.facts[n.fact.0], n.time);
    } else {
        let _ = writeln!(s, "        {} (-)", task.facts[n.fact.0]);
    }
}
