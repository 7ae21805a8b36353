//! Reachability estimates from a state: for each fact, an estimate of the
//! number of actions needed to reach it (`num_acts`), its earliest time
//! (`time_fact`), and the best supporting action. Numeric preconditions are
//! ignored; each action is applied at most once.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::index::TaskIndex;
use crate::task::{eval_duration, ActionId, FactId, GroundTask};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ReachError {
    #[error("fact {0} is unreachable")]
    Unreachable(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachabilityTable {
    /// −1 marks an unreachable fact.
    pub num_acts: Vec<i64>,
    pub time_fact: Vec<f64>,
    /// `None` for facts of the anchor state (`a_start`) and unreachable facts.
    pub best_action: Vec<Option<ActionId>>,
    /// Time at which the current best action supports the fact.
    best_time: Vec<f64>,
    pub anchor: FixedBitSet,
}

impl ReachabilityTable {
    pub fn num_acts(&self, f: FactId) -> Option<usize> {
        let n = self.num_acts[f.0];
        (n >= 0).then_some(n as usize)
    }

    pub fn is_reachable(&self, f: FactId) -> bool {
        self.num_acts[f.0] >= 0
    }

    pub fn time(&self, f: FactId) -> Option<f64> {
        self.is_reachable(f).then(|| self.time_fact[f.0])
    }

    pub fn in_anchor(&self, f: FactId) -> bool {
        self.anchor.contains(f.0)
    }

    /// Actions chosen by the backward chaining over best supporters.
    pub fn required_action_set(&self, index: &TaskIndex, goals: &[FactId]) -> Result<BTreeSet<ActionId>, ReachError> {
        let mut acts = BTreeSet::new();
        let mut added = FixedBitSet::with_capacity(self.num_acts.len());
        let mut g: BTreeSet<FactId> = goals.iter().copied().filter(|f| !self.in_anchor(*f)).collect();
        while let Some(f) = g.pop_first() {
            let a = match self.best_action[f.0] {
                Some(a) => a,
                None => return Err(ReachError::Unreachable(f.0)),
            };
            acts.insert(a);
            for e in &index.add[a.0] {
                added.insert(e.0);
            }
            g.extend(index.pre[a.0].iter().copied());
            g.retain(|x| !self.in_anchor(*x) && !added.contains(x.0));
        }
        Ok(acts)
    }

    /// Estimated number of actions to achieve all of `goals` from the anchor state.
    pub fn required_actions(&self, index: &TaskIndex, goals: &[FactId]) -> Result<usize, ReachError> {
        self.required_action_set(index, goals).map(|s| s.len())
    }
}

/// Duration used for timing estimates: state-dependent durations are
/// evaluated in `values`; an evaluation failure counts as zero.
pub fn timing_duration(task: &GroundTask, index: &TaskIndex, a: ActionId, values: &[f64]) -> f64 {
    index.static_duration[a.0].unwrap_or_else(|| eval_duration(task.action(a), values).unwrap_or(0.0))
}

/// Forward pass from `state` examining actions in `order`.
pub fn compute_reachability(
    task: &GroundTask,
    index: &TaskIndex,
    state: &FixedBitSet,
    values: &[f64],
    order: &[ActionId],
) -> ReachabilityTable {
    let n = task.n_facts();
    let mut t = ReachabilityTable {
        num_acts: vec![-1; n],
        time_fact: vec![0.0; n],
        best_action: vec![None; n],
        best_time: vec![0.0; n],
        anchor: state.clone(),
    };
    for f in state.ones() {
        t.num_acts[f] = 0;
    }
    let mut f_set = state.clone();
    let mut f_new = state.clone();
    let mut available = FixedBitSet::with_capacity(task.actions.len());
    available.insert_range(..);
    // runs at least once so that precondition-free actions fire from an empty state
    loop {
        f_set.union_with(&f_new);
        f_new.clear();
        let applicable: Vec<ActionId> = order
            .iter()
            .copied()
            .filter(|a| available.contains(a.0) && index.pre[a.0].iter().all(|p| f_set.contains(p.0)))
            .collect();
        for a in applicable {
            let ra = t.required_actions(index, &index.pre[a.0]).expect("preconditions are reachable") as i64;
            let start = index.pre[a.0].iter().map(|p| t.time_fact[p.0]).fold(0.0, f64::max);
            let dur = timing_duration(task, index, a, values);
            let cost = task.action(a).cost;
            for &f in &index.add[a.0] {
                let known = f_set.contains(f.0) || f_new.contains(f.0);
                let at = start + index.effect_offset(a, f, dur);
                if !known || t.time_fact[f.0] > at {
                    t.time_fact[f.0] = at;
                }
                let better = if !known || t.num_acts[f.0] > ra + 1 {
                    true
                } else if t.num_acts[f.0] == ra + 1 {
                    // same estimate: prefer cheaper, then earlier support
                    match t.best_action[f.0] {
                        Some(b) => {
                            let bc = task.action(b).cost;
                            cost < bc || (cost == bc && at < t.best_time[f.0])
                        }
                        None => false,
                    }
                } else {
                    false
                };
                if better {
                    t.num_acts[f.0] = ra + 1;
                    t.best_action[f.0] = Some(a);
                    t.best_time[f.0] = at;
                }
                if !f_set.contains(f.0) {
                    f_new.insert(f.0);
                }
            }
            available.set(a.0, false);
        }
        if f_new.is_clear() {
            break;
        }
    }
    t
}

/// Memoises reachability tables by anchor state. Numeric values only
/// influence dynamic durations, so they are part of the key as raw bits.
#[derive(Debug, Default)]
pub struct ReachCache {
    tables: HashMap<(FixedBitSet, Vec<u64>), Arc<ReachabilityTable>>,
    pub hits: u64,
    pub misses: u64,
}

const CACHE_LIMIT: usize = 512;

impl ReachCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Same result as [`compute_reachability`] from `state`, reusing earlier work.
    pub fn refresh(
        &mut self,
        task: &GroundTask,
        index: &TaskIndex,
        state: &FixedBitSet,
        values: &[f64],
        order: &[ActionId],
    ) -> Arc<ReachabilityTable> {
        let key = (state.clone(), values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        if let Some(t) = self.tables.get(&key) {
            self.hits += 1;
            return Arc::clone(t);
        }
        self.misses += 1;
        if self.tables.len() >= CACHE_LIMIT {
            self.tables.clear();
        }
        let t = Arc::new(compute_reachability(task, index, state, values, order));
        self.tables.insert(key, Arc::clone(&t));
        t
    }

    pub fn clear(&mut self) {
        self.tables.clear();
    }
}

pub fn state_bits(n_facts: usize, facts: &[FactId]) -> FixedBitSet {
    let mut b = FixedBitSet::with_capacity(n_facts);
    for f in facts {
        b.insert(f.0);
    }
    b
}

pub fn canonical_order(task: &GroundTask) -> Vec<ActionId> {
    (0..task.actions.len()).map(ActionId).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::TaskBuilder;

    #[test]
    fn initial_facts_and_unreachable_facts() {
        let mut b = TaskBuilder::new("t");
        b.init(&["p"]);
        b.simple("a", 2.0, &["p"], &["q"], &[]);
        b.fact("lonely");
        let t = b.build();
        let idx = TaskIndex::new(&t);
        let r = compute_reachability(&t, &idx, &state_bits(t.n_facts(), &t.init), &[], &canonical_order(&t));
        let p = t.fact("p").unwrap();
        assert_eq!((r.num_acts(p), r.time(p), r.best_action[p.0]), (Some(0), Some(0.0), None));
        assert_eq!(r.num_acts[t.fact("lonely").unwrap().0], -1);
        assert_eq!(r.time(t.fact("q").unwrap()), Some(2.0));
        assert_eq!(r.required_actions(&idx, &[p]), Ok(0));
        assert!(r.required_actions(&idx, &[t.fact("lonely").unwrap()]).is_err());
    }

    #[test]
    fn cheaper_supporter_wins_ties() {
        let mut b = TaskBuilder::new("t");
        b.init(&["p"]);
        let dear = b.simple("dear", 1.0, &["p"], &["q"], &[]);
        let cheap = b.simple("cheap", 5.0, &["p"], &["q"], &[]);
        b.set_cost(dear, 3.0).set_cost(cheap, 1.0);
        let t = b.build();
        let idx = TaskIndex::new(&t);
        let r = compute_reachability(&t, &idx, &state_bits(t.n_facts(), &t.init), &[], &canonical_order(&t));
        let q = t.fact("q").unwrap();
        assert_eq!(r.best_action[q.0], Some(cheap));
        // time is still the minimum over all supporters
        assert_eq!(r.time(q), Some(1.0));
    }

    /// Eight initial facts and seven actions, applied in subscript order.
    fn seven_actions() -> GroundTask {
        let mut b = TaskBuilder::new("seven");
        b.init(&["f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8"]);
        b.simple("a1", 10.0, &["f1"], &["f1", "f9"], &[]);
        b.simple("a2", 30.0, &["f2", "f3"], &["f10", "f11"], &[]);
        b.simple("a3", 50.0, &["f4", "f5"], &["f12"], &[]);
        b.simple("a4", 50.0, &["f1", "f9", "f10"], &["f13"], &[]);
        b.simple("a5", 70.0, &["f11", "f12"], &["f14", "f15"], &[]);
        b.simple("a6", 30.0, &["f12"], &["f15", "f16"], &[]);
        b.simple("a7", 20.0, &["f13", "f14", "f16"], &["f17"], &[]);
        b.build()
    }

    #[test]
    fn seven_action_example_values() {
        let t = seven_actions();
        let idx = TaskIndex::new(&t);
        let r = compute_reachability(&t, &idx, &state_bits(t.n_facts(), &t.init), &[], &canonical_order(&t));
        let expected = [
            ("f9", 1, 10.0, "a1"),
            ("f10", 1, 30.0, "a2"),
            ("f11", 1, 30.0, "a2"),
            ("f12", 1, 50.0, "a3"),
            ("f13", 3, 80.0, "a4"),
            ("f14", 3, 120.0, "a5"),
            ("f15", 2, 80.0, "a6"),
            ("f16", 2, 80.0, "a6"),
            ("f17", 7, 140.0, "a7"),
        ];
        for (f, n, time, a) in expected {
            let id = t.fact(f).unwrap();
            assert_eq!(r.num_acts(id), Some(n), "{f}");
            assert_eq!(r.time(id), Some(time), "{f}");
            assert_eq!(r.best_action[id.0], t.action_by_name(&format!("({a})")), "{f}");
        }
        for f in ["f1", "f8"] {
            let id = t.fact(f).unwrap();
            assert_eq!((r.num_acts(id), r.time(id), r.best_action[id.0]), (Some(0), Some(0.0), None));
        }
    }

    #[test]
    fn required_actions_in_seven_action_example() {
        let t = seven_actions();
        let idx = TaskIndex::new(&t);
        let r = compute_reachability(&t, &idx, &state_bits(t.n_facts(), &t.init), &[], &canonical_order(&t));
        let a7 = t.action_by_name("(a7)").unwrap();
        let set = r.required_action_set(&idx, &idx.pre[a7.0]).unwrap();
        let names: BTreeSet<String> = set.iter().map(|a| t.action(*a).name()).collect();
        let want: BTreeSet<String> = ["a1", "a2", "a3", "a4", "a5", "a6"].iter().map(|a| format!("({a})")).collect();
        assert_eq!(names, want);
        assert_eq!(r.required_actions(&idx, &[t.fact("f13").unwrap()]), Ok(3));
        assert_eq!(r.required_actions(&idx, &[t.fact("f1").unwrap(), t.fact("f2").unwrap()]), Ok(0));
    }

    #[test]
    fn cache_returns_identical_tables() {
        let t = seven_actions();
        let idx = TaskIndex::new(&t);
        let order = canonical_order(&t);
        let s = state_bits(t.n_facts(), &t.init);
        let mut cache = ReachCache::new();
        let a = cache.refresh(&t, &idx, &s, &[], &order);
        let b = cache.refresh(&t, &idx, &s, &[], &order);
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(*a, compute_reachability(&t, &idx, &s, &[], &order));
        assert_eq!((cache.hits, cache.misses), (1, 1));
    }

    #[test]
    fn actions_without_preconditions_fire_from_an_empty_state() {
        let mut b = TaskBuilder::new("t");
        b.simple("first", 1.0, &[], &["m"], &[]);
        b.simple("second", 2.0, &["m"], &["g"], &[]);
        let t = b.build();
        let idx = TaskIndex::new(&t);
        let r = compute_reachability(&t, &idx, &state_bits(t.n_facts(), &[]), &[], &canonical_order(&t));
        assert_eq!(r.num_acts(t.fact("g").unwrap()), Some(2));
        assert_eq!(r.time(t.fact("g").unwrap()), Some(3.0));
    }
}
