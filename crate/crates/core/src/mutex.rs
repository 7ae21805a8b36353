//! Persistent mutual-exclusion relations between facts and between actions.
//!
//! Fact mutexes come from a forward fixed point that hypothesises pairs when
//! an action first produces a fact and withdraws them whenever some applicable
//! action could make both true together. Action mutexes then follow from the
//! classic competing-needs / interference / inconsistent-effects rules, with
//! numeric read/write conflicts added on top.

use std::collections::{HashSet, VecDeque};

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::task::{ActionId, FactId, GroundAction, GroundTask};

/// Default state cap for the brute-force oracle.
pub const ORACLE_STATE_CAP: usize = 200_000;

/// Action matrices above this many actions are answered on demand instead of cached.
const ACTION_MATRIX_LIMIT: usize = 8192;

/// Symmetric, irreflexive relation over facts, stored as square bit rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactMutex {
    rows: Vec<FixedBitSet>,
    reachable: FixedBitSet,
}

impl FactMutex {
    pub fn empty(n_facts: usize) -> Self {
        FactMutex {
            rows: vec![FixedBitSet::with_capacity(n_facts); n_facts],
            reachable: FixedBitSet::with_capacity(n_facts),
        }
    }

    pub fn n_facts(&self) -> usize {
        self.rows.len()
    }

    pub fn is_mutex(&self, f: FactId, g: FactId) -> bool {
        self.rows[f.0].contains(g.0)
    }

    pub fn row(&self, f: FactId) -> &FixedBitSet {
        &self.rows[f.0]
    }

    /// Facts produced by the relaxed forward pass (the final `F*`).
    pub fn is_reachable(&self, f: FactId) -> bool {
        self.reachable.contains(f.0)
    }

    fn insert(&mut self, f: usize, g: usize) {
        if f != g {
            self.rows[f].insert(g);
            self.rows[g].insert(f);
        }
    }

    fn remove(&mut self, f: usize, g: usize) {
        self.rows[f].set(g, false);
        self.rows[g].set(f, false);
    }

    /// Each unordered pair once, smaller index first.
    pub fn pairs(&self) -> Vec<(FactId, FactId)> {
        let mut out = Vec::new();
        for (f, row) in self.rows.iter().enumerate() {
            for g in row.ones().filter(|&g| g > f) {
                out.push((FactId(f), FactId(g)));
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones(..)).sum::<usize>() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(|r| r.is_clear())
    }

    /// Does any pair of `facts` belong to the relation?
    pub fn any_pair(&self, facts: &[FactId]) -> bool {
        facts.iter().enumerate().any(|(i, &p)| facts[i + 1..].iter().any(|&q| self.is_mutex(p, q)))
    }

    fn contains_all(&self, other: &FactMutex) -> bool {
        self.rows.iter().zip(&other.rows).all(|(a, b)| b.is_subset(a))
    }

    /// Is every pair of `self` also in `other`?
    pub fn is_subset(&self, other: &FactMutex) -> bool {
        other.contains_all(self)
    }
}

fn bits(n: usize, facts: &[FactId]) -> FixedBitSet {
    let mut b = FixedBitSet::with_capacity(n);
    for f in facts {
        b.insert(f.0);
    }
    b
}

/// Computes the fact mutex relation from initial state `init` and `actions`.
///
/// Actions are examined in slice order; applicability is re-checked against
/// the growing fact set and the current relation for every action.
pub fn compute_mutex_facts(n_facts: usize, init: &[FactId], actions: &[GroundAction]) -> FactMutex {
    struct Op {
        pre: Vec<usize>,
        add: Vec<usize>,
        del: FixedBitSet,
    }
    let ops: Vec<Op> = actions
        .iter()
        .map(|a| Op {
            pre: a.pre().iter().map(|f| f.0).collect(),
            add: a.net_add().iter().map(|f| f.0).collect(),
            del: bits(n_facts, &a.net_del()),
        })
        .collect();

    let mut m_star = FactMutex::empty(n_facts);
    let mut f_star = bits(n_facts, init);
    let mut applied = FixedBitSet::with_capacity(ops.len());
    loop {
        let f_prev = f_star.clone();
        let m_prev = m_star.clone();
        for (ai, op) in ops.iter().enumerate() {
            if !op.pre.iter().all(|&p| f_star.contains(p)) {
                continue;
            }
            if op.pre.iter().enumerate().any(|(i, &p)| op.pre[i + 1..].iter().any(|&q| m_star.rows[p].contains(q))) {
                continue;
            }
            let new: Vec<usize> = op.add.iter().copied().filter(|&f| !f_star.contains(f)).collect();
            for &f in &new {
                for h in op.del.ones() {
                    m_star.insert(f, h);
                }
                // facts mutex with some precondition and not deleted here
                let mut q_set = FixedBitSet::with_capacity(n_facts);
                for &p in &op.pre {
                    q_set.union_with(&m_star.rows[p]);
                }
                q_set.difference_with(&op.del);
                for q in q_set.ones().collect::<Vec<_>>() {
                    m_star.insert(f, q);
                }
            }
            if !applied.contains(ai) {
                for (i, &p) in op.add.iter().enumerate() {
                    for &q in &op.add[i + 1..] {
                        m_star.remove(p, q);
                    }
                }
            }
            // Pairs with an old add effect survive only if the partner is
            // deleted by the action or mutex with one of its preconditions.
            // This runs on every pass, not just the first application: a
            // precondition mutex withdrawn later must be able to release the
            // pairs it was protecting.
            let mut keep = op.del.clone();
            for &p in &op.pre {
                keep.union_with(&m_star.rows[p]);
            }
            for &i in op.add.iter().filter(|f| !new.contains(f)) {
                let mut drop = m_star.rows[i].clone();
                drop.difference_with(&keep);
                for q in drop.ones().collect::<Vec<_>>() {
                    m_star.remove(i, q);
                }
            }
            for &f in &new {
                f_star.insert(f);
            }
            applied.insert(ai);
        }
        if f_star == f_prev && m_star == m_prev {
            break;
        }
    }
    m_star.reachable = f_star;
    m_star
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("reachable state space exceeds {0} states")]
    TooManyStates(usize),
}

/// Exact persistent fact mutexes of the boolean projection, by exhaustive
/// forward search over reachable states (each action applied atomically).
pub fn brute_force_persistent_mutex(task: &GroundTask, cap: usize) -> Result<FactMutex, OracleError> {
    let n = task.n_facts();
    let ops: Vec<(Vec<usize>, Vec<usize>, Vec<usize>)> = task
        .actions
        .iter()
        .map(|a| {
            let f = |v: Vec<FactId>| v.into_iter().map(|x| x.0).collect::<Vec<_>>();
            (f(a.pre()), f(a.net_add()), f(a.net_del()))
        })
        .collect();
    let start = bits(n, &task.init);
    let mut seen: HashSet<FixedBitSet> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(start.clone());
    queue.push_back(start);
    let mut co_true = FactMutex::empty(n);
    while let Some(s) = queue.pop_front() {
        let ones: Vec<usize> = s.ones().collect();
        for (i, &f) in ones.iter().enumerate() {
            for &g in &ones[i + 1..] {
                co_true.insert(f, g);
            }
        }
        for (pre, add, del) in &ops {
            if !pre.iter().all(|&p| s.contains(p)) {
                continue;
            }
            let mut t = s.clone();
            for &d in del {
                t.set(d, false);
            }
            for &a in add {
                t.insert(a);
            }
            if !seen.contains(&t) {
                if seen.len() >= cap {
                    return Err(OracleError::TooManyStates(cap));
                }
                seen.insert(t.clone());
                queue.push_back(t);
            }
        }
    }
    let mut out = FactMutex::empty(n);
    for f in 0..n {
        for g in f + 1..n {
            if !co_true.rows[f].contains(g) {
                out.insert(f, g);
            }
        }
    }
    for s in &seen {
        out.reachable.union_with(s);
    }
    Ok(out)
}

/// Per-action data used by the action mutex test.
#[derive(Debug, Clone)]
struct ActionSets {
    pre: Vec<FactId>,
    add: Vec<FactId>,
    del: Vec<FactId>,
    reads: Vec<usize>,
    writes: Vec<(usize, crate::numeric::AssignOp)>,
}

/// Action mutex relation over ground actions and one no-op per fact.
#[derive(Debug, Clone)]
pub struct ActionMutex {
    facts: FactMutex,
    sets: Vec<ActionSets>,
    matrix: Option<Vec<FixedBitSet>>,
    /// Facts whose no-op each action is mutex with, sorted.
    blocked: Vec<Vec<FactId>>,
}

fn intersects(a: &[FactId], b: &[FactId]) -> bool {
    // both sorted
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

impl ActionMutex {
    fn compute(&self, a: usize, b: usize) -> Option<&'static str> {
        if a == b {
            return None;
        }
        let (x, y) = (&self.sets[a], &self.sets[b]);
        if x.pre.iter().any(|&p| y.pre.iter().any(|&q| self.facts.is_mutex(p, q))) {
            return Some("competing needs");
        }
        if intersects(&x.del, &y.pre) || intersects(&y.del, &x.pre) {
            return Some("interference");
        }
        if intersects(&x.del, &y.add) || intersects(&y.del, &x.add) {
            return Some("inconsistent effects");
        }
        let rw = |w: &ActionSets, r: &ActionSets| w.writes.iter().any(|(v, _)| r.reads.contains(v));
        if rw(x, y) || rw(y, x) {
            return Some("numeric read/write");
        }
        if x.writes.iter().any(|(v, op)| y.writes.iter().any(|(u, op2)| u == v && !op.commutes_with(*op2))) {
            return Some("numeric write/write");
        }
        None
    }

    pub fn is_mutex(&self, a: ActionId, b: ActionId) -> bool {
        match &self.matrix {
            Some(m) => m[a.0].contains(b.0),
            None => self.compute(a.0, b.0).is_some(),
        }
    }

    /// Which rule makes `a` and `b` mutex, if any.
    pub fn justification(&self, a: ActionId, b: ActionId) -> Option<&'static str> {
        self.compute(a.0, b.0)
    }

    /// Is `a` mutex with the no-op of `f`?
    pub fn blocks_noop(&self, a: ActionId, f: FactId) -> bool {
        self.blocked[a.0].binary_search(&f).is_ok()
    }

    pub fn blocked_facts(&self, a: ActionId) -> &[FactId] {
        &self.blocked[a.0]
    }

    /// No-ops of `f` and `g` are mutex exactly when the facts are.
    pub fn noop_mutex(&self, f: FactId, g: FactId) -> bool {
        self.facts.is_mutex(f, g)
    }

    pub fn facts(&self) -> &FactMutex {
        &self.facts
    }

    pub fn n_actions(&self) -> usize {
        self.sets.len()
    }

    /// Number of mutex pairs among domain actions.
    pub fn count_pairs(&self) -> usize {
        let n = self.sets.len();
        (0..n).map(|a| (a + 1..n).filter(|&b| self.is_mutex(ActionId(a), ActionId(b))).count()).sum()
    }
}

/// Derives the action mutex relation from the fact relation `m`.
pub fn compute_mutex_actions(m: &FactMutex, task: &GroundTask) -> ActionMutex {
    let sets: Vec<ActionSets> = task
        .actions
        .iter()
        .map(|a| {
            let mut writes: Vec<_> = a.num_writes().into_iter().map(|(v, op)| (v.0, op)).collect();
            writes.sort_by_key(|w| w.0);
            ActionSets {
                pre: a.pre_all(),
                add: a.add_all(),
                del: a.del_all(),
                reads: a.num_reads().into_iter().map(|v| v.0).collect(),
                writes,
            }
        })
        .collect();
    let blocked = task
        .actions
        .iter()
        .map(|a| {
            let mut b = bits(task.n_facts(), &a.del_all());
            for p in a.pre_all() {
                b.union_with(m.row(p));
            }
            b.ones().map(FactId).collect()
        })
        .collect();
    let mut am = ActionMutex { facts: m.clone(), sets, matrix: None, blocked };
    let n = am.sets.len();
    if n <= ACTION_MATRIX_LIMIT {
        let mut rows = vec![FixedBitSet::with_capacity(n); n];
        for a in 0..n {
            for b in a + 1..n {
                if am.compute(a, b).is_some() {
                    rows[a].insert(b);
                    rows[b].insert(a);
                }
            }
        }
        am.matrix = Some(rows);
    }
    am
}

/// Fact and action mutex relations for one task.
#[derive(Debug, Clone)]
pub struct MutexTables {
    pub facts: FactMutex,
    pub actions: ActionMutex,
}

impl MutexTables {
    pub fn compute(task: &GroundTask) -> Self {
        let facts = compute_mutex_facts(task.n_facts(), &task.init, &task.actions);
        let actions = compute_mutex_actions(&facts, task);
        MutexTables { facts, actions }
    }
}
