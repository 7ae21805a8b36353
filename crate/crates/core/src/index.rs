//! Per-action sets precomputed once per task, so the search loops never
//! re-derive them.

use crate::task::{ActionId, FactId, GroundTask};

#[derive(Debug, Clone)]
pub struct TaskIndex {
    /// Effective preconditions (see [`crate::task::GroundAction::pre`]), sorted.
    pub pre: Vec<Vec<FactId>>,
    /// Preconditions required at the end point only (at-end and not also earlier).
    pub pre_end_only: Vec<Vec<FactId>>,
    /// All add effects, sorted.
    pub add: Vec<Vec<FactId>>,
    /// Add effects that happen only at the start.
    pub add_start_only: Vec<Vec<FactId>>,
    /// Facts true once the whole action has completed, sorted.
    pub net_add: Vec<Vec<FactId>>,
    /// All delete effects, sorted.
    pub del: Vec<Vec<FactId>>,
    /// Actions adding each fact, by index.
    pub achievers: Vec<Vec<ActionId>>,
    /// Actions with a numeric effect on each variable.
    pub writers: Vec<Vec<ActionId>>,
    pub static_duration: Vec<Option<f64>>,
}

impl TaskIndex {
    pub fn new(task: &GroundTask) -> Self {
        let n = task.actions.len();
        let mut idx = TaskIndex {
            pre: Vec::with_capacity(n),
            pre_end_only: Vec::with_capacity(n),
            add: Vec::with_capacity(n),
            add_start_only: Vec::with_capacity(n),
            net_add: Vec::with_capacity(n),
            del: Vec::with_capacity(n),
            achievers: vec![Vec::new(); task.n_facts()],
            writers: vec![Vec::new(); task.vars.len()],
            static_duration: Vec::with_capacity(n),
        };
        for a in &task.actions {
            let pre = a.pre();
            let early: Vec<FactId> = a.pre_start.iter().chain(&a.pre_overall).copied().collect();
            idx.pre_end_only.push(pre.iter().copied().filter(|f| !early.contains(f)).collect());
            idx.pre.push(pre);
            let add = a.add_all();
            for f in &add {
                idx.achievers[f.0].push(a.id);
            }
            idx.add_start_only.push(a.add_start.iter().copied().filter(|f| !a.add_end.contains(f)).collect());
            idx.add.push(add);
            idx.net_add.push(a.net_add());
            idx.del.push(a.del_all());
            for (v, _) in a.num_writes() {
                if idx.writers[v.0].last() != Some(&a.id) {
                    idx.writers[v.0].push(a.id);
                }
            }
            idx.static_duration.push(a.static_duration());
        }
        idx
    }

    /// Time offset of the effect `f` of `a` relative to its start.
    pub fn effect_offset(&self, a: ActionId, f: FactId, duration: f64) -> f64 {
        if self.add_start_only[a.0].contains(&f) {
            0.0
        } else {
            duration
        }
    }
}
