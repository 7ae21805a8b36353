//! A grounded task bundled with everything precomputed from it once.

use crate::index::TaskIndex;
use crate::mutex::MutexTables;
use crate::reach::{canonical_order, compute_reachability, state_bits, ReachabilityTable};
use crate::task::{FactId, GroundTask};

#[derive(Debug, Clone)]
pub struct Instance {
    pub task: GroundTask,
    pub index: TaskIndex,
    pub mutex: MutexTables,
    /// Reachability from the initial state under the canonical action order.
    pub init_reach: ReachabilityTable,
}

impl Instance {
    pub fn new(task: GroundTask) -> Self {
        let mutex = MutexTables::compute(&task);
        Self::with_mutex(task, mutex)
    }

    pub fn with_mutex(task: GroundTask, mutex: MutexTables) -> Self {
        let index = TaskIndex::new(&task);
        let init = state_bits(task.n_facts(), &task.init);
        let init_reach = compute_reachability(&task, &index, &init, &task.init_values, &canonical_order(&task));
        Instance { task, index, mutex, init_reach }
    }

    /// Time assumed for a precondition nobody supports yet.
    pub fn default_time(&self, f: FactId) -> f64 {
        self.init_reach.time(f).unwrap_or(0.0)
    }

    /// Goals that no sequence of actions can reach, ignoring numeric conditions.
    pub fn unreachable_goals(&self) -> Vec<FactId> {
        self.task.goals.iter().copied().filter(|g| !self.init_reach.is_reachable(*g)).collect()
    }

    /// Number of delete-free layers needed before every goal appears, if any.
    pub fn relaxed_depth(&self) -> Option<usize> {
        let mut state = state_bits(self.task.n_facts(), &self.task.init);
        let mut depth = 0;
        loop {
            if self.task.goals.iter().all(|g| state.contains(g.0)) {
                return Some(depth);
            }
            let mut next = state.clone();
            for (a, pre) in self.index.pre.iter().enumerate() {
                if pre.iter().all(|p| state.contains(p.0)) {
                    for f in &self.index.add[a] {
                        next.insert(f.0);
                    }
                }
            }
            if next == state {
                return None;
            }
            state = next;
            depth += 1;
        }
    }
}
