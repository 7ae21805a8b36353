//! Anytime planner for a PDDL2.1 subset based on stochastic local search
//! over temporal action graphs.

pub mod eval;
pub mod graph;
pub mod ground;
pub mod index;
pub mod instance;
pub mod mutex;
pub mod numeric;
pub mod pddl;
pub mod plan;
pub mod reach;
pub mod search;
pub mod task;

pub use ground::{ground, ground_with, GroundError, GroundOptions};
pub use mutex::{ActionMutex, FactMutex, MutexTables};
pub use pddl::{parse_domain, parse_problem, ParseError};
pub use task::{ActionId, FactId, GroundAction, GroundTask, Metric, TaskBuilder, VarId};
