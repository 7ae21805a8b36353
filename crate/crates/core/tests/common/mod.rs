#![allow(dead_code)]

pub mod fixtures;
pub mod metric;
pub mod schedule;

use std::path::PathBuf;

use tagplan::instance::Instance;
use tagplan::{ground, parse_domain, parse_problem};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Loads `data/<name>-domain.pddl` with `data/<name>-problem.pddl`.
pub fn load(name: &str) -> Instance {
    let dir = data_dir();
    let d = std::fs::read_to_string(dir.join(format!("{name}-domain.pddl"))).unwrap();
    let p = std::fs::read_to_string(dir.join(format!("{name}-problem.pddl"))).unwrap();
    let dm = parse_domain(&d).unwrap();
    let pm = parse_problem(&p, &dm).unwrap();
    Instance::new(ground(&dm, &pm).unwrap())
}

pub const BUNDLED: [&str; 4] = ["logistics", "zeno", "rocket", "shortcut"];
