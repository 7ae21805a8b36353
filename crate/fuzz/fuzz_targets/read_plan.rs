#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use tagplan::instance::Instance;
use tagplan::plan::{read_plan, validate};

fn instance() -> &'static Instance {
    static INSTANCE: OnceLock<Instance> = OnceLock::new();
    INSTANCE.get_or_init(|| {
        let d = tagplan::parse_domain(include_str!("../../data/zeno-domain.pddl")).unwrap();
        let p = tagplan::parse_problem(include_str!("../../data/zeno-problem.pddl"), &d).unwrap();
        Instance::new(tagplan::ground(&d, &p).unwrap())
    })
}

// Reads a plan against the bundled travel task and simulates it.
fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(plan) = read_plan(instance(), s) {
        if plan.steps.len() <= 64 {
            let _ = validate(instance(), &plan);
        }
    }
});
