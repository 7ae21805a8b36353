#![no_main]

use libfuzzer_sys::fuzz_target;
use tagplan::instance::Instance;
use tagplan::GroundOptions;

// Input: a domain and a problem separated by a NUL byte.
fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Some((d, p)) = s.split_once('\0') else { return };
    let Ok(domain) = tagplan::parse_domain(d) else { return };
    let Ok(problem) = tagplan::parse_problem(p, &domain) else { return };
    let opts = GroundOptions { max_actions: 2_000, ..GroundOptions::default() };
    if let Ok(task) = tagplan::ground_with(&domain, &problem, &opts) {
        if task.n_facts() <= 200 {
            let _ = Instance::new(task);
        }
    }
});
