#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use tagplan::pddl::DomainModel;

fn domain() -> &'static DomainModel {
    static DOMAIN: OnceLock<DomainModel> = OnceLock::new();
    DOMAIN.get_or_init(|| tagplan::parse_domain(include_str!("../../data/zeno-domain.pddl")).unwrap())
}

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = tagplan::parse_problem(s, domain());
    }
});
