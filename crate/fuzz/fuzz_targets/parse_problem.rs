#![no_main]

use cbf_lab::problem::parse_problem_spec;
use cbf_lab::{parse_problem, Provenance, Tolerances};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(problem) = parse_problem(text, Provenance::User, &Tolerances::default()) {
        let again = parse_problem_spec(&problem.to_json()).expect("written problem parses");
        assert_eq!(again, problem.spec);
    }
});
