#![no_main]

use cbf_lab::{
    build_filter_data, build_hocbf_chain, classify, parse_problem, Provenance, Tolerances,
};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let tol = Tolerances::default();
    let Ok(problem) = parse_problem(text, Provenance::User, &tol) else {
        return;
    };
    if problem.plant().n() > 8 {
        return;
    }
    let Ok(config) = problem.config(&tol) else {
        return;
    };
    let Ok(fd) = build_filter_data(problem.plant(), problem.constraint(), &config) else {
        return;
    };
    let chain =
        build_hocbf_chain(problem.plant(), problem.constraint(), config.alphas()).expect("chain");
    let _ = classify(&fd, &chain, &tol);
});
