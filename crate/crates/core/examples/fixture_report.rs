//! Prints the classification of every bundled example problem.

use cbf_lab::fixtures::{load_fixture, FIXTURE_NAMES};
use cbf_lab::{build_filter_data, build_hocbf_chain, classify, Tolerances};

fn main() {
    let tol = Tolerances::default();
    for name in FIXTURE_NAMES {
        let problem = match load_fixture(name, &tol) {
            Ok(p) => p,
            Err(e) => {
                println!("{name:<18} load failed: {e}");
                continue;
            }
        };
        let config = match problem.config(&tol) {
            Ok(c) => c,
            Err(e) => {
                println!("{name:<18} {e}");
                continue;
            }
        };
        let fd =
            build_filter_data(problem.plant(), problem.constraint(), &config).expect("filter data");
        let chain = build_hocbf_chain(problem.plant(), problem.constraint(), config.alphas())
            .expect("chain");
        match classify(&fd, &chain, &tol) {
            Ok(rep) => {
                let spec: Vec<String> = rep
                    .eigen
                    .eigenvalues
                    .iter()
                    .map(|z| format!("{:.4}{:+.4}i", z.re, z.im))
                    .collect();
                println!(
                    "{name:<18} {:<13} xi = {:+.4e}  spec(A~) = [{}]",
                    rep.verdict.to_string(),
                    rep.equilibria.xi,
                    spec.join(", ")
                );
            }
            Err(e) => println!("{name:<18} classification failed: {e}"),
        }
    }
}
