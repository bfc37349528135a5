//! Named example problems shipped with the crate.
//!
//! The JSON text is embedded at build time. Setting `CBF_LAB_FIXTURES` to a
//! directory makes [`load_fixture`] read `<dir>/<name>.json` instead.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::problem::{parse_problem, Problem, Provenance};
use crate::tolerance::Tolerances;

pub const FIXTURE_ENV: &str = "CBF_LAB_FIXTURES";

pub const FIXTURE_NAMES: [&str; 5] = [
    "fig1-bottom-right",
    "fig1-bottom-left",
    "fig2-top",
    "fig2-bottom",
    "aircraft",
];

/// Embedded JSON text of a fixture.
pub fn embedded_fixture(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig1-bottom-right" => include_str!("../fixtures/fig1-bottom-right.json"),
        "fig1-bottom-left" => include_str!("../fixtures/fig1-bottom-left.json"),
        "fig2-top" => include_str!("../fixtures/fig2-top.json"),
        "fig2-bottom" => include_str!("../fixtures/fig2-bottom.json"),
        "aircraft" => include_str!("../fixtures/aircraft.json"),
        _ => return None,
    })
}

/// Fixture text, honouring the directory override.
pub fn fixture_text(name: &str) -> Result<String> {
    if !FIXTURE_NAMES.contains(&name) {
        return Err(Error::InvalidInput(format!(
            "unknown fixture {name:?}; known: {}",
            FIXTURE_NAMES.join(", ")
        )));
    }
    if let Some(dir) = std::env::var_os(FIXTURE_ENV) {
        let path = PathBuf::from(dir).join(format!("{name}.json"));
        return std::fs::read_to_string(&path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())));
    }
    Ok(embedded_fixture(name)
        .expect("listed fixture is embedded")
        .to_string())
}

pub fn load_fixture(name: &str, tol: &Tolerances) -> Result<Problem> {
    parse_problem(
        &fixture_text(name)?,
        Provenance::Fixture(name.to_string()),
        tol,
    )
}
