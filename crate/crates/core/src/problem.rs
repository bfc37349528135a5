//! JSON problem files.
//!
//! ```json
//! { "A": [[...]], "B": [[...]], "c": [...], "d": 0.49,
//!   "K": [[...]], "G": [[...]], "alphas": [...],
//!   "name": "...", "source": "...", "lqr": { "Q": [[...]], "R": [[...]] } }
//! ```
//!
//! Matrices are row-major. `K`, `G` and `alphas` are optional: `G` defaults
//! to the identity, `alphas` to all ones and `K` to the LQR gain for the
//! `lqr` weights (identity weights when those are absent too).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dmatrix_from_rows, dmatrix_to_rows};
use crate::linear_model::{Constraint, FilterConfig, Plant};
use crate::riccati::lqr_gain;
use crate::tolerance::Tolerances;

/// Largest accepted state or input dimension.
pub const MAX_DIM: usize = 64;
/// Largest accepted problem file, in bytes.
pub const MAX_INPUT_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrWeights {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
}

/// Raw schema, one-to-one with the JSON text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub d: f64,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<Vec<f64>>>,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lqr: Option<LqrWeights>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Provenance {
    User,
    Fixture(String),
}

/// Validated problem: plant and constraint checked, optional parts shaped.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub provenance: Provenance,
    plant: Plant,
    constraint: Constraint,
    k: Option<DMatrix<f64>>,
    g: DMatrix<f64>,
    alphas: Vec<f64>,
    lqr: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

fn check_dim(what: &'static str, v: usize) -> Result<()> {
    if v == 0 || v > MAX_DIM {
        return Err(Error::InvalidInput(format!(
            "{what} = {v} is outside 1..={MAX_DIM}"
        )));
    }
    Ok(())
}

fn shaped(what: &'static str, rows: &[Vec<f64>], shape: (usize, usize)) -> Result<DMatrix<f64>> {
    let m = dmatrix_from_rows(rows)?;
    if m.shape() != shape {
        return Err(Error::dims(
            what,
            format!("{}x{}", shape.0, shape.1),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(m)
}

impl Problem {
    pub fn from_spec(spec: ProblemSpec, provenance: Provenance, tol: &Tolerances) -> Result<Self> {
        let n = spec.a.len();
        check_dim("n", n)?;
        let m = spec.b.first().map_or(0, |r| r.len());
        check_dim("m", m)?;
        let a = shaped("A", &spec.a, (n, n))?;
        let b = shaped("B", &spec.b, (n, m))?;
        if spec.c.len() != n {
            return Err(Error::dims("c", n, spec.c.len()));
        }
        if spec.c.iter().any(|v| !v.is_finite()) || !spec.d.is_finite() {
            return Err(Error::InvalidInput("c and d must be finite".into()));
        }
        let plant = Plant::new(a, b, tol)?;
        let constraint = Constraint::new(&plant, DVector::from_column_slice(&spec.c), spec.d, tol)?;
        let r = constraint.relative_degree();

        let k = spec
            .k
            .as_ref()
            .map(|k| shaped("K", k, (m, n)))
            .transpose()?;
        let g = match &spec.g {
            Some(g) => shaped("G", g, (m, m))?,
            None => DMatrix::identity(m, m),
        };
        let alphas = spec.alphas.clone().unwrap_or_else(|| vec![1.0; r]);
        crate::linear_model::validate_alphas(&alphas, r).map_err(|e| match e {
            Error::AlphaCount { expected, found } => Error::dims("alphas", expected, found),
            other => other,
        })?;
        let lqr = spec
            .lqr
            .as_ref()
            .map(|w| {
                Ok::<_, Error>((
                    shaped("lqr.Q", &w.q, (n, n))?,
                    shaped("lqr.R", &w.r, (m, m))?,
                ))
            })
            .transpose()?;
        Ok(Problem {
            spec,
            provenance,
            plant,
            constraint,
            k,
            g,
            alphas,
            lqr,
        })
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    pub fn constraint(&self) -> &Constraint {
        &self.constraint
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// The gain given in the file, if any.
    pub fn explicit_gain(&self) -> Option<&DMatrix<f64>> {
        self.k.as_ref()
    }

    /// The gain from the file, or the LQR gain when the file has none.
    pub fn gain(&self) -> Result<DMatrix<f64>> {
        if let Some(k) = &self.k {
            return Ok(k.clone());
        }
        let (n, m) = (self.plant.n(), self.plant.m());
        let (q, r) = self
            .lqr
            .clone()
            .unwrap_or_else(|| (DMatrix::identity(n, n), DMatrix::identity(m, m)));
        lqr_gain(self.plant.a(), self.plant.b(), &q, &r)
    }

    /// Full filter configuration; checks that `A − BK` is Hurwitz.
    pub fn config(&self, tol: &Tolerances) -> Result<FilterConfig> {
        FilterConfig::new(
            &self.plant,
            &self.constraint,
            self.gain()?,
            self.g.clone(),
            self.alphas.clone(),
            tol,
        )
    }

    pub fn display_name(&self) -> String {
        match (&self.spec.name, &self.provenance) {
            (Some(n), _) => n.clone(),
            (None, Provenance::Fixture(n)) => n.clone(),
            (None, Provenance::User) => "problem".into(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.spec).expect("spec serializes");
        s.push('\n');
        s
    }
}

pub fn parse_problem_spec(text: &str) -> Result<ProblemSpec> {
    if text.len() > MAX_INPUT_BYTES {
        return Err(Error::Parse(format!(
            "input is {} bytes; the limit is {MAX_INPUT_BYTES}",
            text.len()
        )));
    }
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn parse_problem(text: &str, provenance: Provenance, tol: &Tolerances) -> Result<Problem> {
    Problem::from_spec(parse_problem_spec(text)?, provenance, tol)
}

/// Rebuilds the raw schema from matrices, for writing derived problems.
pub fn spec_from_parts(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DVector<f64>,
    d: f64,
    k: Option<&DMatrix<f64>>,
    g: Option<&DMatrix<f64>>,
    alphas: Option<&[f64]>,
) -> ProblemSpec {
    ProblemSpec {
        name: None,
        source: None,
        a: dmatrix_to_rows(a),
        b: dmatrix_to_rows(b),
        c: c.iter().copied().collect(),
        d,
        k: k.map(dmatrix_to_rows),
        g: g.map(dmatrix_to_rows),
        alphas: alphas.map(|a| a.to_vec()),
        lqr: None,
    }
}

/// Parses `"1,2.5,-3"`, `"[1, 2.5, -3]"`, `"1 2.5 -3"` or `"1;2.5;-3"`.
pub fn parse_state_vector(text: &str, expected_len: Option<usize>) -> Result<DVector<f64>> {
    if text.len() > 64 * 1024 {
        return Err(Error::Parse("state vector text is too long".into()));
    }
    let trimmed = text.trim();
    let inner = trimmed
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .unwrap_or(trimmed);
    let values: Vec<f64> = inner
        .split(|ch: char| ch == ',' || ch == ';' || ch.is_whitespace())
        .filter(|tok| !tok.is_empty())
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::Parse(format!("invalid number {tok:?} in state vector")))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::Parse("state vector is empty".into()));
    }
    if values.len() > MAX_DIM {
        return Err(Error::Parse(format!("state vector longer than {MAX_DIM}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse("state vector entries must be finite".into()));
    }
    if let Some(n) = expected_len {
        if values.len() != n {
            return Err(Error::dims("state vector", n, values.len()));
        }
    }
    Ok(DVector::from_vec(values))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOUBLE_INTEGRATOR: &str = r#"{
        "A": [[0, 1], [0, 0]], "B": [[0], [1]], "c": [1, 0], "d": 2,
        "K": [[1, 2]], "alphas": [1, 2]
    }"#;

    #[test]
    fn parses_and_defaults() {
        let tol = Tolerances::default();
        let p = parse_problem(DOUBLE_INTEGRATOR, Provenance::User, &tol).unwrap();
        assert_eq!(p.constraint().relative_degree(), 2);
        assert_eq!(p.g(), &DMatrix::identity(1, 1));
        assert!(p.config(&tol).is_ok());
    }

    #[test]
    fn missing_gain_falls_back_to_lqr() {
        let tol = Tolerances::default();
        let text = r#"{"A": [[0, 1], [0, 0]], "B": [[0], [1]], "c": [1, 0], "d": 2}"#;
        let p = parse_problem(text, Provenance::User, &tol).unwrap();
        assert_eq!(p.alphas(), &[1.0, 1.0]);
        let k = p.gain().unwrap();
        // LQR with identity weights on the double integrator: K = [1, √3].
        assert!((k[(0, 0)] - 1.0).abs() < 1e-9 && (k[(0, 1)] - 3f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn round_trip_preserves_values() {
        let tol = Tolerances::default();
        let text = r#"{"A": [[-0.79, -1.6], [-0.43, -0.01]], "B": [[0.61], [0.55]],
                       "c": [-0.26, -0.86], "d": 0.49, "K": [[0.33, 0.88]], "alphas": [5]}"#;
        let p = parse_problem(text, Provenance::User, &tol).unwrap();
        let again = parse_problem(&p.to_json(), Provenance::User, &tol).unwrap();
        assert_eq!(p.spec, again.spec);
    }

    #[test]
    fn rejects_malformed_inputs() {
        let tol = Tolerances::default();
        for bad in [
            "",
            "{",
            r#"{"A": [[1]], "B": [[1]], "c": [1]}"#,
            r#"{"A": [[1, 0]], "B": [[1]], "c": [1], "d": 1}"#,
            r#"{"A": [[1]], "B": [[1]], "c": [1], "d": -1}"#,
            r#"{"A": [[1]], "B": [[1]], "c": [1], "d": 1, "alphas": [1, 2]}"#,
            r#"{"A": [[1]], "B": [[1]], "c": [1], "d": 1, "extra": 3}"#,
            r#"{"A": [], "B": [], "c": [], "d": 1}"#,
        ] {
            assert!(parse_problem(bad, Provenance::User, &tol).is_err(), "{bad}");
        }
    }

    #[test]
    fn state_vector_formats() {
        let want = DVector::from_vec(vec![1.0, -2.5]);
        for text in ["1,-2.5", "[1, -2.5]", " 1 -2.5 ", "1;-2.5"] {
            assert_eq!(parse_state_vector(text, Some(2)).unwrap(), want);
        }
        assert!(parse_state_vector("1,x", None).is_err());
        assert!(parse_state_vector("", None).is_err());
        assert!(parse_state_vector("1,NaN", None).is_err());
        assert!(parse_state_vector("1,2,3", Some(2)).is_err());
    }
}
