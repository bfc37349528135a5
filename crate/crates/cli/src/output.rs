use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use cbf_lab::fixtures::load_fixture;
use cbf_lab::linalg::Complex64;
use cbf_lab::{parse_problem, Problem, Provenance, Tolerances, Verdict};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_UNBOUNDED: u8 = 2;
pub const EXIT_INDETERMINATE: u8 = 3;
pub const EXIT_INFEASIBLE: u8 = 4;
pub const EXIT_ACCEPTANCE: u8 = 5;

#[derive(Debug)]
pub enum CliError {
    Lib(cbf_lab::Error),
    Io(PathBuf, io::Error),
    Usage(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Usage(s) => f.write_str(s),
        }
    }
}

impl From<cbf_lab::Error> for CliError {
    fn from(e: cbf_lab::Error) -> Self {
        CliError::Lib(e)
    }
}

pub fn verdict_exit_code(v: Verdict) -> u8 {
    match v {
        Verdict::Ges => EXIT_OK,
        Verdict::Unbounded => EXIT_UNBOUNDED,
        Verdict::Indeterminate => EXIT_INDETERMINATE,
    }
}

/// Reads a problem file, or a bundled fixture when the argument is `@name`.
pub fn load_problem(arg: &str, tol: &Tolerances) -> Result<Problem, CliError> {
    if let Some(name) = arg.strip_prefix('@') {
        return Ok(load_fixture(name, tol)?);
    }
    let path = PathBuf::from(arg);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(path, e))?;
    Ok(parse_problem(&text, Provenance::User, tol)?)
}

/// Standard output, or files in a directory.
pub struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Sink { dir }
    }

    /// Writes `content` to `<dir>/<file>`, or to standard output.
    pub fn emit(&self, file: &str, content: &str) -> Result<(), CliError> {
        match &self.dir {
            Some(dir) => write_file(dir, file, content),
            None => {
                let mut stdout = io::stdout().lock();
                stdout
                    .write_all(content.as_bytes())
                    .map_err(|e| CliError::Io(PathBuf::from("<stdout>"), e))
            }
        }
    }
}

pub fn write_file(dir: &Path, file: &str, content: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    let path = dir.join(file);
    std::fs::write(&path, content).map_err(|e| CliError::Io(path.clone(), e))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

pub fn num(v: f64) -> String {
    format!("{v:+.6e}")
}

pub fn complex(z: &Complex64) -> String {
    format!("{:+.6e} {:+.6e}i", z.re, z.im)
}

pub fn vector(v: impl IntoIterator<Item = f64>) -> String {
    let parts: Vec<String> = v.into_iter().map(num).collect();
    format!("[{}]", parts.join(", "))
}

/// One `label value` line with the label padded to a fixed column.
pub fn row(label: &str, value: impl fmt::Display) -> String {
    format!("{label:<22}{value}\n")
}
