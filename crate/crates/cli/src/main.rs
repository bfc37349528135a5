//! `cbf-lab`: analyse, design, simulate and reproduce CBF safety filters.
//!
//! Exit codes: 0 GES or success, 1 error, 2 Unbounded, 3 Indeterminate,
//! 4 LMI infeasible, 5 reproduction check failed.

mod commands;
mod output;
mod plot;
mod reproduce;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::output::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "cbf-lab",
    version,
    about = "Closed-form CBF safety filters for linear plants"
)]
struct Cli {
    /// Base relative tolerance for every 1e-9-class numerical test.
    #[arg(long, global = true, value_name = "TOL")]
    tol: Option<f64>,

    /// Write results into this directory instead of standard output.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Output format; each subcommand lists the ones it accepts.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify the closed loop: verdict, equilibria, spectra, invariant zeros.
    ///
    /// Formats: console table (default) or json.
    Analyze {
        #[command(flatten)]
        problem: ProblemArg,
        /// Also emit the derived filter quantities as JSON.
        #[arg(long)]
        dump_filter: bool,
    },
    /// Search for a gain K making both closed-loop modes Hurwitz.
    ///
    /// Formats: json (default).
    Design {
        #[command(flatten)]
        problem: ProblemArg,
        /// Required Lyapunov margin (default 1e-6 times the norm of A).
        #[arg(long)]
        eps: Option<f64>,
        /// Newton-step budget of the barrier solver.
        #[arg(long, default_value_t = 5000)]
        max_iter: usize,
    },
    /// Integrate the filtered closed loop.
    ///
    /// Formats: csv (default), json or svg.
    Simulate(SimulateArgs),
    /// Regenerate the data and plots of a bundled figure and check its
    /// qualitative property.
    Reproduce {
        #[arg(value_enum)]
        figure: reproduce::Figure,
        /// Command schedule for fig3 as time:value pairs.
        #[arg(
            long,
            value_name = "SCHEDULE",
            default_value = "0:0,1:0.5,11:-0.5,21:0"
        )]
        command: String,
    },
}

#[derive(Args, Debug)]
struct ProblemArg {
    /// Problem JSON file, or @name for a bundled fixture.
    #[arg(value_name = "PROBLEM")]
    problem: String,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    problem: ProblemArg,
    /// Initial state, e.g. "1,-0.5".
    #[arg(long, allow_hyphen_values = true, conflicts_with = "grid")]
    pub x0: Option<String>,
    /// Start from a grid with this many points per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Half-width of the grid box.
    #[arg(long, default_value_t = 3.0)]
    pub extent: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, default_value_t = 20.0)]
    pub horizon: f64,
    /// Keep every k-th integration step.
    #[arg(long, default_value_t = 10)]
    pub record_every: usize,
    /// Simulate the unfiltered nominal loop instead.
    #[arg(long)]
    pub nominal: bool,
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let tol = match cli.tol {
        Some(t) if t > 0.0 && t.is_finite() => cbf_lab::Tolerances::with_base(t),
        Some(t) => {
            return Err(CliError::Usage(format!(
                "--tol must be positive and finite, got {t}"
            )))
        }
        None => cbf_lab::Tolerances::default(),
    };
    let out = output::Sink::new(cli.out_dir.clone());
    match cli.command {
        Command::Analyze {
            problem,
            dump_filter,
        } => commands::analyze(&problem.problem, dump_filter, cli.format, &tol, &out),
        Command::Design {
            problem,
            eps,
            max_iter,
        } => commands::design(&problem.problem, eps, max_iter, cli.format, &tol, &out),
        Command::Simulate(args) => {
            commands::run_simulation(&args.problem.problem, &args, cli.format, &tol, &out)
        }
        Command::Reproduce { figure, command } => {
            let dir = cli.out_dir.unwrap_or_else(|| PathBuf::from(figure.name()));
            reproduce::reproduce(figure, &command, cli.format, &tol, &dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(output::EXIT_ERROR),
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(output::EXIT_ERROR)
        }
    }
}
