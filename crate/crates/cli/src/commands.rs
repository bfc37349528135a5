use cbf_lab::{
    build_filter_data, build_hocbf_chain, build_lmi_problem, classify, evaluate_chain,
    parse_state_vector, simulate, simulate_nominal, single_input_obstruction, solve_lmi_pair,
    ClassificationReport, Error, FilterData, HocbfChain, LmiOptions, LmiSolution, Parity, Problem,
    Radius, SimConfig, Tolerances, Trajectory,
};
use nalgebra::DVector;
use serde::Serialize;

use crate::output::{self, complex, load_problem, num, row, verdict_exit_code, CliError, Sink};
use crate::plot::{Chart, Series};
use crate::{Format, SimulateArgs};

pub fn analyze(
    arg: &str,
    dump_filter: bool,
    format: Option<Format>,
    tol: &Tolerances,
    out: &Sink,
) -> Result<u8, CliError> {
    if matches!(format, Some(Format::Csv | Format::Svg)) {
        return Err(CliError::Usage(
            "analyze supports the console table or --format json".into(),
        ));
    }
    let problem = load_problem(arg, tol)?;
    let config = problem.config(tol)?;
    let fd = build_filter_data(problem.plant(), problem.constraint(), &config)?;
    let chain = build_hocbf_chain(problem.plant(), problem.constraint(), config.alphas())?;
    let report = classify(&fd, &chain, tol)?;

    match format {
        Some(Format::Json) => out.emit("analysis.json", &output::to_json(&report))?,
        _ => out.emit("analysis.txt", &console_report(&problem, &fd, &report))?,
    }
    if dump_filter {
        out.emit("filter.json", &output::to_json(&fd))?;
    }
    Ok(verdict_exit_code(report.verdict))
}

fn console_report(problem: &Problem, fd: &FilterData, rep: &ClassificationReport) -> String {
    let mut s = String::new();
    s += &row("problem", problem.display_name());
    s += &row(
        "dimensions",
        format!("n={} m={} r={}", fd.n(), fd.m(), fd.relative_degree()),
    );
    s += &row("verdict", rep.verdict);
    s += &row("xi", num(rep.equilibria.xi));
    s += &row("theta_sq", num(fd.theta_sq()));
    s += &row("equilibria", format!("{:?}", rep.equilibria.kind));
    s += &row(
        "undesired point",
        rep.equilibria
            .undesired_point()
            .map_or("-".to_string(), |p| output::vector(p.iter().copied())),
    );
    let parity = match (rep.parity_positive_real, rep.parity_consistent) {
        (None, _) => "undefined".to_string(),
        (Some(p), c) => {
            let p = if p == Parity::Even { "even" } else { "odd" };
            match c {
                Some(true) => format!("{p} (consistent)"),
                Some(false) => format!("{p} (INCONSISTENT)"),
                None => p.to_string(),
            }
        }
    };
    s += &row("parity", parity);
    s += &row("spectral abscissa", num(rep.eigen.spectral_abscissa()));
    s += &row("left eigvec check", num(rep.eigen.left_eigvec_check));
    s += "eigenvalues of A_tilde\n";
    for (label, list) in [
        ("designed", &rep.eigen.designed),
        ("inherited", &rep.eigen.inherited),
        ("residual", &rep.eigen.residual),
    ] {
        for z in list {
            s += &format!("  {:<30}{label}\n", complex(z));
        }
    }
    s += "invariant zeros\n";
    for z in &rep.invariant_zeros {
        s += &format!("  {}\n", complex(z));
    }
    s
}

#[derive(Serialize)]
struct DesignReport<'a> {
    problem: String,
    feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    solution: Option<&'a LmiSolution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

pub fn design(
    arg: &str,
    eps: Option<f64>,
    max_iter: usize,
    format: Option<Format>,
    tol: &Tolerances,
    out: &Sink,
) -> Result<u8, CliError> {
    if matches!(format, Some(Format::Csv | Format::Svg)) {
        return Err(CliError::Usage("design supports --format json only".into()));
    }
    if let Some(e) = eps {
        if !(e > 0.0 && e.is_finite()) {
            return Err(CliError::Usage(format!(
                "--eps must be positive and finite, got {e}"
            )));
        }
    }
    let problem = load_problem(arg, tol)?;
    let prob = build_lmi_problem(
        problem.plant(),
        problem.constraint(),
        problem.alphas(),
        problem.g(),
    )?;
    let opts = LmiOptions { eps, max_iter };
    match solve_lmi_pair(&prob, &opts) {
        Ok(sol) => {
            let rep = DesignReport {
                problem: problem.display_name(),
                feasible: true,
                solution: Some(&sol),
                error: None,
                note: None,
            };
            out.emit("design.json", &output::to_json(&rep))?;
            Ok(output::EXIT_OK)
        }
        Err(e @ Error::Infeasible { .. }) => {
            let note = single_input_obstruction(&prob)?.map(|o| o.note);
            eprintln!("infeasible: {e}");
            if let Some(n) = &note {
                eprintln!("note: {n}");
            }
            let rep = DesignReport {
                problem: problem.display_name(),
                feasible: false,
                solution: None,
                error: Some(e.to_string()),
                note,
            };
            out.emit("design.json", &output::to_json(&rep))?;
            Ok(output::EXIT_INFEASIBLE)
        }
        Err(e) => Err(e.into()),
    }
}

/// Grid of `k` points per axis on `[−extent, extent]ⁿ`.
pub fn grid_points(n: usize, k: usize, extent: f64) -> Vec<DVector<f64>> {
    let axis: Vec<f64> = if k == 1 {
        vec![0.0]
    } else {
        (0..k)
            .map(|i| -extent + 2.0 * extent * i as f64 / (k - 1) as f64)
            .collect()
    };
    let total = k.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            DVector::from_fn(n, |_, _| {
                let v = axis[idx % k];
                idx /= k;
                v
            })
        })
        .collect()
}

/// Whether every chain level is nonnegative at `x`.
pub fn in_safe_set(chain: &HocbfChain, x: &DVector<f64>) -> Result<bool, CliError> {
    Ok(evaluate_chain(chain, x)?.iter().all(|h| *h >= 0.0))
}

#[derive(Serialize)]
struct Run<'a> {
    x0: Vec<f64>,
    trajectory: &'a Trajectory,
}

/// Trajectories as one CSV table with a leading run index.
pub fn runs_csv(runs: &[Trajectory]) -> String {
    let mut s = String::new();
    for (i, tr) in runs.iter().enumerate() {
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).expect("writing to memory");
        let text = String::from_utf8(buf).expect("csv is ascii");
        for (j, line) in text.lines().enumerate() {
            if j == 0 {
                if i == 0 {
                    s += &format!("run,{line}\n");
                }
            } else {
                s += &format!("{i},{line}\n");
            }
        }
    }
    s
}

/// Phase portrait of the first two coordinates (an oblique projection for
/// three or more states).
pub fn phase_chart(title: &str, runs: &[Trajectory], extent: f64) -> Chart {
    let n = runs.first().map_or(2, |t| t.initial_state().len());
    let project = |x: &DVector<f64>| -> (f64, f64) {
        match n {
            1 => (x[0], 0.0),
            2 => (x[0], x[1]),
            _ => (x[0] - 0.5 * x[2], x[1] - 0.35 * x[2]),
        }
    };
    let (xl, yl) = if n >= 3 {
        ("x1 - x3/2", "x2 - 0.35 x3")
    } else {
        ("x1", "x2")
    };
    let mut chart = Chart::new(title, xl, yl);
    chart.x_range = Some((-extent, extent));
    chart.y_range = Some((-extent, extent));
    for tr in runs {
        let color = match tr.outcome {
            cbf_lab::Outcome::Converged => "#1f77b4",
            cbf_lab::Outcome::Diverged => "#d62728",
            cbf_lab::Outcome::HorizonReached => "#7f7f7f",
        };
        chart.series.push(Series::new(
            "",
            color,
            tr.states.iter().map(project).collect(),
        ));
    }
    chart
}

pub fn run_simulation(
    arg: &str,
    args: &SimulateArgs,
    format: Option<Format>,
    tol: &Tolerances,
    out: &Sink,
) -> Result<u8, CliError> {
    let problem = load_problem(arg, tol)?;
    let n = problem.plant().n();
    let starts = match (&args.x0, args.grid) {
        (Some(text), _) => vec![parse_state_vector(text, Some(n))?],
        (None, Some(k)) => {
            if k == 0 || (k as f64).powi(n as i32) > 10_000.0 {
                return Err(CliError::Usage(format!(
                    "--grid {k} gives too many or no starts for n = {n}"
                )));
            }
            if !(args.extent > 0.0 && args.extent.is_finite()) {
                return Err(CliError::Usage(
                    "--extent must be positive and finite".into(),
                ));
            }
            grid_points(n, k, args.extent)
        }
        (None, None) => return Err(CliError::Usage("give --x0 or --grid".into())),
    };
    let cfg = SimConfig {
        step: args.step,
        horizon: args.horizon,
        divergence_radius: Radius::Auto,
        convergence_radius: Radius::Auto,
        record_every: args.record_every,
    };
    cfg.validate()?;

    let config = problem.config(tol)?;
    let fd = build_filter_data(problem.plant(), problem.constraint(), &config)?;
    let chain = build_hocbf_chain(problem.plant(), problem.constraint(), config.alphas())?;
    let mut runs = Vec::new();
    let mut skipped = 0;
    for x0 in &starts {
        if args.grid.is_some() && !in_safe_set(&chain, x0)? {
            skipped += 1;
            continue;
        }
        runs.push(if args.nominal {
            simulate_nominal(&fd, &chain, x0, &cfg, None)?
        } else {
            simulate(&fd, &chain, x0, &cfg, None)?
        });
    }
    if skipped > 0 {
        eprintln!("skipped {skipped} grid start(s) outside the safe set");
    }
    for (i, tr) in runs.iter().enumerate() {
        eprintln!(
            "run {i:>4}  {:<15} t = {:<12.6} |x| = {}",
            format!("{:?}", tr.outcome),
            tr.final_time(),
            num(tr.final_state().norm())
        );
    }

    match format.unwrap_or(Format::Csv) {
        Format::Csv => out.emit("trajectories.csv", &runs_csv(&runs))?,
        Format::Json => {
            let list: Vec<Run> = runs
                .iter()
                .map(|t| Run {
                    x0: t.initial_state().iter().copied().collect(),
                    trajectory: t,
                })
                .collect();
            out.emit("trajectories.json", &output::to_json(&list))?
        }
        Format::Svg => {
            let extent = if args.grid.is_some() {
                1.2 * args.extent
            } else {
                1.2 * starts[0].amax().max(1e-3)
            };
            out.emit(
                "phase.svg",
                &phase_chart(&problem.display_name(), &runs, extent).to_svg(),
            )?
        }
    }
    Ok(output::EXIT_OK)
}
