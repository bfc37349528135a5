//! Figure regeneration with a pass/fail check of each figure's property.

use std::path::Path;

use cbf_lab::fixtures::load_fixture;
use cbf_lab::tracking::tracking_sim_config;
use cbf_lab::{
    build_filter_data, build_hocbf_chain, classify, divergence_ray, estimate_decay,
    run_tracking_scenario, simulate, AircraftFixture, CommandSchedule, FilterData, HocbfChain,
    Outcome, Radius, SimConfig, Tolerances, Trajectory, Verdict,
};
use clap::ValueEnum;
use nalgebra::DVector;
use serde::Serialize;

use crate::commands::{grid_points, in_safe_set, phase_chart, runs_csv};
use crate::output::{self, num, write_file, CliError, EXIT_ACCEPTANCE, EXIT_OK};
use crate::plot::{Chart, Series};
use crate::Format;

/// Smallest accepted chain value along a run starting in the safe set.
const INVARIANCE_TOL: f64 = 1e-4;
const SAFE_RATE_LIMIT: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
        }
    }
}

#[derive(Debug, Serialize)]
struct Check {
    name: String,
    value: String,
    pass: bool,
}

fn check(name: &str, value: impl Into<String>, pass: bool) -> Check {
    Check {
        name: name.to_string(),
        value: value.into(),
        pass,
    }
}

struct Bundle<'a> {
    dir: &'a Path,
    csv: bool,
    svg: bool,
}

impl Bundle<'_> {
    fn csv(&self, file: &str, content: impl FnOnce() -> String) -> Result<(), CliError> {
        if self.csv {
            write_file(self.dir, file, &content())?;
        }
        Ok(())
    }

    fn svg(&self, file: &str, chart: impl FnOnce() -> Chart) -> Result<(), CliError> {
        if self.svg {
            write_file(self.dir, file, &chart().to_svg())?;
        }
        Ok(())
    }
}

fn closed_loop(name: &str, tol: &Tolerances) -> Result<(FilterData, HocbfChain), CliError> {
    let problem = load_fixture(name, tol)?;
    let config = problem.config(tol)?;
    let fd = build_filter_data(problem.plant(), problem.constraint(), &config)?;
    let chain = build_hocbf_chain(problem.plant(), problem.constraint(), config.alphas())?;
    Ok((fd, chain))
}

fn min_chain_value(runs: &[Trajectory]) -> f64 {
    runs.iter()
        .flat_map(|t| t.chain_values.iter().flatten())
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Runs from every grid point inside the safe set.
fn grid_runs(
    fd: &FilterData,
    chain: &HocbfChain,
    starts: &[DVector<f64>],
    cfg: &SimConfig,
) -> Result<Vec<Trajectory>, CliError> {
    let mut runs = Vec::new();
    for x0 in starts {
        if in_safe_set(chain, x0)? {
            runs.push(simulate(fd, chain, x0, cfg, None)?);
        }
    }
    Ok(runs)
}

fn count(runs: &[Trajectory], outcome: Outcome) -> usize {
    runs.iter().filter(|t| t.outcome == outcome).count()
}

fn fig1(tol: &Tolerances, out: &Bundle) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();

    let (fd, chain) = closed_loop("fig1-bottom-right", tol)?;
    let verdict = classify(&fd, &chain, tol)?.verdict;
    checks.push(check(
        "bottom-right verdict",
        verdict.to_string(),
        verdict == Verdict::Ges,
    ));
    let cfg = SimConfig {
        step: 1e-3,
        horizon: 20.0,
        divergence_radius: Radius::Auto,
        convergence_radius: Radius::Fixed(1e-6),
        record_every: 10,
    };
    let runs = grid_runs(&fd, &chain, &grid_points(2, 10, 3.0), &cfg)?;
    let converged = count(&runs, Outcome::Converged);
    checks.push(check(
        "bottom-right converged",
        format!("{converged}/{}", runs.len()),
        converged == runs.len() && !runs.is_empty(),
    ));
    let slowest = runs
        .iter()
        .map(|t| estimate_decay(t).map_or(f64::NEG_INFINITY, |f| f.rate))
        .fold(f64::INFINITY, f64::min);
    checks.push(check(
        "bottom-right min decay rate",
        num(slowest),
        slowest > 0.0,
    ));
    let worst = min_chain_value(&runs);
    checks.push(check(
        "bottom-right min h",
        num(worst),
        worst >= -INVARIANCE_TOL,
    ));
    out.csv("fig1-bottom-right.csv", || runs_csv(&runs))?;
    out.svg("fig1-bottom-right.svg", || {
        phase_chart("fig1-bottom-right", &runs, 3.5)
    })?;

    let (fd, chain) = closed_loop("fig1-bottom-left", tol)?;
    let report = classify(&fd, &chain, tol)?;
    checks.push(check(
        "bottom-left verdict",
        report.verdict.to_string(),
        report.verdict == Verdict::Unbounded,
    ));
    let Some(ray) = divergence_ray(&fd, &chain, &report, tol)? else {
        checks.push(check("bottom-left divergence ray", "none", false));
        return Ok(checks);
    };
    let cfg = SimConfig {
        step: 1e-3,
        horizon: 1.5 * (1e6_f64.ln() / ray.lambda).max(1.0),
        divergence_radius: Radius::Fixed(1e4),
        convergence_radius: Radius::Disabled,
        record_every: 1,
    };
    let traj = simulate(&fd, &chain, &ray.launch_point(&fd, 0.01), &cfg, None)?;
    let peak = traj.states.iter().map(|x| x.norm()).fold(0.0, f64::max);
    checks.push(check("bottom-left peak |x|", num(peak), peak > 1e4));
    let last = chain.relative_degree() - 1;
    let drift = traj
        .chain_values
        .iter()
        .map(|h| h[last].abs())
        .fold(0.0, f64::max);
    checks.push(check("bottom-left max |h_last|", num(drift), drift < 1e-4));
    let portrait_cfg = SimConfig {
        horizon: 10.0,
        divergence_radius: Radius::Fixed(1e3),
        record_every: 10,
        ..cfg
    };
    let mut runs = grid_runs(&fd, &chain, &grid_points(2, 10, 3.0), &portrait_cfg)?;
    let worst = min_chain_value(&runs).min(min_chain_value(std::slice::from_ref(&traj)));
    checks.push(check(
        "bottom-left min h",
        num(worst),
        worst >= -INVARIANCE_TOL,
    ));
    runs.push(traj);
    out.csv("fig1-bottom-left.csv", || runs_csv(&runs))?;
    out.svg("fig1-bottom-left.svg", || {
        phase_chart("fig1-bottom-left", &runs, 3.5)
    })?;
    Ok(checks)
}

fn fig2(tol: &Tolerances, out: &Bundle) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    let cfg = SimConfig {
        step: 1e-3,
        horizon: 30.0,
        divergence_radius: Radius::Fixed(1e4),
        convergence_radius: Radius::Fixed(1e-6),
        record_every: 10,
    };
    let starts = grid_points(3, 5, 1.0);
    for (name, expect_divergence) in [("fig2-top", false), ("fig2-bottom", true)] {
        let (fd, chain) = closed_loop(name, tol)?;
        let verdict = classify(&fd, &chain, tol)?.verdict;
        checks.push(check(
            &format!("{name} verdict"),
            verdict.to_string(),
            verdict == Verdict::Indeterminate,
        ));
        let runs = grid_runs(&fd, &chain, &starts, &cfg)?;
        let converged = count(&runs, Outcome::Converged);
        let diverged = count(&runs, Outcome::Diverged);
        if expect_divergence {
            checks.push(check(
                &format!("{name} diverged"),
                format!("{diverged}/{}", runs.len()),
                diverged > 0,
            ));
        } else {
            checks.push(check(
                &format!("{name} converged"),
                format!("{converged}/{}", runs.len()),
                converged == runs.len() && !runs.is_empty(),
            ));
        }
        let worst = min_chain_value(&runs);
        checks.push(check(
            &format!("{name} min h"),
            num(worst),
            worst >= -INVARIANCE_TOL,
        ));
        out.csv(&format!("{name}.csv"), || runs_csv(&runs))?;
        out.svg(&format!("{name}.svg"), || phase_chart(name, &runs, 2.0))?;
    }
    Ok(checks)
}

fn fig3(schedule: &str, tol: &Tolerances, out: &Bundle) -> Result<Vec<Check>, CliError> {
    let schedule: CommandSchedule = schedule.parse()?;
    let fixture = AircraftFixture::load(tol)?;
    let res = run_tracking_scenario(&fixture, &schedule, None, &tracking_sim_config(), tol)?;
    let peak = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let nominal_peak = peak(&res.output_nominal);
    let filtered_peak = peak(&res.output_filtered);
    let worst = min_chain_value(std::slice::from_ref(&res.filtered));
    let checks = vec![
        check(
            "nominal peak p_s",
            num(nominal_peak),
            nominal_peak > SAFE_RATE_LIMIT,
        ),
        check(
            "filtered peak p_s",
            num(filtered_peak),
            filtered_peak <= SAFE_RATE_LIMIT + INVARIANCE_TOL,
        ),
        check("filtered min h", num(worst), worst >= -INVARIANCE_TOL),
    ];
    out.csv("fig3.csv", || {
        let mut s = String::from("t,y_cmd,p_s_nominal,p_s_filtered\n");
        for i in 0..res.filtered.times.len().min(res.nominal.times.len()) {
            s += &format!(
                "{:.6},{:.9e},{:.9e},{:.9e}\n",
                res.filtered.times[i],
                res.command_filtered[i],
                res.output_nominal[i],
                res.output_filtered[i]
            );
        }
        s
    })?;
    out.svg("fig3.svg", || {
        let mut c = Chart::new("roll rate p_s", "t [s]", "p_s");
        let pts = |v: &[f64]| {
            res.filtered
                .times
                .iter()
                .copied()
                .zip(v.iter().copied())
                .collect()
        };
        c.series.push(Series::new(
            "command",
            "#7f7f7f",
            pts(&res.command_filtered),
        ));
        c.series
            .push(Series::new("nominal", "#1f77b4", pts(&res.output_nominal)));
        c.series.push(Series::new(
            "filtered",
            "#d62728",
            pts(&res.output_filtered),
        ));
        c.hlines.push((SAFE_RATE_LIMIT, "limit 0.4".into()));
        c
    })?;
    Ok(checks)
}

pub fn reproduce(
    figure: Figure,
    schedule: &str,
    format: Option<Format>,
    tol: &Tolerances,
    dir: &Path,
) -> Result<u8, CliError> {
    let bundle = Bundle {
        dir,
        csv: matches!(format, None | Some(Format::Csv)),
        svg: matches!(format, None | Some(Format::Svg)),
    };
    let checks = match figure {
        Figure::Fig1 => fig1(tol, &bundle)?,
        Figure::Fig2 => fig2(tol, &bundle)?,
        Figure::Fig3 => fig3(schedule, tol, &bundle)?,
    };
    let mut table = String::new();
    for c in &checks {
        table += &format!(
            "{:<30}{:<18}{}\n",
            c.name,
            c.value,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    print!("{table}");
    write_file(dir, "summary.json", &output::to_json(&checks))?;
    if checks.iter().all(|c| c.pass) {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "{} reproduction check(s) failed",
            checks.iter().filter(|c| !c.pass).count()
        );
        Ok(EXIT_ACCEPTANCE)
    }
}
