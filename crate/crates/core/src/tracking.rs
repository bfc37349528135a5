//! Roll-rate tracking on the aircraft model with an integrated error state.
//!
//! The extended state is `[e_yI, β, p_s, r_s]` with
//! `ė_yI = C_p x_p − y_cmd − κ e_yI`, so the command enters as the
//! exogenous term `w = [−y_cmd, 0, 0, 0]`. For a constant command the
//! nominal loop settles at the shifted equilibrium solving `A₀x = −w`.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::{build_filter_data, FilterData};
use crate::linear_model::{build_hocbf_chain, FilterConfig, HocbfChain};
use crate::problem::Problem;
use crate::serde_util;
use crate::sim::{simulate, simulate_nominal, AffineExtension, Radius, SimConfig, Trajectory};
use crate::tolerance::Tolerances;

/// Piecewise-constant command `y_cmd(t)` as `(start time, value)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommandSchedule {
    segments: Vec<(f64, f64)>,
}

impl CommandSchedule {
    pub fn new(mut segments: Vec<(f64, f64)>) -> Result<Self> {
        if segments.is_empty() || segments.len() > 10_000 {
            return Err(Error::Parse(
                "command schedule needs 1 to 10000 segments".into(),
            ));
        }
        if segments
            .iter()
            .any(|(t, v)| !t.is_finite() || !v.is_finite() || *t < 0.0)
        {
            return Err(Error::Parse(
                "command times must be finite and nonnegative, values finite".into(),
            ));
        }
        segments.sort_by(|a, b| a.0.total_cmp(&b.0));
        if segments.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Parse(
                "command schedule has duplicate start times".into(),
            ));
        }
        Ok(CommandSchedule { segments })
    }

    /// `±0.5` doublet: 0 until 1 s, 0.5 until 11 s, −0.5 until 21 s, then 0.
    pub fn doublet() -> Self {
        CommandSchedule {
            segments: vec![(0.0, 0.0), (1.0, 0.5), (11.0, -0.5), (21.0, 0.0)],
        }
    }

    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    pub fn at(&self, t: f64) -> f64 {
        let idx = self.segments.partition_point(|(s, _)| *s <= t);
        self.segments[idx.saturating_sub(1)].1
    }
}

impl Default for CommandSchedule {
    fn default() -> Self {
        Self::doublet()
    }
}

/// `"t0:v0,t1:v1,..."`, e.g. `"0:0,1:0.5,11:-0.5,21:0"`.
impl FromStr for CommandSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() > 256 * 1024 {
            return Err(Error::Parse("command schedule text is too long".into()));
        }
        let segments = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|pair| {
                let (t, v) = pair
                    .split_once(':')
                    .ok_or_else(|| Error::Parse(format!("expected time:value, found {pair:?}")))?;
                let t: f64 = t
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("invalid time {t:?}")))?;
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("invalid value {v:?}")))?;
                Ok((t, v))
            })
            .collect::<Result<Vec<_>>>()?;
        CommandSchedule::new(segments)
    }
}

/// Aircraft data recovered from the extended problem.
#[derive(Debug, Clone, PartialEq)]
pub struct AircraftFixture {
    pub a_p: DMatrix<f64>,
    pub b_p: DMatrix<f64>,
    pub c_p: DVector<f64>,
    pub kappa: f64,
    pub problem: Problem,
}

impl AircraftFixture {
    /// Splits `A = [−κ, C_p; 0, A_p]`, `B = [0; B_p]`.
    pub fn from_problem(problem: Problem) -> Result<Self> {
        let a = problem.plant().a();
        let b = problem.plant().b();
        let n = a.nrows();
        if n < 2 {
            return Err(Error::InvalidInput(
                "tracking model needs an error state and a plant".into(),
            ));
        }
        if a.view((1, 0), (n - 1, 1)).iter().any(|v| *v != 0.0)
            || b.row(0).iter().any(|v| *v != 0.0)
        {
            return Err(Error::InvalidInput(
                "tracking model must have the form A = [-kappa, C_p; 0, A_p], B = [0; B_p]".into(),
            ));
        }
        let kappa = -a[(0, 0)];
        if kappa.is_nan() || kappa < 0.0 {
            return Err(Error::InvalidInput(format!(
                "kappa = {kappa} must be nonnegative"
            )));
        }
        Ok(AircraftFixture {
            a_p: a.view((1, 1), (n - 1, n - 1)).into_owned(),
            b_p: b.rows(1, n - 1).into_owned(),
            c_p: DVector::from_iterator(n - 1, a.view((0, 1), (1, n - 1)).iter().copied()),
            kappa,
            problem,
        })
    }

    pub fn load(tol: &Tolerances) -> Result<Self> {
        Self::from_problem(crate::fixtures::load_fixture("aircraft", tol)?)
    }

    /// Tracked output `C_p x_p` of an extended state.
    pub fn output(&self, x: &DVector<f64>) -> f64 {
        self.c_p.dot(&x.rows(1, x.len() - 1))
    }

    fn exogenous(&self, y_cmd: f64) -> DVector<f64> {
        let mut w = DVector::zeros(self.c_p.len() + 1);
        w[0] = -y_cmd;
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftedEquilibrium {
    pub start: f64,
    pub command: f64,
    #[serde(serialize_with = "serde_util::vector")]
    pub state: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingResult {
    #[serde(rename = "K", serialize_with = "serde_util::matrix")]
    pub k: DMatrix<f64>,
    pub nominal: Trajectory,
    pub filtered: Trajectory,
    pub output_nominal: Vec<f64>,
    pub output_filtered: Vec<f64>,
    pub command_nominal: Vec<f64>,
    pub command_filtered: Vec<f64>,
    pub equilibria: Vec<ShiftedEquilibrium>,
    #[serde(skip)]
    pub filter: FilterData,
    #[serde(skip)]
    pub chain: HocbfChain,
}

/// Simulation defaults for the tracking runs: 30 s horizon, no early stop.
pub fn tracking_sim_config() -> SimConfig {
    SimConfig {
        step: 1e-3,
        horizon: 30.0,
        divergence_radius: Radius::Auto,
        convergence_radius: Radius::Disabled,
        record_every: 10,
    }
}

/// Nominal and filtered runs from the origin. `k = None` uses the LQR gain.
pub fn run_tracking_scenario(
    fixture: &AircraftFixture,
    schedule: &CommandSchedule,
    k: Option<&DMatrix<f64>>,
    cfg: &SimConfig,
    tol: &Tolerances,
) -> Result<TrackingResult> {
    let problem = &fixture.problem;
    let k = match k {
        Some(k) => k.clone(),
        None => problem.gain()?,
    };
    let config = FilterConfig::new(
        problem.plant(),
        problem.constraint(),
        k.clone(),
        problem.g().clone(),
        problem.alphas().to_vec(),
        tol,
    )?;
    let fd = build_filter_data(problem.plant(), problem.constraint(), &config)?;
    let chain = build_hocbf_chain(problem.plant(), problem.constraint(), config.alphas())?;
    let ext = AffineExtension::new(
        schedule
            .segments()
            .iter()
            .map(|&(t, v)| (t, fixture.exogenous(v)))
            .collect(),
    )?;
    let x0 = DVector::zeros(problem.plant().n());
    let nominal = simulate_nominal(&fd, &chain, &x0, cfg, Some(&ext))?;
    let filtered = simulate(&fd, &chain, &x0, cfg, Some(&ext))?;

    let a0_lu = fd.a0().clone().lu();
    let equilibria = schedule
        .segments()
        .iter()
        .map(|&(start, command)| {
            let state = a0_lu
                .solve(&-fixture.exogenous(command))
                .ok_or_else(|| Error::Consistency("A0 is singular".into()))?;
            Ok(ShiftedEquilibrium {
                start,
                command,
                state,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let outputs = |tr: &Trajectory| {
        tr.states
            .iter()
            .map(|x| fixture.output(x))
            .collect::<Vec<_>>()
    };
    let commands = |tr: &Trajectory| tr.times.iter().map(|&t| schedule.at(t)).collect::<Vec<_>>();
    Ok(TrackingResult {
        k,
        output_nominal: outputs(&nominal),
        output_filtered: outputs(&filtered),
        command_nominal: commands(&nominal),
        command_filtered: commands(&filtered),
        nominal,
        filtered,
        equilibria,
        filter: fd,
        chain,
    })
}
