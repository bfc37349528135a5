//! Fixed-step RK4 integration of the piecewise-affine closed loop, with
//! mode bookkeeping, chain values and convergence/divergence detection.
//!
//! An optional piecewise-constant exogenous term `w(t)` turns the plant into
//! `ẋ = Ax + Bu + w`. The filter then enforces the chain with the constant
//! `w` included, giving `ẋ = A₀x + w + v₁·min(0, η(x) + q_r·w)`.

use std::io::{self, Write};

use nalgebra::{DVector, RowDVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::{FilterData, Mode};
use crate::linear_model::HocbfChain;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Radius {
    /// `1e6·(1 + ‖x₀‖)` for divergence, `1e−8·(1 + ‖x₀‖)` for convergence.
    Auto,
    Fixed(f64),
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub step: f64,
    pub horizon: f64,
    pub divergence_radius: Radius,
    pub convergence_radius: Radius,
    /// Keep every k-th step (the last sample is always kept).
    pub record_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            step: 1e-3,
            horizon: 20.0,
            divergence_radius: Radius::Auto,
            convergence_radius: Radius::Auto,
            record_every: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if !(self.horizon >= self.step && self.horizon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "horizon {} must be finite and at least one step",
                self.horizon
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidInput(
                "record_every must be at least 1".into(),
            ));
        }
        for r in [self.divergence_radius, self.convergence_radius] {
            if let Radius::Fixed(v) = r {
                if v.is_nan() || v <= 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "radius must be positive, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Outcome {
    Converged,
    Diverged,
    HorizonReached,
}

/// Piecewise-constant exogenous input `w(t)`: each segment holds from its
/// start time until the next one begins.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExtension {
    segments: Vec<(f64, DVector<f64>)>,
}

impl AffineExtension {
    pub fn new(mut segments: Vec<(f64, DVector<f64>)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidInput(
                "exogenous signal needs at least one segment".into(),
            ));
        }
        let n = segments[0].1.len();
        for (t, w) in &segments {
            if !t.is_finite() || w.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(
                    "exogenous signal must be finite".into(),
                ));
            }
            if w.len() != n {
                return Err(Error::dims("exogenous signal", n, w.len()));
            }
        }
        segments.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(AffineExtension { segments })
    }

    pub fn constant(w: DVector<f64>) -> Result<Self> {
        Self::new(vec![(0.0, w)])
    }

    pub fn dim(&self) -> usize {
        self.segments[0].1.len()
    }

    pub fn at(&self, t: f64) -> &DVector<f64> {
        let idx = self.segments.partition_point(|(s, _)| *s <= t);
        &self.segments[idx.saturating_sub(1)].1
    }

    fn next_break_after(&self, t: f64) -> Option<f64> {
        self.segments.iter().map(|(s, _)| *s).find(|&s| s > t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    #[serde(serialize_with = "ser_states")]
    pub states: Vec<DVector<f64>>,
    pub modes: Vec<Mode>,
    pub chain_values: Vec<Vec<f64>>,
    pub outcome: Outcome,
    /// The state overflowed before reaching the divergence radius.
    pub non_finite: bool,
    /// Refined times at which `η` changed sign.
    pub switch_times: Vec<f64>,
}

fn ser_states<S: serde::Serializer>(
    v: &[DVector<f64>],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.iter().copied().collect::<Vec<f64>>()))
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial_state(&self) -> &DVector<f64> {
        &self.states[0]
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states
            .last()
            .expect("trajectory has at least one sample")
    }

    pub fn final_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("trajectory has at least one sample")
    }

    /// Columns `t, x1..xn, mode, h0..h{r-1}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.states.first().map_or(0, |x| x.len());
        let r = self.chain_values.first().map_or(0, |h| h.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.push("mode".into());
        header.extend((0..r).map(|i| format!("h{i}")));
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.times.len() {
            let mut line = format!("{:.6}", self.times[i]);
            for v in self.states[i].iter() {
                line.push_str(&format!(",{v:.9e}"));
            }
            line.push_str(match self.modes[i] {
                Mode::Nominal => ",nominal",
                Mode::Filtered => ",filtered",
            });
            for v in &self.chain_values[i] {
                line.push_str(&format!(",{v:.9e}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Closed-loop right-hand side with an optional filter.
struct LoopModel<'a> {
    fd: &'a FilterData,
    filtered: bool,
    /// Coefficient of `w` in the filter constraint.
    q_r: RowDVector<f64>,
    rows: &'a [RowDVector<f64>],
    offsets: &'a [f64],
    q_rows: Vec<RowDVector<f64>>,
}

impl LoopModel<'_> {
    fn eta(&self, x: &DVector<f64>, w: Option<&DVector<f64>>) -> f64 {
        let mut e = self.fd.eta(x);
        if let Some(w) = w {
            e += (&self.q_r * w)[(0, 0)];
        }
        e
    }

    fn mode(&self, x: &DVector<f64>, w: Option<&DVector<f64>>) -> Mode {
        if self.filtered && self.eta(x, w) < 0.0 {
            Mode::Filtered
        } else {
            Mode::Nominal
        }
    }

    fn field(&self, x: &DVector<f64>, w: Option<&DVector<f64>>, out: &mut DVector<f64>) {
        out.gemv(1.0, self.fd.a0(), x, 0.0);
        if let Some(w) = w {
            *out += w;
        }
        if self.filtered {
            let e = self.eta(x, w);
            if e < 0.0 {
                out.axpy(e, self.fd.v1(), 1.0);
            }
        }
    }

    fn chain(&self, x: &DVector<f64>, w: Option<&DVector<f64>>) -> Vec<f64> {
        self.rows
            .iter()
            .zip(self.offsets)
            .zip(&self.q_rows)
            .map(|((row, off), q)| {
                let mut h = row.dot(&x.transpose()) + off;
                if let Some(w) = w {
                    h += q.dot(&w.transpose());
                }
                h
            })
            .collect()
    }
}

struct Rk4Buffers {
    k1: DVector<f64>,
    k2: DVector<f64>,
    k3: DVector<f64>,
    k4: DVector<f64>,
    tmp: DVector<f64>,
}

impl Rk4Buffers {
    fn new(n: usize) -> Self {
        Rk4Buffers {
            k1: DVector::zeros(n),
            k2: DVector::zeros(n),
            k3: DVector::zeros(n),
            k4: DVector::zeros(n),
            tmp: DVector::zeros(n),
        }
    }

    fn step(
        &mut self,
        model: &LoopModel<'_>,
        w: Option<&DVector<f64>>,
        x: &DVector<f64>,
        h: f64,
    ) -> DVector<f64> {
        model.field(x, w, &mut self.k1);
        self.tmp.copy_from(x);
        self.tmp.axpy(0.5 * h, &self.k1, 1.0);
        model.field(&self.tmp, w, &mut self.k2);
        self.tmp.copy_from(x);
        self.tmp.axpy(0.5 * h, &self.k2, 1.0);
        model.field(&self.tmp, w, &mut self.k3);
        self.tmp.copy_from(x);
        self.tmp.axpy(h, &self.k3, 1.0);
        model.field(&self.tmp, w, &mut self.k4);
        let mut next = x.clone();
        next.axpy(h / 6.0, &self.k1, 1.0);
        next.axpy(h / 3.0, &self.k2, 1.0);
        next.axpy(h / 3.0, &self.k3, 1.0);
        next.axpy(h / 6.0, &self.k4, 1.0);
        next
    }
}

const BISECTION_STEPS: usize = 40;

fn integrate(
    model: &LoopModel<'_>,
    x0: &DVector<f64>,
    cfg: &SimConfig,
    ext: Option<&AffineExtension>,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n = model.fd.n();
    if x0.len() != n {
        return Err(Error::dims("initial state", n, x0.len()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("initial state must be finite".into()));
    }
    if let Some(e) = ext {
        if e.dim() != n {
            return Err(Error::dims("exogenous signal", n, e.dim()));
        }
    }
    let base = 1.0 + x0.norm();
    let div_r = match cfg.divergence_radius {
        Radius::Auto => 1e6 * base,
        Radius::Fixed(r) => r,
        Radius::Disabled => f64::INFINITY,
    };
    let conv_r = match cfg.convergence_radius {
        Radius::Auto => 1e-8 * base,
        Radius::Fixed(r) => r,
        Radius::Disabled => -1.0,
    };

    let w_at = |t: f64| ext.map(|e| e.at(t));
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.clone()],
        modes: vec![model.mode(x0, w_at(0.0))],
        chain_values: vec![model.chain(x0, w_at(0.0))],
        outcome: Outcome::HorizonReached,
        non_finite: false,
        switch_times: Vec::new(),
    };
    let mut buf = Rk4Buffers::new(n);
    let mut x = x0.clone();
    let mut t = 0.0_f64;
    let mut steps = 0usize;
    let end = cfg.horizon;
    let time_eps = 1e-12 * end.max(1.0);

    let outcome = loop {
        let norm = x.norm();
        if norm < conv_r {
            break Outcome::Converged;
        }
        if t >= end - time_eps {
            break Outcome::HorizonReached;
        }
        let mut h = cfg.step.min(end - t);
        if let Some(b) = ext.and_then(|e| e.next_break_after(t)) {
            if b - t < h && b - t > time_eps {
                h = b - t;
            }
        }
        let w = w_at(t);
        let eta_before = model.eta(&x, w);
        let next = buf.step(model, w, &x, h);
        steps += 1;
        if next.iter().any(|v| !v.is_finite()) {
            traj.non_finite = true;
            break Outcome::Diverged;
        }
        if model.filtered {
            let eta_after = model.eta(&next, w);
            if (eta_before >= 0.0) != (eta_after >= 0.0) {
                let (mut lo, mut hi) = (0.0, h);
                for _ in 0..BISECTION_STEPS {
                    let mid = 0.5 * (lo + hi);
                    let xm = buf.step(model, w, &x, mid);
                    if (model.eta(&xm, w) >= 0.0) == (eta_before >= 0.0) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                traj.switch_times.push(t + 0.5 * (lo + hi));
            }
        }
        x = next;
        t = if (end - (t + h)).abs() <= time_eps {
            end
        } else {
            t + h
        };
        let last = t >= end - time_eps || x.norm() > div_r || x.norm() < conv_r;
        if steps % cfg.record_every == 0 || last {
            let w_now = w_at(t);
            traj.times.push(t);
            traj.states.push(x.clone());
            traj.modes.push(model.mode(&x, w_now));
            traj.chain_values.push(model.chain(&x, w_now));
        }
        if x.norm() > div_r {
            break Outcome::Diverged;
        }
    };
    traj.outcome = outcome;
    Ok(traj)
}

fn model<'a>(fd: &'a FilterData, chain: &'a HocbfChain, filtered: bool) -> Result<LoopModel<'a>> {
    if chain.relative_degree() != fd.relative_degree() || chain.rows()[0].len() != fd.n() {
        return Err(Error::dims(
            "chain",
            format!("r = {}, n = {}", fd.relative_degree(), fd.n()),
            format!(
                "r = {}, n = {}",
                chain.relative_degree(),
                chain.rows()[0].len()
            ),
        ));
    }
    let mut q_rows = chain.exogenous_rows();
    let q_r = q_rows.pop().expect("r + 1 rows");
    Ok(LoopModel {
        fd,
        filtered,
        q_r,
        rows: chain.rows(),
        offsets: chain.offsets(),
        q_rows,
    })
}

/// Filtered closed loop.
pub fn simulate(
    fd: &FilterData,
    chain: &HocbfChain,
    x0: &DVector<f64>,
    cfg: &SimConfig,
    ext: Option<&AffineExtension>,
) -> Result<Trajectory> {
    integrate(&model(fd, chain, true)?, x0, cfg, ext)
}

/// Nominal loop `ẋ = A₀x (+ w)` with the chain values still recorded.
pub fn simulate_nominal(
    fd: &FilterData,
    chain: &HocbfChain,
    x0: &DVector<f64>,
    cfg: &SimConfig,
    ext: Option<&AffineExtension>,
) -> Result<Trajectory> {
    integrate(&model(fd, chain, false)?, x0, cfg, ext)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvarianceCheck {
    pub passed: bool,
    /// Smallest chain value over all samples.
    pub worst_margin: f64,
    pub threshold: f64,
}

pub fn verify_forward_invariance(traj: &Trajectory, tol: f64) -> Result<InvarianceCheck> {
    let first = traj
        .chain_values
        .first()
        .ok_or_else(|| Error::InvalidInput("empty trajectory".into()))?;
    let start_min = first.iter().copied().fold(f64::INFINITY, f64::min);
    if start_min < 0.0 {
        return Err(Error::NotInSafeSet(start_min));
    }
    let scale = 1.0 + first.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let threshold = -tol * scale;
    let worst_margin = traj
        .chain_values
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(InvarianceCheck {
        passed: worst_margin >= threshold,
        worst_margin,
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// `λ̂` in `‖x(t)‖ ≈ M̂‖x₀‖e^{−λ̂t}`.
    pub rate: f64,
    pub prefactor: f64,
}

/// Least-squares fit of `log‖x(t)‖` against `t` over the second half of a
/// converged trajectory.
pub fn estimate_decay(traj: &Trajectory) -> Result<DecayFit> {
    if traj.outcome != Outcome::Converged {
        return Err(Error::NotConverging);
    }
    let x0_norm = traj.initial_state().norm();
    let t_end = traj.final_time();
    let samples: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.states)
        .filter(|(_, x)| x.norm() > 0.0)
        .map(|(t, x)| (*t, x.norm().ln()))
        .collect();
    let tail: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|(t, _)| *t >= 0.5 * t_end)
        .collect();
    let pts = if tail.len() >= 2 { tail } else { samples };
    if pts.len() < 2 || x0_norm == 0.0 {
        return Err(Error::NotConverging);
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::NotConverging);
    }
    let rate = -sxy / sxx;
    let prefactor = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, x)| x.norm() * (rate * t).exp() / x0_norm)
        .fold(0.0, f64::max);
    Ok(DecayFit { rate, prefactor })
}
