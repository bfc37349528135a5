//! Small dense phase-I solver for linear matrix inequalities.
//!
//! Minimizes the last variable `t` subject to `Sₖ(x) = Cₖ + Σᵢ xᵢ Dₖᵢ ≻ 0`
//! and an optional Euclidean ball on a subset of the variables, by
//! following the central path of the log-det barrier with damped Newton
//! steps. Stops as soon as a centered point has `t < −target`, when the
//! duality-gap bound shows the optimum is above `−target`, or when a line
//! search stalls before centering.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub(crate) struct AffineBlock {
    pub constant: DMatrix<f64>,
    /// One coefficient matrix per variable.
    pub terms: Vec<DMatrix<f64>>,
}

impl AffineBlock {
    fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut s = self.constant.clone();
        for (xi, d) in x.iter().zip(&self.terms) {
            if *xi != 0.0 {
                s += d * *xi;
            }
        }
        s
    }
}

pub(crate) struct Ball {
    pub indices: Vec<usize>,
    pub radius_sq: f64,
}

pub(crate) struct PhaseOne {
    pub blocks: Vec<AffineBlock>,
    pub ball: Option<Ball>,
    pub nvars: usize,
}

#[derive(Debug)]
pub(crate) struct PhaseOneResult {
    pub x: DVector<f64>,
    pub iterations: usize,
}

const TAU_GROWTH: f64 = 8.0;
const CENTERING_TOL: f64 = 1e-7;

impl PhaseOne {
    fn t_index(&self) -> usize {
        self.nvars - 1
    }

    fn barrier_order(&self) -> f64 {
        let mats: usize = self.blocks.iter().map(|b| b.constant.nrows()).sum();
        (mats + usize::from(self.ball.is_some())) as f64
    }

    fn ball_slack(&self, x: &DVector<f64>) -> Option<f64> {
        self.ball
            .as_ref()
            .map(|b| b.radius_sq - b.indices.iter().map(|&i| x[i] * x[i]).sum::<f64>())
    }

    /// Barrier value, or `None` outside the domain.
    fn barrier(&self, x: &DVector<f64>) -> Option<f64> {
        let mut f = 0.0;
        for b in &self.blocks {
            let chol = Cholesky::new(b.eval(x))?;
            f -= 2.0
                * chol
                    .l_dirty()
                    .diagonal()
                    .iter()
                    .map(|v| v.ln())
                    .sum::<f64>();
        }
        if let Some(g) = self.ball_slack(x) {
            if g <= 0.0 {
                return None;
            }
            f -= g.ln();
        }
        f.is_finite().then_some(f)
    }

    fn gradient_hessian(&self, x: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let nv = self.nvars;
        let mut grad = DVector::zeros(nv);
        let mut hess = DMatrix::zeros(nv, nv);
        for b in &self.blocks {
            let k = b.constant.nrows();
            let s_inv = Cholesky::<f64, Dyn>::new(b.eval(x))?.inverse();
            let mut rows = DMatrix::zeros(nv, k * k);
            let mut rows_t = DMatrix::zeros(nv, k * k);
            for (i, d) in b.terms.iter().enumerate() {
                let m = &s_inv * d;
                grad[i] -= m.trace();
                for c in 0..k {
                    for r in 0..k {
                        rows[(i, c * k + r)] = m[(r, c)];
                        rows_t[(i, c * k + r)] = m[(c, r)];
                    }
                }
            }
            hess += &rows * rows_t.transpose();
        }
        if let Some(ball) = &self.ball {
            let g = self.ball_slack(x)?;
            if g <= 0.0 {
                return None;
            }
            for &i in &ball.indices {
                grad[i] += 2.0 * x[i] / g;
                hess[(i, i)] += 2.0 / g;
                for &j in &ball.indices {
                    hess[(i, j)] += 4.0 * x[i] * x[j] / (g * g);
                }
            }
        }
        Some((grad, hess))
    }

    /// `x0` must be strictly feasible.
    pub fn solve(&self, x0: DVector<f64>, target: f64, max_iter: usize) -> Result<PhaseOneResult> {
        let ti = self.t_index();
        let nu = self.barrier_order();
        let mut x = x0;
        if self.barrier(&x).is_none() {
            return Err(Error::Consistency(
                "LMI start point is not strictly feasible".into(),
            ));
        }
        let mut tau = (nu / x[ti].abs().max(1.0)).max(1e-3);
        let mut iterations = 0;
        loop {
            let mut centered = true;
            // Centering.
            loop {
                if iterations >= max_iter {
                    return Err(Error::Infeasible {
                        iterations,
                        best_margin: -x[ti],
                    });
                }
                iterations += 1;
                let (mut g, mut h) = self
                    .gradient_hessian(&x)
                    .ok_or_else(|| Error::Consistency("left the barrier domain".into()))?;
                g[ti] += tau;
                let scale = h.diagonal().amax().max(1.0);
                for i in 0..self.nvars {
                    h[(i, i)] += 1e-14 * scale;
                }
                let step = match Cholesky::new(h.clone()) {
                    Some(ch) => -ch.solve(&g),
                    None => -h.lu().solve(&g).ok_or_else(|| {
                        Error::Consistency("singular Newton system in LMI solver".into())
                    })?,
                };
                let decrement_sq = -g.dot(&step);
                if !decrement_sq.is_finite() {
                    return Err(Error::Consistency("non-finite Newton step".into()));
                }
                if decrement_sq / 2.0 <= CENTERING_TOL {
                    break;
                }
                let f0 = tau * x[ti] + self.barrier(&x).expect("feasible iterate");
                let mut alpha = 1.0;
                let mut accepted = false;
                while alpha > 1e-12 {
                    let trial = &x + &step * alpha;
                    if let Some(fb) = self.barrier(&trial) {
                        let f = tau * trial[ti] + fb;
                        if f <= f0 - 0.25 * alpha * decrement_sq {
                            x = trial;
                            accepted = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                if !accepted {
                    centered = false;
                    break;
                }
            }
            if x[ti] < -target {
                return Ok(PhaseOneResult { x, iterations });
            }
            if !centered {
                return Err(Error::Infeasible {
                    iterations,
                    best_margin: -x[ti],
                });
            }
            if x[ti] - nu / tau >= -target {
                return Err(Error::Infeasible {
                    iterations,
                    best_margin: -x[ti],
                });
            }
            tau *= TAU_GROWTH;
        }
    }
}

/// Basis of symmetric `n×n` matrices: `eᵢeᵢᵀ`, then `eᵢeⱼᵀ + eⱼeᵢᵀ` for `i < j`.
pub(crate) fn symmetric_basis(n: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            let mut e = DMatrix::zeros(n, n);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            out.push(e);
        }
    }
    out
}

pub(crate) fn symmetric_coords(q: &DMatrix<f64>) -> Vec<f64> {
    let n = q.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(q[(i, j)]);
        }
    }
    out
}

pub(crate) fn symmetric_from_coords(n: usize, x: &[f64]) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            q[(i, j)] = x[k];
            q[(j, i)] = x[k];
            k += 1;
        }
    }
    q
}
