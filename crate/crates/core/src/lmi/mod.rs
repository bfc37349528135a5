//! Nominal-gain synthesis making both closed-loop modes stable, and common
//! quadratic Lyapunov function certificates.
//!
//! With `Â = A + v₁cᵀφ(A)` and `B̂ = (I + v₁cᵀA^{r−1})B` the filtered-mode
//! matrix is `Ã = Â − B̂K` for every `K`. The congruence `Q = P⁻¹`,
//! `Y = −KQ` turns the two Lyapunov inequalities into the LMIs
//! `AQ + QAᵀ + BY + YᵀBᵀ ≺ 0`, `ÂQ + QÂᵀ + B̂Y + YᵀB̂ᵀ ≺ 0`, `Q ≻ 0`.

mod solver;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    eigenvalues, matrix_power, spectral_abscissa, sym_max_eigenvalue, sym_min_eigenvalue,
    symmetrize, Complex64,
};
use crate::linear_model::{build_hocbf_chain, Constraint, Plant};
use crate::serde_util;
use solver::{symmetric_basis, symmetric_coords, AffineBlock, Ball, PhaseOne};

#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    a_hat: DMatrix<f64>,
    b_hat: DMatrix<f64>,
    v1: DVector<f64>,
    alphas: Vec<f64>,
}

impl LmiProblem {
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn a_hat(&self) -> &DMatrix<f64> {
        &self.a_hat
    }

    pub fn b_hat(&self) -> &DMatrix<f64> {
        &self.b_hat
    }

    pub fn v1(&self) -> &DVector<f64> {
        &self.v1
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `Ã(K) = Â − B̂K`.
    pub fn a_tilde(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a_hat - &self.b_hat * k
    }
}

pub fn build_lmi_problem(
    plant: &Plant,
    constraint: &Constraint,
    alphas: &[f64],
    g: &DMatrix<f64>,
) -> Result<LmiProblem> {
    let (n, m) = (plant.n(), plant.m());
    if g.shape() != (m, m) {
        return Err(Error::dims(
            "G",
            format!("{m}x{m}"),
            format!("{:?}", g.shape()),
        ));
    }
    let chain = build_hocbf_chain(plant, constraint, alphas)?;
    let r = constraint.relative_degree();
    let c = constraint.c();
    let lead_left = c.transpose() * matrix_power(plant.a(), r - 1);
    let lead = &lead_left * plant.b();
    let g_inv = g
        .clone()
        .cholesky()
        .ok_or(Error::WeightNotPositiveDefinite)?
        .inverse();
    let dir = &g_inv * lead.transpose();
    let theta_sq = (&lead * &dir)[(0, 0)];
    if !(theta_sq.is_finite() && theta_sq > 1e-14 * lead.norm_squared() * g_inv.norm()) {
        return Err(Error::ZeroThetaSq(theta_sq));
    }
    let v1 = -(plant.b() * dir) / theta_sq;
    let a_hat = plant.a() + &v1 * chain.phi_row();
    let b_hat = (DMatrix::identity(n, n) + &v1 * &lead_left) * plant.b();

    let prob = LmiProblem {
        a: plant.a().clone(),
        b: plant.b().clone(),
        a_hat,
        b_hat,
        v1,
        alphas: alphas.to_vec(),
    };

    // Ã = Â − B̂K against the direct rank-one form at a few gains.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..3 {
        let k = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let direct = plant.a() - plant.b() * &k + &prob.v1 * (chain.phi_row() - &lead * &k);
        let via = prob.a_tilde(&k);
        let err = (&direct - &via).norm();
        if err > 1e-10 * (1.0 + direct.norm()) {
            return Err(Error::Consistency(format!(
                "A_tilde(K) identity off by {err:.3e}"
            )));
        }
    }
    Ok(prob)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmiOptions {
    /// Required margin; `None` means `1e−6·‖A‖` for the LMI pair and
    /// `1e−9·‖A₀‖` for the CQLF search.
    pub eps: Option<f64>,
    /// Newton-step budget.
    pub max_iter: usize,
}

impl Default for LmiOptions {
    fn default() -> Self {
        LmiOptions {
            eps: None,
            max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LmiMargins {
    /// `λmax(AQ + QAᵀ + BY + YᵀBᵀ)`.
    pub nominal: f64,
    /// `λmax(ÂQ + QÂᵀ + B̂Y + YᵀB̂ᵀ)`.
    pub filtered: f64,
    /// `λmin(Q)`.
    pub q_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LmiSolution {
    #[serde(rename = "Q", serialize_with = "serde_util::matrix")]
    pub q: DMatrix<f64>,
    #[serde(rename = "Y", serialize_with = "serde_util::matrix")]
    pub y: DMatrix<f64>,
    #[serde(rename = "K", serialize_with = "serde_util::matrix")]
    pub k: DMatrix<f64>,
    #[serde(rename = "P", serialize_with = "serde_util::matrix")]
    pub p: DMatrix<f64>,
    pub margins: LmiMargins,
    pub abscissa_a0: f64,
    pub abscissa_a_tilde: f64,
    pub cond_q: f64,
    pub iterations: usize,
}

fn lyapunov_term(a: &DMatrix<f64>, e: &DMatrix<f64>) -> DMatrix<f64> {
    a * e + e * a.transpose()
}

pub fn solve_lmi_pair(prob: &LmiProblem, opts: &LmiOptions) -> Result<LmiSolution> {
    let (n, m) = (prob.n(), prob.m());
    let eps = opts.eps.unwrap_or(1e-6 * prob.a.norm());
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let scale = (prob.a.norm() + prob.b.norm())
        .max(prob.a_hat.norm() + prob.b_hat.norm())
        .max(f64::MIN_POSITIVE);

    let q_basis = symmetric_basis(n);
    let nq = q_basis.len();
    let ny = m * n;
    let nvars = nq + ny + 1;
    let eye = DMatrix::<f64>::identity(n, n);
    let zero = DMatrix::<f64>::zeros(n, n);

    let lyap_block = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
        let mut terms = Vec::with_capacity(nvars);
        for e in &q_basis {
            terms.push(-lyapunov_term(a, e) / scale);
        }
        for col in 0..n {
            for row in 0..m {
                let mut e = DMatrix::zeros(m, n);
                e[(row, col)] = 1.0;
                let be = b * e;
                terms.push(-(&be + be.transpose()) / scale);
            }
        }
        terms.push(eye.clone());
        AffineBlock {
            constant: zero.clone(),
            terms,
        }
    };
    let mut q_lower = Vec::with_capacity(nvars);
    let mut q_upper = Vec::with_capacity(nvars);
    for e in &q_basis {
        q_lower.push(e.clone());
        q_upper.push(-e);
    }
    for _ in 0..ny {
        q_lower.push(zero.clone());
        q_upper.push(zero.clone());
    }
    q_lower.push(eye.clone());
    q_upper.push(zero.clone());

    let problem = PhaseOne {
        blocks: vec![
            lyap_block(&prob.a, &prob.b),
            lyap_block(&prob.a_hat, &prob.b_hat),
            AffineBlock {
                constant: zero.clone(),
                terms: q_lower,
            },
            AffineBlock {
                constant: eye.clone(),
                terms: q_upper,
            },
        ],
        ball: Some(Ball {
            indices: (nq..nq + ny).collect(),
            radius_sq: 1e8 * n as f64,
        }),
        nvars,
    };

    let q0 = &eye * 0.5;
    let start_t = 1.0
        + [
            sym_max_eigenvalue(&lyapunov_term(&prob.a, &q0))?,
            sym_max_eigenvalue(&lyapunov_term(&prob.a_hat, &q0))?,
        ]
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v / scale));
    let mut x0 = DVector::zeros(nvars);
    for (i, v) in symmetric_coords(&q0).into_iter().enumerate() {
        x0[i] = v;
    }
    x0[nvars - 1] = start_t;

    let res = problem.solve(x0, eps / scale, opts.max_iter)?;
    let q = solver::symmetric_from_coords(n, &res.x.as_slice()[..nq]);
    let y = DMatrix::from_column_slice(m, n, &res.x.as_slice()[nq..nq + ny]);
    finish_solution(prob, q, y, eps, res.iterations)
}

fn finish_solution(
    prob: &LmiProblem,
    q: DMatrix<f64>,
    y: DMatrix<f64>,
    eps: f64,
    iterations: usize,
) -> Result<LmiSolution> {
    let q_eig = crate::linalg::sym_eigenvalues(&q)?;
    let (q_min, q_max) = (q_eig.min(), q_eig.max());
    let cond_q = q_max / q_min;
    if q_min.is_nan() || q_min <= 0.0 || cond_q > 1e10 {
        return Err(Error::IllConditioned(cond_q));
    }
    let p = symmetrize(
        &q.clone()
            .cholesky()
            .ok_or(Error::IllConditioned(cond_q))?
            .inverse(),
    );
    let k = -(&y * &p);
    let f1 = lyapunov_term(&prob.a, &q) + &prob.b * &y + (&prob.b * &y).transpose();
    let f2 = lyapunov_term(&prob.a_hat, &q) + &prob.b_hat * &y + (&prob.b_hat * &y).transpose();
    let margins = LmiMargins {
        nominal: sym_max_eigenvalue(&f1)?,
        filtered: sym_max_eigenvalue(&f2)?,
        q_min,
    };
    if margins.nominal >= -eps || margins.filtered >= -eps {
        return Err(Error::Consistency(format!(
            "LMI margins ({:.3e}, {:.3e}) fail post-hoc verification",
            margins.nominal, margins.filtered
        )));
    }
    let abscissa_a0 = spectral_abscissa(&(&prob.a - &prob.b * &k))?;
    let abscissa_a_tilde = spectral_abscissa(&prob.a_tilde(&k))?;
    if abscissa_a0 >= 0.0 || abscissa_a_tilde >= 0.0 {
        return Err(Error::Consistency(format!(
            "designed gain is not stabilizing (abscissas {abscissa_a0:.3e}, {abscissa_a_tilde:.3e})"
        )));
    }
    Ok(LmiSolution {
        q,
        y,
        k,
        p,
        margins,
        abscissa_a0,
        abscissa_a_tilde,
        cond_q,
        iterations,
    })
}

/// Obstruction to any single-input design: `Ã = Â` does not depend on `K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Obstruction {
    #[serde(serialize_with = "serde_util::complex_list")]
    pub eigenvalues: Vec<Complex64>,
    pub note: String,
}

/// For `m = 1`, eigenvalues of `Ã` with nonnegative real part (which no
/// gain can move). `None` when `m > 1` or when `Ã` is Hurwitz.
pub fn single_input_obstruction(prob: &LmiProblem) -> Result<Option<Obstruction>> {
    if prob.m() != 1 {
        return Ok(None);
    }
    let mut bad: Vec<Complex64> = eigenvalues(&prob.a_hat)?
        .into_iter()
        .filter(|z| z.re >= -1e-9 * prob.a_hat.norm())
        .collect();
    if bad.is_empty() {
        return Ok(None);
    }
    bad.sort_by(|a, b| b.re.total_cmp(&a.re));
    let list: Vec<String> = bad
        .iter()
        .map(|z| {
            if z.im == 0.0 {
                format!("{:.6}", z.re)
            } else {
                format!("{:.6}{:+.6}i", z.re, z.im)
            }
        })
        .collect();
    Ok(Some(Obstruction {
        note: format!(
            "m=1 spectral obstruction: with a single input the filtered-mode matrix does not depend on K or G, and it has eigenvalue(s) {} with nonnegative real part",
            list.join(", ")
        ),
        eigenvalues: bad,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CqlfMargins {
    /// `λmax(PA₀ + A₀ᵀP)`.
    pub nominal: f64,
    /// `λmax(PÃ + ÃᵀP)`.
    pub filtered: f64,
    /// `λmin(P)`.
    pub p_min: f64,
    pub certified: bool,
}

/// Decrease-form check of `V(x) = xᵀPx` for both modes.
pub fn verify_cqlf(
    p: &DMatrix<f64>,
    a0: &DMatrix<f64>,
    a_tilde: &DMatrix<f64>,
    tol: f64,
) -> Result<CqlfMargins> {
    let p = symmetrize(p);
    let nominal = sym_max_eigenvalue(&(&p * a0 + a0.transpose() * &p))?;
    let filtered = sym_max_eigenvalue(&(&p * a_tilde + a_tilde.transpose() * &p))?;
    let p_min = sym_min_eigenvalue(&p)?;
    let certified = nominal < -tol && filtered < -tol && p_min > tol;
    Ok(CqlfMargins {
        nominal,
        filtered,
        p_min,
        certified,
    })
}

/// Negative real eigenvalues of `A₀Ã`. When `Ã − A₀` has rank one and both
/// matrices are Hurwitz, a CQLF exists if and only if this list is empty.
pub fn rank_one_cqlf_obstruction(a0: &DMatrix<f64>, a_tilde: &DMatrix<f64>) -> Result<Vec<f64>> {
    let prod = a0 * a_tilde;
    let scale = prod.norm();
    let mut out: Vec<f64> = eigenvalues(&prod)?
        .into_iter()
        .filter(|z| z.re < -1e-12 * scale && z.im.abs() <= 1e-9 * (scale + z.norm()))
        .map(|z| z.re)
        .collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Searches for `P ≻ 0` with `PA₀ + A₀ᵀP ≺ 0` and `PÃ + ÃᵀP ≺ 0`.
///
/// `P` is normalized by `P ≺ I`; the margin applies to the two Lyapunov
/// blocks only, each scaled by its own matrix norm, so a poorly
/// conditioned `P` is still found.
///
/// A CQLF need not exist even when both matrices are Hurwitz: for a rank-one
/// difference it exists exactly when `A₀Ã` has no negative real eigenvalue
/// (see [`rank_one_cqlf_obstruction`]).
pub fn find_cqlf(
    a0: &DMatrix<f64>,
    a_tilde: &DMatrix<f64>,
    opts: &LmiOptions,
) -> Result<DMatrix<f64>> {
    let n = a0.nrows();
    if !a0.is_square() || a_tilde.shape() != (n, n) {
        return Err(Error::dims(
            "CQLF pair",
            format!("{n}x{n}"),
            format!("{:?}", a_tilde.shape()),
        ));
    }
    let eps = opts.eps.unwrap_or(1e-9 * a0.norm());
    let scale = a0.norm().max(f64::MIN_POSITIVE);
    let basis = symmetric_basis(n);
    let nvars = basis.len() + 1;
    let eye = DMatrix::<f64>::identity(n, n);
    let zero = DMatrix::<f64>::zeros(n, n);
    let lyap = |a: &DMatrix<f64>| {
        let s = a.norm().max(f64::MIN_POSITIVE);
        let mut terms: Vec<DMatrix<f64>> = basis
            .iter()
            .map(|e| -(e * a + a.transpose() * e) / s)
            .collect();
        terms.push(eye.clone());
        AffineBlock {
            constant: zero.clone(),
            terms,
        }
    };
    let mut lower: Vec<DMatrix<f64>> = basis.clone();
    lower.push(zero.clone());
    let mut upper: Vec<DMatrix<f64>> = basis.iter().map(|e| -e).collect();
    upper.push(zero.clone());
    let problem = PhaseOne {
        blocks: vec![
            lyap(a0),
            lyap(a_tilde),
            AffineBlock {
                constant: zero.clone(),
                terms: lower,
            },
            AffineBlock {
                constant: eye.clone(),
                terms: upper,
            },
        ],
        ball: None,
        nvars,
    };
    let p0 = &eye * 0.5;
    let start_t = 1.0
        + [a0, a_tilde]
            .iter()
            .map(|a| {
                Ok(sym_max_eigenvalue(&(&p0 * *a + a.transpose() * &p0))?
                    / a.norm().max(f64::MIN_POSITIVE))
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0_f64, f64::max);
    let mut x0 = DVector::zeros(nvars);
    for (i, v) in symmetric_coords(&p0).into_iter().enumerate() {
        x0[i] = v;
    }
    x0[nvars - 1] = start_t;
    let res = problem.solve(x0, eps / scale, opts.max_iter)?;
    Ok(solver::symmetric_from_coords(
        n,
        &res.x.as_slice()[..nvars - 1],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tolerance::Tolerances;

    #[test]
    fn cqlf_margins_of_scaled_identities() {
        let eye = DMatrix::<f64>::identity(2, 2);
        let m = verify_cqlf(&eye, &(-&eye), &(&eye * -2.0), 1e-9).unwrap();
        assert_eq!((m.nominal, m.filtered), (-2.0, -4.0));
        assert!(m.certified);
    }

    #[test]
    fn double_integrator_full_relative_degree_design() {
        let tol = Tolerances::default();
        let plant = Plant::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            &tol,
        )
        .unwrap();
        let cons = Constraint::new(&plant, DVector::from_vec(vec![1.0, 0.0]), 1.0, &tol).unwrap();
        let prob = build_lmi_problem(&plant, &cons, &[1.0, 2.0], &DMatrix::identity(1, 1)).unwrap();
        assert!(single_input_obstruction(&prob).unwrap().is_none());
        let sol = solve_lmi_pair(&prob, &LmiOptions::default()).unwrap();
        assert!(sol.abscissa_a0 < 0.0 && sol.abscissa_a_tilde < 0.0);
        let cert = verify_cqlf(
            &sol.p,
            &(plant.a() - plant.b() * &sol.k),
            &prob.a_tilde(&sol.k),
            0.0,
        )
        .unwrap();
        assert!(cert.certified);
    }

    #[test]
    fn offset_does_not_enter_the_problem() {
        let tol = Tolerances::default();
        let plant = Plant::new(
            DMatrix::from_row_slice(2, 2, &[0.1, 1.0, -1.0, 0.2]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            &tol,
        )
        .unwrap();
        let c = DVector::from_vec(vec![0.5, 1.0]);
        let g = DMatrix::identity(1, 1);
        let p1 = build_lmi_problem(
            &plant,
            &Constraint::new(&plant, c.clone(), 0.3, &tol).unwrap(),
            &[2.0],
            &g,
        )
        .unwrap();
        let p2 = build_lmi_problem(
            &plant,
            &Constraint::new(&plant, c, 7.0, &tol).unwrap(),
            &[2.0],
            &g,
        )
        .unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn cqlf_search_on_stable_rank_one_pair() {
        let a0 = DMatrix::from_row_slice(2, 2, &[-1.0, 3.0, 0.0, -2.0]);
        let at = &a0 + DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -1.0, 0.0]);
        let p = find_cqlf(&a0, &at, &LmiOptions::default()).unwrap();
        assert!(verify_cqlf(&p, &a0, &at, 0.0).unwrap().certified);
    }
}
