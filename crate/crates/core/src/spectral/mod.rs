//! Eigenstructure of the filtered-mode matrix, equilibria and the
//! GES / Unbounded / Indeterminate classification.
//!
//! The characteristic polynomial of `Ã` factors as `φ(λ)·N(λ)/θ²` where
//! `N(λ) = cᵀ adj(λI − A₀) BG⁻¹Bᵀ(Aᵀ)^{r−1}c`. Hence `spec(Ã)` is the
//! designed set `{−αᵢ}` together with the invariant zeros of
//! `(A₀, BG⁻¹Bᵀ(Aᵀ)^{r−1}c, cᵀ)`. Zeros that coincide with eigenvalues of
//! `A₀` are reported as inherited, the rest as residual.

mod zeros;

pub use zeros::{siso_invariant_zeros, siso_invariant_zeros_with_degree};

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::FilterData;
use crate::linalg::{eigenvalues, null_space, smallest_singular_vector, svd, Complex64};
use crate::linear_model::HocbfChain;
use crate::serde_util;
use crate::tolerance::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Verdict {
    #[serde(rename = "GES")]
    Ges,
    Unbounded,
    Indeterminate,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Ges => "GES",
            Verdict::Unbounded => "Unbounded",
            Verdict::Indeterminate => "Indeterminate",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenReport {
    #[serde(serialize_with = "serde_util::complex_list")]
    pub eigenvalues: Vec<Complex64>,
    #[serde(serialize_with = "serde_util::complex_list")]
    pub designed: Vec<Complex64>,
    #[serde(serialize_with = "serde_util::complex_list")]
    pub inherited: Vec<Complex64>,
    #[serde(serialize_with = "serde_util::complex_list")]
    pub residual: Vec<Complex64>,
    /// Slopes `αᵢ` whose `−αᵢ` found no eigenvalue within the radius.
    pub unmatched_designed: Vec<f64>,
    /// `‖ℓÃ + α_r ℓ‖ / (‖ℓ‖(‖Ã‖ + α_r))` with `ℓ = cᵀφ_{r−1}(A)`.
    pub left_eigvec_check: f64,
    /// Largest `|cᵀy| / (‖c‖‖y‖)` with `y = (λI − A₀)⁻¹BG⁻¹Bᵀ(Aᵀ)^{r−1}c`
    /// over residual eigenvalues not close to `spec(A₀)`.
    pub transfer_residual: f64,
    pub a_tilde_norm: f64,
}

impl EigenReport {
    pub fn spectral_abscissa(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Eigenvalues passing the positive-real test, largest first.
    pub fn positive_real(&self, tol: &Tolerances) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .eigenvalues
            .iter()
            .filter(|z| is_positive_real(z, self.a_tilde_norm, tol.positive_real))
            .map(|z| z.re)
            .collect();
        out.sort_by(|a, b| b.total_cmp(a));
        out
    }

    /// Residual and inherited eigenvalues together: the part of `spec(Ã)`
    /// that does not depend on the slopes.
    pub fn non_designed(&self) -> Vec<Complex64> {
        let mut v = self.residual.clone();
        v.extend_from_slice(&self.inherited);
        v
    }
}

fn is_positive_real(z: &Complex64, a_norm: f64, tol: f64) -> bool {
    z.re > tol * a_norm && z.im.abs() <= tol * (1.0 + z.norm())
}

/// Matching radius for a target of multiplicity `k`: a `k`-fold eigenvalue
/// moves by roughly `ε^{1/k}` under rounding.
fn match_radius(base: f64, scale: f64, multiplicity: usize) -> f64 {
    let k = multiplicity.max(1) as f64;
    let split = (64.0 * f64::EPSILON).powf(1.0 / k);
    base.max(split) * (1.0 + scale)
}

fn take_nearest(pool: &mut Vec<Complex64>, target: Complex64, radius: f64) -> Option<Complex64> {
    let (idx, dist) = pool
        .iter()
        .enumerate()
        .map(|(i, z)| (i, (z - target).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    (dist <= radius).then(|| pool.swap_remove(idx))
}

fn sort_spectrum(v: &mut [Complex64]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// `y = (λI − A₀)⁻¹ b` in complex arithmetic.
fn resolvent_apply(
    a0: &DMatrix<f64>,
    lambda: Complex64,
    b: &DVector<f64>,
) -> Option<DVector<Complex64>> {
    let n = a0.nrows();
    let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
        let v = Complex::new(-a0[(i, j)], 0.0);
        if i == j {
            v + lambda
        } else {
            v
        }
    });
    let rhs = b.map(|v| Complex::new(v, 0.0));
    m.lu().solve(&rhs)
}

pub fn analyze_eigenstructure(
    fd: &FilterData,
    chain: &HocbfChain,
    tol: &Tolerances,
) -> Result<EigenReport> {
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
    let a_tilde = fd.a_tilde();
    let a_norm = a_tilde.norm();
    let mut eigs = eigenvalues(a_tilde)?;
    sort_spectrum(&mut eigs);

    let mut pool = eigs.clone();
    let mut designed = Vec::new();
    let mut unmatched_designed = Vec::new();
    for &alpha in chain.alphas() {
        let multiplicity = chain
            .alphas()
            .iter()
            .filter(|&&b| (b - alpha).abs() <= 1e-12 * alpha.abs().max(1.0))
            .count();
        let radius = match_radius(tol.eigen_match, a_norm, multiplicity);
        match take_nearest(&mut pool, Complex::new(-alpha, 0.0), radius) {
            Some(z) => designed.push(z),
            None => unmatched_designed.push(alpha),
        }
    }

    let mut a0_pool = eigenvalues(fd.a0())?;
    let radius = match_radius(tol.eigen_match, a_norm, 1);
    let mut inherited = Vec::new();
    let mut residual = Vec::new();
    sort_spectrum(&mut pool);
    for z in pool {
        if take_nearest(&mut a0_pool, z, radius).is_some() {
            inherited.push(z);
        } else {
            residual.push(z);
        }
    }
    sort_spectrum(&mut designed);

    let ell = chain.last_row();
    let alpha_r = *chain.alphas().last().expect("r >= 1");
    let lhs = ell * a_tilde + ell * alpha_r;
    let left_eigvec_check = lhs.norm() / (ell.norm() * (a_norm + alpha_r)).max(f64::MIN_POSITIVE);

    let b_g = fd.input_channel();
    let c = fd.c();
    let mut transfer_residual = 0.0_f64;
    for &z in &residual {
        if let Some(y) = resolvent_apply(fd.a0(), z, b_g) {
            let cy: Complex64 = c.iter().zip(y.iter()).map(|(ci, yi)| yi * *ci).sum();
            let denom = c.norm() * y.norm();
            if denom.is_finite() && denom > 0.0 {
                transfer_residual = transfer_residual.max(cy.norm() / denom);
            }
        }
    }

    Ok(EigenReport {
        eigenvalues: eigs,
        designed,
        inherited,
        residual,
        unmatched_designed,
        left_eigvec_check,
        transfer_residual,
        a_tilde_norm: a_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EquilibriumKind {
    OriginOnly,
    OriginPlusPoint,
    Infinite,
}

/// `{particular + basis·z : η(·) < 0}`, the extra equilibria when `ξ = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegenerateSet {
    #[serde(serialize_with = "serde_util::vector")]
    pub particular: DVector<f64>,
    #[serde(serialize_with = "serde_util::matrix")]
    pub basis: DMatrix<f64>,
    /// Whether `Ãx = −b̃` is solvable at all.
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriaReport {
    pub xi: f64,
    /// Threshold below which `|ξ|` counts as zero.
    pub xi_threshold: f64,
    pub kind: EquilibriumKind,
    /// `−Ã⁻¹b̃` whenever `ξ ≠ 0`, whether or not it lies in the filtered region.
    #[serde(serialize_with = "serde_util::opt_vector")]
    pub candidate: Option<DVector<f64>>,
    pub eta_at_candidate: Option<f64>,
    pub degenerate_set: Option<DegenerateSet>,
}

impl EquilibriaReport {
    /// The undesired equilibrium `p̃`, present only for `OriginPlusPoint`.
    pub fn undesired_point(&self) -> Option<&DVector<f64>> {
        match self.kind {
            EquilibriumKind::OriginPlusPoint => self.candidate.as_ref(),
            _ => None,
        }
    }
}

pub fn classify_equilibria(fd: &FilterData, tol: &Tolerances) -> Result<EquilibriaReport> {
    let y = fd
        .a0()
        .clone()
        .lu()
        .solve(fd.input_channel())
        .ok_or_else(|| Error::Consistency("A0 is singular".into()))?;
    let xi = fd.c().dot(&y);
    let xi_threshold = tol.xi * fd.c().norm() * y.norm();

    if xi.abs() > xi_threshold {
        let rhs = -fd.b_tilde();
        let p = fd
            .a_tilde()
            .clone()
            .lu()
            .solve(&rhs)
            .filter(|p| p.iter().all(|v| v.is_finite()))
            .ok_or(Error::SingularSolve { xi })?;
        let eta = fd.eta(&p);
        let kind = if xi < 0.0 {
            EquilibriumKind::OriginOnly
        } else {
            EquilibriumKind::OriginPlusPoint
        };
        return Ok(EquilibriaReport {
            xi,
            xi_threshold,
            kind,
            candidate: Some(p),
            eta_at_candidate: Some(eta),
            degenerate_set: None,
        });
    }

    let a_tilde = fd.a_tilde();
    let rhs = -fd.b_tilde();
    let dec = svd(a_tilde, true, true)?;
    let smax = dec.singular_values.max();
    let rank_tol = 1e-9 * smax.max(f64::MIN_POSITIVE);
    let particular = dec
        .solve(&rhs, rank_tol)
        .map_err(|e| Error::Consistency(e.to_string()))?;
    let consistent = (a_tilde * &particular - &rhs).norm() <= 1e-8 * (1.0 + rhs.norm());
    let basis = null_space(a_tilde, 1e-9)?;
    Ok(EquilibriaReport {
        xi,
        xi_threshold,
        kind: EquilibriumKind::Infinite,
        candidate: None,
        eta_at_candidate: None,
        degenerate_set: Some(DegenerateSet {
            particular,
            basis,
            consistent,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Parity {
    Even,
    Odd,
}

/// Parity of the number of positive real eigenvalues of `Ã`.
pub fn parity_check(report: &EigenReport, tol: &Tolerances) -> Result<Parity> {
    let floor = tol.xi * report.a_tilde_norm.max(f64::MIN_POSITIVE);
    if report.eigenvalues.iter().any(|z| z.norm() <= floor) {
        return Err(Error::NearSingular);
    }
    Ok(if report.positive_real(tol).len() % 2 == 0 {
        Parity::Even
    } else {
        Parity::Odd
    })
}

/// Finite invariant zeros of `(A₀, BG⁻¹Bᵀ(Aᵀ)^{r−1}c, cᵀ)`. This system has
/// relative degree exactly `r`, so no rank decisions are needed.
pub fn invariant_zeros(fd: &FilterData, _tol: &Tolerances) -> Result<Vec<Complex64>> {
    let mut z = siso_invariant_zeros_with_degree(
        fd.a0(),
        fd.input_channel(),
        &fd.c().transpose(),
        fd.relative_degree(),
    )?;
    sort_spectrum(&mut z);
    Ok(z)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    pub eigen: EigenReport,
    pub equilibria: EquilibriaReport,
    #[serde(serialize_with = "serde_util::complex_list")]
    pub invariant_zeros: Vec<Complex64>,
    /// `None` when `Ã` has an eigenvalue too close to zero.
    pub parity_positive_real: Option<Parity>,
    /// Even parity must coincide with `OriginOnly`.
    pub parity_consistent: Option<bool>,
}

pub fn classify(
    fd: &FilterData,
    chain: &HocbfChain,
    tol: &Tolerances,
) -> Result<ClassificationReport> {
    let eigen = analyze_eigenstructure(fd, chain, tol)?;
    let equilibria = classify_equilibria(fd, tol)?;
    let invariant_zeros = invariant_zeros(fd, tol)?;
    let parity = match parity_check(&eigen, tol) {
        Ok(p) => Some(p),
        Err(Error::NearSingular) => None,
        Err(e) => return Err(e),
    };
    let parity_consistent = match (parity, equilibria.kind) {
        (Some(p), EquilibriumKind::OriginOnly) => Some(p == Parity::Even),
        (Some(p), EquilibriumKind::OriginPlusPoint) => Some(p == Parity::Odd),
        _ => None,
    };

    let verdict = if eigen.spectral_abscissa() < -tol.hurwitz * eigen.a_tilde_norm {
        Verdict::Ges
    } else if !eigen.positive_real(tol).is_empty() && equilibria.kind != EquilibriumKind::Infinite {
        Verdict::Unbounded
    } else {
        Verdict::Indeterminate
    };

    Ok(ClassificationReport {
        verdict,
        eigen,
        equilibria,
        invariant_zeros,
        parity_positive_real: parity,
        parity_consistent,
    })
}

/// The pair of curves `p̃ ± e^{λt}v` solving the filtered-mode dynamics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceRay {
    pub lambda: f64,
    #[serde(serialize_with = "serde_util::vector")]
    pub base: DVector<f64>,
    /// Unit eigenvector, oriented so that `η` decreases along `+v`.
    #[serde(serialize_with = "serde_util::vector")]
    pub direction: DVector<f64>,
    /// `|cᵀφ_{r−1}(A)v| / ‖cᵀφ_{r−1}(A)‖`.
    pub chain_alignment: f64,
    /// `v₂ᵀv` after orientation; strictly negative.
    pub eta_slope: f64,
    /// `‖(Ã − λI)v‖ / ‖Ã‖`.
    pub eigen_residual: f64,
}

impl DivergenceRay {
    pub fn point(&self, t: f64) -> DVector<f64> {
        &self.base + &self.direction * (self.lambda * t).exp()
    }

    /// Start on the entering ray at distance `s` from the base point, pushed
    /// further out if needed so that the filter is active there.
    pub fn launch_point(&self, fd: &FilterData, s: f64) -> DVector<f64> {
        let eta_base = fd.eta(&self.base);
        let needed = if eta_base >= 0.0 {
            (eta_base / -self.eta_slope) * 1.01 + f64::EPSILON
        } else {
            0.0
        };
        &self.base + &self.direction * s.max(needed)
    }
}

pub fn divergence_ray(
    fd: &FilterData,
    chain: &HocbfChain,
    report: &ClassificationReport,
    tol: &Tolerances,
) -> Result<Option<DivergenceRay>> {
    if report.verdict == Verdict::Ges {
        return Ok(None);
    }
    let lambda = *report
        .eigen
        .positive_real(tol)
        .first()
        .ok_or(Error::NoPositiveRealEigenvalue)?;
    let Some(base) = report.equilibria.candidate.clone() else {
        return Ok(None);
    };
    let n = fd.n();
    let shifted = fd.a_tilde() - DMatrix::identity(n, n) * lambda;
    let (_, mut v) = smallest_singular_vector(&shifted)?;
    v /= v.norm();
    let mut slope = fd.v2().dot(&v);
    if slope > 0.0 {
        v = -v;
        slope = -slope;
    }
    let ell = chain.last_row();
    let chain_alignment = (ell * &v)[(0, 0)].abs() / ell.norm().max(f64::MIN_POSITIVE);
    let eigen_residual = (&shifted * &v).norm() / report.eigen.a_tilde_norm.max(f64::MIN_POSITIVE);
    Ok(Some(DivergenceRay {
        lambda,
        base,
        direction: v,
        chain_alignment,
        eta_slope: slope,
        eigen_residual,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::build_filter_data;
    use crate::linear_model::{build_hocbf_chain, Constraint, FilterConfig, Plant};

    fn setup(
        a: &[f64],
        b: &[f64],
        c: &[f64],
        d: f64,
        k: &[f64],
        alphas: Vec<f64>,
    ) -> (FilterData, HocbfChain) {
        let n = c.len();
        let m = b.len() / n;
        let tol = Tolerances::default();
        let plant = Plant::new(
            DMatrix::from_row_slice(n, n, a),
            DMatrix::from_row_slice(n, m, b),
            &tol,
        )
        .unwrap();
        let cons = Constraint::new(&plant, DVector::from_row_slice(c), d, &tol).unwrap();
        let cfg = FilterConfig::new(
            &plant,
            &cons,
            DMatrix::from_row_slice(m, n, k),
            DMatrix::identity(m, m),
            alphas,
            &tol,
        )
        .unwrap();
        let chain = build_hocbf_chain(&plant, &cons, cfg.alphas()).unwrap();
        (build_filter_data(&plant, &cons, &cfg).unwrap(), chain)
    }

    #[test]
    fn full_relative_degree_is_ges() {
        // Double integrator, c = [1, 0]: r = n = 2.
        let (fd, chain) = setup(
            &[0.0, 1.0, 0.0, 0.0],
            &[0.0, 1.0],
            &[1.0, 0.0],
            1.0,
            &[1.0, 2.0],
            vec![1.5, 4.0],
        );
        let tol = Tolerances::default();
        let rep = classify(&fd, &chain, &tol).unwrap();
        assert_eq!(rep.verdict, Verdict::Ges);
        assert_eq!(rep.eigen.designed.len(), 2);
        assert!(rep.eigen.residual.is_empty() && rep.eigen.inherited.is_empty());
        assert!(rep.invariant_zeros.is_empty());
        assert!(divergence_ray(&fd, &chain, &rep, &tol).unwrap().is_none());
    }

    #[test]
    fn unstable_zero_gives_unbounded_and_a_ray() {
        // Scalar-output plant with a right-half-plane zero at s = 2:
        // (A, B) in controllable form, c picks numerator s − 2.
        let (fd, chain) = setup(
            &[0.0, 1.0, -2.0, -3.0],
            &[0.0, 1.0],
            &[-2.0, 1.0],
            0.5,
            &[0.0, 0.0],
            vec![3.0],
        );
        let tol = Tolerances::default();
        let rep = classify(&fd, &chain, &tol).unwrap();
        assert_eq!(rep.verdict, Verdict::Unbounded);
        assert_eq!(rep.equilibria.kind, EquilibriumKind::OriginPlusPoint);
        assert_eq!(rep.parity_positive_real, Some(Parity::Odd));
        assert_eq!(rep.parity_consistent, Some(true));
        assert_eq!(rep.invariant_zeros.len(), 1);
        assert!((rep.invariant_zeros[0].re - 2.0).abs() < 1e-10);
        let p = rep.equilibria.undesired_point().unwrap();
        let eta = fd.eta(p);
        assert!(eta < 0.0);
        assert!((eta * rep.equilibria.xi + fd.d() * fd.theta_sq()).abs() < 1e-10);
        let ray = divergence_ray(&fd, &chain, &rep, &tol).unwrap().unwrap();
        assert!((ray.lambda - 2.0).abs() < 1e-10);
        assert!(ray.chain_alignment < 1e-10 && ray.eta_slope < 0.0);
    }
}
