//! Plant, affine constraint, filter parameters and the high-order CBF chain.
//!
//! For `ẋ = Ax + Bu` and `h(x) = cᵀx + d` with relative degree `r`, the chain
//! functions are `hᵢ(x) = cᵀφᵢ(A)x + d·∏_{j≤i} αⱼ` with
//! `φᵢ(s) = ∏_{j≤i}(s + αⱼ)`.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::tolerance::Tolerances;

/// Linear plant `ẋ = Ax + Bu`, checked stabilizable on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl Plant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, tol: &Tolerances) -> Result<Self> {
        let plant = Self::new_unchecked(a, b)?;
        if let Some(mode) =
            linalg::uncontrollable_unstable_mode(&plant.a, &plant.b, tol.stabilizability)?
        {
            return Err(Error::NotStabilizable {
                re: mode.re,
                im: mode.im,
            });
        }
        Ok(plant)
    }

    /// Dimension and finiteness checks only.
    pub fn new_unchecked(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(Error::dims(
                "A",
                "square, n >= 1",
                format!("{:?}", a.shape()),
            ));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::dims(
                "B",
                format!("{n}xm, m >= 1"),
                format!("{:?}", b.shape()),
            ));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("plant entries must be finite".into()));
        }
        Ok(Plant { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }
}

/// Affine safe set `{x : cᵀx + d ≥ 0}` together with its relative degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    c: DVector<f64>,
    d: f64,
    r: usize,
}

impl Constraint {
    pub fn new(plant: &Plant, c: DVector<f64>, d: f64, tol: &Tolerances) -> Result<Self> {
        if c.len() != plant.n() {
            return Err(Error::dims("c", plant.n(), c.len()));
        }
        if !d.is_finite() || c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "constraint entries must be finite".into(),
            ));
        }
        if d <= 0.0 {
            return Err(Error::NonPositiveOffset(d));
        }
        if c.norm() == 0.0 {
            return Err(Error::ZeroNormal);
        }
        let r = compute_relative_degree(plant, &c, tol.relative_degree)?;
        Ok(Constraint { c, d, r })
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn relative_degree(&self) -> usize {
        self.r
    }

    pub fn h(&self, x: &DVector<f64>) -> f64 {
        self.c.dot(x) + self.d
    }
}

/// Smallest `r` with `‖cᵀA^{r−1}B‖ > tol·‖c‖‖A‖^{r−1}‖B‖`.
pub fn compute_relative_degree(plant: &Plant, c: &DVector<f64>, tol: f64) -> Result<usize> {
    if c.len() != plant.n() {
        return Err(Error::dims("c", plant.n(), c.len()));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let a_norm = plant.a.norm();
    let b_norm = plant.b.norm();
    let mut row = c.transpose();
    for r in 1..=plant.n() {
        let lead = &row * &plant.b;
        let scale = c.norm() * a_norm.powi(r as i32 - 1) * b_norm;
        if lead.norm() > tol * scale {
            return Ok(r);
        }
        row = &row * &plant.a;
    }
    Err(Error::NoRelativeDegree)
}

/// Nominal gain `K` (`k(x) = −Kx`), QP weight `G` and linear class-K slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    k: DMatrix<f64>,
    g: DMatrix<f64>,
    alphas: Vec<f64>,
}

impl FilterConfig {
    pub fn new(
        plant: &Plant,
        constraint: &Constraint,
        k: DMatrix<f64>,
        g: DMatrix<f64>,
        alphas: Vec<f64>,
        tol: &Tolerances,
    ) -> Result<Self> {
        let cfg = Self::new_unchecked(plant, constraint, k, g, alphas)?;
        let a0 = plant.a() - plant.b() * &cfg.k;
        let abscissa = linalg::spectral_abscissa(&a0)?;
        if abscissa >= -tol.hurwitz * a0.norm() {
            return Err(Error::NominalNotHurwitz { abscissa });
        }
        Ok(cfg)
    }

    /// Validates everything except the Hurwitz property of `A − BK`.
    ///
    /// Used by the gain-design path, where `K` is an output rather than an
    /// input.
    pub fn new_unchecked(
        plant: &Plant,
        constraint: &Constraint,
        k: DMatrix<f64>,
        g: DMatrix<f64>,
        alphas: Vec<f64>,
    ) -> Result<Self> {
        let (n, m) = (plant.n(), plant.m());
        if k.shape() != (m, n) {
            return Err(Error::dims(
                "K",
                format!("{m}x{n}"),
                format!("{:?}", k.shape()),
            ));
        }
        if g.shape() != (m, m) {
            return Err(Error::dims(
                "G",
                format!("{m}x{m}"),
                format!("{:?}", g.shape()),
            ));
        }
        if k.iter().chain(g.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("K and G entries must be finite".into()));
        }
        if !linalg::is_symmetric(&g, 1e-12) || linalg::sym_min_eigenvalue(&g)? <= 0.0 {
            return Err(Error::WeightNotPositiveDefinite);
        }
        validate_alphas(&alphas, constraint.relative_degree())?;
        Ok(FilterConfig { k, g, alphas })
    }

    /// `G = I`, all slopes equal to one.
    pub fn default_weights(plant: &Plant, constraint: &Constraint) -> (DMatrix<f64>, Vec<f64>) {
        (
            DMatrix::identity(plant.m(), plant.m()),
            vec![1.0; constraint.relative_degree()],
        )
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }
}

pub(crate) fn validate_alphas(alphas: &[f64], r: usize) -> Result<()> {
    if alphas.len() != r {
        return Err(Error::AlphaCount {
            expected: r,
            found: alphas.len(),
        });
    }
    if let Some(&bad) = alphas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::NonPositiveAlpha(bad));
    }
    Ok(())
}

/// Expanded chain `h₀ … h_{r−1}` and the characteristic polynomial `φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HocbfChain {
    alphas: Vec<f64>,
    /// Ascending coefficients of `φᵢ` for `i = 0..=r` (`φ₀ = 1`).
    partial_polys: Vec<Vec<f64>>,
    rows: Vec<RowDVector<f64>>,
    offsets: Vec<f64>,
    phi_row: RowDVector<f64>,
}

impl HocbfChain {
    pub fn relative_degree(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Ascending coefficients of `φ = φ_r`: `[α, β₁, …, β_{r−1}, 1]`.
    pub fn phi_coeffs(&self) -> &[f64] {
        &self.partial_polys[self.alphas.len()]
    }

    /// `β₁ … β_{r−1}` in `φ(s) = s^r + Σ βᵢ sⁱ + α`.
    pub fn betas(&self) -> &[f64] {
        let phi = self.phi_coeffs();
        &phi[1..phi.len() - 1]
    }

    /// `α = ∏ αᵢ`, the constant term of `φ`.
    pub fn alpha_product(&self) -> f64 {
        self.phi_coeffs()[0]
    }

    pub fn partial_poly(&self, i: usize) -> &[f64] {
        &self.partial_polys[i]
    }

    /// Row `i` is `cᵀφᵢ(A)`.
    pub fn rows(&self) -> &[RowDVector<f64>] {
        &self.rows
    }

    /// Offset `i` is `d·∏_{j≤i} αⱼ`.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// `cᵀφ(A)`.
    pub fn phi_row(&self) -> &RowDVector<f64> {
        &self.phi_row
    }

    /// `cᵀφ_{r−1}(A)`, the left eigenvector of `Ã` for `−α_r`.
    pub fn last_row(&self) -> &RowDVector<f64> {
        self.rows.last().expect("chain has r >= 1 rows")
    }

    /// Coefficient rows of a constant exogenous input `w` added to the plant:
    /// `hᵢ(x; w) = rowᵢ·x + offsetᵢ + qᵢ·w` with `q₀ = 0`,
    /// `qᵢ₊₁ = rowᵢ + αᵢ₊₁qᵢ`. Entry `r` is the coefficient of `w` in the
    /// filter constraint.
    pub fn exogenous_rows(&self) -> Vec<RowDVector<f64>> {
        let n = self.phi_row.len();
        let mut q = vec![RowDVector::zeros(n)];
        for (i, alpha) in self.alphas.iter().enumerate() {
            let next = &self.rows[i] + &q[i] * *alpha;
            q.push(next);
        }
        q
    }
}

/// Expands `φᵢ(s) = ∏_{j≤i}(s + αⱼ)` and evaluates the rows `cᵀφᵢ(A)` by
/// Horner's scheme on the coefficients.
pub fn build_hocbf_chain(
    plant: &Plant,
    constraint: &Constraint,
    alphas: &[f64],
) -> Result<HocbfChain> {
    if constraint.c().len() != plant.n() {
        return Err(Error::dims("c", plant.n(), constraint.c().len()));
    }
    validate_alphas(alphas, constraint.relative_degree()).map_err(|e| match e {
        Error::AlphaCount { expected, found } => Error::dims("alphas", expected, found),
        other => other,
    })?;

    let mut partial_polys = vec![vec![1.0]];
    for &alpha in alphas {
        let prev = partial_polys.last().unwrap();
        let mut next = vec![0.0; prev.len() + 1];
        for (k, &coef) in prev.iter().enumerate() {
            next[k] += alpha * coef;
            next[k + 1] += coef;
        }
        partial_polys.push(next);
    }

    let ct = constraint.c().transpose();
    let eval = |coeffs: &[f64]| -> RowDVector<f64> {
        let mut row = &ct * coeffs[coeffs.len() - 1];
        for &coef in coeffs[..coeffs.len() - 1].iter().rev() {
            row = &row * plant.a() + &ct * coef;
        }
        row
    };

    let r = alphas.len();
    let rows: Vec<_> = (0..r).map(|i| eval(&partial_polys[i])).collect();
    let phi_row = eval(&partial_polys[r]);
    let mut offsets = Vec::with_capacity(r);
    let mut acc = constraint.d();
    offsets.push(acc);
    for alpha in &alphas[..r - 1] {
        acc *= alpha;
        offsets.push(acc);
    }

    Ok(HocbfChain {
        alphas: alphas.to_vec(),
        partial_polys,
        rows,
        offsets,
        phi_row,
    })
}

/// `[h₀(x), …, h_{r−1}(x)]`; `x ∈ C̄` iff every value is nonnegative.
pub fn evaluate_chain(chain: &HocbfChain, x: &DVector<f64>) -> Result<Vec<f64>> {
    let n = chain.phi_row.len();
    if x.len() != n {
        return Err(Error::dims("state", n, x.len()));
    }
    Ok(chain
        .rows
        .iter()
        .zip(&chain.offsets)
        .map(|(row, off)| row.dot(&x.transpose()) + off)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_integrator() -> Plant {
        Plant::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            &Tolerances::default(),
        )
        .unwrap()
    }

    #[test]
    fn double_integrator_has_relative_degree_two() {
        let plant = double_integrator();
        let c = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(compute_relative_degree(&plant, &c, 1e-9).unwrap(), 2);
    }

    #[test]
    fn no_relative_degree_when_c_is_unreachable() {
        let plant = Plant::new_unchecked(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
        )
        .unwrap();
        let c = DVector::from_vec(vec![0.0, 1.0]);
        assert_eq!(
            compute_relative_degree(&plant, &c, 1e-9),
            Err(Error::NoRelativeDegree)
        );
    }

    #[test]
    fn relative_degree_one_chain_is_h_itself() {
        let plant = Plant::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            &Tolerances::default(),
        )
        .unwrap();
        let c = DVector::from_vec(vec![0.3, -0.7]);
        let cons = Constraint::new(&plant, c.clone(), 0.5, &Tolerances::default()).unwrap();
        assert_eq!(cons.relative_degree(), 1);
        let chain = build_hocbf_chain(&plant, &cons, &[5.0]).unwrap();
        assert_eq!(chain.phi_coeffs(), &[5.0, 1.0]);
        assert_eq!(chain.rows()[0], c.transpose());
        assert_eq!(chain.offsets(), &[0.5]);
        assert!(chain.betas().is_empty());
    }

    #[test]
    fn second_order_chain_expansion() {
        let plant = double_integrator();
        let cons = Constraint::new(
            &plant,
            DVector::from_vec(vec![1.0, 0.0]),
            2.0,
            &Tolerances::default(),
        )
        .unwrap();
        let chain = build_hocbf_chain(&plant, &cons, &[1.0, 2.0]).unwrap();
        assert_eq!(chain.phi_coeffs(), &[2.0, 3.0, 1.0]);
        assert_eq!(chain.betas(), &[3.0]);
        assert_eq!(chain.alpha_product(), 2.0);
        // h₁(x) = cᵀ(A + I)x + d·α₁ = x₁ + x₂ + 2.
        assert_eq!(chain.rows()[1], RowDVector::from_vec(vec![1.0, 1.0]));
        assert_eq!(chain.offsets(), &[2.0, 2.0]);
        let x = DVector::from_vec(vec![0.0, 0.0]);
        assert_eq!(evaluate_chain(&chain, &x).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn boundary_point_has_zero_h0() {
        let plant = double_integrator();
        let cons = Constraint::new(
            &plant,
            DVector::from_vec(vec![1.0, 0.0]),
            0.7,
            &Tolerances::default(),
        )
        .unwrap();
        let chain = build_hocbf_chain(&plant, &cons, &[1.0, 1.0]).unwrap();
        let x = DVector::from_vec(vec![-0.7, 3.0]);
        assert_eq!(evaluate_chain(&chain, &x).unwrap()[0], 0.0);
    }

    #[test]
    fn wrong_alpha_count_is_dimension_mismatch() {
        let plant = double_integrator();
        let cons = Constraint::new(
            &plant,
            DVector::from_vec(vec![1.0, 0.0]),
            1.0,
            &Tolerances::default(),
        )
        .unwrap();
        assert!(matches!(
            build_hocbf_chain(&plant, &cons, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        let chain = build_hocbf_chain(&plant, &cons, &[1.0, 1.0]).unwrap();
        assert!(evaluate_chain(&chain, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn constraint_rejects_nonpositive_offset_and_zero_normal() {
        let plant = double_integrator();
        let tol = Tolerances::default();
        assert_eq!(
            Constraint::new(&plant, DVector::from_vec(vec![1.0, 0.0]), 0.0, &tol),
            Err(Error::NonPositiveOffset(0.0))
        );
        assert_eq!(
            Constraint::new(&plant, DVector::zeros(2), 1.0, &tol),
            Err(Error::ZeroNormal)
        );
    }

    #[test]
    fn config_requires_hurwitz_nominal_loop() {
        let plant = double_integrator();
        let tol = Tolerances::default();
        let cons = Constraint::new(&plant, DVector::from_vec(vec![1.0, 0.0]), 1.0, &tol).unwrap();
        let g = DMatrix::identity(1, 1);
        let bad = FilterConfig::new(
            &plant,
            &cons,
            DMatrix::from_row_slice(1, 2, &[0.0, 0.0]),
            g.clone(),
            vec![1.0, 1.0],
            &tol,
        );
        assert!(matches!(bad, Err(Error::NominalNotHurwitz { .. })));
        let good = FilterConfig::new(
            &plant,
            &cons,
            DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            g,
            vec![1.0, 1.0],
            &tol,
        );
        assert!(good.is_ok());
    }

    #[test]
    fn config_rejects_indefinite_weight() {
        let plant = double_integrator();
        let tol = Tolerances::default();
        let cons = Constraint::new(&plant, DVector::from_vec(vec![1.0, 0.0]), 1.0, &tol).unwrap();
        let res = FilterConfig::new(
            &plant,
            &cons,
            DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            DMatrix::from_element(1, 1, -1.0),
            vec![1.0, 1.0],
            &tol,
        );
        assert_eq!(res, Err(Error::WeightNotPositiveDefinite));
    }

    #[test]
    fn plant_rejects_unstabilizable_pair() {
        let res = Plant::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            &Tolerances::default(),
        );
        assert!(matches!(res, Err(Error::NotStabilizable { .. })));
    }
}
