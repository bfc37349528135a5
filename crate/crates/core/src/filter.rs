//! Closed-form safety filter and the piecewise-affine closed loop.
//!
//! With `k(x) = −Kx` the filtered controller is
//! `u*(x) = −Kx + max(0, −η(x))/θ² · G⁻¹Bᵀ(Aᵀ)^{r−1}c` and the closed loop
//! reads `ẋ = A₀x` on `η ≥ 0`, `ẋ = Ãx + b̃` on `η < 0`, where
//! `η(x) = v₂ᵀx + αd`, `Ã = A₀ + v₁v₂ᵀ` and `b̃ = αd·v₁`.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dmatrix_to_rows, matrix_power};
use crate::linear_model::{build_hocbf_chain, Constraint, FilterConfig, Plant};

/// Which branch of the closed loop is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Mode {
    Nominal,
    Filtered,
}

/// Hyperplane `η(x) = v₂ᵀx + αd = 0` separating the two modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSurface {
    pub normal: DVector<f64>,
    pub offset: f64,
}

impl SwitchingSurface {
    pub fn eta(&self, x: &DVector<f64>) -> f64 {
        self.normal.dot(x) + self.offset
    }
}

/// Every quantity derived from (plant, constraint, config) that the closed
/// loop and the analyses need.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterData {
    pub(crate) c: DVector<f64>,
    pub(crate) d: f64,
    pub(crate) relative_degree: usize,
    pub(crate) k: DMatrix<f64>,
    /// `cᵀA^{r−1}B`.
    pub(crate) lead_row: RowDVector<f64>,
    /// `G⁻¹Bᵀ(Aᵀ)^{r−1}c`.
    pub(crate) input_direction: DVector<f64>,
    /// `BG⁻¹Bᵀ(Aᵀ)^{r−1}c`.
    pub(crate) input_channel: DVector<f64>,
    pub(crate) theta_sq: f64,
    pub(crate) v1: DVector<f64>,
    pub(crate) v2: DVector<f64>,
    pub(crate) a0: DMatrix<f64>,
    pub(crate) a_tilde: DMatrix<f64>,
    pub(crate) b_tilde: DVector<f64>,
    pub(crate) alpha: f64,
}

impl FilterData {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.input_direction.len()
    }

    pub fn relative_degree(&self) -> usize {
        self.relative_degree
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn theta_sq(&self) -> f64 {
        self.theta_sq
    }

    pub fn v1(&self) -> &DVector<f64> {
        &self.v1
    }

    pub fn v2(&self) -> &DVector<f64> {
        &self.v2
    }

    pub fn a0(&self) -> &DMatrix<f64> {
        &self.a0
    }

    pub fn a_tilde(&self) -> &DMatrix<f64> {
        &self.a_tilde
    }

    pub fn b_tilde(&self) -> &DVector<f64> {
        &self.b_tilde
    }

    /// `α = ∏ αᵢ`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lead_row(&self) -> &RowDVector<f64> {
        &self.lead_row
    }

    pub fn input_direction(&self) -> &DVector<f64> {
        &self.input_direction
    }

    pub fn input_channel(&self) -> &DVector<f64> {
        &self.input_channel
    }

    pub fn surface(&self) -> SwitchingSurface {
        SwitchingSurface {
            normal: self.v2.clone(),
            offset: self.alpha * self.d,
        }
    }

    pub fn eta(&self, x: &DVector<f64>) -> f64 {
        self.v2.dot(x) + self.alpha * self.d
    }

    fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::dims("state", self.n(), x.len()));
        }
        Ok(())
    }
}

pub fn build_filter_data(
    plant: &Plant,
    constraint: &Constraint,
    config: &FilterConfig,
) -> Result<FilterData> {
    let (n, m) = (plant.n(), plant.m());
    if constraint.c().len() != n || config.k().shape() != (m, n) || config.g().shape() != (m, m) {
        return Err(Error::dims(
            "filter inputs",
            format!("n = {n}, m = {m}"),
            format!(
                "c {}, K {:?}, G {:?}",
                constraint.c().len(),
                config.k().shape(),
                config.g().shape()
            ),
        ));
    }
    let r = constraint.relative_degree();
    let chain = build_hocbf_chain(plant, constraint, config.alphas())?;

    let c = constraint.c().clone();
    let a_pow = matrix_power(plant.a(), r - 1);
    let lead_row = c.transpose() * &a_pow * plant.b();
    let g_inv = config
        .g()
        .clone()
        .cholesky()
        .ok_or(Error::WeightNotPositiveDefinite)?
        .inverse();
    let input_direction = &g_inv * lead_row.transpose();
    let theta_sq = (&lead_row * &input_direction)[(0, 0)];
    let scale = lead_row.norm_squared() * g_inv.norm();
    if !(theta_sq.is_finite() && theta_sq > 1e-14 * scale) {
        return Err(Error::ZeroThetaSq(theta_sq));
    }
    let input_channel = plant.b() * &input_direction;

    let v1 = -&input_channel / theta_sq;
    let v2 = (chain.phi_row() - &lead_row * config.k()).transpose();
    let a0 = plant.a() - plant.b() * config.k();
    let a_tilde = &a0 + &v1 * v2.transpose();
    let alpha = chain.alpha_product();
    let b_tilde = &v1 * (alpha * constraint.d());

    Ok(FilterData {
        c,
        d: constraint.d(),
        relative_degree: r,
        k: config.k().clone(),
        lead_row,
        input_direction,
        input_channel,
        theta_sq,
        v1,
        v2,
        a0,
        a_tilde,
        b_tilde,
        alpha,
    })
}

/// Minimizer of `½‖u + Kx‖²_G` subject to the linear CBF condition.
pub fn filtered_control(
    fd: &FilterData,
    config: &FilterConfig,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    fd.check_state(x)?;
    if config.k().shape() != fd.k.shape() {
        return Err(Error::dims(
            "K",
            format!("{:?}", fd.k.shape()),
            format!("{:?}", config.k().shape()),
        ));
    }
    let nominal = -(config.k() * x);
    let eta = fd.eta(x);
    if eta >= 0.0 {
        return Ok(nominal);
    }
    Ok(nominal + &fd.input_direction * (-eta / fd.theta_sq))
}

/// Right-hand side of the piecewise-affine closed loop and the active branch.
/// Points with `η(x) = 0` belong to the nominal branch.
pub fn closed_loop_field(fd: &FilterData, x: &DVector<f64>) -> Result<(DVector<f64>, Mode)> {
    fd.check_state(x)?;
    Ok(field_unchecked(fd, x))
}

pub(crate) fn field_unchecked(fd: &FilterData, x: &DVector<f64>) -> (DVector<f64>, Mode) {
    let eta = fd.eta(x);
    if eta >= 0.0 {
        (&fd.a0 * x, Mode::Nominal)
    } else {
        (&fd.a_tilde * x + &fd.b_tilde, Mode::Filtered)
    }
}

#[derive(Serialize)]
struct FilterDataJson {
    n: usize,
    m: usize,
    relative_degree: usize,
    theta_sq: f64,
    alpha: f64,
    v1: Vec<f64>,
    v2: Vec<f64>,
    #[serde(rename = "A0")]
    a0: Vec<Vec<f64>>,
    #[serde(rename = "A_tilde")]
    a_tilde: Vec<Vec<f64>>,
    b_tilde: Vec<f64>,
    surface_normal: Vec<f64>,
    surface_offset: f64,
    lead_row: Vec<f64>,
    input_direction: Vec<f64>,
}

impl Serialize for FilterData {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FilterDataJson {
            n: self.n(),
            m: self.m(),
            relative_degree: self.relative_degree,
            theta_sq: self.theta_sq,
            alpha: self.alpha,
            v1: self.v1.iter().copied().collect(),
            v2: self.v2.iter().copied().collect(),
            a0: dmatrix_to_rows(&self.a0),
            a_tilde: dmatrix_to_rows(&self.a_tilde),
            b_tilde: self.b_tilde.iter().copied().collect(),
            surface_normal: self.v2.iter().copied().collect(),
            surface_offset: self.alpha * self.d,
            lead_row: self.lead_row.iter().copied().collect(),
            input_direction: self.input_direction.iter().copied().collect(),
        }
        .serialize(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tolerance::Tolerances;

    fn planar() -> (Plant, Constraint, FilterConfig) {
        let tol = Tolerances::default();
        let plant = Plant::new(
            DMatrix::from_row_slice(2, 2, &[0.2, 1.0, -0.5, 0.1]),
            DMatrix::from_row_slice(2, 1, &[0.3, 1.0]),
            &tol,
        )
        .unwrap();
        let cons = Constraint::new(&plant, DVector::from_vec(vec![-0.6, 0.8]), 0.4, &tol).unwrap();
        let k = crate::riccati::lqr_gain(
            plant.a(),
            plant.b(),
            &DMatrix::identity(2, 2),
            &DMatrix::identity(1, 1),
        )
        .unwrap();
        let cfg =
            FilterConfig::new(&plant, &cons, k, DMatrix::identity(1, 1), vec![5.0], &tol).unwrap();
        (plant, cons, cfg)
    }

    #[test]
    fn origin_is_nominal_equilibrium() {
        let (plant, cons, cfg) = planar();
        let fd = build_filter_data(&plant, &cons, &cfg).unwrap();
        let x = DVector::zeros(2);
        let (dx, mode) = closed_loop_field(&fd, &x).unwrap();
        assert_eq!(mode, Mode::Nominal);
        assert_eq!(dx, DVector::zeros(2));
        assert_eq!(filtered_control(&fd, &cfg, &x).unwrap(), DVector::zeros(1));
    }

    #[test]
    fn branches_agree_on_switching_surface() {
        let (plant, cons, cfg) = planar();
        let fd = build_filter_data(&plant, &cons, &cfg).unwrap();
        // Point on η = 0 closest to the origin.
        let v2 = fd.v2().clone();
        let x = -&v2 * (fd.alpha() * fd.d() / v2.norm_squared());
        assert!(fd.eta(&x).abs() < 1e-14);
        let nominal = fd.a0() * &x;
        let filtered = fd.a_tilde() * &x + fd.b_tilde();
        assert!((nominal - filtered).norm() <= 1e-10 * (1.0 + x.norm()));
        let u = filtered_control(&fd, &cfg, &x).unwrap();
        assert_eq!(u, -(cfg.k() * &x));
    }

    #[test]
    fn rank_one_update() {
        let (plant, cons, cfg) = planar();
        let fd = build_filter_data(&plant, &cons, &cfg).unwrap();
        let diff = fd.a_tilde() - fd.a0();
        let sv = diff.singular_values();
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(s[1] <= 1e-12 * s[0]);
    }

    #[test]
    fn single_input_filtered_matrix_is_gain_independent() {
        let (plant, cons, cfg) = planar();
        let fd = build_filter_data(&plant, &cons, &cfg).unwrap();
        let lead = fd.lead_row()[0];
        let chain = build_hocbf_chain(&plant, &cons, cfg.alphas()).unwrap();
        let expected = plant.a() - plant.b() * chain.phi_row() / lead;
        assert!((fd.a_tilde() - &expected).norm() < 1e-12 * expected.norm());

        let k2 = cfg.k() * 1.5;
        let cfg2 = FilterConfig::new(
            &plant,
            &cons,
            k2,
            DMatrix::from_element(1, 1, 3.7),
            vec![5.0],
            &Tolerances::default(),
        )
        .unwrap();
        let fd2 = build_filter_data(&plant, &cons, &cfg2).unwrap();
        assert!((fd2.a_tilde() - fd.a_tilde()).norm() < 1e-12 * expected.norm());
    }

    #[test]
    fn filter_data_serializes_to_json() {
        let (plant, cons, cfg) = planar();
        let fd = build_filter_data(&plant, &cons, &cfg).unwrap();
        let v: serde_json::Value = serde_json::to_value(&fd).unwrap();
        assert_eq!(v["n"], 2);
        assert_eq!(v["A_tilde"].as_array().unwrap().len(), 2);
        assert_eq!(v["surface_offset"].as_f64().unwrap(), 5.0 * 0.4);
    }
}
