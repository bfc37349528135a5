/// Numerical thresholds used across the toolkit.
///
/// All values are relative: each test multiplies them by a problem scale
/// (norm products, matrix norms) at the point of use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// `‖cᵀAⁱB‖ ≤ tol·‖c‖‖A‖ⁱ‖B‖` counts as zero.
    pub relative_degree: f64,
    /// PBH singular-value threshold relative to `‖[A − λI, B]‖`.
    pub stabilizability: f64,
    /// Hurwitz means `max Re λ < −tol·‖M‖`.
    pub hurwitz: f64,
    /// Greedy eigenvalue matching radius `tol·(1 + ‖Ã‖)`.
    pub eigen_match: f64,
    /// Positive-real test `Re λ > tol·‖Ã‖`, `|Im λ| ≤ tol·(1 + |λ|)`.
    pub positive_real: f64,
    /// `|ξ| ≤ tol·‖c‖‖A₀⁻¹BG⁻¹Bᵀ(Aᵀ)^{r−1}c‖` counts as zero.
    pub xi: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            relative_degree: 1e-9,
            stabilizability: 1e-9,
            hurwitz: 1e-9,
            eigen_match: 1e-6,
            positive_real: 1e-9,
            xi: 1e-9,
        }
    }
}

impl Tolerances {
    /// Overrides every 1e−9-class threshold with `tol`, keeping the looser
    /// eigenvalue-matching radius.
    pub fn with_base(tol: f64) -> Self {
        Tolerances {
            relative_degree: tol,
            stabilizability: tol,
            hurwitz: tol,
            positive_real: tol,
            xi: tol,
            ..Default::default()
        }
    }
}
