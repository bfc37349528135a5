//! Finite invariant zeros of a single-input single-output system.
//!
//! The Rosenbrock pencil `[A − zI, b; c, d]` is reduced by orthogonal
//! deflation: while the feedthrough `d` vanishes, a Householder reflector
//! maps `c` onto the last coordinate, the last state is forced to zero and
//! its equation becomes the new output `(a21, b2)`. Once `d ≠ 0` the zeros
//! are the eigenvalues of the zero dynamics `A − b c / d`.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, Complex64};

/// Householder reflector `H = I − 2wwᵀ` with `H x = ±‖x‖ e_last`.
fn reflector_to_last(x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let norm = x.norm();
    let mut w = x.clone();
    let last = x[n - 1];
    let sign = if last >= 0.0 { 1.0 } else { -1.0 };
    w[n - 1] += sign * norm;
    let wn = w.norm();
    if wn == 0.0 {
        return DMatrix::identity(n, n);
    }
    w /= wn;
    DMatrix::identity(n, n) - &w * w.transpose() * 2.0
}

/// One deflation step: returns the reduced `(A, b, c)` and the new
/// feedthrough.
fn deflate(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &RowDVector<f64>,
) -> (DMatrix<f64>, DVector<f64>, RowDVector<f64>, f64) {
    let k = a.nrows();
    let h = reflector_to_last(&c.transpose());
    let a_t = &h * a * &h;
    let b_t = &h * b;
    let m = k - 1;
    let next_c = RowDVector::from_iterator(m, a_t.view((m, 0), (1, m)).iter().copied());
    (
        a_t.view((0, 0), (m, m)).into_owned(),
        b_t.rows(0, m).into_owned(),
        next_c,
        b_t[m],
    )
}

fn check_shapes(a: &DMatrix<f64>, b: &DVector<f64>, c: &RowDVector<f64>) -> Result<()> {
    let n = a.nrows();
    if !a.is_square() || b.len() != n || c.len() != n {
        return Err(Error::dims(
            "SISO system",
            format!("A {n}x{n}, b {n}, c {n}"),
            format!("A {:?}, b {}, c {}", a.shape(), b.len(), c.len()),
        ));
    }
    Ok(())
}

/// Invariant zeros of `(A, b, c, d = 0)`.
///
/// `tol` is the relative threshold deciding when the current feedthrough is
/// nonzero: after a reflection built from an output row of norm `‖c‖`, the
/// feedthrough counts as nonzero when `|d| > tol·‖b‖·max(1, ‖A‖/‖c‖)`.
/// Fails with `PencilSolverFailure` when the transfer function vanishes
/// identically.
pub fn siso_invariant_zeros(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &RowDVector<f64>,
    tol: f64,
) -> Result<Vec<Complex64>> {
    check_shapes(a, b, c)?;
    let a_scale = a.norm().max(f64::MIN_POSITIVE);
    let (mut a, mut b, mut c) = (a.clone(), b.clone(), c.clone());
    loop {
        let k = a.nrows();
        let c_norm = c.norm();
        if k == 0 || c_norm <= tol * a_scale * b.norm().max(f64::MIN_POSITIVE) {
            return Err(Error::PencilSolverFailure);
        }
        let (na, nb, nc, d) = deflate(&a, &b, &c);
        if d.abs() > tol * b.norm() * (a_scale / c_norm).max(1.0) {
            return zero_dynamics(&na, &nb, &nc, d);
        }
        (a, b, c) = (na, nb, nc);
    }
}

/// Invariant zeros of `(A, b, c, d = 0)` when the relative degree `r` is
/// known: exactly `r` deflations, then the zero dynamics. Fails with
/// `PencilSolverFailure` if the last feedthrough is zero.
pub fn siso_invariant_zeros_with_degree(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &RowDVector<f64>,
    r: usize,
) -> Result<Vec<Complex64>> {
    check_shapes(a, b, c)?;
    if r == 0 || r > a.nrows() {
        return Err(Error::InvalidInput(format!(
            "relative degree {r} out of range 1..={}",
            a.nrows()
        )));
    }
    let (mut a, mut b, mut c) = (a.clone(), b.clone(), c.clone());
    let mut d = 0.0;
    for _ in 0..r {
        if c.norm() == 0.0 {
            return Err(Error::PencilSolverFailure);
        }
        (a, b, c, d) = deflate(&a, &b, &c);
    }
    if d == 0.0 || !d.is_finite() {
        return Err(Error::PencilSolverFailure);
    }
    zero_dynamics(&a, &b, &c, d)
}

fn zero_dynamics(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &RowDVector<f64>,
    d: f64,
) -> Result<Vec<Complex64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    eigenvalues(&(a - b * c / d))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_re(mut z: Vec<Complex64>) -> Vec<f64> {
        z.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        z.iter().map(|z| z.re).collect()
    }

    #[test]
    fn controllable_canonical_form() {
        // H(s) = (s + 2)(s − 3) / (s³ + 6s² + 11s + 6).
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -6.0, -11.0, -6.0]);
        let b = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        // numerator s² − s − 6
        let c = RowDVector::from_vec(vec![-6.0, -1.0, 1.0]);
        let z = sorted_re(siso_invariant_zeros(&a, &b, &c, 1e-9).unwrap());
        assert_eq!(z.len(), 2);
        assert!((z[0] + 2.0).abs() < 1e-10 && (z[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn full_relative_degree_has_no_zeros() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        let c = RowDVector::from_vec(vec![1.0, 0.0]);
        assert!(siso_invariant_zeros(&a, &b, &c, 1e-9).unwrap().is_empty());
    }

    #[test]
    fn uncontrollable_mode_is_a_zero() {
        // Second state is decoupled from the input but seen by the output.
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -4.0]);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        let c = RowDVector::from_vec(vec![1.0, 1.0]);
        let z = sorted_re(siso_invariant_zeros(&a, &b, &c, 1e-9).unwrap());
        assert_eq!(z.len(), 1);
        assert!((z[0] + 4.0).abs() < 1e-10);
    }

    #[test]
    fn identically_zero_transfer_fails() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        let c = RowDVector::from_vec(vec![0.0, 1.0]);
        assert_eq!(
            siso_invariant_zeros(&a, &b, &c, 1e-9),
            Err(Error::PencilSolverFailure)
        );
    }

    #[test]
    fn known_degree_matches_threshold_version() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -6.0, -11.0, -6.0]);
        let b = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let c = RowDVector::from_vec(vec![-6.0, -1.0, 1.0]);
        let z = sorted_re(siso_invariant_zeros_with_degree(&a, &b, &c, 1).unwrap());
        assert!((z[0] + 2.0).abs() < 1e-10 && (z[1] - 3.0).abs() < 1e-10);
        let c = RowDVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(siso_invariant_zeros_with_degree(&a, &b, &c, 3)
            .unwrap()
            .is_empty());
        assert!(siso_invariant_zeros_with_degree(&a, &b, &c, 4).is_err());
    }

    #[test]
    fn badly_scaled_chain_keeps_its_degree() {
        // Integrator chain with a large feedback row: relative degree 3, no zeros.
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -4e3, -9e3, -2e3]);
        let b = DVector::from_vec(vec![0.0, 0.0, 1e-5]);
        let c = RowDVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(siso_invariant_zeros(&a, &b, &c, 1e-9).unwrap().is_empty());
        assert!(siso_invariant_zeros_with_degree(&a, &b, &c, 3)
            .unwrap()
            .is_empty());
    }
}
