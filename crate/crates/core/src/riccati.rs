//! Continuous-time algebraic Riccati equation via the matrix sign function.
//!
//! Solves `AᵀX + XA − XBR⁻¹BᵀX + Q = 0` for the stabilizing solution. The
//! Hamiltonian `H = [A, −BR⁻¹Bᵀ; −Q, −Aᵀ]` is driven to `sign(H)` by the
//! determinant-scaled Newton iteration; the stable invariant subspace then
//! yields `X` from an overdetermined least-squares system.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{is_hurwitz, svd, symmetrize};

const MAX_NEWTON: usize = 200;

pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let m = b.ncols();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::dims(
            "riccati",
            format!("A {n}x{n}, B {n}x{m}, Q {n}x{n}, R {m}x{m}"),
            format!(
                "{:?} {:?} {:?} {:?}",
                a.shape(),
                b.shape(),
                q.shape(),
                r.shape()
            ),
        ));
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Riccati("R is singular".into()))?;
    let s = b * &r_inv * b.transpose();

    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-symmetrize(q)));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let mut z = h;
    let mut converged = false;
    for _ in 0..MAX_NEWTON {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let z_inv = lu.try_inverse().ok_or_else(|| {
            Error::Riccati("Hamiltonian has eigenvalues on the imaginary axis".into())
        })?;
        let c = if det.is_finite() && det != 0.0 {
            det.abs().powf(-1.0 / (2 * n) as f64)
        } else {
            1.0
        };
        let next = (&z * c + z_inv / c) * 0.5;
        let delta = (&next - &z).norm();
        let scale = next.norm();
        z = next;
        if !scale.is_finite() {
            return Err(Error::Riccati("sign iteration diverged".into()));
        }
        if delta <= 1e-13 * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Riccati("sign iteration did not converge".into()));
    }

    // [W12; W22 + I] X = -[W11 + I; W21]
    let eye = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::<f64>::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n))
        .copy_from(&z.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(z.view((n, n), (n, n)) + &eye));
    let mut rhs = DMatrix::<f64>::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(z.view((0, 0), (n, n)) + &eye)));
    rhs.view_mut((n, 0), (n, n))
        .copy_from(&(-z.view((n, 0), (n, n))));

    let x = svd(&lhs, true, true)?
        .solve(&rhs, 1e-13)
        .map_err(|e| Error::Riccati(e.to_string()))?;
    let x = symmetrize(&x);

    let closed = a - &s * &x;
    if !is_hurwitz(&closed, 1e-12)? {
        return Err(Error::Riccati("solution is not stabilizing".into()));
    }
    Ok(x)
}

/// LQR gain `K = R⁻¹BᵀX` for the nominal controller `u = −Kx`.
pub fn lqr_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let x = solve_care(a, b, q, r)?;
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Riccati("R is singular".into()))?;
    Ok(r_inv * b.transpose() * x)
}
