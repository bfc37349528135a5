//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Complex, ComplexField, DMatrix, DVector, Dyn, Schur, SymmetricEigen, SVD};

use crate::error::{Error, Result};

pub type Complex64 = Complex<f64>;

pub fn matrix_power(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..k {
        out = &out * a;
    }
    out
}

/// Deflation thresholds, in units of `ε`, tried in turn by the iterative
/// decompositions.
const THRESHOLD_LADDER: [f64; 5] = [1.0, 16.0, 64.0, 256.0, 1024.0];

fn iteration_budget(rows: usize, cols: usize) -> usize {
    1000 * rows.max(cols).max(10)
}

/// Eigenvalues of a real square matrix through the real Schur form.
///
/// Eigenvalues coming from 1x1 diagonal blocks have an imaginary part of
/// exactly zero. Stalled QR iterations are retried with a looser
/// deflation threshold, up to `1024ε`.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenSolverFailure);
    }
    let max_iter = iteration_budget(a.nrows(), a.ncols());
    let schur = THRESHOLD_LADDER
        .iter()
        .find_map(|k| Schur::try_new(a.clone(), k * f64::EPSILON, max_iter))
        .ok_or(Error::EigenSolverFailure)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Hurwitz test with the relative margin `max Re λ < -tol·‖A‖`.
pub fn is_hurwitz(a: &DMatrix<f64>, tol: f64) -> Result<bool> {
    Ok(spectral_abscissa(a)? < -tol * a.norm())
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `a`, with a bounded iteration count.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenSolverFailure);
    }
    let max_iter = iteration_budget(a.nrows(), a.ncols());
    THRESHOLD_LADDER
        .iter()
        .find_map(|k| SymmetricEigen::try_new(symmetrize(a), k * f64::EPSILON, max_iter))
        .map(|e| e.eigenvalues)
        .ok_or(Error::EigenSolverFailure)
}

pub fn sym_max_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    Ok(sym_eigenvalues(a)?.max())
}

pub fn sym_min_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    Ok(sym_eigenvalues(a)?.min())
}

/// SVD with a bounded iteration count; non-finite input is rejected.
pub fn svd<T: ComplexField<RealField = f64>>(
    m: &DMatrix<T>,
    u: bool,
    v: bool,
) -> Result<SVD<T, Dyn, Dyn>> {
    if m.iter().any(|z| !z.clone().is_finite()) {
        return Err(Error::SvdFailure);
    }
    let max_iter = iteration_budget(m.nrows(), m.ncols());
    THRESHOLD_LADDER
        .iter()
        .find_map(|k| SVD::try_new(m.clone(), u, v, k * f64::EPSILON, max_iter))
        .ok_or(Error::SvdFailure)
}

pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    a.is_square() && (a - a.transpose()).norm() <= tol * (1.0 + a.norm())
}

/// Orthonormal basis (as columns) of the numerical null space of `m`.
///
/// Singular values below `rel_tol·σ_max` count as zero. Wide matrices are
/// padded with zero rows so that the thin SVD returns a full set of right
/// singular vectors.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = svd(&padded, false, true)?;
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.max();
    let thresh = rel_tol * smax.max(f64::MIN_POSITIVE);
    let idx: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= thresh)
        .collect();
    let mut basis = DMatrix::zeros(cols, idx.len());
    for (j, &i) in idx.iter().enumerate() {
        basis.set_column(j, &v_t.row(i).transpose());
    }
    Ok(basis)
}

/// Right singular vector of the smallest singular value of a square matrix.
pub fn smallest_singular_vector(m: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let svd = svd(m, false, true)?;
    let v_t = svd.v_t.expect("requested V^T");
    let (i, s) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc },
        );
    Ok((s, v_t.row(i).transpose()))
}

/// Solves `A X + X Aᵀ + Q = 0` through the Kronecker form.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || q.shape() != (n, n) {
        return Err(Error::dims(
            "lyapunov",
            format!("{n}x{n}"),
            format!("{:?}", q.shape()),
        ));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let op = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Consistency("Lyapunov operator is singular".into()))?;
    Ok(symmetrize(&DMatrix::from_column_slice(
        n,
        n,
        sol.as_slice(),
    )))
}

/// PBH test. Returns the first eigenvalue with nonnegative real part at which
/// `[A − λI, B]` loses rank, or `None` when the pair is stabilizable.
pub fn uncontrollable_unstable_mode(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    tol: f64,
) -> Result<Option<Complex64>> {
    let n = a.nrows();
    let m = b.ncols();
    for lambda in eigenvalues(a)? {
        if lambda.re < -tol * a.norm() {
            continue;
        }
        let mut pencil = DMatrix::<Complex64>::zeros(n, n + m);
        for i in 0..n {
            for j in 0..n {
                pencil[(i, j)] = Complex::new(a[(i, j)], 0.0);
            }
            pencil[(i, i)] -= lambda;
            for j in 0..m {
                pencil[(i, n + j)] = Complex::new(b[(i, j)], 0.0);
            }
        }
        let scale = pencil.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let sv = svd(&pencil, false, false)?.singular_values;
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if sv.len() < n || smin <= tol * scale {
            return Ok(Some(lambda));
        }
    }
    Ok(None)
}

pub fn dmatrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::InvalidInput("matrix has no rows".into()));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(Error::InvalidInput("matrix has no columns".into()));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::dims("matrix row length", ncols, bad.len()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix entries must be finite".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn dmatrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}
