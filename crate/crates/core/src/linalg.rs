//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted descending.
///
/// Column k of the returned matrix is the eigenvector for eigenvalue k.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Lower Cholesky factor, or `None` when the matrix is not numerically positive definite.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let c = nalgebra::Cholesky::new(symmetrize(m))?;
    let l = c.l();
    l.diagonal().iter().all(|&x| x.is_finite() && x > 0.0).then_some(l)
}

/// Thin QR of a tall matrix: `m = q * r` with orthonormal columns in `q`.
pub fn thin_qr(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = m.clone().qr();
    (qr.q(), qr.r())
}

/// Numerical rank of an upper-triangular factor from its diagonal.
pub fn triangular_rank(r: &DMatrix<f64>, rel_tol: f64) -> usize {
    let diag: Vec<f64> = r.diagonal().iter().map(|x| x.abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    diag.iter().filter(|&&x| x > rel_tol * max).count()
}

/// Solves `r x = b` for upper-triangular `r`.
pub fn solve_upper(r: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    r.solve_upper_triangular(b).ok_or(Error::SingularGroupGram)
}

/// Inverse of a lower-triangular matrix.
pub fn invert_lower(l: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = l.nrows();
    l.solve_lower_triangular(&DMatrix::identity(n, n))
}

/// Least-squares fit of `y` on the columns of `x`.
///
/// Returns the coefficients and the residual sum of squares. Fails with
/// `RankDeficientDesign` when `x` does not have full column rank.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let p = x.ncols();
    if p == 0 {
        return Ok((DVector::zeros(0), y.norm_squared()));
    }
    if x.nrows() < p {
        return Err(Error::RankDeficientDesign);
    }
    let (q, r) = thin_qr(x);
    if triangular_rank(&r, 1e-10) < p {
        return Err(Error::RankDeficientDesign);
    }
    let qty = q.transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficientDesign)?;
    let resid = y - x * &beta;
    Ok((beta, resid.norm_squared()))
}
