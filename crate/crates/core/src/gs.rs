//! Group-MCP selection of candidate change points on the differenced sequence.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fpca::BasisSystem;
use crate::linalg::{cholesky_lower, thin_qr, triangular_rank};
use crate::sequence::{ChangePointSet, DifferencedSequence};

/// MCP value at `u`.
pub fn mcp_penalty(u: f64, lambda: f64, gamma: f64) -> Result<f64> {
    if u < 0.0 {
        return Err(Error::NegativeArgument(u));
    }
    Ok(if u <= gamma * lambda {
        lambda * u - u * u / (2.0 * gamma)
    } else {
        0.5 * gamma * lambda * lambda
    })
}

/// MCP derivative `(lambda - u/gamma)_+` for `u >= 0`.
pub fn mcp_derivative(u: f64, lambda: f64, gamma: f64) -> f64 {
    (lambda - u / gamma).max(0.0)
}

/// Penalty matrix `eta G'' + lambda G + jitter I` and its upper Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    pub r: DMatrix<f64>,
    /// Upper-triangular L with `L^T L = r`.
    pub chol_upper: DMatrix<f64>,
    pub lambda: f64,
    pub eta: f64,
    pub jitter: f64,
}

pub fn build_penalty_matrix(basis: &BasisSystem, lambda: f64, eta: f64) -> Result<PenaltyMatrix> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be nonnegative, got {eta}")));
    }
    let g = basis.weighted_gram(basis.basis_matrix());
    let g2 = basis.weighted_gram(basis.second_deriv_matrix());
    let base = g2 * eta + g * lambda;
    let k = basis.k();
    let unit = base.trace() / k as f64 * 1e-12;
    let jitters = std::iter::once(0.0).chain((0..6).map(|i| unit * 10f64.powi(i)));
    for jitter in jitters {
        let r = &base + DMatrix::<f64>::identity(k, k) * jitter;
        if let Some(l) = cholesky_lower(&r) {
            return Ok(PenaltyMatrix {
                r,
                chol_upper: l.transpose(),
                lambda,
                eta,
                jitter,
            });
        }
    }
    Err(Error::CholeskyFailure)
}

/// Minimizer of `0.5 |z - theta|^2 + mcp(|theta|)` for orthonormal groups.
pub fn group_firm_threshold(z: &DVector<f64>, lambda: f64, gamma: f64) -> DVector<f64> {
    let norm = z.norm();
    if norm <= lambda {
        DVector::zeros(z.len())
    } else if norm <= gamma * lambda {
        z * (gamma / (gamma - 1.0) * (1.0 - lambda / norm))
    } else {
        z.clone()
    }
}

/// Per-time coefficients from the GS stage.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientBlocks {
    /// T x K transformed coefficients.
    pub alpha: DMatrix<f64>,
    /// T x K original coefficients `L^{-1} alpha_t`.
    pub a: DMatrix<f64>,
    /// Euclidean norms of the rows of `alpha`.
    pub group_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GsResult {
    pub blocks: CoefficientBlocks,
    pub candidates: ChangePointSet,
    pub objective: f64,
    pub lambda: f64,
    pub eta: f64,
    pub gamma: f64,
    pub penalty: PenaltyMatrix,
}

/// Orthonormal coordinates of the group design for a given penalty matrix.
struct GroupDesign {
    /// d x K design `b^T L^{-1}`.
    x: DMatrix<f64>,
    /// Orthonormal basis of the column space of `x`.
    q: DMatrix<f64>,
    /// Upper factor with `x = q r_x`.
    r_x: DMatrix<f64>,
}

fn group_design(basis: &BasisSystem, penalty: &PenaltyMatrix) -> Result<GroupDesign> {
    let k = basis.k();
    if basis.d() < k {
        return Err(Error::SingularGroupGram);
    }
    let l_inv = penalty
        .chol_upper
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(Error::CholeskyFailure)?;
    let x = basis.basis_matrix().transpose() * l_inv;
    let (q, r_x) = thin_qr(&x);
    if triangular_rank(&r_x, 1e-12) < k {
        return Err(Error::SingularGroupGram);
    }
    Ok(GroupDesign { x, q, r_x })
}

/// Fits the group-MCP problem on a differenced sequence.
pub fn gs_fit(
    dseq: &DifferencedSequence,
    basis: &BasisSystem,
    lambda: f64,
    eta: f64,
    gamma: f64,
) -> Result<GsResult> {
    gs_fit_values(dseq.values(), basis, lambda, eta, gamma)
}

/// [`gs_fit`] on a raw T x d matrix of differenced curves.
pub fn gs_fit_values(
    y: &DMatrix<f64>,
    basis: &BasisSystem,
    lambda: f64,
    eta: f64,
    gamma: f64,
) -> Result<GsResult> {
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must exceed 1, got {gamma}")));
    }
    if y.ncols() != basis.d() {
        return Err(Error::GridMismatch {
            grid: basis.d(),
            columns: y.ncols(),
        });
    }
    let penalty = build_penalty_matrix(basis, lambda, eta)?;
    let design = group_design(basis, &penalty)?;
    let (t_len, k) = (y.nrows(), basis.k());
    let mut alpha = DMatrix::zeros(t_len, k);
    let mut a = DMatrix::zeros(t_len, k);
    let mut group_norms = vec![0.0; t_len];
    let mut objective = 0.0;
    let mut candidates = Vec::new();
    for t in 0..t_len {
        let yt = y.row(t).transpose();
        let z = design.q.transpose() * &yt;
        let theta = if t == 0 { z.clone() } else { group_firm_threshold(&z, lambda, gamma) };
        let resid = &yt - &design.q * &theta;
        objective += 0.5 * resid.norm_squared();
        if t > 0 {
            objective += mcp_penalty(theta.norm(), lambda, gamma)?;
        }
        if theta.iter().all(|&v| v == 0.0) {
            continue;
        }
        let alpha_t = design
            .r_x
            .solve_upper_triangular(&theta)
            .ok_or(Error::SingularGroupGram)?;
        let a_t = penalty
            .chol_upper
            .solve_upper_triangular(&alpha_t)
            .ok_or(Error::CholeskyFailure)?;
        group_norms[t] = alpha_t.norm();
        alpha.set_row(t, &alpha_t.transpose());
        a.set_row(t, &a_t.transpose());
        if t > 0 {
            candidates.push(t + 1);
        }
    }
    Ok(GsResult {
        blocks: CoefficientBlocks {
            alpha,
            a,
            group_norms,
        },
        candidates: ChangePointSet::new(candidates)?,
        objective,
        lambda,
        eta,
        gamma,
        penalty,
    })
}

/// Objective `0.5 sum |y_t - X alpha_t|^2 + sum_{t>=2} mcp(|X alpha_t|)` at arbitrary coefficients.
pub fn gs_objective(y: &DMatrix<f64>, basis: &BasisSystem, fit: &GsResult, alpha: &DMatrix<f64>) -> Result<f64> {
    let design = group_design(basis, &fit.penalty)?;
    let mut total = 0.0;
    for t in 0..y.nrows() {
        let fitted = &design.x * alpha.row(t).transpose();
        total += 0.5 * (y.row(t).transpose() - &fitted).norm_squared();
        if t > 0 {
            total += mcp_penalty(fitted.norm(), fit.lambda, fit.gamma)?;
        }
    }
    Ok(total)
}

/// Norms of the unpenalized group fits `|Q^T y_t|`; they do not depend on lambda or eta.
pub fn group_ls_norms(y: &DMatrix<f64>, basis: &BasisSystem) -> Result<Vec<f64>> {
    if y.ncols() != basis.d() {
        return Err(Error::GridMismatch {
            grid: basis.d(),
            columns: y.ncols(),
        });
    }
    let (q, r) = thin_qr(&basis.basis_matrix().transpose());
    if triangular_rank(&r, 1e-12) < basis.k() {
        return Err(Error::SingularGroupGram);
    }
    let qt = q.transpose();
    Ok((0..y.nrows()).map(|t| (&qt * y.row(t).transpose()).norm()).collect())
}

/// Stationarity diagnostics for a fitted solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// Largest gradient norm over nonzero penalized groups (and the free first group).
    pub max_gradient_norm: f64,
    /// Largest `|Q^T y_t| - lambda` over zero groups; nonpositive when the zero blocks are optimal.
    pub max_zero_group_excess: f64,
}

impl KktReport {
    pub fn passes(&self) -> bool {
        self.max_gradient_norm < 1e-6 && self.max_zero_group_excess <= 1e-8
    }
}

/// Evaluates the first-order conditions of a [`GsResult`] in alpha coordinates.
pub fn kkt_check(y: &DMatrix<f64>, basis: &BasisSystem, fit: &GsResult) -> Result<KktReport> {
    let design = group_design(basis, &fit.penalty)?;
    let xt = design.x.transpose();
    let xtx = &xt * &design.x;
    let ls = group_ls_norms(y, basis)?;
    let mut max_gradient_norm: f64 = 0.0;
    let mut max_zero_group_excess = f64::NEG_INFINITY;
    for t in 0..y.nrows() {
        let alpha_t = fit.blocks.alpha.row(t).transpose();
        let zero = alpha_t.iter().all(|&v| v == 0.0);
        if zero && t > 0 {
            max_zero_group_excess = max_zero_group_excess.max(ls[t] - fit.lambda);
            continue;
        }
        let fitted = &design.x * &alpha_t;
        let mut grad = -(&xt * (y.row(t).transpose() - &fitted));
        if t > 0 {
            let u = fitted.norm();
            grad += &xtx * &alpha_t * (mcp_derivative(u, fit.lambda, fit.gamma) / u);
        }
        max_gradient_norm = max_gradient_norm.max(grad.norm());
    }
    Ok(KktReport {
        max_gradient_norm,
        max_zero_group_excess,
    })
}
