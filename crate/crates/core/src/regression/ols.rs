use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Least-squares fit of `y` on the columns of `x`. `x` is expected to carry
/// its own constant column.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    pub fitted: DVector<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    /// `(XᵀX)⁻¹`
    pub xtx_inv: DMatrix<f64>,
}

const RANK_TOL: f64 = 1e-10;

/// Householder QR of `x`, returning `(Q_thin, R)` after a rank check on the
/// diagonal of `R`.
fn qr_checked(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, k) = x.shape();
    if n <= k {
        return Err(Error::InsufficientData(format!("{n} observations for {k} parameters")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let diag_max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let rank = (0..k).filter(|&i| r[(i, i)].abs() > RANK_TOL * diag_max.max(f64::MIN_POSITIVE)).count();
    if rank < k || diag_max == 0.0 {
        return Err(Error::RankDeficient { rank, cols: k });
    }
    Ok((qr.q(), r))
}

/// `(XᵀX)⁻¹` computed from the QR factor, `R⁻¹ R⁻ᵀ`.
pub fn xtx_inverse(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (_, r) = qr_checked(x)?;
    Ok(inverse_from_r(&r))
}

fn inverse_from_r(r: &DMatrix<f64>) -> DMatrix<f64> {
    let k = r.nrows();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .expect("R has a nonzero diagonal after the rank check");
    let m = &r_inv * r_inv.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidInput(format!("{} design rows but {} targets", x.nrows(), y.len())));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in regression data".into()));
    }
    let (q, r) = qr_checked(x)?;
    let qty = q.transpose() * y;
    let coefficients = r
        .solve_upper_triangular(&qty)
        .expect("R has a nonzero diagonal after the rank check");
    let fitted = x * &coefficients;
    let residuals = y - &fitted;
    let (n, k) = x.shape();
    let ybar = y.mean();
    let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { 0.0 };
    let adj_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n - k) as f64;
    Ok(OlsFit { coefficients, residuals, fitted, r2, adj_r2, xtx_inv: inverse_from_r(&r) })
}
