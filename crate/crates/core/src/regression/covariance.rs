//! Sandwich covariance estimators `(XᵀX)⁻¹ M (XᵀX)⁻¹`.
//!
//! The Newey–West meat is `Γ₀ + Σ_{ℓ=1..L} w_ℓ (Γ_ℓ + Γ_ℓᵀ)` with
//! `Γ_ℓ = Σ_t e_t e_{t−ℓ} x_t x_{t−ℓ}ᵀ` and Bartlett weights
//! `w_ℓ = 1 − ℓ / (L + 1)`. No prewhitening.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::ols::xtx_inverse;

fn scores(x: &DMatrix<f64>, residuals: &DVector<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != residuals.len() {
        return Err(Error::InvalidInput(format!(
            "{} design rows but {} residuals",
            x.nrows(),
            residuals.len()
        )));
    }
    let mut s = x.clone();
    for (mut row, e) in s.row_iter_mut().zip(residuals.iter()) {
        row *= *e;
    }
    Ok(s)
}

fn sandwich(bread: &DMatrix<f64>, meat: &DMatrix<f64>) -> DMatrix<f64> {
    let c = bread * meat * bread;
    (&c + c.transpose()) * 0.5
}

/// White heteroskedasticity-robust covariance, no small-sample scaling.
pub fn hc0_covariance(x: &DMatrix<f64>, residuals: &DVector<f64>) -> Result<DMatrix<f64>> {
    let bread = xtx_inverse(x)?;
    let s = scores(x, residuals)?;
    Ok(sandwich(&bread, &(s.transpose() * &s)))
}

/// Newey–West with Bartlett weights. With `small_sample` the result is
/// scaled by `n / (n − k)`.
pub fn newey_west(
    x: &DMatrix<f64>,
    residuals: &DVector<f64>,
    lags: usize,
    small_sample: bool,
) -> Result<DMatrix<f64>> {
    let (n, k) = x.shape();
    if lags >= n {
        return Err(Error::InvalidInput(format!("HAC lags {lags} must be below the sample size {n}")));
    }
    let bread = xtx_inverse(x)?;
    let s = scores(x, residuals)?;
    let mut meat = s.transpose() * &s;
    for l in 1..=lags {
        let w = 1.0 - l as f64 / (lags as f64 + 1.0);
        let gamma = s.rows(l, n - l).transpose() * s.rows(0, n - l);
        meat += (&gamma + gamma.transpose()) * w;
    }
    let mut cov = sandwich(&bread, &meat);
    if small_sample {
        cov *= n as f64 / (n - k) as f64;
    }
    Ok(cov)
}

/// Newey–West with the small-sample correction applied.
pub fn hac_covariance(x: &DMatrix<f64>, residuals: &DVector<f64>, lags: usize) -> Result<DMatrix<f64>> {
    newey_west(x, residuals, lags, true)
}

/// Leverages `h_i = x_iᵀ (XᵀX)⁻¹ x_i`.
pub fn leverages(x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let bread = xtx_inverse(x)?;
    Ok(x.row_iter().map(|row| (row * &bread).dot(&row)).collect())
}

/// HC3: squared residuals inflated by `(1 − h_i)⁻²`.
pub fn hc3_covariance(x: &DMatrix<f64>, residuals: &DVector<f64>) -> Result<DMatrix<f64>> {
    let bread = xtx_inverse(x)?;
    let h = leverages(x)?;
    let mut adj = residuals.clone();
    for (i, (e, hi)) in adj.iter_mut().zip(&h).enumerate() {
        if *hi >= 1.0 - 1e-10 {
            return Err(Error::UnitLeverage { row: i, leverage: *hi });
        }
        *e /= 1.0 - hi;
    }
    let s = scores(x, &adj)?;
    Ok(sandwich(&bread, &(s.transpose() * &s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::ols::ols_fit;

    fn design(n: usize) -> (DMatrix<f64>, DVector<f64>) {
        let x = DMatrix::from_fn(n, 3, |i, j| match j {
            0 => 1.0,
            1 => ((i * 37) % 11) as f64 / 11.0,
            _ => ((i * 17 + 3) % 7) as f64 - 3.0,
        });
        let y = DVector::from_fn(n, |i, _| ((i * 13) % 5) as f64 * 0.3 + x[(i, 1)] - 0.2 * x[(i, 2)]);
        (x, y)
    }

    #[test]
    fn zero_lags_is_hc0() {
        let (x, y) = design(30);
        let fit = ols_fit(&x, &y).unwrap();
        let nw = newey_west(&x, &fit.residuals, 0, false).unwrap();
        let hc0 = hc0_covariance(&x, &fit.residuals).unwrap();
        assert_eq!(nw, hc0);
        let corrected = hac_covariance(&x, &fit.residuals, 0).unwrap();
        let scaled = hc0 * (30.0 / 27.0);
        assert!((corrected - scaled).amax() < 1e-15);
    }

    #[test]
    fn lags_must_be_below_n() {
        let (x, y) = design(10);
        let fit = ols_fit(&x, &y).unwrap();
        assert!(hac_covariance(&x, &fit.residuals, 10).is_err());
    }

    #[test]
    fn hc3_equal_leverage_identity() {
        // Balanced two-group design: every row has leverage k / n.
        let n = 12;
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else if i % 2 == 0 { 1.0 } else { -1.0 });
        let y = DVector::from_fn(n, |i, _| (i as f64 * 0.7).sin());
        let fit = ols_fit(&x, &y).unwrap();
        let h = leverages(&x).unwrap();
        assert!(h.iter().all(|v| (v - 2.0 / 12.0).abs() < 1e-14));
        let hc3 = hc3_covariance(&x, &fit.residuals).unwrap();
        let hc0 = hc0_covariance(&x, &fit.residuals).unwrap();
        let expect = hc0 / (1.0 - 2.0 / 12.0f64).powi(2);
        assert!((hc3 - expect).amax() < 1e-15);
    }

    #[test]
    fn unit_leverage_is_error() {
        // The last row is the only observation with a nonzero dummy.
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else if i == 5 { 1.0 } else { 0.0 });
        let y = DVector::from_fn(6, |i, _| i as f64);
        let fit = ols_fit(&x, &y).unwrap();
        assert!(matches!(hc3_covariance(&x, &fit.residuals), Err(Error::UnitLeverage { row: 5, .. })));
    }
}
