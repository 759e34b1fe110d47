use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::market_data::AlignedPanel;
use crate::regression::{estimate, ols_fit, ModelFit, ModelSpec, Regressor};

#[derive(Debug, Clone, PartialEq)]
pub struct Orthogonalized {
    /// Residual on rows where the signal and every control are present.
    pub residual: Vec<Option<f64>>,
    /// R² of the projection.
    pub r2: f64,
    pub n_obs: usize,
}

/// Replaces `signal` with its residual from an OLS projection (with
/// constant) on the contemporaneous `controls`.
pub fn orthogonalize(panel: &AlignedPanel, signal: &str, controls: &[String]) -> Result<Orthogonalized> {
    let s = panel.column(signal)?;
    let cs: Vec<&[Option<f64>]> = controls.iter().map(|c| panel.column(c)).collect::<Result<_>>()?;
    let rows: Vec<usize> = (0..panel.n_rows())
        .filter(|&t| s[t].is_some() && cs.iter().all(|c| c[t].is_some()))
        .collect();
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!("`{signal}` never overlaps its controls")));
    }
    let k = controls.len() + 1;
    let x = DMatrix::from_fn(rows.len(), k, |i, j| if j == 0 { 1.0 } else { cs[j - 1][rows[i]].unwrap() });
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&t| s[t].unwrap()));
    let fit = ols_fit(&x, &y)?;
    let mut residual = vec![None; panel.n_rows()];
    for (i, &t) in rows.iter().enumerate() {
        residual[t] = Some(fit.residuals[i]);
    }
    // A constant signal leaves nothing to explain.
    let r2 = if fit.r2.is_finite() { fit.r2 } else { 0.0 };
    Ok(Orthogonalized { residual, r2, n_obs: rows.len() })
}

/// Models with the signal entering at `t−1` and, as a placebo, at `t+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadLag {
    pub lag: ModelFit,
    pub lead: ModelFit,
}

pub fn lead_lag_test(spec: &ModelSpec, signal: &str, panel: &AlignedPanel) -> Result<LeadLag> {
    let lag = estimate(&spec.clone().with(Regressor::lagged(signal, 1)), panel)?;
    let lead = estimate(&spec.clone().with(Regressor::lagged(signal, -1)), panel)?;
    Ok(LeadLag { lag, lead })
}

/// 1.0 within `half_width` rows of any event row, 0.0 elsewhere.
pub fn window_dummy(n: usize, events: &[usize], half_width: usize) -> Vec<f64> {
    let mut d = vec![0.0; n];
    for &e in events.iter().filter(|&&e| e < n) {
        for v in &mut d[e.saturating_sub(half_width)..=(e + half_width).min(n - 1)] {
            *v = 1.0;
        }
    }
    d
}

/// Release-window dummy on panel dates. An event on a non-panel date maps to
/// the next panel date; events after the last panel date are ignored.
pub fn release_window_dummy(dates: &[NaiveDate], events: &[NaiveDate], half_width: usize) -> Vec<Option<f64>> {
    let rows: Vec<usize> = events
        .iter()
        .map(|e| dates.partition_point(|d| d < e))
        .filter(|&r| r < dates.len())
        .collect();
    window_dummy(dates.len(), &rows, half_width).into_iter().map(Some).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{simulate_panel, SyntheticConfig};

    fn panel_with(cols: &[(&str, Vec<f64>)]) -> AlignedPanel {
        let n = cols[0].1.len();
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let mut p = AlignedPanel::new((0..n as u64).map(|i| start + chrono::Days::new(i)).collect()).unwrap();
        for (name, v) in cols {
            p.push_column(*name, v.iter().copied().map(Some).collect()).unwrap();
        }
        p
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn residual_is_uncorrelated_and_idempotent() {
        let (p, _) = simulate_panel(&SyntheticConfig::default()).unwrap();
        let ctrls = vec!["ff_change".to_string(), "vix".to_string()];
        let o = orthogonalize(&p, "KXFED.dir", &ctrls).unwrap();
        let res: Vec<f64> = o.residual.iter().flatten().copied().collect();
        for c in &ctrls {
            let x: Vec<f64> = p.column(c).unwrap().iter().flatten().copied().collect();
            assert!(corr(&res, &x).abs() < 1e-8);
        }
        let mut q = p.clone();
        q.push_column("resid", o.residual).unwrap();
        assert!(orthogonalize(&q, "resid", &ctrls).unwrap().r2 < 1e-10);
    }

    #[test]
    fn exact_combination() {
        let a: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).cos()).collect();
        let s: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 1.0 + 2.0 * x - y).collect();
        let p = panel_with(&[("a", a), ("b", b), ("s", s)]);
        let o = orthogonalize(&p, "s", &["a".into(), "b".into()]).unwrap();
        assert!((o.r2 - 1.0).abs() < 1e-12);
        assert!(o.residual.iter().flatten().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn planted_first_stage() {
        let cfg = SyntheticConfig { n_days: 5000, ..Default::default() };
        let (p, _) = simulate_panel(&cfg).unwrap();
        let o = orthogonalize(&p, "KXFED.dir", &["ff_change".into()]).unwrap();
        assert!((o.r2 - 0.023).abs() < 0.01, "r2 = {}", o.r2);
    }

    #[test]
    fn lead_drops_final_row() {
        let n = 40;
        let x: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64).collect();
        let y: Vec<f64> = (0..n).map(|i| ((i * 104729) % 17) as f64).collect();
        let p = panel_with(&[("x", x), ("y", y)]);
        let ll = lead_lag_test(&ModelSpec::new("y"), "x", &p).unwrap();
        assert_eq!(ll.lag.n_obs, n - 1);
        assert_eq!(ll.lead.n_obs, n - 1);
        assert_eq!(*ll.lead.rows.last().unwrap(), n - 2);
        assert!(ll.lead.index("F1.x").is_some());
    }

    #[test]
    fn release_windows() {
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let dates: Vec<NaiveDate> = (0..10u64).map(|i| start + chrono::Days::new(i)).collect();
        let d = release_window_dummy(&dates, &[dates[0], dates[5], start + chrono::Days::new(50)], 1);
        let v: Vec<f64> = d.into_iter().flatten().collect();
        assert_eq!(v, vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(window_dummy(3, &[], 1), vec![0.0; 3]);
    }
}
