use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market_data::AlignedPanel;
use crate::regression::{estimate, model_ladder, CovarianceKind, ModelFit};
use crate::signals::{self, DEFAULT_MIN_COVERAGE};
use crate::stats;

use super::bh::benjamini_hochberg;

/// Augmented model settings shared by every grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTemplate {
    pub horizon: usize,
    pub controls: Vec<String>,
    pub covariance: CovarianceKind,
    /// Cells with fewer usable lagged-signal observations are inactive.
    pub min_coverage: usize,
}

impl Default for GridTemplate {
    fn default() -> Self {
        Self {
            horizon: 5,
            controls: vec!["vix".into(), "dxy_ret".into(), "spx_ret".into()],
            covariance: CovarianceKind::default(),
            min_coverage: DEFAULT_MIN_COVERAGE,
        }
    }
}

/// One signal × asset cell. Inferential fields are `None` for inactive
/// cells.
#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    /// Signal column name.
    pub signal_id: String,
    pub asset_id: String,
    pub n: usize,
    pub coefficient: Option<f64>,
    pub t_stat: Option<f64>,
    pub p_value: Option<f64>,
    pub adj_r2: Option<f64>,
    pub bh_adjusted_p: Option<f64>,
    pub bh_rejected: bool,
}

impl GridResult {
    pub fn is_active(&self) -> bool {
        self.p_value.is_some()
    }
}

fn cell(signal: &str, asset: &str, template: &GridTemplate, panel: &AlignedPanel) -> Result<GridResult> {
    let ladder = model_ladder(asset, template.horizon, &template.controls, signal, template.covariance);
    let spec = ladder.augmented;
    let n = signals::usable_count(panel.column(signal)?, panel.column(&spec.target)?);
    let mut out = GridResult {
        signal_id: signal.to_string(),
        asset_id: asset.to_string(),
        n,
        coefficient: None,
        t_stat: None,
        p_value: None,
        adj_r2: None,
        bh_adjusted_p: None,
        bh_rejected: false,
    };
    if n < template.min_coverage {
        return Ok(out);
    }
    let fit: ModelFit = match estimate(&spec, panel) {
        Ok(f) => f,
        Err(Error::RankDeficient { .. }) | Err(Error::InsufficientData(_)) => return Ok(out),
        Err(e) => return Err(e),
    };
    let term = fit.term(&format!("L1.{signal}")).expect("signal term present");
    out.n = fit.n_obs;
    out.coefficient = Some(term.estimate);
    out.t_stat = Some(term.t_stat);
    out.p_value = Some(term.p_value);
    out.adj_r2 = Some(fit.adj_r2);
    Ok(out)
}

/// Estimates the augmented model for every signal × asset pair (assets
/// outer) and applies Benjamini–Hochberg across the active cells.
pub fn run_grid(
    signals: &[String],
    assets: &[String],
    template: &GridTemplate,
    panel: &AlignedPanel,
    q: f64,
) -> Result<Vec<GridResult>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidInput(format!("FDR level {q} outside (0, 1)")));
    }
    let pairs: Vec<(&String, &String)> = assets.iter().flat_map(|a| signals.iter().map(move |s| (s, a))).collect();
    let mut cells: Vec<GridResult> =
        pairs.par_iter().map(|(s, a)| cell(s, a, template, panel)).collect::<Result<_>>()?;

    let active: Vec<usize> = (0..cells.len()).filter(|&i| cells[i].is_active()).collect();
    if !active.is_empty() {
        let p: Vec<f64> = active.iter().map(|&i| cells[i].p_value.unwrap()).collect();
        let bh = benjamini_hochberg(&p, q)?;
        for (k, &i) in active.iter().enumerate() {
            cells[i].bh_adjusted_p = Some(bh.adjusted[k]);
            cells[i].bh_rejected = bh.rejected[k];
        }
    }
    Ok(cells)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Assets × signals matrix of t-statistics with significance stars; `-`
/// marks inactive cells.
pub fn grid_matrix_csv(results: &[GridResult]) -> String {
    let mut assets: Vec<&str> = Vec::new();
    let mut sigs: Vec<&str> = Vec::new();
    for r in results {
        if !assets.contains(&r.asset_id.as_str()) {
            assets.push(&r.asset_id);
        }
        if !sigs.contains(&r.signal_id.as_str()) {
            sigs.push(&r.signal_id);
        }
    }
    let mut out = format!("asset,{}\n", sigs.join(","));
    for a in &assets {
        out.push_str(a);
        for s in &sigs {
            let c = results.iter().find(|r| r.asset_id == *a && r.signal_id == *s);
            let text = match c.and_then(|c| c.t_stat.zip(c.p_value)) {
                Some((t, p)) => format!("{t:.2}{}", stats::stars(p)),
                None => "-".to_string(),
            };
            out.push(',');
            out.push_str(&text);
        }
        out.push('\n');
    }
    out
}

pub fn grid_long_csv(results: &[GridResult]) -> String {
    let mut out = String::from("signal_id,asset_id,n,coefficient,t_stat,p_value,adj_r2,bh_adjusted_p,bh_rejected\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.signal_id,
            r.asset_id,
            r.n,
            fmt_opt(r.coefficient),
            fmt_opt(r.t_stat),
            fmt_opt(r.p_value),
            fmt_opt(r.adj_r2),
            fmt_opt(r.bh_adjusted_p),
            r.bh_rejected
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{simulate_panel, SyntheticConfig};

    fn fixture() -> (AlignedPanel, Vec<String>, Vec<String>) {
        let cfg = SyntheticConfig {
            assets: vec!["BTC".into(), "ETH".into(), "SOL".into()],
            noise_signals: 3,
            ..Default::default()
        };
        let (mut p, _) = simulate_panel(&cfg).unwrap();
        // A thinly traded series below the coverage threshold.
        let thin: Vec<Option<f64>> = (0..p.n_rows()).map(|t| (t % 10 == 0).then_some(0.01 * t as f64)).collect();
        p.push_column("THIN.dir", thin).unwrap();
        let sigs = ["KXFED.dir", "N1.dir", "N2.dir", "N3.dir", "THIN.dir"].map(String::from).to_vec();
        let assets = ["BTC", "ETH", "SOL"].map(String::from).to_vec();
        (p, sigs, assets)
    }

    #[test]
    fn inactive_cells_and_order_invariance() {
        let (p, sigs, assets) = fixture();
        let t = GridTemplate::default();
        let a = run_grid(&sigs, &assets, &t, &p, 0.05).unwrap();
        assert_eq!(a.len(), 15);
        assert_eq!(a.iter().filter(|r| r.is_active()).count(), 12);
        assert!(a.iter().filter(|r| r.signal_id == "THIN.dir").all(|r| !r.is_active() && !r.bh_rejected));

        let mut rs = sigs.clone();
        rs.reverse();
        let mut ra = assets.clone();
        ra.rotate_left(1);
        let b = run_grid(&rs, &ra, &t, &p, 0.05).unwrap();
        let key = |r: &GridResult| (r.asset_id.clone(), r.signal_id.clone());
        let mut a_sorted = a.clone();
        a_sorted.sort_by_key(key);
        let mut b_sorted = b;
        b_sorted.sort_by_key(key);
        assert_eq!(a_sorted, b_sorted);

        let m = grid_matrix_csv(&a);
        assert!(m.starts_with("asset,KXFED.dir,N1.dir"));
        assert_eq!(m.lines().count(), 4);
        assert!(m.lines().nth(1).unwrap().ends_with(",-"));
        assert_eq!(grid_long_csv(&a).lines().count(), 16);
    }

    #[test]
    fn single_cell_matches_raw_threshold() {
        let (p, _, _) = fixture();
        let r = run_grid(&["KXFED.dir".into()], &["BTC".into()], &GridTemplate::default(), &p, 0.05).unwrap();
        assert_eq!(r[0].bh_rejected, r[0].p_value.unwrap() <= 0.05);
        assert_eq!(r[0].bh_adjusted_p, r[0].p_value);
        assert!(run_grid(&[], &[], &GridTemplate::default(), &p, 0.0).is_err());
    }
}
