use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market_data::AlignedPanel;
use crate::regression::{ols_fit, ModelSpec};
use crate::rng;

/// Redraw limit for a single resample before giving up.
const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapOptions {
    pub block_length: usize,
    pub n_resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self { block_length: 5, n_resamples: 2000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub coefficient: String,
    pub point_estimate: f64,
    /// One refit coefficient per resample, in resample order.
    pub distribution: Vec<f64>,
    /// Share of resamples with `|b* − b̂| ≥ |b̂|`.
    pub p_value: f64,
    pub seed: u64,
    pub block_length: usize,
    /// Rank-deficient resamples that were discarded and redrawn.
    pub redraws: usize,
}

/// Row indices of one moving-block resample: `⌈n/ℓ⌉` blocks of `ℓ`
/// consecutive indices with uniformly drawn starts in `0..=n−ℓ`, truncated to
/// `n`.
pub fn block_resample_indices<R: Rng + ?Sized>(n: usize, block_length: usize, rng: &mut R) -> Vec<usize> {
    let mut out = Vec::with_capacity(n + block_length);
    while out.len() < n {
        let start = rng.random_range(0..=n - block_length);
        out.extend(start..start + block_length);
    }
    out.truncate(n);
    out
}

fn select(x: &DMatrix<f64>, y: &DVector<f64>, idx: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    let xs = DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)]);
    let ys = DVector::from_iterator(idx.len(), idx.iter().map(|&i| y[i]));
    (xs, ys)
}

/// Pairs moving-block bootstrap of one coefficient. Resample `r` draws from
/// its own stream derived from `(seed, r)`, so the result does not depend on
/// thread scheduling.
pub fn moving_block_bootstrap(
    panel: &AlignedPanel,
    spec: &ModelSpec,
    coefficient: &str,
    opts: BootstrapOptions,
) -> Result<BootstrapResult> {
    let design = spec.design(panel)?;
    let n = design.rows.len();
    if n == 0 {
        return Err(Error::InsufficientData("empty estimation sample".into()));
    }
    if opts.block_length == 0 || opts.block_length > n {
        return Err(Error::InvalidInput(format!("block length {} outside 1..={n}", opts.block_length)));
    }
    if opts.n_resamples == 0 {
        return Err(Error::InvalidInput("at least one resample is required".into()));
    }
    let col = design
        .names
        .iter()
        .position(|c| c == coefficient)
        .ok_or_else(|| Error::MissingColumn(coefficient.to_string()))?;
    let point = ols_fit(&design.x, &design.y)?.coefficients[col];

    let draws: Vec<(f64, usize)> = (0..opts.n_resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng::stream(opts.seed, r);
            for redraw in 0..=MAX_REDRAWS {
                let idx = block_resample_indices(n, opts.block_length, &mut stream);
                let (xs, ys) = select(&design.x, &design.y, &idx);
                match ols_fit(&xs, &ys) {
                    Ok(fit) => return Ok((fit.coefficients[col], redraw)),
                    Err(Error::RankDeficient { .. }) | Err(Error::InsufficientData(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::InsufficientData(format!("resample {r} stayed rank deficient after {MAX_REDRAWS} redraws")))
        })
        .collect::<Result<_>>()?;

    let distribution: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let redraws = draws.iter().map(|d| d.1).sum();
    let extreme = distribution.iter().filter(|b| (*b - point).abs() >= point.abs()).count();
    Ok(BootstrapResult {
        coefficient: coefficient.to_string(),
        point_estimate: point,
        p_value: extreme as f64 / distribution.len() as f64,
        distribution,
        seed: opts.seed,
        block_length: opts.block_length,
        redraws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{simulate_panel, SyntheticConfig};
    use proptest::prelude::*;

    fn fixture() -> (AlignedPanel, ModelSpec) {
        let cfg = SyntheticConfig { n_days: 120, ..Default::default() };
        let (p, truth) = simulate_panel(&cfg).unwrap();
        let spec = ModelSpec::new("BTC.rvol5").with_current("BTC.har1").with_lagged(truth.signal_column, 1);
        (p, spec)
    }

    #[test]
    fn deterministic_and_sized() {
        let (p, spec) = fixture();
        let opts = BootstrapOptions { block_length: 5, n_resamples: 50, seed: 9 };
        let a = moving_block_bootstrap(&p, &spec, "L1.KXFED.dir", opts).unwrap();
        let b = moving_block_bootstrap(&p, &spec, "L1.KXFED.dir", opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.distribution.len(), 50);
        assert!((0.0..=1.0).contains(&a.p_value));
        let c = moving_block_bootstrap(&p, &spec, "L1.KXFED.dir", BootstrapOptions { seed: 10, ..opts }).unwrap();
        assert_ne!(a.distribution, c.distribution);
    }

    #[test]
    fn single_block_is_degenerate() {
        let (p, spec) = fixture();
        let n = spec.usable_rows(&p).unwrap().len();
        let opts = BootstrapOptions { block_length: n, n_resamples: 10, seed: 1 };
        let r = moving_block_bootstrap(&p, &spec, "L1.KXFED.dir", opts).unwrap();
        assert!(r.distribution.iter().all(|b| (b - r.point_estimate).abs() < 1e-12));
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn bad_options() {
        let (p, spec) = fixture();
        let bad = |opts| moving_block_bootstrap(&p, &spec, "L1.KXFED.dir", opts).is_err();
        assert!(bad(BootstrapOptions { block_length: 0, n_resamples: 5, seed: 0 }));
        assert!(bad(BootstrapOptions { block_length: 10_000, n_resamples: 5, seed: 0 }));
        assert!(moving_block_bootstrap(&p, &spec, "nope", BootstrapOptions::default()).is_err());
    }

    proptest! {
        #[test]
        fn blocks_are_contiguous(n in 1usize..200, l in 1usize..20, seed in any::<u64>()) {
            prop_assume!(l <= n);
            let idx = block_resample_indices(n, l, &mut rng::stream(seed, 0));
            prop_assert_eq!(idx.len(), n);
            for chunk in idx.chunks(l) {
                prop_assert!(chunk.windows(2).all(|w| w[1] == w[0] + 1));
                prop_assert!(*chunk.last().unwrap() < n);
            }
        }
    }
}
