use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BhOutcome {
    /// Adjusted p-values in input order.
    pub adjusted: Vec<f64>,
    /// Rejection flags in input order.
    pub rejected: Vec<bool>,
}

impl BhOutcome {
    pub fn n_rejected(&self) -> usize {
        self.rejected.iter().filter(|r| **r).count()
    }
}

fn check(p_values: &[f64], q: f64) -> Result<()> {
    if p_values.is_empty() {
        return Err(Error::InvalidInput("no p-values to adjust".into()));
    }
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!("p-value {p} outside [0, 1]")));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidInput(format!("FDR level {q} outside (0, 1)")));
    }
    Ok(())
}

/// Step-up false discovery rate control at level `q`.
pub fn benjamini_hochberg(p_values: &[f64], q: f64) -> Result<BhOutcome> {
    check(p_values, q)?;
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));

    let k_star = (1..=m).rev().find(|&k| p_values[order[k - 1]] <= k as f64 * q / m as f64);
    let mut rejected = vec![false; m];
    if let Some(k) = k_star {
        for &i in &order[..k] {
            rejected[i] = true;
        }
    }

    let mut adjusted = vec![0.0; m];
    let mut running = 1.0_f64;
    for rank in (1..=m).rev() {
        let i = order[rank - 1];
        running = running.min(m as f64 * p_values[i] / rank as f64);
        // m·p/rank ≥ p exactly; the clamp absorbs rounding.
        adjusted[i] = running.min(1.0).max(p_values[i]);
    }
    Ok(BhOutcome { adjusted, rejected })
}

/// Rejections at `p ≤ q / m`.
pub fn bonferroni(p_values: &[f64], q: f64) -> Result<Vec<bool>> {
    check(p_values, q)?;
    let m = p_values.len() as f64;
    Ok(p_values.iter().map(|p| *p <= q / m).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_examples() {
        let one = benjamini_hochberg(&[0.04], 0.05).unwrap();
        assert_eq!(one.rejected, vec![true]);
        assert_eq!(one.adjusted, vec![0.04]);

        let out = benjamini_hochberg(&[0.001, 0.02, 0.04, 0.8], 0.05).unwrap();
        assert_eq!(out.rejected, vec![true, true, false, false]);
        assert!((out.adjusted[0] - 0.004).abs() < 1e-15);
        assert!((out.adjusted[1] - 0.04).abs() < 1e-15);
        assert!((out.adjusted[2] - 0.04 * 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(out.adjusted[3], 0.8);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(benjamini_hochberg(&[], 0.05).is_err());
        assert!(benjamini_hochberg(&[1.2], 0.05).is_err());
        assert!(benjamini_hochberg(&[f64::NAN], 0.05).is_err());
        assert!(benjamini_hochberg(&[0.1], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn nested_between_bonferroni_and_raw(p in prop::collection::vec(0.0f64..=1.0, 1..80), q in 0.01f64..0.5) {
            let bh = benjamini_hochberg(&p, q).unwrap();
            let bonf = bonferroni(&p, q).unwrap();
            for i in 0..p.len() {
                prop_assert!(!bonf[i] || bh.rejected[i]);
                prop_assert!(!bh.rejected[i] || p[i] <= q);
                prop_assert_eq!(bh.rejected[i], bh.adjusted[i] <= q);
                prop_assert!(bh.adjusted[i] >= p[i] && bh.adjusted[i] <= 1.0);
            }
        }

        #[test]
        fn permutation_equivariant(p in prop::collection::vec(0.0f64..=1.0, 1..40), rot in 0usize..40) {
            let mut r = p.clone();
            let k = rot % p.len();
            r.rotate_left(k);
            let a = benjamini_hochberg(&p, 0.05).unwrap();
            let b = benjamini_hochberg(&r, 0.05).unwrap();
            for i in 0..p.len() {
                let j = (i + p.len() - k) % p.len();
                prop_assert_eq!(a.rejected[i], b.rejected[j]);
                prop_assert_eq!(a.adjusted[i], b.adjusted[j]);
            }
        }
    }
}
