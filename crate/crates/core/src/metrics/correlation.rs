//! Pearson, Spearman and Kendall tau-b.
//!
//! Each returns `Ok(None)` when the statistic is undefined because a
//! vector is constant (or, for tau-b, every pair is tied on one side).

use super::MetricError;

fn check(x: &[f64], y: &[f64]) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricError::TooFew(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

/// Sample product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>, MetricError> {
    check(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>, MetricError> {
    check(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Kendall's tau-b: `(C - D) / sqrt((C + D + Tx) * (C + D + Ty))`, where
/// `Tx`/`Ty` count pairs tied only in x/only in y. Pairs tied in both are
/// ignored. Quadratic pair enumeration.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<Option<f64>, MetricError> {
    check(x, y)?;
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            match (dx == 0.0, dy == 0.0) {
                (true, true) => {}
                (true, false) => tie_x += 1,
                (false, true) => tie_y += 1,
                (false, false) if (dx > 0.0) == (dy > 0.0) => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let left = (concordant + discordant + tie_x) as f64;
    let right = (concordant + discordant + tie_y) as f64;
    if left == 0.0 || right == 0.0 {
        return Ok(None);
    }
    let tau = (concordant as f64 - discordant as f64) / (left * right).sqrt();
    Ok(Some(tau.clamp(-1.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[i32]) -> Vec<f64> {
        xs.iter().map(|&x| x as f64).collect()
    }

    // Direct-formula oracles, kept apart from the implementation above.
    fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn pearson_examples() {
        let a = v(&[1, 2, 3, 4, 5]);
        assert_eq!(pearson(&a, &a).unwrap(), Some(1.0));
        assert_eq!(pearson(&v(&[1, 2, 3]), &v(&[3, 2, 1])).unwrap(), Some(-1.0));
        let (x, y) = (v(&[1, 2, 3, 5]), v(&[2, 2, 4, 5]));
        let got = pearson(&x, &y).unwrap().unwrap();
        assert!((got - pearson_oracle(&x, &y)).abs() < 1e-12);
        // Hand value: cov sum 7.25 over sqrt(8.75 * 6.75).
        assert!((got - 7.25 / (8.75f64 * 6.75).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn undefined_and_invalid_inputs() {
        assert_eq!(pearson(&v(&[2, 2, 2]), &v(&[1, 2, 3])).unwrap(), None);
        assert_eq!(spearman(&v(&[1, 2, 3]), &v(&[4, 4, 4])).unwrap(), None);
        assert_eq!(kendall_tau_b(&v(&[1, 1]), &v(&[1, 2])).unwrap(), None);
        assert_eq!(pearson(&v(&[1]), &v(&[1])), Err(MetricError::TooFew(1)));
        assert_eq!(pearson(&v(&[1, 2]), &v(&[1])), Err(MetricError::LengthMismatch(2, 1)));
        assert_eq!(pearson(&[1.0, f64::NAN], &[1.0, 2.0]), Err(MetricError::NonFinite));
    }

    #[test]
    fn spearman_examples() {
        let x = v(&[1, 2, 3, 4, 5]);
        let y: Vec<f64> = x.iter().map(|a| a.powi(3) + 7.0).collect();
        assert_eq!(spearman(&x, &y).unwrap(), Some(1.0));
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        assert_eq!(spearman(&x, &rev).unwrap(), Some(-1.0));
        // x=(1,1,2) ranks (1.5,1.5,3); y ranks (1,2,3).
        let got = spearman(&v(&[1, 1, 2]), &v(&[1, 2, 3])).unwrap().unwrap();
        let want = pearson_oracle(&[1.5, 1.5, 3.0], &[1.0, 2.0, 3.0]);
        assert!((got - want).abs() < 1e-12);
        assert!((got - 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn kendall_examples() {
        let p = v(&[3, 1, 4, 2, 5]);
        assert_eq!(kendall_tau_b(&p, &p).unwrap(), Some(1.0));
        let got = kendall_tau_b(&v(&[1, 2, 3]), &v(&[1, 3, 2])).unwrap().unwrap();
        assert!((got - 1.0 / 3.0).abs() < 1e-15);
        // x=(1,1,2,3), y=(1,2,2,3): C=4, D=0, Tx=1, Ty=1 over six pairs.
        let got = kendall_tau_b(&v(&[1, 1, 2, 3]), &v(&[1, 2, 2, 3])).unwrap().unwrap();
        assert!((got - 4.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&v(&[10, 20, 10, 30])), vec![1.5, 3.0, 1.5, 4.0]);
    }

    fn scores() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(1u8..=5, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
                prop::collection::vec(1u8..=5, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
            )
        })
    }

    fn close(a: Option<f64>, b: Option<f64>) -> bool {
        match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() < 1e-9,
            (None, None) => true,
            _ => false,
        }
    }

    proptest! {
        #[test]
        fn symmetric((x, y) in scores()) {
            prop_assert!(close(pearson(&x, &y).unwrap(), pearson(&y, &x).unwrap()));
            prop_assert!(close(spearman(&x, &y).unwrap(), spearman(&y, &x).unwrap()));
            prop_assert!(close(kendall_tau_b(&x, &y).unwrap(), kendall_tau_b(&y, &x).unwrap()));
        }

        #[test]
        fn bounded((x, y) in scores()) {
            for s in [pearson(&x, &y), spearman(&x, &y), kendall_tau_b(&x, &y)] {
                if let Some(v) = s.unwrap() {
                    prop_assert!((-1.0..=1.0).contains(&v));
                }
            }
        }

        #[test]
        fn affine_and_monotone_invariance((x, y) in scores(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            prop_assert!(close(pearson(&x, &y).unwrap(), pearson(&xt, &y).unwrap()));
            prop_assert!(close(spearman(&x, &y).unwrap(), spearman(&xt, &y).unwrap()));
            let xm: Vec<f64> = x.iter().map(|v| v.powi(3) + v.exp()).collect();
            prop_assert!(close(kendall_tau_b(&x, &y).unwrap(), kendall_tau_b(&xm, &y).unwrap()));
        }

        #[test]
        fn joint_permutation_invariance((x, y) in scores(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut idx: Vec<usize> = (0..x.len()).collect();
            idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let xp: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
            let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            prop_assert!(close(pearson(&x, &y).unwrap(), pearson(&xp, &yp).unwrap()));
            prop_assert!(close(spearman(&x, &y).unwrap(), spearman(&xp, &yp).unwrap()));
            prop_assert!(close(kendall_tau_b(&x, &y).unwrap(), kendall_tau_b(&xp, &yp).unwrap()));
        }

        #[test]
        fn tau_b_equals_tau_a_without_ties(seed in any::<u64>(), n in 2usize..30) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let mut y = x.clone();
            y.shuffle(&mut rng);
            let (mut c, mut d) = (0i64, 0i64);
            for i in 0..n {
                for j in (i + 1)..n {
                    if (x[i] - x[j]) * (y[i] - y[j]) > 0.0 { c += 1 } else { d += 1 }
                }
            }
            let tau_a = (c - d) as f64 / (n * (n - 1) / 2) as f64;
            prop_assert!((kendall_tau_b(&x, &y).unwrap().unwrap() - tau_a).abs() < 1e-12);
        }
    }
}
