//! Small numeric helpers shared by every stage.

use statrs::distribution::{ContinuousCDF, Normal};

pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^x)` without overflow.
pub fn log1p_exp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of outcome `y` at linear predictor `eta`.
#[inline]
pub fn bernoulli_loglik(y: bool, eta: f64) -> f64 {
    if y {
        eta - log1p_exp(eta)
    } else {
        -log1p_exp(eta)
    }
}

/// Binomial kernel (without the combinatorial constant).
#[inline]
pub fn binomial_loglik(events: u64, total: u64, eta: f64) -> f64 {
    events as f64 * eta - total as f64 * log1p_exp(eta)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with `n - 1` denominator.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sd(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Quantile by linear interpolation between order statistics (type 7).
pub fn quantile(xs: &[f64], prob: f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&sorted, prob)
}

pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Standard normal quantile function.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// SplitMix64 finaliser, used to derive independent stream seeds from
/// `(seed, index)` pairs.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Midranks (1-based) of `xs`, ties receive the average rank.
pub fn midranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Kendall's tau-b between two equally long sequences (O(n^2)).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    let (mut concordant, mut discordant, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = (x[i] - x[j]).partial_cmp(&0.0).unwrap_or(std::cmp::Ordering::Equal);
            let dy = (y[i] - y[j]).partial_cmp(&0.0).unwrap_or(std::cmp::Ordering::Equal);
            use std::cmp::Ordering::Equal;
            match (dx, dy) {
                (Equal, Equal) => {}
                (Equal, _) => tx += 1,
                (_, Equal) => ty += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n0 = (concordant + discordant) as f64;
    let denom = ((n0 + tx as f64) * (n0 + ty as f64)).sqrt();
    if denom == 0.0 {
        return f64::NAN;
    }
    (concordant - discordant) as f64 / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn logistic_helpers_are_stable_in_the_tails() {
        assert_eq!(inv_logit(0.0), 0.5);
        assert!(inv_logit(-800.0) >= 0.0 && inv_logit(800.0) <= 1.0);
        assert!((log1p_exp(1000.0) - 1000.0).abs() < 1e-12);
        assert!((logit(inv_logit(1.3)) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn type7_quantiles() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert!((quantile(&xs, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile(&xs, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn kendall_identity() {
        let x = [0.1, 0.5, 0.3, 0.9];
        let y: Vec<f64> = x.iter().map(|v| v * 2.0 + 1.0).collect();
        assert_eq!(kendall_tau(&x, &y), 1.0);
    }

    proptest! {
        #[test]
        fn logit_round_trips(x in -30.0..30.0f64) {
            prop_assert!((logit(inv_logit(x)) - x).abs() < 1e-8 * (1.0 + x.abs().exp()));
            prop_assert!((inv_logit(-x) - (1.0 - inv_logit(x))).abs() < 1e-15);
        }

        #[test]
        fn midranks_sum_to_triangular_number(xs in prop::collection::vec(0u8..6, 1..40)) {
            let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
            let n = xs.len() as f64;
            prop_assert!((midranks(&xs).iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
        }

        #[test]
        fn kendall_tau_bounded_and_rank_based(pairs in prop::collection::vec((-5.0..5.0f64, 0u8..4), 3..30)) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
            let tau = kendall_tau(&x, &y);
            prop_assume!(tau.is_finite());
            prop_assert!((-1.0..=1.0).contains(&tau));
            let x3: Vec<f64> = x.iter().map(|v| v.powi(3) - 2.0).collect();
            prop_assert_eq!(tau, kendall_tau(&x3, &y));
            prop_assert!((kendall_tau(&y, &x) - tau).abs() < 1e-12);
        }
    }
}
