//! Small statistics toolbox: moments, batch-means standard errors, empirical
//! quantiles, a two-sample Kolmogorov-Smirnov test, and autocorrelation-based
//! effective sample size.

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n-1 denominator). `None` for fewer than two
/// samples.
pub fn sample_variance(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some(ss / (xs.len() - 1) as f64)
}

/// Standard error of the mean: sample sd / sqrt(n).
pub fn standard_error(xs: &[f64]) -> Option<f64> {
    sample_variance(xs).map(|v| (v / xs.len() as f64).sqrt())
}

/// Batch-means standard error of the mean of a correlated chain, using
/// floor(sqrt(n)) batches of equal length.
pub fn batch_means_se(xs: &[f64]) -> Option<f64> {
    let n = xs.len();
    let batches = (n as f64).sqrt().floor() as usize;
    if batches < 2 {
        return None;
    }
    let len = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| mean(&xs[b * len..(b + 1) * len]))
        .collect();
    let var_between = sample_variance(&means)?;
    Some((var_between / batches as f64).sqrt())
}

/// Empirical quantile: smallest sorted value whose cumulative share reaches
/// `q`. `q` must lie in (0, 1].
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!(q > 0.0 && q <= 1.0);
    let idx = ((q * sorted.len() as f64).ceil() as usize).max(1) - 1;
    sorted[idx.min(sorted.len() - 1)]
}

/// Deciles q10..q90 of an unsorted sample.
pub fn deciles(xs: &[f64]) -> [f64; 9] {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    std::array::from_fn(|i| quantile(&sorted, (i + 1) as f64 / 10.0))
}

/// Two-sample Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sided two-sample KS statistic with the asymptotic p-value
/// (Kolmogorov distribution, Stephens' small-sample correction). With heavily
/// tied discrete data the p-value is conservative.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> KsResult {
    assert!(!xs.is_empty() && !ys.is_empty());
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_q(lambda),
    }
}

/// Tail probability of the Kolmogorov distribution,
/// `Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Effective sample size via Geyer's initial positive sequence: pair up
/// autocorrelations and sum while the pair sums stay positive.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(xs);
    let c0: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        // constant chain carries no information beyond one sample
        return 1.0;
    }
    let autocov = |lag: usize| -> f64 {
        (0..n - lag)
            .map(|t| (xs[t] - m) * (xs[t + lag] - m))
            .sum::<f64>()
            / n as f64
    };
    let mut sum_rho = 0.0;
    let mut lag = 1;
    while lag + 1 < n {
        let pair = (autocov(lag) + autocov(lag + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        sum_rho += pair;
        lag += 2;
    }
    (n as f64 / (1.0 + 2.0 * sum_rho)).min(n as f64)
}
