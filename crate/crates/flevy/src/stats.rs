//! Small statistical helpers: sample summaries, least-squares slopes, and
//! the two-sample Kolmogorov–Smirnov test used by the distributional checks.

/// Sample mean and standard error of the mean.
///
/// Returns `(mean, stderr)`; the standard error uses the unbiased sample
/// variance.  Empty input returns `(0, 0)` and a single observation has
/// standard error `0`.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    let var = ss / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
}

/// Ordinary least-squares slope of `y` against `x`.
///
/// `x` and `y` must have equal length `>= 2` with non-constant `x`; the
/// helper is only used with designed regressors, so this is asserted.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "ols_slope: mismatched lengths");
    assert!(x.len() >= 2, "ols_slope: need at least two points");
    let n = x.len() as f64;
    let xbar = x.iter().sum::<f64>() / n;
    let ybar = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxy += (xi - xbar) * (yi - ybar);
        sxx += (xi - xbar) * (xi - xbar);
    }
    assert!(sxx > 0.0, "ols_slope: constant regressor");
    sxy / sxx
}

/// Result of a two-sample Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy)]
pub struct KsTest {
    /// Supremum distance between the two empirical distribution functions.
    pub statistic: f64,
    /// Asymptotic two-sided p-value.
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
///
/// Both samples are copied and sorted internally.  The p-value uses the
/// Kolmogorov limit distribution evaluated at
/// `sqrt(n*m/(n+m)) * statistic`, accurate for samples of a few hundred
/// observations and more.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsTest {
    assert!(!a.is_empty() && !b.is_empty(), "ks_two_sample: empty sample");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).expect("ks_two_sample: NaN in sample"));
    b.sort_by(|x, y| x.partial_cmp(y).expect("ks_two_sample: NaN in sample"));
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        let fa = i as f64 / n as f64;
        let fb = j as f64 / m as f64;
        d = d.max((fa - fb).abs());
    }
    let ne = (n as f64 * m as f64) / (n + m) as f64;
    KsTest {
        statistic: d,
        p_value: kolmogorov_sf(ne.sqrt() * d),
    }
}

/// Survival function of the Kolmogorov limit distribution,
/// `Q(lambda) = 2 * sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mean_stderr_matches_hand_computation() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(m, 2.5, max_relative = 1e-15);
        // variance 5/3, stderr sqrt(5/12)
        assert_relative_eq!(se, (5.0f64 / 12.0).sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn ols_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        assert_relative_eq!(ols_slope(&x, &y), 2.5, max_relative = 1e-14);
    }

    #[test]
    fn ks_identical_samples_have_zero_distance() {
        let a = [0.3, -1.0, 2.0, 0.7, 0.1];
        let t = ks_two_sample(&a, &a);
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.p_value, 1.0);
    }

    #[test]
    fn ks_disjoint_samples_have_unit_distance() {
        let a = [0.0, 1.0, 2.0];
        let b = [10.0, 11.0, 12.0];
        let t = ks_two_sample(&a, &b);
        assert_eq!(t.statistic, 1.0);
        assert!(t.p_value < 0.1);
    }

    #[test]
    fn kolmogorov_sf_hits_one_percent_near_1_628() {
        // 1.628 is the classical two-sided 1% critical value.
        let q = kolmogorov_sf(1.628);
        assert!(q > 0.009 && q < 0.011, "q = {q}");
    }

    #[test]
    fn ks_detects_a_shift_and_accepts_the_null() {
        // Deterministic pseudo-samples: quantiles of U(0,1) vs U(0.3, 1.3).
        let a: Vec<f64> = (0..500).map(|i| (i as f64 + 0.5) / 500.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.3).collect();
        assert!(ks_two_sample(&a, &b).p_value < 1e-6);
        let t = ks_two_sample(&a, &a);
        assert!(t.p_value > 0.99);
    }
}
