//! Small estimators shared by the experiments.

use rand::Rng;

use crate::disorder::SeedSpec;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance; zero for fewer than two points.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

/// Standard error of the mean.
pub fn std_err(x: &[f64]) -> f64 {
    std_dev(x) / (x.len() as f64).sqrt()
}

/// Unbiased sample covariance.
pub fn covariance(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return 0.0;
    }
    let (mx, my) = (mean(x), mean(y));
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (x.len() - 1) as f64
}

/// Per-sample terms whose mean is the unbiased covariance, so that their
/// spread gives a standard error for it.
pub fn covariance_terms(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my) * n / (n - 1.0))
        .collect()
}

/// Sample variance with its standard error `sd((x - mean)^2) / sqrt(n)`.
pub fn variance_with_se(x: &[f64]) -> (f64, f64) {
    let terms = covariance_terms(x, x);
    (mean(&terms), std_err(&terms))
}

/// `ln sum exp(v)`, stable for large arguments.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Weighted least squares `y = intercept + slope * x` with weights taken as
/// inverse variances of `y`. `None` with fewer than two distinct `x`.
pub fn weighted_fit(x: &[f64], y: &[f64], w: &[f64]) -> Option<LinearFit> {
    let sw: f64 = w.iter().sum();
    if x.len() < 2 || sw.is_nan() || sw <= 0.0 || !sw.is_finite() {
        return None;
    }
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, c), b)| b * (a - mx) * (c - my))
        .sum();
    let slope = sxy / sxx;
    let slope_se = (1.0 / sxx).sqrt();
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        slope_se,
        ci_low: slope - Z95 * slope_se,
        ci_high: slope + Z95 * slope_se,
    })
}

/// Percentile bootstrap interval (2.5%, 97.5%) of `stat` over `resamples`
/// resamples of `x`.
pub fn bootstrap_ci<F>(x: &[f64], resamples: usize, seed: SeedSpec, stat: F) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let mut rng = seed.rng();
    let n = x.len();
    let mut buf = vec![0.0; n];
    let mut out: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = x[rng.gen_range(0..n)];
            }
            stat(&buf)
        })
        .collect();
    out.sort_by(f64::total_cmp);
    (quantile_sorted(&out, 0.025), quantile_sorted(&out, 0.975))
}

/// Linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::Purpose;

    #[test]
    fn moments() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&x), 2.5);
        assert!((variance(&x) - 5.0 / 3.0).abs() < 1e-15);
        assert!((covariance(&x, &x) - variance(&x)).abs() < 1e-15);
        assert!((mean(&covariance_terms(&x, &[4.0, 3.0, 2.0, 1.0])) + 5.0 / 3.0).abs() < 1e-14);
        assert_eq!(variance(&[7.0]), 0.0);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert_eq!(log_sum_exp(&[0.0; 5]), 5f64.ln());
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn weighted_fit_recovers_a_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 + 2.0 * v).collect();
        let f = weighted_fit(&x, &y, &[1.0, 2.0, 1.0, 4.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 0.5).abs() < 1e-12);
        assert!(f.ci_low < 2.0 && f.ci_high > 2.0);
        // unit weights: slope variance is 1 / sum (x - mean)^2
        let g = weighted_fit(&x, &y, &[1.0; 4]).unwrap();
        assert!((g.slope_se - (1.0f64 / 5.0).sqrt()).abs() < 1e-12);
        assert!(weighted_fit(&[1.0, 1.0], &[0.0, 1.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn bootstrap_brackets_the_mean() {
        let x: Vec<f64> = (0..200).map(|i| (i % 17) as f64).collect();
        let (lo, hi) = bootstrap_ci(&x, 500, SeedSpec::new(1, 0, Purpose::Bootstrap), mean);
        assert!(lo < mean(&x) && mean(&x) < hi);
        assert_eq!(quantile_sorted(&[1.0, 3.0], 0.5), 2.0);
    }
}
