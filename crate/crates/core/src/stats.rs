//! Small statistics helpers shared by the Monte Carlo studies.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::path_seed;

/// Runs `f(path_seed(master, i))` for `i in 0..paths` in parallel; results
/// are returned in path order, so reductions are independent of scheduling.
pub fn par_paths<T, F>(paths: usize, master: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..paths as u64)
        .into_par_iter()
        .map(|i| f(path_seed(master, i)))
        .collect()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Standard error of the sample mean.
pub fn std_error(x: &[f64]) -> f64 {
    (variance(x) / x.len() as f64).sqrt()
}

/// Splits `x` into `batches` contiguous groups (the last absorbs the
/// remainder) and returns their means.
pub fn batch_means(x: &[f64], batches: usize) -> Vec<f64> {
    let b = batches.clamp(1, x.len().max(1));
    let size = x.len() / b;
    (0..b)
        .map(|i| {
            let end = if i + 1 == b { x.len() } else { (i + 1) * size };
            mean(&x[i * size..end])
        })
        .collect()
}

pub fn skewness(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

pub fn excess_kurtosis(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ intercept + slope x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return Err(Error::DegenerateFit(format!(
            "need matching samples, got {} and {}",
            n,
            y.len()
        )));
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("abscissae have zero variance".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let (slope_se, intercept_se) = if n > 2 {
        let s2 = ss_res / (n - 2) as f64;
        let sumx2: f64 = x.iter().map(|v| v * v).sum();
        ((s2 / sxx).sqrt(), (s2 * sumx2 / (n as f64 * sxx)).sqrt())
    } else {
        (0.0, 0.0)
    };
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        slope_se,
        intercept_se,
        r_squared,
    })
}

/// Weighted least squares with weights `1/σ_i²`; standard errors from the
/// weights alone.
pub fn weighted_ols(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<LinearFit> {
    if x.len() < 2 || x.len() != y.len() || x.len() != sigma.len() {
        return Err(Error::DegenerateFit("mismatched weighted regression input".into()));
    }
    let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    if !(sxx > 0.0) || !sxx.is_finite() {
        return Err(Error::DegenerateFit("abscissae have zero weighted variance".into()));
    }
    let sxy: f64 = x.iter().zip(y).zip(&w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .zip(&w)
        .map(|((a, c), b)| b * (c - intercept - slope * a).powi(2))
        .sum();
    let ss_tot: f64 = y.iter().zip(&w).map(|(c, b)| b * (c - my).powi(2)).sum();
    Ok(LinearFit {
        slope,
        intercept,
        slope_se: (1.0 / sxx).sqrt(),
        intercept_se: (1.0 / sw + mx * mx / sxx).sqrt(),
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = ols(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-14);
        assert!(f.slope_se < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
        assert!(ols(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn weighted_matches_unweighted_for_equal_sigma() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y = [0.1, 0.9, 2.2, 4.8];
        let a = ols(&x, &y).unwrap();
        let b = weighted_ols(&x, &y, &[0.3; 4]).unwrap();
        assert!((a.slope - b.slope).abs() < 1e-12);
        assert!((a.intercept - b.intercept).abs() < 1e-12);
    }

    #[test]
    fn moments_of_symmetric_sample() {
        let x = [-2.0, -1.0, 0.0, 1.0, 2.0];
        assert_eq!(mean(&x), 0.0);
        assert!((variance(&x) - 2.5).abs() < 1e-15);
        assert_eq!(skewness(&x), 0.0);
        assert!((excess_kurtosis(&x) + 1.3).abs() < 1e-12);
        assert_eq!(batch_means(&x, 2), vec![-1.5, 1.0]);
    }

    #[test]
    fn par_paths_is_ordered() {
        let a = par_paths(100, 5, |s| s);
        let b: Vec<u64> = (0..100).map(|i| path_seed(5, i)).collect();
        assert_eq!(a, b);
    }
}
