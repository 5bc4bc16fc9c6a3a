use fracsde::constants::{kappa, DEFAULT_QUAD_ORDER, DEFAULT_TRUNCATION};
use fracsde::fbm::{coarsen, sample_driving};
use fracsde::levy::{cubic_sum_check, increment_moments, variance_limit_check, zeta_step, AreaPair, AreaStudyConfig};
use fracsde::stats::{mean, par_paths};
use fracsde::{SamplerMethod, TimeGrid};

#[test]
fn increments_are_stationary() {
    let cfg = AreaStudyConfig::new(AreaPair::FbmFbm, 0.7, 32, 4000, 11);
    // Z(t) − Z(s) against Z(t − s) on the same grid.
    let m = increment_moments(&cfg, &[(0.25, 0.75), (0.0, 0.5), (0.5, 0.625), (0.0, 0.125)]).unwrap();
    for pair in m.chunks(2) {
        let ((a, sa), (b, sb)) = (pair[0], pair[1]);
        assert!((a - b).abs() < 3.0 * (sa * sa + sb * sb).sqrt(), "{a} vs {b}");
    }
}

#[test]
fn scaled_second_moment_stabilises_in_n() {
    let hurst = 0.75;
    let values: Vec<f64> = [64, 128, 256]
        .iter()
        .map(|&n| {
            let mut cfg = AreaStudyConfig::new(AreaPair::FbmFbm, hurst, n, 10_000, 20 + n as u64);
            cfg.sub_factor = 16;
            variance_limit_check(&cfg, &[1.0], 0.0).unwrap().rows[0].scaled_variance
        })
        .collect();
    let lo = values.iter().copied().fold(f64::MAX, f64::min);
    let hi = values.iter().copied().fold(f64::MIN, f64::max);
    assert!(hi / lo < 1.10, "{values:?}");
}

#[test]
fn scaled_variance_is_linear_in_time() {
    let k = kappa(0.7, DEFAULT_TRUNCATION, DEFAULT_QUAD_ORDER).unwrap().value;
    let cfg = AreaStudyConfig::new(AreaPair::FbmFbm, 0.7, 64, 4000, 31);
    let check = variance_limit_check(&cfg, &[0.25, 0.5, 0.75, 1.0], k).unwrap();
    let fit = check.linearity;
    assert!(
        fit.intercept.abs() < 3.0 * fit.intercept_se,
        "intercept {} ± {}",
        fit.intercept,
        fit.intercept_se
    );
    // Increment bound: n^{4H-1} E[(Z(t) - Z(s))²] / |t - s| of comparable size
    // at every lag and across n.
    for n in [32, 128] {
        let cfg = AreaStudyConfig::new(AreaPair::FbmFbm, 0.7, n, 2000, 32 + n as u64);
        let m = increment_moments(&cfg, &[(0.0, 0.25), (0.25, 0.75), (0.0, 1.0)]).unwrap();
        for ((v, _), len) in m.iter().zip([0.25, 0.5, 1.0]) {
            let c = v / len;
            assert!(c > 0.5 * 2.0 * k && c < 1.5 * 2.0 * k, "n = {n}, lag {len}: C = {c}");
        }
    }
}

/// The trapezoidal Young sum drops the sub-step areas, so doubling `M`
/// changes ζ by about `M^{1/2−2H}` relative to the step area.
#[test]
fn sub_grid_refinement_follows_young_rate() {
    let hurst = 0.7;
    let (n, top) = (4usize, 256usize);
    let grid = TimeGrid::new(1.0, n * top).unwrap();
    let per_path = par_paths(300, 41, |s| {
        let fine = sample_driving(grid, hurst, 2, s, SamplerMethod::Circulant).unwrap();
        let zetas: Vec<Vec<f64>> = [top, top / 2, top / 4, top / 8]
            .iter()
            .map(|&m| {
                let p = coarsen(&fine, top / m).unwrap();
                (0..n).map(|k| zeta_step(&p, m, k, 1, 2).unwrap()).collect()
            })
            .collect();
        zetas
    });
    let rms = |f: &dyn Fn(&Vec<Vec<f64>>) -> Vec<f64>| {
        mean(&per_path.iter().flat_map(|z| f(z)).map(|v| v * v).collect::<Vec<_>>()).sqrt()
    };
    let scale = rms(&|z| z[0].clone());
    // d[i] = rms(ζ at M = top/2^(i+1) − ζ at M = top/2^i)
    let d: Vec<f64> = (0..3)
        .map(|i| rms(&|z: &Vec<Vec<f64>>| z[i + 1].iter().zip(&z[i]).map(|(a, b)| a - b).collect()) / scale)
        .collect();
    let expected = 2f64.powf(2.0 * hurst - 0.5);
    for w in d.windows(2) {
        let ratio = w[1] / w[0];
        assert!(
            (ratio / expected - 1.0).abs() < 0.2,
            "{d:?}, ratio {ratio} vs {expected}"
        );
    }
    // At M = 32 the relative change is of order 1%.
    assert!(d[2] < 0.05, "{d:?}");
}

#[test]
fn cubic_sum_is_mean_zero() {
    let r = cubic_sum_check(0.99, 1.0, &[16, 64], 1.0, 4000, 51).unwrap();
    for c in r {
        assert!(
            c.mean_sum.abs() < 3.0 * c.mean_sum_se,
            "n = {}: {} ± {}",
            c.n,
            c.mean_sum,
            c.mean_sum_se
        );
    }
}

#[test]
fn cubic_sum_distance_decreases() {
    let r = cubic_sum_check(0.7, 1.0, &[64, 256, 1024], 1.0, 2000, 52).unwrap();
    assert!(r.windows(2).all(|w| w[1].distance < w[0].distance), "{r:?}");
}
