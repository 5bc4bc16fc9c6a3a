use approx::assert_relative_eq;
use proptest::prelude::*;

use fracsde::fbm::{
    coarsen, fbm_covariance, fgn_autocovariance, sample_driving, CholeskySampler, CirculantSampler, FgnSampler,
};
use fracsde::rng::GaussianStream;
use fracsde::stats::{mean, par_paths};
use fracsde::{SamplerMethod, TimeGrid};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn circulant_eigenvalues_nonnegative(hurst in 0.51f64..0.99, n in 1usize..600) {
        let grid = TimeGrid::new(1.0, n).unwrap();
        let s = CirculantSampler::new(&grid, hurst).unwrap();
        prop_assert!(s.eigenvalues().iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn levels_telescope_and_clock_is_exact(
        hurst in 0.51f64..0.99,
        n in 1usize..200,
        m in 0usize..4,
        seed in any::<u64>(),
        horizon in 0.1f64..5.0,
    ) {
        let grid = TimeGrid::new(horizon, n).unwrap();
        let p = sample_driving(grid, hurst, m, seed, SamplerMethod::Circulant).unwrap();
        let levels = p.levels();
        let w = m + 1;
        prop_assert_eq!(levels.len(), (n + 1) * w);
        for k in 0..=n {
            prop_assert!((levels[k * w] - grid.time(k)).abs() <= 1e-12 * horizon);
        }
        let mut acc = vec![0.0; w];
        for k in 0..n {
            for j in 0..w {
                acc[j] += p.increment(k)[j];
                prop_assert!((levels[(k + 1) * w + j] - acc[j]).abs() < 1e-12 * (1.0 + acc[j].abs()));
            }
        }
    }

    #[test]
    fn coarsening_commutes(seed in any::<u64>(), a in 1usize..4, b in 1usize..4) {
        let (fa, fb) = (1usize << a, 1usize << b);
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let p = sample_driving(grid, 0.7, 2, seed, SamplerMethod::Circulant).unwrap();
        let ab = coarsen(&coarsen(&p, fa).unwrap(), fb).unwrap();
        let direct = coarsen(&p, fa * fb).unwrap();
        for (x, y) in ab.increments().iter().zip(direct.increments()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn fbm_covariance_matches_increment_sum() {
    // Var(B_t) from summing the fGn autocovariances over a grid of t.
    let (hurst, n) = (0.7, 40usize);
    let h = 1.0 / n as f64;
    let mut var = 0.0;
    for i in 0..n {
        for j in 0..n {
            var += fgn_autocovariance(i.abs_diff(j), hurst, h);
        }
    }
    assert_relative_eq!(var, fbm_covariance(1.0, 1.0, hurst).unwrap(), max_relative = 1e-12);
}

#[test]
fn samplers_agree_in_second_moments() {
    let grid = TimeGrid::new(2.0, 32).unwrap();
    let hurst = 0.8;
    let chol = CholeskySampler::new(&grid, hurst).unwrap();
    let circ = FgnSampler::new(&grid, hurst, SamplerMethod::Circulant).unwrap();
    let paths = 20_000;
    let var_end = |xs: Vec<Vec<f64>>| mean(&xs.iter().map(|x| x.iter().sum::<f64>().powi(2)).collect::<Vec<_>>());
    let a = var_end(par_paths(paths, 1, |s| {
        let mut out = vec![0.0; 32];
        chol.sample_into(&mut GaussianStream::new(s), &mut out);
        out
    }));
    let b = var_end(par_paths(paths, 2, |s| circ.sample(s)));
    let exact = 2f64.powf(2.0 * hurst);
    // Var of a squared Gaussian mean is 2σ⁴/N; allow 4 SE.
    let tol = 4.0 * exact * (2.0 / paths as f64).sqrt();
    assert!((a - exact).abs() < tol, "cholesky {a} vs {exact}");
    assert!((b - exact).abs() < tol, "circulant {b} vs {exact}");
}

#[test]
fn paths_are_reproducible_across_thread_counts() {
    let grid = TimeGrid::new(1.0, 128).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                par_paths(16, 77, |s| {
                    sample_driving(grid, 0.65, 2, s, SamplerMethod::Circulant).unwrap()
                })
            })
    };
    assert_eq!(run(1), run(3));
}
