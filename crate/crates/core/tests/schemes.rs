use approx::assert_relative_eq;
use proptest::prelude::*;

use fracsde::fbm::{coarsen, sample_driving};
use fracsde::field::builtin;
use fracsde::schemes::{cn_solve, interpolate_continuous, reference_solution, solve, sup_distance};
use fracsde::{CnConfig, ReferenceKind, SamplerMethod, Scheme, TimeGrid};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// For `V(x) = σ x` every CN step is `x (1 + δ/2) / (1 − δ/2)`.
    #[test]
    fn cn_linear_is_product_formula(seed in any::<u64>(), hurst in 0.55f64..0.95) {
        let sde = builtin("scalar_linear_drift").unwrap();
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let p = sample_driving(grid, hurst, 1, seed, SamplerMethod::Circulant).unwrap();
        let traj = cn_solve(&sde, &p, &CnConfig::default()).unwrap();
        let mut x = sde.x0[0];
        for k in 0..64 {
            let inc = p.increment(k);
            let delta = 0.5 * inc[0] + inc[1];
            x *= (1.0 + delta / 2.0) / (1.0 - delta / 2.0);
            prop_assert!((traj.value(k + 1)[0] - x).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn schemes_start_at_x0(seed in any::<u64>()) {
        let sde = builtin("fbm2d_rotation").unwrap();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let p = sample_driving(grid, 0.7, 2, seed, SamplerMethod::Circulant).unwrap();
        for scheme in Scheme::ALL {
            let t = solve(scheme, &sde, &p, &CnConfig::default()).unwrap();
            prop_assert_eq!(t.value(0), &sde.x0[..]);
        }
    }
}

#[test]
fn pathwise_cn_error_shrinks_along_a_ladder() {
    let sde = builtin("bounded_scalar").unwrap();
    let grid = TimeGrid::new(1.0, 1 << 14).unwrap();
    let cfg = CnConfig::default();
    let mut worse = 0;
    for seed in 0..20 {
        let fine = sample_driving(grid, 0.75, 1, seed, SamplerMethod::Circulant).unwrap();
        let reference = reference_solution(&sde, &fine, &cfg, ReferenceKind::FineCn).unwrap();
        let errs: Vec<f64> = [1024, 256, 64, 16]
            .iter()
            .map(|&f| {
                let coarse = cn_solve(&sde, &coarsen(&fine, f).unwrap(), &cfg).unwrap();
                sup_distance(&reference.restrict(&coarse.grid).unwrap(), &coarse)
            })
            .collect();
        worse += errs.windows(2).filter(|w| w[1] > w[0]).count();
    }
    // Occasional non-monotone steps happen on single paths; they must be rare.
    assert!(worse <= 6, "{worse} increasing steps out of 60");
}

#[test]
fn continuous_interpolation_hits_grid_values() {
    let sde = builtin("fbm2d_rotation").unwrap();
    let fine = sample_driving(TimeGrid::new(1.0, 256).unwrap(), 0.7, 2, 3, SamplerMethod::Circulant).unwrap();
    let coarse = coarsen(&fine, 16).unwrap();
    let traj = cn_solve(&sde, &coarse, &CnConfig::default()).unwrap();
    for k in 0..=16 {
        let t = coarse.grid().time(k);
        let v = interpolate_continuous(sde.field.as_ref(), &traj, &fine, t).unwrap();
        for (a, b) in v.iter().zip(traj.value(k)) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
    }
}

#[test]
fn euler_error_decays_for_high_hurst() {
    let sde = builtin("scalar_linear").unwrap();
    let grid = TimeGrid::new(1.0, 4096).unwrap();
    let fine = sample_driving(grid, 0.95, 1, 8, SamplerMethod::Circulant).unwrap();
    let reference = reference_solution(&sde, &fine, &CnConfig::default(), ReferenceKind::ClosedForm).unwrap();
    let e = |f: usize| {
        let coarse = solve(Scheme::Euler, &sde, &coarsen(&fine, f).unwrap(), &CnConfig::default()).unwrap();
        sup_distance(&reference.restrict(&coarse.grid).unwrap(), &coarse)
    };
    // H = 0.95: Euler error ~ n^{1-2H} = n^{-0.9}
    // factor 256 is n = 16, factor 64 is n = 64
    let ratio = e(256) / e(64);
    assert!(ratio > 2.0, "ratio {ratio}");
}
