//! Monte Carlo strong errors, convergence-rate fits and limit studies.

mod limit;
mod strong;

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::field::SdeInstance;
use crate::schemes::Scheme;

pub use limit::{
    conditional_covariance, distributional_limit_check, limit_sde_solve, pathwise_limit_check,
    write_distributional_csv, CoordinateSummary, DistributionalSummary, LimitConstants, LimitForcing, LimitStudyConfig,
    PathwiseLimit, PathwiseRow,
};
pub use strong::{
    fit_power_law, fit_rate, modified_euler_rate_check, strong_error, ErrorRow, ErrorStudy, ErrorStudyConfig, RateFit,
    DEFAULT_BATCHES, DEFAULT_FINE_FACTOR,
};

/// Structural case of an equation, which fixes the rate factor `ϑ_n` and
/// the form of the limit equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LimitCase {
    /// `m > 1`: `ϑ_n = n^{2H−1/2}`.
    MultiDim,
    /// `m = 1`, `V_0 ≢ 0`: `ϑ_n = n^{H+1/2}`.
    ScalarDrift,
    /// `m = 1`, `V_0 ≡ 0`: `ϑ_n = n^{2H}`.
    ScalarDriftless,
}

/// Rate-study case; the same tags as the limit study.
pub type RateCase = LimitCase;

impl LimitCase {
    pub const ALL: [LimitCase; 3] = [LimitCase::MultiDim, LimitCase::ScalarDrift, LimitCase::ScalarDriftless];

    pub fn name(&self) -> &'static str {
        match self {
            LimitCase::MultiDim => "multi",
            LimitCase::ScalarDrift => "drift",
            LimitCase::ScalarDriftless => "driftless",
        }
    }

    /// The case implied by the structure `(m, V_0)` of `sde`.
    pub fn of(sde: &SdeInstance) -> Result<Self> {
        match (sde.drivers(), sde.field.drift_vanishes()) {
            (0, _) => Err(invalid(format!("SDE `{}` has no stochastic driver", sde.name))),
            (1, false) => Ok(LimitCase::ScalarDrift),
            (1, true) => Ok(LimitCase::ScalarDriftless),
            _ => Ok(LimitCase::MultiDim),
        }
    }

    /// Rejects a user-selected case that does not match `sde`.
    pub fn validate(&self, sde: &SdeInstance) -> Result<()> {
        let actual = LimitCase::of(sde)?;
        if actual != *self {
            return Err(Error::CaseMismatch(format!(
                "case `{}` requested but SDE `{}` (m = {}, drift {}) is case `{}`",
                self.name(),
                sde.name,
                sde.drivers(),
                if sde.field.drift_vanishes() { "zero" } else { "nonzero" },
                actual.name()
            )));
        }
        Ok(())
    }

    /// Exponent `a` of `ϑ_n = n^a`.
    pub fn theta_exponent(&self, hurst: f64) -> f64 {
        match self {
            LimitCase::MultiDim => 2.0 * hurst - 0.5,
            LimitCase::ScalarDrift => hurst + 0.5,
            LimitCase::ScalarDriftless => 2.0 * hurst,
        }
    }

    pub fn theta(&self, hurst: f64, n: usize) -> f64 {
        (n as f64).powf(self.theta_exponent(hurst))
    }
}

impl fmt::Display for LimitCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LimitCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "multi" | "m>1" | "m_gt_1" => Ok(LimitCase::MultiDim),
            "drift" | "m=1_drift" | "m1_drift" => Ok(LimitCase::ScalarDrift),
            "driftless" | "m=1_driftless" | "m1_driftless" => Ok(LimitCase::ScalarDriftless),
            other => Err(invalid(format!(
                "unknown case `{other}` (expected multi, drift or driftless)"
            ))),
        }
    }
}

/// Theoretical log-log slope of the strong error against `n`.
///
/// Crank-Nicolson follows `−a` with `ϑ_n = n^a`; Euler has slope `1 − 2H`;
/// modified Euler has slope `1/2 − 2H` for `H < 3/4` and is rejected
/// otherwise.
pub fn theoretical_slope(scheme: Scheme, case: LimitCase, hurst: f64) -> Result<f64> {
    match scheme {
        Scheme::CrankNicolson => Ok(-case.theta_exponent(hurst)),
        Scheme::Euler => Ok(1.0 - 2.0 * hurst),
        Scheme::ModifiedEuler if hurst < 0.75 => Ok(0.5 - 2.0 * hurst),
        Scheme::ModifiedEuler => Err(invalid(format!(
            "the modified Euler rate n^(1/2-2H) only holds for 1/2 < H < 3/4 (got H = {hurst}); \
             at H = 3/4 a log factor appears and above it the rate is n^(-1)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::builtin;

    #[test]
    fn cases_of_builtins() {
        assert_eq!(
            LimitCase::of(&builtin("scalar_linear").unwrap()).unwrap(),
            LimitCase::ScalarDriftless
        );
        assert_eq!(
            LimitCase::of(&builtin("scalar_linear_drift").unwrap()).unwrap(),
            LimitCase::ScalarDrift
        );
        assert_eq!(
            LimitCase::of(&builtin("fbm2d_rotation").unwrap()).unwrap(),
            LimitCase::MultiDim
        );
        assert!(matches!(
            LimitCase::MultiDim.validate(&builtin("bounded_scalar").unwrap()),
            Err(Error::CaseMismatch(_))
        ));
    }

    #[test]
    fn slopes() {
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(
            theoretical_slope(Scheme::CrankNicolson, LimitCase::MultiDim, 0.7).unwrap(),
            -0.9
        ));
        assert!(close(
            theoretical_slope(Scheme::CrankNicolson, LimitCase::ScalarDrift, 0.7).unwrap(),
            -1.2
        ));
        assert!(close(
            theoretical_slope(Scheme::CrankNicolson, LimitCase::ScalarDriftless, 0.7).unwrap(),
            -1.4
        ));
        assert!(close(
            theoretical_slope(Scheme::Euler, LimitCase::ScalarDriftless, 0.7).unwrap(),
            -0.4
        ));
        assert!(close(
            theoretical_slope(Scheme::ModifiedEuler, LimitCase::ScalarDriftless, 0.65).unwrap(),
            -0.8
        ));
        assert!(theoretical_slope(Scheme::ModifiedEuler, LimitCase::ScalarDriftless, 0.8).is_err());
    }

    #[test]
    fn case_names_parse() {
        for c in LimitCase::ALL {
            assert_eq!(c.name().parse::<LimitCase>().unwrap(), c);
        }
        assert_eq!("m>1".parse::<LimitCase>().unwrap(), LimitCase::MultiDim);
    }
}
