use std::io::{self, Write};

use super::{theoretical_slope, LimitCase};
use crate::error::{invalid, Error, Result};
use crate::fbm::{coarsen, DrivingSampler, SamplerMethod};
use crate::field::SdeInstance;
use crate::grid::TimeGrid;
use crate::output::{fmt_f64, write_comments, write_row};
use crate::schemes::{reference_solution, solve, CnConfig, ReferenceKind, Scheme, Trajectory};
use crate::stats::{self, batch_means, par_paths, LinearFit};

pub const DEFAULT_FINE_FACTOR: usize = 16;
pub const DEFAULT_BATCHES: usize = 20;
/// Paths hitting the contraction guard are dropped; above this fraction the
/// study aborts.
pub const MAX_REJECTED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct ErrorStudyConfig {
    pub sde: SdeInstance,
    pub scheme: Scheme,
    pub hurst: f64,
    pub horizon: f64,
    pub n_list: Vec<usize>,
    pub paths: usize,
    /// Moment order of the `L^p` error.
    pub p: f64,
    pub seed: u64,
    /// The reference grid has `fine_factor · max(n_list)` steps.
    pub fine_factor: usize,
    pub reference: ReferenceKind,
    pub cn: CnConfig,
    pub method: SamplerMethod,
    pub batches: usize,
}

impl ErrorStudyConfig {
    pub fn new(sde: SdeInstance, scheme: Scheme, hurst: f64, n_list: Vec<usize>, paths: usize, seed: u64) -> Self {
        Self {
            sde,
            scheme,
            hurst,
            horizon: 1.0,
            n_list,
            paths,
            p: 2.0,
            seed,
            fine_factor: DEFAULT_FINE_FACTOR,
            reference: ReferenceKind::Auto,
            cn: CnConfig::default(),
            method: SamplerMethod::default(),
            batches: DEFAULT_BATCHES,
        }
    }

    pub fn fine_steps(&self) -> usize {
        self.fine_factor * self.n_list.iter().copied().max().unwrap_or(0)
    }

    fn uses_fine_cn(&self) -> bool {
        match self.reference {
            ReferenceKind::FineCn => true,
            ReferenceKind::ClosedForm => false,
            ReferenceKind::Auto => self.sde.closed_form.is_none(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.5 && self.hurst < 1.0) {
            return Err(invalid(format!(
                "scheme studies need H in (1/2, 1), got {}",
                self.hurst
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.n_list.is_empty() {
            return Err(invalid("n_list is empty"));
        }
        if self.n_list[0] == 0 || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(format!(
                "n_list must be positive and strictly increasing, got {:?}",
                self.n_list
            )));
        }
        let top = *self.n_list.last().unwrap();
        if let Some(&bad) = self.n_list.iter().find(|&&n| top % n != 0) {
            return Err(Error::IndivisibleCoarsening { n: top, factor: bad });
        }
        if self.fine_factor == 0 {
            return Err(invalid("fine_factor must be positive"));
        }
        if self.uses_fine_cn() && self.fine_factor < DEFAULT_FINE_FACTOR {
            return Err(invalid(format!(
                "a fine Crank-Nicolson reference needs fine_factor >= {DEFAULT_FINE_FACTOR}, got {}",
                self.fine_factor
            )));
        }
        if matches!(self.reference, ReferenceKind::ClosedForm) && self.sde.closed_form.is_none() {
            return Err(invalid(format!("SDE `{}` has no closed form", self.sde.name)));
        }
        if self.paths < 2 {
            return Err(invalid("need at least 2 paths"));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(invalid(format!("p must be >= 1, got {}", self.p)));
        }
        if self.batches < 2 || self.batches > self.paths {
            return Err(invalid(format!("batches must be in [2, paths], got {}", self.batches)));
        }
        self.cn.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub n: usize,
    pub error: f64,
    pub stderr: f64,
    pub rejected_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct ErrorStudy {
    pub config: ErrorStudyConfig,
    pub rows: Vec<ErrorRow>,
    pub rejected: usize,
    /// `batch_errors[i][b]`: the `L^p` error of batch `b` at `n_list[i]`.
    pub batch_errors: Vec<Vec<f64>>,
}

/// Largest Euclidean distance between `reference` and `coarse` over the
/// coarse grid points.
fn sup_grid_error(reference: &Trajectory, coarse: &Trajectory) -> f64 {
    let r = reference.grid.steps() / coarse.grid.steps();
    (0..=coarse.grid.steps())
        .map(|k| {
            reference
                .value(k * r)
                .iter()
                .zip(coarse.value(k))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// `(mean |e|^p)^{1/p}` with a delta-method standard error from batch means.
fn lp_with_stderr(powers: &[f64], p: f64, batches: usize) -> (f64, f64, Vec<f64>) {
    let m = stats::mean(powers);
    let bm = batch_means(powers, batches);
    let se_m = stats::std_error(&bm);
    let error = m.powf(1.0 / p);
    let stderr = if m > 0.0 { error * se_m / (p * m) } else { 0.0 };
    (error, stderr, bm.iter().map(|b| b.powf(1.0 / p)).collect())
}

impl ErrorStudy {
    pub fn run(config: &ErrorStudyConfig) -> Result<ErrorStudy> {
        config.validate()?;
        let sde = &config.sde;
        let fine_n = config.fine_steps();
        let grid = TimeGrid::new(config.horizon, fine_n)?;
        let sampler = DrivingSampler::new(grid, config.hurst, sde.drivers(), config.method)?;

        let outcomes = par_paths(config.paths, config.seed, |seed| -> Result<Option<Vec<f64>>> {
            let fine = sampler.sample(seed);
            let reference = match reference_solution(sde, &fine, &config.cn, config.reference) {
                Ok(r) => r,
                Err(Error::NonContractive { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let mut errs = Vec::with_capacity(config.n_list.len());
            for &n in &config.n_list {
                let coarse = coarsen(&fine, fine_n / n)?;
                match solve(config.scheme, sde, &coarse, &config.cn) {
                    Ok(traj) => errs.push(sup_grid_error(&reference, &traj)),
                    Err(Error::NonContractive { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                }
            }
            Ok(Some(errs))
        });

        let mut kept = Vec::with_capacity(config.paths);
        let mut rejected = 0;
        for o in outcomes {
            match o? {
                Some(e) => kept.push(e),
                None => rejected += 1,
            }
        }
        let fraction = rejected as f64 / config.paths as f64;
        if fraction > MAX_REJECTED_FRACTION || kept.len() < config.batches {
            return Err(Error::TooManyRejections {
                rejected,
                paths: config.paths,
            });
        }

        let mut rows = Vec::with_capacity(config.n_list.len());
        let mut batch_errors = Vec::with_capacity(config.n_list.len());
        for (i, &n) in config.n_list.iter().enumerate() {
            let powers: Vec<f64> = kept.iter().map(|e| e[i].powf(config.p)).collect();
            let (error, stderr, batches) = lp_with_stderr(&powers, config.p, config.batches);
            if !error.is_finite() {
                return Err(Error::NonFinite { step: n });
            }
            rows.push(ErrorRow {
                n,
                error,
                stderr,
                rejected_fraction: fraction,
            });
            batch_errors.push(batches);
        }
        Ok(ErrorStudy {
            config: config.clone(),
            rows,
            rejected,
            batch_errors,
        })
    }

    pub fn ns(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.n).collect()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    /// Errors are nonincreasing in `n`, allowing each step to rise by at most
    /// the combined standard error of the two rows.
    pub fn is_monotone(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].error - w[0].error <= w[0].stderr + w[1].stderr)
    }

    /// `max/min` of `n^{-slope} · error` across the ladder; bounded when the
    /// errors follow the rate `n^{slope}`.
    pub fn scaled_error_spread(&self, slope: f64) -> f64 {
        let scaled: Vec<f64> = self.rows.iter().map(|r| (r.n as f64).powf(-slope) * r.error).collect();
        let max = scaled.iter().copied().fold(f64::MIN, f64::max);
        let min = scaled.iter().copied().fold(f64::MAX, f64::min);
        max / min
    }

    pub fn write_csv<W: Write>(&self, w: &mut W, comments: &[String]) -> io::Result<()> {
        write_comments(w, comments)?;
        writeln!(w, "n,error,stderr,rejected_fraction")?;
        for r in &self.rows {
            write_row(
                w,
                &[
                    r.n.to_string(),
                    fmt_f64(r.error),
                    fmt_f64(r.stderr),
                    fmt_f64(r.rejected_fraction),
                ],
            )?;
        }
        Ok(())
    }
}

/// Monte Carlo strong error at a single `n`, with a reference grid
/// `DEFAULT_FINE_FACTOR` times finer.
pub fn strong_error(
    sde: &SdeInstance,
    scheme: Scheme,
    hurst: f64,
    n: usize,
    paths: usize,
    p: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut cfg = ErrorStudyConfig::new(sde.clone(), scheme, hurst, vec![n], paths, seed);
    cfg.p = p;
    cfg.batches = DEFAULT_BATCHES.min(paths);
    let study = ErrorStudy::run(&cfg)?;
    Ok((study.rows[0].error, study.rows[0].stderr))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub hurst: f64,
    pub slope: f64,
    pub intercept: f64,
    /// OLS standard error combined with the spread of per-batch slopes.
    pub slope_se: f64,
    pub r_squared: f64,
    pub theory: f64,
    pub tolerance: f64,
    /// `tolerance − |slope − theory|`; nonnegative on success.
    pub margin: f64,
    pub ns: Vec<usize>,
    pub errors: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl RateFit {
    pub fn passed(&self) -> bool {
        self.margin >= 0.0
    }

    pub fn verdict(&self) -> &'static str {
        if self.passed() {
            "PASS"
        } else {
            "FAIL"
        }
    }

    /// True when the slopes differ by more than the sum of their standard
    /// errors.
    pub fn separated_from(&self, other: &RateFit) -> bool {
        (self.slope - other.slope).abs() > self.slope_se + other.slope_se
    }

    pub fn write_csv<W: Write>(&self, w: &mut W, comments: &[String]) -> io::Result<()> {
        write_comments(w, comments)?;
        writeln!(w, "H,slope,slope_se,theory,verdict")?;
        write_row(
            w,
            &[
                fmt_f64(self.hurst),
                fmt_f64(self.slope),
                fmt_f64(self.slope_se),
                fmt_f64(self.theory),
                self.verdict().to_string(),
            ],
        )
    }
}

/// Least squares of `log error` on `log n`.
pub fn fit_power_law(ns: &[usize], errors: &[f64]) -> Result<LinearFit> {
    if ns.len() != errors.len() {
        return Err(Error::DegenerateFit(format!(
            "{} values of n but {} errors",
            ns.len(),
            errors.len()
        )));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::DegenerateFit(format!("error {e} cannot be log-transformed")));
    }
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    stats::ols(&x, &y)
}

/// Convergence-rate fit of `study` against the theoretical slope of `case`,
/// which must match the structure of the study's SDE.
pub fn fit_rate(study: &ErrorStudy, case: LimitCase, tolerance: f64) -> Result<RateFit> {
    let cfg = &study.config;
    if study.rows.len() < 4 {
        return Err(Error::DegenerateFit(format!(
            "need at least 4 values of n, got {}",
            study.rows.len()
        )));
    }
    case.validate(&cfg.sde)?;
    let theory = theoretical_slope(cfg.scheme, case, cfg.hurst)?;
    let ns = study.ns();
    let errors = study.errors();
    let fit = fit_power_law(&ns, &errors)?;

    let batches = study.batch_errors.first().map_or(0, |b| b.len());
    let batch_slopes: Vec<f64> = (0..batches)
        .filter_map(|b| {
            let e: Vec<f64> = study.batch_errors.iter().map(|row| row[b]).collect();
            fit_power_law(&ns, &e).ok().map(|f| f.slope)
        })
        .collect();
    let batch_se = if batch_slopes.len() >= 2 {
        stats::std_error(&batch_slopes)
    } else {
        0.0
    };
    let residuals = ns
        .iter()
        .zip(&errors)
        .map(|(&n, e)| e.ln() - fit.intercept - fit.slope * (n as f64).ln())
        .collect();
    Ok(RateFit {
        hurst: cfg.hurst,
        slope: fit.slope,
        intercept: fit.intercept,
        slope_se: (fit.slope_se.powi(2) + batch_se.powi(2)).sqrt(),
        r_squared: fit.r_squared,
        theory,
        tolerance,
        margin: tolerance - (fit.slope - theory).abs(),
        ns,
        errors,
        residuals,
    })
}

/// Rate study of the modified Euler scheme; rejects `H >= 3/4`.
pub fn modified_euler_rate_check(config: &ErrorStudyConfig, tolerance: f64) -> Result<RateFit> {
    let mut cfg = config.clone();
    cfg.scheme = Scheme::ModifiedEuler;
    let case = LimitCase::of(&cfg.sde)?;
    theoretical_slope(Scheme::ModifiedEuler, case, cfg.hurst)?;
    let study = ErrorStudy::run(&cfg)?;
    fit_rate(&study, case, tolerance)
}
