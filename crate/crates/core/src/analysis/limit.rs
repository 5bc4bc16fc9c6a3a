use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use super::strong::{DEFAULT_BATCHES, DEFAULT_FINE_FACTOR, MAX_REJECTED_FRACTION};
use super::LimitCase;
use crate::constants::{kappa, rho, DEFAULT_QUAD_ORDER, DEFAULT_TRUNCATION};
use crate::error::{invalid, Error, Result};
use crate::fbm::{coarsen, DrivingPath, DrivingSampler, SamplerMethod};
use crate::field::{phi_coefficient, SdeInstance, VectorField};
use crate::grid::TimeGrid;
use crate::output::{fmt_f64, write_comments, write_row};
use crate::rng::{derive_seed, tags, GaussianStream};
use crate::schemes::{cn_solve, reference_solution, CnConfig, ReferenceKind, Scheme, Trajectory};
use crate::stats::{self, batch_means, par_paths};

/// Source term of the driftless limit equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LimitForcing {
    /// `−(T^{2H}/4) Σ V^i V^{i'} ∂_i∂_{i'}V(X) dB`.
    #[default]
    Printed,
    /// The printed term plus `−(T^{2H}/4) (∂V)² V(X) dB`, the second half of
    /// the third-order Crank-Nicolson defect `(V''V² + V'²V)Δ³/12`.
    Full,
}

impl LimitForcing {
    pub fn name(&self) -> &'static str {
        match self {
            LimitForcing::Printed => "printed",
            LimitForcing::Full => "full",
        }
    }
}

impl fmt::Display for LimitForcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LimitForcing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "printed" => Ok(LimitForcing::Printed),
            "full" => Ok(LimitForcing::Full),
            other => Err(invalid(format!("unknown forcing `{other}` (expected printed or full)"))),
        }
    }
}

/// `κ` and `ρ` as needed by the multi-dimensional and drift cases.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LimitConstants {
    pub kappa: Option<f64>,
    pub rho: Option<f64>,
}

impl LimitConstants {
    /// Computes the constant `case` needs with the default quadrature.
    pub fn for_case(case: LimitCase, hurst: f64) -> Result<Self> {
        Ok(match case {
            LimitCase::MultiDim => Self {
                kappa: Some(kappa(hurst, DEFAULT_TRUNCATION, DEFAULT_QUAD_ORDER)?.value),
                rho: None,
            },
            LimitCase::ScalarDrift => Self {
                kappa: None,
                rho: Some(rho(hurst, DEFAULT_TRUNCATION, DEFAULT_QUAD_ORDER)?.value),
            },
            LimitCase::ScalarDriftless => Self::default(),
        })
    }
}

/// Number of independent Brownian components driving the limit equation.
fn noise_width(case: LimitCase, m: usize) -> usize {
    match case {
        LimitCase::MultiDim => m * (m - 1) / 2,
        LimitCase::ScalarDrift => 1,
        LimitCase::ScalarDriftless => 0,
    }
}

/// Coefficients of the limit equation along a given solution path.
struct LimitCoefficients<'a> {
    field: &'a dyn VectorField,
    case: LimitCase,
    d: usize,
    m: usize,
    /// Scale of the `dW` term or of the driftless forcing.
    scale: f64,
    forcing: LimitForcing,
}

impl<'a> LimitCoefficients<'a> {
    fn new(
        case: LimitCase,
        sde: &'a SdeInstance,
        hurst: f64,
        horizon: f64,
        constants: &LimitConstants,
        forcing: LimitForcing,
    ) -> Result<Self> {
        case.validate(sde)?;
        let scale = match case {
            LimitCase::MultiDim => {
                let k = constants
                    .kappa
                    .ok_or_else(|| invalid("the multi-dimensional limit needs kappa"))?;
                horizon.powf(2.0 * hurst - 0.5) * (k / 2.0).sqrt()
            }
            LimitCase::ScalarDrift => {
                let r = constants.rho.ok_or_else(|| invalid("the drift limit needs rho"))?;
                horizon.powf(hurst + 0.5) * (r / 2.0).sqrt()
            }
            LimitCase::ScalarDriftless => -horizon.powf(2.0 * hurst) / 4.0,
        };
        Ok(Self {
            field: sde.field.as_ref(),
            case,
            d: sde.dim(),
            m: sde.drivers(),
            scale,
            forcing,
        })
    }

    /// `Σ_j ∂V_j(x) db_j` as a `d × d` matrix.
    fn linear_part(&self, x: &[f64], db: &[f64], jac: &mut [f64]) -> DMatrix<f64> {
        let d = self.d;
        let mut a = DMatrix::zeros(d, d);
        for (j, &dbj) in db.iter().enumerate() {
            if dbj == 0.0 {
                continue;
            }
            self.field.jacobian(x, j, jac);
            for r in 0..d {
                for c in 0..d {
                    a[(r, c)] += jac[r * d + c] * dbj;
                }
            }
        }
        a
    }

    /// `d × noise_width` matrix multiplying `dW`.
    fn noise_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let w = noise_width(self.case, self.m);
        let mut out = DMatrix::zeros(self.d, w);
        let mut col = 0;
        match self.case {
            LimitCase::MultiDim => {
                for j in 2..=self.m {
                    for jp in 1..j {
                        let phi = phi_coefficient(self.field, x, j, jp)?;
                        for i in 0..self.d {
                            out[(i, col)] = self.scale * phi[i];
                        }
                        col += 1;
                    }
                }
            }
            LimitCase::ScalarDrift => {
                let phi = phi_coefficient(self.field, x, 1, 0)?;
                for i in 0..self.d {
                    out[(i, 0)] = self.scale * phi[i];
                }
            }
            LimitCase::ScalarDriftless => {}
        }
        Ok(out)
    }

    /// Coefficient of `dB^1` in the driftless forcing.
    fn driftless_forcing(&self, x: &[f64]) -> DVector<f64> {
        let d = self.d;
        let mut v = vec![0.0; d * (self.m + 1)];
        self.field.eval(x, &mut v);
        let v1 = &v[d..2 * d];
        let mut out = DVector::zeros(d);
        let mut h = vec![0.0; d];
        for a in 0..d {
            for b in 0..d {
                self.field.hessian(x, 1, a, b, &mut h);
                for i in 0..d {
                    out[i] += v1[a] * v1[b] * h[i];
                }
            }
        }
        if self.forcing == LimitForcing::Full {
            let mut jac = vec![0.0; d * d];
            self.field.jacobian(x, 1, &mut jac);
            let jv: Vec<f64> = (0..d).map(|i| (0..d).map(|k| jac[i * d + k] * v1[k]).sum()).collect();
            for i in 0..d {
                out[i] += (0..d).map(|k| jac[i * d + k] * jv[k]).sum::<f64>();
            }
        }
        out * self.scale
    }
}

fn check_along(sde: &SdeInstance, x: &Trajectory, fine: &DrivingPath) -> Result<()> {
    if x.grid.steps() != fine.steps() || (x.grid.horizon() - fine.grid().horizon()).abs() > 0.0 {
        return Err(Error::DimensionMismatch(format!(
            "solution has {} steps, driving path has {}",
            x.grid.steps(),
            fine.steps()
        )));
    }
    if x.dim != sde.dim() || fine.m() != sde.drivers() {
        return Err(Error::DimensionMismatch(format!(
            "SDE `{}` has d = {}, m = {} but got a solution with d = {} and a path with m = {}",
            sde.name,
            sde.dim(),
            sde.drivers(),
            x.dim,
            fine.m()
        )));
    }
    Ok(())
}

/// Independent Brownian increments for the limit equation: `count` columns
/// per step of `grid`, row-major, from the auxiliary stream of `seed`.
pub fn brownian_increments(grid: &TimeGrid, count: usize, seed: u64) -> Vec<f64> {
    let mut out = vec![0.0; grid.steps() * count];
    let mut stream = GaussianStream::new(derive_seed(seed, &[tags::AUX_BROWNIAN]));
    stream.fill_normal(&mut out);
    let s = grid.step_size().sqrt();
    out.iter_mut().for_each(|v| *v *= s);
    out
}

/// Solves the linear limit equation for `U` along the solution `x` on the
/// grid of `fine`, with `U_0 = 0`.
///
/// Each step is Crank-Nicolson in the linear part; `dW` terms use the left
/// point and the driftless forcing the trapezoid. `w` holds the increments of
/// `W` row-major (`noise_width` per step) and is ignored in the driftless
/// case.
#[allow(clippy::too_many_arguments)]
pub fn limit_sde_solve(
    case: LimitCase,
    sde: &SdeInstance,
    x: &Trajectory,
    fine: &DrivingPath,
    w: Option<&[f64]>,
    constants: &LimitConstants,
    forcing: LimitForcing,
) -> Result<Trajectory> {
    check_along(sde, x, fine)?;
    let coef = LimitCoefficients::new(case, sde, fine.hurst(), fine.grid().horizon(), constants, forcing)?;
    let d = coef.d;
    let n = fine.steps();
    let nw = noise_width(case, coef.m);
    let w = if nw > 0 {
        let w = w.ok_or_else(|| invalid("the limit equation needs an independent Brownian path"))?;
        if w.len() != n * nw {
            return Err(Error::DimensionMismatch(format!(
                "W has {} increments, expected {} steps of width {}",
                w.len(),
                n,
                nw
            )));
        }
        Some(w)
    } else {
        None
    };

    let mut jac = vec![0.0; d * d];
    let mut u = DVector::<f64>::zeros(d);
    let mut values = vec![0.0; (n + 1) * d];
    let mut g_prev = (nw == 0).then(|| coef.driftless_forcing(x.value(0)));
    for k in 0..n {
        let db = fine.increment(k);
        let (xk, xk1) = (x.value(k), x.value(k + 1));
        let right = DMatrix::identity(d, d) + coef.linear_part(xk, db, &mut jac) * 0.5;
        let left = DMatrix::identity(d, d) - coef.linear_part(xk1, db, &mut jac) * 0.5;
        let mut rhs = right * &u;
        if let Some(w) = w {
            let dw = DVector::from_column_slice(&w[k * nw..(k + 1) * nw]);
            rhs += coef.noise_matrix(xk)? * dw;
        } else {
            let g_next = coef.driftless_forcing(xk1);
            let g0 = g_prev.as_ref().expect("driftless forcing is tracked");
            rhs += (g0 + &g_next) * (0.5 * db[1]);
            g_prev = Some(g_next);
        }
        u = left.lu().solve(&rhs).ok_or(Error::NonFinite { step: k })?;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k });
        }
        values[(k + 1) * d..(k + 2) * d].copy_from_slice(u.as_slice());
    }
    Ok(Trajectory {
        grid: *fine.grid(),
        dim: d,
        values,
        scheme: Some(Scheme::CrankNicolson),
        iterations: Vec::new(),
    })
}

/// Covariance of `U_T` given the driving path, for the cases with an
/// independent Brownian forcing (row-major `d × d`). The recursion is the
/// exact covariance of the discretisation used by [`limit_sde_solve`].
pub fn conditional_covariance(
    case: LimitCase,
    sde: &SdeInstance,
    x: &Trajectory,
    fine: &DrivingPath,
    constants: &LimitConstants,
) -> Result<Vec<f64>> {
    check_along(sde, x, fine)?;
    if case == LimitCase::ScalarDriftless {
        return Err(invalid("the driftless limit is a pathwise functional of B"));
    }
    let coef = LimitCoefficients::new(
        case,
        sde,
        fine.hurst(),
        fine.grid().horizon(),
        constants,
        LimitForcing::Printed,
    )?;
    let d = coef.d;
    let h = fine.grid().step_size();
    let mut jac = vec![0.0; d * d];
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for k in 0..fine.steps() {
        let db = fine.increment(k);
        let (xk, xk1) = (x.value(k), x.value(k + 1));
        let right = DMatrix::identity(d, d) + coef.linear_part(xk, db, &mut jac) * 0.5;
        let left = DMatrix::identity(d, d) - coef.linear_part(xk1, db, &mut jac) * 0.5;
        let inv = left.try_inverse().ok_or(Error::NonFinite { step: k })?;
        let nm = coef.noise_matrix(xk)?;
        let inner = &right * &cov * right.transpose() + &nm * nm.transpose() * h;
        cov = &inv * inner * inv.transpose();
    }
    // nalgebra is column-major; the covariance is symmetric.
    Ok(cov.as_slice().to_vec())
}

#[derive(Debug, Clone)]
pub struct LimitStudyConfig {
    pub sde: SdeInstance,
    pub case: LimitCase,
    pub hurst: f64,
    pub horizon: f64,
    pub n_list: Vec<usize>,
    pub paths: usize,
    pub p: f64,
    pub seed: u64,
    pub fine_factor: usize,
    pub forcing: LimitForcing,
    /// Computed from the case when absent.
    pub constants: Option<LimitConstants>,
    pub cn: CnConfig,
    pub method: SamplerMethod,
    pub batches: usize,
}

impl LimitStudyConfig {
    pub fn new(sde: SdeInstance, case: LimitCase, hurst: f64, n_list: Vec<usize>, paths: usize, seed: u64) -> Self {
        Self {
            sde,
            case,
            hurst,
            horizon: 1.0,
            n_list,
            paths,
            p: 2.0,
            seed,
            fine_factor: DEFAULT_FINE_FACTOR,
            forcing: LimitForcing::default(),
            constants: None,
            cn: CnConfig::default(),
            method: SamplerMethod::default(),
            batches: DEFAULT_BATCHES,
        }
    }

    pub fn fine_steps(&self) -> usize {
        self.fine_factor * self.n_list.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.5 && self.hurst < 1.0) {
            return Err(invalid(format!("limit studies need H in (1/2, 1), got {}", self.hurst)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.n_list.is_empty() || self.n_list[0] == 0 || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(format!(
                "n_list must be nonempty, positive and strictly increasing, got {:?}",
                self.n_list
            )));
        }
        let top = *self.n_list.last().unwrap();
        if let Some(&bad) = self.n_list.iter().find(|&&n| top % n != 0) {
            return Err(Error::IndivisibleCoarsening { n: top, factor: bad });
        }
        if self.fine_factor < 2 {
            return Err(invalid("fine_factor must be at least 2"));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(invalid(format!("p must be >= 1, got {}", self.p)));
        }
        if self.batches < 2 || self.batches > self.paths {
            return Err(invalid(format!("batches must be in [2, paths], got {}", self.batches)));
        }
        self.case.validate(&self.sde)?;
        self.cn.validate()
    }

    fn resolved_constants(&self) -> Result<LimitConstants> {
        match self.constants {
            Some(c) => Ok(c),
            None => LimitConstants::for_case(self.case, self.hurst),
        }
    }
}

/// Per-path output shared by the two checks: `ϑ_n`-scaled terminal errors
/// per `n`, `U_T`, and the conditional variances of `U_T`.
struct PathSample {
    scaled: Vec<Vec<f64>>,
    limit: Vec<f64>,
    cond_var: Vec<f64>,
}

fn run_paths(cfg: &LimitStudyConfig, constants: &LimitConstants) -> Result<Vec<PathSample>> {
    let sde = &cfg.sde;
    let fine_n = cfg.fine_steps();
    let grid = TimeGrid::new(cfg.horizon, fine_n)?;
    let sampler = DrivingSampler::new(grid, cfg.hurst, sde.drivers(), cfg.method)?;
    let nw = noise_width(cfg.case, sde.drivers());
    let d = sde.dim();

    let outcomes = par_paths(cfg.paths, cfg.seed, |seed| -> Result<Option<PathSample>> {
        let fine = sampler.sample(seed);
        let reference = match reference_solution(sde, &fine, &cfg.cn, ReferenceKind::Auto) {
            Ok(r) => r,
            Err(Error::NonContractive { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let x_t = reference.last().to_vec();
        let mut scaled = Vec::with_capacity(cfg.n_list.len());
        for &n in &cfg.n_list {
            let coarse = coarsen(&fine, fine_n / n)?;
            let traj = match cn_solve(sde, &coarse, &cfg.cn) {
                Ok(t) => t,
                Err(Error::NonContractive { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let theta = cfg.case.theta(cfg.hurst, n);
            scaled.push(x_t.iter().zip(traj.last()).map(|(a, b)| theta * (a - b)).collect());
        }
        let w = (nw > 0).then(|| brownian_increments(&grid, nw, seed));
        let u = limit_sde_solve(cfg.case, sde, &reference, &fine, w.as_deref(), constants, cfg.forcing)?;
        let cond_var = if nw > 0 {
            let cov = conditional_covariance(cfg.case, sde, &reference, &fine, constants)?;
            (0..d).map(|i| cov[i * d + i]).collect()
        } else {
            vec![0.0; d]
        };
        Ok(Some(PathSample {
            scaled,
            limit: u.last().to_vec(),
            cond_var,
        }))
    });

    let mut kept = Vec::with_capacity(cfg.paths);
    let mut rejected = 0;
    for o in outcomes {
        match o? {
            Some(s) => kept.push(s),
            None => rejected += 1,
        }
    }
    if rejected as f64 > MAX_REJECTED_FRACTION * cfg.paths as f64 || kept.len() < cfg.batches {
        return Err(Error::TooManyRejections {
            rejected,
            paths: cfg.paths,
        });
    }
    Ok(kept)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathwiseRow {
    pub n: usize,
    /// `(E|ϑ_n(X_T − X^n_T) − U_T|^p)^{1/p}`.
    pub distance: f64,
    pub stderr: f64,
    /// `(E|ϑ_n(X_T − X^n_T)|^p)^{1/p}`, for scale.
    pub scaled_error: f64,
    /// Standard error of `distance − previous distance` from paired batches;
    /// zero on the first row.
    pub step_se: f64,
}

#[derive(Debug, Clone)]
pub struct PathwiseLimit {
    pub hurst: f64,
    pub p: f64,
    pub forcing: LimitForcing,
    pub rows: Vec<PathwiseRow>,
    /// `(E|U_T|^p)^{1/p}`.
    pub limit_norm: f64,
}

impl PathwiseLimit {
    /// Every step `d_{k+1} − d_k` is below one standard error of the
    /// difference.
    pub fn decreasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].distance - w[0].distance < w[1].step_se)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W, comments: &[String]) -> io::Result<()> {
        write_comments(w, comments)?;
        writeln!(w, "n,distance,stderr,scaled_error,step_se")?;
        for r in &self.rows {
            write_row(
                w,
                &[
                    r.n.to_string(),
                    fmt_f64(r.distance),
                    fmt_f64(r.stderr),
                    fmt_f64(r.scaled_error),
                    fmt_f64(r.step_se),
                ],
            )?;
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn lp(powers: &[f64], p: f64, batches: usize) -> (f64, f64, Vec<f64>) {
    let m = stats::mean(powers);
    let bm = batch_means(powers, batches);
    let value = m.powf(1.0 / p);
    let se = if m > 0.0 {
        value * stats::std_error(&bm) / (p * m)
    } else {
        0.0
    };
    (value, se, bm.iter().map(|b| b.powf(1.0 / p)).collect())
}

/// `L^p` distance between the scaled terminal error and `U_T` of the
/// driftless limit equation, driven by the same fBm path.
pub fn pathwise_limit_check(cfg: &LimitStudyConfig) -> Result<PathwiseLimit> {
    cfg.validate()?;
    if cfg.case != LimitCase::ScalarDriftless {
        return Err(Error::CaseMismatch(format!(
            "the pathwise check needs case `driftless`, got `{}`",
            cfg.case
        )));
    }
    let constants = cfg.resolved_constants()?;
    let samples = run_paths(cfg, &constants)?;
    let limit_powers: Vec<f64> = samples.iter().map(|s| norm(&s.limit).powf(cfg.p)).collect();
    let limit_norm = stats::mean(&limit_powers).powf(1.0 / cfg.p);

    let mut rows = Vec::with_capacity(cfg.n_list.len());
    let mut prev_batches: Option<Vec<f64>> = None;
    for (i, &n) in cfg.n_list.iter().enumerate() {
        let dist: Vec<f64> = samples
            .iter()
            .map(|s| {
                let diff: Vec<f64> = s.scaled[i].iter().zip(&s.limit).map(|(a, b)| a - b).collect();
                norm(&diff).powf(cfg.p)
            })
            .collect();
        let err: Vec<f64> = samples.iter().map(|s| norm(&s.scaled[i]).powf(cfg.p)).collect();
        let (distance, stderr, batches) = lp(&dist, cfg.p, cfg.batches);
        let step_se = match &prev_batches {
            Some(prev) => {
                let steps: Vec<f64> = batches.iter().zip(prev).map(|(a, b)| a - b).collect();
                stats::std_error(&steps)
            }
            None => 0.0,
        };
        rows.push(PathwiseRow {
            n,
            distance,
            stderr,
            scaled_error: stats::mean(&err).powf(1.0 / cfg.p),
            step_se,
        });
        prev_batches = Some(batches);
    }
    Ok(PathwiseLimit {
        hurst: cfg.hurst,
        p: cfg.p,
        forcing: cfg.forcing,
        rows,
        limit_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateSummary {
    pub coordinate: usize,
    /// Standard deviation of `ϑ_n(X_T − X^n_T)`.
    pub sd_error: f64,
    /// Standard deviation of the simulated `U_T`.
    pub sd_limit: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    /// Shape of the error standardised by the conditional standard deviation
    /// of `U_T` given the path; Gaussian under a mixed-normal limit.
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl CoordinateSummary {
    pub fn ratio_within(&self, lo: f64, hi: f64) -> bool {
        self.ratio >= lo && self.ratio <= hi
    }
}

#[derive(Debug, Clone)]
pub struct DistributionalSummary {
    pub case: LimitCase,
    pub hurst: f64,
    pub n: usize,
    pub theta: f64,
    pub coordinates: Vec<CoordinateSummary>,
}

impl DistributionalSummary {
    pub fn write_csv<W: Write>(&self, w: &mut W, comments: &[String]) -> io::Result<()> {
        write_distributional_csv(std::slice::from_ref(self), w, comments)
    }

    fn write_rows<W: Write>(&self, w: &mut W) -> io::Result<()> {
        for c in &self.coordinates {
            write_row(
                w,
                &[
                    self.n.to_string(),
                    (c.coordinate + 1).to_string(),
                    fmt_f64(c.sd_error),
                    fmt_f64(c.sd_limit),
                    fmt_f64(c.ratio),
                    fmt_f64(c.ratio_se),
                    fmt_f64(c.skewness),
                    fmt_f64(c.excess_kurtosis),
                ],
            )?;
        }
        Ok(())
    }
}

/// One CSV for several summaries, header written once.
pub fn write_distributional_csv<W: Write>(
    summaries: &[DistributionalSummary],
    w: &mut W,
    comments: &[String],
) -> io::Result<()> {
    write_comments(w, comments)?;
    writeln!(
        w,
        "n,coordinate,sd_error,sd_limit,ratio,ratio_se,skewness,excess_kurtosis"
    )?;
    for s in summaries {
        s.write_rows(w)?;
    }
    Ok(())
}

fn sd(x: &[f64]) -> f64 {
    stats::variance(x).sqrt()
}

/// Per-coordinate standard deviations of the scaled terminal error against
/// those of `U_T` with an independent `W`, one summary per `n`.
pub fn distributional_limit_check(cfg: &LimitStudyConfig) -> Result<Vec<DistributionalSummary>> {
    cfg.validate()?;
    if cfg.case == LimitCase::ScalarDriftless {
        return Err(Error::CaseMismatch(
            "the distributional check needs case `multi` or `drift`; use the pathwise check".into(),
        ));
    }
    let constants = cfg.resolved_constants()?;
    let samples = run_paths(cfg, &constants)?;
    let d = cfg.sde.dim();
    let paths = samples.len();
    let size = paths / cfg.batches;
    let batch = |b: usize| b * size..if b + 1 == cfg.batches { paths } else { (b + 1) * size };

    let mut out = Vec::with_capacity(cfg.n_list.len());
    for (i, &n) in cfg.n_list.iter().enumerate() {
        let coordinates = (0..d)
            .map(|c| {
                let e: Vec<f64> = samples.iter().map(|s| s.scaled[i][c]).collect();
                let u: Vec<f64> = samples.iter().map(|s| s.limit[c]).collect();
                let ratios: Vec<f64> = (0..cfg.batches).map(|b| sd(&e[batch(b)]) / sd(&u[batch(b)])).collect();
                let z: Vec<f64> = samples
                    .iter()
                    .filter(|s| s.cond_var[c] > 0.0)
                    .map(|s| s.scaled[i][c] / s.cond_var[c].sqrt())
                    .collect();
                let (skewness, excess_kurtosis) = if z.len() > 3 {
                    (stats::skewness(&z), stats::excess_kurtosis(&z))
                } else {
                    (f64::NAN, f64::NAN)
                };
                CoordinateSummary {
                    coordinate: c,
                    sd_error: sd(&e),
                    sd_limit: sd(&u),
                    ratio: sd(&e) / sd(&u),
                    ratio_se: stats::std_error(&ratios),
                    skewness,
                    excess_kurtosis,
                }
            })
            .collect();
        out.push(DistributionalSummary {
            case: cfg.case,
            hurst: cfg.hurst,
            n,
            theta: cfg.case.theta(cfg.hurst, n),
            coordinates,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::sample_driving;
    use crate::field::{builtin, ConstantField};
    use std::sync::Arc;

    fn along(sde: &SdeInstance, n: usize, seed: u64) -> (DrivingPath, Trajectory) {
        let grid = TimeGrid::new(1.0, n).unwrap();
        let path = sample_driving(grid, 0.7, sde.drivers(), seed, SamplerMethod::Circulant).unwrap();
        let x = reference_solution(sde, &path, &CnConfig::default(), ReferenceKind::Auto).unwrap();
        (path, x)
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let sde = SdeInstance::new(
            "const",
            Arc::new(ConstantField::new(2, 2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap()),
            vec![0.0, 0.0],
        )
        .unwrap();
        let (path, x) = along(&sde, 64, 3);
        let w = brownian_increments(path.grid(), 1, 3);
        let c = LimitConstants {
            kappa: Some(0.2),
            rho: None,
        };
        let u = limit_sde_solve(
            LimitCase::MultiDim,
            &sde,
            &x,
            &path,
            Some(&w),
            &c,
            LimitForcing::Printed,
        )
        .unwrap();
        assert!(u.values.iter().all(|&v| v == 0.0));

        let lin = builtin("scalar_linear_drift").unwrap();
        let (path, x) = along(&lin, 64, 4);
        let w = brownian_increments(path.grid(), 1, 4);
        let c = LimitConstants {
            kappa: None,
            rho: Some(0.1),
        };
        let u = limit_sde_solve(
            LimitCase::ScalarDrift,
            &lin,
            &x,
            &path,
            Some(&w),
            &c,
            LimitForcing::Printed,
        )
        .unwrap();
        assert!(u.values.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn missing_inputs_are_errors() {
        let sde = builtin("fbm2d_rotation").unwrap();
        let (path, x) = along(&sde, 32, 1);
        let none = LimitConstants::default();
        let w = brownian_increments(path.grid(), 1, 1);
        assert!(limit_sde_solve(
            LimitCase::MultiDim,
            &sde,
            &x,
            &path,
            Some(&w),
            &none,
            LimitForcing::Printed
        )
        .is_err());
        let c = LimitConstants {
            kappa: Some(0.2),
            rho: None,
        };
        assert!(limit_sde_solve(LimitCase::MultiDim, &sde, &x, &path, None, &c, LimitForcing::Printed).is_err());
        assert!(matches!(
            limit_sde_solve(
                LimitCase::MultiDim,
                &sde,
                &x,
                &path,
                Some(&w[..10]),
                &c,
                LimitForcing::Printed
            ),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            limit_sde_solve(
                LimitCase::ScalarDrift,
                &sde,
                &x,
                &path,
                Some(&w),
                &c,
                LimitForcing::Printed
            ),
            Err(Error::CaseMismatch(_))
        ));
    }

    /// With `dX = V(X) dB` the driftless limit has the closed form
    /// `U_T = V(X_T) ∫_{x_0}^{X_T} g(y) / V(y)² dy` for forcing `g dB`.
    #[test]
    fn driftless_scalar_matches_quadrature_oracle() {
        let sde = builtin("bounded_scalar").unwrap();
        let (path, x) = along(&sde, 4096, 11);
        let c = -0.25;
        let v = |y: f64| y.sin() + 2.0;
        let dv = |y: f64| y.cos();
        let x0 = sde.x0[0];
        let xt = x.last()[0];
        let gl = crate::quadrature::GaussLegendre::new(40).unwrap();
        for forcing in [LimitForcing::Printed, LimitForcing::Full] {
            let u = limit_sde_solve(
                LimitCase::ScalarDriftless,
                &sde,
                &x,
                &path,
                None,
                &LimitConstants::default(),
                forcing,
            )
            .unwrap();
            let extra = match forcing {
                LimitForcing::Printed => 0.0,
                LimitForcing::Full => gl.integrate(x0, xt, |y| dv(y).powi(2) / v(y)),
            };
            let expected = c * v(xt) * (dv(xt) - dv(x0) + extra);
            assert!(
                (u.last()[0] - expected).abs() < 1e-4,
                "{forcing}: {} vs {expected}",
                u.last()[0]
            );
        }
    }

    #[test]
    fn linear_field_printed_forcing_vanishes() {
        let sde = builtin("scalar_linear").unwrap();
        let (path, x) = along(&sde, 256, 2);
        let u = limit_sde_solve(
            LimitCase::ScalarDriftless,
            &sde,
            &x,
            &path,
            None,
            &LimitConstants::default(),
            LimitForcing::Printed,
        )
        .unwrap();
        assert!(u.values.iter().all(|&v| v == 0.0));
        let full = limit_sde_solve(
            LimitCase::ScalarDriftless,
            &sde,
            &x,
            &path,
            None,
            &LimitConstants::default(),
            LimitForcing::Full,
        )
        .unwrap();
        // U_T = −(1/4) X_T log(X_T / x_0) = −(1/4) X_T B_T.
        let xt = x.last()[0];
        let b = path.levels()[256 * 2 + 1];
        assert!((full.last()[0] + 0.25 * xt * b).abs() < 1e-4);
    }

    #[test]
    fn conditional_covariance_matches_monte_carlo() {
        let sde = builtin("fbm2d_rotation").unwrap();
        let (path, x) = along(&sde, 128, 5);
        let c = LimitConstants {
            kappa: Some(0.2),
            rho: None,
        };
        let cov = conditional_covariance(LimitCase::MultiDim, &sde, &x, &path, &c).unwrap();
        let samples: Vec<Vec<f64>> = (0..4000u64)
            .map(|s| {
                let w = brownian_increments(path.grid(), 1, s);
                limit_sde_solve(
                    LimitCase::MultiDim,
                    &sde,
                    &x,
                    &path,
                    Some(&w),
                    &c,
                    LimitForcing::Printed,
                )
                .unwrap()
                .last()
                .to_vec()
            })
            .collect();
        for i in 0..2 {
            let v: Vec<f64> = samples.iter().map(|s| s[i]).collect();
            let var = stats::variance(&v);
            // The sample variance of a Gaussian has relative SE sqrt(2/N).
            assert!((var / cov[i * 2 + i] - 1.0).abs() < 4.0 * (2.0f64 / 4000.0).sqrt());
        }
    }

    #[test]
    fn config_case_checks() {
        let cfg = LimitStudyConfig::new(
            builtin("bounded_scalar").unwrap(),
            LimitCase::ScalarDriftless,
            0.7,
            vec![8, 16],
            40,
            1,
        );
        assert!(distributional_limit_check(&cfg).is_err());
        let cfg = LimitStudyConfig::new(
            builtin("bounded_scalar").unwrap(),
            LimitCase::MultiDim,
            0.7,
            vec![8, 16],
            40,
            1,
        );
        assert!(matches!(pathwise_limit_check(&cfg), Err(Error::CaseMismatch(_))));
    }
}
