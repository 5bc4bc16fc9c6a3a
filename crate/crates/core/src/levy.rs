//! Discrete Lévy areas
//!
//! ```text
//! ζ^{ij}_{s,t} = ∫_s^t ∫_s^u dB^i dB^j − ∫_s^t ∫_u^t dB^i dB^j
//!             = 2 ∫_s^t (B^i_u − B^i_s) dB^j_u − ΔB^i ΔB^j
//! ```
//!
//! on each step of a coarse grid, with the Young integral evaluated by the
//! trapezoidal sum over the `M` sub-steps of a finer path. That sum is the
//! exact area of the piecewise-linear interpolation of the fine path.
//!
//! `Z_n(t_l) = Σ_{k<l} ζ^{ij}_{t_k,t_{k+1}}`; with `i = 0` (the clock) this
//! is the process usually written `z_n`.

use std::io::{self, Write};
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::fbm::{DrivingPath, DrivingSampler, SamplerMethod};
use crate::grid::TimeGrid;
use crate::output::{fmt_f64, write_comments, write_row};
use crate::stats;

pub const DEFAULT_SUB_FACTOR: usize = 32;

/// `2 ∫ (B^i − B^i_s) dB^j − ΔB^i ΔB^j` over fine steps `start..start+len`.
fn area(fine: &DrivingPath, start: usize, len: usize, i: usize, j: usize) -> f64 {
    let w = fine.width();
    let inc = fine.increments();
    let mut yi = 0.0;
    let mut yj = 0.0;
    let mut integral = 0.0;
    for l in start..start + len {
        let di = inc[l * w + i];
        let dj = inc[l * w + j];
        integral += (yi + 0.5 * di) * dj;
        yi += di;
        yj += dj;
    }
    2.0 * integral - yi * yj
}

fn refinement(fine: &DrivingPath, coarse_n: usize) -> Result<usize> {
    let n = fine.steps();
    if coarse_n == 0 || n % coarse_n != 0 {
        return Err(Error::IndivisibleCoarsening { n, factor: coarse_n });
    }
    Ok(n / coarse_n)
}

fn check_index(fine: &DrivingPath, i: usize) -> Result<()> {
    if i > fine.m() {
        Err(Error::IndexOutOfRange { index: i, m: fine.m() })
    } else {
        Ok(())
    }
}

/// `ζ^{ij}` over coarse step `k`, where each coarse step spans `sub_factor`
/// fine steps.
pub fn zeta_step(fine: &DrivingPath, sub_factor: usize, k: usize, i: usize, j: usize) -> Result<f64> {
    check_index(fine, i)?;
    check_index(fine, j)?;
    if sub_factor == 0 || (k + 1) * sub_factor > fine.steps() {
        return Err(invalid(format!(
            "step {k} with sub-factor {sub_factor} exceeds the fine grid"
        )));
    }
    Ok(match i.cmp(&j) {
        std::cmp::Ordering::Equal => 0.0,
        std::cmp::Ordering::Less => area(fine, k * sub_factor, sub_factor, i, j),
        std::cmp::Ordering::Greater => -area(fine, k * sub_factor, sub_factor, j, i),
    })
}

/// All `ζ^{ij}` on a coarse grid, stored `n × (m+1) × (m+1)`.
#[derive(Debug, Clone)]
pub struct AreaIncrements {
    pub grid: TimeGrid,
    pub sub_factor: usize,
    width: usize,
    zeta: Vec<f64>,
    pub fine: DrivingPath,
}

impl AreaIncrements {
    pub fn new(fine: &DrivingPath, coarse_n: usize) -> Result<Self> {
        let r = refinement(fine, coarse_n)?;
        let w = fine.width();
        let mut zeta = vec![0.0; coarse_n * w * w];
        for k in 0..coarse_n {
            for i in 0..w {
                for j in i + 1..w {
                    let z = area(fine, k * r, r, i, j);
                    zeta[(k * w + i) * w + j] = z;
                    zeta[(k * w + j) * w + i] = -z;
                }
            }
        }
        Ok(Self {
            grid: TimeGrid::new(fine.grid().horizon(), coarse_n)?,
            sub_factor: r,
            width: w,
            zeta,
            fine: fine.clone(),
        })
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.zeta[(k * self.width + i) * self.width + j]
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

/// Cumulative sums `Z_n(t_l)`, `l = 0..=coarse_n`.
pub fn z_process(fine: &DrivingPath, coarse_n: usize, i: usize, j: usize) -> Result<Vec<f64>> {
    check_index(fine, i)?;
    check_index(fine, j)?;
    if i == j {
        return Err(invalid("Z_n needs two distinct components"));
    }
    let r = refinement(fine, coarse_n)?;
    let (a, b, sign) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
    let mut out = Vec::with_capacity(coarse_n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 0..coarse_n {
        acc += sign * area(fine, k * r, r, a, b);
        out.push(acc);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AreaPair {
    /// Two independent fBm components: `Z_n`, normalised by `n^{4H−1}`.
    FbmFbm,
    /// Clock against an fBm: `z_n`, normalised by `n^{2H+1}`.
    FbmTime,
}

impl AreaPair {
    pub fn name(&self) -> &'static str {
        match self {
            AreaPair::FbmFbm => "fbm_fbm",
            AreaPair::FbmTime => "fbm_time",
        }
    }

    pub fn rate_exponent(&self, hurst: f64) -> f64 {
        match self {
            AreaPair::FbmFbm => 4.0 * hurst - 1.0,
            AreaPair::FbmTime => 2.0 * hurst + 1.0,
        }
    }

    /// Predicted `lim n^a E[Z_n(t)²] = 2 T^a c t`.
    pub fn predicted(&self, hurst: f64, horizon: f64, constant: f64, t: f64) -> f64 {
        2.0 * horizon.powf(self.rate_exponent(hurst)) * constant * t
    }

    fn components(&self) -> (usize, usize, usize) {
        // (m, i, j)
        match self {
            AreaPair::FbmFbm => (2, 1, 2),
            AreaPair::FbmTime => (1, 0, 1),
        }
    }
}

impl FromStr for AreaPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fbm_fbm" => Ok(AreaPair::FbmFbm),
            "fbm_time" => Ok(AreaPair::FbmTime),
            other => Err(invalid(format!(
                "unknown area pair `{other}` (expected fbm_fbm or fbm_time)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AreaStudyConfig {
    pub pair: AreaPair,
    pub hurst: f64,
    pub horizon: f64,
    pub n: usize,
    pub sub_factor: usize,
    pub paths: usize,
    pub seed: u64,
    pub method: SamplerMethod,
}

impl AreaStudyConfig {
    pub fn new(pair: AreaPair, hurst: f64, n: usize, paths: usize, seed: u64) -> Self {
        Self {
            pair,
            hurst,
            horizon: 1.0,
            n,
            sub_factor: DEFAULT_SUB_FACTOR,
            paths,
            seed,
            method: SamplerMethod::Circulant,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.5 && self.hurst < 1.0) {
            return Err(invalid(format!(
                "Hurst parameter must lie in (1/2, 1), got {}",
                self.hurst
            )));
        }
        if self.n == 0 || self.sub_factor == 0 || self.paths < 2 {
            return Err(invalid("need n >= 1, sub-factor >= 1 and at least 2 paths"));
        }
        Ok(())
    }
}

/// Simulated `Z_n` on the coarse grid for every path, row-major
/// `paths × (n+1)`.
pub fn simulate_z(cfg: &AreaStudyConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let (m, i, j) = cfg.pair.components();
    let fine_grid = TimeGrid::new(cfg.horizon, cfg.n * cfg.sub_factor)?;
    let sampler = DrivingSampler::new(fine_grid, cfg.hurst, m, cfg.method)?;
    let n = cfg.n;
    Ok(stats::par_paths(cfg.paths, cfg.seed, |seed| {
        let fine = sampler.sample(seed);
        z_process(&fine, n, i, j).expect("indices and grid validated")
    }))
}

/// Scaled second moment of `Z_n` at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRow {
    pub n: usize,
    pub t: f64,
    pub scaled_variance: f64,
    pub predicted: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct VarianceCheck {
    pub rows: Vec<MomentRow>,
    /// Regression of the scaled variance on `t`.
    pub linearity: stats::LinearFit,
}

impl VarianceCheck {
    pub fn write_csv<W: Write>(&self, w: &mut W, comments: &[String]) -> io::Result<()> {
        write_comments(w, comments)?;
        writeln!(w, "n,t,scaled_variance,predicted,stderr")?;
        for r in &self.rows {
            write_row(
                w,
                &[
                    r.n.to_string(),
                    fmt_f64(r.t),
                    fmt_f64(r.scaled_variance),
                    fmt_f64(r.predicted),
                    fmt_f64(r.stderr),
                ],
            )?;
        }
        Ok(())
    }
}

/// Monte Carlo estimate of `n^a E[Z_n(t)²]` at grid times `times` against
/// `2 T^a c t`, with `c = κ` or `ρ` supplied by the caller.
pub fn variance_limit_check(cfg: &AreaStudyConfig, times: &[f64], constant: f64) -> Result<VarianceCheck> {
    let z = simulate_z(cfg)?;
    let grid = TimeGrid::new(cfg.horizon, cfg.n)?;
    let scale = (cfg.n as f64).powf(cfg.pair.rate_exponent(cfg.hurst));
    let mut rows = Vec::with_capacity(times.len());
    for &t in times {
        let l = grid.index_of(t).ok_or(Error::OffGrid { t })?;
        let sq: Vec<f64> = z.iter().map(|path| scale * path[l] * path[l]).collect();
        rows.push(MomentRow {
            n: cfg.n,
            t,
            scaled_variance: stats::mean(&sq),
            predicted: cfg.pair.predicted(cfg.hurst, cfg.horizon, constant, t),
            stderr: stats::std_error(&sq),
        });
    }
    let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let vs: Vec<f64> = rows.iter().map(|r| r.scaled_variance).collect();
    let ses: Vec<f64> = rows.iter().map(|r| r.stderr.max(f64::MIN_POSITIVE)).collect();
    let linearity = if rows.len() >= 2 {
        stats::weighted_ols(&ts, &vs, &ses)?
    } else {
        stats::LinearFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            slope_se: f64::NAN,
            intercept_se: f64::NAN,
            r_squared: f64::NAN,
        }
    };
    Ok(VarianceCheck { rows, linearity })
}

/// Scaled second moments of increments `Z_n(t) − Z_n(s)` for pairs of grid
/// times; used for the stationarity and increment-bound checks.
pub fn increment_moments(cfg: &AreaStudyConfig, pairs: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    let z = simulate_z(cfg)?;
    let grid = TimeGrid::new(cfg.horizon, cfg.n)?;
    let scale = (cfg.n as f64).powf(cfg.pair.rate_exponent(cfg.hurst));
    pairs
        .iter()
        .map(|&(s, t)| {
            let a = grid.index_of(s).ok_or(Error::OffGrid { t: s })?;
            let b = grid.index_of(t).ok_or(Error::OffGrid { t })?;
            let sq: Vec<f64> = z.iter().map(|p| scale * (p[b] - p[a]).powi(2)).collect();
            Ok((stats::mean(&sq), stats::std_error(&sq)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicCheck {
    pub n: usize,
    /// `(E|n^{2H} Σ (ΔB)³ − 3 T^{2H} B_t|²)^{1/2}`.
    pub distance: f64,
    pub distance_se: f64,
    pub mean_sum: f64,
    pub mean_sum_se: f64,
}

/// Compares `n^{2H} Σ_{k < ⌊nt/T⌋} (ΔB_k)³` with `3 T^{2H} B_t` on the same
/// one-dimensional path, for each `n` in `ns` (all paths sampled on the
/// finest grid and coarsened, so the ladder is coupled).
pub fn cubic_sum_check(
    hurst: f64,
    horizon: f64,
    ns: &[usize],
    t: f64,
    paths: usize,
    seed: u64,
) -> Result<Vec<CubicCheck>> {
    let n_max = *ns.iter().max().ok_or_else(|| invalid("empty n list"))?;
    if let Some(&bad) = ns.iter().find(|&&n| n == 0 || n_max % n != 0) {
        return Err(Error::IndivisibleCoarsening { n: n_max, factor: bad });
    }
    let fine_grid = TimeGrid::new(horizon, n_max)?;
    let sampler = DrivingSampler::new(fine_grid, hurst, 1, SamplerMethod::Circulant)?;
    let per_path: Vec<Vec<(f64, f64)>> = stats::par_paths(paths, seed, |s| {
        let fine = sampler.sample(s);
        let b = fine.column(1);
        ns.iter()
            .map(|&n| {
                let r = n_max / n;
                let grid = TimeGrid::new(horizon, n).expect("valid grid");
                let l = grid.floor_index(t);
                let mut cubes = 0.0;
                let mut level = 0.0;
                for k in 0..l {
                    let d: f64 = b[k * r..(k + 1) * r].iter().sum();
                    cubes += d * d * d;
                    level += d;
                }
                let lhs = (n as f64).powf(2.0 * hurst) * cubes;
                let rhs = 3.0 * horizon.powf(2.0 * hurst) * level;
                (lhs, (lhs - rhs).powi(2))
            })
            .collect()
    });
    Ok(ns
        .iter()
        .enumerate()
        .map(|(idx, &n)| {
            let sums: Vec<f64> = per_path.iter().map(|v| v[idx].0).collect();
            let sq: Vec<f64> = per_path.iter().map(|v| v[idx].1).collect();
            let ms = stats::mean(&sq);
            let distance = ms.sqrt();
            CubicCheck {
                n,
                distance,
                // delta method for the square root
                distance_se: if distance > 0.0 {
                    stats::std_error(&sq) / (2.0 * distance)
                } else {
                    0.0
                },
                mean_sum: stats::mean(&sums),
                mean_sum_se: stats::std_error(&sums),
            }
        })
        .collect())
}
