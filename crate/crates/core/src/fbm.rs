//! Exact sampling of fractional Brownian motion on uniform grids.
//!
//! Paths are represented by their increments (fractional Gaussian noise),
//! which form a stationary Gaussian sequence with autocovariance
//!
//! ```text
//! γ(p) = ½ h^{2H} (|p+1|^{2H} + |p-1|^{2H} - 2|p|^{2H}),   h = T/n.
//! ```
//!
//! Two exact samplers are provided: a dense Cholesky factorisation (guarded
//! at `n <= 4096`) and circulant embedding, which is the default.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::output;
use crate::rng::{derive_seed, tags, GaussianStream};

/// Largest grid handled by [`CholeskySampler`].
pub const CHOLESKY_MAX_STEPS: usize = 1 << 12;

/// Relative tolerance on negative circulant eigenvalues.
pub const EIGENVALUE_TOLERANCE: f64 = 1e-9;

fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.0 && hurst < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("Hurst parameter must lie in (0, 1), got {hurst}")))
    }
}

/// `E[B_s B_t] = ½(t^{2H} + s^{2H} - |t-s|^{2H})`.
pub fn fbm_covariance(s: f64, t: f64, hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    if !(s >= 0.0 && t >= 0.0) {
        return Err(invalid(format!("times must be nonnegative, got s = {s}, t = {t}")));
    }
    let two_h = 2.0 * hurst;
    Ok(0.5 * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h)))
}

/// Autocovariance `γ(lag)` of fGn increments on a grid of spacing `step`.
pub fn fgn_autocovariance(lag: usize, hurst: f64, step: f64) -> f64 {
    let two_h = 2.0 * hurst;
    let p = lag as f64;
    let unit = if lag == 0 {
        1.0
    } else {
        0.5 * ((p + 1.0).powf(two_h) + (p - 1.0).powf(two_h) - 2.0 * p.powf(two_h))
    };
    unit * step.powf(two_h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplerMethod {
    Cholesky,
    #[default]
    Circulant,
}

impl FromStr for SamplerMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cholesky" => Ok(Self::Cholesky),
            "circulant" => Ok(Self::Circulant),
            other => Err(invalid(format!(
                "unknown sampler `{other}` (expected cholesky or circulant)"
            ))),
        }
    }
}

impl fmt::Display for SamplerMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cholesky => "cholesky",
            Self::Circulant => "circulant",
        })
    }
}

/// Dense Cholesky sampler: increments are `L z` with `L Lᵀ = [γ(|j-k|)]`.
#[derive(Clone)]
pub struct CholeskySampler {
    n: usize,
    lower: DMatrix<f64>,
}

impl CholeskySampler {
    pub fn new(grid: &TimeGrid, hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        let n = grid.steps();
        if n > CHOLESKY_MAX_STEPS {
            return Err(Error::CholeskyTooLarge {
                n,
                limit: CHOLESKY_MAX_STEPS,
            });
        }
        let gamma: Vec<f64> = (0..n).map(|p| fgn_autocovariance(p, hurst, grid.step_size())).collect();
        let cov = DMatrix::from_fn(n, n, |i, j| gamma[i.abs_diff(j)]);
        let chol = cov.cholesky().ok_or(Error::NotPositiveDefinite { n })?;
        Ok(Self {
            n,
            lower: chol.unpack(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn sample_into(&self, stream: &mut GaussianStream, out: &mut [f64]) {
        assert_eq!(out.len(), self.n);
        let mut z = vec![0.0; self.n];
        stream.fill_normal(&mut z);
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.lower.row(i);
            *o = (0..=i).map(|j| row[j] * z[j]).sum();
        }
    }
}

/// Circulant embedding (Davies-Harte) sampler.
///
/// The first row `(γ(0), …, γ(n), γ(n-1), …, γ(1))` of a `2n × 2n` circulant
/// matrix is diagonalised by the DFT; a complex white noise shaped by the
/// square roots of its eigenvalues yields exact fGn in the real part.
#[derive(Clone)]
pub struct CirculantSampler {
    n: usize,
    eigenvalues: Vec<f64>,
    scale: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl CirculantSampler {
    pub fn new(grid: &TimeGrid, hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        let n = grid.steps();
        let size = 2 * n;
        let h = grid.step_size();
        let mut row: Vec<Complex64> = (0..size)
            .map(|k| {
                let lag = if k <= n { k } else { size - k };
                Complex64::new(fgn_autocovariance(lag, hurst, h), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(size);
        fft.process(&mut row);

        let eigenvalues: Vec<f64> = row.iter().map(|c| c.re).collect();
        let max_abs = eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let floor = -EIGENVALUE_TOLERANCE * max_abs;
        if let Some((index, &value)) = eigenvalues.iter().enumerate().find(|(_, &v)| v < floor) {
            return Err(Error::NegativeEigenvalue {
                index,
                value,
                tolerance: EIGENVALUE_TOLERANCE,
            });
        }
        let scale = eigenvalues.iter().map(|&l| (l.max(0.0) / size as f64).sqrt()).collect();
        Ok(Self {
            n,
            eigenvalues,
            scale,
            fft,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Eigenvalues of the circulant embedding (before clamping).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn sample_into(&self, stream: &mut GaussianStream, out: &mut [f64]) {
        assert_eq!(out.len(), self.n);
        let mut buf: Vec<Complex64> = self
            .scale
            .iter()
            .map(|&s| {
                let re = stream.normal();
                let im = stream.normal();
                Complex64::new(s * re, s * im)
            })
            .collect();
        self.fft.process(&mut buf);
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.re;
        }
    }
}

/// Either exact sampler behind one interface.
#[derive(Clone)]
pub enum FgnSampler {
    Cholesky(CholeskySampler),
    Circulant(CirculantSampler),
}

impl FgnSampler {
    pub fn new(grid: &TimeGrid, hurst: f64, method: SamplerMethod) -> Result<Self> {
        Ok(match method {
            SamplerMethod::Cholesky => Self::Cholesky(CholeskySampler::new(grid, hurst)?),
            SamplerMethod::Circulant => Self::Circulant(CirculantSampler::new(grid, hurst)?),
        })
    }

    pub fn sample_into(&self, stream: &mut GaussianStream, out: &mut [f64]) {
        match self {
            Self::Cholesky(s) => s.sample_into(stream, out),
            Self::Circulant(s) => s.sample_into(stream, out),
        }
    }

    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let n = match self {
            Self::Cholesky(s) => s.len(),
            Self::Circulant(s) => s.len(),
        };
        let mut out = vec![0.0; n];
        self.sample_into(&mut GaussianStream::new(seed), &mut out);
        out
    }
}

pub fn sample_fbm_cholesky(grid: &TimeGrid, hurst: f64, seed: u64) -> Result<Vec<f64>> {
    Ok(FgnSampler::new(grid, hurst, SamplerMethod::Cholesky)?.sample(seed))
}

pub fn sample_fbm_circulant(grid: &TimeGrid, hurst: f64, seed: u64) -> Result<Vec<f64>> {
    Ok(FgnSampler::new(grid, hurst, SamplerMethod::Circulant)?.sample(seed))
}

/// Increments of `B = (B^0, B^1, …, B^m)` on a uniform grid, with `B^0_t = t`.
///
/// `increments` is row-major `n × (m+1)`: row `k` holds `B_{t_{k+1}} - B_{t_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingPath {
    grid: TimeGrid,
    hurst: f64,
    m: usize,
    increments: Vec<f64>,
    seed: u64,
}

impl DrivingPath {
    /// Builds a path from stochastic increments; `columns[j]` are the
    /// increments of `B^{j+1}`. Column 0 is filled with `T/n`.
    pub fn from_columns(grid: TimeGrid, hurst: f64, columns: &[Vec<f64>], seed: u64) -> Result<Self> {
        let n = grid.steps();
        let m = columns.len();
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "column of length {} on a grid with {n} steps",
                c.len()
            )));
        }
        let width = m + 1;
        let mut increments = vec![0.0; n * width];
        let h = grid.step_size();
        for k in 0..n {
            increments[k * width] = h;
            for (j, c) in columns.iter().enumerate() {
                increments[k * width + j + 1] = c[k];
            }
        }
        Ok(Self {
            grid,
            hurst,
            m,
            increments,
            seed,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// Number of stochastic components.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn width(&self) -> usize {
        self.m + 1
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    /// `B_{t_{k+1}} - B_{t_k}` for all components.
    pub fn increment(&self, k: usize) -> &[f64] {
        let w = self.width();
        &self.increments[k * w..(k + 1) * w]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Increments of a single component.
    pub fn column(&self, j: usize) -> Vec<f64> {
        let w = self.width();
        (0..self.steps()).map(|k| self.increments[k * w + j]).collect()
    }

    /// Cumulative levels, row-major `(n+1) × (m+1)`, starting from zero.
    pub fn levels(&self) -> Vec<f64> {
        let w = self.width();
        let n = self.steps();
        let mut out = vec![0.0; (n + 1) * w];
        for k in 0..n {
            for j in 0..w {
                out[(k + 1) * w + j] = out[k * w + j] + self.increments[k * w + j];
            }
        }
        // the clock component is exact
        for k in 0..=n {
            out[k * w] = self.grid.time(k);
        }
        out
    }

    /// Levels of a single component at every grid point.
    pub fn level_column(&self, j: usize) -> Vec<f64> {
        if j == 0 {
            return self.grid.times().collect();
        }
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.steps() + 1);
        out.push(0.0);
        for k in 0..self.steps() {
            acc += self.increments[k * self.width() + j];
            out.push(acc);
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: &mut W, comments: &[String]) -> io::Result<()> {
        output::write_comments(w, comments)?;
        let mut header = vec!["t".to_string()];
        header.extend((0..self.width()).map(|j| format!("B{j}")));
        output::write_row(w, &header)?;
        let levels = self.levels();
        let width = self.width();
        for k in 0..=self.steps() {
            let mut row = vec![output::fmt_f64(self.grid.time(k))];
            row.extend(output::float_row(&levels[k * width..(k + 1) * width]));
            output::write_row(w, &row)?;
        }
        Ok(())
    }
}

/// Reusable sampler of `m`-component driving paths on a fixed grid.
///
/// Component `j >= 1` of the path with seed `s` uses the stream
/// `derive_seed(s, [COMPONENT, j])`.
#[derive(Clone)]
pub struct DrivingSampler {
    grid: TimeGrid,
    hurst: f64,
    m: usize,
    sampler: Option<FgnSampler>,
}

impl DrivingSampler {
    pub fn new(grid: TimeGrid, hurst: f64, m: usize, method: SamplerMethod) -> Result<Self> {
        check_hurst(hurst)?;
        let sampler = if m > 0 {
            Some(FgnSampler::new(&grid, hurst, method)?)
        } else {
            None
        };
        Ok(Self {
            grid,
            hurst,
            m,
            sampler,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn sample(&self, seed: u64) -> DrivingPath {
        let columns: Vec<Vec<f64>> = (1..=self.m)
            .map(|j| {
                let mut col = vec![0.0; self.grid.steps()];
                let mut stream = GaussianStream::new(derive_seed(seed, &[tags::COMPONENT, j as u64]));
                self.sampler
                    .as_ref()
                    .expect("sampler exists when m > 0")
                    .sample_into(&mut stream, &mut col);
                col
            })
            .collect();
        DrivingPath::from_columns(self.grid, self.hurst, &columns, seed).expect("columns match the grid")
    }
}

pub fn sample_driving(grid: TimeGrid, hurst: f64, m: usize, seed: u64, method: SamplerMethod) -> Result<DrivingPath> {
    Ok(DrivingSampler::new(grid, hurst, m, method)?.sample(seed))
}

/// Restriction of `path` to the grid with `n / factor` steps: each coarse
/// increment is the sum of `factor` consecutive fine increments.
pub fn coarsen(path: &DrivingPath, factor: usize) -> Result<DrivingPath> {
    let n = path.steps();
    if factor == 0 || n % factor != 0 {
        return Err(Error::IndivisibleCoarsening { n, factor });
    }
    if factor == 1 {
        return Ok(path.clone());
    }
    let coarse_n = n / factor;
    let grid = TimeGrid::new(path.grid.horizon(), coarse_n)?;
    let w = path.width();
    let mut increments = vec![0.0; coarse_n * w];
    for k in 0..coarse_n {
        increments[k * w] = grid.step_size();
        for j in 1..w {
            increments[k * w + j] = (k * factor..(k + 1) * factor).map(|i| path.increments[i * w + j]).sum();
        }
    }
    Ok(DrivingPath {
        grid,
        hurst: path.hurst,
        m: path.m,
        increments,
        seed: path.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn covariance_examples() {
        assert_relative_eq!(
            fbm_covariance(0.7, 0.7, 0.8).unwrap(),
            0.7f64.powf(1.6),
            epsilon = 1e-15
        );
        assert_relative_eq!(fbm_covariance(0.3, 1.9, 0.5).unwrap(), 0.3, epsilon = 1e-15);
        assert_relative_eq!(
            fbm_covariance(1.0, 2.0, 0.75).unwrap(),
            std::f64::consts::SQRT_2,
            epsilon = 1e-14
        );
        assert_eq!(
            fbm_covariance(1.0, 2.5, 0.6).unwrap(),
            fbm_covariance(2.5, 1.0, 0.6).unwrap()
        );
    }

    #[test]
    fn covariance_domain_errors() {
        assert!(fbm_covariance(1.0, 1.0, 0.0).is_err());
        assert!(fbm_covariance(1.0, 1.0, 1.0).is_err());
        assert!(fbm_covariance(-1.0, 1.0, 0.7).is_err());
    }

    #[test]
    fn autocovariance_lag_one_closed_form() {
        assert_relative_eq!(
            fgn_autocovariance(1, 0.75, 1.0),
            0.5 * (2f64.powf(1.5) - 2.0),
            epsilon = 1e-15
        );
        assert_eq!(fgn_autocovariance(3, 0.5, 0.1), 0.0);
    }

    #[test]
    fn white_noise_has_flat_spectrum() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let s = CirculantSampler::new(&grid, 0.5).unwrap();
        for &l in s.eigenvalues() {
            assert!((l - 1.0 / 64.0).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenvalues_nonnegative_across_hurst() {
        let grid = TimeGrid::new(1.0, 300).unwrap();
        for h in [0.05, 0.3, 0.55, 0.75, 0.95, 0.99] {
            let s = CirculantSampler::new(&grid, h).unwrap();
            let max = s.eigenvalues().iter().cloned().fold(0.0, f64::max);
            assert!(s.eigenvalues().iter().all(|&l| l >= -1e-12 * max), "H = {h}");
        }
    }

    #[test]
    fn samplers_are_deterministic() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        for method in [SamplerMethod::Cholesky, SamplerMethod::Circulant] {
            let s = FgnSampler::new(&grid, 0.7, method).unwrap();
            let a = s.sample(11);
            let b = s.sample(11);
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert_ne!(a, s.sample(12));
        }
    }

    #[test]
    fn cholesky_guard() {
        let grid = TimeGrid::new(1.0, CHOLESKY_MAX_STEPS + 1).unwrap();
        assert!(matches!(
            CholeskySampler::new(&grid, 0.7),
            Err(Error::CholeskyTooLarge { .. })
        ));
    }

    #[test]
    fn pure_drift_path() {
        let grid = TimeGrid::new(2.0, 8).unwrap();
        let p = sample_driving(grid, 0.7, 0, 1, SamplerMethod::Circulant).unwrap();
        assert_eq!(p.width(), 1);
        assert!(p.increments().iter().all(|&x| x == 0.25));
    }

    #[test]
    fn coarsen_identity_and_full() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let p = sample_driving(grid, 0.7, 2, 5, SamplerMethod::Circulant).unwrap();
        assert_eq!(coarsen(&p, 1).unwrap(), p);
        let one = coarsen(&p, 64).unwrap();
        let levels = p.levels();
        for j in 0..3 {
            assert!((one.increment(0)[j] - levels[64 * 3 + j]).abs() < 1e-12);
        }
        assert!(matches!(coarsen(&p, 3), Err(Error::IndivisibleCoarsening { .. })));
        assert!(coarsen(&p, 0).is_err());
    }

    #[test]
    fn csv_shape() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let p = sample_driving(grid, 0.7, 2, 42, SamplerMethod::Circulant).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf, &["H=0.7".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "# H=0.7");
        assert_eq!(lines[1], "t,B0,B1,B2");
        assert_eq!(lines.len(), 2 + 17);
        assert!(lines[2..].iter().all(|l| l.split(',').count() == 4));
    }
}
