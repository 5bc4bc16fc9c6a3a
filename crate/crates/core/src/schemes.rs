//! Euler, modified Euler and Crank-Nicolson schemes.
//!
//! ```text
//! Euler:     y = x + V(x) ΔB
//! modified:  y = x + V(x) ΔB + ½ Σ_{j≥1} ∂V_j V_j(x) (T/n)^{2H}
//! CN:        y = x + ½ (V(x) + V(y)) ΔB
//! ```
//!
//! The Crank-Nicolson equation is solved by fixed-point iteration started
//! from the Euler predictor. A step is refused when the map is not provably
//! contractive, i.e. when `½ L ‖ΔB‖_1 >= 1` for the field's Lipschitz bound
//! `L`.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::fbm::DrivingPath;
use crate::field::{SdeInstance, VectorField};
use crate::grid::TimeGrid;
use crate::output;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Euler,
    ModifiedEuler,
    CrankNicolson,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Euler, Scheme::ModifiedEuler, Scheme::CrankNicolson];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::ModifiedEuler => "modified_euler",
            Scheme::CrankNicolson => "cn",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "euler" => Ok(Scheme::Euler),
            "modified_euler" | "meuler" => Ok(Scheme::ModifiedEuler),
            "cn" | "crank_nicolson" => Ok(Scheme::CrankNicolson),
            other => Err(invalid(format!(
                "unknown scheme `{other}` (expected euler, modified_euler or cn)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnConfig {
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    pub contraction_guard: bool,
}

impl Default for CnConfig {
    fn default() -> Self {
        Self {
            fp_tol: 1e-13,
            fp_max_iter: 64,
            contraction_guard: true,
        }
    }
}

impl CnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fp_tol > 0.0) {
            return Err(invalid("fp_tol must be positive"));
        }
        if self.fp_max_iter == 0 {
            return Err(invalid("fp_max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Solution values on a uniform grid, row-major `(n+1) × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub dim: usize,
    pub values: Vec<f64>,
    /// `None` for closed-form trajectories.
    pub scheme: Option<Scheme>,
    /// Fixed-point iterations per step (Crank-Nicolson only).
    pub iterations: Vec<u32>,
}

impl Trajectory {
    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.value(self.grid.steps())
    }

    pub fn label(&self) -> &'static str {
        self.scheme.map_or("closed_form", |s| s.name())
    }

    /// Restriction to a coarser grid that this trajectory's grid refines.
    pub fn restrict(&self, coarse: &TimeGrid) -> Result<Trajectory> {
        let r = coarse
            .refinement_factor(&self.grid)
            .ok_or_else(|| invalid("grid does not refine the requested coarse grid"))?;
        let values = (0..=coarse.steps())
            .flat_map(|k| self.value(k * r).iter().copied())
            .collect();
        Ok(Trajectory {
            grid: *coarse,
            dim: self.dim,
            values,
            scheme: self.scheme,
            iterations: Vec::new(),
        })
    }

    pub fn write_csv<W: Write>(&self, w: &mut W, comments: &[String]) -> io::Result<()> {
        output::write_comments(w, comments)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|i| format!("x{i}")));
        output::write_row(w, &header)?;
        for k in 0..=self.grid.steps() {
            let mut row = vec![output::fmt_f64(self.grid.time(k))];
            row.extend(output::float_row(self.value(k)));
            output::write_row(w, &row)?;
        }
        Ok(())
    }
}

/// Sup-norm distance between two trajectories on the same grid.
pub fn sup_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    debug_assert_eq!(a.values.len(), b.values.len());
    a.values
        .iter()
        .zip(&b.values)
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn check_compatible(sde: &SdeInstance, path: &DrivingPath) -> Result<()> {
    if path.m() != sde.drivers() {
        return Err(Error::DimensionMismatch(format!(
            "SDE `{}` has m = {} but the driving path has m = {}",
            sde.name,
            sde.drivers(),
            path.m()
        )));
    }
    Ok(())
}

struct Scratch {
    cols: Vec<f64>,
    jac: Vec<f64>,
    vx: Vec<f64>,
    tmp: Vec<f64>,
    y: Vec<f64>,
    next: Vec<f64>,
}

impl Scratch {
    fn new(field: &dyn VectorField) -> Self {
        let d = field.dim();
        Self {
            cols: vec![0.0; d * field.width()],
            jac: vec![0.0; d * d],
            vx: vec![0.0; d],
            tmp: vec![0.0; d],
            y: vec![0.0; d],
            next: vec![0.0; d],
        }
    }
}

fn finite_or(values: &[f64], step: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { step })
    }
}

fn explicit_solve(sde: &SdeInstance, path: &DrivingPath, corrected: bool) -> Result<Trajectory> {
    check_compatible(sde, path)?;
    let field = sde.field.as_ref();
    let d = field.dim();
    let n = path.steps();
    let corr = 0.5 * path.grid().step_size().powf(2.0 * path.hurst());
    let mut s = Scratch::new(field);
    let mut values = vec![0.0; (n + 1) * d];
    values[..d].copy_from_slice(&sde.x0);
    for k in 0..n {
        let (head, tail) = values.split_at_mut((k + 1) * d);
        let x = &head[k * d..];
        let y = &mut tail[..d];
        field.apply(x, path.increment(k), &mut s.cols, &mut s.vx);
        for i in 0..d {
            y[i] = x[i] + s.vx[i];
        }
        if corrected {
            // s.cols still holds V(x)
            for j in 1..field.width() {
                field.jacobian(x, j, &mut s.jac);
                for i in 0..d {
                    let dot: f64 = (0..d).map(|q| s.jac[i * d + q] * s.cols[j * d + q]).sum();
                    y[i] += corr * dot;
                }
            }
        }
        finite_or(y, k)?;
    }
    Ok(Trajectory {
        grid: *path.grid(),
        dim: d,
        values,
        scheme: Some(if corrected {
            Scheme::ModifiedEuler
        } else {
            Scheme::Euler
        }),
        iterations: Vec::new(),
    })
}

pub fn euler_solve(sde: &SdeInstance, path: &DrivingPath) -> Result<Trajectory> {
    explicit_solve(sde, path, false)
}

pub fn modified_euler_solve(sde: &SdeInstance, path: &DrivingPath) -> Result<Trajectory> {
    explicit_solve(sde, path, true)
}

fn cn_step_into(
    field: &dyn VectorField,
    x: &[f64],
    db: &[f64],
    cfg: &CnConfig,
    step: usize,
    s: &mut Scratch,
    out: &mut [f64],
) -> Result<usize> {
    let d = x.len();
    if cfg.contraction_guard {
        let norm: f64 = db.iter().map(|v| v.abs()).sum();
        let ratio = 0.5 * field.lipschitz_bound() * norm;
        if ratio >= 1.0 {
            return Err(Error::NonContractive {
                step,
                increment_norm: norm,
                ratio,
            });
        }
    }
    field.apply(x, db, &mut s.cols, &mut s.vx);
    for i in 0..d {
        s.y[i] = x[i] + s.vx[i];
    }
    let mut residual = f64::INFINITY;
    for iter in 1..=cfg.fp_max_iter {
        field.apply(&s.y, db, &mut s.cols, &mut s.tmp);
        residual = 0.0;
        let mut scale = 0.0f64;
        for i in 0..d {
            s.next[i] = x[i] + 0.5 * (s.vx[i] + s.tmp[i]);
            residual = residual.max((s.next[i] - s.y[i]).abs());
            scale = scale.max(s.next[i].abs());
        }
        std::mem::swap(&mut s.y, &mut s.next);
        if !residual.is_finite() {
            return Err(Error::NonFinite { step });
        }
        // a few ulps of the state is the best any iteration can do
        if residual <= cfg.fp_tol.max(4.0 * f64::EPSILON * scale) {
            out.copy_from_slice(&s.y);
            return Ok(iter);
        }
    }
    Err(Error::NoConvergence {
        step,
        residual,
        iterations: cfg.fp_max_iter,
    })
}

/// One Crank-Nicolson step from `x` with increments `db`; returns the new
/// state and the number of fixed-point iterations.
pub fn cn_step(field: &dyn VectorField, x: &[f64], db: &[f64], cfg: &CnConfig) -> Result<(Vec<f64>, usize)> {
    cfg.validate()?;
    if db.len() != field.width() || x.len() != field.dim() {
        return Err(Error::DimensionMismatch(format!(
            "expected x in R^{} and dB in R^{}",
            field.dim(),
            field.width()
        )));
    }
    if db.iter().any(|v| !v.is_finite()) {
        return Err(invalid("increment is not finite"));
    }
    let mut s = Scratch::new(field);
    let mut out = vec![0.0; x.len()];
    let iters = cn_step_into(field, x, db, cfg, 0, &mut s, &mut out)?;
    Ok((out, iters))
}

pub fn cn_solve(sde: &SdeInstance, path: &DrivingPath, cfg: &CnConfig) -> Result<Trajectory> {
    check_compatible(sde, path)?;
    cfg.validate()?;
    let field = sde.field.as_ref();
    let d = field.dim();
    let n = path.steps();
    let mut s = Scratch::new(field);
    let mut values = vec![0.0; (n + 1) * d];
    values[..d].copy_from_slice(&sde.x0);
    let mut iterations = Vec::with_capacity(n);
    for k in 0..n {
        let (head, tail) = values.split_at_mut((k + 1) * d);
        let it = cn_step_into(field, &head[k * d..], path.increment(k), cfg, k, &mut s, &mut tail[..d])?;
        iterations.push(it as u32);
    }
    Ok(Trajectory {
        grid: *path.grid(),
        dim: d,
        values,
        scheme: Some(Scheme::CrankNicolson),
        iterations,
    })
}

pub fn solve(scheme: Scheme, sde: &SdeInstance, path: &DrivingPath, cfg: &CnConfig) -> Result<Trajectory> {
    match scheme {
        Scheme::Euler => euler_solve(sde, path),
        Scheme::ModifiedEuler => modified_euler_solve(sde, path),
        Scheme::CrankNicolson => cn_solve(sde, path, cfg),
    }
}

/// Continuous interpolation of a Crank-Nicolson trajectory,
/// `X_t = X_{t_k} + ½ (V(X_{t_k}) + V(X_{t_{k+1}})) (B_t − B_{t_k})`.
///
/// `fine` must refine the trajectory grid and contain `t` as a grid point.
pub fn interpolate_continuous(
    field: &dyn VectorField,
    traj: &Trajectory,
    fine: &DrivingPath,
    t: f64,
) -> Result<Vec<f64>> {
    let grid = &traj.grid;
    let r = grid
        .refinement_factor(fine.grid())
        .ok_or_else(|| invalid("driving path does not refine the trajectory grid"))?;
    let idx = fine.grid().index_of(t).ok_or(Error::OffGrid { t })?;
    let k = idx / r;
    if k == grid.steps() {
        return Ok(traj.last().to_vec());
    }
    let d = traj.dim;
    let w = fine.width();
    let mut db = vec![0.0; w];
    for fi in k * r..idx {
        for (acc, inc) in db.iter_mut().zip(fine.increment(fi)) {
            *acc += inc;
        }
    }
    let mut cols = vec![0.0; d * w];
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    field.apply(traj.value(k), &db, &mut cols, &mut a);
    field.apply(traj.value(k + 1), &db, &mut cols, &mut b);
    Ok((0..d).map(|i| traj.value(k)[i] + 0.5 * (a[i] + b[i])).collect())
}

/// Left-constant interpolation `X̃_t = X_{t_k}` on `[t_k, t_{k+1})`,
/// `X̃_T = X_T`.
pub fn interpolate_piecewise(traj: &Trajectory, t: f64) -> Vec<f64> {
    traj.value(traj.grid.floor_index(t)).to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceKind {
    /// Closed form when the SDE has one, fine-grid Crank-Nicolson otherwise.
    #[default]
    Auto,
    ClosedForm,
    FineCn,
}

impl FromStr for ReferenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(Self::Auto),
            "closed_form" | "closed" => Ok(Self::ClosedForm),
            "fine_cn" | "cn" => Ok(Self::FineCn),
            other => Err(invalid(format!(
                "unknown reference `{other}` (expected auto, closed_form or fine_cn)"
            ))),
        }
    }
}

pub fn closed_form_trajectory(sde: &SdeInstance, path: &DrivingPath) -> Result<Trajectory> {
    check_compatible(sde, path)?;
    let cf = sde
        .closed_form
        .as_ref()
        .ok_or_else(|| invalid(format!("SDE `{}` has no closed form", sde.name)))?;
    let d = sde.dim();
    let w = path.width();
    let levels = path.levels();
    let n = path.steps();
    let mut values = vec![0.0; (n + 1) * d];
    for k in 0..=n {
        cf.value(
            &sde.x0,
            path.grid().time(k),
            &levels[k * w..(k + 1) * w],
            &mut values[k * d..(k + 1) * d],
        );
    }
    Ok(Trajectory {
        grid: *path.grid(),
        dim: d,
        values,
        scheme: None,
        iterations: Vec::new(),
    })
}

/// Proxy for the exact solution on the grid of `fine_path`.
pub fn reference_solution(
    sde: &SdeInstance,
    fine_path: &DrivingPath,
    cfg: &CnConfig,
    kind: ReferenceKind,
) -> Result<Trajectory> {
    match kind {
        ReferenceKind::ClosedForm => closed_form_trajectory(sde, fine_path),
        ReferenceKind::FineCn => cn_solve(sde, fine_path, cfg),
        ReferenceKind::Auto if sde.closed_form.is_some() => closed_form_trajectory(sde, fine_path),
        ReferenceKind::Auto => cn_solve(sde, fine_path, cfg),
    }
}
