//! Coefficient fields `V = (V_0, V_1, …, V_m): R^d → L(R^{m+1}, R^d)` and the
//! registry of built-in test equations.
//!
//! Layout conventions used throughout the crate:
//!
//! * `eval` fills a column-major `d × (m+1)` buffer: `out[j*d + i] = V^i_j(x)`.
//! * `jacobian` fills a row-major `d × d` buffer: `out[i*d + k] = ∂_k V^i_j(x)`.
//! * `hessian` fills `out[i] = ∂_a ∂_b V^i_j(x)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub trait VectorField: Send + Sync {
    /// State dimension `d`.
    fn dim(&self) -> usize;

    /// Number of stochastic drivers `m`; the field has `m + 1` columns.
    fn drivers(&self) -> usize;

    fn eval(&self, x: &[f64], out: &mut [f64]);

    fn jacobian(&self, x: &[f64], j: usize, out: &mut [f64]);

    fn hessian(&self, x: &[f64], j: usize, a: usize, b: usize, out: &mut [f64]);

    /// Bound on `sup_x max_j ‖∂V_j(x)‖` used by the Crank-Nicolson contraction
    /// guard.
    fn lipschitz_bound(&self) -> f64;

    /// True when `V_0 ≡ 0`.
    fn drift_vanishes(&self) -> bool;

    fn width(&self) -> usize {
        self.drivers() + 1
    }

    /// Writes `V(x)·dB = Σ_j V_j(x) dB^j` into `out`.
    fn apply(&self, x: &[f64], db: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        let d = self.dim();
        self.eval(x, scratch);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, &dbj) in db.iter().enumerate() {
            if dbj == 0.0 {
                continue;
            }
            for i in 0..d {
                out[i] += scratch[j * d + i] * dbj;
            }
        }
    }
}

/// Analytic solution `x ↦ X_t` given the driver levels `B_t` (width `m+1`).
pub trait ClosedForm: Send + Sync {
    fn value(&self, x0: &[f64], t: f64, levels: &[f64], out: &mut [f64]);
}

/// `V_j(x) = c_j` for all `x`.
#[derive(Debug, Clone)]
pub struct ConstantField {
    d: usize,
    m: usize,
    columns: Vec<f64>,
}

impl ConstantField {
    /// `columns` is column-major `d × (m+1)`.
    pub fn new(d: usize, m: usize, columns: Vec<f64>) -> Result<Self> {
        if columns.len() != d * (m + 1) {
            return Err(Error::DimensionMismatch(format!(
                "constant field needs {} entries, got {}",
                d * (m + 1),
                columns.len()
            )));
        }
        Ok(Self { d, m, columns })
    }

    pub fn zero(d: usize, m: usize) -> Self {
        Self {
            d,
            m,
            columns: vec![0.0; d * (m + 1)],
        }
    }
}

impl VectorField for ConstantField {
    fn dim(&self) -> usize {
        self.d
    }
    fn drivers(&self) -> usize {
        self.m
    }
    fn eval(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.columns);
    }
    fn jacobian(&self, _x: &[f64], _j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
    fn hessian(&self, _x: &[f64], _j: usize, _a: usize, _b: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
    fn lipschitz_bound(&self) -> f64 {
        0.0
    }
    fn drift_vanishes(&self) -> bool {
        self.columns[..self.d].iter().all(|&c| c == 0.0)
    }
}

/// Scalar linear field `V_0(x) = a x`, `V_1(x) = σ x`.
///
/// Not bounded, but globally Lipschitz with constant `max(|a|, |σ|)`.
#[derive(Debug, Clone, Copy)]
pub struct LinearScalar {
    pub drift: f64,
    pub sigma: f64,
}

impl VectorField for LinearScalar {
    fn dim(&self) -> usize {
        1
    }
    fn drivers(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.drift * x[0];
        out[1] = self.sigma * x[0];
    }
    fn jacobian(&self, _x: &[f64], j: usize, out: &mut [f64]) {
        out[0] = if j == 0 { self.drift } else { self.sigma };
    }
    fn hessian(&self, _x: &[f64], _j: usize, _a: usize, _b: usize, out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn lipschitz_bound(&self) -> f64 {
        self.drift.abs().max(self.sigma.abs())
    }
    fn drift_vanishes(&self) -> bool {
        self.drift == 0.0
    }
}

/// `X_t = x_0 exp(a t + σ B_t)`.
#[derive(Debug, Clone, Copy)]
pub struct LinearScalarSolution {
    pub drift: f64,
    pub sigma: f64,
}

impl ClosedForm for LinearScalarSolution {
    fn value(&self, x0: &[f64], t: f64, levels: &[f64], out: &mut [f64]) {
        out[0] = x0[0] * (self.drift * t + self.sigma * levels[1]).exp();
    }
}

/// `V_0(x) = cos x` (optional), `V_1(x) = sin x + 2`.
#[derive(Debug, Clone, Copy)]
pub struct BoundedScalar {
    pub with_drift: bool,
}

impl VectorField for BoundedScalar {
    fn dim(&self) -> usize {
        1
    }
    fn drivers(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out[0] = if self.with_drift { x[0].cos() } else { 0.0 };
        out[1] = x[0].sin() + 2.0;
    }
    fn jacobian(&self, x: &[f64], j: usize, out: &mut [f64]) {
        out[0] = match (j, self.with_drift) {
            (0, true) => -x[0].sin(),
            (0, false) => 0.0,
            _ => x[0].cos(),
        };
    }
    fn hessian(&self, x: &[f64], j: usize, _a: usize, _b: usize, out: &mut [f64]) {
        out[0] = match (j, self.with_drift) {
            (0, true) => -x[0].cos(),
            (0, false) => 0.0,
            _ => -x[0].sin(),
        };
    }
    fn lipschitz_bound(&self) -> f64 {
        1.0
    }
    fn drift_vanishes(&self) -> bool {
        !self.with_drift
    }
}

/// Two-dimensional non-commuting field
/// `V_1(x) = (sin x_2, cos x_1)`, `V_2(x) = (cos x_2, sin x_1)`, `V_0 ≡ 0`.
#[derive(Debug, Clone, Copy)]
pub struct Rotation2d;

impl VectorField for Rotation2d {
    fn dim(&self) -> usize {
        2
    }
    fn drivers(&self) -> usize {
        2
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let (s1, c1) = x[0].sin_cos();
        let (s2, c2) = x[1].sin_cos();
        out[..2].copy_from_slice(&[0.0, 0.0]);
        out[2..4].copy_from_slice(&[s2, c1]);
        out[4..6].copy_from_slice(&[c2, s1]);
    }
    fn jacobian(&self, x: &[f64], j: usize, out: &mut [f64]) {
        let (s1, c1) = x[0].sin_cos();
        let (s2, c2) = x[1].sin_cos();
        let jac = match j {
            0 => [0.0; 4],
            1 => [0.0, c2, -s1, 0.0],
            _ => [0.0, -s2, c1, 0.0],
        };
        out.copy_from_slice(&jac);
    }
    fn hessian(&self, x: &[f64], j: usize, a: usize, b: usize, out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = 0.0;
        if a != b || j == 0 {
            return;
        }
        let (s1, c1) = x[0].sin_cos();
        let (s2, c2) = x[1].sin_cos();
        match (j, a) {
            (1, 0) => out[1] = -c1,
            (1, _) => out[0] = -s2,
            (_, 0) => out[1] = -s1,
            _ => out[0] = -c2,
        }
    }
    fn lipschitz_bound(&self) -> f64 {
        1.0
    }
    fn drift_vanishes(&self) -> bool {
        true
    }
}

/// An equation `X_t = x_0 + ∫_0^t V(X_s) dB_s`.
#[derive(Clone)]
pub struct SdeInstance {
    pub name: String,
    pub field: Arc<dyn VectorField>,
    pub x0: Vec<f64>,
    pub closed_form: Option<Arc<dyn ClosedForm>>,
}

impl fmt::Debug for SdeInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeInstance")
            .field("name", &self.name)
            .field("d", &self.dim())
            .field("m", &self.drivers())
            .field("x0", &self.x0)
            .field("closed_form", &self.closed_form.is_some())
            .finish()
    }
}

impl SdeInstance {
    pub fn new(name: impl Into<String>, field: Arc<dyn VectorField>, x0: Vec<f64>) -> Result<Self> {
        if x0.len() != field.dim() {
            return Err(Error::DimensionMismatch(format!(
                "initial value has length {} but the field has d = {}",
                x0.len(),
                field.dim()
            )));
        }
        Ok(Self {
            name: name.into(),
            field,
            x0,
            closed_form: None,
        })
    }

    pub fn with_closed_form(mut self, cf: Arc<dyn ClosedForm>) -> Self {
        self.closed_form = Some(cf);
        self
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn drivers(&self) -> usize {
        self.field.drivers()
    }
}

/// `φ_{jj'}(x) = ∂V_j(x) V_{j'}(x) − ∂V_{j'}(x) V_j(x)`.
pub fn phi_coefficient(field: &dyn VectorField, x: &[f64], j: usize, jp: usize) -> Result<Vec<f64>> {
    let m = field.drivers();
    for idx in [j, jp] {
        if idx > m {
            return Err(Error::IndexOutOfRange { index: idx, m });
        }
    }
    let d = field.dim();
    let mut out = vec![0.0; d];
    if j == jp {
        return Ok(out);
    }
    let mut v = vec![0.0; d * (m + 1)];
    field.eval(x, &mut v);
    let mut jac = vec![0.0; d * d];
    for (a, b, sign) in [(j, jp, 1.0), (jp, j, -1.0)] {
        field.jacobian(x, a, &mut jac);
        for i in 0..d {
            let dot: f64 = (0..d).map(|k| jac[i * d + k] * v[b * d + k]).sum();
            out[i] += sign * dot;
        }
    }
    Ok(out)
}

/// Names accepted by [`builtin`].
pub fn builtin_names() -> &'static [&'static str] {
    &[
        "scalar_linear",
        "scalar_linear_drift",
        "fbm2d_rotation",
        "bounded_scalar",
        "bounded_scalar_drift",
    ]
}

/// Registry of test equations.
///
/// | name | d | m | fields | x0 |
/// |---|---|---|---|---|
/// | `scalar_linear` | 1 | 1 | `V_1 = x` | 1 |
/// | `scalar_linear_drift` | 1 | 1 | `V_0 = x/2`, `V_1 = x` | 1 |
/// | `fbm2d_rotation` | 2 | 2 | see [`Rotation2d`] | (1, 0.5) |
/// | `bounded_scalar` | 1 | 1 | `V_1 = sin x + 2` | 1 |
/// | `bounded_scalar_drift` | 1 | 1 | `V_0 = cos x`, `V_1 = sin x + 2` | 1 |
///
/// The linear entries have closed forms `x_0 exp(a t + σ B_t)`. Note that in
/// `scalar_linear_drift` the two columns commute, so `φ_{10} ≡ 0`; the
/// `bounded_scalar_drift` entry has `φ_{10}(x) = 1 + 2 sin x`.
pub fn builtin(name: &str) -> Result<SdeInstance> {
    let linear = |drift: f64, sigma: f64| -> Result<SdeInstance> {
        Ok(
            SdeInstance::new(name, Arc::new(LinearScalar { drift, sigma }), vec![1.0])?
                .with_closed_form(Arc::new(LinearScalarSolution { drift, sigma })),
        )
    };
    match name {
        "scalar_linear" => linear(0.0, 1.0),
        "scalar_linear_drift" => linear(0.5, 1.0),
        "fbm2d_rotation" => SdeInstance::new(name, Arc::new(Rotation2d), vec![1.0, 0.5]),
        "bounded_scalar" => SdeInstance::new(name, Arc::new(BoundedScalar { with_drift: false }), vec![1.0]),
        "bounded_scalar_drift" => SdeInstance::new(name, Arc::new(BoundedScalar { with_drift: true }), vec![1.0]),
        _ => Err(Error::UnknownSde {
            name: name.to_string(),
            known: builtin_names().join(", "),
        }),
    }
}
