use crate::error::{invalid, Result};

/// Uniform partition `t_k = kT/n`, `k = 0..=n`, of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(invalid("grid needs at least one step"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_k`; the last point is exactly `T`.
    pub fn time(&self, k: usize) -> f64 {
        debug_assert!(k <= self.steps);
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |k| self.time(k))
    }

    /// Index of the greatest grid point `<= t`, clamped to `[0, n]`.
    pub fn floor_index(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 0;
        }
        if t >= self.horizon {
            return self.steps;
        }
        let mut k = ((t / self.horizon) * self.steps as f64).floor() as usize;
        k = k.min(self.steps);
        while k < self.steps && self.time(k + 1) <= t {
            k += 1;
        }
        while k > 0 && self.time(k) > t {
            k -= 1;
        }
        k
    }

    /// Index of the least grid point `>= t`, clamped to `[0, n]`.
    pub fn ceil_index(&self, t: f64) -> usize {
        let k = self.floor_index(t);
        if k < self.steps && self.time(k) < t {
            k + 1
        } else {
            k
        }
    }

    /// `η(t)`: greatest grid point not exceeding `t`.
    pub fn eta(&self, t: f64) -> f64 {
        self.time(self.floor_index(t))
    }

    /// `ε(t)`: least grid point not below `t`.
    pub fn eps(&self, t: f64) -> f64 {
        self.time(self.ceil_index(t))
    }

    /// Index `k` with `t_k == t` exactly (up to rounding of the grid formula).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = self.floor_index(t);
        let tol = 1e-12 * self.horizon;
        [k, (k + 1).min(self.steps)]
            .into_iter()
            .find(|&j| (self.time(j) - t).abs() <= tol)
    }

    /// Ratio `fine.n / self.n` when `fine` refines this grid.
    pub fn refinement_factor(&self, fine: &TimeGrid) -> Option<usize> {
        if (self.horizon - fine.horizon).abs() > 1e-12 * self.horizon {
            return None;
        }
        if fine.steps % self.steps != 0 {
            return None;
        }
        Some(fine.steps / self.steps)
    }
}
