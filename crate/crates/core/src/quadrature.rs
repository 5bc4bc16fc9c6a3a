//! Gauss-Legendre rules and geometric grading.

use crate::error::{invalid, Result};

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule on `[-1, 1]`, nodes found by Newton's method on `P_n`.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("Gauss-Legendre rule needs at least one node"));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            // Tricomi's initial guess
            let theta = std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5);
            let mut x = (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf)) * theta.cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(c + h * x))
            .sum();
        sum * h
    }

    /// Tensor-product rule on `[a, b] × [c, d]`.
    pub fn integrate_2d<F: FnMut(f64, f64) -> f64>(&self, (a, b): (f64, f64), (c, d): (f64, f64), mut f: F) -> f64 {
        self.integrate(c, d, |t| self.integrate(a, b, |s| f(s, t)))
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Splits `[a, b]` at its midpoint and grades each half geometrically toward
/// its outer endpoint: pieces shrink by `ratio` per level, `levels` times.
///
/// The first piece starts at `a` and the last ends at `b`; pieces are
/// returned in increasing order.
pub fn graded_pieces(a: f64, b: f64, levels: usize, ratio: f64) -> Vec<(f64, f64)> {
    let m = 0.5 * (a + b);
    let h = m - a;
    let mut left = Vec::with_capacity(levels + 1);
    let mut inner = h;
    for _ in 0..levels {
        let outer = inner * ratio;
        left.push((a + outer, a + inner));
        inner = outer;
    }
    left.push((a, a + inner));
    left.reverse();
    let right: Vec<(f64, f64)> = left
        .iter()
        .rev()
        .map(|&(lo, hi)| (b - (hi - a), b - (lo - a)))
        .collect();
    let mut out = left;
    out.extend(right);
    // avoid rounding gaps at the midpoint
    let k = levels;
    out[k].1 = m;
    out[k + 1].0 = m;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_polynomials() {
        for n in 1..12 {
            let gl = GaussLegendre::new(n).unwrap();
            for deg in 0..(2 * n) {
                let v = gl.integrate(-1.0, 2.0, |x| x.powi(deg as i32));
                let exact = (2f64.powi(deg as i32 + 1) - (-1f64).powi(deg as i32 + 1)) / (deg as f64 + 1.0);
                assert!((v - exact).abs() < 1e-12 * exact.abs().max(1.0), "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn weights_sum_to_two_and_nodes_sorted() {
        for n in [4, 48, 96, 200] {
            let gl = GaussLegendre::new(n).unwrap();
            assert!((gl.weights().iter().sum::<f64>() - 2.0).abs() < 1e-13);
            assert!(gl.nodes().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn smooth_integral() {
        let gl = GaussLegendre::new(20).unwrap();
        let v = gl.integrate(0.0, std::f64::consts::PI, f64::sin);
        assert!((v - 2.0).abs() < 1e-14);
        let v2 = gl.integrate_2d((0.0, 1.0), (0.0, 2.0), |s, t| s * t.exp());
        assert!((v2 - 0.5 * (2f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn graded_pieces_tile_interval() {
        let p = graded_pieces(-1.0, 3.0, 6, 0.2);
        assert_eq!(p.len(), 14);
        assert_eq!(p[0].0, -1.0);
        assert_eq!(p[13].1, 3.0);
        for w in p.windows(2) {
            assert!((w[0].1 - w[1].0).abs() < 1e-15);
        }
        assert!((p[0].1 + 1.0 - 2.0 * 0.2f64.powi(6)).abs() < 1e-15);
    }
}
