//! The variance constants
//!
//! ```text
//! κ(H) = Σ_{p∈Z} (Q(p) − R(p)),     ρ(H) = Σ_{p∈Z} (Q̃(p) − R̃(p)),
//! ```
//!
//! where each kernel integrates an inner covariance against
//! `μ(ds dt) = H(2H−1)|s−t|^{2H−2} ds dt` over `[p, p+1] × [0, 1]`:
//!
//! | kernel | inner factor |
//! |---|---|
//! | `Q` | `½(|s|^{2H} + |p−t|^{2H} − |s−t|^{2H} − |p|^{2H})` |
//! | `R` | `½(|s−t|^{2H} + |p−1|^{2H} − |s−1|^{2H} − |p−t|^{2H})` |
//! | `Q̃` | `t (s−p)` |
//! | `R̃` | `(1−t)(s−p)` |
//!
//! For `|p| >= 2` the integrand is smooth and a tensor Gauss-Legendre rule is
//! used. For `p ∈ {−1, 0, 1}` the square touches the diagonal; there the
//! integral is rewritten in `x = s − t`, the `t`-integral is done in closed
//! form, and the remaining one-dimensional integral against `|x|^{2H−2}` is
//! split at `x = 0` and at the kinks of the `t`-range, graded geometrically
//! toward every breakpoint. The piece touching `x = 0` uses
//! `|x| = L w^{1/(2H−1)}`, which turns the singular weight into a constant.
//!
//! The series is summed over `|p| <= P` pairing `p` with `−p`. Pairing
//! cancels the odd terms of the large-`p` expansion, so the paired terms
//! decay like `p^{4H−6}` (κ) and `p^{2H−4}` (ρ). The tail beyond `P` is
//! estimated by fitting `c_1 p^e + c_2 p^{e−2}` to the last half of the paired
//! terms and summing the fit; the estimate is reported separately and never
//! added to `value`.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::output::{fmt_f64, write_comments, write_row};
use crate::quadrature::{graded_pieces, GaussLegendre};

pub const DEFAULT_TRUNCATION: usize = 128;
pub const DEFAULT_QUAD_ORDER: usize = 48;
/// Maximum relative change allowed when the quadrature order is doubled.
pub const DOUBLING_TOLERANCE: f64 = 1e-8;

const GRADING_LEVELS: usize = 14;
const GRADING_RATIO: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstantKind {
    Kappa,
    Rho,
}

impl ConstantKind {
    pub fn name(&self) -> &'static str {
        match self {
            ConstantKind::Kappa => "kappa",
            ConstantKind::Rho => "rho",
        }
    }

    /// Leading decay exponent of the paired terms `a_p + a_{−p}`.
    pub fn paired_exponent(&self, hurst: f64) -> f64 {
        match self {
            ConstantKind::Kappa => 4.0 * hurst - 6.0,
            ConstantKind::Rho => 2.0 * hurst - 4.0,
        }
    }

    fn kernels(&self) -> (Kernel, Kernel) {
        match self {
            ConstantKind::Kappa => (Kernel::Q, Kernel::R),
            ConstantKind::Rho => (Kernel::Qt, Kernel::Rt),
        }
    }
}

impl fmt::Display for ConstantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConstantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kappa" => Ok(ConstantKind::Kappa),
            "rho" => Ok(ConstantKind::Rho),
            other => Err(invalid(format!("unknown constant `{other}` (expected kappa or rho)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    Q,
    R,
    Qt,
    Rt,
}

/// Per-`p` record of a series evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TermDiagnostic {
    pub p: i64,
    /// `Q(p)` or `Q̃(p)`.
    pub first: f64,
    /// `R(p)` or `R̃(p)`.
    pub second: f64,
    pub difference: f64,
    /// Largest relative change of either kernel under order doubling.
    pub relative_change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantResult {
    pub kind: ConstantKind,
    pub hurst: f64,
    /// Partial sum over `|p| <= truncation`.
    pub value: f64,
    pub truncation: usize,
    pub quad_order: usize,
    /// Signed estimate of the neglected tail.
    pub tail_estimate: f64,
    /// `|tail_estimate|` plus the disagreement between one- and two-term
    /// tail fits.
    pub tail_bound: f64,
    pub terms: Vec<TermDiagnostic>,
}

impl ConstantResult {
    /// Partial sum over `|p| <= q` for `q <= truncation`.
    pub fn partial_sum(&self, q: usize) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.p.unsigned_abs() as usize <= q)
            .map(|t| t.difference)
            .sum()
    }

    /// `value + tail_estimate`.
    pub fn extrapolated(&self) -> f64 {
        self.value + self.tail_estimate
    }
}

fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.5 && hurst < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("Hurst parameter must lie in (1/2, 1), got {hurst}")))
    }
}

/// `∫_0^t ∫_p^s μ(dv du)`, the covariance of `B_s − B_p` and `B_t − B_0`.
pub fn mu_inner_cov(p: i64, s: f64, t: f64, hurst: f64) -> f64 {
    let e = 2.0 * hurst;
    let p = p as f64;
    0.5 * (s.abs().powf(e) + (p - t).abs().powf(e) - (s - t).abs().powf(e) - p.abs().powf(e))
}

/// `∫_t^1 ∫_p^s μ(dv du)`, the covariance of `B_s − B_p` and `B_1 − B_t`.
pub fn r_inner_cov(p: i64, s: f64, t: f64, hurst: f64) -> f64 {
    let e = 2.0 * hurst;
    let p = p as f64;
    0.5 * ((s - t).abs().powf(e) + (p - 1.0).abs().powf(e) - (s - 1.0).abs().powf(e) - (p - t).abs().powf(e))
}

fn inner(kernel: Kernel, p: i64, s: f64, t: f64, hurst: f64) -> f64 {
    let pf = p as f64;
    match kernel {
        Kernel::Q => mu_inner_cov(p, s, t, hurst),
        Kernel::R => r_inner_cov(p, s, t, hurst),
        Kernel::Qt => t * (s - pf),
        Kernel::Rt => (1.0 - t) * (s - pf),
    }
}

/// `∫_{lo}^{hi} |t + c|^{2H} dt`.
fn power_integral(c: f64, lo: f64, hi: f64, hurst: f64) -> f64 {
    let e = 2.0 * hurst + 1.0;
    let a = |y: f64| y.signum() * y.abs().powf(e) / e;
    a(hi + c) - a(lo + c)
}

/// `∫ inner(p, x + t, t) dt` over `{t ∈ [0, 1] : x + t ∈ [p, p+1]}`.
fn diagonal_slice(kernel: Kernel, p: i64, x: f64, hurst: f64) -> f64 {
    let pf = p as f64;
    let lo = (pf - x).max(0.0);
    let hi = (pf + 1.0 - x).min(1.0);
    let len = hi - lo;
    if len <= 0.0 {
        return 0.0;
    }
    let e = 2.0 * hurst;
    let ax = x.abs().powf(e);
    match kernel {
        Kernel::Q => {
            0.5 * (power_integral(x, lo, hi, hurst) + power_integral(-pf, lo, hi, hurst)
                - (ax + pf.abs().powf(e)) * len)
        }
        Kernel::R => {
            0.5 * ((ax + (pf - 1.0).abs().powf(e)) * len
                - power_integral(x - 1.0, lo, hi, hurst)
                - power_integral(-pf, lo, hi, hurst))
        }
        Kernel::Qt => {
            let d = x - pf;
            d * (hi * hi - lo * lo) / 2.0 + (hi.powi(3) - lo.powi(3)) / 3.0
        }
        Kernel::Rt => {
            let d = x - pf;
            d * len + (1.0 - d) * (hi * hi - lo * lo) / 2.0 - (hi.powi(3) - lo.powi(3)) / 3.0
        }
    }
}

fn mu_density(x: f64, hurst: f64) -> f64 {
    hurst * (2.0 * hurst - 1.0) * x.abs().powf(2.0 * hurst - 2.0)
}

fn near_diagonal(kernel: Kernel, p: i64, hurst: f64, rule: &GaussLegendre) -> f64 {
    let pf = p as f64;
    let (a, b) = (pf - 1.0, pf + 1.0);
    let mut breaks: Vec<f64> = [a, pf, b, -1.0, 0.0, 1.0]
        .into_iter()
        .filter(|&x| x >= a && x <= b)
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let alpha = 2.0 * hurst - 1.0;
    let g = |x: f64| diagonal_slice(kernel, p, x, hurst);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        for (lo, hi) in graded_pieces(w[0], w[1], GRADING_LEVELS, GRADING_RATIO) {
            total += if lo == 0.0 {
                // |x| = L u^{1/α}: μ-weight times dx is H L^α du
                hurst * hi.powf(alpha) * rule.integrate(0.0, 1.0, |u| g(hi * u.powf(1.0 / alpha)))
            } else if hi == 0.0 {
                let l = -lo;
                hurst * l.powf(alpha) * rule.integrate(0.0, 1.0, |u| g(-l * u.powf(1.0 / alpha)))
            } else {
                rule.integrate(lo, hi, |x| mu_density(x, hurst) * g(x))
            };
        }
    }
    total
}

fn kernel_with_rule(kernel: Kernel, p: i64, hurst: f64, rule: &GaussLegendre) -> f64 {
    if p.abs() <= 1 {
        near_diagonal(kernel, p, hurst, rule)
    } else {
        let pf = p as f64;
        rule.integrate_2d((pf, pf + 1.0), (0.0, 1.0), |s, t| {
            inner(kernel, p, s, t, hurst) * mu_density(s - t, hurst)
        })
    }
}

fn relative_change(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

struct Rules {
    base: GaussLegendre,
    doubled: GaussLegendre,
}

impl Rules {
    fn new(order: usize) -> Result<Self> {
        if order < 4 {
            return Err(invalid(format!("quadrature order must be at least 4, got {order}")));
        }
        Ok(Self {
            base: GaussLegendre::new(order)?,
            doubled: GaussLegendre::new(2 * order)?,
        })
    }

    fn eval(&self, kernel: Kernel, p: i64, hurst: f64) -> (f64, f64) {
        let v = kernel_with_rule(kernel, p, hurst, &self.base);
        let w = kernel_with_rule(kernel, p, hurst, &self.doubled);
        (v, relative_change(v, w))
    }
}

/// Evaluates one kernel at `p`, failing if doubling the order changes the
/// value by more than [`DOUBLING_TOLERANCE`] (relative).
pub fn kernel(kernel: Kernel, p: i64, hurst: f64, quad_order: usize) -> Result<f64> {
    check_hurst(hurst)?;
    let rules = Rules::new(quad_order)?;
    let (v, change) = rules.eval(kernel, p, hurst);
    if change > DOUBLING_TOLERANCE {
        return Err(Error::QuadratureNotConverged {
            p,
            relative_change: change,
        });
    }
    Ok(v)
}

pub fn kernel_q(p: i64, hurst: f64, quad_order: usize) -> Result<f64> {
    kernel(Kernel::Q, p, hurst, quad_order)
}

pub fn kernel_r(p: i64, hurst: f64, quad_order: usize) -> Result<f64> {
    kernel(Kernel::R, p, hurst, quad_order)
}

pub fn kernel_qt(p: i64, hurst: f64, quad_order: usize) -> Result<f64> {
    kernel(Kernel::Qt, p, hurst, quad_order)
}

pub fn kernel_rt(p: i64, hurst: f64, quad_order: usize) -> Result<f64> {
    kernel(Kernel::Rt, p, hurst, quad_order)
}

/// `Σ_{k >= n} k^{−s}` for `s > 1`, `n >= 1`, via Euler-Maclaurin after a
/// short direct sum.
pub fn power_tail_sum(s: f64, n: u64) -> f64 {
    let mut k = n;
    let mut direct = 0.0;
    while k < 64 {
        direct += (k as f64).powf(-s);
        k += 1;
    }
    let x = k as f64;
    let em = x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s) + s * x.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * x.powf(-s - 3.0) / 720.0
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * x.powf(-s - 5.0) / 30240.0;
    direct + em
}

/// Least-squares fit of `b_p ≈ c_1 p^e + c_2 p^{e−2}` and the implied tails
/// `(two-term, one-term)` beyond `p_max`.
fn tail_estimates(paired: &[(u64, f64)], e: f64, p_max: u64) -> (f64, f64) {
    // regress b_p / p^e on (1, p^{-2})
    let rows: Vec<(f64, f64)> = paired
        .iter()
        .map(|&(p, b)| {
            let pf = p as f64;
            (pf.powi(-2), b / pf.powf(e))
        })
        .collect();
    let n = rows.len() as f64;
    let mean_x = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let mean_y = rows.iter().map(|r| r.1).sum::<f64>() / n;
    let sxx: f64 = rows.iter().map(|r| (r.0 - mean_x).powi(2)).sum();
    let sxy: f64 = rows.iter().map(|r| (r.0 - mean_x) * (r.1 - mean_y)).sum();
    let c2 = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let c1 = mean_y - c2 * mean_x;
    let two = c1 * power_tail_sum(-e, p_max + 1) + c2 * power_tail_sum(2.0 - e, p_max + 1);
    let one = mean_y * power_tail_sum(-e, p_max + 1);
    (two, one)
}

/// `κ(H)` or `ρ(H)` summed over `|p| <= truncation`.
pub fn constant(kind: ConstantKind, hurst: f64, truncation: usize, quad_order: usize) -> Result<ConstantResult> {
    check_hurst(hurst)?;
    if truncation < 16 {
        return Err(invalid(format!("truncation P must be at least 16, got {truncation}")));
    }
    let rules = Rules::new(quad_order)?;
    let (k1, k2) = kind.kernels();
    let p_max = truncation as i64;
    let terms: Vec<TermDiagnostic> = (-p_max..=p_max)
        .into_par_iter()
        .map(|p| {
            let (first, c1) = rules.eval(k1, p, hurst);
            let (second, c2) = rules.eval(k2, p, hurst);
            TermDiagnostic {
                p,
                first,
                second,
                difference: first - second,
                relative_change: c1.max(c2),
            }
        })
        .collect();
    if let Some(bad) = terms.iter().find(|t| t.relative_change > DOUBLING_TOLERANCE) {
        return Err(Error::QuadratureNotConverged {
            p: bad.p,
            relative_change: bad.relative_change,
        });
    }
    let at = |p: i64| terms[(p + p_max) as usize].difference;
    let paired: Vec<(u64, f64)> = (1..=p_max).map(|p| (p as u64, at(p) + at(-p))).collect();
    // deterministic order: centre term, then pairs by increasing |p|
    let value = at(0) + paired.iter().map(|x| x.1).sum::<f64>();
    let fit_range: Vec<(u64, f64)> = paired.iter().copied().filter(|&(p, _)| 2 * p as i64 >= p_max).collect();
    let (two, one) = tail_estimates(&fit_range, kind.paired_exponent(hurst), p_max as u64);
    Ok(ConstantResult {
        kind,
        hurst,
        value,
        truncation,
        quad_order,
        tail_estimate: two,
        tail_bound: two.abs() + (two - one).abs(),
        terms,
    })
}

pub fn kappa(hurst: f64, truncation: usize, quad_order: usize) -> Result<ConstantResult> {
    constant(ConstantKind::Kappa, hurst, truncation, quad_order)
}

pub fn rho(hurst: f64, truncation: usize, quad_order: usize) -> Result<ConstantResult> {
    constant(ConstantKind::Rho, hurst, truncation, quad_order)
}

/// Values over an `H` grid, as plotted against `H`.
#[derive(Debug, Clone)]
pub struct ConstantTable {
    pub kind: ConstantKind,
    pub rows: Vec<ConstantResult>,
    /// Whether the values decrease along the grid (recorded, not required).
    pub monotone_decreasing: bool,
}

impl ConstantTable {
    /// CSV `H,<kind>,tail,P,quad_order`; `tail` is the tail bound.
    pub fn write_csv<W: Write>(&self, w: &mut W, comments: &[String]) -> io::Result<()> {
        write_comments(w, comments)?;
        writeln!(w, "H,{},tail,P,quad_order", self.kind.name())?;
        for r in &self.rows {
            write_row(
                w,
                &[
                    fmt_f64(r.hurst),
                    fmt_f64(r.value),
                    fmt_f64(r.tail_bound),
                    r.truncation.to_string(),
                    r.quad_order.to_string(),
                ],
            )?;
        }
        Ok(())
    }
}

pub const DEFAULT_H_GRID: [f64; 9] = [0.51, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.9, 0.95];

pub fn tabulate_constant(
    kind: ConstantKind,
    h_grid: &[f64],
    truncation: usize,
    quad_order: usize,
) -> Result<ConstantTable> {
    for &h in h_grid {
        check_hurst(h)?;
    }
    let rows = h_grid
        .iter()
        .map(|&h| constant(kind, h, truncation, quad_order))
        .collect::<Result<Vec<_>>>()?;
    let monotone_decreasing = rows
        .windows(2)
        .all(|w| (w[1].hurst > w[0].hurst && w[1].value < w[0].value) || (w[1].hurst <= w[0].hurst));
    Ok(ConstantTable {
        kind,
        rows,
        monotone_decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_covariance_examples() {
        assert!(mu_inner_cov(0, 0.0, 0.4, 0.7).abs() < 1e-15);
        assert!(mu_inner_cov(3, 3.0, 0.4, 0.7).abs() < 1e-14);
        assert!(mu_inner_cov(2, 2.5, 0.0, 0.7).abs() < 1e-14);
        assert!((mu_inner_cov(0, 1.0, 1.0, 0.75) - 1.0).abs() < 1e-15);
        assert!(r_inner_cov(-2, -1.5, 1.0, 0.7).abs() < 1e-15);
        assert!(r_inner_cov(1, 1.0, 0.3, 0.7).abs() < 1e-15);
    }

    #[test]
    fn slices_match_direct_integration() {
        let rule = GaussLegendre::new(200).unwrap();
        for kernel in [Kernel::Q, Kernel::R, Kernel::Qt, Kernel::Rt] {
            for p in [-1i64, 0, 1] {
                for x in [-1.7, -0.9, -0.3, 0.25, 0.8, 1.4] {
                    let pf = p as f64;
                    let lo = (pf - x).max(0.0);
                    let hi = (pf + 1.0 - x).min(1.0);
                    if hi <= lo {
                        assert_eq!(diagonal_slice(kernel, p, x, 0.7), 0.0);
                        continue;
                    }
                    let direct = rule.integrate(lo, hi, |t| inner(kernel, p, x + t, t, 0.7));
                    let closed = diagonal_slice(kernel, p, x, 0.7);
                    assert!((direct - closed).abs() < 1e-7, "{kernel:?} p={p} x={x}");
                }
            }
        }
    }

    #[test]
    fn power_tail_sum_matches_direct() {
        let direct: f64 = (20u64..2_000_000).rev().map(|k| (k as f64).powf(-3.2)).sum();
        let rest = power_tail_sum(3.2, 2_000_000);
        assert!((power_tail_sum(3.2, 20) - direct - rest).abs() < 1e-12 * direct);
        let zeta2: f64 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((power_tail_sum(2.0, 1) - zeta2).abs() < 1e-12);
    }

    #[test]
    fn doubling_stability_at_zero() {
        for k in [Kernel::Q, Kernel::R, Kernel::Qt, Kernel::Rt] {
            let a = kernel(k, 0, 0.7, 32).unwrap();
            let b = kernel(k, 0, 0.7, 64).unwrap();
            assert!(relative_change(a, b) < 1e-8, "{k:?}");
        }
        assert!(kernel_qt(0, 0.6, 48).unwrap().is_finite());
        assert!(kernel_r(0, 0.7, 48).unwrap() > 0.0);
    }

    /// `∫∫ φ(s) ψ(t) μ(ds dt)` over `[a, b] × [c, d]` for affine `φ`, `ψ`, by
    /// integrating by parts against `K(s, t) = −½|s − t|^{2H}`.
    fn affine_mu_integral(phi: (f64, f64), psi: (f64, f64), (a, b): (f64, f64), (c, d): (f64, f64), h: f64) -> f64 {
        let e = 2.0 * h;
        let k = |s: f64, t: f64| -0.5 * (s - t).abs().powf(e);
        let prim = |y: f64| y.signum() * y.abs().powf(e + 1.0) / (e + 1.0);
        let big = |y: f64| y.abs().powf(e + 2.0) / ((e + 1.0) * (e + 2.0));
        let f = |s: f64| phi.0 + phi.1 * s;
        let g = |t: f64| psi.0 + psi.1 * t;
        // ∫_a^b K(s, y) ds and ∫_c^d K(x, t) dt
        let ks = |y: f64| -0.5 * (prim(b - y) - prim(a - y));
        let kt = |x: f64| -0.5 * (prim(x - c) - prim(x - d));
        let kk = -0.5 * (big(b - c) - big(b - d) - big(a - c) + big(a - d));
        f(b) * g(d) * k(b, d) - f(a) * g(d) * k(a, d) - f(b) * g(c) * k(b, c) + f(a) * g(c) * k(a, c)
            - phi.1 * (g(d) * ks(d) - g(c) * ks(c))
            - psi.1 * (f(b) * kt(b) - f(a) * kt(a))
            + phi.1 * psi.1 * kk
    }

    #[test]
    fn tilde_kernels_match_closed_form() {
        for h in [0.55, 0.6, 0.7, 0.85, 0.95] {
            for p in [-5i64, -2, -1, 0, 1, 2, 7] {
                let pf = p as f64;
                let sq = ((pf, pf + 1.0), (0.0, 1.0));
                let qt = affine_mu_integral((-pf, 1.0), (0.0, 1.0), sq.0, sq.1, h);
                let rt = affine_mu_integral((-pf, 1.0), (1.0, -1.0), sq.0, sq.1, h);
                let nq = kernel_qt(p, h, 48).unwrap();
                let nr = kernel_rt(p, h, 48).unwrap();
                assert!(
                    (nq - qt).abs() <= 1e-10 * qt.abs().max(1e-3),
                    "Qt H={h} p={p}: {nq} vs {qt}"
                );
                assert!(
                    (nr - rt).abs() <= 1e-10 * rt.abs().max(1e-3),
                    "Rt H={h} p={p}: {nr} vs {rt}"
                );
            }
        }
    }

    #[test]
    fn centre_kernels_sum_to_one_half() {
        // Q(0) + R(0) = ∫ E[B_s B_1] d_s E[B_s B_1] = ½, and likewise for the tilde pair
        for h in [0.52, 0.6, 0.75, 0.9, 0.97] {
            let q = kernel_q(0, h, 48).unwrap() + kernel_r(0, h, 48).unwrap();
            let qt = kernel_qt(0, h, 48).unwrap() + kernel_rt(0, h, 48).unwrap();
            assert!((q - 0.5).abs() < 1e-12, "H={h}: {q}");
            assert!((qt - 0.5).abs() < 1e-12, "H={h}: {qt}");
        }
    }

    #[test]
    fn inner_covariance_matches_riemann_sum() {
        // midpoint rule on a 1000 × 1000 grid of [p, s] × [0, t]
        let h = 0.75;
        for (p, s, t) in [(2i64, 2.6, 0.7), (-3, -2.2, 0.9), (5, 5.9, 0.35)] {
            let n = 1000;
            let (du, dv) = ((s - p as f64) / n as f64, t / n as f64);
            let mut acc = 0.0;
            for i in 0..n {
                let u = p as f64 + (i as f64 + 0.5) * du;
                for j in 0..n {
                    let v = (j as f64 + 0.5) * dv;
                    acc += mu_density(u - v, h);
                }
            }
            acc *= du * dv;
            assert!((acc - mu_inner_cov(p, s, t, h)).abs() < 1e-4, "p={p}");
        }
    }

    fn loglog_slope(points: &[(f64, f64)]) -> f64 {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0.ln()).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1.abs().ln()).sum::<f64>() / n;
        let sxy: f64 = points.iter().map(|p| (p.0.ln() - mx) * (p.1.abs().ln() - my)).sum();
        let sxx: f64 = points.iter().map(|p| (p.0.ln() - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn kernel_decay_rates() {
        let h = 0.75;
        let ps = [4i64, 8, 16, 32, 64];
        let q: Vec<(f64, f64)> = ps.iter().map(|&p| (p as f64, kernel_q(p, h, 48).unwrap())).collect();
        // |Q(p)| <= C p^{2H−2}; the actual decay is p^{4H−4}, a product of two
        // long-range covariances
        let slope = loglog_slope(&q);
        assert!(slope <= 2.0 * h - 2.0 + 0.3, "slope {slope}");
        assert!((slope - (4.0 * h - 4.0)).abs() < 0.1, "slope {slope}");
        let d: Vec<(f64, f64)> = ps
            .iter()
            .map(|&p| (p as f64, kernel_q(p, h, 48).unwrap() - kernel_r(p, h, 48).unwrap()))
            .collect();
        // the bound |Q − R| <= K p^{4H−5} holds with room: the observed decay is p^{4H−6}
        let slope = loglog_slope(&d);
        assert!(slope <= 4.0 * h - 5.0 + 0.4, "slope {slope}");
        assert!((slope - (4.0 * h - 6.0)).abs() < 0.1, "slope {slope}");
        let dt: Vec<(f64, f64)> = ps
            .iter()
            .map(|&p| (p as f64, kernel_qt(p, h, 48).unwrap() - kernel_rt(p, h, 48).unwrap()))
            .collect();
        assert!((loglog_slope(&dt) - (2.0 * h - 3.0)).abs() < 0.4);
    }

    #[test]
    fn partial_sums_are_cauchy_within_tail_model() {
        let full = kappa(0.75, 128, 48).unwrap();
        for q in [16usize, 32, 64] {
            let part = kappa(0.75, q, 48).unwrap();
            assert!((part.value - full.partial_sum(q)).abs() < 1e-14);
            assert!(
                (full.value - part.value).abs() <= 2.0 * part.tail_bound,
                "P={q}: diff {} bound {}",
                (full.value - part.value).abs(),
                part.tail_bound
            );
        }
    }

    #[test]
    fn order_refinement_is_stable() {
        let a = rho(0.65, 32, 48).unwrap();
        let b = rho(0.65, 32, 64).unwrap();
        assert!((a.value - b.value).abs() < 1e-6);
        let c = kappa(0.65, 32, 48).unwrap();
        let d = kappa(0.65, 32, 64).unwrap();
        assert!((c.value - d.value).abs() < 1e-6);
    }

    #[test]
    fn tabulation_rows() {
        let t = tabulate_constant(ConstantKind::Rho, &[0.55, 0.75, 0.95], 32, 16).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert!(t
            .rows
            .iter()
            .all(|r| r.value > 0.0 && r.value.is_finite() && r.tail_bound >= 0.0));
        assert!(t.monotone_decreasing);
    }

    #[test]
    fn argument_checks() {
        assert!(kappa(0.5, 128, 48).is_err());
        assert!(kappa(0.7, 8, 48).is_err());
        assert!(kappa(0.7, 16, 3).is_err());
        assert!("sigma".parse::<ConstantKind>().is_err());
    }
}
