//! Recovery of the measure from a displacement curve and `α_max`.
//!
//! The water volume `V = V_w` on `[0, α_max]` is the unique fixed point of
//!
//! ```text
//! V(α) = G(h(α) + (TV)(α)),   (TV)(α) = ∫_α^α_max K(y, α) V(y) dy,
//! K(y, α) = κ(1-κ²) α⁴ / (y² (y² - (1-κ²)α²)^{3/2})
//! ```
//!
//! where `h` depends only on `G(v_max)` and `α_max`. `T` has sup-norm at most
//! `(1-κ)/(1+κ)` and `G` is 1-Lipschitz, so plain iteration converges. From
//! `V` the harmonic cumulative `Φ(α) = ∫_[0,α) dμ/y` follows from
//! `V' = (1+κ)/κ·α·Φ`, and the length density from `f = α·Φ'`.

use rayon::prelude::*;

use crate::error::{ConvergenceFailure, Error, Result};
use crate::forward::{curve_readoff, curve_readoff_unscaled, DisplacementCurve, Readoff};
use crate::measures::validate_kappa;
use crate::quadrature::GaussLegendre;

/// Guaranteed sup-norm contraction factor `(1-κ)/(1+κ)` of `T`.
pub fn contraction_factor(kappa: f64) -> f64 {
    (1.0 - kappa) / (1.0 + kappa)
}

/// Kernel of `T`; requires `0 <= α <= y`.
pub fn kernel_k(y: f64, alpha: f64, kappa: f64) -> Result<f64> {
    if !(alpha >= 0.0) || y < alpha {
        return Err(Error::invalid(format!("kernel needs 0 <= alpha <= y, got y={y}, alpha={alpha}")));
    }
    if alpha == 0.0 {
        return Ok(0.0);
    }
    let c = 1.0 - kappa * kappa;
    let a2 = alpha * alpha;
    let d = y * y - c * a2;
    Ok(kappa * c * a2 * a2 / (y * y * d * d.sqrt()))
}

/// Widest `ln(u_lo/u_hi)` integrated by a single Gauss-Legendre panel.
const MAX_LOG_SPAN: f64 = 0.25;

/// Visits the quadrature nodes of `∫_α^{end} K(y, α) φ(y) dy` on the given
/// panels (`breaks` sorted, last entry is the upper limit).
///
/// Each panel is integrated in the variable `u = (y²/α² - (1-κ²))^{-1/2}`,
/// where `K dy = -κ(1-κ²) du / x³` with `x = y/α = sqrt((1-κ²) + u⁻²)`.
/// The transformed integrand is bounded by 1 and smooth, while `K` itself
/// varies on a scale `~κ²α` next to `y = α`.
fn visit_kernel_nodes(
    alpha: f64,
    kappa: f64,
    breaks: &[f64],
    gl: &GaussLegendre,
    mut visit: impl FnMut(usize, f64, f64),
) {
    if alpha <= 0.0 {
        return;
    }
    let c = 1.0 - kappa * kappa;
    let pref = kappa * c;
    let u_of = |y: f64| {
        let x = y / alpha;
        1.0 / (x * x - c).sqrt()
    };
    for j in 0..breaks.len().saturating_sub(1) {
        let hi = breaks[j + 1];
        if hi <= alpha {
            continue;
        }
        let lo = breaks[j].max(alpha);
        if lo >= hi {
            continue;
        }
        let u_lo = if lo == alpha { 1.0 / kappa } else { u_of(lo) };
        let u_hi = u_of(hi);
        // u decreases in y. Cells close to y = α can span a decade in u, so
        // split them geometrically.
        let ratio = u_lo / u_hi;
        let m = ((ratio.ln() / MAX_LOG_SPAN).ceil() as usize).max(1);
        let step = ratio.powf(1.0 / m as f64);
        let mut a = u_hi;
        for k in 0..m {
            let b = if k + 1 == m { u_lo } else { a * step };
            for (u, w) in gl.mapped(a, b) {
                let x = (c + 1.0 / (u * u)).sqrt();
                let y = (alpha * x).clamp(lo, hi);
                visit(j, y, pref * w / (x * x * x));
            }
            a = b;
        }
    }
}

/// `∫_α^{α_max} K(y, α) f(y) dy` with panels split at `breaks`; put the kinks of
/// `f` into `breaks` for full accuracy.
pub fn integrate_kernel(
    alpha: f64,
    alpha_max: f64,
    kappa: f64,
    breaks: &[f64],
    order: usize,
    f: impl Fn(f64) -> f64,
) -> Result<f64> {
    validate_kappa(kappa)?;
    if !(alpha >= 0.0) || alpha > alpha_max {
        return Err(Error::invalid("need 0 <= alpha <= alpha_max"));
    }
    let gl = GaussLegendre::new(order)?;
    let mut panels = vec![alpha];
    panels.extend(breaks.iter().copied().filter(|&b| b > alpha && b < alpha_max));
    panels.push(alpha_max);
    panels.sort_by(f64::total_cmp);
    panels.dedup();
    let mut acc = 0.0;
    visit_kernel_nodes(alpha, kappa, &panels, &gl, |_, y, w| acc += w * f(y));
    Ok(acc)
}

/// `T` discretized on a grid for piecewise-linear inputs: row `i` holds the
/// weights of nodes `i..n` in `(TV)(grid[i])`.
#[derive(Debug, Clone)]
pub struct KernelOperator {
    grid: Vec<f64>,
    kappa: f64,
    gl: GaussLegendre,
    rows: Vec<Vec<f64>>,
}

impl KernelOperator {
    pub fn new(grid: Vec<f64>, kappa: f64, order: usize) -> Result<Self> {
        validate_kappa(kappa)?;
        if grid.len() < 2 {
            return Err(Error::invalid("kernel operator needs at least two grid nodes"));
        }
        if !(grid[0] >= 0.0) || grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("grid must be nonnegative and strictly increasing"));
        }
        let gl = GaussLegendre::new(order)?;
        let rows = (0..grid.len())
            .into_par_iter()
            .map(|i| row_weights(&grid, i, kappa, &gl))
            .collect();
        Ok(Self { grid, kappa, gl, rows })
    }

    /// Uniform grid of `n` nodes on `[0, α_max]`.
    pub fn uniform(alpha_max: f64, n: usize, kappa: f64, order: usize) -> Result<Self> {
        Self::new(uniform_grid(alpha_max, n)?, kappa, order)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn alpha_max(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// `(TV)` at every grid node, `V` given by its node values.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.grid.len(), "input length must match the grid");
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().zip(&v[i..]).map(|(w, x)| w * x).sum())
            .collect()
    }

    /// `(TV)(α)` at an arbitrary `α ∈ [0, α_max]`.
    pub fn apply_at(&self, alpha: f64, v: &[f64]) -> f64 {
        assert_eq!(v.len(), self.grid.len(), "input length must match the grid");
        let grid = &self.grid;
        let mut acc = 0.0;
        visit_kernel_nodes(alpha, self.kappa, grid, &self.gl, |j, y, w| {
            let t = ((y - grid[j]) / (grid[j + 1] - grid[j])).clamp(0.0, 1.0);
            acc += w * ((1.0 - t) * v[j] + t * v[j + 1]);
        });
        acc
    }

    /// Discrete sup-norm `max_i Σ_j |W_ij|`.
    pub fn norm_inf(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.iter().map(|w| w.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

fn row_weights(grid: &[f64], i: usize, kappa: f64, gl: &GaussLegendre) -> Vec<f64> {
    let n = grid.len();
    let mut row = vec![0.0; n - i];
    visit_kernel_nodes(grid[i], kappa, &grid[i..], gl, |j, y, w| {
        let (y0, y1) = (grid[i + j], grid[i + j + 1]);
        let t = ((y - y0) / (y1 - y0)).clamp(0.0, 1.0);
        row[j] += w * (1.0 - t);
        row[j + 1] += w * t;
    });
    row
}

/// `TV` for node values `v` on `grid`.
pub fn apply_t(v: &[f64], grid: &[f64], kappa: f64, order: usize) -> Result<Vec<f64>> {
    if v.len() != grid.len() {
        return Err(Error::invalid("values and grid differ in length"));
    }
    Ok(KernelOperator::new(grid.to_vec(), kappa, order)?.apply(v))
}

/// `n` equally spaced nodes on `[0, α_max]`, last one exactly `α_max`.
pub fn uniform_grid(alpha_max: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(alpha_max > 0.0 && alpha_max.is_finite()) {
        return Err(Error::invalid("uniform grid needs n >= 2 and alpha_max > 0"));
    }
    let m = (n - 1) as f64;
    Ok((0..n).map(|i| alpha_max * i as f64 / m).collect())
}

/// Known part of the fixed-point equation:
///
/// ```text
/// h(α) = κ/(1-κ²)·(α_max - R)·V_w'(α_max) + κ/(1-κ²)·(α_max - R)²/(α_max R)·V_w(α_max),
/// R(α) = sqrt(α_max² - (1-κ²)α²).
/// ```
pub fn h_of_alpha(readoff: Readoff, kappa: f64, alpha_max: f64, alpha: f64) -> f64 {
    let c = 1.0 - kappa * kappa;
    let a2 = alpha * alpha;
    let r = (alpha_max * alpha_max - c * a2).sqrt();
    // α_max - R = c α² / (α_max + R)
    let s = alpha_max + r;
    let lin = kappa * a2 / s;
    let quad = kappa * c * a2 * a2 / (s * s * alpha_max * r);
    lin * readoff.vw_prime + quad * readoff.vw
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryConfig {
    pub n_grid: usize,
    /// Stopping threshold on the sup-change between iterates; `None` means `1e-10·v_max`.
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Lower edge of the density window; `None` means two grid steps.
    pub alpha_min: Option<f64>,
    /// Gauss-Legendre points per grid cell.
    pub quad_order: usize,
    /// Constant starting iterate.
    pub initial_value: f64,
    /// Use the unscaled slope read-off and the `(1+κ)/κ` density prefactor.
    pub paper_literal: bool,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            n_grid: 1001,
            tol: None,
            max_iter: 200,
            alpha_min: None,
            quad_order: 4,
            initial_value: 0.0,
            paper_literal: false,
        }
    }
}

impl RecoveryConfig {
    pub fn with_grid(mut self, n: usize) -> Self {
        self.n_grid = n;
        self
    }

    fn validate(&self, curve: &DisplacementCurve) -> Result<()> {
        if self.n_grid < 3 {
            return Err(Error::invalid("n_grid must be at least 3"));
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0) {
                return Err(Error::invalid("tolerance must be positive"));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if let Some(a) = self.alpha_min {
            if !(a >= 0.0 && a < curve.alpha_max()) {
                return Err(Error::invalid("alpha_min must lie in [0, alpha_max)"));
            }
        }
        if !self.initial_value.is_finite() {
            return Err(Error::invalid("initial value must be finite"));
        }
        Ok(())
    }
}

/// Fixed point `V` on the grid plus iteration diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSolution {
    pub alpha: Vec<f64>,
    pub v: Vec<f64>,
    pub iterations: usize,
    /// Largest ratio of successive sup-changes seen above the rounding floor.
    pub observed_ratio: f64,
    /// `(1-κ)/(1+κ)`.
    pub contraction_bound: f64,
    /// `q/(1-q)·(last change)`: a-priori distance to the exact discrete fixed point.
    pub error_bound: f64,
    pub last_change: f64,
    /// `‖V - G(h + TV)‖∞` at the returned iterate.
    pub residual: f64,
    pub tol: f64,
}

/// Solves `V = G(h + TV)` by iteration from a constant start.
pub fn solve_fixed_point(curve: &DisplacementCurve, config: &RecoveryConfig) -> Result<FixedPointSolution> {
    config.validate(curve)?;
    let op = KernelOperator::uniform(curve.alpha_max(), config.n_grid, curve.kappa(), config.quad_order)?;
    solve_with_operator(curve, &op, config)
}

/// As [`solve_fixed_point`], reusing a prebuilt operator (its grid wins over
/// `config.n_grid`).
pub fn solve_with_operator(
    curve: &DisplacementCurve,
    op: &KernelOperator,
    config: &RecoveryConfig,
) -> Result<FixedPointSolution> {
    config.validate(curve)?;
    let kappa = curve.kappa();
    if (op.kappa() - kappa).abs() > 0.0 || (op.alpha_max() - curve.alpha_max()).abs() > 0.0 {
        return Err(Error::invalid("operator does not match the curve's kappa / alpha_max"));
    }
    let alpha_max = curve.alpha_max();
    let v_max = curve.v_max();
    let readoff = if config.paper_literal {
        curve_readoff_unscaled(curve)?
    } else {
        curve_readoff(curve)?
    };
    let tol = config.tol.unwrap_or(1e-10 * v_max);
    let alpha = op.grid().to_vec();
    let h: Vec<f64> = alpha.iter().map(|&a| h_of_alpha(readoff, kappa, alpha_max, a)).collect();
    let step = |v: &[f64]| -> Vec<f64> {
        op.apply(v)
            .into_iter()
            .zip(&h)
            .map(|(t, hv)| curve.eval(hv + t))
            .collect()
    };

    let q = contraction_factor(kappa);
    let floor = 1e-12 * v_max.max(f64::MIN_POSITIVE);
    let mut v = vec![config.initial_value; alpha.len()];
    let mut prev_change = f64::INFINITY;
    let mut observed = 0.0f64;
    for iter in 1..=config.max_iter {
        let next = step(&v);
        let change = sup_diff(&next, &v);
        if prev_change.is_finite() && prev_change > floor {
            observed = observed.max(change / prev_change);
        }
        v = next;
        if change <= tol {
            let residual = sup_diff(&v, &step(&v));
            return Ok(FixedPointSolution {
                alpha,
                v,
                iterations: iter,
                observed_ratio: observed,
                contraction_bound: q,
                error_bound: q / (1.0 - q) * change,
                last_change: change,
                residual,
                tol,
            });
        }
        prev_change = change;
    }
    Err(Error::Convergence(Box::new(ConvergenceFailure {
        iterations: config.max_iter,
        last_change: prev_change,
        tolerance: tol,
        last_iterate: v,
    })))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn uniform_step(alpha: &[f64]) -> Result<f64> {
    if alpha.len() < 3 {
        return Err(Error::invalid("need at least three grid nodes to differentiate"));
    }
    let h = alpha[1] - alpha[0];
    if !(h > 0.0) {
        return Err(Error::invalid("grid must be increasing"));
    }
    for w in alpha.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h {
            return Err(Error::invalid("differentiation needs a uniform grid"));
        }
    }
    Ok(h)
}

/// Second-order first derivative: centered inside, one-sided at both ends.
fn first_derivative(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    for i in 1..n - 1 {
        d[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    d
}

fn second_derivative(v: &[f64], h: f64, i: usize) -> f64 {
    (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h)
}

/// Recovered `Φ(α) = ∫_[0,α) dμ/y` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfRecovery {
    pub phi: Vec<f64>,
    /// Samples raised to the running maximum to keep `Φ` nondecreasing.
    pub clip_count: usize,
}

/// `Φ(α) = κ V'(α) / ((1+κ) α)`, with `Φ(0) = 0`.
pub fn recover_cdf(alpha: &[f64], v: &[f64], kappa: f64) -> Result<CdfRecovery> {
    validate_kappa(kappa)?;
    if alpha.len() != v.len() {
        return Err(Error::invalid("grid and values differ in length"));
    }
    let h = uniform_step(alpha)?;
    let dv = first_derivative(v, h);
    let mut phi = Vec::with_capacity(v.len());
    let mut running = 0.0f64;
    let mut clip_count = 0;
    for (&a, &d) in alpha.iter().zip(&dv) {
        let raw = if a > 0.0 { kappa * d / ((1.0 + kappa) * a) } else { 0.0 };
        if raw < running {
            clip_count += 1;
            phi.push(running);
        } else {
            running = raw;
            phi.push(raw);
        }
    }
    Ok(CdfRecovery { phi, clip_count })
}

/// Recovered length density on the reporting window.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    pub alpha: Vec<f64>,
    pub f: Vec<f64>,
    /// Negative samples set to zero.
    pub clip_count: usize,
}

impl DensityProfile {
    /// Density at grid node `alpha`, if it lies in the window.
    pub fn at(&self, alpha: f64) -> Option<f64> {
        self.alpha
            .iter()
            .position(|&a| a == alpha)
            .map(|i| self.f[i])
    }
}

/// `f(α) = κ/(1+κ)·α·(V'/α)' = κ/(1+κ)·(V'' - V'/α)` on `[α_min, α_max - 2h]`.
/// With `paper_literal` the prefactor is `(1+κ)/κ` instead.
pub fn recover_density(
    alpha: &[f64],
    v: &[f64],
    kappa: f64,
    alpha_min: f64,
    paper_literal: bool,
) -> Result<DensityProfile> {
    validate_kappa(kappa)?;
    if alpha.len() != v.len() {
        return Err(Error::invalid("grid and values differ in length"));
    }
    if !(alpha_min > 0.0) {
        return Err(Error::invalid("density window needs alpha_min > 0"));
    }
    let h = uniform_step(alpha)?;
    let n = alpha.len();
    let top = alpha[n - 1] - 2.0 * h * (1.0 + 1e-9);
    let pref = if paper_literal {
        (1.0 + kappa) / kappa
    } else {
        kappa / (1.0 + kappa)
    };
    let dv = first_derivative(v, h);
    let mut out = DensityProfile {
        alpha: Vec::new(),
        f: Vec::new(),
        clip_count: 0,
    };
    for i in 1..n - 1 {
        let a = alpha[i];
        if a < alpha_min * (1.0 - 1e-12) || a > top {
            continue;
        }
        let raw = pref * (second_derivative(v, h, i) - dv[i] / a);
        let f = if raw < 0.0 {
            out.clip_count += 1;
            0.0
        } else {
            raw
        };
        out.alpha.push(a);
        out.f.push(f);
    }
    Ok(out)
}

/// Everything recovered from one curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub solution: FixedPointSolution,
    pub phi: CdfRecovery,
    pub density: DensityProfile,
}

impl RecoveryResult {
    pub fn alpha(&self) -> &[f64] {
        &self.solution.alpha
    }

    pub fn v(&self) -> &[f64] {
        &self.solution.v
    }
}

/// Fixed point, then `Φ` and the density.
pub fn recover(curve: &DisplacementCurve, config: &RecoveryConfig) -> Result<RecoveryResult> {
    let solution = solve_fixed_point(curve, config)?;
    finish_recovery(solution, curve, config)
}

pub(crate) fn finish_recovery(
    solution: FixedPointSolution,
    curve: &DisplacementCurve,
    config: &RecoveryConfig,
) -> Result<RecoveryResult> {
    let kappa = curve.kappa();
    let phi = recover_cdf(&solution.alpha, &solution.v, kappa)?;
    let h = solution.alpha[1] - solution.alpha[0];
    let alpha_min = match config.alpha_min {
        Some(a) if a > 0.0 => a,
        _ => 2.0 * h,
    };
    let density = recover_density(&solution.alpha, &solution.v, kappa, alpha_min, config.paper_literal)?;
    Ok(RecoveryResult {
        solution,
        phi,
        density,
    })
}
