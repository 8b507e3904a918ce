//! Continuum forward map: measure to produced volumes and displacement curve.
//!
//! For a parameter `α >= 0` (the length of the longest tube already flooded):
//!
//! ```text
//! V_w(α) = (1+κ)/(2κ) ∫_[0,α) (α² - y²)/y dμ
//! V_o(α) = ∫_[0,α) y dμ + 1/(1-κ) ∫_[α,∞) (y - sqrt(y² - (1-κ²)α²)) dμ
//! ```
//!
//! The displacement characteristic `G` is the graph `{(V_w + V_o, V_w)}`.

use crate::error::{Error, Result};
use crate::measures::{validate_kappa, Measure, Power};

/// Cumulative produced water at parameter `alpha`.
pub fn v_w(mu: &Measure, kappa: f64, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        return 0.0;
    }
    let a2 = alpha * alpha;
    let atoms: f64 = mu
        .atoms()
        .iter()
        .filter(|at| at.length < alpha)
        .map(|at| at.area * (alpha - at.length) * (alpha + at.length) / at.length)
        .sum();
    let pieces: f64 = mu
        .pieces()
        .iter()
        .filter(|p| p.a < alpha)
        .map(|p| {
            let hi = p.b.min(alpha);
            let lo = p.a;
            p.rho * (a2 * ((hi - lo) / lo).ln_1p() - 0.5 * (hi - lo) * (hi + lo))
        })
        .sum();
    // empty float sums are -0.0
    (1.0 + kappa) / (2.0 * kappa) * (atoms + pieces) + 0.0
}

/// Cumulative produced oil at parameter `alpha`.
pub fn v_o(mu: &Measure, kappa: f64, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        return 0.0;
    }
    let swept = mu.moment_of(Power::One, 0.0, alpha);
    swept + mu.tail_kernel_integral(alpha, kappa, alpha) / (1.0 - kappa)
}

/// `V_w'(α) = (1+κ)α/κ · ∫ dμ/y` over `[0, α]` (right limit at an atom).
pub fn v_w_prime(mu: &Measure, kappa: f64, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        return 0.0;
    }
    (1.0 + kappa) * alpha / kappa * harmonic_through(mu, alpha)
}

/// `V_o'(α) = (1+κ)α · ∫ dμ/sqrt(y² - (1-κ²)α²)` over `(α, ∞)` (right limit at an atom).
pub fn v_o_prime(mu: &Measure, kappa: f64, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        return 0.0;
    }
    (1.0 + kappa) * alpha * inverse_root_tail(mu, kappa, alpha)
}

/// `∫_[0,α] dμ/y`, atoms at `α` included.
fn harmonic_through(mu: &Measure, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        return 0.0;
    }
    mu.moment_of(Power::Inverse, 0.0, alpha) + mu.atom_mass_at(alpha) / alpha
}

/// `∫_(α,∞) dμ/sqrt(y² - (1-κ²)α²)`, atoms at `α` excluded.
fn inverse_root_tail(mu: &Measure, kappa: f64, alpha: f64) -> f64 {
    let c = (1.0 - kappa * kappa) * alpha * alpha;
    let atoms: f64 = mu
        .atoms()
        .iter()
        .filter(|at| at.length > alpha)
        .map(|at| at.area / (at.length * at.length - c).sqrt())
        .sum();
    let pieces: f64 = mu
        .pieces()
        .iter()
        .filter(|p| p.b > alpha)
        .map(|p| {
            let lo = p.a.max(alpha);
            let hi = p.b;
            let s_lo = (lo * lo - c).max(0.0).sqrt();
            let s_hi = (hi * hi - c).sqrt();
            p.rho * ((hi + s_hi) / (lo + s_lo)).ln()
        })
        .sum();
    atoms + pieces
}

/// Water fraction of the produced stream, `V_w' / (V_w' + V_o')`.
///
/// The common factor `(1+κ)α` is cancelled, so `α = 0` is allowed and gives
/// 0 for any measure with support away from the origin.
pub fn water_cut(mu: &Measure, kappa: f64, alpha: f64) -> Result<f64> {
    if alpha < 0.0 {
        return Err(Error::invalid("water cut needs alpha >= 0"));
    }
    let water = harmonic_through(mu, alpha) / kappa;
    let oil = inverse_root_tail(mu, kappa, alpha);
    let total = water + oil;
    if total <= 0.0 {
        return Err(Error::UndefinedValue(format!(
            "water cut at alpha = {alpha}: both production rates vanish"
        )));
    }
    Ok(water / total + 0.0)
}

/// `V_w + V_o`.
pub fn total_volume(mu: &Measure, kappa: f64, alpha: f64) -> f64 {
    v_w(mu, kappa, alpha) + v_o(mu, kappa, alpha)
}

/// Parameter `α ∈ [0, alpha_hi]` at which the total produced volume equals `x`,
/// by bisection on the strictly increasing map `α -> V_w + V_o`.
pub fn alpha_at_total(mu: &Measure, kappa: f64, x: f64, alpha_hi: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, alpha_hi);
    if total_volume(mu, kappa, hi) <= x {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total_volume(mu, kappa, mid) < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Values at the right end of the recovery window, from the two moments of `μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointData {
    pub vw: f64,
    pub vo: f64,
    pub vw_prime: f64,
}

/// Closed-form `V_w(α_max)`, `V_o(α_max)`, `V_w'(α_max)` in terms of
/// `I₋₁ = ∫ dμ/y` and `I₁ = ∫ y dμ`.
pub fn endpoint_data(mu: &Measure, kappa: f64, alpha_max: f64) -> Result<EndpointData> {
    validate_kappa(kappa)?;
    if mu.support_sup() > alpha_max {
        return Err(Error::invalid(format!(
            "support reaches {} beyond alpha_max = {alpha_max}",
            mu.support_sup()
        )));
    }
    let i_inv = mu.moment_of(Power::Inverse, 0.0, f64::INFINITY);
    let i_one = mu.moment_of(Power::One, 0.0, f64::INFINITY);
    let f = (1.0 + kappa) / (2.0 * kappa);
    Ok(EndpointData {
        vw: f * alpha_max * alpha_max * i_inv - f * i_one,
        vo: i_one,
        vw_prime: (1.0 + kappa) * alpha_max / kappa * i_inv,
    })
}

/// Relative slack allowed on the unit Lipschitz bound of a sampled curve.
pub const LIPSCHITZ_SLACK: f64 = 1e-9;
/// Rounding slack (relative to the curve's largest volume) on monotonicity checks.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// Sampled displacement characteristic `g = G(x)`: produced water `g` against
/// total produced volume `x`, on `[0, v_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementCurve {
    x: Vec<f64>,
    g: Vec<f64>,
    alpha_max: f64,
    kappa: f64,
}

impl DisplacementCurve {
    /// Validates monotonicity, `g <= x`, `g(0) = 0` and the unit Lipschitz bound.
    pub fn new(x: Vec<f64>, g: Vec<f64>, alpha_max: f64, kappa: f64) -> Result<Self> {
        validate_kappa(kappa)?;
        if !(alpha_max.is_finite() && alpha_max > 0.0) {
            return Err(Error::invalid("alpha_max must be positive"));
        }
        if x.len() != g.len() || x.len() < 2 {
            return Err(Error::invalid("curve needs at least two (x, g) samples"));
        }
        if x[0] != 0.0 || g[0] != 0.0 {
            return Err(Error::invalid("curve must start at (0, 0)"));
        }
        if !x.iter().chain(&g).all(|v| v.is_finite()) {
            return Err(Error::invalid("curve samples must be finite"));
        }
        let scale = x[x.len() - 1].abs().max(f64::MIN_POSITIVE);
        for i in 0..x.len() - 1 {
            let dx = x[i + 1] - x[i];
            let dg = g[i + 1] - g[i];
            if !(dx > 0.0) {
                return Err(Error::invalid(format!("curve x not strictly increasing at sample {}", i + 1)));
            }
            if dg < -MONOTONE_SLACK * scale {
                return Err(Error::invalid(format!("curve g decreases at sample {}", i + 1)));
            }
            if dg > dx * (1.0 + LIPSCHITZ_SLACK) + MONOTONE_SLACK * scale {
                return Err(Error::invalid(format!(
                    "curve slope {} exceeds 1 at sample {}",
                    dg / dx,
                    i + 1
                )));
            }
        }
        if g.iter().zip(&x).any(|(gi, xi)| *gi > *xi + MONOTONE_SLACK * scale) {
            return Err(Error::invalid("curve has water above total volume"));
        }
        Ok(Self { x, g, alpha_max, kappa })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_max
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Total produced volume at `α_max`, the last abscissa.
    pub fn v_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// `G(x)` by piecewise-linear interpolation, `x` clamped to `[0, v_max]`.
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, self.v_max());
        let i = self.x.partition_point(|&xi| xi <= x);
        if i == 0 {
            return self.g[0];
        }
        if i >= self.x.len() {
            return self.g[self.g.len() - 1];
        }
        let (x0, x1) = (self.x[i - 1], self.x[i]);
        let t = (x - x0) / (x1 - x0);
        self.g[i - 1] + t * (self.g[i] - self.g[i - 1])
    }

    /// Same samples with `g` replaced; re-validated.
    pub fn with_g(&self, g: Vec<f64>) -> Result<Self> {
        Self::new(self.x.clone(), g, self.alpha_max, self.kappa)
    }
}

/// Samples `G` at `n_samples` equally spaced `α` on `[0, α_max]`.
pub fn build_curve(
    mu: &Measure,
    kappa: f64,
    alpha_max: f64,
    n_samples: usize,
) -> Result<DisplacementCurve> {
    validate_kappa(kappa)?;
    if mu.is_zero() {
        return Err(Error::invalid("cannot build a curve for the zero measure"));
    }
    if n_samples < 2 {
        return Err(Error::invalid("need at least two curve samples"));
    }
    if !(alpha_max > 0.0) || mu.support_sup() > alpha_max {
        return Err(Error::invalid(format!(
            "support reaches {} beyond alpha_max = {alpha_max}",
            mu.support_sup()
        )));
    }
    let n = n_samples - 1;
    let (x, g): (Vec<f64>, Vec<f64>) = (0..=n)
        .map(|i| {
            let alpha = alpha_max * i as f64 / n as f64;
            let w = v_w(mu, kappa, alpha);
            (w + v_o(mu, kappa, alpha), w)
        })
        .unzip();
    DisplacementCurve::new(x, g, alpha_max, kappa)
        .map_err(|e| Error::InternalConsistency(format!("forward curve failed validation: {e}")))
}

/// `(α, V_w, V_o, water cut)` rows for reporting; the curve itself is
/// `(V_w + V_o, V_w)`.
pub fn sample_profile(
    mu: &Measure,
    kappa: f64,
    alpha_max: f64,
    n_samples: usize,
) -> Result<Vec<[f64; 4]>> {
    build_curve(mu, kappa, alpha_max, n_samples)?;
    let n = n_samples - 1;
    (0..=n)
        .map(|i| {
            let alpha = alpha_max * i as f64 / n as f64;
            Ok([
                alpha,
                v_w(mu, kappa, alpha),
                v_o(mu, kappa, alpha),
                water_cut(mu, kappa, alpha)?,
            ])
        })
        .collect()
}

/// `V_w(α_max)` and `V_w'(α_max)` read off the curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Readoff {
    pub vw: f64,
    pub vw_prime: f64,
}

/// `V_w(α_max) = G(v_max)` and
/// `V_w'(α_max) = [2 V_w(α_max) + (1+κ)/κ (v_max - V_w(α_max))] / α_max`.
pub fn curve_readoff(curve: &DisplacementCurve) -> Result<Readoff> {
    let r = curve_readoff_unscaled(curve)?;
    Ok(Readoff {
        vw: r.vw,
        vw_prime: r.vw_prime / curve.alpha_max(),
    })
}

/// The slope read-off without the division by `α_max`. Dimensionally it is
/// `α_max·V_w'(α_max)`; kept for comparison runs only.
pub fn curve_readoff_unscaled(curve: &DisplacementCurve) -> Result<Readoff> {
    let v_max = curve.v_max();
    if !(v_max > 0.0) {
        return Err(Error::invalid("curve has zero total volume"));
    }
    let kappa = curve.kappa();
    let vw = curve.eval(v_max);
    Ok(Readoff {
        vw,
        vw_prime: 2.0 * vw + (1.0 + kappa) / kappa * (v_max - vw),
    })
}

/// Sup-distance between two curves viewed as graphs: each curve's samples are
/// compared against the other's interpolant over the shared abscissa range.
pub fn graph_distance(a: &DisplacementCurve, b: &DisplacementCurve) -> f64 {
    let top = a.v_max().min(b.v_max());
    let one_way = |p: &DisplacementCurve, q: &DisplacementCurve| {
        p.x()
            .iter()
            .zip(p.g())
            .filter(|(x, _)| **x <= top)
            .map(|(x, g)| (q.eval(*x) - g).abs())
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{Atom, Piece};

    fn delta() -> Measure {
        Measure::dirac(1.0, 1.0).unwrap()
    }

    fn mixed() -> Measure {
        Measure::new(
            vec![Atom::new(1.5, 0.7), Atom::new(4.0, 1.2)],
            vec![Piece::new(2.0, 3.0, 0.8), Piece::new(5.0, 7.5, 1.3)],
        )
        .unwrap()
    }

    #[test]
    fn v_w_examples() {
        assert!((v_w(&delta(), 0.5, 2.0) - 4.5).abs() < 1e-14);
        assert_eq!(v_w(&delta(), 0.5, 0.5), 0.0);
        assert_eq!(v_w(&delta(), 0.5, 1.0), 0.0);
        assert_eq!(v_w(&Measure::zero(), 0.5, 3.0), 0.0);
    }

    #[test]
    fn v_o_examples() {
        let want = 2.0 * (1.0 - 0.8125f64.sqrt());
        assert!((v_o(&delta(), 0.5, 0.5) - want).abs() < 1e-15);
        assert!((want - 0.197224).abs() < 1e-6);
        assert!((v_o(&delta(), 0.5, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(v_o(&mixed(), 0.3, 0.0), 0.0);
    }

    #[test]
    fn v_o_conserves_pore_volume() {
        let mu = mixed();
        let pore = mu.moment(1, 0.0, f64::INFINITY).unwrap();
        for alpha in [7.5, 8.0, 20.0] {
            assert!((v_o(&mu, 0.4, alpha) - pore).abs() < 1e-12 * pore);
        }
    }

    #[test]
    fn derivative_examples() {
        assert!((v_w_prime(&delta(), 0.5, 2.0) - 6.0).abs() < 1e-14);
        let want = 1.5 * 0.5 / 0.8125f64.sqrt();
        assert!((v_o_prime(&delta(), 0.5, 0.5) - want).abs() < 1e-14);
        assert!((want - 0.832050).abs() < 1e-6);
        assert_eq!(v_o_prime(&mixed(), 0.5, 8.0), 0.0);
    }

    #[test]
    fn derivatives_at_atom_take_right_limit() {
        let d = delta();
        assert!((v_w_prime(&d, 0.5, 1.0) - 3.0).abs() < 1e-15);
        assert_eq!(v_o_prime(&d, 0.5, 1.0), 0.0);
    }

    /// Centered differences with step 1e-5 as an independent check of the
    /// closed-form derivatives.
    #[test]
    fn derivatives_match_finite_differences() {
        let mu = mixed();
        let h = 1e-5;
        for &kappa in &[0.2, 0.5, 0.8] {
            for &alpha in &[0.7, 1.2, 1.8, 2.5, 3.6, 4.5, 6.0, 7.2, 9.0] {
                let fd_w = (v_w(&mu, kappa, alpha + h) - v_w(&mu, kappa, alpha - h)) / (2.0 * h);
                let fd_o = (v_o(&mu, kappa, alpha + h) - v_o(&mu, kappa, alpha - h)) / (2.0 * h);
                let dw = v_w_prime(&mu, kappa, alpha);
                let d_o = v_o_prime(&mu, kappa, alpha);
                let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-3);
                assert!(rel(fd_w, dw) < 1e-6, "V_w' at {alpha}, κ={kappa}: {fd_w} vs {dw}");
                assert!(rel(fd_o, d_o) < 1e-6, "V_o' at {alpha}, κ={kappa}: {fd_o} vs {d_o}");
            }
        }
    }

    #[test]
    fn water_cut_examples() {
        assert_eq!(water_cut(&delta(), 0.5, 0.0).unwrap(), 0.0);
        assert_eq!(water_cut(&delta(), 0.5, 0.5).unwrap(), 0.0);
        assert_eq!(water_cut(&delta(), 0.5, 2.0).unwrap(), 1.0);
        let two = Measure::from_atoms(vec![Atom::new(1.0, 1.0), Atom::new(2.0, 1.0)]).unwrap();
        let dw = v_w_prime(&two, 0.5, 1.5);
        let d_o = v_o_prime(&two, 0.5, 1.5);
        assert!((dw - 4.5).abs() < 1e-14);
        assert!((d_o - 2.25 / 2.3125f64.sqrt()).abs() < 1e-14);
        let wc = water_cut(&two, 0.5, 1.5).unwrap();
        assert!((wc - dw / (dw + d_o)).abs() < 1e-15);
        assert!((wc - 0.752559).abs() < 1e-6);
        assert!(matches!(
            water_cut(&Measure::zero(), 0.5, 1.0),
            Err(Error::UndefinedValue(_))
        ));
    }

    #[test]
    fn build_curve_single_atom() {
        let c = build_curve(&delta(), 0.5, 2.0, 101).unwrap();
        for (x, g) in c.x().iter().zip(c.g()) {
            if *x <= 1.0 {
                assert_eq!(*g, 0.0);
            }
        }
        assert!((c.v_max() - 5.5).abs() < 1e-14);
        assert!((c.g()[100] - 4.5).abs() < 1e-14);
        assert!(build_curve(&Measure::zero(), 0.5, 2.0, 101).is_err());
        assert!(build_curve(&delta(), 0.5, 0.9, 101).is_err());
        assert!(build_curve(&delta(), 0.5, 2.0, 1).is_err());
    }

    #[test]
    fn curve_scaling_is_a_reparametrization() {
        let mu = mixed();
        let base = build_curve(&mu, 0.5, 8.0, 401).unwrap();
        for k in [0.5, 2.0] {
            let scaled = build_curve(&mu.scale(k).unwrap(), 0.5, 8.0 / k, 401).unwrap();
            assert!(graph_distance(&base, &scaled) <= 1e-9 * base.v_max());
        }
    }

    #[test]
    fn endpoint_examples() {
        let e = endpoint_data(&delta(), 0.5, 2.0).unwrap();
        assert!((e.vw - 4.5).abs() < 1e-14);
        assert_eq!(e.vo, 1.0);
        assert!((e.vw_prime - 6.0).abs() < 1e-14);
        for k in [0.5, 3.0] {
            let e = endpoint_data(&delta().scale(k).unwrap(), 0.5, 2.0 / k).unwrap();
            assert!((e.vo - 1.0).abs() < 1e-15);
        }
        let e = endpoint_data(&Measure::dirac(3.0, 2.0).unwrap(), 0.3, 3.0).unwrap();
        assert!(e.vw.abs() < 1e-14);
        assert!(endpoint_data(&delta(), 0.5, 0.5).is_err());
    }

    #[test]
    fn endpoint_matches_direct_evaluation() {
        let mu = mixed();
        let e = endpoint_data(&mu, 0.35, 9.0).unwrap();
        assert!((e.vw - v_w(&mu, 0.35, 9.0)).abs() < 1e-12 * e.vw);
        assert!((e.vo - v_o(&mu, 0.35, 9.0)).abs() < 1e-12 * e.vo);
        assert!((e.vw_prime - v_w_prime(&mu, 0.35, 9.0)).abs() < 1e-12 * e.vw_prime);
    }

    #[test]
    fn readoff_examples() {
        let c = build_curve(&delta(), 0.5, 2.0, 101).unwrap();
        let r = curve_readoff(&c).unwrap();
        assert!((r.vw - 4.5).abs() < 1e-13);
        assert!((r.vw_prime - 6.0).abs() < 1e-13);

        let (l, s, kappa) = (3.0, 2.0, 0.4);
        let c = build_curve(&Measure::dirac(l, s).unwrap(), kappa, l, 51).unwrap();
        let r = curve_readoff(&c).unwrap();
        assert!(r.vw.abs() < 1e-13);
        assert!((r.vw_prime - (1.0 + kappa) * s / kappa).abs() < 1e-12);

        let literal = curve_readoff_unscaled(&c).unwrap();
        assert!((literal.vw_prime - l * r.vw_prime).abs() < 1e-12);
    }

    #[test]
    fn readoff_rejects_degenerate_curve() {
        // validation already refuses x not strictly increasing, so a zero-volume
        // curve cannot be built at all
        assert!(DisplacementCurve::new(vec![0.0, 0.0], vec![0.0, 0.0], 1.0, 0.5).is_err());
    }

    #[test]
    fn curve_validation() {
        assert!(DisplacementCurve::new(vec![0.0, 1.0], vec![0.0, 1.5], 1.0, 0.5).is_err());
        assert!(DisplacementCurve::new(vec![0.0, 1.0, 2.0], vec![0.0, 0.5, 0.4], 1.0, 0.5).is_err());
        assert!(DisplacementCurve::new(vec![0.5, 1.0], vec![0.0, 0.5], 1.0, 0.5).is_err());
        assert!(DisplacementCurve::new(vec![0.0, 1.0], vec![0.0, 1.0], 1.0, 0.5).is_ok());
    }

    #[test]
    fn eval_interpolates_and_clamps() {
        let c = DisplacementCurve::new(vec![0.0, 1.0, 3.0], vec![0.0, 0.0, 1.0], 1.0, 0.5).unwrap();
        assert_eq!(c.eval(-1.0), 0.0);
        assert_eq!(c.eval(2.0), 0.5);
        assert_eq!(c.eval(10.0), 1.0);
        assert_eq!(c.eval(3.0), 1.0);
    }

    #[test]
    fn alpha_inversion() {
        let mu = mixed();
        for alpha in [0.3, 2.2, 5.0, 7.9] {
            let x = total_volume(&mu, 0.5, alpha);
            let back = alpha_at_total(&mu, 0.5, x, 8.0);
            assert!((back - alpha).abs() < 1e-12);
        }
    }
}
