//! Stability, sensitivity and ambiguity experiments built on the forward and
//! inverse maps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::{alpha_at_total, total_volume, v_w, water_cut, DisplacementCurve};
use crate::inverse::{solve_with_operator, FixedPointSolution, KernelOperator, RecoveryConfig};
use crate::measures::{random_atoms_with, validate_kappa, AtomRanges, Measure, Piece};

/// Lipschitz constant of the inverse map in the sup norm:
/// `(1+κ)/(2κ)·(α_max + (3+κ)/(1+κ))`.
pub fn stability_bound(kappa: f64, alpha_max: f64) -> f64 {
    (1.0 + kappa) / (2.0 * kappa) * (alpha_max + (3.0 + kappa) / (1.0 + kappa))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    /// `sup |G₁ - G₂|` over `[0, min v_max]`.
    pub delta: f64,
    /// `‖V₁ - V₂‖∞` on the recovery grid.
    pub v_diff: f64,
    pub bound_constant: f64,
    /// `bound_constant · delta`.
    pub bound: f64,
    /// `v_diff / delta`; `None` when `delta = 0`.
    pub ratio: Option<f64>,
    /// Sum of both solves' a-priori iteration error bounds, allowed on top of `bound`.
    pub slack: f64,
    pub iterations: [usize; 2],
}

/// `sup |G₁ - G₂|` over the common abscissa range. Both curves are piecewise
/// linear, so the sup is attained at a sample of one of them.
pub fn curve_sup_distance(a: &DisplacementCurve, b: &DisplacementCurve) -> f64 {
    crate::forward::graph_distance(a, b)
}

/// Solves both fixed points on the same grid and checks
/// `‖V₁ - V₂‖∞ <= stability_bound · δ`.
pub fn stability_experiment(
    curve1: &DisplacementCurve,
    curve2: &DisplacementCurve,
    config: &RecoveryConfig,
) -> Result<StabilityReport> {
    if curve1.kappa() != curve2.kappa() || curve1.alpha_max() != curve2.alpha_max() {
        return Err(Error::invalid("curves must share kappa and alpha_max"));
    }
    let kappa = curve1.kappa();
    let alpha_max = curve1.alpha_max();
    let op = KernelOperator::uniform(alpha_max, config.n_grid, kappa, config.quad_order)?;
    let s1 = solve_with_operator(curve1, &op, config)?;
    let s2 = solve_with_operator(curve2, &op, config)?;
    let r = stability_report(curve1, curve2, &s1, &s2);
    if r.v_diff > r.bound + r.slack {
        return Err(Error::InternalConsistency(format!(
            "stability bound violated: |V1 - V2| = {:e} > {:e} + {:e}",
            r.v_diff, r.bound, r.slack
        )));
    }
    Ok(r)
}

fn stability_report(
    curve1: &DisplacementCurve,
    curve2: &DisplacementCurve,
    s1: &FixedPointSolution,
    s2: &FixedPointSolution,
) -> StabilityReport {
    let delta = curve_sup_distance(curve1, curve2);
    let v_diff = s1
        .v
        .iter()
        .zip(&s2.v)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let bound_constant = stability_bound(curve1.kappa(), curve1.alpha_max());
    StabilityReport {
        delta,
        v_diff,
        bound_constant,
        bound: bound_constant * delta,
        ratio: (delta > 0.0).then(|| v_diff / delta),
        slack: s1.error_bound + s2.error_bound,
        iterations: [s1.iterations, s2.iterations],
    }
}

/// Adds `δ₀ sin(πx/v_max)` to `g`, then restores the curve conditions by
/// clamping each increment to `[0, Δx]` (and `g <= x`) from left to right.
pub fn perturb_sinusoidal(curve: &DisplacementCurve, delta0: f64) -> Result<DisplacementCurve> {
    if !delta0.is_finite() {
        return Err(Error::invalid("perturbation amplitude must be finite"));
    }
    let v_max = curve.v_max();
    let x = curve.x();
    let mut g = Vec::with_capacity(x.len());
    g.push(0.0);
    for i in 1..x.len() {
        let raw = curve.g()[i] + delta0 * (std::f64::consts::PI * x[i] / v_max).sin();
        let prev = g[i - 1];
        let dx = x[i] - x[i - 1];
        g.push(raw.clamp(prev, prev + dx).min(x[i]).max(prev));
    }
    curve.with_g(g)
}

/// One Monte Carlo trial: two measures, their volumes and (if accepted) the
/// ratio of relative curve-slope spread to relative cumulative spread.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityRecord {
    pub seed: u64,
    pub n1: usize,
    pub n2: usize,
    pub v1_max: f64,
    pub v2_max: f64,
    pub accepted: bool,
    pub c_value: Option<f64>,
}

/// `|a - b| / (a + b)`, 0 where both vanish.
fn relative_spread(a: f64, b: f64) -> f64 {
    let s = a + b;
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Outcome of [`sensitivity_constant`] for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sensitivity {
    pub accepted: bool,
    pub c_value: Option<f64>,
    pub v1_max: f64,
    pub v2_max: f64,
}

/// `‖(G₁' - G₂')/(G₁' + G₂')‖_{L¹(0,X)} / ‖(F₁ - F₂)/(F₁ + F₂)‖_{L¹(0,α_max)}`
/// with `X = min(V₁,max, V₂,max)` and `F_j(α) = μ_j[0, α)`. `G'` is the water
/// cut, sampled on a uniform grid of `n_grid` points plus both sides of every
/// jump. The `F` term is integrated exactly between breakpoints.
///
/// Pairs failing `|V₁,max - V₂,max| < V₁,max/10` are returned unevaluated.
pub fn sensitivity_constant(
    mu1: &Measure,
    mu2: &Measure,
    kappa: f64,
    alpha_max: f64,
    n_grid: usize,
) -> Result<Sensitivity> {
    validate_kappa(kappa)?;
    if mu1.is_zero() || mu2.is_zero() {
        return Err(Error::invalid("sensitivity needs two nonzero measures"));
    }
    if n_grid < 2 {
        return Err(Error::invalid("n_grid must be at least 2"));
    }
    if mu1.support_sup() > alpha_max || mu2.support_sup() > alpha_max {
        return Err(Error::invalid("measure support exceeds alpha_max"));
    }
    let v1 = total_volume(mu1, kappa, alpha_max);
    let v2 = total_volume(mu2, kappa, alpha_max);
    if !((v1 - v2).abs() < v1 / 10.0) {
        return Ok(Sensitivity {
            accepted: false,
            c_value: None,
            v1_max: v1,
            v2_max: v2,
        });
    }

    let f_norm = cumulative_spread(mu1, mu2, alpha_max);
    if f_norm == 0.0 {
        return Err(Error::Degenerate("measures have identical cumulatives (0/0 ratio)".into()));
    }

    let top = v1.min(v2);
    let eps = 1e-9 * top;
    let mut xs: Vec<f64> = (0..n_grid).map(|i| top * i as f64 / (n_grid - 1) as f64).collect();
    for mu in [mu1, mu2] {
        for y in mu.breakpoints() {
            let xj = total_volume(mu, kappa, y);
            for x in [xj - eps, xj + eps] {
                if x > 0.0 && x < top {
                    xs.push(x);
                }
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let wc = |mu: &Measure, x: f64| -> Result<f64> { water_cut(mu, kappa, alpha_at_total(mu, kappa, x, alpha_max)) };
    let mut r = Vec::with_capacity(xs.len());
    for &x in &xs {
        r.push(relative_spread(wc(mu1, x)?, wc(mu2, x)?));
    }
    let g_norm: f64 = xs
        .windows(2)
        .zip(r.windows(2))
        .map(|(x, r)| 0.5 * (x[1] - x[0]) * (r[0] + r[1]))
        .sum();
    let c = g_norm / f_norm;
    if !c.is_finite() {
        return Err(Error::InternalConsistency(format!("sensitivity ratio is {c}")));
    }
    Ok(Sensitivity {
        accepted: true,
        c_value: Some(c),
        v1_max: v1,
        v2_max: v2,
    })
}

/// `∫_0^{α_max} |F₁ - F₂|/(F₁ + F₂) dα`, midpoint rule between breakpoints of
/// either measure (exact when both are purely atomic).
fn cumulative_spread(mu1: &Measure, mu2: &Measure, alpha_max: f64) -> f64 {
    let mut edges = vec![0.0, alpha_max];
    edges.extend(mu1.breakpoints().into_iter().chain(mu2.breakpoints()).filter(|&y| y > 0.0 && y < alpha_max));
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let mass = |mu: &Measure, a: f64| mu.moment(0, 0.0, a).unwrap_or(0.0);
    let mut acc = 0.0;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        // pieces make F linear in between; refine so the midpoint rule is accurate
        let m = if mu1.pieces().is_empty() && mu2.pieces().is_empty() { 1 } else { 64 };
        let h = (b - a) / m as f64;
        for k in 0..m {
            let mid = a + (k as f64 + 0.5) * h;
            acc += h * relative_spread(mass(mu1, mid), mass(mu2, mid));
        }
    }
    acc
}

/// Monte Carlo sensitivity protocol settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    /// Number of accepted pairs to collect.
    pub pairs: usize,
    pub kappa: f64,
    pub alpha_max: f64,
    pub n_grid: usize,
    /// Trial `i` uses seed `seed + i`.
    pub seed: u64,
    pub max_attempts: usize,
    /// Atom count drawn uniformly from this inclusive range, per measure.
    pub atoms: (usize, usize),
    #[serde(skip)]
    pub ranges: AtomRanges,
    pub jobs: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            pairs: 1000,
            kappa: 0.5,
            alpha_max: 10.0,
            n_grid: 2001,
            seed: 0,
            max_attempts: 200_000,
            atoms: (5, 50),
            ranges: AtomRanges::default(),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub attempted: usize,
    pub accepted: usize,
    pub min_c: Option<f64>,
    pub median_c: Option<f64>,
    pub max_c: Option<f64>,
    pub reaches_five: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McOutcome {
    /// Every attempted trial in seed order, accepted or not.
    pub records: Vec<SensitivityRecord>,
    pub summary: McSummary,
}

/// The two random measures of the trial with this seed.
pub fn trial_measures(seed: u64, config: &McConfig) -> Result<(Measure, Measure)> {
    let (lo, hi) = config.atoms;
    if lo == 0 || lo > hi {
        return Err(Error::invalid("atom count range must satisfy 1 <= lo <= hi"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n1 = rng.gen_range(lo..=hi);
    let mu1 = random_atoms_with(&mut rng, n1, config.ranges)?;
    let n2 = rng.gen_range(lo..=hi);
    let mu2 = random_atoms_with(&mut rng, n2, config.ranges)?;
    Ok((mu1, mu2))
}

/// Runs one trial.
pub fn run_trial(seed: u64, config: &McConfig) -> Result<SensitivityRecord> {
    let (mu1, mu2) = trial_measures(seed, config)?;
    let s = sensitivity_constant(&mu1, &mu2, config.kappa, config.alpha_max, config.n_grid)?;
    Ok(SensitivityRecord {
        seed,
        n1: mu1.atoms().len(),
        n2: mu2.atoms().len(),
        v1_max: s.v1_max,
        v2_max: s.v2_max,
        accepted: s.accepted,
        c_value: s.c_value,
    })
}

/// Runs trials in seed order until `pairs` are accepted. Trials run in
/// batches on a pool of `jobs` threads; the output does not depend on `jobs`.
pub fn run_monte_carlo(config: &McConfig) -> Result<McOutcome> {
    validate_kappa(config.kappa)?;
    if config.pairs == 0 || config.jobs == 0 {
        return Err(Error::invalid("pairs and jobs must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let batch = 64 * config.jobs;
    let mut records = Vec::new();
    let mut accepted = 0;
    let mut next = 0usize;
    while accepted < config.pairs && next < config.max_attempts {
        let end = (next + batch).min(config.max_attempts);
        let seeds: Vec<u64> = (next..end).map(|i| config.seed.wrapping_add(i as u64)).collect();
        let out: Vec<Result<SensitivityRecord>> =
            pool.install(|| seeds.par_iter().map(|&s| run_trial(s, config)).collect());
        for rec in out {
            let rec = rec?;
            if rec.accepted {
                accepted += 1;
            }
            records.push(rec);
            if accepted == config.pairs {
                break;
            }
        }
        next = end;
    }
    let summary = summarize(&records);
    Ok(McOutcome { records, summary })
}

fn summarize(records: &[SensitivityRecord]) -> McSummary {
    let mut cs: Vec<f64> = records.iter().filter_map(|r| r.c_value).collect();
    cs.sort_by(f64::total_cmp);
    let median = if cs.is_empty() {
        None
    } else if cs.len() % 2 == 1 {
        Some(cs[cs.len() / 2])
    } else {
        Some(0.5 * (cs[cs.len() / 2 - 1] + cs[cs.len() / 2]))
    };
    McSummary {
        attempted: records.len(),
        accepted: records.iter().filter(|r| r.accepted).count(),
        min_c: cs.first().copied(),
        median_c: median,
        max_c: cs.last().copied(),
        reaches_five: cs.last().is_some_and(|&c| c >= 5.0),
    }
}

/// Two measures equal below `α₀` whose tails differ by a length rescaling.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityPair {
    pub mu1: Measure,
    pub mu2: Measure,
    pub alpha0: f64,
    pub k_factor: f64,
}

/// `μ₁ = λ[1,α₀) + λ[α₀+1,α₀+2)`,
/// `μ₂ = λ[1,α₀) + k²·λ[(α₀+1)/k,(α₀+2)/k)`, for `α₀ > 1`, `0 < k < 1 + 1/α₀`.
pub fn ambiguity_pair(alpha0: f64, k_factor: f64) -> Result<AmbiguityPair> {
    if !(alpha0 > 1.0 && alpha0.is_finite()) {
        return Err(Error::invalid("alpha0 must exceed 1"));
    }
    let k_hi = 1.0 + 1.0 / alpha0;
    if !(k_factor > 0.0 && k_factor < k_hi) {
        return Err(Error::invalid(format!("k must lie in (0, {k_hi}), got {k_factor}")));
    }
    let head = Piece::new(1.0, alpha0, 1.0);
    let mu1 = Measure::from_pieces(vec![head, Piece::new(alpha0 + 1.0, alpha0 + 2.0, 1.0)])?;
    let mu2 = Measure::from_pieces(vec![
        head,
        Piece::new((alpha0 + 1.0) / k_factor, (alpha0 + 2.0) / k_factor, k_factor * k_factor),
    ])?;
    Ok(AmbiguityPair {
        mu1,
        mu2,
        alpha0,
        k_factor,
    })
}

/// `sup |G₁(x) - G₂(x)|` over the nodes of a uniform `n_grid`-point grid on
/// `[0, min_j X_j(α₀)]` that satisfy `x <= min_j X_j(α_probe)`, where
/// `X_j(α) = V_w + V_o` for `μ_j`. `G_j(x)` is evaluated exactly by inverting
/// `X_j`. A fixed grid keeps the gap nondecreasing in the probe.
pub fn curve_gap(pair: &AmbiguityPair, kappa: f64, alpha_probe: f64, n_grid: usize) -> Result<f64> {
    validate_kappa(kappa)?;
    if !(alpha_probe >= 0.0 && alpha_probe <= pair.alpha0) {
        return Err(Error::invalid("probe must lie in [0, alpha0]"));
    }
    if n_grid < 2 {
        return Err(Error::invalid("n_grid must be at least 2"));
    }
    let (mu1, mu2) = (&pair.mu1, &pair.mu2);
    let alpha_max = mu1.support_sup().max(mu2.support_sup()).max(pair.alpha0);
    let top = total_volume(mu1, kappa, pair.alpha0).min(total_volume(mu2, kappa, pair.alpha0));
    let reach = total_volume(mu1, kappa, alpha_probe).min(total_volume(mu2, kappa, alpha_probe));
    let g = |mu: &Measure, x: f64| v_w(mu, kappa, alpha_at_total(mu, kappa, x, alpha_max));
    let mut gap = 0.0f64;
    for i in 0..n_grid {
        let x = top * i as f64 / (n_grid - 1) as f64;
        if x > reach {
            break;
        }
        gap = gap.max((g(mu1, x) - g(mu2, x)).abs());
    }
    Ok(gap)
}

/// Leading-order size of the gap at `α`:
/// `(1-κ²)α²/2 · |Δ∫_{[α₀,∞)} dμ/y| / (1-κ)`, the first term of the oil
/// volume's tail expansion.
pub fn series_gap_estimate(pair: &AmbiguityPair, kappa: f64, alpha: f64) -> Result<f64> {
    validate_kappa(kappa)?;
    let tail = |mu: &Measure| mu.moment(-1, pair.alpha0, f64::INFINITY);
    let d = (tail(&pair.mu1)? - tail(&pair.mu2)?).abs();
    Ok((1.0 + kappa) * alpha * alpha / 2.0 * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::build_curve;
    use crate::measures::Atom;

    #[test]
    fn bound_examples() {
        assert!((stability_bound(0.5, 10.0) - 18.5).abs() < 1e-12);
        assert!((stability_bound(0.5, 0.0) - 3.5).abs() < 1e-12);
        let want = 1.999 / 1.998 * (1.0 + 3.999 / 1.999);
        assert!((stability_bound(0.999, 1.0) - want).abs() < 1e-12);
        assert!((stability_bound(0.999, 1.0) - 3.0025).abs() < 1e-3);
    }

    #[test]
    fn bound_monotone() {
        for i in 1..10 {
            let k = 0.1 * i as f64;
            for j in 0..10 {
                let a = j as f64;
                assert!(stability_bound(k, a + 1.0) > stability_bound(k, a));
                if i < 9 {
                    assert!(stability_bound(k + 0.1, a) < stability_bound(k, a));
                }
            }
        }
    }

    #[test]
    fn identical_curves_are_stable() {
        let mu = Measure::uniform(3.0, 9.0, 1.0).unwrap();
        let c = build_curve(&mu, 0.5, 10.0, 1001).unwrap();
        let cfg = RecoveryConfig::default().with_grid(401);
        let r = stability_experiment(&c, &c, &cfg).unwrap();
        assert_eq!(r.delta, 0.0);
        assert_eq!(r.v_diff, 0.0);
        assert_eq!(r.ratio, None);
    }

    #[test]
    fn perturbed_curve_within_bound() {
        let mu = Measure::uniform(3.0, 9.0, 1.0).unwrap();
        let c = build_curve(&mu, 0.5, 10.0, 1001).unwrap();
        let p = perturb_sinusoidal(&c, 1e-3 * c.v_max()).unwrap();
        let cfg = RecoveryConfig::default().with_grid(401);
        let r = stability_experiment(&c, &p, &cfg).unwrap();
        assert!(r.delta > 0.5e-3 * c.v_max());
        assert!(r.delta <= 1e-3 * c.v_max() * (1.0 + 1e-12));
        assert!(r.v_diff <= 18.5 * r.delta);
    }

    #[test]
    fn mismatched_curves_rejected() {
        let mu = Measure::dirac(1.0, 1.0).unwrap();
        let a = build_curve(&mu, 0.5, 2.0, 11).unwrap();
        let b = build_curve(&mu, 0.5, 3.0, 11).unwrap();
        assert!(stability_experiment(&a, &b, &RecoveryConfig::default()).is_err());
    }

    #[test]
    fn identical_measures_are_degenerate() {
        let mu = Measure::from_atoms(vec![Atom::new(3.0, 1.0), Atom::new(5.0, 2.0)]).unwrap();
        assert!(matches!(
            sensitivity_constant(&mu, &mu, 0.5, 10.0, 101),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn nearby_measures_give_finite_positive_c() {
        let mu1 = Measure::from_atoms(vec![Atom::new(3.0, 1.0), Atom::new(5.0, 2.0)]).unwrap();
        let mu2 = Measure::from_atoms(vec![Atom::new(3.0, 1.0), Atom::new(5.0 + 1e-6, 2.0)]).unwrap();
        let s = sensitivity_constant(&mu1, &mu2, 0.5, 10.0, 2001).unwrap();
        assert!(s.accepted);
        let c = s.c_value.unwrap();
        assert!(c.is_finite() && c > 0.0, "c = {c}");
    }

    #[test]
    fn cumulative_spread_of_two_diracs() {
        // F1 = 1 on [2,10), F2 = 1 on [4,10): ratio 1 on [2,4)
        let a = Measure::dirac(2.0, 1.0).unwrap();
        let b = Measure::dirac(4.0, 1.0).unwrap();
        assert!((cumulative_spread(&a, &b, 10.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn filter_rejects_unbalanced_pairs() {
        let a = Measure::dirac(3.0, 1.0).unwrap();
        let b = Measure::dirac(3.0, 2.0).unwrap();
        let s = sensitivity_constant(&a, &b, 0.5, 10.0, 11).unwrap();
        assert!(!s.accepted);
        assert_eq!(s.c_value, None);
        assert!((s.v2_max / s.v1_max - 2.0).abs() < 1e-12);
    }

    #[test]
    fn trials_are_reproducible() {
        let cfg = McConfig {
            n_grid: 201,
            ..McConfig::default()
        };
        for seed in 0..5 {
            let a = run_trial(seed, &cfg).unwrap();
            let b = run_trial(seed, &cfg).unwrap();
            assert_eq!(a, b);
            assert!((5..=50).contains(&a.n1) && (5..=50).contains(&a.n2));
        }
    }

    #[test]
    fn mc_independent_of_jobs() {
        let base = McConfig {
            pairs: 5,
            n_grid: 101,
            ..McConfig::default()
        };
        let one = run_monte_carlo(&base).unwrap();
        let four = run_monte_carlo(&McConfig { jobs: 4, ..base }).unwrap();
        assert_eq!(one, four);
        assert_eq!(one.summary.accepted, 5);
        assert!(one.records.last().unwrap().accepted);
    }

    #[test]
    fn ambiguity_pair_examples() {
        let p = ambiguity_pair(2.0, 1.2).unwrap();
        let tail = p.mu2.pieces()[1];
        assert!((tail.a - 2.5).abs() < 1e-15);
        assert!((tail.b - 10.0 / 3.0).abs() < 1e-15);
        assert!((tail.rho - 1.44).abs() < 1e-15);
        let same = ambiguity_pair(2.0, 1.0).unwrap();
        assert_eq!(same.mu1, same.mu2);
        assert!(ambiguity_pair(2.0, 1.6).is_err());
        assert!(ambiguity_pair(2.0, 1.5).is_err());
        assert!(ambiguity_pair(1.0, 1.1).is_err());
    }

    #[test]
    fn gap_zero_for_identity_scaling() {
        let p = ambiguity_pair(2.0, 1.0).unwrap();
        assert!(curve_gap(&p, 0.5, 2.0, 201).unwrap() <= 1e-10);
    }

    #[test]
    fn reference_pair_gap_near_series_estimate() {
        let p = ambiguity_pair(2.0, 1.2).unwrap();
        let gap = curve_gap(&p, 0.5, 2.0, 401).unwrap();
        let est = series_gap_estimate(&p, 0.5, 2.0).unwrap();
        assert!(gap > 0.1, "gap = {gap}");
        assert!(gap <= 2.0 * est && est <= 2.0 * gap, "gap {gap} vs estimate {est}");
        let mut prev = 0.0;
        for probe in [0.0, 0.5, 1.0, 1.5, 2.0] {
            let g = curve_gap(&p, 0.5, probe, 401).unwrap();
            assert!(g >= prev);
            prev = g;
        }
    }
}
