//! Discrete model: `n` parallel tubes driven by a common pressure schedule.
//!
//! Every tube state depends on time only through the pumped volume per unit
//! area `F(t) = ∫ c`, with `c = k·Δp/μ_o`. Breakthrough of a tube of length `L`
//! happens when `F` reaches `(1+κ)L²/2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{validate_kappa, Atom, Measure};

/// A tube (length `L`, cross-section `S`); same shape as a measure atom.
pub type Tube = Atom;

/// Tubes sorted by strictly increasing length.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeSystem {
    tubes: Vec<Tube>,
}

impl TubeSystem {
    /// Sorts by length and merges equal lengths by summing their sections.
    pub fn new(mut tubes: Vec<Tube>) -> Result<Self> {
        if tubes.is_empty() {
            return Err(Error::invalid("tube system must contain at least one tube"));
        }
        for t in &tubes {
            if !(t.length.is_finite() && t.length > 0.0 && t.area.is_finite() && t.area > 0.0) {
                return Err(Error::invalid(format!(
                    "tube needs L > 0 and S > 0, got L={} S={}",
                    t.length, t.area
                )));
            }
        }
        tubes.sort_by(|a, b| a.length.total_cmp(&b.length));
        let mut merged: Vec<Tube> = Vec::with_capacity(tubes.len());
        for t in tubes {
            match merged.last_mut() {
                Some(last) if last.length == t.length => last.area += t.area,
                _ => merged.push(t),
            }
        }
        Ok(Self { tubes: merged })
    }

    pub fn tubes(&self) -> &[Tube] {
        &self.tubes
    }

    pub fn len(&self) -> usize {
        self.tubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tubes.is_empty()
    }

    /// `Σ S_j L_j`.
    pub fn pore_volume(&self) -> f64 {
        self.tubes.iter().map(|t| t.area * t.length).sum()
    }

    /// `Σ S_j δ_{L_j}`.
    pub fn to_measure(&self) -> Measure {
        Measure::from_atoms(self.tubes.clone()).expect("tube system already validated")
    }
}

/// Piecewise-constant drive `c(t)`; `c_values[i]` holds on
/// `[breakpoints[i], breakpoints[i+1])`, the last value forever after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PumpRepr", into = "PumpRepr")]
pub struct PumpHistory {
    breakpoints: Vec<f64>,
    c_values: Vec<f64>,
    cumulative: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PumpRepr {
    breakpoints: Vec<f64>,
    c: Vec<f64>,
}

impl TryFrom<PumpRepr> for PumpHistory {
    type Error = Error;

    fn try_from(r: PumpRepr) -> Result<Self> {
        PumpHistory::new(r.breakpoints, r.c)
    }
}

impl From<PumpHistory> for PumpRepr {
    fn from(p: PumpHistory) -> Self {
        PumpRepr {
            breakpoints: p.breakpoints,
            c: p.c_values,
        }
    }
}

impl PumpHistory {
    pub fn new(breakpoints: Vec<f64>, c_values: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != c_values.len() {
            return Err(Error::invalid(
                "pump needs one drive value per breakpoint and at least one segment",
            ));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::invalid("first pump breakpoint must be t = 0"));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) || !breakpoints.iter().all(|t| t.is_finite()) {
            return Err(Error::invalid("pump breakpoints must be finite and strictly increasing"));
        }
        if !c_values.iter().all(|c| c.is_finite() && *c >= 0.0) {
            return Err(Error::invalid("drive values must be finite and nonnegative"));
        }
        let mut cumulative = Vec::with_capacity(breakpoints.len());
        cumulative.push(0.0);
        for i in 1..breakpoints.len() {
            let prev = cumulative[i - 1];
            cumulative.push(prev + c_values[i - 1] * (breakpoints[i] - breakpoints[i - 1]));
        }
        Ok(Self {
            breakpoints,
            c_values,
            cumulative,
        })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![c])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn c_values(&self) -> &[f64] {
        &self.c_values
    }

    fn segment(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= t).saturating_sub(1)
    }

    pub fn drive(&self, t: f64) -> f64 {
        self.c_values[self.segment(t)]
    }

    /// `F(t) = ∫_0^t c`.
    pub fn cumulative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let k = self.segment(t);
        self.cumulative[k] + self.c_values[k] * (t - self.breakpoints[k])
    }

    /// `inf { t : F(t) >= v }`, or `None` when `F` never gets there.
    pub fn first_time_reaching(&self, v: f64) -> Option<f64> {
        if v <= 0.0 {
            return Some(0.0);
        }
        let n = self.breakpoints.len();
        // first segment whose right end reaches v
        let k = self.cumulative.partition_point(|&f| f < v);
        let seg = if k == 0 { 0 } else { k - 1 };
        if k == n || seg == n - 1 {
            let c = self.c_values[n - 1];
            if c <= 0.0 {
                return None;
            }
            return Some(self.breakpoints[n - 1] + (v - self.cumulative[n - 1]) / c);
        }
        let c = self.c_values[seg];
        let t = self.breakpoints[seg] + (v - self.cumulative[seg]) / c;
        Some(t.min(self.breakpoints[seg + 1]))
    }
}

/// Time series produced by [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct TubeSimResult {
    pub times: Vec<f64>,
    /// `F(t)` at each time.
    pub pumped: Vec<f64>,
    /// `positions[j][i]`: interface position of tube `j` at `times[i]`.
    pub positions: Vec<Vec<f64>>,
    /// Cumulative water production.
    pub water: Vec<f64>,
    /// Cumulative oil production.
    pub oil: Vec<f64>,
    /// Breakthrough time per tube, `None` if it never happens.
    pub breakthrough: Vec<Option<f64>>,
}

/// `F` at which a tube of length `L` breaks through: `(1+κ)L²/2`.
pub fn breakthrough_threshold(length: f64, kappa: f64) -> f64 {
    0.5 * (1.0 + kappa) * length * length
}

/// Root of `(κ-1)l²/2 + L·l = F` in `[0, L]`; saturates at `L` past breakthrough.
pub fn interface_position(length: f64, kappa: f64, pumped: f64) -> f64 {
    if pumped <= 0.0 {
        return 0.0;
    }
    if pumped >= breakthrough_threshold(length, kappa) {
        return length;
    }
    let disc = (length * length - 2.0 * (1.0 - kappa) * pumped).max(0.0);
    // same root as (L - sqrt(disc)) / (1 - κ), without the cancellation
    (2.0 * pumped / (length + disc.sqrt())).clamp(0.0, length)
}

/// `ξ(t) = sqrt(2F(t)/(1+κ))`: the continuum parameter matching time `t`.
pub fn reparam_xi(pump: &PumpHistory, kappa: f64, t: f64) -> f64 {
    (2.0 * pump.cumulative(t) / (1.0 + kappa)).sqrt()
}

/// Water volume accumulated up to pumped volume `f`, segment by segment
/// between consecutive breakthroughs.
struct WaterLedger {
    thresholds: Vec<f64>,
    /// water produced when tube k breaks through
    at_break: Vec<f64>,
    /// `Σ_{j<=k} S_j/L_j`
    conductance: Vec<f64>,
    kappa: f64,
}

impl WaterLedger {
    fn new(sys: &TubeSystem, kappa: f64) -> Self {
        let thresholds: Vec<f64> = sys
            .tubes()
            .iter()
            .map(|t| breakthrough_threshold(t.length, kappa))
            .collect();
        let mut conductance = Vec::with_capacity(sys.len());
        let mut at_break = Vec::with_capacity(sys.len());
        let mut acc = 0.0;
        let mut water = 0.0;
        for (k, t) in sys.tubes().iter().enumerate() {
            if k > 0 {
                water += (thresholds[k] - thresholds[k - 1]) / kappa * acc;
            }
            at_break.push(water);
            acc += t.area / t.length;
            conductance.push(acc);
        }
        Self {
            thresholds,
            at_break,
            conductance,
            kappa,
        }
    }

    fn water(&self, f: f64) -> f64 {
        let broken = self.thresholds.partition_point(|&thr| thr <= f);
        if broken == 0 {
            return 0.0;
        }
        let k = broken - 1;
        self.at_break[k] + (f - self.thresholds[k]) / self.kappa * self.conductance[k]
    }
}

/// Runs the tube system over `t_grid` (sorted, starting at 0).
pub fn simulate(
    sys: &TubeSystem,
    kappa: f64,
    pump: &PumpHistory,
    t_grid: &[f64],
) -> Result<TubeSimResult> {
    validate_kappa(kappa)?;
    if sys.is_empty() {
        return Err(Error::invalid("empty tube system"));
    }
    match t_grid.first() {
        Some(&0.0) => {}
        _ => return Err(Error::invalid("time grid must start at t = 0")),
    }
    if t_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::invalid("time grid must be sorted"));
    }

    let ledger = WaterLedger::new(sys, kappa);
    let breakthrough = ledger
        .thresholds
        .iter()
        .map(|&thr| pump.first_time_reaching(thr))
        .collect();

    let mut pumped = Vec::with_capacity(t_grid.len());
    let mut positions = vec![Vec::with_capacity(t_grid.len()); sys.len()];
    let mut water = Vec::with_capacity(t_grid.len());
    let mut oil = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let f = pump.cumulative(t);
        let mut vo = 0.0;
        for (j, tube) in sys.tubes().iter().enumerate() {
            let l = interface_position(tube.length, kappa, f);
            vo += l * tube.area;
            positions[j].push(l);
        }
        pumped.push(f);
        oil.push(vo);
        water.push(ledger.water(f));
    }
    Ok(TubeSimResult {
        times: t_grid.to_vec(),
        pumped,
        positions,
        water,
        oil,
        breakthrough,
    })
}

/// `n_steps + 1` equally spaced times on `[0, t_max]`.
pub fn uniform_times(t_max: f64, n_steps: usize) -> Result<Vec<f64>> {
    if !(t_max.is_finite() && t_max >= 0.0) || n_steps == 0 {
        return Err(Error::invalid("need t_max >= 0 and n_steps >= 1"));
    }
    Ok((0..=n_steps)
        .map(|i| t_max * i as f64 / n_steps as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_tubes() -> TubeSystem {
        TubeSystem::new(vec![Tube::new(2.0, 1.0), Tube::new(1.0, 1.0)]).unwrap()
    }

    #[test]
    fn interface_position_examples() {
        assert_eq!(interface_position(1.0, 0.5, 0.0), 0.0);
        assert!((interface_position(1.0, 0.5, 0.75) - 1.0).abs() < 1e-15);
        let want = 2.0 * (2.0 - 3.25f64.sqrt());
        assert!((interface_position(2.0, 0.5, 0.75) - want).abs() < 1e-14);
        assert!((want - 0.394449).abs() < 1e-6);
        assert_eq!(interface_position(1.0, 0.5, 10.0), 1.0);
    }

    #[test]
    fn interface_position_solves_quadratic() {
        let (l, kappa) = (3.0, 0.3);
        for i in 1..50 {
            let f = breakthrough_threshold(l, kappa) * i as f64 / 50.0;
            let x = interface_position(l, kappa, f);
            let lhs = 0.5 * (kappa - 1.0) * x * x + l * x;
            assert!((lhs - f).abs() < 1e-13 * f.max(1.0));
        }
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(breakthrough_threshold(1.0, 0.5), 0.75);
        assert_eq!(breakthrough_threshold(2.0, 0.5), 3.0);
        assert!((breakthrough_threshold(1.0, 0.999) - 0.9995).abs() < 1e-15);
    }

    #[test]
    fn two_tube_spot_values() {
        let sys = two_tubes();
        let pump = PumpHistory::constant(1.0).unwrap();
        let r = simulate(&sys, 0.5, &pump, &[0.0, 0.75, 3.0]).unwrap();
        assert_eq!(r.oil[0], 0.0);
        assert_eq!(r.water[0], 0.0);
        assert!((r.oil[1] - (1.0 + 2.0 * (2.0 - 3.25f64.sqrt()))).abs() < 1e-14);
        assert_eq!(r.water[1], 0.0);
        assert_eq!(r.breakthrough, vec![Some(0.75), Some(3.0)]);
        assert!((r.oil[2] - 3.0).abs() < 1e-14);
        assert_eq!(r.oil[2], sys.pore_volume());
    }

    #[test]
    fn water_matches_segment_sum() {
        // after both breakthroughs: (F - 0.75)/κ·1 + (F - 3)/κ·0.5
        let sys = two_tubes();
        let pump = PumpHistory::constant(1.0).unwrap();
        let r = simulate(&sys, 0.5, &pump, &[0.0, 5.0]).unwrap();
        let want = (5.0 - 0.75) / 0.5 + (5.0 - 3.0) / 0.5 * 0.5;
        assert!((r.water[1] - want).abs() < 1e-13);
    }

    #[test]
    fn equal_lengths_are_merged() {
        let sys = TubeSystem::new(vec![
            Tube::new(2.0, 1.0),
            Tube::new(1.0, 0.5),
            Tube::new(2.0, 0.25),
        ])
        .unwrap();
        assert_eq!(sys.tubes(), &[Tube::new(1.0, 0.5), Tube::new(2.0, 1.25)]);
    }

    #[test]
    fn invalid_inputs() {
        assert!(TubeSystem::new(vec![]).is_err());
        assert!(TubeSystem::new(vec![Tube::new(-1.0, 1.0)]).is_err());
        assert!(PumpHistory::new(vec![1.0], vec![1.0]).is_err());
        assert!(PumpHistory::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(PumpHistory::new(vec![0.0], vec![-1.0]).is_err());
        assert!(PumpHistory::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let pump = PumpHistory::constant(1.0).unwrap();
        assert!(simulate(&two_tubes(), 0.5, &pump, &[0.5, 1.0]).is_err());
        assert!(simulate(&two_tubes(), 1.5, &pump, &[0.0]).is_err());
    }

    #[test]
    fn zero_drive_is_static() {
        let pump = PumpHistory::constant(0.0).unwrap();
        let r = simulate(&two_tubes(), 0.5, &pump, &[0.0, 1.0, 10.0]).unwrap();
        assert!(r.oil.iter().chain(&r.water).all(|&v| v == 0.0));
        assert_eq!(r.breakthrough, vec![None, None]);
    }

    #[test]
    fn pump_cumulative_and_inverse() {
        let pump = PumpHistory::new(vec![0.0, 1.0, 2.0, 4.0], vec![2.0, 0.0, 0.5, 1.0]).unwrap();
        assert_eq!(pump.cumulative(0.5), 1.0);
        assert_eq!(pump.cumulative(1.5), 2.0);
        assert_eq!(pump.cumulative(3.0), 2.5);
        assert_eq!(pump.cumulative(6.0), 5.0);
        assert_eq!(pump.first_time_reaching(1.0), Some(0.5));
        // flat stretch: the first time F hits 2 is t = 1
        assert_eq!(pump.first_time_reaching(2.0), Some(1.0));
        assert_eq!(pump.first_time_reaching(2.5), Some(3.0));
        assert_eq!(pump.first_time_reaching(5.0), Some(6.0));
        let stop = PumpHistory::new(vec![0.0, 1.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(stop.first_time_reaching(2.0), None);
    }

    #[test]
    fn reparam_examples() {
        let pump = PumpHistory::constant(1.0).unwrap();
        assert!((reparam_xi(&pump, 0.5, 0.75) - 1.0).abs() < 1e-15);
        assert_eq!(reparam_xi(&pump, 0.5, 0.0), 0.0);
        assert!((reparam_xi(&pump, 0.5, 3.0) - 2.0).abs() < 1e-15);
    }

    fn arb_system() -> impl Strategy<Value = TubeSystem> {
        prop::collection::vec((0.1f64..10.0, 0.1f64..3.0), 1..12).prop_map(|v| {
            TubeSystem::new(v.into_iter().map(|(l, s)| Tube::new(l, s)).collect()).unwrap()
        })
    }

    fn arb_pump() -> impl Strategy<Value = PumpHistory> {
        prop::collection::vec((0.01f64..2.0, 0.0f64..3.0), 1..6).prop_map(|segs| {
            let mut t = 0.0;
            let mut bps = Vec::new();
            let mut cs = Vec::new();
            for (dt, c) in segs {
                bps.push(t);
                cs.push(c);
                t += dt;
            }
            // keep the tail pumping so every tube eventually breaks through
            *cs.last_mut().unwrap() += 0.5;
            PumpHistory::new(bps, cs).unwrap()
        })
    }

    proptest! {
        #[test]
        fn outputs_are_monotone(sys in arb_system(), pump in arb_pump(), kappa in 0.05f64..0.95) {
            let times = uniform_times(100.0, 400).unwrap();
            let r = simulate(&sys, kappa, &pump, &times).unwrap();
            for w in r.water.windows(2) { prop_assert!(w[1] >= w[0]); }
            for w in r.oil.windows(2) { prop_assert!(w[1] >= w[0] - 1e-15 * w[0]); }
            for (j, pos) in r.positions.iter().enumerate() {
                let l = sys.tubes()[j].length;
                for w in pos.windows(2) { prop_assert!(w[1] >= w[0]); }
                prop_assert!(pos.iter().all(|&x| (0.0..=l).contains(&x)));
            }
        }

        #[test]
        fn breakthrough_times_increase(sys in arb_system(), pump in arb_pump(), kappa in 0.05f64..0.95) {
            let r = simulate(&sys, kappa, &pump, &[0.0]).unwrap();
            let ts: Vec<f64> = r.breakthrough.iter().map(|t| t.unwrap()).collect();
            for w in ts.windows(2) { prop_assert!(w[0] < w[1]); }
        }
    }
}
