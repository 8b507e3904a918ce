//! Tube-length measures and the integrals the model takes against them.
//!
//! A [`Measure`] is a finite sum of point atoms `S·δ_L` plus piecewise-constant
//! density pieces `ρ·λ_[a,b]`. Every integral used by the forward and inverse
//! maps is evaluated in closed form. Intervals are half-open, `[a, b)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper limit on the viscosity ratio so that `1 - κ` stays away from zero.
pub const KAPPA_MAX: f64 = 0.999;

pub(crate) fn validate_kappa(kappa: f64) -> Result<()> {
    if kappa.is_finite() && kappa > 0.0 && kappa <= KAPPA_MAX {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "viscosity ratio must lie in (0, {KAPPA_MAX}], got {kappa}"
        )))
    }
}

/// `S·δ_L`: tubes of length `L` with total cross-section `S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "S")]
    pub area: f64,
}

/// Uniform area-per-length density `rho` on `[a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub a: f64,
    pub b: f64,
    pub rho: f64,
}

impl Atom {
    pub fn new(length: f64, area: f64) -> Self {
        Self { length, area }
    }
}

impl Piece {
    pub fn new(a: f64, b: f64, rho: f64) -> Self {
        Self { a, b, rho }
    }

    /// Overlap of the piece with `[lo, hi)`, if non-empty.
    fn clip(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let l = self.a.max(lo);
        let h = self.b.min(hi);
        (l < h).then_some((l, h))
    }
}

/// Exponent of the moment integrand `y^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Power {
    Inverse,
    Zero,
    One,
}

impl Power {
    fn from_exponent(p: i32) -> Result<Self> {
        match p {
            -1 => Ok(Power::Inverse),
            0 => Ok(Power::Zero),
            1 => Ok(Power::One),
            _ => Err(Error::invalid(format!("moment exponent must be -1, 0 or 1, got {p}"))),
        }
    }

    fn atom(self, l: f64) -> f64 {
        match self {
            Power::Inverse => 1.0 / l,
            Power::Zero => 1.0,
            Power::One => l,
        }
    }

    /// `∫_lo^hi y^p dy`.
    fn piece(self, lo: f64, hi: f64) -> f64 {
        match self {
            Power::Inverse => ((hi - lo) / lo).ln_1p(),
            Power::Zero => hi - lo,
            Power::One => 0.5 * (hi - lo) * (hi + lo),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MeasureRepr {
    #[serde(default)]
    atoms: Vec<Atom>,
    #[serde(default)]
    pieces: Vec<Piece>,
}

/// Bounded, positive measure on `(0, ∞)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct Measure {
    atoms: Vec<Atom>,
    pieces: Vec<Piece>,
}

impl TryFrom<MeasureRepr> for Measure {
    type Error = Error;

    fn try_from(r: MeasureRepr) -> Result<Self> {
        Measure::new(r.atoms, r.pieces)
    }
}

impl From<Measure> for MeasureRepr {
    fn from(m: Measure) -> Self {
        MeasureRepr {
            atoms: m.atoms,
            pieces: m.pieces,
        }
    }
}

impl Measure {
    pub fn new(atoms: Vec<Atom>, pieces: Vec<Piece>) -> Result<Self> {
        for at in &atoms {
            if !(at.length.is_finite() && at.length > 0.0) {
                return Err(Error::invalid(format!("atom length must be finite and > 0, got {}", at.length)));
            }
            if !(at.area.is_finite() && at.area > 0.0) {
                return Err(Error::invalid(format!("atom area must be finite and > 0, got {}", at.area)));
            }
        }
        for p in &pieces {
            if !(p.a.is_finite() && p.b.is_finite() && p.a > 0.0 && p.a < p.b) {
                return Err(Error::invalid(format!(
                    "density piece needs 0 < a < b < inf, got [{}, {})",
                    p.a, p.b
                )));
            }
            if !(p.rho.is_finite() && p.rho >= 0.0) {
                return Err(Error::invalid(format!("piece density must be finite and >= 0, got {}", p.rho)));
            }
        }
        Ok(Self { atoms, pieces })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_atoms(atoms: Vec<Atom>) -> Result<Self> {
        Self::new(atoms, Vec::new())
    }

    pub fn from_pieces(pieces: Vec<Piece>) -> Result<Self> {
        Self::new(Vec::new(), pieces)
    }

    /// Single atom `S·δ_L`.
    pub fn dirac(length: f64, area: f64) -> Result<Self> {
        Self::from_atoms(vec![Atom::new(length, area)])
    }

    /// Single piece `ρ·λ_[a,b)`.
    pub fn uniform(a: f64, b: f64, rho: f64) -> Result<Self> {
        Self::from_pieces(vec![Piece::new(a, b, rho)])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.pieces.iter().all(|p| p.rho == 0.0)
    }

    /// Sum of two measures.
    pub fn plus(&self, other: &Measure) -> Measure {
        let mut out = self.clone();
        out.atoms.extend_from_slice(&other.atoms);
        out.pieces.extend_from_slice(&other.pieces);
        out
    }

    /// Right end of the support; 0 for the zero measure.
    pub fn support_sup(&self) -> f64 {
        let a = self.atoms.iter().map(|a| a.length).fold(0.0, f64::max);
        self.pieces
            .iter()
            .filter(|p| p.rho > 0.0)
            .map(|p| p.b)
            .fold(a, f64::max)
    }

    /// Left end of the support; `inf` for the zero measure.
    pub fn support_inf(&self) -> f64 {
        let a = self.atoms.iter().map(|a| a.length).fold(f64::INFINITY, f64::min);
        self.pieces
            .iter()
            .filter(|p| p.rho > 0.0)
            .map(|p| p.a)
            .fold(a, f64::min)
    }

    /// Sorted, deduplicated atom locations and piece endpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .atoms
            .iter()
            .map(|a| a.length)
            .chain(self.pieces.iter().flat_map(|p| [p.a, p.b]))
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// `∫_[a,b) y^p dμ(y)` for `p ∈ {-1, 0, 1}`. `b` may be infinite.
    pub fn moment(&self, p: i32, a: f64, b: f64) -> Result<f64> {
        let power = Power::from_exponent(p)?;
        if !(a >= 0.0 && a <= b) {
            return Err(Error::invalid(format!("moment needs 0 <= a <= b, got [{a}, {b})")));
        }
        Ok(self.moment_of(power, a, b))
    }

    pub(crate) fn moment_of(&self, power: Power, a: f64, b: f64) -> f64 {
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|at| a <= at.length && at.length < b)
            .map(|at| at.area * power.atom(at.length))
            .sum();
        let pieces: f64 = self
            .pieces
            .iter()
            .filter_map(|p| p.clip(a, b).map(|(lo, hi)| p.rho * power.piece(lo, hi)))
            .sum();
        atoms + pieces
    }

    /// Mass of the atoms sitting exactly at `y`.
    pub(crate) fn atom_mass_at(&self, y: f64) -> f64 {
        self.atoms.iter().filter(|at| at.length == y).map(|at| at.area).sum()
    }

    /// `∫_[a,∞) (y - sqrt(y² - (1-κ²)α²)) dμ(y)`, requires `a >= α >= 0`.
    pub fn tail_kernel_integral(&self, alpha: f64, kappa: f64, a: f64) -> f64 {
        debug_assert!(alpha >= 0.0 && a >= alpha, "tail integral needs a >= alpha >= 0");
        let c = (1.0 - kappa * kappa) * alpha * alpha;
        if c == 0.0 {
            return 0.0;
        }
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|at| at.length >= a)
            .map(|at| at.area * kernel_gap(at.length, c))
            .sum();
        let pieces: f64 = self
            .pieces
            .iter()
            .filter_map(|p| {
                p.clip(a, f64::INFINITY)
                    .map(|(lo, hi)| p.rho * tail_antiderivative_diff(lo, hi, c))
            })
            .sum();
        atoms + pieces
    }

    /// `μ'(A) = k·μ(k·A)`: atoms `(L, S) -> (L/k, k·S)`, pieces
    /// `(a, b, ρ) -> (a/k, b/k, k²ρ)`. Leaves the pore volume unchanged.
    pub fn scale(&self, k: f64) -> Result<Measure> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::invalid(format!("scale factor must be > 0, got {k}")));
        }
        let atoms = self
            .atoms
            .iter()
            .map(|at| Atom::new(at.length / k, k * at.area))
            .collect();
        let pieces = self
            .pieces
            .iter()
            .map(|p| Piece::new(p.a / k, p.b / k, k * k * p.rho))
            .collect();
        Measure::new(atoms, pieces)
    }

    /// Multiplies every atom area and piece density by `m`.
    pub fn with_mass_factor(&self, m: f64) -> Result<Measure> {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::invalid(format!("mass factor must be > 0, got {m}")));
        }
        let atoms = self.atoms.iter().map(|at| Atom::new(at.length, m * at.area)).collect();
        let pieces = self.pieces.iter().map(|p| Piece::new(p.a, p.b, m * p.rho)).collect();
        Measure::new(atoms, pieces)
    }

    /// The `μ_k(A) = k²·μ(k·A)` family: [`Measure::scale`] followed by an extra factor `k`.
    pub fn scale_squared(&self, k: f64) -> Result<Measure> {
        self.scale(k)?.with_mass_factor(k)
    }
}

/// `y - sqrt(y² - c)` without cancellation.
#[inline]
pub(crate) fn kernel_gap(y: f64, c: f64) -> f64 {
    c / (y + (y * y - c).max(0.0).sqrt())
}

/// `∫_lo^hi (y - sqrt(y² - c)) dy` from the antiderivative
/// `½·y·(y - s) + (c/2)·ln(y + s)`, `s = sqrt(y² - c)`.
fn tail_antiderivative_diff(lo: f64, hi: f64, c: f64) -> f64 {
    let s_lo = (lo * lo - c).max(0.0).sqrt();
    let s_hi = (hi * hi - c).max(0.0).sqrt();
    let poly = 0.5 * (hi * kernel_gap(hi, c) - lo * kernel_gap(lo, c));
    let log = 0.5 * c * ((hi + s_hi) / (lo + s_lo)).ln();
    poly + log
}

/// Viscosity ratio and optional raw fluid/rock properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    pub kappa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_o: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_perm: Option<f64>,
}

impl FluidParams {
    pub fn new(kappa: f64) -> Result<Self> {
        validate_kappa(kappa)?;
        Ok(Self {
            kappa,
            mu_w: None,
            mu_o: None,
            k_perm: None,
        })
    }

    /// From water and oil viscosities; `κ = μ_w / μ_o`.
    pub fn from_viscosities(mu_w: f64, mu_o: f64) -> Result<Self> {
        if !(mu_w > 0.0 && mu_o > 0.0) {
            return Err(Error::invalid("viscosities must be positive"));
        }
        let mut p = Self::new(mu_w / mu_o)?;
        p.mu_w = Some(mu_w);
        p.mu_o = Some(mu_o);
        Ok(p)
    }

    pub fn with_permeability(mut self, k_perm: f64) -> Result<Self> {
        if !(k_perm > 0.0) {
            return Err(Error::invalid("permeability must be positive"));
        }
        self.k_perm = Some(k_perm);
        Ok(self)
    }

    /// Drive `c = k·Δp / μ_o` for a pressure difference, when both raw
    /// properties are known.
    pub fn drive(&self, delta_p: f64) -> Option<f64> {
        Some(self.k_perm? * delta_p / self.mu_o?)
    }

    pub fn validate(&self) -> Result<()> {
        validate_kappa(self.kappa)
    }
}

/// Sampling ranges for [`random_atoms`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomRanges {
    pub length: (f64, f64),
    pub area: (f64, f64),
}

impl Default for AtomRanges {
    fn default() -> Self {
        Self {
            length: (2.5, 10.0),
            area: (0.5, 2.0),
        }
    }
}

/// `n` atoms with lengths uniform on `[L_lo, L_hi)` and areas uniform on
/// `[S_lo, S_hi)`, reproducible from `seed`.
pub fn random_atoms(seed: u64, n: usize, ranges: AtomRanges) -> Result<Measure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_atoms_with(&mut rng, n, ranges)
}

pub(crate) fn random_atoms_with<R: Rng>(rng: &mut R, n: usize, ranges: AtomRanges) -> Result<Measure> {
    if n == 0 {
        return Err(Error::invalid("need at least one atom"));
    }
    let (l0, l1) = ranges.length;
    let (s0, s1) = ranges.area;
    if !(l0 > 0.0 && l0 < l1 && l1.is_finite()) {
        return Err(Error::invalid(format!("empty or invalid length range [{l0}, {l1})")));
    }
    if !(s0 > 0.0 && s0 < s1 && s1.is_finite()) {
        return Err(Error::invalid(format!("empty or invalid area range [{s0}, {s1})")));
    }
    let atoms = (0..n)
        .map(|_| Atom::new(rng.gen_range(l0..l1), rng.gen_range(s0..s1)))
        .collect();
    Measure::from_atoms(atoms)
}
