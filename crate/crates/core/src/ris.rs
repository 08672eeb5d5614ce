//! Reflection matrices for passive, active and hybrid RIS operation, plus the
//! energy harvesting, gain scaling, mode switching and consumption models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{wrap_phase, CMatrix, Real, C};

/// Phase-dependent amplitude model of a passive element.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct PassiveParams<T> {
    /// Minimum reflection amplitude, in `[0, 1]`.
    pub beta_min: T,
    /// Hardware shaping exponent.
    pub exponent: T,
    /// Phase offset in radians.
    pub offset_l: T,
}

impl<T: Real> PassiveParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_min >= T::zero() && self.beta_min <= T::one()) {
            return Err(Error::Config(format!("beta_min must lie in [0,1], got {}", self.beta_min)));
        }
        if !(self.exponent >= T::zero()) || !(self.offset_l >= T::zero()) {
            return Err(Error::Config("passive exponent and offset must be >= 0".into()));
        }
        Ok(())
    }
}

impl<T: Real> Default for PassiveParams<T> {
    fn default() -> Self {
        Self {
            beta_min: T::lit(0.6),
            exponent: T::lit(1.5),
            offset_l: T::zero(),
        }
    }
}

/// Energy-aware amplification limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct ActiveParams<T> {
    pub alpha_min: T,
    pub alpha_max: T,
    /// Per-element energy (J) that buys the full gain `alpha_max`.
    pub e_max: T,
    /// Amplifier thermal-noise variance σ_r² (W).
    pub amp_noise_var: T,
}

impl<T: Real> ActiveParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_min > T::one() && self.alpha_min <= self.alpha_max) {
            return Err(Error::Config(format!(
                "need 1 < alpha_min <= alpha_max, got {} and {}",
                self.alpha_min, self.alpha_max
            )));
        }
        if !(self.e_max > T::zero()) || !(self.amp_noise_var >= T::zero()) {
            return Err(Error::Config("e_max must be > 0 and amp_noise_var >= 0".into()));
        }
        Ok(())
    }
}

impl<T: Real> Default for ActiveParams<T> {
    /// `e_max` defaults to the per-element harvest under a unit-power beacon
    /// channel with the default [`HarvestParams`] (0.9 · 10 W · 1 s).
    fn default() -> Self {
        Self {
            alpha_min: T::lit(1.2),
            alpha_max: T::lit(2.0),
            e_max: T::lit(9.0),
            amp_noise_var: T::lit(0.01),
        }
    }
}

/// Power-beacon harvesting and the activation threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct HarvestParams<T> {
    /// Conversion efficiency η in `(0, 1]`.
    pub eta: T,
    /// Beacon transmit power (W).
    pub p_pb: T,
    /// Harvesting duration (s).
    pub duration: T,
    /// Energy threshold τ (J) for active operation.
    pub tau: T,
}

impl<T: Real> HarvestParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > T::zero() && self.eta <= T::one()) {
            return Err(Error::Config(format!("eta must lie in (0,1], got {}", self.eta)));
        }
        if !(self.p_pb >= T::zero()) || !(self.duration > T::zero()) || !(self.tau >= T::zero()) {
            return Err(Error::Config("need p_pb >= 0, duration > 0, tau >= 0".into()));
        }
        Ok(())
    }

    /// Per-element harvest when `|h|² = 1`; the natural default for `e_max`.
    pub fn unit_channel_energy(&self) -> T {
        self.eta * self.p_pb * self.duration
    }
}

impl<T: Real> Default for HarvestParams<T> {
    fn default() -> Self {
        Self {
            eta: T::lit(0.9),
            p_pb: T::lit(10.0),
            duration: T::one(),
            tau: T::lit(50.0),
        }
    }
}

/// Energy harvested in one slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger<T> {
    pub per_element: Vec<T>,
    pub total: T,
}

impl<T: Real> EnergyLedger<T> {
    pub fn from_elements(per_element: Vec<T>) -> Self {
        let total = per_element.iter().copied().sum();
        Self { per_element, total }
    }

    /// Ledger holding `total` spread evenly over `r` elements.
    pub fn uniform(total: T, r: usize) -> Self {
        let each = total / T::from_usize(r).unwrap();
        Self {
            per_element: vec![each; r],
            total,
        }
    }
}

/// Control and amplification power draw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct ConsumptionParams<T> {
    /// Per-element control power in passive mode (W).
    pub p_passive: T,
    /// Power per unit amplification (W).
    pub p_amp: T,
    /// Per-element control power in active mode (W).
    pub p_ctrl: T,
    /// Step duration used to turn power into energy (s).
    pub slot_seconds: T,
}

impl<T: Real> ConsumptionParams<T> {
    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        if !(self.p_passive >= z && self.p_amp >= z && self.p_ctrl >= z && self.slot_seconds > z) {
            return Err(Error::Config("consumption powers must be >= 0 and slot_seconds > 0".into()));
        }
        Ok(())
    }
}

impl<T: Real> Default for ConsumptionParams<T> {
    fn default() -> Self {
        Self {
            p_passive: T::lit(1e-4),
            p_amp: T::lit(0.05),
            p_ctrl: T::lit(0.01),
            slot_seconds: T::one(),
        }
    }
}

/// Operating policy of the surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RisMode<T> {
    Passive,
    Active,
    /// Switches per slot on harvested energy against τ.
    DynamicHybrid,
    /// The first `⌊active_fraction·R⌋` elements always amplify with
    /// `fixed_gain`; the rest stay passive.
    FixedHybrid {
        active_fraction: T,
        fixed_gain: T,
    },
}

impl<T: Real> RisMode<T> {
    pub fn validate(&self) -> Result<()> {
        if let RisMode::FixedHybrid {
            active_fraction,
            fixed_gain,
        } = *self
        {
            if !(active_fraction >= T::zero() && active_fraction <= T::one()) || !(fixed_gain > T::one()) {
                return Err(Error::Config("fixed hybrid needs fraction in [0,1] and gain > 1".into()));
            }
        }
        Ok(())
    }
}

/// Mode actually used in a slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolvedMode {
    Passive,
    Active,
}

/// Per-step snapshot of the surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RisState<T> {
    pub phases: Vec<T>,
    pub resolved: ResolvedMode,
    pub reflection: CMatrix<T>,
    /// Elements that inject amplifier noise.
    pub amplified: Vec<bool>,
    /// Uniform active gain; 1 when passive.
    pub alpha: T,
    pub ledger: EnergyLedger<T>,
}

impl<T: Real> RisState<T> {
    /// Resolves the mode, scales the gain and builds the reflection for one slot.
    pub fn configure(
        phases: &[T],
        mode: &RisMode<T>,
        ledger: EnergyLedger<T>,
        pp: &PassiveParams<T>,
        ap: &ActiveParams<T>,
        hp: &HarvestParams<T>,
    ) -> Self {
        let r = phases.len();
        let resolved = resolve_mode(mode, &ledger, hp);
        let alpha = match (mode, resolved) {
            (RisMode::FixedHybrid { fixed_gain, .. }, _) => *fixed_gain,
            (_, ResolvedMode::Active) => energy_gain(&ledger, r, ap),
            (_, ResolvedMode::Passive) => T::one(),
        };
        let reflection = build_reflection(phases, resolved, pp, alpha, mode);
        let amplified = amplified_elements(resolved, mode, r);
        Self {
            phases: phases.iter().map(|&p| wrap_phase(p)).collect(),
            resolved,
            reflection,
            amplified,
            alpha,
            ledger,
        }
    }
}

/// Reflection amplitude `β(ε) = (1−β_m)((sin(ε−l)+1)/2)^exponent + β_m`.
pub fn passive_amplitude<T: Real>(eps: T, p: &PassiveParams<T>) -> T {
    let half = T::lit(0.5);
    let base = ((eps - p.offset_l).sin() + T::one()) * half;
    // sin can overshoot 1 by an ulp; keep the power base inside [0, 1].
    let base = base.max(T::zero()).min(T::one());
    (T::one() - p.beta_min) * base.powf(p.exponent) + p.beta_min
}

/// Per-element harvested energy `η·|h_r|²·P_PB·T`.
pub fn harvest<T: Real>(h_pb: &CMatrix<T>, hp: &HarvestParams<T>) -> EnergyLedger<T> {
    let k = hp.eta * hp.p_pb * hp.duration;
    EnergyLedger::from_elements(h_pb.as_slice().iter().map(|z| k * z.norm_sqr()).collect())
}

/// Energy-aware gain: linear in the per-element energy ratio, clamped at
/// `alpha_max` after interpolation.
pub fn energy_gain<T: Real>(ledger: &EnergyLedger<T>, r: usize, ap: &ActiveParams<T>) -> T {
    let ratio = (ledger.total / T::from_usize(r.max(1)).unwrap()) / ap.e_max;
    let alpha = ap.alpha_min + (ap.alpha_max - ap.alpha_min) * ratio;
    alpha.min(ap.alpha_max)
}

pub fn resolve_mode<T: Real>(mode: &RisMode<T>, ledger: &EnergyLedger<T>, hp: &HarvestParams<T>) -> ResolvedMode {
    match mode {
        RisMode::Passive => ResolvedMode::Passive,
        RisMode::Active | RisMode::FixedHybrid { .. } => ResolvedMode::Active,
        RisMode::DynamicHybrid => {
            if ledger.total >= hp.tau {
                ResolvedMode::Active
            } else {
                ResolvedMode::Passive
            }
        }
    }
}

/// Count of always-active elements in a fixed-hybrid surface.
pub fn fixed_active_count<T: Real>(active_fraction: T, r: usize) -> usize {
    let n = (active_fraction * T::from_usize(r).unwrap()).floor().to_usize().unwrap_or(0);
    n.min(r)
}

/// Diagonal reflection matrix for the slot. Phases are wrapped into `[0, 2π)`.
pub fn build_reflection<T: Real>(phases: &[T], resolved: ResolvedMode, pp: &PassiveParams<T>, alpha: T, mode: &RisMode<T>) -> CMatrix<T> {
    let r = phases.len();
    let n_fixed = match mode {
        RisMode::FixedHybrid { active_fraction, .. } => Some(fixed_active_count(*active_fraction, r)),
        _ => None,
    };
    let entries: Vec<C<T>> = phases
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let eps = wrap_phase(p);
            let amplitude = match (n_fixed, resolved) {
                (Some(n), _) if i < n => alpha,
                (Some(_), _) => passive_amplitude(eps, pp),
                (None, ResolvedMode::Active) => alpha,
                (None, ResolvedMode::Passive) => passive_amplitude(eps, pp),
            };
            C::from_polar(amplitude, eps)
        })
        .collect();
    CMatrix::diag(&entries)
}

/// Which elements amplify (and so inject thermal noise).
pub fn amplified_elements<T: Real>(resolved: ResolvedMode, mode: &RisMode<T>, r: usize) -> Vec<bool> {
    match mode {
        RisMode::FixedHybrid { active_fraction, .. } => {
            let n = fixed_active_count(*active_fraction, r);
            (0..r).map(|i| i < n).collect()
        }
        _ => vec![resolved == ResolvedMode::Active; r],
    }
}

/// Energy drawn by the surface in one slot.
pub fn energy_consumed<T: Real>(resolved: ResolvedMode, alpha: T, r: usize, cp: &ConsumptionParams<T>) -> T {
    let rf = T::from_usize(r).unwrap();
    match resolved {
        ResolvedMode::Passive => rf * cp.p_passive * cp.slot_seconds,
        ResolvedMode::Active => rf * (alpha * cp.p_amp + cp.p_ctrl) * cp.slot_seconds,
    }
}

/// Slot energy for any mode; fixed-hybrid surfaces pay active cost only on
/// their amplifying elements.
pub fn slot_energy<T: Real>(state: &RisState<T>, mode: &RisMode<T>, cp: &ConsumptionParams<T>) -> T {
    match mode {
        RisMode::FixedHybrid { .. } => {
            let n_active = state.amplified.iter().filter(|&&a| a).count();
            let n_passive = state.amplified.len() - n_active;
            energy_consumed(ResolvedMode::Active, state.alpha, n_active, cp)
                + energy_consumed(ResolvedMode::Passive, state.alpha, n_passive, cp)
        }
        _ => energy_consumed(state.resolved, state.alpha, state.phases.len(), cp),
    }
}
