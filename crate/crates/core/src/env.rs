//! The non-episodic control problem: flat observation/action encodings, the
//! per-slot dynamics and the energy-penalized reward.
//!
//! Observation layout (all complex matrices row-major, each entry as a
//! `(re, im)` pair):
//!
//! | block          | length | content                               |
//! |----------------|--------|---------------------------------------|
//! | `p_t`, `i_thr` | 2      | configured linear power limits        |
//! | `h_s`          | 2RA    | SU transmitter → RIS                  |
//! | `h_b`          | 2RB    | RIS → receiver b, for b = 0..B        |
//! | `h_p`          | 2AW    | SU transmitter → PUs                  |
//! | previous `G`   | 2AB    | beamformer applied in the last slot   |
//! | previous ε     | R      | wrapped phases of the last slot       |
//! | previous α     | 1      | gain of the last slot (1 if passive)  |
//! | previous mode  | 1      | 1 if the last slot was active, else 0 |
//!
//! Channels in an observation are those of the slot the next action is
//! applied to. Actions are `2AB` beamformer reals (row-major `(re, im)`)
//! followed by `R` phase reals, nominally in `[-1, 1]`.

use serde::{Deserialize, Serialize};

use crate::channel::{sample_channel_set, CascadeSpec, ChannelSet, FadingMode, Topology};
use crate::error::{Error, Result};
use crate::numerics::{wrap_phase, CMatrix, Real, Rng, C};
use crate::phy::{power_cap, project_beamformer, rate_report, sinr_general, NoiseParams, PowerConstraint, RateReport};
use crate::ris::{harvest, slot_energy, ActiveParams, ConsumptionParams, HarvestParams, PassiveParams, ResolvedMode, RisMode, RisState};

/// RNG stream reserved for channel draws.
const CHANNEL_STREAM: u64 = 0x43_48_41_4e;

/// How the beamformer block of an action becomes a transmit matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamformerMapping {
    /// Entries are used as-is, then projected onto the power cap.
    Raw,
    /// Entries are multiplied by `sqrt(cap / (A·B))` before projection, so a
    /// matrix of unit-modulus entries exactly meets the slot's cap.
    #[default]
    CapScaled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct EnvConfig<T> {
    pub topology: Topology,
    pub cascade: CascadeSpec,
    pub passive: PassiveParams<T>,
    pub active: ActiveParams<T>,
    pub harvest: HarvestParams<T>,
    pub consumption: ConsumptionParams<T>,
    pub noise: NoiseParams<T>,
    pub power: PowerConstraint<T>,
    pub mode: RisMode<T>,
    /// Penalty weight on the energy shortfall in active slots.
    pub penalty_weight: T,
    pub fading: FadingMode,
    pub beamformer_mapping: BeamformerMapping,
    pub seed: u64,
}

impl<T: Real> Default for EnvConfig<T> {
    fn default() -> Self {
        Self {
            topology: Topology::default(),
            cascade: CascadeSpec::default(),
            passive: PassiveParams::default(),
            active: ActiveParams::default(),
            harvest: HarvestParams::default(),
            consumption: ConsumptionParams::default(),
            noise: NoiseParams::default(),
            power: PowerConstraint::default(),
            mode: RisMode::DynamicHybrid,
            penalty_weight: T::lit(0.1),
            fading: FadingMode::default(),
            beamformer_mapping: BeamformerMapping::default(),
            seed: 0,
        }
    }
}

impl<T: Real> EnvConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.cascade.validate()?;
        self.passive.validate()?;
        self.active.validate()?;
        self.harvest.validate()?;
        self.consumption.validate()?;
        self.noise.validate()?;
        self.power.validate()?;
        self.mode.validate()?;
        if !(self.penalty_weight >= T::zero()) {
            return Err(Error::Config("penalty_weight must be >= 0".into()));
        }
        if self.fading.block_length == 0 {
            return Err(Error::Config("fading.block_length must be >= 1".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> ObsLayout {
        ObsLayout::new(&self.topology)
    }

    pub fn action_dim(&self) -> usize {
        let t = &self.topology;
        2 * t.tx_antennas * t.su_receivers + t.ris_elements
    }
}

/// Offsets of each block in the observation vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObsLayout {
    pub h_s: usize,
    pub h_b: usize,
    pub h_p: usize,
    pub prev_g: usize,
    pub prev_phases: usize,
    pub prev_alpha: usize,
    pub prev_mode: usize,
    pub len: usize,
}

impl ObsLayout {
    pub fn new(t: &Topology) -> Self {
        let (a, b, r, w) = (t.tx_antennas, t.su_receivers, t.ris_elements, t.pu_receivers);
        let h_s = 2;
        let h_b = h_s + 2 * r * a;
        let h_p = h_b + 2 * r * b;
        let prev_g = h_p + 2 * a * w;
        let prev_phases = prev_g + 2 * a * b;
        let prev_alpha = prev_phases + r;
        let prev_mode = prev_alpha + 1;
        Self {
            h_s,
            h_b,
            h_p,
            prev_g,
            prev_phases,
            prev_alpha,
            prev_mode,
            len: prev_mode + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvObservation<T>(pub Vec<T>);

impl<T> EnvObservation<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvAction<T>(pub Vec<T>);

impl<T> EnvAction<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

/// Diagnostics of one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo<T> {
    pub t: u64,
    pub sum_rate: T,
    pub resolved_mode: ResolvedMode,
    pub e_total: T,
    pub alpha: T,
    pub energy_consumed: T,
    pub cap: T,
    pub penalty: T,
    /// `tr(GGᴴ)` of the applied beamformer.
    pub tx_power: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome<T> {
    pub observation: EnvObservation<T>,
    pub reward: T,
    pub info: StepInfo<T>,
}

/// One line of the JSON-lines step log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub reward: f64,
    pub sum_rate: f64,
    pub mode: ResolvedMode,
    #[serde(rename = "E_total")]
    pub e_total: f64,
    pub alpha: f64,
    #[serde(rename = "energy_J")]
    pub energy_j: f64,
    pub cap: f64,
}

impl<T: Real> From<&StepOutcome<T>> for StepRecord {
    fn from(o: &StepOutcome<T>) -> Self {
        let i = &o.info;
        Self {
            t: i.t,
            reward: o.reward.as_f64(),
            sum_rate: i.sum_rate.as_f64(),
            mode: i.resolved_mode,
            e_total: i.e_total.as_f64(),
            alpha: i.alpha.as_f64(),
            energy_j: i.energy_consumed.as_f64(),
            cap: i.cap.as_f64(),
        }
    }
}

/// Splits an action into a projected beamformer and wrapped phases.
///
/// Phase entries map linearly from `[-1, 1]` to `[0, 2π)` via `(x+1)π`.
pub fn decode_action<T: Real>(action: &EnvAction<T>, cap: T, topo: &Topology, mapping: BeamformerMapping) -> Result<(CMatrix<T>, Vec<T>)> {
    let (a, b, r) = (topo.tx_antennas, topo.su_receivers, topo.ris_elements);
    let n_g = 2 * a * b;
    let v = action.as_slice();
    if v.len() != n_g + r {
        return Err(Error::shape(
            "decode_action",
            format!("expected {} entries, got {}", n_g + r, v.len()),
        ));
    }
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("non-finite action entry {bad}")));
    }
    let raw = CMatrix::new(a, b, (0..a * b).map(|k| C::new(v[2 * k], v[2 * k + 1])).collect())?;
    let scaled = match mapping {
        BeamformerMapping::Raw => raw,
        BeamformerMapping::CapScaled => raw.scale((cap / T::from_usize(a * b).unwrap()).sqrt()),
    };
    let g = project_beamformer(&scaled, cap);
    let phases = v[n_g..].iter().map(|&x| wrap_phase((x + T::one()) * T::PI())).collect();
    Ok((g, phases))
}

/// Simulated network for one run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Env<T> {
    cfg: EnvConfig<T>,
    rng: Rng,
    channels: ChannelSet<T>,
    t: u64,
    prev_g: CMatrix<T>,
    prev_phases: Vec<T>,
    prev_alpha: T,
    prev_active: bool,
}

impl<T: Real> Env<T> {
    /// Builds and resets with `cfg.seed`.
    pub fn new(cfg: EnvConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.seed;
        let mut rng = Rng::with_stream(seed, CHANNEL_STREAM);
        let channels = sample_channel_set(&mut rng, &cfg.topology, &cfg.cascade)?;
        let t = &cfg.topology;
        Ok(Self {
            prev_g: CMatrix::zeros(t.tx_antennas, t.su_receivers),
            prev_phases: vec![T::zero(); t.ris_elements],
            prev_alpha: T::one(),
            prev_active: false,
            t: 0,
            rng,
            channels,
            cfg,
        })
    }

    /// Fresh channels and zeroed history under `seed`.
    pub fn reset(&mut self, seed: u64) -> Result<EnvObservation<T>> {
        let mut cfg = self.cfg.clone();
        cfg.seed = seed;
        *self = Self::new(cfg)?;
        Ok(self.observation())
    }

    /// Replaces the current channels, e.g. to pin a frozen realization.
    pub fn set_channels(&mut self, channels: ChannelSet<T>) -> Result<()> {
        if channels.topology() != self.cfg.topology {
            return Err(Error::shape("set_channels", "channel set does not match the topology"));
        }
        self.channels = channels;
        Ok(())
    }

    pub fn config(&self) -> &EnvConfig<T> {
        &self.cfg
    }

    pub fn channels(&self) -> &ChannelSet<T> {
        &self.channels
    }

    pub fn step_index(&self) -> u64 {
        self.t
    }

    pub fn obs_dim(&self) -> usize {
        self.cfg.layout().len
    }

    pub fn action_dim(&self) -> usize {
        self.cfg.action_dim()
    }

    /// Power cap of the current slot.
    pub fn cap(&self) -> T {
        power_cap(&self.cfg.power, &self.channels.g_sp)
    }

    pub fn observation(&self) -> EnvObservation<T> {
        let layout = self.cfg.layout();
        let mut v = Vec::with_capacity(layout.len);
        v.push(self.cfg.power.p_t);
        v.push(self.cfg.power.i_thr);
        let mut push = |m: &CMatrix<T>| {
            for z in m.as_slice() {
                v.push(z.re);
                v.push(z.im);
            }
        };
        push(&self.channels.h_s);
        for h in &self.channels.h_b {
            push(h);
        }
        push(&self.channels.h_p);
        push(&self.prev_g);
        v.extend_from_slice(&self.prev_phases);
        v.push(self.prev_alpha);
        v.push(if self.prev_active { T::one() } else { T::zero() });
        debug_assert_eq!(v.len(), layout.len);
        EnvObservation(v)
    }

    /// Observation rescaled for network input: power limits divided by their
    /// configured values, channel entries compressed by `sign(x)·ln(1+|x|)`
    /// (cascaded gains are heavy-tailed), previous beamformer by `sqrt(P_t)`,
    /// phases by 2π.
    pub fn normalize(&self, obs: &EnvObservation<T>) -> Vec<T> {
        let l = self.cfg.layout();
        let mut v = obs.0.clone();
        v[0] /= self.cfg.power.p_t;
        v[1] /= self.cfg.power.i_thr;
        for x in &mut v[l.h_s..l.prev_g] {
            *x = x.signum() * x.abs().ln_1p();
        }
        let g_scale = self.cfg.power.p_t.sqrt();
        for x in &mut v[l.prev_g..l.prev_phases] {
            *x /= g_scale;
        }
        for x in &mut v[l.prev_phases..l.prev_alpha] {
            *x /= T::TAU();
        }
        v
    }

    /// Rates and RIS state that `(g, phases)` would produce on the current
    /// slot, without advancing time.
    pub fn evaluate(&self, g: &CMatrix<T>, phases: &[T]) -> Result<(RateReport<T>, RisState<T>)> {
        let cfg = &self.cfg;
        let ledger = harvest(&self.channels.h_pb, &cfg.harvest);
        let state = RisState::configure(phases, &cfg.mode, ledger, &cfg.passive, &cfg.active, &cfg.harvest);
        let (noise, amp_var, amplified): (T, T, &[bool]) = match state.resolved {
            ResolvedMode::Passive => (cfg.noise.sigma_b_sq, T::zero(), &[]),
            ResolvedMode::Active => (cfg.noise.sigma_a_sq, cfg.active.amp_noise_var, &state.amplified),
        };
        let sinrs = (0..cfg.topology.su_receivers)
            .map(|b| sinr_general(&self.channels, &state.reflection, amplified, g, noise, amp_var, b))
            .collect::<Result<Vec<_>>>()?;
        Ok((rate_report(&sinrs)?, state))
    }

    /// Energy-shortfall penalty for a resolved slot.
    pub fn penalty(&self, resolved: ResolvedMode, e_total: T) -> T {
        match resolved {
            ResolvedMode::Passive => T::zero(),
            ResolvedMode::Active => self.cfg.penalty_weight * (self.cfg.harvest.tau - e_total).max(T::zero()),
        }
    }

    pub fn step(&mut self, action: &EnvAction<T>) -> Result<StepOutcome<T>> {
        let cap = self.cap();
        let (g, phases) = decode_action(action, cap, &self.cfg.topology, self.cfg.beamformer_mapping)?;
        let (report, state) = self.evaluate(&g, &phases)?;
        let penalty = self.penalty(state.resolved, state.ledger.total);
        let reward = report.sum_rate - penalty;
        let energy = slot_energy(&state, &self.cfg.mode, &self.cfg.consumption);
        let info = StepInfo {
            t: self.t,
            sum_rate: report.sum_rate,
            resolved_mode: state.resolved,
            e_total: state.ledger.total,
            alpha: state.alpha,
            energy_consumed: energy,
            cap,
            penalty,
            tx_power: g.frobenius_sq(),
        };

        self.prev_g = g;
        self.prev_phases = state.phases;
        self.prev_alpha = state.alpha;
        self.prev_active = state.resolved == ResolvedMode::Active;
        self.t += 1;
        if self.cfg.fading.redraw_at(self.t) {
            self.channels = sample_channel_set(&mut self.rng, &self.cfg.topology, &self.cfg.cascade)?;
        }
        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            info,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn env_with(mode: RisMode<f64>) -> Env<f64> {
        Env::new(EnvConfig {
            mode,
            ..EnvConfig::default()
        })
        .unwrap()
    }

    fn random_action(rng: &mut Rng, dim: usize) -> EnvAction<f64> {
        EnvAction((0..dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
    }

    #[test]
    fn zero_action_decodes_to_silence_and_pi() {
        let topo = Topology::default();
        let (g, phases) = decode_action(&EnvAction(vec![0.0; 12]), 5.0, &topo, BeamformerMapping::CapScaled).unwrap();
        assert_eq!(g.frobenius_sq(), 0.0);
        assert!(phases.iter().all(|&p| (p - PI).abs() < 1e-12));
    }

    #[test]
    fn oversized_beamformer_is_projected() {
        let topo = Topology::default();
        let mut v = vec![0.0; 12];
        // Raw block with tr(GGᴴ) = 20.
        v[0] = 20f64.sqrt();
        for mapping in [BeamformerMapping::Raw, BeamformerMapping::CapScaled] {
            let (g, _) = decode_action(&EnvAction(v.clone()), 5.0, &topo, mapping).unwrap();
            assert_relative_eq!(g.frobenius_sq(), 5.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn phase_plus_one_wraps_to_zero() {
        let topo = Topology::default();
        let mut v = vec![0.0; 12];
        v[8] = 1.0;
        let (_, phases) = decode_action(&EnvAction(v), 5.0, &topo, BeamformerMapping::Raw).unwrap();
        assert_eq!(phases[0], 0.0);
    }

    #[test]
    fn decode_rejects_wrong_length() {
        let topo = Topology::default();
        let err = decode_action(&EnvAction(vec![0.0; 11]), 5.0, &topo, BeamformerMapping::Raw);
        assert!(matches!(err, Err(Error::Shape { .. })));
    }

    #[test]
    fn unit_modulus_entries_meet_the_cap() {
        let topo = Topology::default();
        let mut v = vec![0.0; 12];
        for k in 0..4 {
            v[2 * k] = 1.0;
        }
        let (g, _) = decode_action(&EnvAction(v), 3.7, &topo, BeamformerMapping::CapScaled).unwrap();
        assert_relative_eq!(g.frobenius_sq(), 3.7, epsilon = 1e-12);
    }

    #[test]
    fn observation_layout_and_reset() {
        let mut env = env_with(RisMode::DynamicHybrid);
        let o1 = env.reset(5).unwrap();
        let o2 = env.reset(5).unwrap();
        assert_eq!(o1, o2);
        assert_eq!(o1.len(), 56);
        assert_eq!(env.obs_dim(), 56);
        assert_eq!(env.action_dim(), 12);
        assert_eq!(o1.as_slice()[0], 10.0);
        assert_eq!(o1.as_slice()[1], 10.0);
        let l = env.config().layout();
        assert!(o1.as_slice()[l.prev_g..l.prev_phases].iter().all(|&x| x == 0.0));
        let n = env.normalize(&o1);
        assert_eq!((n[0], n[1]), (1.0, 1.0));
        let (x, y) = (o1.as_slice()[l.h_s], n[l.h_s]);
        assert_relative_eq!(y, x.signum() * (1.0 + x.abs()).ln(), epsilon = 1e-15);
    }

    #[test]
    fn forced_passive_reward_is_sum_rate() {
        let mut env = env_with(RisMode::Passive);
        let mut rng = Rng::new(1);
        for _ in 0..50 {
            let out = env.step(&random_action(&mut rng, 12)).unwrap();
            assert_eq!(out.info.penalty, 0.0);
            assert_eq!(out.reward, out.info.sum_rate);
            assert_eq!(out.info.resolved_mode, ResolvedMode::Passive);
        }
    }

    #[test]
    fn penalty_examples() {
        let env = env_with(RisMode::Active);
        assert_relative_eq!(env.penalty(ResolvedMode::Active, 30.0), 2.0, epsilon = 1e-12);
        assert_eq!(env.penalty(ResolvedMode::Active, 60.0), 0.0);
        assert_eq!(env.penalty(ResolvedMode::Passive, 30.0), 0.0);
    }

    #[test]
    fn dynamic_hybrid_is_penalty_free_and_forced_active_is_not() {
        let mut dynamic = env_with(RisMode::DynamicHybrid);
        let mut forced = env_with(RisMode::Active);
        let mut rng = Rng::new(2);
        let mut saw_shortfall = false;
        for _ in 0..300 {
            let a = random_action(&mut rng, 12);
            let d = dynamic.step(&a).unwrap();
            assert_eq!(d.info.penalty, 0.0);
            if d.info.resolved_mode == ResolvedMode::Active {
                assert!(d.info.e_total >= 50.0);
            }
            let f = forced.step(&a).unwrap();
            if f.info.e_total < 50.0 {
                saw_shortfall = true;
                assert!(f.reward < f.info.sum_rate);
            }
        }
        assert!(saw_shortfall);
    }

    #[test]
    fn action_replay_is_bit_identical() {
        let mut rng = Rng::new(3);
        let actions: Vec<_> = (0..100).map(|_| random_action(&mut rng, 12)).collect();
        let run = || {
            let mut env = env_with(RisMode::DynamicHybrid);
            actions.iter().map(|a| env.step(a).unwrap().reward.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn ideal_passive_reflection_has_unit_magnitude() {
        let mut cfg = EnvConfig::<f64> {
            mode: RisMode::Passive,
            ..EnvConfig::default()
        };
        cfg.passive.beta_min = 1.0;
        cfg.passive.exponent = 3.7;
        let env = Env::new(cfg).unwrap();
        let g = CMatrix::zeros(2, 2);
        let (_, state) = env.evaluate(&g, &[0.1, 1.0, 2.0, 5.0]).unwrap();
        for z in state.reflection.diagonal() {
            assert_relative_eq!(z.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn frozen_fading_keeps_channels() {
        let mut env = Env::new(EnvConfig::<f64> {
            fading: FadingMode::frozen(),
            ..EnvConfig::default()
        })
        .unwrap();
        let before = env.channels().clone();
        let mut rng = Rng::new(4);
        for _ in 0..10 {
            env.step(&random_action(&mut rng, 12)).unwrap();
        }
        assert_eq!(env.channels(), &before);
        let mut moving = env_with(RisMode::DynamicHybrid);
        let first = moving.channels().clone();
        moving.step(&random_action(&mut rng, 12)).unwrap();
        assert_ne!(moving.channels(), &first);
    }

    #[test]
    fn previous_action_is_reported() {
        let mut env = env_with(RisMode::Passive);
        let mut v = vec![0.0; 12];
        v[0] = 0.5;
        let out = env.step(&EnvAction(v)).unwrap();
        let l = env.config().layout();
        let obs = out.observation.as_slice();
        assert!(obs[l.prev_g] > 0.0);
        assert!(obs[l.prev_phases..l.prev_alpha].iter().all(|&p| (p - PI).abs() < 1e-12));
        assert_eq!(obs[l.prev_alpha], 1.0);
        assert_eq!(obs[l.prev_mode], 0.0);
    }

    #[test]
    fn step_record_schema() {
        let mut env = env_with(RisMode::DynamicHybrid);
        let out = env.step(&EnvAction(vec![0.1; 12])).unwrap();
        let rec = StepRecord::from(&out);
        let json = serde_json::to_value(&rec).unwrap();
        let mut keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["E_total", "alpha", "cap", "energy_J", "mode", "reward", "sum_rate", "t"]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn power_constraint_holds_every_step(seed in any::<u64>(), scale in 0.0f64..50.0) {
            let mut env = Env::new(EnvConfig::<f64> { seed, ..EnvConfig::default() }).unwrap();
            let mut rng = Rng::new(seed ^ 1);
            for _ in 0..50 {
                let a = EnvAction((0..12).map(|_| rng.uniform_in(-scale, scale)).collect());
                let out = env.step(&a).unwrap();
                prop_assert!(out.info.tx_power <= out.info.cap + 1e-9);
                prop_assert!(out.observation.as_slice().iter().all(|x| x.is_finite()));
            }
        }
    }
}
