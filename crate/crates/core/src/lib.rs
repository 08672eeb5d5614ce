//! Simulator for an underlay cognitive-radio downlink assisted by a
//! dynamic hybrid RIS that switches between passive reflection and active
//! amplification depending on wirelessly harvested energy, together with
//! SAC/TD3/DDPG agents and reward-poisoning attacks and defenses.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`, which is what the
//! experiment harness uses.

// Validation negates comparisons on purpose so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod channel;
pub mod env;
pub mod error;
pub mod numerics;
pub mod phy;
pub mod ris;
pub mod security;

pub use agents::{Agent, AgentConfig, AgentKind, DdpgConfig, SacConfig, Td3Config, Transition};
pub use channel::{CascadeSpec, ChannelSet, FadingMode, Topology};
pub use env::{BeamformerMapping, Env, EnvAction, EnvConfig, EnvObservation, StepInfo, StepOutcome, StepRecord};
pub use error::{Error, Result};
pub use numerics::{CMatrix, Real, Rng, C};
pub use phy::{NoiseParams, PowerConstraint, RateReport};
pub use ris::{ActiveParams, ConsumptionParams, EnergyLedger, HarvestParams, PassiveParams, ResolvedMode, RisMode, RisState};
pub use security::{AttackConfig, AttackKind, Decision, DefenseConfig, RewardPipeline, RewardPipelineRecord};

pub type CMatrix64 = CMatrix<f64>;
pub type CMatrix32 = CMatrix<f32>;
pub type ChannelSet64 = ChannelSet<f64>;
pub type EnvConfig64 = EnvConfig<f64>;
pub type Env64 = Env<f64>;
pub type Env32 = Env<f32>;
pub type Agent64 = Agent<f64>;
pub type AgentConfig64 = AgentConfig<f64>;
pub type RewardPipeline64 = RewardPipeline<f64>;
