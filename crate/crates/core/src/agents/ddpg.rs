//! Deep deterministic policy gradient with a single critic.

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::buffer::{Batch, ReplayBuffer, Transition};
use super::net::{Activation, Adam, AdamParams, DenseNet};
use super::{concat_columns, deterministic_policy_gradients, layer_sizes, mse_gradients, UpdateStats};
use crate::error::{Error, Result};
use crate::numerics::{Real, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct DdpgConfig<T> {
    pub gamma: T,
    pub lr: T,
    pub batch: usize,
    pub tau_soft: T,
    pub buffer_capacity: usize,
    pub warmup_steps: u64,
    pub hidden: Vec<usize>,
    /// Std of the Gaussian exploration noise added to actions.
    pub explore_noise: T,
}

impl<T: Real> Default for DdpgConfig<T> {
    fn default() -> Self {
        Self {
            gamma: T::lit(0.99),
            lr: T::lit(1e-3),
            batch: 16,
            tau_soft: T::lit(0.005),
            buffer_capacity: 100_000,
            warmup_steps: 1000,
            hidden: vec![256, 256],
            explore_noise: T::lit(0.1),
        }
    }
}

impl<T: Real> DdpgConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.gamma >= T::zero() && self.gamma <= T::one()) {
            bad.push("gamma in [0, 1]");
        }
        if !(self.lr > T::zero()) {
            bad.push("lr > 0");
        }
        if self.batch == 0 {
            bad.push("batch >= 1");
        }
        if !(self.tau_soft >= T::zero() && self.tau_soft <= T::one()) {
            bad.push("tau_soft in [0, 1]");
        }
        if self.buffer_capacity < self.batch {
            bad.push("buffer_capacity >= batch");
        }
        if self.hidden.contains(&0) {
            bad.push("hidden sizes >= 1");
        }
        if !(self.explore_noise >= T::zero()) {
            bad.push("explore_noise >= 0");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("ddpg config violates: {}", bad.join(", "))))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Ddpg<T> {
    cfg: DdpgConfig<T>,
    actor: DenseNet<T>,
    actor_target: DenseNet<T>,
    actor_opt: Adam<T>,
    critic: DenseNet<T>,
    critic_target: DenseNet<T>,
    critic_opt: Adam<T>,
    buffer: ReplayBuffer<T>,
    rng: Rng,
    updates: u64,
}

impl<T: Real> Ddpg<T> {
    pub fn new(obs_dim: usize, act_dim: usize, cfg: DdpgConfig<T>, rng: Rng) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng;
        let actor = DenseNet::new(
            &layer_sizes(obs_dim, &cfg.hidden, act_dim),
            Activation::Tanh,
            Activation::Tanh,
            &mut rng,
        )?;
        let critic = DenseNet::new(
            &layer_sizes(obs_dim + act_dim, &cfg.hidden, 1),
            Activation::Tanh,
            Activation::Identity,
            &mut rng,
        )?;
        let adam = AdamParams::with_lr(cfg.lr);
        Ok(Self {
            actor_target: actor.clone(),
            actor_opt: Adam::new(&actor, adam),
            critic_target: critic.clone(),
            critic_opt: Adam::new(&critic, adam),
            buffer: ReplayBuffer::new(cfg.buffer_capacity)?,
            updates: 0,
            actor,
            critic,
            rng,
            cfg,
        })
    }

    pub fn config(&self) -> &DdpgConfig<T> {
        &self.cfg
    }

    pub fn buffer(&self) -> &ReplayBuffer<T> {
        &self.buffer
    }

    pub fn actor(&self) -> &DenseNet<T> {
        &self.actor
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn rng_mut(&mut self) -> &mut Rng {
        &mut self.rng
    }

    pub fn remember(&mut self, t: Transition<T>) {
        self.buffer.push(t);
    }

    pub fn select_action(&mut self, obs: &[T], explore: bool) -> Result<Vec<T>> {
        let x = ArrayView2::from_shape((1, obs.len()), obs).map_err(|e| Error::shape("select_action", e.to_string()))?;
        let a = self.actor.forward(x)?;
        let sigma = self.cfg.explore_noise.as_f64();
        Ok(a.row(0)
            .iter()
            .map(|&v| {
                if explore && sigma > 0.0 {
                    (v + T::lit(sigma * self.rng.standard_normal())).max(-T::one()).min(T::one())
                } else {
                    v
                }
            })
            .collect())
    }

    /// `r + γ·Q′(s′, μ′(s′))`.
    pub fn critic_targets(&self, batch: &Batch<T>) -> Result<Array1<T>> {
        let a2 = self.actor_target.forward(batch.next_obs.view())?;
        let q = self
            .critic_target
            .forward(concat_columns(batch.next_obs.view(), a2.view()).view())?;
        Ok(Array1::from_shape_fn(batch.len(), |i| batch.reward[i] + self.cfg.gamma * q[[i, 0]]))
    }

    pub fn update(&mut self) -> Result<Option<UpdateStats<T>>> {
        let Some(batch) = self.buffer.sample(self.cfg.batch, &mut self.rng) else {
            log::warn!("ddpg update skipped: {} transitions < batch {}", self.buffer.len(), self.cfg.batch);
            return Ok(None);
        };
        self.update_on(&batch).map(Some)
    }

    pub fn update_on(&mut self, batch: &Batch<T>) -> Result<UpdateStats<T>> {
        let targets = self.critic_targets(batch)?;
        let x = concat_columns(batch.obs.view(), batch.action.view());
        let (critic_loss, g) = mse_gradients(&self.critic, x.view(), &targets)?;
        self.critic_opt.step(&mut self.critic, &g);
        let (actor_loss, ga) = deterministic_policy_gradients(&self.actor, &self.critic, batch.obs.view())?;
        self.actor_opt.step(&mut self.actor, &ga);
        let tau = self.cfg.tau_soft;
        self.actor_target.soft_update_from(&self.actor, tau);
        self.critic_target.soft_update_from(&self.critic, tau);
        self.updates += 1;
        Ok(UpdateStats {
            critic_loss,
            actor_loss: Some(actor_loss),
            alpha: None,
        })
    }
}
