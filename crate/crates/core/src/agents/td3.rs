//! Twin delayed deterministic policy gradient.

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::buffer::{Batch, ReplayBuffer, Transition};
use super::net::{Activation, Adam, AdamParams, DenseNet};
use super::{concat_columns, deterministic_policy_gradients, layer_sizes, mse_gradients, UpdateStats};
use crate::error::{Error, Result};
use crate::numerics::{Real, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct Td3Config<T> {
    pub gamma: T,
    pub lr: T,
    pub batch: usize,
    pub tau_soft: T,
    pub buffer_capacity: usize,
    pub warmup_steps: u64,
    pub hidden: Vec<usize>,
    /// Std of the Gaussian exploration noise added to actions.
    pub explore_noise: T,
    /// Std of the smoothing noise on target actions.
    pub target_noise: T,
    pub noise_clip: T,
    /// Critic updates per actor update.
    pub policy_delay: u64,
}

impl<T: Real> Default for Td3Config<T> {
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
            target_noise: T::lit(0.2),
            noise_clip: T::lit(0.5),
            policy_delay: 2,
        }
    }
}

impl<T: Real> Td3Config<T> {
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
        if !(self.explore_noise >= T::zero() && self.target_noise >= T::zero() && self.noise_clip >= T::zero()) {
            bad.push("noise scales >= 0");
        }
        if self.policy_delay == 0 {
            bad.push("policy_delay >= 1");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("td3 config violates: {}", bad.join(", "))))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Td3<T> {
    cfg: Td3Config<T>,
    obs_dim: usize,
    act_dim: usize,
    actor: DenseNet<T>,
    actor_target: DenseNet<T>,
    actor_opt: Adam<T>,
    q1: DenseNet<T>,
    q2: DenseNet<T>,
    q1_target: DenseNet<T>,
    q2_target: DenseNet<T>,
    q1_opt: Adam<T>,
    q2_opt: Adam<T>,
    buffer: ReplayBuffer<T>,
    rng: Rng,
    updates: u64,
}

impl<T: Real> Td3<T> {
    pub fn new(obs_dim: usize, act_dim: usize, cfg: Td3Config<T>, rng: Rng) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng;
        let actor = DenseNet::new(
            &layer_sizes(obs_dim, &cfg.hidden, act_dim),
            Activation::Tanh,
            Activation::Tanh,
            &mut rng,
        )?;
        let critic_sizes = layer_sizes(obs_dim + act_dim, &cfg.hidden, 1);
        let q1 = DenseNet::new(&critic_sizes, Activation::Tanh, Activation::Identity, &mut rng)?;
        let q2 = DenseNet::new(&critic_sizes, Activation::Tanh, Activation::Identity, &mut rng)?;
        let adam = AdamParams::with_lr(cfg.lr);
        Ok(Self {
            actor_target: actor.clone(),
            actor_opt: Adam::new(&actor, adam),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1_opt: Adam::new(&q1, adam),
            q2_opt: Adam::new(&q2, adam),
            buffer: ReplayBuffer::new(cfg.buffer_capacity)?,
            updates: 0,
            obs_dim,
            act_dim,
            actor,
            q1,
            q2,
            rng,
            cfg,
        })
    }

    pub fn config(&self) -> &Td3Config<T> {
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

    /// `r + γ·min_i Q′_i(s′, clip(μ′(s′) + clip(noise)))`.
    pub fn critic_targets(&mut self, batch: &Batch<T>) -> Result<Array1<T>> {
        let mut a2 = self.actor_target.forward(batch.next_obs.view())?;
        let (sigma, c) = (self.cfg.target_noise.as_f64(), self.cfg.noise_clip);
        for v in a2.iter_mut() {
            let noise = T::lit(sigma * self.rng.standard_normal()).max(-c).min(c);
            *v = (*v + noise).max(-T::one()).min(T::one());
        }
        let x = concat_columns(batch.next_obs.view(), a2.view());
        let t1 = self.q1_target.forward(x.view())?;
        let t2 = self.q2_target.forward(x.view())?;
        Ok(Array1::from_shape_fn(batch.len(), |i| {
            batch.reward[i] + self.cfg.gamma * t1[[i, 0]].min(t2[[i, 0]])
        }))
    }

    pub fn update(&mut self) -> Result<Option<UpdateStats<T>>> {
        let Some(batch) = self.buffer.sample(self.cfg.batch, &mut self.rng) else {
            log::warn!("td3 update skipped: {} transitions < batch {}", self.buffer.len(), self.cfg.batch);
            return Ok(None);
        };
        self.update_on(&batch).map(Some)
    }

    /// Critic step every call; actor and target step every
    /// `policy_delay`-th call (counting from 1).
    pub fn update_on(&mut self, batch: &Batch<T>) -> Result<UpdateStats<T>> {
        let targets = self.critic_targets(batch)?;
        let x = concat_columns(batch.obs.view(), batch.action.view());
        let (l1, g1) = mse_gradients(&self.q1, x.view(), &targets)?;
        let (l2, g2) = mse_gradients(&self.q2, x.view(), &targets)?;
        self.q1_opt.step(&mut self.q1, &g1);
        self.q2_opt.step(&mut self.q2, &g2);
        self.updates += 1;

        let mut actor_loss = None;
        if self.updates.is_multiple_of(self.cfg.policy_delay) {
            let (loss, g) = deterministic_policy_gradients(&self.actor, &self.q1, batch.obs.view())?;
            self.actor_opt.step(&mut self.actor, &g);
            let tau = self.cfg.tau_soft;
            self.actor_target.soft_update_from(&self.actor, tau);
            self.q1_target.soft_update_from(&self.q1, tau);
            self.q2_target.soft_update_from(&self.q2, tau);
            actor_loss = Some(loss);
        }
        Ok(UpdateStats {
            critic_loss: (l1 + l2) / T::lit(2.0),
            actor_loss,
            alpha: None,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    /// Target networks, for inspection.
    pub fn targets(&self) -> (&DenseNet<T>, [&DenseNet<T>; 2]) {
        (&self.actor_target, [&self.q1_target, &self.q2_target])
    }
}
