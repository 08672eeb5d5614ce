//! Soft actor-critic with twin critics, a tanh-squashed Gaussian policy and
//! automatic temperature tuning.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::buffer::{Batch, ReplayBuffer, Transition};
use super::net::{Activation, Adam, AdamParams, DenseNet, Gradients, ScalarAdam, Tape};
use super::{concat_columns, layer_sizes, mse_gradients, UpdateStats};
use crate::error::{Error, Result};
use crate::numerics::{Real, Rng};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct SacConfig<T> {
    pub gamma: T,
    pub lr: T,
    pub batch: usize,
    pub tau_soft: T,
    /// Initial temperature `e_s`.
    pub entropy_alpha: T,
    pub auto_entropy: bool,
    /// Defaults to `−(action dimension)` when unset.
    pub target_entropy: Option<T>,
    pub buffer_capacity: usize,
    pub warmup_steps: u64,
    pub hidden: Vec<usize>,
    /// Subtract the running mean of stored rewards inside the critic target.
    pub reward_baseline: bool,
}

impl<T: Real> Default for SacConfig<T> {
    fn default() -> Self {
        Self {
            gamma: T::lit(0.99),
            lr: T::lit(1e-3),
            batch: 16,
            tau_soft: T::lit(0.005),
            entropy_alpha: T::lit(0.2),
            auto_entropy: true,
            target_entropy: None,
            buffer_capacity: 100_000,
            warmup_steps: 1000,
            hidden: vec![256, 256],
            reward_baseline: false,
        }
    }
}

impl<T: Real> SacConfig<T> {
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
        if !(self.entropy_alpha > T::zero()) {
            bad.push("entropy_alpha > 0");
        }
        if self.buffer_capacity < self.batch {
            bad.push("buffer_capacity >= batch");
        }
        if self.hidden.contains(&0) {
            bad.push("hidden sizes >= 1");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("sac config violates: {}", bad.join(", "))))
        }
    }
}

fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Log-density of `a = tanh(u)` where `u = μ + σε`, for one coordinate.
///
/// Includes the change-of-variables term `−ln(1 − tanh²u)`, written as
/// `2(ln 2 − u − softplus(−2u))` for stability at large `|u|`.
pub fn squashed_log_prob<T: Real>(eps: T, log_std: T, u: T) -> T {
    let half_ln_2pi = T::lit(0.5 * (2.0 * std::f64::consts::PI).ln());
    let gauss = T::lit(-0.5) * eps * eps - log_std - half_ln_2pi;
    gauss - T::lit(2.0) * (T::LN_2() - u - softplus(T::lit(-2.0) * u))
}

/// A reparameterized draw for each row of a batch.
struct PolicySample<T> {
    tape: Tape<T>,
    /// Raw log-std before clamping, to mask gradients outside the band.
    raw_log_std: Array2<T>,
    log_std: Array2<T>,
    eps: Array2<T>,
    action: Array2<T>,
    log_prob: Array1<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Sac<T> {
    cfg: SacConfig<T>,
    obs_dim: usize,
    act_dim: usize,
    policy: DenseNet<T>,
    policy_opt: Adam<T>,
    q1: DenseNet<T>,
    q2: DenseNet<T>,
    q1_target: DenseNet<T>,
    q2_target: DenseNet<T>,
    q1_opt: Adam<T>,
    q2_opt: Adam<T>,
    log_alpha: T,
    alpha_opt: ScalarAdam<T>,
    buffer: ReplayBuffer<T>,
    rng: Rng,
    updates: u64,
    reward_sum: T,
}

impl<T: Real> Sac<T> {
    pub fn new(obs_dim: usize, act_dim: usize, cfg: SacConfig<T>, rng: Rng) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng;
        let critic_sizes = layer_sizes(obs_dim + act_dim, &cfg.hidden, 1);
        let policy = DenseNet::new(
            &layer_sizes(obs_dim, &cfg.hidden, 2 * act_dim),
            Activation::Tanh,
            Activation::Identity,
            &mut rng,
        )?;
        let q1 = DenseNet::new(&critic_sizes, Activation::Tanh, Activation::Identity, &mut rng)?;
        let q2 = DenseNet::new(&critic_sizes, Activation::Tanh, Activation::Identity, &mut rng)?;
        let adam = AdamParams::with_lr(cfg.lr);
        Ok(Self {
            policy_opt: Adam::new(&policy, adam),
            q1_opt: Adam::new(&q1, adam),
            q2_opt: Adam::new(&q2, adam),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            log_alpha: cfg.entropy_alpha.ln(),
            alpha_opt: ScalarAdam::new(adam),
            buffer: ReplayBuffer::new(cfg.buffer_capacity)?,
            updates: 0,
            reward_sum: T::zero(),
            obs_dim,
            act_dim,
            policy,
            q1,
            q2,
            rng,
            cfg,
        })
    }

    pub fn config(&self) -> &SacConfig<T> {
        &self.cfg
    }

    pub fn alpha(&self) -> T {
        self.log_alpha.exp()
    }

    pub fn target_entropy(&self) -> T {
        self.cfg.target_entropy.unwrap_or_else(|| -T::from_usize(self.act_dim).unwrap())
    }

    pub fn buffer(&self) -> &ReplayBuffer<T> {
        &self.buffer
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn policy(&self) -> &DenseNet<T> {
        &self.policy
    }

    pub fn critics(&self) -> [&DenseNet<T>; 2] {
        [&self.q1, &self.q2]
    }

    pub fn target_critics(&self) -> [&DenseNet<T>; 2] {
        [&self.q1_target, &self.q2_target]
    }

    pub fn rng_mut(&mut self) -> &mut Rng {
        &mut self.rng
    }

    pub fn remember(&mut self, t: Transition<T>) {
        self.reward_sum += t.reward;
        self.buffer.push(t);
    }

    /// Mean and clamped log-std heads for each row of `obs`.
    pub fn policy_heads(&self, obs: ArrayView2<T>) -> Result<(Array2<T>, Array2<T>)> {
        let out = self.policy.forward(obs)?;
        Ok(self.split_heads(&out))
    }

    fn split_heads(&self, out: &Array2<T>) -> (Array2<T>, Array2<T>) {
        let d = self.act_dim;
        let mu = out.slice(s![.., ..d]).to_owned();
        let ls = out.slice(s![.., d..]).mapv(|x| x.max(T::lit(LOG_STD_MIN)).min(T::lit(LOG_STD_MAX)));
        (mu, ls)
    }

    pub fn select_action(&mut self, obs: &[T], deterministic: bool) -> Result<Vec<T>> {
        let x = ArrayView2::from_shape((1, obs.len()), obs).map_err(|e| Error::shape("select_action", e.to_string()))?;
        let (mu, ls) = self.policy_heads(x)?;
        Ok((0..self.act_dim)
            .map(|j| {
                if deterministic {
                    mu[[0, j]].tanh()
                } else {
                    let e = T::lit(self.rng.standard_normal());
                    (mu[[0, j]] + ls[[0, j]].exp() * e).tanh()
                }
            })
            .collect())
    }

    fn sample_policy(&mut self, obs: ArrayView2<T>) -> Result<PolicySample<T>> {
        let tape = self.policy.forward_train(obs)?;
        let d = self.act_dim;
        let raw_log_std = tape.output().slice(s![.., d..]).to_owned();
        let (mu, log_std) = self.split_heads(tape.output());
        let n = obs.nrows();
        let eps = Array2::from_shape_fn((n, d), |_| T::lit(self.rng.standard_normal()));
        let mut action = Array2::zeros((n, d));
        let mut log_prob = Array1::zeros(n);
        for i in 0..n {
            for j in 0..d {
                let u = mu[[i, j]] + log_std[[i, j]].exp() * eps[[i, j]];
                action[[i, j]] = u.tanh();
                log_prob[i] += squashed_log_prob(eps[[i, j]], log_std[[i, j]], u);
            }
        }
        Ok(PolicySample {
            tape,
            raw_log_std,
            log_std,
            eps,
            action,
            log_prob,
        })
    }

    fn mean_reward(&self) -> T {
        if self.buffer.inserted() == 0 {
            T::zero()
        } else {
            self.reward_sum / T::from_u64(self.buffer.inserted()).unwrap()
        }
    }

    /// Bootstrapped targets `r + γ(min_i Q′_i(s′, a′) − α·logπ(a′|s′))`.
    pub fn critic_targets(&mut self, batch: &Batch<T>) -> Result<Array1<T>> {
        let next = self.sample_policy(batch.next_obs.view())?;
        let x = concat_columns(batch.next_obs.view(), next.action.view());
        let t1 = self.q1_target.forward(x.view())?;
        let t2 = self.q2_target.forward(x.view())?;
        let alpha = self.alpha();
        let baseline = if self.cfg.reward_baseline { self.mean_reward() } else { T::zero() };
        Ok(Array1::from_shape_fn(batch.len(), |i| {
            let soft = t1[[i, 0]].min(t2[[i, 0]]) - alpha * next.log_prob[i];
            batch.reward[i] - baseline + self.cfg.gamma * soft
        }))
    }

    /// One gradient step on both critics towards fresh targets.
    pub fn update_critics(&mut self, batch: &Batch<T>) -> Result<T> {
        let targets = self.critic_targets(batch)?;
        let x = concat_columns(batch.obs.view(), batch.action.view());
        let (l1, g1) = mse_gradients(&self.q1, x.view(), &targets)?;
        let (l2, g2) = mse_gradients(&self.q2, x.view(), &targets)?;
        self.q1_opt.step(&mut self.q1, &g1);
        self.q2_opt.step(&mut self.q2, &g2);
        Ok((l1 + l2) / T::lit(2.0))
    }

    /// Loss `mean(α·logπ(a|s) − min_i Q_i(s, a))` with `a` reparameterized,
    /// the batch mean log-prob, and the policy parameter gradients.
    pub fn policy_gradients(&mut self, batch: &Batch<T>) -> Result<(T, T, Gradients<T>)> {
        let n = batch.len();
        let d = self.act_dim;
        let alpha = self.alpha();
        let smp = self.sample_policy(batch.obs.view())?;
        let x = concat_columns(batch.obs.view(), smp.action.view());
        let tape1 = self.q1.forward_train(x.view())?;
        let tape2 = self.q2.forward_train(x.view())?;
        let nb = T::from_usize(n).unwrap();

        // Route dL/dQ to whichever critic is the minimum on each row.
        let mut up1 = Array2::zeros((n, 1));
        let mut up2 = Array2::zeros((n, 1));
        let mut loss = T::zero();
        for i in 0..n {
            let (v1, v2) = (tape1.output()[[i, 0]], tape2.output()[[i, 0]]);
            if v1 <= v2 {
                up1[[i, 0]] = T::one();
            } else {
                up2[[i, 0]] = T::one();
            }
            loss += alpha * smp.log_prob[i] - v1.min(v2);
        }
        let (_, dx1) = self.q1.backward(&tape1, up1.view())?;
        let (_, dx2) = self.q2.backward(&tape2, up2.view())?;
        let dq = &dx1.slice(s![.., self.obs_dim..]) + &dx2.slice(s![.., self.obs_dim..]);

        let two = T::lit(2.0);
        let (lo, hi) = (T::lit(LOG_STD_MIN), T::lit(LOG_STD_MAX));
        let mut grad = Array2::zeros((n, 2 * d));
        for i in 0..n {
            for j in 0..d {
                let a = smp.action[[i, j]];
                let jac = T::one() - a * a;
                let sigma = smp.log_std[[i, j]].exp();
                let e = smp.eps[[i, j]];
                let g = dq[[i, j]];
                grad[[i, j]] = (alpha * two * a - g * jac) / nb;
                let raw = smp.raw_log_std[[i, j]];
                if raw >= lo && raw <= hi {
                    grad[[i, d + j]] = (alpha * (two * a * sigma * e - T::one()) - g * jac * sigma * e) / nb;
                }
            }
        }
        let (g, _) = self.policy.backward(&smp.tape, grad.view())?;
        Ok((loss / nb, smp.log_prob.sum() / nb, g))
    }

    fn update_policy(&mut self, batch: &Batch<T>) -> Result<(T, T)> {
        let (loss, mean_log_prob, g) = self.policy_gradients(batch)?;
        self.policy_opt.step(&mut self.policy, &g);
        Ok((loss, mean_log_prob))
    }

    /// Full update on one sampled mini-batch; `None` if the buffer holds
    /// fewer transitions than the batch size.
    pub fn update(&mut self) -> Result<Option<UpdateStats<T>>> {
        let Some(batch) = self.buffer.sample(self.cfg.batch, &mut self.rng) else {
            log::warn!("sac update skipped: {} transitions < batch {}", self.buffer.len(), self.cfg.batch);
            return Ok(None);
        };
        self.update_on(&batch).map(Some)
    }

    pub fn update_on(&mut self, batch: &Batch<T>) -> Result<UpdateStats<T>> {
        let critic_loss = self.update_critics(batch)?;
        let (actor_loss, mean_log_prob) = self.update_policy(batch)?;
        if self.cfg.auto_entropy {
            let g = -(mean_log_prob + self.target_entropy());
            self.alpha_opt.step(&mut self.log_alpha, g);
        }
        let tau = self.cfg.tau_soft;
        self.q1_target.soft_update_from(&self.q1, tau);
        self.q2_target.soft_update_from(&self.q2, tau);
        self.updates += 1;
        Ok(UpdateStats {
            critic_loss,
            actor_loss: Some(actor_loss),
            alpha: Some(self.alpha()),
        })
    }

    /// Parameter gradients of the critic loss against given targets.
    pub fn critic_gradients(&self, batch: &Batch<T>, targets: &Array1<T>) -> Result<[(T, Gradients<T>); 2]> {
        let x = concat_columns(batch.obs.view(), batch.action.view());
        Ok([
            mse_gradients(&self.q1, x.view(), targets)?,
            mse_gradients(&self.q2, x.view(), targets)?,
        ])
    }

    /// `Q_i(s, a)` for each row of the batch.
    pub fn q_values(&self, batch: &Batch<T>) -> Result<[Array1<T>; 2]> {
        let x = concat_columns(batch.obs.view(), batch.action.view());
        Ok([
            self.q1.forward(x.view())?.remove_axis(Axis(1)),
            self.q2.forward(x.view())?.remove_axis(Axis(1)),
        ])
    }
}
