//! Learning agents over the environment's flat continuous spaces.
//!
//! All agents emit actions in `[-1, 1]^dim`. Learners act uniformly at random
//! for their first `warmup_steps` environment steps and run one gradient
//! update per step afterwards.

pub mod buffer;
pub mod checkpoint;
pub mod ddpg;
pub mod net;
pub mod sac;
pub mod td3;

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub use buffer::{Batch, ReplayBuffer, Transition};
pub use ddpg::{Ddpg, DdpgConfig};
pub use net::{Activation, Adam, AdamParams, DenseNet, Gradients, Layer, ScalarAdam, Tape};
pub use sac::{Sac, SacConfig};
pub use td3::{Td3, Td3Config};

use crate::error::Result;
use crate::numerics::{Real, Rng};

/// RNG stream reserved for agent initialization and sampling.
const AGENT_STREAM: u64 = 0x41_47_4e_54;

/// Diagnostics of one gradient update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats<T> {
    pub critic_loss: T,
    /// `None` when the actor was not stepped (delayed updates).
    pub actor_loss: Option<T>,
    /// Entropy temperature after the update, for agents that have one.
    pub alpha: Option<T>,
}

pub(crate) fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = Vec::with_capacity(hidden.len() + 2);
    v.push(input);
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

pub(crate) fn concat_columns<T: Real>(a: ArrayView2<T>, b: ArrayView2<T>) -> Array2<T> {
    concatenate(Axis(1), &[a, b]).expect("row counts agree")
}

/// Mean squared error of a single-output net against `targets`, and its
/// parameter gradients.
pub(crate) fn mse_gradients<T: Real>(net: &DenseNet<T>, x: ArrayView2<T>, targets: &Array1<T>) -> Result<(T, Gradients<T>)> {
    let tape = net.forward_train(x)?;
    let n = T::from_usize(targets.len()).unwrap();
    let residual = &tape.output().column(0) - targets;
    let loss = residual.mapv(|r| r * r).sum() / n;
    let upstream = residual.mapv(|r| T::lit(2.0) * r / n).insert_axis(Axis(1));
    let (g, _) = net.backward(&tape, upstream.view())?;
    Ok((loss, g))
}

/// Loss `−mean Q(s, μ(s))` and its gradients with respect to the actor.
pub(crate) fn deterministic_policy_gradients<T: Real>(
    actor: &DenseNet<T>,
    critic: &DenseNet<T>,
    obs: ArrayView2<T>,
) -> Result<(T, Gradients<T>)> {
    let n = obs.nrows();
    let nb = T::from_usize(n).unwrap();
    let actor_tape = actor.forward_train(obs)?;
    let x = concat_columns(obs, actor_tape.output().view());
    let critic_tape = critic.forward_train(x.view())?;
    let loss = -critic_tape.output().sum() / nb;
    let upstream = Array2::from_elem((n, 1), -T::one() / nb);
    let (_, dx) = critic.backward(&critic_tape, upstream.view())?;
    let da = dx.slice(ndarray::s![.., obs.ncols()..]).to_owned();
    let (g, _) = actor.backward(&actor_tape, da.view())?;
    Ok((loss, g))
}

/// Uniform action in `[-1, 1]^dim`.
pub fn random_policy<T: Real>(rng: &mut Rng, dim: usize) -> Vec<T> {
    (0..dim).map(|_| T::lit(rng.uniform_in(-1.0, 1.0))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomAgent {
    rng: Rng,
    dim: usize,
}

impl RandomAgent {
    pub fn new(dim: usize, rng: Rng) -> Self {
        Self { rng, dim }
    }

    pub fn select_action<T: Real>(&mut self) -> Vec<T> {
        random_policy(&mut self.rng, self.dim)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Sac,
    Td3,
    Ddpg,
    Random,
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AgentKind::Sac => "sac",
            AgentKind::Td3 => "td3",
            AgentKind::Ddpg => "ddpg",
            AgentKind::Random => "random",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Real")]
pub enum AgentConfig<T> {
    Sac(SacConfig<T>),
    Td3(Td3Config<T>),
    Ddpg(DdpgConfig<T>),
    Random,
}

impl<T: Real> Default for AgentConfig<T> {
    fn default() -> Self {
        AgentConfig::Sac(SacConfig::default())
    }
}

impl<T: Real> AgentConfig<T> {
    pub fn kind(&self) -> AgentKind {
        match self {
            AgentConfig::Sac(_) => AgentKind::Sac,
            AgentConfig::Td3(_) => AgentKind::Td3,
            AgentConfig::Ddpg(_) => AgentKind::Ddpg,
            AgentConfig::Random => AgentKind::Random,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AgentConfig::Sac(c) => c.validate(),
            AgentConfig::Td3(c) => c.validate(),
            AgentConfig::Ddpg(c) => c.validate(),
            AgentConfig::Random => Ok(()),
        }
    }

    pub fn warmup_steps(&self) -> u64 {
        match self {
            AgentConfig::Sac(c) => c.warmup_steps,
            AgentConfig::Td3(c) => c.warmup_steps,
            AgentConfig::Ddpg(c) => c.warmup_steps,
            AgentConfig::Random => 0,
        }
    }

    /// Every network width list the agent would build.
    pub fn network_shapes(&self, obs_dim: usize, act_dim: usize) -> Vec<Vec<usize>> {
        match self {
            AgentConfig::Sac(c) => vec![
                layer_sizes(obs_dim, &c.hidden, 2 * act_dim),
                layer_sizes(obs_dim + act_dim, &c.hidden, 1),
            ],
            AgentConfig::Td3(Td3Config { hidden, .. }) | AgentConfig::Ddpg(DdpgConfig { hidden, .. }) => {
                vec![layer_sizes(obs_dim, hidden, act_dim), layer_sizes(obs_dim + act_dim, hidden, 1)]
            }
            AgentConfig::Random => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Real")]
pub enum Agent<T> {
    Sac(Sac<T>),
    Td3(Td3<T>),
    Ddpg(Ddpg<T>),
    Random(RandomAgent),
}

impl<T: Real> Agent<T> {
    pub fn new(cfg: &AgentConfig<T>, obs_dim: usize, act_dim: usize, seed: u64) -> Result<Self> {
        let rng = Rng::with_stream(seed, AGENT_STREAM);
        Ok(match cfg {
            AgentConfig::Sac(c) => Agent::Sac(Sac::new(obs_dim, act_dim, c.clone(), rng)?),
            AgentConfig::Td3(c) => Agent::Td3(Td3::new(obs_dim, act_dim, c.clone(), rng)?),
            AgentConfig::Ddpg(c) => Agent::Ddpg(Ddpg::new(obs_dim, act_dim, c.clone(), rng)?),
            AgentConfig::Random => Agent::Random(RandomAgent::new(act_dim, rng)),
        })
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Sac(_) => AgentKind::Sac,
            Agent::Td3(_) => AgentKind::Td3,
            Agent::Ddpg(_) => AgentKind::Ddpg,
            Agent::Random(_) => AgentKind::Random,
        }
    }

    fn warmup_steps(&self) -> u64 {
        match self {
            Agent::Sac(a) => a.config().warmup_steps,
            Agent::Td3(a) => a.config().warmup_steps,
            Agent::Ddpg(a) => a.config().warmup_steps,
            Agent::Random(_) => 0,
        }
    }

    /// Training-time action at environment step `step`.
    pub fn act(&mut self, obs: &[T], step: u64) -> Result<Vec<T>> {
        let dim = self.action_dim();
        let warm = step < self.warmup_steps();
        Ok(match self {
            Agent::Random(a) => a.select_action(),
            Agent::Sac(a) if warm => random_policy(a.rng_mut(), dim),
            Agent::Td3(a) if warm => random_policy(a.rng_mut(), dim),
            Agent::Ddpg(a) if warm => random_policy(a.rng_mut(), dim),
            Agent::Sac(a) => a.select_action(obs, false)?,
            Agent::Td3(a) => a.select_action(obs, true)?,
            Agent::Ddpg(a) => a.select_action(obs, true)?,
        })
    }

    /// Exploitation action: tanh of the mean for SAC, noiseless for the
    /// deterministic agents.
    pub fn act_greedy(&mut self, obs: &[T]) -> Result<Vec<T>> {
        Ok(match self {
            Agent::Random(a) => a.select_action(),
            Agent::Sac(a) => a.select_action(obs, true)?,
            Agent::Td3(a) => a.select_action(obs, false)?,
            Agent::Ddpg(a) => a.select_action(obs, false)?,
        })
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Agent::Sac(a) => a.policy().output_dim() / 2,
            Agent::Td3(a) => a.actor().output_dim(),
            Agent::Ddpg(a) => a.actor().output_dim(),
            Agent::Random(a) => a.dim,
        }
    }

    pub fn remember(&mut self, t: Transition<T>) {
        match self {
            Agent::Sac(a) => a.remember(t),
            Agent::Td3(a) => a.remember(t),
            Agent::Ddpg(a) => a.remember(t),
            Agent::Random(_) => {}
        }
    }

    /// One update once `step` is past warm-up; `None` otherwise or when the
    /// buffer cannot fill a batch yet.
    pub fn learn(&mut self, step: u64) -> Result<Option<UpdateStats<T>>> {
        if step < self.warmup_steps() {
            return Ok(None);
        }
        match self {
            Agent::Sac(a) => a.update(),
            Agent::Td3(a) => a.update(),
            Agent::Ddpg(a) => a.update(),
            Agent::Random(_) => Ok(None),
        }
    }

    pub fn buffer(&self) -> Option<&ReplayBuffer<T>> {
        match self {
            Agent::Sac(a) => Some(a.buffer()),
            Agent::Td3(a) => Some(a.buffer()),
            Agent::Ddpg(a) => Some(a.buffer()),
            Agent::Random(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::Rng;
    use super::*;

    #[test]
    fn random_policy_bounds_and_mean() {
        let mut rng = Rng::new(0);
        let n = 100_000;
        let mut sums = [0.0; 3];
        for _ in 0..n {
            let a: Vec<f64> = random_policy(&mut rng, 3);
            for (s, x) in sums.iter_mut().zip(&a) {
                assert!((-1.0..=1.0).contains(x));
                *s += x;
            }
        }
        for s in sums {
            assert!((s / n as f64).abs() < 0.02);
        }
        let again: Vec<f64> = random_policy(&mut Rng::new(5), 4);
        assert_eq!(again, random_policy::<f64>(&mut Rng::new(5), 4));
    }

    #[test]
    fn warmup_actions_are_random_then_policy() {
        let cfg = AgentConfig::Sac(SacConfig {
            hidden: vec![8],
            warmup_steps: 3,
            batch: 2,
            ..SacConfig::default()
        });
        let mut agent = Agent::<f64>::new(&cfg, 4, 2, 0).unwrap();
        let obs = [0.0; 4];
        assert!(agent.learn(2).unwrap().is_none());
        for step in 0..6 {
            let a = agent.act(&obs, step).unwrap();
            assert_eq!(a.len(), 2);
            agent.remember(Transition {
                obs: obs.to_vec(),
                action: a,
                reward: 1.0,
                next_obs: obs.to_vec(),
                step,
            });
        }
        assert!(agent.learn(5).unwrap().is_some());
    }

    #[test]
    fn network_shapes_cover_every_learner() {
        let sac = AgentConfig::<f64>::Sac(SacConfig {
            hidden: vec![64, 64],
            ..SacConfig::default()
        });
        assert_eq!(sac.network_shapes(56, 12), vec![vec![56, 64, 64, 24], vec![68, 64, 64, 1]]);
        assert!(AgentConfig::<f64>::Random.network_shapes(56, 12).is_empty());
    }

    #[test]
    fn same_seed_same_agent() {
        for cfg in [
            AgentConfig::<f64>::Sac(SacConfig {
                hidden: vec![8],
                ..SacConfig::default()
            }),
            AgentConfig::Td3(Td3Config {
                hidden: vec![8],
                ..Td3Config::default()
            }),
            AgentConfig::Ddpg(DdpgConfig {
                hidden: vec![8],
                ..DdpgConfig::default()
            }),
            AgentConfig::Random,
        ] {
            assert_eq!(Agent::new(&cfg, 5, 3, 7).unwrap(), Agent::new(&cfg, 5, 3, 7).unwrap());
            assert_ne!(Agent::new(&cfg, 5, 3, 7).unwrap(), Agent::new(&cfg, 5, 3, 8).unwrap());
        }
    }
}
