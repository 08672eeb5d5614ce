//! Reward poisoning and the clipping + statistical-filter defense.
//!
//! Per step the pipeline applies the attack (if configured), then clips and
//! filters (if a defense is configured). Without a defense the poisoned
//! reward passes straight through and is always accepted.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Real, Rng};

/// Floor on the filter's standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

/// RNG stream reserved for attack randomness.
const ATTACK_STREAM: u64 = 0x41_54_4b;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackKind<T> {
    /// `r → −r`.
    Invert,
    /// `r → factor·r`.
    Scale { factor: T },
    /// `r → u·r`, `u ~ U(low, high)` drawn per poisoned step.
    RandomScale { low: T, high: T },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig<T> {
    pub kind: AttackKind<T>,
    /// Poisoning starts once the recent mean reward exceeds this.
    pub threshold: T,
    /// Number of recent true rewards averaged for the trigger.
    pub trigger_window: usize,
}

impl<T: Real> Default for AttackConfig<T> {
    fn default() -> Self {
        Self {
            kind: AttackKind::Invert,
            threshold: T::lit(0.5),
            trigger_window: 50,
        }
    }
}

impl<T: Real> AttackConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: T| x > T::zero() && x < T::one();
        match self.kind {
            AttackKind::Invert => {}
            AttackKind::Scale { factor } if !unit(factor) => {
                return Err(Error::Config(format!("attack.factor must lie in (0, 1), got {factor}")));
            }
            AttackKind::RandomScale { low, high } if !(unit(low) && unit(high) && low < high) => {
                return Err(Error::Config(format!(
                    "attack range ({low}, {high}) must satisfy 0 < low < high < 1"
                )));
            }
            _ => {}
        }
        if self.trigger_window == 0 {
            return Err(Error::Config("attack.trigger_window must be >= 1".into()));
        }
        if self.threshold.is_nan() {
            return Err(Error::Config("attack.threshold is NaN".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseConfig<T> {
    pub r_min: T,
    pub r_max: T,
    pub chi: T,
    /// Rewards accepted unconditionally to seed the statistics.
    pub warmup_count: usize,
    /// Number of most recent accepted rewards behind the mean and σ.
    pub stats_window: usize,
}

impl<T: Real> Default for DefenseConfig<T> {
    fn default() -> Self {
        Self {
            r_min: T::lit(-2.0),
            r_max: T::lit(2.0),
            chi: T::lit(2.0),
            warmup_count: 10,
            stats_window: 500,
        }
    }
}

impl<T: Real> DefenseConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.r_min < self.r_max) {
            bad.push("r_min < r_max");
        }
        if !(self.chi > T::zero()) {
            bad.push("chi > 0");
        }
        if self.warmup_count < 2 {
            bad.push("warmup_count >= 2");
        }
        if self.stats_window < self.warmup_count {
            bad.push("stats_window >= warmup_count");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("defense violates: {}", bad.join(", "))))
        }
    }
}

/// Mean and unbiased standard deviation over a bounded window of rewards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardStats<T> {
    window: VecDeque<T>,
    capacity: usize,
    accepted_total: u64,
}

impl<T: Real> RewardStats<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            window: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            accepted_total: 0,
        }
    }

    pub fn push(&mut self, r: T) {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(r);
        self.accepted_total += 1;
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Rewards pushed since creation, including those evicted.
    pub fn accepted_total(&self) -> u64 {
        self.accepted_total
    }

    pub fn mean(&self) -> Option<T> {
        if self.window.is_empty() {
            return None;
        }
        Some(self.window.iter().copied().sum::<T>() / T::from_usize(self.window.len()).unwrap())
    }

    /// Unbiased (n−1) estimate, floored at [`STD_FLOOR`].
    pub fn std(&self) -> Option<T> {
        let n = self.window.len();
        if n < 2 {
            return None;
        }
        let m = self.mean()?;
        let ss: T = self.window.iter().map(|&x| (x - m) * (x - m)).sum();
        Some((ss / T::from_usize(n - 1).unwrap()).sqrt().max(T::lit(STD_FLOOR)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision<T> {
    Accepted(T),
    Discarded,
}

impl<T: Copy> Decision<T> {
    pub fn accepted(&self) -> Option<T> {
        match *self {
            Decision::Accepted(v) => Some(v),
            Decision::Discarded => None,
        }
    }
}

/// One line of the JSON-lines pipeline log. `mean` and `std` are the
/// statistics the filter compared against; `None` during warm-up or
/// without a defense.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardPipelineRecord<T> {
    pub t: u64,
    pub raw: T,
    pub post_attack: T,
    pub clipped: T,
    pub decision: Decision<T>,
    pub mean: Option<T>,
    pub std: Option<T>,
    pub triggered: bool,
}

/// Whether the attacker poisons given the recent true-reward mean.
pub fn is_triggered<T: Real>(cfg: &AttackConfig<T>, recent_mean: Option<T>) -> bool {
    recent_mean.is_some_and(|m| m > cfg.threshold)
}

/// Poisoned reward; `r` unchanged when the trigger is not met.
pub fn attack<T: Real>(cfg: &AttackConfig<T>, r: T, recent_mean: Option<T>, rng: &mut Rng) -> T {
    if !is_triggered(cfg, recent_mean) {
        return r;
    }
    match cfg.kind {
        AttackKind::Invert => -r,
        AttackKind::Scale { factor } => factor * r,
        AttackKind::RandomScale { low, high } => T::lit(rng.uniform_in(low.as_f64(), high.as_f64())) * r,
    }
}

/// Clips `r` and filters it against `stats`, updating them on acceptance.
pub fn defend<T: Real>(cfg: &DefenseConfig<T>, stats: &mut RewardStats<T>, r: T) -> (T, Decision<T>) {
    let clipped = r.max(cfg.r_min).min(cfg.r_max);
    if stats.accepted_total() < cfg.warmup_count as u64 {
        stats.push(clipped);
        return (clipped, Decision::Accepted(clipped));
    }
    let (mean, std) = (stats.mean().unwrap(), stats.std().unwrap());
    if (clipped - mean).abs() <= cfg.chi * std {
        stats.push(clipped);
        (clipped, Decision::Accepted(clipped))
    } else {
        (clipped, Decision::Discarded)
    }
}

/// Per-run attack and defense state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardPipeline<T> {
    attack: Option<AttackConfig<T>>,
    defense: Option<DefenseConfig<T>>,
    rng: Rng,
    recent: VecDeque<T>,
    stats: RewardStats<T>,
    t: u64,
}

impl<T: Real> RewardPipeline<T> {
    pub fn new(attack: Option<AttackConfig<T>>, defense: Option<DefenseConfig<T>>, seed: u64) -> Result<Self> {
        if let Some(a) = &attack {
            a.validate()?;
        }
        if let Some(d) = &defense {
            d.validate()?;
        }
        let window = attack.map_or(1, |a| a.trigger_window);
        let stats_window = defense.map_or(1, |d| d.stats_window);
        Ok(Self {
            attack,
            defense,
            rng: Rng::with_stream(seed, ATTACK_STREAM),
            recent: VecDeque::with_capacity(window),
            stats: RewardStats::new(stats_window),
            t: 0,
        })
    }

    pub fn stats(&self) -> &RewardStats<T> {
        &self.stats
    }

    fn in_warmup(&self) -> bool {
        self.defense.is_some_and(|d| self.stats.accepted_total() < d.warmup_count as u64)
    }

    /// Mean of the last `trigger_window` true rewards, once that many exist.
    fn recent_mean(&self, window: usize) -> Option<T> {
        (self.recent.len() == window).then(|| self.recent.iter().copied().sum::<T>() / T::from_usize(window).unwrap())
    }

    pub fn process(&mut self, raw: T) -> RewardPipelineRecord<T> {
        let (post_attack, triggered) = match self.attack {
            Some(cfg) if !self.in_warmup() => {
                let m = self.recent_mean(cfg.trigger_window);
                (attack(&cfg, raw, m, &mut self.rng), is_triggered(&cfg, m))
            }
            _ => (raw, false),
        };
        if let Some(cfg) = self.attack {
            if self.recent.len() == cfg.trigger_window {
                self.recent.pop_front();
            }
            self.recent.push_back(raw);
        }

        let (clipped, decision, mean, std) = match self.defense {
            Some(cfg) => {
                let warm = self.in_warmup();
                let (mean, std) = if warm {
                    (None, None)
                } else {
                    (self.stats.mean(), self.stats.std())
                };
                let (clipped, decision) = defend(&cfg, &mut self.stats, post_attack);
                (clipped, decision, mean, std)
            }
            None => (post_attack, Decision::Accepted(post_attack), None, None),
        };
        let record = RewardPipelineRecord {
            t: self.t,
            raw,
            post_attack,
            clipped,
            decision,
            mean,
            std,
            triggered,
        };
        self.t += 1;
        record
    }
}
