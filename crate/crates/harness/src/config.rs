//! Experiment specs. A spec is a TOML document; every key is optional and
//! falls back to the default network of the reference scenario.

use std::path::Path;

use hris::channel::{CascadeSpec, FadingMode, Topology};
use hris::phy::db_to_linear;
use hris::{
    ActiveParams, AgentConfig64, AttackConfig, AttackKind, BeamformerMapping, ConsumptionParams, DefenseConfig, EnvConfig64, HarvestParams,
    NoiseParams, PassiveParams, PowerConstraint, RisMode,
};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerSection {
    /// SU transmit budget P_t in dB (linear watts = 10^(dB/10)).
    pub p_t_db: f64,
    /// PU interference threshold I in dB.
    pub i_thr_db: f64,
}

impl Default for PowerSection {
    fn default() -> Self {
        Self {
            p_t_db: 10.0,
            i_thr_db: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub topology: Topology,
    pub cascade: CascadeSpec,
    pub passive: PassiveParams<f64>,
    pub active: ActiveParams<f64>,
    pub harvest: HarvestParams<f64>,
    pub consumption: ConsumptionParams<f64>,
    pub noise: NoiseParams<f64>,
    pub power: PowerSection,
    pub mode: RisMode<f64>,
    /// Penalty weight w_t on the energy shortfall.
    pub penalty_weight: f64,
    pub fading: FadingMode,
    pub beamformer_mapping: BeamformerMapping,
}

impl Default for EnvSection {
    fn default() -> Self {
        let c = EnvConfig64::default();
        Self {
            topology: c.topology,
            cascade: c.cascade,
            passive: c.passive,
            active: c.active,
            harvest: c.harvest,
            consumption: c.consumption,
            noise: c.noise,
            power: PowerSection::default(),
            mode: c.mode,
            penalty_weight: c.penalty_weight,
            fading: c.fading,
            beamformer_mapping: c.beamformer_mapping,
        }
    }
}

impl EnvSection {
    pub fn to_config(&self, seed: u64) -> EnvConfig64 {
        EnvConfig64 {
            topology: self.topology,
            cascade: self.cascade,
            passive: self.passive,
            active: self.active,
            harvest: self.harvest,
            consumption: self.consumption,
            noise: self.noise,
            power: PowerConstraint {
                p_t: db_to_linear(self.power.p_t_db),
                i_thr: db_to_linear(self.power.i_thr_db),
            },
            mode: self.mode,
            penalty_weight: self.penalty_weight,
            fading: self.fading,
            beamformer_mapping: self.beamformer_mapping,
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackName {
    Invert,
    Scale,
    RandomScale,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub kind: AttackName,
    /// S_C for `scale`.
    pub factor: f64,
    /// Bounds of the uniform factor for `random_scale`.
    pub low: f64,
    pub high: f64,
    /// A_T, compared against the mean of the last `trigger_window` rewards.
    pub threshold: f64,
    pub trigger_window: usize,
}

impl Default for AttackSection {
    fn default() -> Self {
        let c = AttackConfig::<f64>::default();
        Self {
            kind: AttackName::Invert,
            factor: 0.5,
            low: 0.3,
            high: 0.9,
            threshold: c.threshold,
            trigger_window: c.trigger_window,
        }
    }
}

impl AttackSection {
    pub fn to_config(&self) -> AttackConfig<f64> {
        let kind = match self.kind {
            AttackName::Invert => AttackKind::Invert,
            AttackName::Scale => AttackKind::Scale { factor: self.factor },
            AttackName::RandomScale => AttackKind::RandomScale {
                low: self.low,
                high: self.high,
            },
        };
        AttackConfig {
            kind,
            threshold: self.threshold,
            trigger_window: self.trigger_window,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefenseSection {
    pub r_min: f64,
    pub r_max: f64,
    pub chi: f64,
    /// w_p: rewards accepted unfiltered before the statistics are trusted.
    pub warmup_count: usize,
    pub stats_window: usize,
}

impl Default for DefenseSection {
    fn default() -> Self {
        let c = DefenseConfig::<f64>::default();
        Self {
            r_min: c.r_min,
            r_max: c.r_max,
            chi: c.chi,
            warmup_count: c.warmup_count,
            stats_window: c.stats_window,
        }
    }
}

impl DefenseSection {
    pub fn to_config(&self) -> DefenseConfig<f64> {
        DefenseConfig {
            r_min: self.r_min,
            r_max: self.r_max,
            chi: self.chi,
            warmup_count: self.warmup_count,
            stats_window: self.stats_window,
        }
    }
}

/// One swept parameter: a dotted path into the spec and its values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<toml::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub seeds: Vec<u64>,
    pub total_steps: u64,
    /// Moving-average window of the reward curves.
    pub window: usize,
    /// Checkpoint cadence in steps; 0 keeps only the final snapshot.
    pub checkpoint_every: u64,
    pub env: EnvSection,
    pub agent: AgentConfig64,
    pub attack: Option<AttackSection>,
    pub defense: Option<DefenseSection>,
    pub sweep: Vec<SweepAxis>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "default".into(),
            seeds: (0..10).collect(),
            total_steps: 20_000,
            window: 200,
            checkpoint_every: 0,
            env: EnvSection::default(),
            agent: AgentConfig64::default(),
            attack: None,
            defense: None,
            sweep: Vec::new(),
        }
    }
}

/// A spec with its sweep resolved to one point.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    /// `path=value` pairs joined by `,`; empty without a sweep.
    pub label: String,
    pub spec: ExperimentSpec,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn env_config(&self, seed: u64) -> EnvConfig64 {
        self.env.to_config(seed)
    }

    pub fn attack_config(&self) -> Option<AttackConfig<f64>> {
        self.attack.map(|a| a.to_config())
    }

    pub fn defense_config(&self) -> Option<DefenseConfig<f64>> {
        self.defense.map(|d| d.to_config())
    }

    /// Collects every violated constraint instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.seeds.is_empty() {
            bad.push("seeds: must be non-empty".to_string());
        }
        if self.total_steps == 0 {
            bad.push("total_steps: must be >= 1".to_string());
        }
        if self.window == 0 {
            bad.push("window: must be >= 1".to_string());
        }
        let mut check = |field: &str, r: hris::Result<()>| {
            if let Err(e) = r {
                bad.push(format!("{field}: {e}"));
            }
        };
        check("env", self.env_config(0).validate());
        check("agent", self.agent.validate());
        if let Some(a) = self.attack_config() {
            check("attack", a.validate());
        }
        if let Some(d) = self.defense_config() {
            check("defense", d.validate());
        }
        for axis in &self.sweep {
            if axis.values.is_empty() {
                bad.push(format!("sweep {}: needs at least one value", axis.path));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Invalid(bad))
        }
    }

    /// Cartesian product of the sweep axes, first axis outermost. A spec
    /// without a sweep yields itself once.
    pub fn expand(&self) -> Result<Vec<SweepPoint>> {
        let base = toml::Value::try_from(ExperimentSpec {
            sweep: Vec::new(),
            ..self.clone()
        })
        .map_err(|e| HarnessError::Parse(e.to_string()))?;
        let mut points = vec![(Vec::<String>::new(), base)];
        for axis in &self.sweep {
            let mut next = Vec::with_capacity(points.len() * axis.values.len());
            for (labels, tree) in &points {
                for v in &axis.values {
                    let mut tree = tree.clone();
                    set_path(&mut tree, &axis.path, v.clone())?;
                    let mut labels = labels.clone();
                    labels.push(format!("{}={}", axis.path, v));
                    next.push((labels, tree));
                }
            }
            points = next;
        }
        points
            .into_iter()
            .map(|(labels, tree)| {
                let spec: ExperimentSpec = tree.try_into().map_err(|e: toml::de::Error| HarnessError::Parse(e.to_string()))?;
                spec.validate()?;
                Ok(SweepPoint {
                    label: labels.join(","),
                    spec,
                })
            })
            .collect()
    }
}

/// Overwrites the value at a dotted path; every segment but the last must
/// already exist so that typos are reported instead of silently added.
fn set_path(tree: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let unknown = || HarnessError::Invalid(vec![format!("sweep path {path}: no such parameter")]);
    let mut node = tree;
    let segments: Vec<&str> = path.split('.').collect();
    let (last, parents) = segments.split_last().ok_or_else(unknown)?;
    for seg in parents {
        node = node.get_mut(*seg).ok_or_else(unknown)?;
    }
    let table = node.as_table_mut().ok_or_else(unknown)?;
    // Top-level keys may name an absent optional section; nested leaves
    // must already exist.
    if !table.contains_key(*last) && !parents.is_empty() {
        return Err(unknown());
    }
    table.insert(last.to_string(), value);
    Ok(())
}
