//! Acceptance criteria, one function each. Trained criteria run the shipped
//! experiment specs in `configs/`; runs shared between criteria are cached
//! for the lifetime of a [`Suite`].

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use hris::agents::{Activation, DenseNet};
use hris::channel::{FadingMode, Topology};
use hris::env::decode_action;
use hris::ris::{energy_gain, passive_amplitude};
use hris::{
    ActiveParams, Agent64, AgentConfig64, CMatrix64, EnergyLedger, Env64, EnvAction, EnvConfig64, PassiveParams, ResolvedMode, RisMode,
    Rng, StepRecord, C,
};
use ndarray::Array2;

use crate::config::ExperimentSpec;
use crate::error::{HarnessError, Result};
use crate::runner::{self, converged_slice, mean, RecordSink, RunOptions, RunSummary, SeedRun};

pub const SHIPPED: &[(&str, &str)] = &[
    ("default", include_str!("../configs/default.toml")),
    ("algo_sac", include_str!("../configs/algo_sac.toml")),
    ("algo_td3", include_str!("../configs/algo_td3.toml")),
    ("algo_ddpg", include_str!("../configs/algo_ddpg.toml")),
    ("algo_random", include_str!("../configs/algo_random.toml")),
    ("tau_sweep", include_str!("../configs/tau_sweep.toml")),
    ("tau_sweep_active", include_str!("../configs/tau_sweep_active.toml")),
    ("hybrid_dynamic", include_str!("../configs/hybrid_dynamic.toml")),
    ("hybrid_fixed", include_str!("../configs/hybrid_fixed.toml")),
    ("attack_invert", include_str!("../configs/attack_invert.toml")),
    ("attack_invert_defended", include_str!("../configs/attack_invert_defended.toml")),
    ("attack_random_scale", include_str!("../configs/attack_random_scale.toml")),
    ("elements_sweep", include_str!("../configs/elements_sweep.toml")),
];

pub fn shipped(name: &str) -> Result<ExperimentSpec> {
    let (_, text) = SHIPPED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| HarnessError::Invalid(vec![format!("no shipped spec named {name}")]))?;
    ExperimentSpec::from_toml(text)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriterionResult {
    pub id: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {:<22} {} ({:.1}s)", self.id, self.detail, self.seconds)
    }
}

type Check = fn(&Suite) -> Result<(bool, String)>;

/// `(id, check, wall-clock budget in seconds)`.
pub const CRITERIA: &[(&str, Check, f64)] = &[
    ("amplitude-bounds", amplitude_bounds, 1.0),
    ("gain-clamp", gain_clamp, 1.0),
    ("gradient-check", gradient_check, 30.0),
    ("brute-force-oracle", brute_force_oracle, 600.0),
    ("mode-fraction-trend", mode_fraction_trend, 300.0),
    ("energy-accounting", energy_accounting, 600.0),
    ("physics-trends", physics_trends, 600.0),
    ("algorithm-ordering", algorithm_ordering, 3600.0),
    // Reuses the SAC runs of the ordering criterion when run after it.
    ("constraint-satisfaction", constraint_satisfaction, 3600.0),
    ("dynamic-vs-fixed", dynamic_vs_fixed, 3600.0),
    ("attack-defense", attack_defense, 3600.0),
];

/// Shared state of one acceptance pass.
pub struct Suite {
    opts: RunOptions,
    cache: Mutex<HashMap<String, Vec<RunSummary>>>,
}

impl Default for Suite {
    fn default() -> Self {
        Self::new(None)
    }
}

impl Suite {
    pub fn new(workers: Option<usize>) -> Self {
        Self {
            opts: RunOptions { out: None, workers },
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Summaries of a shipped spec, computed once.
    pub fn runs(&self, name: &str) -> Result<Vec<RunSummary>> {
        if let Some(r) = self.cache.lock().unwrap().get(name) {
            return Ok(r.clone());
        }
        let summaries = runner::run(&shipped(name)?, &self.opts)?;
        self.cache.lock().unwrap().insert(name.to_string(), summaries.clone());
        Ok(summaries)
    }

    fn single(&self, name: &str) -> Result<RunSummary> {
        Ok(self.runs(name)?.remove(0))
    }

    pub fn run_one(&self, id: &str) -> Result<CriterionResult> {
        let (id, check, budget) = CRITERIA
            .iter()
            .find(|(n, _, _)| *n == id)
            .ok_or_else(|| HarnessError::Invalid(vec![format!("unknown criterion {id}")]))?;
        Ok(evaluate(id, *check, *budget, self))
    }

    /// Runs every criterion in order, handing each result to `report` as
    /// soon as it is known.
    pub fn run_all(&self, mut report: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
        CRITERIA
            .iter()
            .map(|(id, check, budget)| {
                let r = evaluate(id, *check, *budget, self);
                report(&r);
                r
            })
            .collect()
    }
}

fn evaluate(id: &'static str, check: Check, budget: f64, suite: &Suite) -> CriterionResult {
    let t0 = Instant::now();
    let (passed, mut detail) = match check(suite) {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    let seconds = t0.elapsed().as_secs_f64();
    if seconds > budget {
        detail.push_str(&format!("; over the {budget:.0}s budget"));
    }
    CriterionResult {
        id,
        passed: passed && seconds <= budget,
        detail,
        seconds,
    }
}

fn fmt_list(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

pub fn amplitude_bounds(_: &Suite) -> Result<(bool, String)> {
    let mut rng = Rng::new(0xa1);
    let n = 100_000;
    let mut violations = 0;
    for _ in 0..n {
        let p = PassiveParams {
            beta_min: rng.uniform(),
            exponent: rng.uniform_in(0.0, 5.0),
            offset_l: rng.uniform_in(-3.2, 3.2),
        };
        let eps = rng.uniform_in(-20.0, 20.0);
        let b = passive_amplitude(eps, &p);
        if !(b >= p.beta_min && b <= 1.0) {
            violations += 1;
        }
    }
    Ok((violations == 0, format!("{violations} violations over {n} draws")))
}

pub fn gain_clamp(_: &Suite) -> Result<(bool, String)> {
    let mut rng = Rng::new(0xa2);
    let ap = ActiveParams::<f64>::default();
    let n = 100_000;
    let mut violations = 0;
    for _ in 0..n {
        let r = 1 + rng.index(64);
        // Energies spanning empty to far beyond e_max per element.
        let scale = 10f64.powf(rng.uniform_in(-3.0, 3.0));
        let ledger = EnergyLedger::from_elements((0..r).map(|_| scale * rng.uniform()).collect());
        let a = energy_gain(&ledger, r, &ap);
        if !(a >= ap.alpha_min && a <= ap.alpha_max) {
            violations += 1;
        }
    }
    Ok((violations == 0, format!("{violations} violations over {n} ledgers")))
}

/// Every distinct (widths, output activation) network the default and
/// shipped agent configs build on their environments.
pub fn default_network_shapes() -> Result<Vec<(Vec<usize>, Activation)>> {
    let mut configs: Vec<(AgentConfig64, EnvConfig64)> = vec![
        (AgentConfig64::Sac(Default::default()), EnvConfig64::default()),
        (AgentConfig64::Td3(Default::default()), EnvConfig64::default()),
        (AgentConfig64::Ddpg(Default::default()), EnvConfig64::default()),
    ];
    for (name, _) in SHIPPED {
        let spec = shipped(name)?;
        for p in spec.expand()? {
            configs.push((p.spec.agent.clone(), p.spec.env_config(0)));
        }
    }
    let mut shapes = Vec::new();
    for (agent, env) in configs {
        let obs = env.layout().len;
        let act = env.action_dim();
        let nets = agent.network_shapes(obs, act);
        for (k, sizes) in nets.into_iter().enumerate() {
            // The second entry is always the critic; deterministic actors
            // squash with tanh, the SAC policy head is linear.
            let out = match (&agent, k) {
                (_, 1) | (AgentConfig64::Sac(_), _) => Activation::Identity,
                _ => Activation::Tanh,
            };
            if !shapes.contains(&(sizes.clone(), out)) {
                shapes.push((sizes, out));
            }
        }
    }
    Ok(shapes)
}

fn activate(a: Activation, z: &mut Array2<f64>) {
    match a {
        Activation::Identity => {}
        Activation::Tanh => z.mapv_inplace(f64::tanh),
        Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
    }
}

/// Largest relative error between backprop and central differences
/// (h = 1e-5) over every parameter of a random net of this shape.
///
/// A perturbed parameter of layer `k` only moves one column of that
/// layer's pre-activation, so the layers before `k` are evaluated once and
/// each difference replays layer `k` plus the suffix.
pub fn max_gradient_error(sizes: &[usize], output: Activation, seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let net = DenseNet::<f64>::new(sizes, Activation::Tanh, output, &mut rng)?;
    let x = Array2::from_shape_fn((2, sizes[0]), |_| rng.standard_normal());
    let c = Array2::from_shape_fn((2, *sizes.last().unwrap()), |_| rng.standard_normal());
    let tape = net.forward_train(x.view())?;
    let (grads, _) = net.backward(&tape, c.view())?;
    let h = 1e-5;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
    let mut worst: f64 = 0.0;
    let mut input = x;
    for (k, layer) in net.layers().iter().enumerate() {
        let suffix = if k + 1 < net.layers().len() {
            Some(DenseNet::from_layers(net.layers()[k + 1..].to_vec())?)
        } else {
            None
        };
        let z = input.dot(&layer.weights) + &layer.bias;
        let objective = |dz_col: usize, delta: &ndarray::Array1<f64>| -> Result<f64> {
            let mut zp = z.clone();
            let mut col = zp.column_mut(dz_col);
            col += delta;
            activate(layer.activation, &mut zp);
            let y = match &suffix {
                Some(s) => s.forward(zp.view())?,
                None => zp,
            };
            Ok((&y * &c).sum())
        };
        let (gw, gb) = &grads.layers[k];
        for i in 0..gw.nrows() {
            let shift = input.column(i).mapv(|v| v * h);
            for j in 0..gw.ncols() {
                let num = (objective(j, &shift)? - objective(j, &-&shift)?) / (2.0 * h);
                worst = worst.max(rel(gw[[i, j]], num));
            }
        }
        let shift = ndarray::Array1::from_elem(input.nrows(), h);
        for j in 0..gb.len() {
            let num = (objective(j, &shift)? - objective(j, &-&shift)?) / (2.0 * h);
            worst = worst.max(rel(gb[j], num));
        }
        let mut a = z;
        activate(layer.activation, &mut a);
        input = a;
    }
    Ok(worst)
}

pub fn gradient_check(_: &Suite) -> Result<(bool, String)> {
    let t0 = Instant::now();
    let shapes = default_network_shapes()?;
    let mut worst: f64 = 0.0;
    for (i, (sizes, out)) in shapes.iter().enumerate() {
        worst = worst.max(max_gradient_error(sizes, *out, 0x6c + i as u64)?);
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = worst <= 1e-4 && secs < 30.0;
    Ok((
        ok,
        format!("{} shapes, max rel error {worst:.2e} (<= 1e-4), {secs:.1}s (< 30s)", shapes.len()),
    ))
}

/// Frozen single-link scenario of the brute-force oracle.
pub fn oracle_env_config(seed: u64) -> EnvConfig64 {
    EnvConfig64 {
        topology: Topology {
            tx_antennas: 1,
            su_receivers: 1,
            ris_elements: 2,
            pu_receivers: 2,
        },
        mode: RisMode::Passive,
        fading: FadingMode::frozen(),
        seed,
        ..EnvConfig64::default()
    }
}

pub const PHASE_BINS: usize = 16;
pub const POWER_LEVELS: usize = 8;

/// Passive single-antenna rate recomputed with plain real arithmetic:
/// `log2(1 + p·|Σ_r h_b[r]·β(θ_r)·e^{jθ_r}·h_s[r]|² / σ²)`.
pub fn naive_single_link_rate(
    h_s: &[(f64, f64)],
    h_b: &[(f64, f64)],
    phases: &[f64],
    p: f64,
    pp: &PassiveParams<f64>,
    sigma_sq: f64,
) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for r in 0..phases.len() {
        let theta = phases[r];
        let beta = pp.beta_min + (1.0 - pp.beta_min) * ((((theta - pp.offset_l).sin() + 1.0) / 2.0).powf(pp.exponent));
        let (cr, ci) = (beta * theta.cos(), beta * theta.sin());
        // h_b · φ
        let (ar, ai) = (h_b[r].0 * cr - h_b[r].1 * ci, h_b[r].0 * ci + h_b[r].1 * cr);
        // · h_s
        re += ar * h_s[r].0 - ai * h_s[r].1;
        im += ar * h_s[r].1 + ai * h_s[r].0;
    }
    (1.0 + p * (re * re + im * im) / sigma_sq).log2()
}

/// Grid optimum on the env's current channel: best `(rate, power, phases)`
/// and the largest gap between the env's rate and the naive recomputation
/// over the whole grid.
pub fn grid_search(env: &Env64) -> Result<(f64, f64, Vec<f64>, f64)> {
    let cfg = env.config();
    let ch = env.channels();
    let r = cfg.topology.ris_elements;
    let h_s: Vec<(f64, f64)> = (0..r).map(|i| (ch.h_s.get(i, 0).re, ch.h_s.get(i, 0).im)).collect();
    let h_b: Vec<(f64, f64)> = (0..r).map(|i| (ch.h_b[0].get(i, 0).re, ch.h_b[0].get(i, 0).im)).collect();
    let cap = env.cap();
    let mut best = (f64::NEG_INFINITY, 0.0, Vec::new());
    let mut max_gap: f64 = 0.0;
    let mut idx = vec![0usize; r];
    loop {
        let phases: Vec<f64> = idx.iter().map(|&m| std::f64::consts::TAU * m as f64 / PHASE_BINS as f64).collect();
        for k in 1..=POWER_LEVELS {
            let p = cap * k as f64 / POWER_LEVELS as f64;
            let g = CMatrix64::new(1, 1, vec![C::new(p.sqrt(), 0.0)])?;
            let rate = env.evaluate(&g, &phases)?.0.sum_rate;
            let naive = naive_single_link_rate(&h_s, &h_b, &phases, p, &cfg.passive, cfg.noise.sigma_b_sq);
            max_gap = max_gap.max((rate - naive).abs());
            if rate > best.0 {
                best = (rate, p, phases.clone());
            }
        }
        // Odometer over the phase bins.
        let mut d = 0;
        while d < r {
            idx[d] += 1;
            if idx[d] < PHASE_BINS {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == r {
            break;
        }
    }
    Ok((best.0, best.1, best.2, max_gap))
}

pub const ORACLE_STEPS: u64 = 5_000;

/// Trains SAC on the frozen oracle channel and returns `(greedy rate,
/// grid optimum, naive gap)`.
pub fn oracle_seed(seed: u64) -> Result<(f64, f64, f64)> {
    let sac = shipped("algo_sac")?.agent;
    let mut env = Env64::new(oracle_env_config(seed))?;
    let (opt, _, _, gap) = grid_search(&env)?;
    let mut agent = Agent64::new(&sac, env.obs_dim(), env.action_dim(), seed)?;
    let mut obs = env.observation();
    for t in 0..ORACLE_STEPS {
        let x = env.normalize(&obs);
        let a = agent.act(&x, t)?;
        let out = env.step(&EnvAction(a.clone()))?;
        let next = env.normalize(&out.observation);
        agent.remember(hris::Transition {
            obs: x,
            action: a,
            reward: out.reward,
            next_obs: next,
            step: t,
        });
        agent.learn(t)?;
        obs = out.observation;
    }
    let greedy = agent.act_greedy(&env.normalize(&obs))?;
    let (g, phases) = decode_action(
        &EnvAction(greedy),
        env.cap(),
        &env.config().topology,
        env.config().beamformer_mapping,
    )?;
    let rate = env.evaluate(&g, &phases)?.0.sum_rate;
    Ok((rate, opt, gap))
}

pub fn brute_force_oracle(_: &Suite) -> Result<(bool, String)> {
    let seeds: Vec<u64> = (0..5).collect();
    let results = seeds.iter().map(|&s| oracle_seed(s)).collect::<Result<Vec<_>>>()?;
    let gap = results.iter().map(|r| r.2).fold(0.0, f64::max);
    let ratios: Vec<f64> = results.iter().map(|r| r.0 / r.1).collect();
    let hits = ratios.iter().filter(|&&q| q >= 0.9).count();
    let ok = gap <= 1e-10 && hits >= 4;
    Ok((
        ok,
        format!(
            "naive gap {gap:.1e} (<= 1e-10); SAC/optimum {} -> {hits}/5 >= 0.9 (need 4)",
            fmt_list(&ratios)
        ),
    ))
}

/// Per-seed values of `field` for each sweep point of a shipped spec.
fn per_seed(runs: &[RunSummary], field: impl Fn(&runner::SeedSummary) -> f64) -> Vec<Vec<f64>> {
    runs.iter().map(|r| r.seeds.iter().map(&field).collect()).collect()
}

pub fn mode_fraction_trend(suite: &Suite) -> Result<(bool, String)> {
    let runs = suite.runs("tau_sweep")?;
    let fractions = per_seed(&runs, |s| s.active_fraction);
    let n_seeds = fractions[0].len();
    let mut ok = true;
    for k in 0..n_seeds {
        let trend: Vec<f64> = fractions.iter().map(|f| f[k]).collect();
        ok &= strictly_decreasing(&trend);
        ok &= trend[0] > 0.8;
    }
    let means: Vec<f64> = runs.iter().map(|r| r.aggregate.active_fraction).collect();
    Ok((
        ok,
        format!(
            "active fraction at tau 10/30/40/50 = {} (strictly decreasing on every seed, tau=10 > 0.8)",
            fmt_list(&means)
        ),
    ))
}

/// Reads a step log back into records.
pub fn read_step_log(path: &Path) -> Result<Vec<StepRecord>> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    std::io::BufReader::new(file)
        .lines()
        .map(|l| {
            let l = l.map_err(|e| HarnessError::io(path, e))?;
            serde_json::from_str(&l).map_err(|e| HarnessError::artifact(path, e))
        })
        .collect()
}

/// Largest gap between a written summary and the same statistics replayed
/// from its step logs.
pub fn replay_gap(dir: &Path, summary: &RunSummary) -> Result<f64> {
    let mut gap: f64 = 0.0;
    for s in &summary.seeds {
        let steps = read_step_log(&runner::seed_dir(dir, s.seed).join(runner::JsonlSink::STEPS))?;
        let rewards: Vec<f64> = steps.iter().map(|r| r.reward).collect();
        let energy: Vec<f64> = steps.iter().map(|r| r.energy_j).collect();
        let rates: Vec<f64> = steps.iter().map(|r| r.sum_rate).collect();
        let active = steps.iter().filter(|r| r.mode == ResolvedMode::Active).count() as f64 / steps.len() as f64;
        for (a, b) in [
            (mean(&energy), s.mean_energy),
            (mean(&rates), s.mean_sum_rate),
            (mean(converged_slice(&rewards)), s.converged_mean),
            (active, s.active_fraction),
            (steps.len() as f64, s.steps as f64),
        ] {
            gap = gap.max((a - b).abs());
        }
    }
    Ok(gap)
}

pub fn energy_accounting(suite: &Suite) -> Result<(bool, String)> {
    let hybrid = suite.runs("tau_sweep")?;
    let active = suite.runs("tau_sweep_active")?;
    let e_h: Vec<f64> = hybrid.iter().map(|r| r.aggregate.mean_energy).collect();
    let e_a: Vec<f64> = active.iter().map(|r| r.aggregate.mean_energy).collect();
    let savings: Vec<f64> = e_h.iter().zip(&e_a).map(|(h, a)| 1.0 - h / a).collect();
    let hybrid_le = e_h.iter().zip(&e_a).all(|(h, a)| h <= a);
    let per_step_active: Vec<f64> = active.iter().flat_map(|r| r.seeds.iter().map(|s| s.mean_energy)).collect();
    let bracket = per_step_active.iter().all(|e| (0.28..=0.44).contains(e));

    // Log replay on the reference threshold for both surfaces.
    let tmp = tempfile::tempdir().map_err(|e| HarnessError::io(std::env::temp_dir(), e))?;
    let mut gap: f64 = 0.0;
    let mut replayed = Vec::new();
    for name in ["tau_sweep", "tau_sweep_active"] {
        let mut spec = shipped(name)?;
        spec.sweep.clear();
        spec.name = name.to_string();
        let out = runner::run(
            &spec,
            &RunOptions {
                out: Some(tmp.path().to_path_buf()),
                workers: suite.opts.workers,
            },
        )?
        .remove(0);
        let dir = runner::point_dir(tmp.path(), &spec.name, "");
        let written = RunSummary::read(&dir)?;
        gap = gap.max(replay_gap(&dir, &written)?);
        gap = gap.max((written.aggregate.mean_energy - out.aggregate.mean_energy).abs());
        let energy: Vec<f64> = written
            .seeds
            .iter()
            .map(|s| {
                read_step_log(&runner::seed_dir(&dir, s.seed).join(runner::JsonlSink::STEPS))
                    .map(|l| mean(&l.iter().map(|r| r.energy_j).collect::<Vec<_>>()))
            })
            .collect::<Result<_>>()?;
        replayed.push((mean(&energy), out.aggregate.mean_energy));
    }
    let savings_replayed = 1.0 - replayed[0].0 / replayed[1].0;
    let savings_summary = 1.0 - replayed[0].1 / replayed[1].1;
    gap = gap.max((savings_replayed - savings_summary).abs());

    let ok = hybrid_le && strictly_increasing(&savings) && bracket && gap <= 1e-9;
    Ok((
        ok,
        format!(
            "savings at tau 10/30/40/50 = {} (strictly increasing), hybrid <= active: {hybrid_le}, active J/step in [{:.3}, {:.3}] (within [0.28, 0.44]), replay gap {gap:.1e}",
            fmt_list(&savings),
            per_step_active.iter().cloned().fold(f64::INFINITY, f64::min),
            per_step_active.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        ),
    ))
}

struct TrendSink {
    caps: Vec<f64>,
}

impl RecordSink for TrendSink {
    fn record(&mut self, step: &StepRecord, _: &runner::PipelineRecord) -> Result<()> {
        self.caps.push(step.cap);
        Ok(())
    }
}

pub const TREND_STEPS: u64 = 10_000;
pub const TREND_SEEDS: u64 = 5;

/// Mean sum rate and mean power cap of a random policy, averaged over the
/// trend seeds.
pub fn random_policy_means(edit: impl Fn(&mut ExperimentSpec)) -> Result<(f64, f64)> {
    let mut spec = ExperimentSpec {
        agent: AgentConfig64::Random,
        total_steps: TREND_STEPS,
        ..ExperimentSpec::default()
    };
    edit(&mut spec);
    spec.validate()?;
    let mut rates = Vec::new();
    let mut caps = Vec::new();
    for seed in 0..TREND_SEEDS {
        let mut run = SeedRun::new(&spec, seed)?;
        let mut sink = TrendSink { caps: Vec::new() };
        run.run_until(TREND_STEPS, &mut sink)?;
        rates.push(run.summary(spec.window).mean_sum_rate);
        caps.push(mean(&sink.caps));
    }
    Ok((mean(&rates), mean(&caps)))
}

pub fn physics_trends(suite: &Suite) -> Result<(bool, String)> {
    let by_r: Vec<f64> = suite
        .runs("elements_sweep")?
        .iter()
        .map(|r| mean(&r.seeds.iter().map(|s| s.mean_sum_rate).collect::<Vec<_>>()))
        .collect();
    let by_kappa: Vec<f64> = [1, 4]
        .iter()
        .map(|&k| {
            random_policy_means(|s| {
                s.env.cascade.kappa_s = k;
                s.env.cascade.kappa_b = k;
            })
            .map(|m| m.0)
        })
        .collect::<Result<_>>()?;
    let by_w: Vec<(f64, f64)> = [1, 2, 4]
        .iter()
        .map(|&w| random_policy_means(|s| s.env.topology.pu_receivers = w))
        .collect::<Result<_>>()?;
    let caps: Vec<f64> = by_w.iter().map(|m| m.1).collect();
    let ok = strictly_increasing(&by_r) && strictly_decreasing(&by_kappa) && caps.windows(2).all(|w| w[1] <= w[0]);
    Ok((
        ok,
        format!(
            "sum rate vs R 4/16/30 = {} (increasing); vs kappa 1/4 = {} (decreasing); mean cap vs W 1/2/4 = {} (non-increasing)",
            fmt_list(&by_r),
            fmt_list(&by_kappa),
            fmt_list(&caps)
        ),
    ))
}

pub fn algorithm_ordering(suite: &Suite) -> Result<(bool, String)> {
    let sac = suite.single("algo_sac")?.aggregate.converged_mean;
    let td3 = suite.single("algo_td3")?.aggregate.converged_mean;
    let ddpg = suite.single("algo_ddpg")?.aggregate.converged_mean;
    let random = suite.single("algo_random")?.aggregate.converged_mean;
    let ratio = sac / random;
    let ok = sac > random && ratio >= 1.2 && td3 > random && ddpg > random;
    let order = sac >= td3 && td3 >= ddpg;
    Ok((
        ok,
        format!("converged SAC {sac:.4}, TD3 {td3:.4}, DDPG {ddpg:.4}, Random {random:.4}; SAC/Random {ratio:.3} (need >= 1.2); SAC >= TD3 >= DDPG: {order} (reported only)"),
    ))
}

pub fn constraint_satisfaction(suite: &Suite) -> Result<(bool, String)> {
    let sac = suite.single("algo_sac")?;
    let steps: u64 = sac.seeds.iter().map(|s| s.steps).sum();
    let v = sac.aggregate.violations;
    Ok((
        v == 0 && sac.total_steps == 20_000,
        format!(
            "{v} power-cap violations over {} SAC runs x {} steps ({steps} steps)",
            sac.seeds.len(),
            sac.total_steps
        ),
    ))
}

/// `(mean of run − baseline, per-seed differences)` paired by seed id.
fn paired(run: &RunSummary, baseline: &RunSummary) -> (f64, Vec<f64>) {
    let d = crate::compare::paired_differences(run, baseline);
    (mean(&d), d)
}

pub fn dynamic_vs_fixed(suite: &Suite) -> Result<(bool, String)> {
    let dynamic = suite.single("hybrid_dynamic")?;
    let fixed = suite.single("hybrid_fixed")?;
    let (m, d) = paired(&dynamic, &fixed);
    Ok((
        m >= 0.0 && d.len() >= 5,
        format!(
            "dynamic {:.4} vs fixed {:.4}; paired mean diff {m:.4} over {} seeds (need >= 0)",
            dynamic.aggregate.converged_mean,
            fixed.aggregate.converged_mean,
            d.len()
        ),
    ))
}

pub fn attack_defense(suite: &Suite) -> Result<(bool, String)> {
    let clean = suite.single("algo_sac")?;
    let attacked = suite.single("attack_invert")?;
    let defended = suite.single("attack_invert_defended")?;
    let (_, drop) = paired(&attacked, &clean);
    let (recovery, rec) = paired(&defended, &attacked);
    let degraded = drop.len() >= 5 && drop.iter().all(|&d| d < 0.0);
    let ok = degraded && recovery > 0.0 && rec.len() >= 5;
    Ok((
        ok,
        format!(
            "clean {:.4}, attacked {:.4}, defended {:.4}; attacked - clean per seed {} (all < 0); defended - attacked paired mean {recovery:.4} (> 0)",
            clean.aggregate.converged_mean,
            attacked.aggregate.converged_mean,
            defended.aggregate.converged_mean,
            fmt_list(&drop)
        ),
    ))
}
