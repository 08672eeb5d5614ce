//! Per-seed training loops and run artifacts.
//!
//! Layout of a run directory:
//!
//! ```text
//! <out>/<name>/[<sweep label>/]
//!     spec.toml  summary.json  curves.csv  timing.json
//!     seed-<k>/steps.jsonl  seed-<k>/pipeline.jsonl  seed-<k>/checkpoint.bin
//! ```

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use hris::agents::checkpoint;
use hris::{
    Agent64, AgentKind, Env64, EnvAction, EnvObservation, ResolvedMode, RewardPipeline64, RewardPipelineRecord, StepRecord, Transition,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentSpec, SweepPoint};
use crate::error::{HarnessError, Result};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "HRIS_WORKERS";

/// Slack on `tr(GGᴴ) ≤ cap` before a step counts as a violation.
pub const POWER_TOLERANCE: f64 = 1e-9;

pub type PipelineRecord = RewardPipelineRecord<f64>;

pub trait RecordSink {
    fn record(&mut self, step: &StepRecord, pipeline: &PipelineRecord) -> Result<()>;

    fn flush(&mut self) -> Result<()> {
        Ok(())
    }
}

pub struct NullSink;

impl RecordSink for NullSink {
    fn record(&mut self, _: &StepRecord, _: &PipelineRecord) -> Result<()> {
        Ok(())
    }
}

#[derive(Default)]
pub struct MemorySink {
    pub steps: Vec<StepRecord>,
    pub pipeline: Vec<PipelineRecord>,
}

impl RecordSink for MemorySink {
    fn record(&mut self, step: &StepRecord, pipeline: &PipelineRecord) -> Result<()> {
        self.steps.push(step.clone());
        self.pipeline.push(pipeline.clone());
        Ok(())
    }
}

/// Writes `steps.jsonl` and `pipeline.jsonl` into a seed directory.
pub struct JsonlSink {
    steps: (PathBuf, BufWriter<File>),
    pipeline: (PathBuf, BufWriter<File>),
}

impl JsonlSink {
    pub const STEPS: &'static str = "steps.jsonl";
    pub const PIPELINE: &'static str = "pipeline.jsonl";

    pub fn create(dir: &Path) -> Result<Self> {
        Self::open(dir, None)
    }

    /// Reopens the logs of an interrupted run, dropping lines at or beyond
    /// step `keep`.
    pub fn resume(dir: &Path, keep: u64) -> Result<Self> {
        Self::open(dir, Some(keep))
    }

    fn open(dir: &Path, keep: Option<u64>) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let open = |name: &str| -> Result<(PathBuf, BufWriter<File>)> {
            let path = dir.join(name);
            let file = match keep {
                None => File::create(&path).map_err(|e| HarnessError::io(&path, e))?,
                Some(n) => {
                    truncate_lines(&path, n)?;
                    OpenOptions::new()
                        .append(true)
                        .open(&path)
                        .map_err(|e| HarnessError::io(&path, e))?
                }
            };
            Ok((path, BufWriter::new(file)))
        };
        Ok(Self {
            steps: open(Self::STEPS)?,
            pipeline: open(Self::PIPELINE)?,
        })
    }
}

fn truncate_lines(path: &Path, keep: u64) -> Result<()> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut kept = String::new();
    for line in BufReader::new(file).lines().take(keep as usize) {
        kept.push_str(&line.map_err(|e| HarnessError::io(path, e))?);
        kept.push('\n');
    }
    std::fs::write(path, kept).map_err(|e| HarnessError::io(path, e))
}

fn write_json_line<S: Serialize>(target: &mut (PathBuf, BufWriter<File>), value: &S) -> Result<()> {
    serde_json::to_writer(&mut target.1, value).map_err(|e| HarnessError::artifact(&target.0, e))?;
    target.1.write_all(b"\n").map_err(|e| HarnessError::io(&target.0, e))
}

impl RecordSink for JsonlSink {
    fn record(&mut self, step: &StepRecord, pipeline: &PipelineRecord) -> Result<()> {
        write_json_line(&mut self.steps, step)?;
        write_json_line(&mut self.pipeline, pipeline)
    }

    fn flush(&mut self) -> Result<()> {
        self.steps.1.flush().map_err(|e| HarnessError::io(&self.steps.0, e))?;
        self.pipeline.1.flush().map_err(|e| HarnessError::io(&self.pipeline.0, e))
    }
}

/// Complete state of one seed's run; checkpoints serialize exactly this.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedRun {
    seed: u64,
    env: Env64,
    agent: Agent64,
    pipeline: RewardPipeline64,
    obs: EnvObservation<f64>,
    rewards: Vec<f64>,
    sum_rate_total: f64,
    energy_total: f64,
    active_steps: u64,
    violations: u64,
    accepted: u64,
    discarded: u64,
}

impl SeedRun {
    pub fn new(spec: &ExperimentSpec, seed: u64) -> Result<Self> {
        let env = Env64::new(spec.env_config(seed))?;
        let agent = Agent64::new(&spec.agent, env.obs_dim(), env.action_dim(), seed)?;
        let pipeline = RewardPipeline64::new(spec.attack_config(), spec.defense_config(), seed)?;
        Ok(Self {
            seed,
            obs: env.observation(),
            env,
            agent,
            pipeline,
            rewards: Vec::with_capacity(spec.total_steps as usize),
            sum_rate_total: 0.0,
            energy_total: 0.0,
            active_steps: 0,
            violations: 0,
            accepted: 0,
            discarded: 0,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Steps completed so far.
    pub fn steps_done(&self) -> u64 {
        self.rewards.len() as u64
    }

    pub fn env(&self) -> &Env64 {
        &self.env
    }

    pub fn agent(&self) -> &Agent64 {
        &self.agent
    }

    pub fn pipeline(&self) -> &RewardPipeline64 {
        &self.pipeline
    }

    /// True rewards of every completed step.
    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// One environment step: act, observe, poison/filter the reward, store
    /// the transition if the defense keeps it, then learn.
    pub fn step(&mut self) -> Result<(StepRecord, PipelineRecord)> {
        let t = self.env.step_index();
        let x = self.env.normalize(&self.obs);
        let action = self.agent.act(&x, t)?;
        let out = self.env.step(&EnvAction(action.clone()))?;
        let record = self.pipeline.process(out.reward);
        match record.decision.accepted() {
            Some(r) => {
                let next_obs = self.env.normalize(&out.observation);
                self.agent.remember(Transition {
                    obs: x,
                    action,
                    reward: r,
                    next_obs,
                    step: t,
                });
                self.accepted += 1;
            }
            None => self.discarded += 1,
        }
        self.agent.learn(t)?;

        let info = &out.info;
        self.rewards.push(out.reward);
        self.sum_rate_total += info.sum_rate;
        self.energy_total += info.energy_consumed;
        if info.resolved_mode == ResolvedMode::Active {
            self.active_steps += 1;
        }
        if info.tx_power > info.cap + POWER_TOLERANCE {
            self.violations += 1;
        }
        let step = StepRecord::from(&out);
        self.obs = out.observation;
        Ok((step, record))
    }

    pub fn run_until(&mut self, end: u64, sink: &mut dyn RecordSink) -> Result<()> {
        while self.steps_done() < end {
            let (step, pipeline) = self.step()?;
            sink.record(&step, &pipeline)?;
        }
        sink.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(checkpoint::save(path, self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(checkpoint::load(path)?)
    }

    pub fn summary(&self, window: usize) -> SeedSummary {
        let n = self.rewards.len();
        let nf = n.max(1) as f64;
        let tail = converged_slice(&self.rewards);
        SeedSummary {
            seed: self.seed,
            steps: n as u64,
            converged_mean: mean(tail),
            mean_reward: mean(&self.rewards),
            mean_sum_rate: self.sum_rate_total / nf,
            active_fraction: self.active_steps as f64 / nf,
            passive_fraction: (n as u64 - self.active_steps) as f64 / nf,
            mean_energy: self.energy_total / nf,
            violations: self.violations,
            accepted: self.accepted,
            discarded: self.discarded,
            curve: moving_average(&self.rewards, window),
        }
    }
}

/// The last 10% of a series (at least one element) that "converged"
/// statistics average over.
pub fn converged_slice(values: &[f64]) -> &[f64] {
    let k = (values.len() / 10).max(1).min(values.len());
    &values[values.len() - k..]
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Trailing mean over up to `window` values; early entries average what
/// is available.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            mean(&values[lo..=i])
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub steps: u64,
    /// Mean true reward over the last 10% of steps.
    pub converged_mean: f64,
    pub mean_reward: f64,
    pub mean_sum_rate: f64,
    pub active_fraction: f64,
    pub passive_fraction: f64,
    /// Mean RIS energy per step (J).
    pub mean_energy: f64,
    pub violations: u64,
    /// Rewards the defense passed to the agent / discarded.
    pub accepted: u64,
    pub discarded: u64,
    /// Moving-average reward per step; stored in `curves.csv`.
    #[serde(skip)]
    pub curve: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub converged_mean: f64,
    /// Sample standard deviation across seeds (0 for a single seed).
    pub converged_std: f64,
    pub active_fraction: f64,
    pub mean_energy: f64,
    pub violations: u64,
}

impl Aggregate {
    pub fn from_seeds(seeds: &[SeedSummary]) -> Self {
        let conv: Vec<f64> = seeds.iter().map(|s| s.converged_mean).collect();
        let m = mean(&conv);
        let std = if conv.len() > 1 {
            (conv.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (conv.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            converged_mean: m,
            converged_std: std,
            active_fraction: mean(&seeds.iter().map(|s| s.active_fraction).collect::<Vec<_>>()),
            mean_energy: mean(&seeds.iter().map(|s| s.mean_energy).collect::<Vec<_>>()),
            violations: seeds.iter().map(|s| s.violations).sum(),
        }
    }
}

/// Results of one sweep point over all seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub label: String,
    pub agent: AgentKind,
    pub total_steps: u64,
    pub window: usize,
    pub seeds: Vec<SeedSummary>,
    pub aggregate: Aggregate,
    /// Summed per-seed wall-clock seconds; kept out of `summary.json` so
    /// the file is reproducible, and written to `timing.json` instead.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl RunSummary {
    pub const FILE: &'static str = "summary.json";
    pub const CURVES: &'static str = "curves.csv";
    pub const TIMING: &'static str = "timing.json";
    pub const SPEC: &'static str = "spec.toml";

    pub fn seed(&self, seed: u64) -> Option<&SeedSummary> {
        self.seeds.iter().find(|s| s.seed == seed)
    }

    /// Per-step mean of the seeds' moving-average curves.
    pub fn mean_curve(&self) -> Vec<f64> {
        let n = self.seeds.iter().map(|s| s.curve.len()).min().unwrap_or(0);
        (0..n)
            .map(|i| mean(&self.seeds.iter().map(|s| s.curve[i]).collect::<Vec<_>>()))
            .collect()
    }

    pub fn write(&self, dir: &Path, spec: &ExperimentSpec) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let path = dir.join(Self::FILE);
        let json = serde_json::to_string_pretty(self).map_err(|e| HarnessError::artifact(&path, e))?;
        std::fs::write(&path, json + "\n").map_err(|e| HarnessError::io(&path, e))?;

        let path = dir.join(Self::SPEC);
        std::fs::write(&path, spec.to_toml()?).map_err(|e| HarnessError::io(&path, e))?;

        let path = dir.join(Self::TIMING);
        let timing = serde_json::json!({ "wall_clock_s": self.wall_clock_s });
        std::fs::write(&path, timing.to_string() + "\n").map_err(|e| HarnessError::io(&path, e))?;

        let path = dir.join(Self::CURVES);
        let mut w = csv::Writer::from_path(&path).map_err(|e| HarnessError::artifact(&path, e))?;
        let mut header = vec!["step".to_string()];
        header.extend(self.seeds.iter().map(|s| format!("seed_{}", s.seed)));
        header.push("mean".into());
        w.write_record(&header).map_err(|e| HarnessError::artifact(&path, e))?;
        for (i, m) in self.mean_curve().iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(self.seeds.iter().map(|s| s.curve[i].to_string()));
            row.push(m.to_string());
            w.write_record(&row).map_err(|e| HarnessError::artifact(&path, e))?;
        }
        w.flush().map_err(|e| HarnessError::io(&path, e))
    }

    /// Reads `summary.json` and refills the curves from `curves.csv`.
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(Self::FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        let mut summary: RunSummary = serde_json::from_str(&text).map_err(|e| HarnessError::artifact(&path, e))?;
        let path = dir.join(Self::CURVES);
        let mut r = csv::Reader::from_path(&path).map_err(|e| HarnessError::artifact(&path, e))?;
        for row in r.records() {
            let row = row.map_err(|e| HarnessError::artifact(&path, e))?;
            for (k, s) in summary.seeds.iter_mut().enumerate() {
                let v: f64 = row
                    .get(k + 1)
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| HarnessError::artifact(&path, "bad curve entry"))?;
                s.curve.push(v);
            }
        }
        Ok(summary)
    }
}

/// Where the artifacts of one seed live, if anywhere.
pub fn seed_dir(point_dir: &Path, seed: u64) -> PathBuf {
    point_dir.join(format!("seed-{seed}"))
}

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// Runs one seed to `spec.total_steps`, writing logs and checkpoints into
/// `dir` when given.
pub fn run_seed(spec: &ExperimentSpec, seed: u64, dir: Option<&Path>) -> Result<(SeedSummary, f64)> {
    let t0 = Instant::now();
    let mut run = SeedRun::new(spec, seed)?;
    let mut sink: Box<dyn RecordSink> = match dir {
        Some(d) => Box::new(JsonlSink::create(d)?),
        None => Box::new(NullSink),
    };
    drive(&mut run, spec, dir, sink.as_mut())?;
    Ok((run.summary(spec.window), t0.elapsed().as_secs_f64()))
}

/// Continues a seed from `dir/checkpoint.bin` (or an explicit snapshot),
/// truncating its logs to the snapshot's step count first.
pub fn resume_seed(spec: &ExperimentSpec, dir: &Path, snapshot: Option<&Path>) -> Result<SeedSummary> {
    let default = dir.join(CHECKPOINT_FILE);
    let mut run = SeedRun::load(snapshot.unwrap_or(&default))?;
    let mut sink = JsonlSink::resume(dir, run.steps_done())?;
    drive(&mut run, spec, Some(dir), &mut sink)?;
    Ok(run.summary(spec.window))
}

fn drive(run: &mut SeedRun, spec: &ExperimentSpec, dir: Option<&Path>, sink: &mut dyn RecordSink) -> Result<()> {
    let every = spec.checkpoint_every;
    while run.steps_done() < spec.total_steps {
        let next = run.steps_done().checked_div(every).map_or(spec.total_steps, |k| (k + 1) * every);
        run.run_until(next.min(spec.total_steps), sink)?;
        if let Some(d) = dir {
            if every > 0 && run.steps_done() < spec.total_steps {
                run.save(&d.join(format!("checkpoint-{:08}.bin", run.steps_done())))?;
            }
        }
    }
    if let Some(d) = dir {
        run.save(&d.join(CHECKPOINT_FILE))?;
    }
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Root output directory; nothing is written when `None`.
    pub out: Option<PathBuf>,
    /// Worker threads; falls back to `HRIS_WORKERS`, then to the number of
    /// available cores.
    pub workers: Option<usize>,
}

pub fn worker_count(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Directory of one sweep point under the run root.
pub fn point_dir(root: &Path, spec_name: &str, label: &str) -> PathBuf {
    let base = root.join(spec_name);
    if label.is_empty() {
        base
    } else {
        base.join(label.replace(['/', '\\'], "_"))
    }
}

/// Runs every sweep point and seed of `spec` in parallel; one summary per
/// point, in sweep order.
pub fn run(spec: &ExperimentSpec, opts: &RunOptions) -> Result<Vec<RunSummary>> {
    spec.validate()?;
    let points = spec.expand()?;
    let jobs: Vec<(usize, u64)> = points
        .iter()
        .enumerate()
        .flat_map(|(i, p)| p.spec.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let dirs: Vec<Option<PathBuf>> = points
        .iter()
        .map(|p| opts.out.as_ref().map(|root| point_dir(root, &spec.name, &p.label)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(opts.workers))
        .build()
        .map_err(|e| HarnessError::Parse(format!("thread pool: {e}")))?;
    let results: Vec<(usize, SeedSummary, f64)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, seed)| {
                let dir = dirs[i].as_ref().map(|d| seed_dir(d, seed));
                log::debug!("{} [{}] seed {seed}: start", spec.name, points[i].label);
                let (summary, secs) = run_seed(&points[i].spec, seed, dir.as_deref())?;
                log::info!(
                    "{} [{}] seed {seed}: converged {:.4} in {secs:.1}s",
                    spec.name,
                    points[i].label,
                    summary.converged_mean
                );
                Ok((i, summary, secs))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mine: Vec<_> = results.iter().filter(|r| r.0 == i).collect();
            let seeds: Vec<SeedSummary> = mine.iter().map(|r| r.1.clone()).collect();
            let summary = summarize(p, seeds, mine.iter().map(|r| r.2).sum());
            if let Some(d) = &dirs[i] {
                summary.write(d, &p.spec)?;
            }
            Ok(summary)
        })
        .collect()
}

fn summarize(point: &SweepPoint, seeds: Vec<SeedSummary>, wall_clock_s: f64) -> RunSummary {
    RunSummary {
        name: point.spec.name.clone(),
        label: point.label.clone(),
        agent: point.spec.agent.kind(),
        total_steps: point.spec.total_steps,
        window: point.spec.window,
        aggregate: Aggregate::from_seeds(&seeds),
        seeds,
        wall_clock_s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hris::AgentConfig64;
    use proptest::prelude::*;

    fn small(agent: AgentConfig64) -> ExperimentSpec {
        ExperimentSpec {
            seeds: vec![0, 1],
            total_steps: 300,
            window: 20,
            agent,
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
        assert_eq!(moving_average(&[2.0, 4.0], 10), vec![2.0, 3.0]);
        assert!(moving_average(&[], 3).is_empty());
    }

    #[test]
    fn converged_slice_is_last_tenth() {
        let v: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(converged_slice(&v), &v[90..]);
        assert_eq!(converged_slice(&v[..5]), &[4.0]);
    }

    proptest! {
        #[test]
        fn moving_average_stays_within_window_range(values in prop::collection::vec(-10.0f64..10.0, 1..60), w in 1usize..12) {
            let ma = moving_average(&values, w);
            prop_assert_eq!(ma.len(), values.len());
            for (i, m) in ma.iter().enumerate() {
                let win = &values[(i + 1).saturating_sub(w)..=i];
                let lo = win.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = win.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(*m >= lo - 1e-12 && *m <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn summary_fractions_and_counts_are_consistent() {
        let spec = small(AgentConfig64::Random);
        let mut run = SeedRun::new(&spec, 4).unwrap();
        let mut sink = MemorySink::default();
        run.run_until(300, &mut sink).unwrap();
        let s = run.summary(spec.window);
        assert_eq!(s.steps, 300);
        assert!((s.active_fraction + s.passive_fraction - 1.0).abs() < 1e-12);
        assert_eq!(s.accepted + s.discarded, 300);
        assert_eq!(s.violations, 0);
        assert_eq!(s.curve.len(), 300);
        let active = sink.steps.iter().filter(|r| r.mode == ResolvedMode::Active).count();
        assert_eq!(s.active_fraction, active as f64 / 300.0);
        assert_eq!(sink.pipeline.iter().map(|p| p.t).collect::<Vec<_>>(), (0..300).collect::<Vec<_>>());
    }

    #[test]
    fn parallel_run_matches_serial_seeds() {
        let spec = small(AgentConfig64::Random);
        let summaries = run(
            &spec,
            &RunOptions {
                out: None,
                workers: Some(2),
            },
        )
        .unwrap();
        assert_eq!(summaries.len(), 1);
        for s in &summaries[0].seeds {
            let (serial, _) = run_seed(&spec, s.seed, None).unwrap();
            assert_eq!(&serial, s);
        }
    }

    #[test]
    fn worker_count_prefers_explicit_value() {
        assert_eq!(worker_count(Some(3)), 3);
        assert!(worker_count(None) >= 1);
    }
}
