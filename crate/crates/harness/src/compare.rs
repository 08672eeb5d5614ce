//! Side-by-side tables of finished runs.
//!
//! The first run is the baseline. Every other run is paired with it seed by
//! seed on the converged mean; the table reports the mean paired
//! difference, its standard error and the t statistic.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::runner::{mean, RunSummary};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub run: String,
    pub agent: String,
    pub seeds: usize,
    pub steps: u64,
    pub converged_mean: f64,
    pub converged_std: f64,
    pub active_fraction: f64,
    pub mean_energy: f64,
    /// `1 − E_run / E_baseline`.
    pub energy_savings: f64,
    pub violations: u64,
    pub paired_seeds: usize,
    pub diff_mean: f64,
    pub diff_stderr: f64,
    pub t_stat: f64,
}

/// Converged-mean differences `run − baseline` over the seeds both share.
pub fn paired_differences(run: &RunSummary, baseline: &RunSummary) -> Vec<f64> {
    run.seeds
        .iter()
        .filter_map(|s| baseline.seed(s.seed).map(|b| s.converged_mean - b.converged_mean))
        .collect()
}

/// Mean, standard error and t statistic of a sample of differences. With
/// fewer than two values the spread is undefined and reported as NaN.
pub fn difference_stats(diffs: &[f64]) -> (f64, f64, f64) {
    let m = mean(diffs);
    if diffs.len() < 2 {
        return (m, f64::NAN, f64::NAN);
    }
    let n = diffs.len() as f64;
    let var = diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let t = if se > 0.0 {
        m / se
    } else if m == 0.0 {
        0.0
    } else {
        m.signum() * f64::INFINITY
    };
    (m, se, t)
}

pub fn compare(runs: &[(String, RunSummary)]) -> Result<Vec<ComparisonRow>> {
    let (_, base) = runs.first().ok_or_else(|| HarnessError::Alignment("no runs to compare".into()))?;
    for (name, r) in runs {
        if r.total_steps != base.total_steps {
            return Err(HarnessError::Alignment(format!(
                "{name} has {} steps but the baseline has {}",
                r.total_steps, base.total_steps
            )));
        }
    }
    runs.iter()
        .map(|(name, r)| {
            let diffs = paired_differences(r, base);
            if diffs.is_empty() {
                return Err(HarnessError::Alignment(format!("{name} shares no seeds with the baseline")));
            }
            let (diff_mean, diff_stderr, t_stat) = difference_stats(&diffs);
            Ok(ComparisonRow {
                run: name.clone(),
                agent: r.agent.to_string(),
                seeds: r.seeds.len(),
                steps: r.total_steps,
                converged_mean: r.aggregate.converged_mean,
                converged_std: r.aggregate.converged_std,
                active_fraction: r.aggregate.active_fraction,
                mean_energy: r.aggregate.mean_energy,
                energy_savings: 1.0 - r.aggregate.mean_energy / base.aggregate.mean_energy,
                violations: r.aggregate.violations,
                paired_seeds: diffs.len(),
                diff_mean,
                diff_stderr,
                t_stat,
            })
        })
        .collect()
}

/// Every directory at or below `root` holding a `summary.json`, sorted.
pub fn find_runs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if dir.join(RunSummary::FILE).is_file() {
            found.push(dir.clone());
        }
        let entries = std::fs::read_dir(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| HarnessError::io(&dir, e))?;
            if entry.path().is_dir() && !entry.file_name().to_string_lossy().starts_with("seed-") {
                stack.push(entry.path());
            }
        }
    }
    found.sort();
    Ok(found)
}

/// Loads the runs under `dirs` (in argument order), writes the table to
/// `out` and the aligned mean curves next to it as `<stem>_curves.csv`.
pub fn compare_dirs(dirs: &[PathBuf], out: &Path) -> Result<Vec<ComparisonRow>> {
    let mut runs = Vec::new();
    for d in dirs {
        let found = find_runs(d)?;
        if found.is_empty() {
            return Err(HarnessError::artifact(d, "no summary.json found"));
        }
        for f in found {
            runs.push((f.display().to_string(), RunSummary::read(&f)?));
        }
    }
    let rows = compare(&runs)?;
    write_rows(&rows, out)?;
    write_curves(&runs, &curves_path(out))?;
    Ok(rows)
}

pub fn curves_path(table: &Path) -> PathBuf {
    let stem = table.file_stem().map_or("table".into(), |s| s.to_string_lossy().into_owned());
    table.with_file_name(format!("{stem}_curves.csv"))
}

fn write_rows(rows: &[ComparisonRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::artifact(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::artifact(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn write_curves(runs: &[(String, RunSummary)], path: &Path) -> Result<()> {
    let curves: Vec<Vec<f64>> = runs.iter().map(|(_, r)| r.mean_curve()).collect();
    let n = curves.iter().map(Vec::len).min().unwrap_or(0);
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::artifact(path, e))?;
    let mut header = vec!["step".to_string()];
    header.extend(runs.iter().map(|(name, _)| name.clone()));
    w.write_record(&header).map_err(|e| HarnessError::artifact(path, e))?;
    for i in 0..n {
        let mut row = vec![i.to_string()];
        row.extend(curves.iter().map(|c| c[i].to_string()));
        w.write_record(&row).map_err(|e| HarnessError::artifact(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::{Aggregate, SeedSummary};
    use hris::AgentKind;

    fn seed(seed: u64, conv: f64) -> SeedSummary {
        SeedSummary {
            seed,
            steps: 10,
            converged_mean: conv,
            mean_reward: conv,
            mean_sum_rate: conv,
            active_fraction: 0.5,
            passive_fraction: 0.5,
            mean_energy: 1.0,
            violations: 0,
            accepted: 10,
            discarded: 0,
            curve: vec![conv; 10],
        }
    }

    fn summary(steps: u64, seeds: Vec<SeedSummary>) -> RunSummary {
        RunSummary {
            name: "x".into(),
            label: String::new(),
            agent: AgentKind::Random,
            total_steps: steps,
            window: 5,
            aggregate: Aggregate::from_seeds(&seeds),
            seeds,
            wall_clock_s: 0.0,
        }
    }

    #[test]
    fn self_comparison_has_zero_difference() {
        let r = summary(10, vec![seed(0, 1.0), seed(1, 2.0), seed(2, 1.5)]);
        let rows = compare(&[("a".into(), r.clone()), ("a".into(), r)]).unwrap();
        assert_eq!(rows[1].diff_mean, 0.0);
        assert_eq!(rows[1].t_stat, 0.0);
        assert_eq!(rows[1].energy_savings, 0.0);
    }

    #[test]
    fn pairs_by_seed_id() {
        let base = summary(10, vec![seed(0, 1.0), seed(1, 2.0), seed(5, 9.0)]);
        let other = summary(10, vec![seed(1, 2.5), seed(0, 1.5), seed(7, 0.0)]);
        assert_eq!(paired_differences(&other, &base), vec![0.5, 0.5]);
        let (m, se, t) = difference_stats(&[0.5, 0.5]);
        assert_eq!((m, se), (0.5, 0.0));
        assert_eq!(t, f64::INFINITY);
        let (m, se, t) = difference_stats(&[1.0, 3.0]);
        assert_eq!((m, se, t), (2.0, 1.0, 2.0));
    }

    #[test]
    fn mismatched_steps_fail_alignment() {
        let a = summary(10, vec![seed(0, 1.0)]);
        let b = summary(20, vec![seed(0, 1.0)]);
        assert!(matches!(
            compare(&[("a".into(), a.clone()), ("b".into(), b)]),
            Err(HarnessError::Alignment(_))
        ));
        let c = summary(10, vec![seed(3, 1.0)]);
        assert!(matches!(
            compare(&[("a".into(), a), ("c".into(), c)]),
            Err(HarnessError::Alignment(_))
        ));
    }

    #[test]
    fn curves_file_sits_next_to_table() {
        assert_eq!(
            curves_path(Path::new("/tmp/out/table.csv")),
            PathBuf::from("/tmp/out/table_curves.csv")
        );
    }
}
