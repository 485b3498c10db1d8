//! Experiment report: aggregation plus `report.json` / `trials.csv` output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::stats::{mean, paired_t_test, sample_std, welch_t_test, TTest};
use super::{HarnessError, TrialConfig, TrialMetrics};
use crate::channel::RNG_ID;
use crate::controller::StrategyKind;

/// Column order of `trials.csv`.
pub const TRIALS_CSV_COLUMNS: [&str; 12] = [
    "arm",
    "trial",
    "strategy",
    "seed",
    "completed",
    "completion_time",
    "time_normal",
    "time_outage",
    "time_recovery",
    "outage_count",
    "buffer_high_water",
    "max_divergence",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// Index into the experiment's strategy list.
    pub arm: usize,
    /// Index of the seed within the stream; trials with equal index are paired.
    pub trial: usize,
    pub strategy: StrategyKind,
    pub seed: u64,
    pub metrics: TrialMetrics,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    arm: usize,
    trial: usize,
    strategy: StrategyKind,
    seed: u64,
    completed: bool,
    completion_time: f64,
    time_normal: f64,
    time_outage: f64,
    time_recovery: f64,
    outage_count: u32,
    buffer_high_water: usize,
    max_divergence: f64,
}

impl From<&TrialRecord> for CsvRow {
    fn from(r: &TrialRecord) -> Self {
        let m = &r.metrics;
        Self {
            arm: r.arm,
            trial: r.trial,
            strategy: r.strategy,
            seed: r.seed,
            completed: m.completed,
            completion_time: m.completion_time,
            time_normal: m.time_normal,
            time_outage: m.time_outage,
            time_recovery: m.time_recovery,
            outage_count: m.outage_count,
            buffer_high_water: m.buffer_high_water,
            max_divergence: m.max_divergence,
        }
    }
}

impl From<CsvRow> for TrialRecord {
    fn from(r: CsvRow) -> Self {
        Self {
            arm: r.arm,
            trial: r.trial,
            strategy: r.strategy,
            seed: r.seed,
            metrics: TrialMetrics {
                completed: r.completed,
                completion_time: r.completion_time,
                time_normal: r.time_normal,
                time_outage: r.time_outage,
                time_recovery: r.time_recovery,
                outage_count: r.outage_count,
                buffer_high_water: r.buffer_high_water,
                max_divergence: r.max_divergence,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: usize,
    pub strategy: StrategyKind,
    pub trials: usize,
    pub completed: usize,
    pub mean_completion_time: f64,
    pub std_completion_time: f64,
}

/// Candidate arm against the reference arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reference_arm: usize,
    pub candidate_arm: usize,
    /// `(mean_ref - mean_cand) / mean_ref`.
    pub reduction: f64,
    /// Mean over pairs of `(ref_i - cand_i) / ref_i`.
    pub mean_paired_reduction: f64,
    pub welch: Option<TTest>,
    pub paired: Option<TTest>,
}

impl Comparison {
    pub fn from_samples(reference_arm: usize, candidate_arm: usize, reference: &[f64], candidate: &[f64]) -> Self {
        let (mr, mc) = (mean(reference), mean(candidate));
        let per_pair: Vec<f64> = reference
            .iter()
            .zip(candidate)
            .map(|(r, c)| (r - c) / r)
            .collect();
        Self {
            reference_arm,
            candidate_arm,
            reduction: (mr - mc) / mr,
            mean_paired_reduction: mean(&per_pair),
            welch: welch_t_test(reference, candidate),
            paired: paired_t_test(reference, candidate),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rng: String,
    pub base_seed: u64,
    pub n_trials: usize,
    pub strategies: Vec<StrategyKind>,
    pub config: TrialConfig,
    pub trials: Vec<TrialRecord>,
    pub summaries: Vec<ArmSummary>,
    /// Second arm against the first, when there are at least two arms.
    pub comparison: Option<Comparison>,
    /// Trials that hit `max_duration` without finishing.
    pub timeouts: usize,
}

impl ExperimentReport {
    pub fn build(
        config: TrialConfig,
        base_seed: u64,
        n_trials: usize,
        strategies: &[StrategyKind],
        trials: Vec<TrialRecord>,
    ) -> Self {
        let times_of = |arm: usize| -> Vec<f64> {
            let mut rows: Vec<&TrialRecord> = trials.iter().filter(|t| t.arm == arm).collect();
            rows.sort_by_key(|t| t.trial);
            rows.iter().map(|t| t.metrics.completion_time).collect()
        };
        let summaries = strategies
            .iter()
            .enumerate()
            .map(|(arm, &strategy)| {
                let times = times_of(arm);
                ArmSummary {
                    arm,
                    strategy,
                    trials: times.len(),
                    completed: trials.iter().filter(|t| t.arm == arm && t.metrics.completed).count(),
                    mean_completion_time: mean(&times),
                    std_completion_time: sample_std(&times),
                }
            })
            .collect();
        let comparison = (strategies.len() >= 2).then(|| Comparison::from_samples(0, 1, &times_of(0), &times_of(1)));
        let timeouts = trials.iter().filter(|t| !t.metrics.completed).count();
        Self {
            rng: RNG_ID.to_string(),
            base_seed,
            n_trials,
            strategies: strategies.to_vec(),
            config,
            trials,
            summaries,
            comparison,
            timeouts,
        }
    }
}

/// Writes `trials.csv` rows (header always present).
pub fn write_trials_csv<W: std::io::Write>(trials: &[TrialRecord], out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRIALS_CSV_COLUMNS)?;
    for t in trials {
        w.serialize(CsvRow::from(t))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trials_csv(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize::<CsvRow>().collect::<Result<Vec<_>, _>>()?;
    Ok(rows.into_iter().map(TrialRecord::from).collect())
}

/// Writes `report.json` and `trials.csv` into `dir`, creating it if needed.
pub fn write_report(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<[PathBuf; 2], HarnessError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let json_path = dir.join("report.json");
    let csv_path = dir.join("trials.csv");
    fs::write(&json_path, serde_json::to_string_pretty(report)?)?;
    write_trials_csv(&report.trials, fs::File::create(&csv_path)?)?;
    Ok([json_path, csv_path])
}
