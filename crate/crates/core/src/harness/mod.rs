//! Trial and experiment runner.
//!
//! A trial steps channel -> operator -> controller -> scenes at the servo
//! rate until the remote scene finishes the task or the time limit hits.
//! Experiments run paired trials (same seed, hence same outage schedule, for
//! every strategy) and compare completion times.

pub mod report;
pub mod stats;

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{generate_schedule, ChannelError, ChannelParams, ChannelStatus, OutageSchedule, RNG_ID};
use crate::controller::{Controller, ControllerConfig, ControllerError, ControllerOutput, StrategyKind, TeleopMode};
use crate::geometry::Pose;
use crate::operator::{Operator, OperatorParams};
use crate::scene::{scene_divergence, SceneError, SceneEvent, SceneLayout, SceneState};

pub use report::{write_report, read_trials_csv, ExperimentReport, TrialRecord};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid trial config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("writing report: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing report: {0}")]
    Json(#[from] serde_json::Error),
}

/// How the link timeline for a trial is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelModel {
    /// Sampled from the trial seed.
    Stochastic(ChannelParams),
    AlwaysUp,
    /// Fixed down intervals `[start, end)`, seconds.
    Scripted { down: Vec<[f64; 2]> },
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel::Stochastic(ChannelParams::default())
    }
}

impl ChannelModel {
    pub fn schedule(&self, horizon: f64, seed: u64) -> Result<OutageSchedule, ChannelError> {
        match self {
            ChannelModel::Stochastic(p) => Ok(generate_schedule(p, horizon, seed)),
            ChannelModel::AlwaysUp => Ok(OutageSchedule::always_up(horizon)),
            ChannelModel::Scripted { down } => {
                let pairs: Vec<(f64, f64)> = down.iter().map(|d| (d[0], d[1])).collect();
                OutageSchedule::from_down_intervals(horizon, &pairs)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialConfig {
    pub strategy: StrategyKind,
    pub seed: u64,
    /// Seconds of simulated time before a trial is declared timed out.
    pub max_duration: f64,
    pub channel: ChannelModel,
    pub controller: ControllerConfig,
    pub scene: SceneLayout,
    pub operator: OperatorParams,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            strategy: StrategyKind::Replay,
            seed: 0,
            max_duration: 600.0,
            channel: ChannelModel::default(),
            controller: ControllerConfig::default(),
            scene: SceneLayout::default(),
            operator: OperatorParams::default(),
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.max_duration > 0.0 && self.max_duration.is_finite()) {
            return Err(HarnessError::InvalidConfig("max_duration must be positive".into()));
        }
        self.controller.validate()?;
        self.scene.validate()?;
        self.operator.validate().map_err(HarnessError::InvalidConfig)?;
        if self.scene.jaw_max > self.controller.jaw_max || self.operator.jaw_open > self.controller.jaw_max {
            return Err(HarnessError::InvalidConfig("jaw values exceed controller jaw_max".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: TrialConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub completed: bool,
    /// Simulated time until the remote finished (or the time limit).
    pub completion_time: f64,
    pub time_normal: f64,
    pub time_outage: f64,
    pub time_recovery: f64,
    pub outage_count: u32,
    pub buffer_high_water: usize,
    /// Largest remote/twin divergence seen, meters.
    pub max_divergence: f64,
}

/// Accumulates per-tick mode durations and divergence; shared with live sessions.
#[derive(Debug, Clone, Default)]
pub struct MetricsRecorder {
    dt: f64,
    ticks: u64,
    normal: u64,
    outage: u64,
    recovery: u64,
    outage_count: u32,
    last_mode: Option<TeleopMode>,
    high_water: usize,
    max_divergence: f64,
}

impl MetricsRecorder {
    pub fn new(tick_rate: f64) -> Self {
        Self { dt: 1.0 / tick_rate, ..Default::default() }
    }

    pub fn record(&mut self, out: &ControllerOutput, divergence: f64) {
        self.ticks += 1;
        match out.mode {
            TeleopMode::Normal => self.normal += 1,
            TeleopMode::Outage => self.outage += 1,
            TeleopMode::Recovery => self.recovery += 1,
        }
        if out.mode == TeleopMode::Outage && self.last_mode != Some(TeleopMode::Outage) {
            self.outage_count += 1;
        }
        self.last_mode = Some(out.mode);
        self.high_water = self.high_water.max(out.buffer_depth);
        self.max_divergence = self.max_divergence.max(divergence);
    }

    pub fn elapsed(&self) -> f64 {
        self.ticks as f64 * self.dt
    }

    pub fn metrics(&self, completed: bool) -> TrialMetrics {
        TrialMetrics {
            completed,
            completion_time: self.elapsed(),
            time_normal: self.normal as f64 * self.dt,
            time_outage: self.outage as f64 * self.dt,
            time_recovery: self.recovery as f64 * self.dt,
            outage_count: self.outage_count,
            buffer_high_water: self.high_water,
            max_divergence: self.max_divergence,
        }
    }
}

/// One tick of a traced trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub now: f64,
    pub link: ChannelStatus,
    pub output: ControllerOutput,
    pub remote_tool: Pose,
    pub twin_tool: Pose,
    pub divergence: f64,
    pub remote_events: Vec<SceneEvent>,
    pub twin_events: Vec<SceneEvent>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub ticks: Vec<TickRecord>,
    /// Commands emitted by the operator over the trial.
    pub operator_commands: u64,
    /// Position step per tick of the operator at full speed.
    pub command_quantum: f64,
}

/// Everything a trial owns while it runs.
pub struct TrialRun {
    cfg: TrialConfig,
    schedule: OutageSchedule,
    controller: Controller,
    operator: Operator,
    remote: SceneState,
    twin: SceneState,
    recorder: MetricsRecorder,
    tick: u64,
}

impl TrialRun {
    pub fn new(cfg: &TrialConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let schedule = cfg.channel.schedule(cfg.max_duration, cfg.seed)?;
        let scene = SceneState::new(&cfg.scene)?;
        Ok(Self {
            controller: Controller::new(cfg.controller, cfg.strategy)?,
            operator: Operator::new(cfg.operator, cfg.controller.tick_rate),
            remote: scene.clone(),
            twin: scene,
            recorder: MetricsRecorder::new(cfg.controller.tick_rate),
            schedule,
            cfg: cfg.clone(),
            tick: 0,
        })
    }

    pub fn schedule(&self) -> &OutageSchedule {
        &self.schedule
    }

    pub fn remote(&self) -> &SceneState {
        &self.remote
    }

    pub fn twin(&self) -> &SceneState {
        &self.twin
    }

    /// Advances one tick. Returns `None` once the time limit is reached.
    pub fn step(&mut self) -> Result<Option<TickRecord>, HarnessError> {
        let now = self.tick as f64 / self.cfg.controller.tick_rate;
        if now >= self.cfg.max_duration {
            return Ok(None);
        }
        let link = self.schedule.status_at(now)?;
        let locked = self.controller.locks_operator(link);
        // Under replay the operator watches the twin; under baseline, the (frozen) remote.
        let observed = match self.cfg.strategy {
            StrategyKind::Replay => &self.twin,
            StrategyKind::Baseline => &self.remote,
        };
        let cmd = self.operator.step(observed, locked, now);
        let out = self.controller.step(now, link, cmd)?;
        let grasp = self.cfg.scene.grasp;
        let twin_events = match &out.twin_command {
            Some(c) => self.twin.step(c, &grasp),
            None => Vec::new(),
        };
        let remote_events = match &out.remote_command {
            Some(c) => self.remote.step(c, &grasp),
            None => Vec::new(),
        };
        let divergence = scene_divergence(&self.remote, &self.twin)?;
        self.recorder.record(&out, divergence);
        self.tick += 1;
        Ok(Some(TickRecord {
            now,
            link,
            output: out,
            remote_tool: self.remote.tool.pose,
            twin_tool: self.twin.tool.pose,
            divergence,
            remote_events,
            twin_events,
        }))
    }

    pub fn finished(&self) -> bool {
        self.remote.phase == crate::scene::TaskPhase::Done
    }

    pub fn metrics(&self) -> TrialMetrics {
        self.recorder.metrics(self.finished())
    }

    fn run(mut self, mut trace: Option<&mut TrialTrace>) -> Result<TrialMetrics, HarnessError> {
        while !self.finished() {
            match self.step()? {
                Some(rec) => {
                    if let Some(t) = trace.as_deref_mut() {
                        t.ticks.push(rec);
                    }
                }
                None => break,
            }
        }
        if let Some(t) = trace {
            t.operator_commands = self.operator.emitted();
            t.command_quantum = self.operator.command_quantum();
        }
        Ok(self.metrics())
    }
}

/// Runs one trial to completion or timeout.
pub fn run_trial(cfg: &TrialConfig) -> Result<TrialMetrics, HarnessError> {
    TrialRun::new(cfg)?.run(None)
}

/// Like [`run_trial`] but also returns the per-tick trace.
pub fn run_trial_traced(cfg: &TrialConfig) -> Result<(TrialMetrics, TrialTrace), HarnessError> {
    let mut trace = TrialTrace::default();
    let metrics = TrialRun::new(cfg)?.run(Some(&mut trace))?;
    Ok((metrics, trace))
}

/// Deterministic stream of per-trial seeds derived from one base seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStream {
    pub base: u64,
}

impl SeedStream {
    pub fn new(base: u64) -> Self {
        Self { base }
    }

    pub fn seeds(&self, n: usize) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base);
        (0..n).map(|_| rng.next_u64()).collect()
    }
}

/// Runs `n_trials` seed-paired trials for each strategy arm.
///
/// The first arm is the reference for the reduction and t-tests.
pub fn run_experiment(
    base: &TrialConfig,
    n_trials: usize,
    strategies: &[StrategyKind],
    seeds: SeedStream,
) -> Result<ExperimentReport, HarnessError> {
    if n_trials < 2 {
        return Err(HarnessError::InvalidConfig("need at least 2 trials per strategy".into()));
    }
    if strategies.is_empty() {
        return Err(HarnessError::InvalidConfig("no strategies given".into()));
    }
    base.validate()?;
    let seed_list = seeds.seeds(n_trials);
    let jobs: Vec<(usize, usize, u64)> = strategies
        .iter()
        .enumerate()
        .flat_map(|(arm, _)| seed_list.iter().enumerate().map(move |(i, &s)| (arm, i, s)))
        .collect();
    // Parallel, but collected in job order so the report is deterministic.
    let results: Vec<Result<TrialRecord, HarnessError>> = jobs
        .par_iter()
        .map(|&(arm, index, seed)| {
            let cfg = TrialConfig { strategy: strategies[arm], seed, ..base.clone() };
            run_trial(&cfg).map(|metrics| TrialRecord {
                arm,
                trial: index,
                strategy: strategies[arm],
                seed,
                metrics,
            })
        })
        .collect();
    let trials = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentReport::build(base.clone(), seeds.base, n_trials, strategies, trials))
}

/// Channel RNG identification written into reports.
pub fn rng_id() -> &'static str {
    RNG_ID
}
