//! Normal / outage / recovery state machine.
//!
//! Every tick the controller receives the link status and (optionally) one
//! operator command, and decides what goes to the digital twin and what goes
//! to the remote robot.
//!
//! * Baseline: the input device is locked while the link is down and neither
//!   robot moves. Passthrough resumes on the tick the link returns.
//! * Replay: during an outage the twin keeps following the operator and every
//!   command is buffered. Once the link returns, each tick appends the live
//!   command to the buffer, pops `replay_stride` entries, and sends the last
//!   popped one to the remote. The remote therefore moves at `stride` times
//!   the recorded speed until the buffer is empty.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelStatus;
use crate::geometry::Pose;

/// Buffer capacity when none is configured: this many seconds of commands.
pub const DEFAULT_BUFFER_SECONDS: f64 = 60.0;
pub const DEFAULT_JAW_MAX: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("tick time regressed from {last} to {now}")]
    ClockRegression { last: f64, now: f64 },
    #[error("command buffer full ({capacity} entries); outage too long for configured memory")]
    BufferOverflow { capacity: usize },
    #[error("invalid command: {0}")]
    InvalidCommand(String),
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
}

/// One Cartesian servo setpoint for the tooltip, in the robot base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToolCommand {
    /// Operator clock, seconds.
    pub stamp: f64,
    pub pose: Pose,
    /// Jaw opening angle, radians.
    pub jaw: f64,
}

impl ToolCommand {
    pub fn new(stamp: f64, pose: Pose, jaw: f64) -> Self {
        Self { stamp, pose, jaw }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeleopMode {
    Normal,
    Outage,
    Recovery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Baseline,
    Replay,
}

impl StrategyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Baseline => "baseline",
            StrategyKind::Replay => "replay",
        }
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(StrategyKind::Baseline),
            "replay" => Ok(StrategyKind::Replay),
            other => Err(format!("unknown strategy `{other}` (expected baseline or replay)")),
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Servo rate, Hz.
    pub tick_rate: f64,
    /// Buffered entries consumed per recovery tick.
    pub replay_stride: usize,
    /// Maximum buffered commands. `None` means 60 s worth at `tick_rate`.
    pub buffer_capacity: Option<usize>,
    /// Optional clamp on remote tooltip speed during recovery, m/s. Off by default.
    pub replay_max_speed: Option<f64>,
    pub jaw_max: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            tick_rate: 100.0,
            replay_stride: 2,
            buffer_capacity: None,
            replay_max_speed: None,
            jaw_max: DEFAULT_JAW_MAX,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        if !(self.tick_rate > 0.0 && self.tick_rate.is_finite()) {
            return Err(ControllerError::InvalidConfig("tick_rate must be positive".into()));
        }
        if self.replay_stride < 1 {
            return Err(ControllerError::InvalidConfig("replay_stride must be >= 1".into()));
        }
        if self.buffer_capacity == Some(0) {
            return Err(ControllerError::InvalidConfig("buffer_capacity must be >= 1".into()));
        }
        if matches!(self.replay_max_speed, Some(v) if !(v > 0.0)) {
            return Err(ControllerError::InvalidConfig("replay_max_speed must be positive".into()));
        }
        if !(self.jaw_max > 0.0) {
            return Err(ControllerError::InvalidConfig("jaw_max must be positive".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.tick_rate
    }

    pub fn capacity(&self) -> usize {
        self.buffer_capacity
            .unwrap_or((DEFAULT_BUFFER_SECONDS * self.tick_rate).ceil() as usize)
    }
}

/// FIFO of commands waiting to reach the remote robot.
#[derive(Debug, Clone, Default)]
pub struct CommandBuffer {
    entries: VecDeque<ToolCommand>,
    high_water: usize,
}

impl CommandBuffer {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest depth observed at a tick boundary since the last reset.
    pub fn high_water_mark(&self) -> usize {
        self.high_water
    }

    fn push(&mut self, cmd: ToolCommand, capacity: usize) -> Result<(), ControllerError> {
        if self.entries.len() >= capacity {
            return Err(ControllerError::BufferOverflow { capacity });
        }
        self.entries.push_back(cmd);
        Ok(())
    }

    /// Pops up to `n` entries and returns the last one popped.
    fn drain_stride(&mut self, n: usize) -> Option<ToolCommand> {
        let mut last = None;
        for _ in 0..n {
            match self.entries.pop_front() {
                Some(c) => last = Some(c),
                None => break,
            }
        }
        last
    }

    fn note_depth(&mut self) {
        self.high_water = self.high_water.max(self.entries.len());
    }

    fn clear(&mut self) {
        self.entries.clear();
        self.high_water = 0;
    }

    pub fn iter(&self) -> impl Iterator<Item = &ToolCommand> {
        self.entries.iter()
    }
}

/// What one tick produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerOutput {
    /// Mode that governed this tick.
    pub mode: TeleopMode,
    pub twin_command: Option<ToolCommand>,
    pub remote_command: Option<ToolCommand>,
    pub operator_locked: bool,
    /// Buffer depth after this tick.
    pub buffer_depth: usize,
}

#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    strategy: StrategyKind,
    mode: TeleopMode,
    buffer: CommandBuffer,
    last_now: Option<f64>,
    last_remote: Option<ToolCommand>,
}

impl Controller {
    pub fn new(cfg: ControllerConfig, strategy: StrategyKind) -> Result<Self, ControllerError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            strategy,
            mode: TeleopMode::Normal,
            buffer: CommandBuffer::default(),
            last_now: None,
            last_remote: None,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn strategy(&self) -> StrategyKind {
        self.strategy
    }

    /// Current mode, i.e. the one the next tick starts in.
    pub fn mode(&self) -> TeleopMode {
        self.mode
    }

    pub fn buffer(&self) -> &CommandBuffer {
        &self.buffer
    }

    /// Whether the operator input is locked on a tick with this link status.
    pub fn locks_operator(&self, link: ChannelStatus) -> bool {
        self.strategy == StrategyKind::Baseline && link == ChannelStatus::Down
    }

    /// Switches strategy. Pending state is discarded, as after [`reset`](Self::reset).
    pub fn set_strategy(&mut self, strategy: StrategyKind) {
        self.strategy = strategy;
        self.reset();
    }

    pub fn reset(&mut self) {
        self.mode = TeleopMode::Normal;
        self.buffer.clear();
        self.last_now = None;
        self.last_remote = None;
    }

    pub fn step(
        &mut self,
        now: f64,
        link: ChannelStatus,
        operator_cmd: Option<ToolCommand>,
    ) -> Result<ControllerOutput, ControllerError> {
        if let Some(last) = self.last_now {
            if now < last {
                return Err(ControllerError::ClockRegression { last, now });
            }
        }
        if let Some(cmd) = &operator_cmd {
            if !(0.0..=self.cfg.jaw_max).contains(&cmd.jaw) {
                return Err(ControllerError::InvalidCommand(format!(
                    "jaw {} outside [0, {}]",
                    cmd.jaw, self.cfg.jaw_max
                )));
            }
        }
        self.last_now = Some(now);

        let out = match (self.mode, link) {
            (TeleopMode::Normal, ChannelStatus::Up) => self.passthrough(operator_cmd),
            (TeleopMode::Normal | TeleopMode::Outage | TeleopMode::Recovery, ChannelStatus::Down) => {
                self.mode = TeleopMode::Outage;
                self.outage_tick(operator_cmd)?
            }
            (TeleopMode::Outage, ChannelStatus::Up) => match self.strategy {
                StrategyKind::Baseline => {
                    self.mode = TeleopMode::Normal;
                    self.passthrough(operator_cmd)
                }
                StrategyKind::Replay => {
                    self.mode = TeleopMode::Recovery;
                    self.recovery_tick(operator_cmd)?
                }
            },
            (TeleopMode::Recovery, ChannelStatus::Up) => self.recovery_tick(operator_cmd)?,
        };
        self.buffer.note_depth();
        Ok(out)
    }

    fn passthrough(&mut self, cmd: Option<ToolCommand>) -> ControllerOutput {
        if cmd.is_some() {
            self.last_remote = cmd;
        }
        ControllerOutput {
            mode: TeleopMode::Normal,
            twin_command: cmd,
            remote_command: cmd,
            operator_locked: false,
            buffer_depth: self.buffer.len(),
        }
    }

    fn outage_tick(&mut self, cmd: Option<ToolCommand>) -> Result<ControllerOutput, ControllerError> {
        match self.strategy {
            StrategyKind::Baseline => Ok(ControllerOutput {
                mode: TeleopMode::Outage,
                twin_command: None,
                remote_command: None,
                operator_locked: true,
                buffer_depth: self.buffer.len(),
            }),
            StrategyKind::Replay => {
                if let Some(c) = cmd {
                    self.buffer.push(c, self.cfg.capacity())?;
                }
                Ok(ControllerOutput {
                    mode: TeleopMode::Outage,
                    twin_command: cmd,
                    remote_command: None,
                    operator_locked: false,
                    buffer_depth: self.buffer.len(),
                })
            }
        }
    }

    fn recovery_tick(&mut self, cmd: Option<ToolCommand>) -> Result<ControllerOutput, ControllerError> {
        if let Some(c) = cmd {
            self.buffer.push(c, self.cfg.capacity())?;
        }
        let mut remote = self.buffer.drain_stride(self.cfg.replay_stride);
        if let (Some(limit), Some(target), Some(prev)) = (self.cfg.replay_max_speed, remote.as_mut(), self.last_remote) {
            clamp_step(&mut target.pose, &prev.pose, limit * self.cfg.dt());
        }
        if remote.is_some() {
            self.last_remote = remote;
        }
        if self.buffer.is_empty() {
            self.mode = TeleopMode::Normal;
        }
        Ok(ControllerOutput {
            mode: TeleopMode::Recovery,
            twin_command: cmd,
            remote_command: remote,
            operator_locked: false,
            buffer_depth: self.buffer.len(),
        })
    }
}

fn clamp_step(target: &mut Pose, from: &Pose, max_step: f64) {
    let delta = target.position - from.position;
    let d = delta.norm();
    if d > max_step {
        target.position = from.position + delta * (max_step / d);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn cmd(i: usize, rate: f64) -> ToolCommand {
        ToolCommand::new(i as f64 / rate, Pose::from_position(Vec3::new(i as f64 * 1e-3, 0.0, 0.0)), 0.5)
    }

    fn cfg(rate: f64) -> ControllerConfig {
        ControllerConfig { tick_rate: rate, ..Default::default() }
    }

    // Hand-stepped trace: link pattern per tick, operator input per tick.
    fn run(
        c: &mut Controller,
        rate: f64,
        links: &[ChannelStatus],
        input: impl Fn(usize) -> bool,
    ) -> Vec<ControllerOutput> {
        links
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let op = input(i).then(|| cmd(i, rate));
                c.step(i as f64 / rate, l, op).unwrap()
            })
            .collect()
    }

    use ChannelStatus::{Down, Up};

    #[test]
    fn normal_passthrough() {
        let mut c = Controller::new(cfg(100.0), StrategyKind::Replay).unwrap();
        let o = c.step(0.0, Up, Some(cmd(0, 100.0))).unwrap();
        assert_eq!(o.mode, TeleopMode::Normal);
        assert_eq!(o.twin_command, o.remote_command);
        assert!(o.twin_command.is_some());
        assert!(!o.operator_locked);
    }

    #[test]
    fn one_second_outage_recovers_in_one_second() {
        let rate = 100.0;
        let mut links = vec![Up; 10];
        links.extend(vec![Down; 100]);
        links.extend(vec![Up; 200]);
        let mut c = Controller::new(cfg(rate), StrategyKind::Replay).unwrap();
        let outs = run(&mut c, rate, &links, |_| true);
        assert_eq!(outs[109].buffer_depth, 100);
        let recovery: Vec<_> = outs.iter().enumerate().filter(|(_, o)| o.mode == TeleopMode::Recovery).collect();
        assert_eq!(recovery.len(), 100);
        assert_eq!(recovery[0].0, 110);
        // Remote receives every second entry of the buffered stream (entries 10..).
        for (k, (_, o)) in recovery.iter().enumerate() {
            let expect = 10 + 2 * k + 1;
            assert_eq!(o.remote_command.unwrap(), cmd(expect, rate));
        }
        assert_eq!(outs[210].mode, TeleopMode::Normal);
        assert_eq!(c.buffer().high_water_mark(), 100);
    }

    #[test]
    fn zero_length_outage_stays_normal() {
        let mut c = Controller::new(cfg(100.0), StrategyKind::Replay).unwrap();
        let outs = run(&mut c, 100.0, &[Up; 50], |_| true);
        assert!(outs.iter().all(|o| o.mode == TeleopMode::Normal));
    }

    #[test]
    fn idle_operator_drains_two_per_tick() {
        let rate = 50.0;
        let mut links = vec![Down; 30];
        links.extend(vec![Up; 30]);
        let mut c = Controller::new(cfg(rate), StrategyKind::Replay).unwrap();
        let outs = run(&mut c, rate, &links, |i| i < 30);
        let rec = outs.iter().filter(|o| o.mode == TeleopMode::Recovery).count();
        assert_eq!(rec, 15);
        assert_eq!(rec as f64 / rate, 0.3);
        // Remote gets entries 1, 3, ..., 29 (the later of each pair).
        let sent: Vec<_> = outs.iter().filter_map(|o| o.remote_command).collect();
        assert_eq!(sent.len(), 15);
        assert_eq!(sent.last().unwrap(), &cmd(29, rate));
        assert!(outs[30..].iter().all(|o| o.twin_command.is_none()));
    }

    #[test]
    fn odd_count_delivers_last_entry() {
        let rate = 10.0;
        let mut links = vec![Down; 5];
        links.extend(vec![Up; 5]);
        let mut c = Controller::new(cfg(rate), StrategyKind::Replay).unwrap();
        let outs = run(&mut c, rate, &links, |i| i < 5);
        let sent: Vec<_> = outs.iter().filter_map(|o| o.remote_command).collect();
        assert_eq!(sent, vec![cmd(1, rate), cmd(3, rate), cmd(4, rate)]);
    }

    #[test]
    fn baseline_locks_during_outage() {
        let rate = 10.0;
        let links = [Up, Down, Down, Up, Up];
        let mut c = Controller::new(cfg(rate), StrategyKind::Baseline).unwrap();
        let outs = run(&mut c, rate, &links, |_| true);
        for (o, l) in outs.iter().zip(links) {
            assert_eq!(o.operator_locked, l == Down);
            if l == Down {
                assert_eq!(o.mode, TeleopMode::Outage);
                assert!(o.twin_command.is_none() && o.remote_command.is_none());
            } else {
                assert_eq!(o.mode, TeleopMode::Normal);
                assert!(o.remote_command.is_some());
            }
        }
        assert_eq!(c.buffer().high_water_mark(), 0);
    }

    #[test]
    fn second_outage_mid_recovery_keeps_buffer() {
        let rate = 10.0;
        let links = [Down, Down, Down, Down, Up, Down, Down, Up, Up, Up, Up, Up, Up];
        let mut c = Controller::new(cfg(rate), StrategyKind::Replay).unwrap();
        let outs = run(&mut c, rate, &links, |_| true);
        assert_eq!(outs[4].mode, TeleopMode::Recovery);
        assert_eq!(outs[4].buffer_depth, 3);
        assert_eq!(outs[5].mode, TeleopMode::Outage);
        assert_eq!(outs[6].buffer_depth, 5);
        assert!(outs[5].remote_command.is_none());
        // Remote sees every second command of the whole buffered stream, in order.
        let sent: Vec<_> = outs.iter().filter_map(|o| o.remote_command).collect();
        let mut stamps: Vec<f64> = sent.iter().map(|c| c.stamp).collect();
        let sorted = {
            let mut s = stamps.clone();
            s.sort_by(f64::total_cmp);
            s
        };
        assert_eq!(stamps, sorted);
        stamps.dedup();
        assert_eq!(stamps.len(), sent.len());
        assert_eq!(sent.last().unwrap().stamp, outs.iter().rev().find_map(|o| o.twin_command).unwrap().stamp);
    }

    #[test]
    fn reset_behaviour() {
        let rate = 10.0;
        let mut c = Controller::new(cfg(rate), StrategyKind::Replay).unwrap();
        run(&mut c, rate, &[Down, Down, Down, Down, Up], |_| true);
        assert_eq!(c.mode(), TeleopMode::Recovery);
        c.reset();
        assert_eq!(c.buffer().len(), 0);
        assert_eq!(c.buffer().high_water_mark(), 0);
        c.reset();
        assert_eq!(c.mode(), TeleopMode::Normal);
        let o = c.step(0.0, Up, Some(cmd(0, rate))).unwrap();
        assert_eq!(o.mode, TeleopMode::Normal);
        assert_eq!(o.remote_command, Some(cmd(0, rate)));
    }

    #[test]
    fn clock_regression_is_error() {
        let mut c = Controller::new(cfg(10.0), StrategyKind::Replay).unwrap();
        c.step(1.0, Up, None).unwrap();
        assert!(matches!(c.step(0.5, Up, None), Err(ControllerError::ClockRegression { .. })));
    }

    #[test]
    fn overflow_is_error() {
        let mut c = Controller::new(
            ControllerConfig { tick_rate: 10.0, buffer_capacity: Some(3), ..Default::default() },
            StrategyKind::Replay,
        )
        .unwrap();
        for i in 0..3 {
            c.step(i as f64 / 10.0, Down, Some(cmd(i, 10.0))).unwrap();
        }
        assert_eq!(
            c.step(0.3, Down, Some(cmd(3, 10.0))),
            Err(ControllerError::BufferOverflow { capacity: 3 })
        );
    }

    #[test]
    fn default_capacity_is_sixty_seconds() {
        assert_eq!(cfg(100.0).capacity(), 6000);
        assert!(ControllerConfig { replay_stride: 0, ..Default::default() }.validate().is_err());
        assert!(ControllerConfig { tick_rate: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn jaw_out_of_range_rejected() {
        let mut c = Controller::new(cfg(10.0), StrategyKind::Replay).unwrap();
        let mut bad = cmd(0, 10.0);
        bad.jaw = 2.0;
        assert!(matches!(c.step(0.0, Up, Some(bad)), Err(ControllerError::InvalidCommand(_))));
    }

    #[test]
    fn stride_three_recovers_in_half_the_outage() {
        let rate = 100.0;
        let mut links = vec![Down; 100];
        links.extend(vec![Up; 100]);
        let mut c = Controller::new(
            ControllerConfig { tick_rate: rate, replay_stride: 3, ..Default::default() },
            StrategyKind::Replay,
        )
        .unwrap();
        let outs = run(&mut c, rate, &links, |_| true);
        let rec = outs.iter().filter(|o| o.mode == TeleopMode::Recovery).count();
        assert_eq!(rec, 50);
    }

    #[test]
    fn speed_clamp_limits_remote_steps() {
        let rate = 10.0;
        let mut c = Controller::new(
            ControllerConfig { tick_rate: rate, replay_max_speed: Some(0.001), ..Default::default() },
            StrategyKind::Replay,
        )
        .unwrap();
        let mut links = vec![Up];
        links.extend(vec![Down; 4]);
        links.extend(vec![Up; 4]);
        let outs = run(&mut c, rate, &links, |_| true);
        let sent: Vec<_> = outs.iter().filter_map(|o| o.remote_command).collect();
        for w in sent.windows(2) {
            assert!(w[1].pose.position.distance(w[0].pose.position) <= 1e-4 + 1e-15);
        }
    }
}
