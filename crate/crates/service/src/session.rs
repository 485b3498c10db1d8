//! One operator's simulation loop: controller, remote and twin scenes, link, clock.
//!
//! The session is synchronous. The server feeds it client messages as they
//! arrive and calls [`Session::tick`] at the servo rate. Commands are
//! last-writer-wins per tick; control messages take effect at the next tick
//! boundary.

use twin_teleop::channel::{ChannelStatus, OutageSchedule};
use twin_teleop::controller::{ControllerOutput, ToolCommand};
use twin_teleop::geometry::Pose;
use twin_teleop::harness::MetricsRecorder;
use twin_teleop::registration::overlay_silhouette;
use twin_teleop::scene::{scene_divergence, SceneState, TaskPhase};
use twin_teleop::{Controller, StrategyKind, TeleopMode};

use crate::config::{ConfigError, SessionConfig};
use crate::protocol::{Ack, ClientMessage, ErrorFrame, EventFrame, EventSource, ServerMessage, StateFrame};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Control {
    Strategy(StrategyKind),
    Seed(u64),
    Reset,
    Outage(f64),
}

pub struct Session {
    cfg: SessionConfig,
    strategy: StrategyKind,
    seed: u64,
    controller: Controller,
    remote: SceneState,
    twin: SceneState,
    schedule: OutageSchedule,
    /// Manually injected down intervals `[start, end)`.
    injected: Vec<(f64, f64)>,
    recorder: MetricsRecorder,
    tick: u64,
    pending_cmd: Option<(Pose, f64)>,
    pending: Vec<Control>,
    last: Option<(ChannelStatus, ControllerOutput, f64)>,
    done: bool,
}

impl Session {
    pub fn new(cfg: SessionConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let invalid = |e: String| ConfigError::Invalid(e);
        let scene = SceneState::new(&cfg.scene).map_err(|e| invalid(e.to_string()))?;
        Ok(Self {
            strategy: cfg.strategy,
            seed: cfg.seed,
            controller: Controller::new(cfg.controller, cfg.strategy).map_err(|e| invalid(e.to_string()))?,
            remote: scene.clone(),
            twin: scene,
            schedule: cfg.channel.schedule(cfg.horizon, cfg.seed).map_err(|e| invalid(e.to_string()))?,
            injected: Vec::new(),
            recorder: MetricsRecorder::new(cfg.controller.tick_rate),
            tick: 0,
            pending_cmd: None,
            pending: Vec::new(),
            last: None,
            done: false,
            cfg,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    /// Time of the next tick, seconds.
    pub fn now(&self) -> f64 {
        self.tick as f64 / self.cfg.controller.tick_rate
    }

    pub fn strategy(&self) -> StrategyKind {
        self.strategy
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn remote(&self) -> &SceneState {
        &self.remote
    }

    pub fn twin(&self) -> &SceneState {
        &self.twin
    }

    pub fn mode(&self) -> TeleopMode {
        self.controller.mode()
    }

    pub fn task_done(&self) -> bool {
        self.done
    }

    pub fn link_at(&self, t: f64) -> ChannelStatus {
        if self.injected.iter().any(|&(s, e)| s <= t && t < e) {
            return ChannelStatus::Down;
        }
        self.schedule.status_at(t).unwrap_or(ChannelStatus::Up)
    }

    /// Parses and handles one text frame. Always produces exactly one reply.
    pub fn handle_text(&mut self, text: &str) -> ServerMessage {
        let value: serde_json::Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(e) => return error(format!("malformed JSON: {e}"), serde_json::Value::String(text.into())),
        };
        match serde_json::from_value::<ClientMessage>(value.clone()) {
            Ok(msg) => self.handle_message(msg),
            Err(e) => error(format!("unrecognized message: {e}"), value),
        }
    }

    pub fn handle_message(&mut self, msg: ClientMessage) -> ServerMessage {
        let t = self.now();
        let kind = msg.kind();
        let control = match msg {
            ClientMessage::Command { pose, jaw, .. } => {
                let p = pose.position;
                if ![p.x, p.y, p.z].iter().all(|c| c.is_finite()) {
                    return error("command pose must be finite".into(), to_value(&msg));
                }
                if !(0.0..=self.cfg.scene.jaw_max).contains(&jaw) {
                    return error(format!("jaw {jaw} outside [0, {}]", self.cfg.scene.jaw_max), to_value(&msg));
                }
                self.pending_cmd = Some((pose, jaw));
                let locked = self.controller.locks_operator(self.link_at(t));
                return ServerMessage::Ack(Ack { of: kind.into(), t, locked: Some(locked) });
            }
            ClientMessage::InjectOutage { duration } => {
                if !(duration > 0.0 && duration.is_finite()) {
                    return error("outage duration must be positive".into(), to_value(&msg));
                }
                Control::Outage(duration)
            }
            ClientMessage::SetStrategy { value } => Control::Strategy(value),
            ClientMessage::SetSeed { value } => Control::Seed(value),
            ClientMessage::Reset => Control::Reset,
        };
        self.pending.push(control);
        ServerMessage::Ack(Ack { of: kind.into(), t, locked: None })
    }

    /// Fresh scenes, controller, schedule and clock under the current strategy and seed.
    fn restart(&mut self) {
        let scene = SceneState::new(&self.cfg.scene).expect("layout validated");
        self.remote = scene.clone();
        self.twin = scene;
        self.controller.set_strategy(self.strategy);
        self.schedule = self.cfg.channel.schedule(self.cfg.horizon, self.seed).expect("channel validated");
        self.injected.clear();
        self.recorder = MetricsRecorder::new(self.cfg.controller.tick_rate);
        self.tick = 0;
        self.last = None;
        self.done = false;
    }

    fn apply_controls(&mut self) {
        for c in std::mem::take(&mut self.pending) {
            match c {
                Control::Strategy(s) => {
                    self.strategy = s;
                    self.restart();
                }
                Control::Seed(s) => {
                    self.seed = s;
                    self.restart();
                }
                Control::Reset => self.restart(),
                Control::Outage(d) => {
                    let start = self.now();
                    self.injected.push((start, start + d));
                }
            }
        }
    }

    fn frame_due(&self) -> bool {
        // `tick` has already been advanced past the tick just run.
        let ratio = self.cfg.broadcast_rate / self.cfg.controller.tick_rate;
        let k = self.tick as f64;
        (k * ratio).floor() > ((k - 1.0) * ratio).floor()
    }

    /// Runs one servo tick. Returns the frames to publish.
    pub fn tick(&mut self) -> Vec<ServerMessage> {
        self.apply_controls();
        let now = self.now();
        let link = self.link_at(now);
        let cmd = self.pending_cmd.take().map(|(pose, jaw)| ToolCommand::new(now, pose, jaw));
        let out = match self.controller.step(now, link, cmd) {
            Ok(out) => out,
            Err(e) => {
                let msg = error(format!("controller fault, session reset: {e}"), serde_json::Value::Null);
                self.restart();
                return vec![msg];
            }
        };

        let grasp = self.cfg.scene.grasp;
        let mut events = Vec::new();
        if let Some(c) = &out.twin_command {
            for ev in self.twin.step(c, &grasp) {
                events.push(ServerMessage::Event(EventFrame::from_scene(&ev, EventSource::Twin, now)));
            }
        }
        if let Some(c) = &out.remote_command {
            for ev in self.remote.step(c, &grasp) {
                events.push(ServerMessage::Event(EventFrame::from_scene(&ev, EventSource::Remote, now)));
            }
        }
        let divergence = scene_divergence(&self.remote, &self.twin).expect("scenes share a layout");
        self.recorder.record(&out, divergence);
        self.tick += 1;
        if !self.done && self.remote.phase == TaskPhase::Done {
            self.done = true;
            events.push(ServerMessage::Event(EventFrame::task_done(now, self.recorder.metrics(true))));
        }
        self.last = Some((link, out, divergence));

        let mut msgs = Vec::with_capacity(events.len() + 1);
        if self.frame_due() {
            msgs.push(ServerMessage::State(Box::new(self.snapshot().expect("a tick has run"))));
        }
        msgs.extend(events);
        msgs
    }

    /// State frame for the most recent tick.
    pub fn snapshot(&self) -> Option<StateFrame> {
        let (link, out, divergence) = self.last.as_ref()?;
        let cam = &self.cfg.camera;
        Some(StateFrame {
            t: (self.tick - 1) as f64 / self.cfg.controller.tick_rate,
            tick: self.tick - 1,
            mode: out.mode,
            link: *link,
            strategy: self.strategy,
            seed: self.seed,
            remote: self.remote.clone(),
            twin: self.twin.clone(),
            overlay: overlay_silhouette(&self.twin, &cam.extrinsic, &cam.intrinsics).unwrap_or_default(),
            divergence: *divergence,
            buffer_depth: out.buffer_depth,
            operator_locked: out.operator_locked,
            task_done: self.done,
        })
    }
}

fn to_value(msg: &ClientMessage) -> serde_json::Value {
    serde_json::to_value(msg).expect("client messages serialize")
}

fn error(message: String, echo: serde_json::Value) -> ServerMessage {
    ServerMessage::Error(ErrorFrame { message, echo })
}
