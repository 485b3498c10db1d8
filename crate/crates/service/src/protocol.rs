//! Wire protocol: one JSON object per WebSocket text frame, tagged by `type`.

use serde::{Deserialize, Serialize};
use twin_teleop::channel::ChannelStatus;
use twin_teleop::geometry::{Pose, Vec3};
use twin_teleop::harness::TrialMetrics;
use twin_teleop::registration::OverlayPrimitive;
use twin_teleop::scene::{SceneEvent, SceneState, TaskPhase};
use twin_teleop::{StrategyKind, TeleopMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    /// Tool target for the next tick. `stamp` is informational only.
    Command {
        pose: Pose,
        jaw: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stamp: Option<f64>,
    },
    SetStrategy { value: StrategyKind },
    Reset,
    /// Drops the link for `duration` seconds starting at the next tick.
    InjectOutage { duration: f64 },
    SetSeed { value: u64 },
}

impl ClientMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ClientMessage::Command { .. } => "command",
            ClientMessage::SetStrategy { .. } => "set_strategy",
            ClientMessage::Reset => "reset",
            ClientMessage::InjectOutage { .. } => "inject_outage",
            ClientMessage::SetSeed { .. } => "set_seed",
        }
    }
}

/// Everything observable about one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    /// Server clock, seconds since the last reset.
    pub t: f64,
    pub tick: u64,
    pub mode: TeleopMode,
    pub link: ChannelStatus,
    pub strategy: StrategyKind,
    pub seed: u64,
    pub remote: SceneState,
    pub twin: SceneState,
    /// Twin tool and held peg projected into the camera image.
    pub overlay: Vec<OverlayPrimitive>,
    /// Remote/twin divergence, meters.
    pub divergence: f64,
    pub buffer_depth: usize,
    pub operator_locked: bool,
    pub task_done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    Remote,
    Twin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventFrame {
    /// `grasp`, `release`, `drop`, `phase` or `task_done`.
    pub name: String,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<EventSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peg: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<TaskPhase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<TrialMetrics>,
}

impl EventFrame {
    fn named(name: &str, t: f64) -> Self {
        Self {
            name: name.into(),
            t,
            source: None,
            peg: None,
            post: None,
            position: None,
            phase: None,
            metrics: None,
        }
    }

    pub fn from_scene(ev: &SceneEvent, source: EventSource, t: f64) -> Self {
        let mut f = match *ev {
            SceneEvent::Grasped { peg } => Self { peg: Some(peg), ..Self::named("grasp", t) },
            SceneEvent::PlacedOnPost { peg, post } => {
                Self { peg: Some(peg), post: Some(post), ..Self::named("release", t) }
            }
            SceneEvent::Dropped { peg, position } => {
                Self { peg: Some(peg), position: Some(position), ..Self::named("drop", t) }
            }
            SceneEvent::PhaseAdvanced { phase } => Self { phase: Some(phase), ..Self::named("phase", t) },
        };
        f.source = Some(source);
        f
    }

    pub fn task_done(t: f64, metrics: TrialMetrics) -> Self {
        Self { metrics: Some(metrics), ..Self::named("task_done", t) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    /// `type` of the acknowledged message.
    pub of: String,
    /// Time of the tick the message takes effect on.
    pub t: f64,
    /// Set for commands: true when the operator is locked and the command is discarded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locked: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorFrame {
    pub message: String,
    /// The offending payload: parsed JSON when possible, else the raw text.
    pub echo: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State(Box<StateFrame>),
    Event(EventFrame),
    Ack(Ack),
    Error(ErrorFrame),
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn client_messages_match_wire_examples() {
        let cases = [
            json!({"type": "command", "pose": {"position": {"x": 0.0, "y": 0.01, "z": 0.02}}, "jaw": 0.5}),
            json!({"type": "set_strategy", "value": "baseline"}),
            json!({"type": "reset"}),
            json!({"type": "inject_outage", "duration": 0.8}),
            json!({"type": "set_seed", "value": 7}),
        ];
        let kinds: Vec<_> = cases
            .iter()
            .map(|v| serde_json::from_value::<ClientMessage>(v.clone()).unwrap().kind())
            .collect();
        assert_eq!(kinds, ["command", "set_strategy", "reset", "inject_outage", "set_seed"]);
    }

    #[test]
    fn unknown_type_does_not_parse() {
        assert!(serde_json::from_value::<ClientMessage>(json!({"type": "teleport"})).is_err());
        assert!(serde_json::from_value::<ClientMessage>(json!({"type": "set_strategy", "value": "fast"})).is_err());
    }

    #[test]
    fn server_messages_carry_type_tag() {
        let ev = ServerMessage::Event(EventFrame::from_scene(&SceneEvent::Grasped { peg: 2 }, EventSource::Remote, 1.5));
        let v: serde_json::Value = serde_json::from_str(&ev.to_json()).unwrap();
        assert_eq!(v, json!({"type": "event", "name": "grasp", "t": 1.5, "source": "remote", "peg": 2}));
        let err = ServerMessage::Error(ErrorFrame { message: "x".into(), echo: json!({"type": "nope"}) });
        let back: ServerMessage = serde_json::from_str(&err.to_json()).unwrap();
        assert_eq!(back, err);
        assert!(!err.to_json().contains('\n'));
    }
}
