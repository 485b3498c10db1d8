//! Teleoperation through intermittent communication with a digital twin.
//!
//! The operator drives a remote robot and a simulated twin in parallel. When
//! the link drops, the twin keeps following the operator while commands are
//! buffered; when it comes back, the remote robot replays the buffer at an
//! accelerated rate until it has caught up.
//!
//! Modules, bottom-up:
//!
//! * [`geometry`]: poses, quaternions, labelled rigid transforms, intrinsics.
//! * [`registration`]: paired-point rigid fit and pinhole overlay projection.
//! * [`channel`]: the sampled up/down outage timeline.
//! * [`controller`]: the normal/outage/recovery state machine.
//! * [`scene`]: peg-transfer world with grasp heuristics.
//! * [`operator`]: synthetic operator producing command streams.
//! * [`harness`]: trial and experiment runner, metrics and reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod controller;
pub mod geometry;
pub mod harness;
pub mod operator;
pub mod registration;
pub mod scene;

pub use channel::{ChannelParams, ChannelStatus, OutageSchedule};
pub use controller::{
    Controller, ControllerConfig, ControllerOutput, StrategyKind, TeleopMode, ToolCommand,
};
pub use geometry::{CameraIntrinsics, Pose, RigidTransform, Rotation, Vec3};
pub use harness::{ExperimentReport, TrialConfig, TrialMetrics};
pub use scene::SceneState;
