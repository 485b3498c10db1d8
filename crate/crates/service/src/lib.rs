//! Live teleoperation sessions over WebSocket.
//!
//! Each connection owns an isolated [`Session`]: its own controller, remote
//! and twin scenes, link schedule and clock. The session streams
//! [`protocol::StateFrame`]s at the configured broadcast rate whether or not
//! the client sends anything.

pub mod config;
pub mod protocol;
pub mod server;
pub mod session;

pub use config::{CameraConfig, ConfigError, SessionConfig};
pub use protocol::{ClientMessage, EventFrame, ServerMessage, StateFrame};
pub use server::{router, serve, serve_on};
pub use session::Session;
