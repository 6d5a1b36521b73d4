//! Matchmaking and session hosting for the reference game over WebSockets.
//!
//! The game logic lives in [`session::Session`] and [`matchmaker::Matchmaker`],
//! which do no I/O; [`server`] wires them to axum. Wire frames are defined in
//! [`protocol`].

pub mod bot;
pub mod clock;
pub mod matchmaker;
pub mod protocol;
pub mod server;
pub mod session;
pub mod store;

pub use clock::{Clock, ScaledClock, SystemClock};
pub use protocol::{ClientFrame, ServerFrame};
pub use server::{router, serve, AppState, ServerConfig, Status};
pub use store::TranscriptStore;
