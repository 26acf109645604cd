//! Live sessions: a paced engine behind a websocket.
//!
//! Endpoints: `/session` (websocket, JSON messages, see [`protocol`]),
//! `/health` and `/scenario`.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ClientMessage, ServerMessage};
pub use server::{serve, start, ServerConfig, ServerHandle};
pub use session::LiveSession;
