//! Network boundary and command-line front end for the weeding decision
//! stack: a JSON message bridge over WebSocket, the session hub behind it,
//! and the `arwac` CLI.

pub mod cli;
pub mod hub;
pub mod protocol;
pub mod server;

pub use hub::{Connection, Hub, HubConfig, Outbox, TickMode};
pub use protocol::{BridgeMessage, Op, TopicKind, WireError};
