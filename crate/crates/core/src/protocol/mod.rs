//! Client/server verification protocol: the server stores encrypted
//! references and decides, the client captures probes and computes on
//! ciphertexts.

pub mod client;
pub mod clock;
pub mod server;
pub mod store;
pub mod transport;
pub mod wire;

use std::io;
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;

use hefuse_ckks::CkksError;
use thiserror::Error;

use crate::keystore::KeyError;
use crate::matcher::MatchError;

pub use client::{Client, ClientOutcome};
pub use clock::{Clock, ManualClock, RetryLimiter, SystemClock};
pub use server::{Server, ServerConfig, SessionRecord, SessionState};
pub use store::{ReferenceStore, StoreError};
pub use transport::{duplex, Direction, MemoryTransport, Recorder, TcpTransport, Transport};
pub use wire::{ErrorCode, Message, WireError, WireVerdict};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("transport: {0}")]
    Io(#[from] io::Error),
    #[error("peer closed the connection")]
    Closed,
    #[error("server error {code:?}: {text}")]
    Remote { code: ErrorCode, text: String },
    #[error("unexpected {0} message")]
    Unexpected(&'static str),
    #[error(transparent)]
    Ckks(#[from] CkksError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Keys(#[from] KeyError),
    #[error("server configuration: {0}")]
    Config(String),
}

/// Accepts TCP connections and serves each on its own thread. Returns after
/// `max_connections` connections when given.
pub fn serve_tcp(server: Arc<Server>, listener: TcpListener, max_connections: Option<usize>) -> io::Result<()> {
    let mut handles = Vec::new();
    for (i, stream) in listener.incoming().enumerate() {
        let stream = stream?;
        stream.set_nodelay(true)?;
        let server = server.clone();
        handles.push(thread::spawn(move || {
            let mut t = TcpTransport::new(stream);
            let _ = server.serve(&mut t);
        }));
        if max_connections.is_some_and(|m| i + 1 >= m) {
            break;
        }
    }
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}
