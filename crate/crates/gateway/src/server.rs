//! WebSocket transport for the hub: one JSON text frame per message.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpListener;

use crate::hub::{Connection, Hub};
use crate::protocol::{BridgeMessage, WireError};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server stopped: {0}")]
    Io(#[from] std::io::Error),
}

pub fn router(hub: Arc<Hub>) -> Router {
    Router::new()
        .route("/", get(upgrade))
        .route("/ws", get(upgrade))
        .with_state(hub)
}

/// Bind and return the actual address plus the server future.
pub async fn bind(
    hub: Arc<Hub>,
    addr: &str,
) -> Result<(SocketAddr, impl std::future::Future<Output = Result<(), ServeError>>), ServeError> {
    let listener = TcpListener::bind(addr).await.map_err(|source| ServeError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    let local = listener.local_addr()?;
    let app = router(hub);
    Ok((local, async move { axum::serve(listener, app).await.map_err(ServeError::from) }))
}

async fn upgrade(ws: WebSocketUpgrade, State(hub): State<Arc<Hub>>) -> Response {
    ws.on_upgrade(move |socket| client(hub, socket))
}

async fn client(hub: Arc<Hub>, socket: WebSocket) {
    let conn = hub.connect();
    tracing::debug!(conn = conn.id(), "client connected");
    let (mut tx, mut rx) = socket.split();
    let outbox = conn.outbox().clone();
    let writer = tokio::spawn(async move {
        loop {
            let frames = outbox.drain();
            if frames.is_empty() {
                outbox.ready().await;
                continue;
            }
            for m in frames {
                if tx.send(Message::Text(m.to_json().into())).await.is_err() {
                    return;
                }
            }
        }
    });
    while let Some(Ok(frame)) = rx.next().await {
        let text = match frame {
            Message::Text(t) => t.to_string(),
            Message::Binary(b) => match String::from_utf8(b.to_vec()) {
                Ok(t) => t,
                Err(_) => {
                    reject(&conn, WireError::new("malformed_message", "binary frame is not UTF-8"));
                    continue;
                }
            },
            Message::Close(_) => break,
            _ => continue,
        };
        // Calls on one connection are handled in arrival order; planning
        // work stays off the async executor.
        let (hub, conn) = (hub.clone(), conn.clone());
        if tokio::task::spawn_blocking(move || hub.handle_text(&conn, &text)).await.is_err() {
            tracing::error!("message handler panicked");
        }
    }
    hub.disconnect(&conn);
    // Let queued frames flush before the socket goes away.
    tokio::task::yield_now().await;
    writer.abort();
    tracing::debug!(conn = conn.id(), "client disconnected");
}

fn reject(conn: &Connection, err: WireError) {
    conn.outbox().push_frame(BridgeMessage::error(None, &err));
}
