//! WebSocket server: one [`Session`] loop per connection.
//!
//! Socket reads and writes run on their own tasks and talk to the session
//! loop over channels, so the session itself is never shared.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::mpsc;
use tokio::time::MissedTickBehavior;
use tower_http::services::ServeDir;

use crate::config::SessionConfig;
use crate::session::Session;

/// Outgoing frames queued per connection before the session loop waits on the socket.
const OUTBOX: usize = 1024;

pub fn router(cfg: SessionConfig) -> Router {
    let static_dir = cfg.static_dir.clone();
    let app = Router::new()
        .route("/ws", get(ws_handler))
        .route("/health", get(|| async { "ok" }))
        .with_state(Arc::new(cfg));
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

/// Serves on an already-bound listener until the future is dropped.
pub async fn serve_on(listener: TcpListener, cfg: SessionConfig) -> std::io::Result<()> {
    axum::serve(listener, router(cfg)).await
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(cfg: SessionConfig, addr: SocketAddr) -> anyhow::Result<()> {
    cfg.validate()?;
    let listener = TcpListener::bind(addr).await?;
    tracing::info!("listening on ws://{}/ws", listener.local_addr()?);
    axum::serve(listener, router(cfg))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn ws_handler(ws: WebSocketUpgrade, State(cfg): State<Arc<SessionConfig>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| run_connection(socket, (*cfg).clone()))
}

async fn run_connection(socket: WebSocket, cfg: SessionConfig) {
    let mut session = match Session::new(cfg) {
        Ok(s) => s,
        Err(e) => {
            tracing::error!("session config rejected: {e}");
            return;
        }
    };
    let (mut sink, mut stream) = socket.split();
    let (in_tx, mut in_rx) = mpsc::unbounded_channel::<String>();
    let (out_tx, mut out_rx) = mpsc::channel::<String>(OUTBOX);

    let writer = tokio::spawn(async move {
        while let Some(text) = out_rx.recv().await {
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });
    let reader = tokio::spawn(async move {
        while let Some(Ok(msg)) = stream.next().await {
            let text = match msg {
                Message::Text(t) => t.to_string(),
                Message::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
                Message::Close(_) => break,
                _ => continue,
            };
            if in_tx.send(text).is_err() {
                break;
            }
        }
    });

    let cfg = session.config();
    let period = Duration::from_secs_f64(1.0 / (cfg.controller.tick_rate * cfg.time_scale));
    let mut ticker = tokio::time::interval(period);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            // Messages that arrived before a tick boundary belong to that tick.
            biased;
            incoming = in_rx.recv() => match incoming {
                Some(text) => {
                    let reply = session.handle_text(&text).to_json();
                    if out_tx.send(reply).await.is_err() {
                        break;
                    }
                }
                None => break,
            },
            _ = ticker.tick() => {
                let mut closed = false;
                for m in session.tick() {
                    if out_tx.send(m.to_json()).await.is_err() {
                        closed = true;
                        break;
                    }
                }
                if closed {
                    break;
                }
            }
        }
    }
    reader.abort();
    drop(out_tx);
    let _ = writer.await;
}
