//! Live seed-drag channel, `GET /sessions/{id}/live` upgraded to WebSocket.
//!
//! Client frames (JSON text):
//!
//! ```json
//! {"type": "move", "request_id": 7, "x": 1.0, "y": 2.0, "z": 3.0,
//!  "slices": [{"plane": "axial", "index": 40}]}
//! {"type": "subscribe", "slices": [{"plane": "coronal", "index": 12}]}
//! ```
//!
//! `type` defaults to `move`; `slices` on a move replaces the subscription.
//!
//! Server frames, one per move and in request order:
//!
//! ```json
//! {"type": "result", "request_id": 7, "superseded": false, "volume_mm3": ...,
//!  "elapsed_ms": ..., "summary": {...}, "contours": [ContourOverlay, ...]}
//! {"type": "superseded", "request_id": 6, "superseded": true}
//! {"type": "error", "request_id": 8, "status": 422, "error": "..."}
//! ```
//!
//! Moves that queue up while a computation runs are answered `superseded`
//! except the newest, which is computed. Deleting the session sends a close
//! frame with code 4404.

use std::sync::Arc;

use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::response::Response;
use futures_util::{SinkExt, StreamExt};
use nuggetcut::segmenter::SegmentationSummary;
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

use crate::error::{ApiError, ApiResult};
use crate::render::{self, ContourOverlay, SliceRef};
use crate::{AppState, SessionSlot};

pub const CLOSE_SESSION_DELETED: u16 = 4404;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientFrame {
    #[serde(rename = "type", default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub request_id: Option<u64>,
    #[serde(default)]
    pub x: Option<f64>,
    #[serde(default)]
    pub y: Option<f64>,
    #[serde(default)]
    pub z: Option<f64>,
    #[serde(default)]
    pub slices: Option<Vec<SliceRef>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    Result {
        request_id: u64,
        superseded: bool,
        volume_mm3: f64,
        elapsed_ms: f64,
        summary: SegmentationSummary,
        contours: Vec<ContourOverlay>,
    },
    Superseded {
        request_id: u64,
        superseded: bool,
    },
    Error {
        request_id: Option<u64>,
        status: u16,
        error: String,
    },
}

#[derive(Debug)]
enum Incoming {
    Move {
        request_id: u64,
        seed: [f64; 3],
        slices: Option<Vec<SliceRef>>,
    },
    Subscribe(Vec<SliceRef>),
    Bad {
        request_id: Option<u64>,
        error: String,
    },
}

fn parse(text: &str) -> Incoming {
    let frame: ClientFrame = match serde_json::from_str(text) {
        Ok(f) => f,
        Err(e) => {
            let request_id = serde_json::from_str::<serde_json::Value>(text)
                .ok()
                .and_then(|v| v.get("request_id")?.as_u64());
            return Incoming::Bad {
                request_id,
                error: format!("malformed message: {e}"),
            };
        }
    };
    let bad = |error: &str| Incoming::Bad {
        request_id: frame.request_id,
        error: error.to_string(),
    };
    match frame.kind.as_deref().unwrap_or("move") {
        "move" => match (frame.request_id, frame.x, frame.y, frame.z) {
            (Some(request_id), Some(x), Some(y), Some(z)) => Incoming::Move {
                request_id,
                seed: [x, y, z],
                slices: frame.slices.clone(),
            },
            _ => bad("move needs request_id, x, y and z"),
        },
        "subscribe" => match &frame.slices {
            Some(s) => Incoming::Subscribe(s.clone()),
            None => bad("subscribe needs slices"),
        },
        other => bad(&format!("unknown message type `{other}`")),
    }
}

pub async fn upgrade(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> ApiResult<Response> {
    let slot = state.slot(&id).await?;
    Ok(ws.on_upgrade(move |socket| run(state, slot, socket)))
}

async fn send(
    tx: &mut futures_util::stream::SplitSink<WebSocket, Message>,
    frame: &ServerFrame,
) -> bool {
    let text = serde_json::to_string(frame).expect("frames serialize");
    tx.send(Message::Text(text.into())).await.is_ok()
}

async fn compute(
    state: &Arc<AppState>,
    slot: &SessionSlot,
    request_id: u64,
    seed: [f64; 3],
    slices: Vec<SliceRef>,
) -> ApiResult<ServerFrame> {
    state
        .with_slot(slot, move |e, st| {
            let seg = e.session.drag_seed(seed)?;
            e.sync_record();
            st.persist(e)?;
            let contours =
                render::overlays_for(&seg, seg.mask.geometry(), e.session.border_seeds(), &slices)?;
            Ok(ServerFrame::Result {
                request_id,
                superseded: false,
                volume_mm3: seg.mask.physical_volume_mm3(),
                elapsed_ms: seg.elapsed_ms,
                summary: seg.summary(),
                contours,
            })
        })
        .await
}

async fn run(state: Arc<AppState>, slot: Arc<SessionSlot>, socket: WebSocket) {
    let (mut tx, mut rx) = socket.split();
    let (queue, mut pending) = mpsc::unbounded_channel();
    let reader = tokio::spawn(async move {
        while let Some(Ok(msg)) = rx.next().await {
            let item = match msg {
                Message::Text(t) => parse(t.as_str()),
                Message::Binary(_) => Incoming::Bad {
                    request_id: None,
                    error: "binary frames are not supported".into(),
                },
                Message::Close(_) => break,
                _ => continue,
            };
            if queue.send(item).is_err() {
                break;
            }
        }
    });

    let mut closed = slot.closed.subscribe();
    let window = state.config().coalesce_window;
    let mut subscription: Vec<SliceRef> = Vec::new();
    'outer: loop {
        let deleted = async {
            let _ = closed.wait_for(|c| *c).await;
        };
        let first = tokio::select! {
            m = pending.recv() => m,
            _ = deleted => None,
        };
        let Some(first) = first else {
            if *closed.borrow() {
                let _ = tx
                    .send(Message::Close(Some(CloseFrame {
                        code: CLOSE_SESSION_DELETED,
                        reason: "session deleted".into(),
                    })))
                    .await;
            }
            break;
        };
        if matches!(first, Incoming::Move { .. }) && !window.is_zero() {
            tokio::time::sleep(window).await;
        }
        let mut batch = vec![first];
        while let Ok(m) = pending.try_recv() {
            batch.push(m);
        }
        let newest = batch
            .iter()
            .rposition(|m| matches!(m, Incoming::Move { .. }));
        for (i, item) in batch.into_iter().enumerate() {
            let frame = match item {
                Incoming::Bad { request_id, error } => ServerFrame::Error {
                    request_id,
                    status: 400,
                    error,
                },
                Incoming::Subscribe(s) => {
                    subscription = s;
                    continue;
                }
                Incoming::Move { request_id, .. } if Some(i) != newest => ServerFrame::Superseded {
                    request_id,
                    superseded: true,
                },
                Incoming::Move {
                    request_id,
                    seed,
                    slices,
                } => {
                    if let Some(s) = slices {
                        subscription = s;
                    }
                    match compute(&state, &slot, request_id, seed, subscription.clone()).await {
                        Ok(f) => f,
                        Err(ApiError { status, message }) => ServerFrame::Error {
                            request_id: Some(request_id),
                            status: status.as_u16(),
                            error: message,
                        },
                    }
                }
            };
            if !send(&mut tx, &frame).await {
                break 'outer;
            }
        }
    }
    reader.abort();
}
