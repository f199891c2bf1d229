//! Session-oriented HTTP and WebSocket API over the nuggetcut segmenter.
//!
//! | method | path | body / query | reply |
//! |---|---|---|---|
//! | POST | `/volumes` | raw MetaImage (LOCAL data) | `VolumeMeta` |
//! | GET | `/volumes/{id}` | | `VolumeMeta` |
//! | GET | `/volumes/{id}/slice` | `plane, index, window_center?, window_width?` | PNG |
//! | POST | `/sessions` | `CreateSession` | `SessionRecord` |
//! | GET / DELETE | `/sessions/{id}` | | `SessionRecord` / 204 |
//! | PUT | `/sessions/{id}/seed` | `Point` | `SegmentReply` |
//! | POST / DELETE | `/sessions/{id}/border-seeds` | `Point` / none | `SegmentReply` |
//! | GET | `/sessions/{id}/contour` | `plane, index` | `ContourOverlay` |
//! | POST | `/sessions/{id}/commit` | | `MaskMeta` |
//! | GET | `/sessions/{id}/metrics` | `reference` | `Metrics` |
//! | GET | `/sessions/{id}/live` | WebSocket upgrade | see [`live`] |
//! | POST | `/masks` | raw MetaImage mask | `MaskMeta` |
//! | GET | `/masks/{id}` | | MetaImage bytes |
//!
//! Errors are JSON `{"status": u16, "error": string}` with 404 for unknown
//! ids, 409 for conflicting constraints, 422 for invalid geometry or
//! parameters, 413 for oversized uploads and 400 for unreadable bodies.

mod api;
pub mod error;
pub mod live;
pub mod render;
pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post, put};
use axum::Router;
use nuggetcut::segmenter::SessionState;
use nuggetcut::{Session, Volume};
use tokio::net::TcpListener;
use tokio::sync::{oneshot, watch};
use tokio::task::JoinHandle;

pub use api::{CreateSession, Metrics, Point, SegmentReply};
pub use error::{ApiError, ApiResult, ErrorBody};
pub use render::{ContourAvailability, ContourOverlay, Marker, Polyline, SliceRef};
pub use store::{MaskMeta, SessionRecord, Store, VolumeMeta};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Largest accepted request body.
    pub max_upload_bytes: usize,
    /// Largest accepted volume, in voxels.
    pub max_voxels: usize,
    /// How long the live channel waits for further moves before computing.
    pub coalesce_window: Duration,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            max_upload_bytes: 512 << 20,
            max_voxels: 128 << 20,
            coalesce_window: Duration::from_millis(15),
        }
    }
}

pub(crate) struct SessionEntry {
    pub session: Session,
    pub record: SessionRecord,
    pub deleted: bool,
}

impl SessionEntry {
    /// Copies the session's state into the record and stamps it.
    fn sync_record(&mut self) {
        let state = self.session.state();
        self.record.params = state.params;
        self.record.seed = state.seed;
        self.record.border_seeds = state.border_seeds;
        self.record.updated_ms = store::now_ms();
    }
}

pub(crate) struct SessionSlot {
    entry: Arc<tokio::sync::Mutex<SessionEntry>>,
    closed: watch::Sender<bool>,
}

pub struct AppState {
    config: ServiceConfig,
    store: Mutex<Store>,
    volumes: Mutex<HashMap<String, Arc<Volume>>>,
    sessions: Mutex<HashMap<String, Arc<SessionSlot>>>,
}

impl AppState {
    pub fn open(config: ServiceConfig) -> std::io::Result<Arc<AppState>> {
        let store = Store::open(&config.data_dir)?;
        Ok(Arc::new(AppState {
            config,
            store: Mutex::new(store),
            volumes: Mutex::new(HashMap::new()),
            sessions: Mutex::new(HashMap::new()),
        }))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub(crate) fn store(&self) -> std::sync::MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub(crate) async fn volume(&self, id: &str) -> ApiResult<Arc<Volume>> {
        if let Some(v) = self.volumes.lock().unwrap().get(id) {
            return Ok(v.clone());
        }
        let meta = self
            .store()
            .volume(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("volume", id))?;
        let path = self.store().blob_path(&meta.sha256);
        let volume =
            tokio::task::spawn_blocking(move || nuggetcut::metaimage::load_volume(path)).await??;
        let volume = Arc::new(volume);
        Ok(self
            .volumes
            .lock()
            .unwrap()
            .entry(id.to_string())
            .or_insert(volume)
            .clone())
    }

    pub(crate) fn cache_volume(&self, id: &str, volume: Arc<Volume>) {
        self.volumes.lock().unwrap().insert(id.to_string(), volume);
    }

    pub(crate) async fn slot(&self, id: &str) -> ApiResult<Arc<SessionSlot>> {
        if let Some(s) = self.sessions.lock().unwrap().get(id) {
            return Ok(s.clone());
        }
        let record = self
            .store()
            .session(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))?;
        let volume = self.volume(&record.volume_id).await?;
        let session = Session::from_state(
            volume,
            SessionState {
                params: record.params.clone(),
                seed: record.seed,
                border_seeds: record.border_seeds.clone(),
            },
        )?;
        let slot = Arc::new(SessionSlot {
            entry: Arc::new(tokio::sync::Mutex::new(SessionEntry {
                session,
                record,
                deleted: false,
            })),
            closed: watch::channel(false).0,
        });
        let mut sessions = self.sessions.lock().unwrap();
        if self.store().session(id).is_none() {
            return Err(ApiError::not_found("session", id));
        }
        Ok(sessions.entry(id.to_string()).or_insert(slot).clone())
    }

    pub(crate) fn insert_slot(&self, entry: SessionEntry) {
        let id = entry.record.session_id.clone();
        let slot = Arc::new(SessionSlot {
            entry: Arc::new(tokio::sync::Mutex::new(entry)),
            closed: watch::channel(false).0,
        });
        self.sessions.lock().unwrap().insert(id, slot);
    }

    pub(crate) fn persist(&self, entry: &SessionEntry) -> ApiResult<()> {
        Ok(self.store().put_session(entry.record.clone())?)
    }

    /// Runs `f` on the session under its lock, on the blocking pool. Calls
    /// for one session run one at a time, in arrival order.
    pub(crate) async fn with_session<T, F>(self: &Arc<Self>, id: &str, f: F) -> ApiResult<T>
    where
        T: Send + 'static,
        F: FnOnce(&mut SessionEntry, &AppState) -> ApiResult<T> + Send + 'static,
    {
        let slot = self.slot(id).await?;
        self.with_slot(&slot, f).await
    }

    pub(crate) async fn with_slot<T, F>(self: &Arc<Self>, slot: &SessionSlot, f: F) -> ApiResult<T>
    where
        T: Send + 'static,
        F: FnOnce(&mut SessionEntry, &AppState) -> ApiResult<T> + Send + 'static,
    {
        let mut guard = slot.entry.clone().lock_owned().await;
        if guard.deleted {
            let id = guard.record.session_id.clone();
            return Err(ApiError::not_found("session", &id));
        }
        let state = self.clone();
        tokio::task::spawn_blocking(move || f(&mut guard, &state)).await?
    }

    pub(crate) async fn delete_session(&self, id: &str) -> ApiResult<()> {
        let slot = {
            let mut sessions = self.sessions.lock().unwrap();
            if !self.store().delete_session(id)? {
                return Err(ApiError::not_found("session", id));
            }
            sessions.remove(id)
        };
        if let Some(slot) = slot {
            slot.entry.lock().await.deleted = true;
            slot.closed.send_replace(true);
        }
        Ok(())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_upload_bytes;
    Router::new()
        .route("/volumes", post(api::upload_volume))
        .route("/volumes/{id}", get(api::get_volume))
        .route("/volumes/{id}/slice", get(api::get_slice))
        .route("/sessions", post(api::create_session))
        .route(
            "/sessions/{id}",
            get(api::get_session).delete(api::delete_session),
        )
        .route("/sessions/{id}/seed", put(api::put_seed))
        .route(
            "/sessions/{id}/border-seeds",
            post(api::add_border_seed).delete(api::clear_border_seeds),
        )
        .route("/sessions/{id}/contour", get(api::get_contour))
        .route("/sessions/{id}/commit", post(api::commit))
        .route("/sessions/{id}/metrics", get(api::get_metrics))
        .route("/sessions/{id}/live", get(live::upgrade))
        .route("/masks", post(api::upload_mask))
        .route("/masks/{id}", get(api::get_mask))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// A server running on a background task.
pub struct RunningService {
    pub addr: SocketAddr,
    shutdown: oneshot::Sender<()>,
    handle: JoinHandle<std::io::Result<()>>,
}

impl RunningService {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and waits for open requests to finish.
    pub async fn shutdown(self) -> std::io::Result<()> {
        let _ = self.shutdown.send(());
        self.handle.await.map_err(std::io::Error::other)?
    }
}

pub async fn spawn(config: ServiceConfig, bind: &str) -> std::io::Result<RunningService> {
    let state = AppState::open(config)?;
    let listener = TcpListener::bind(bind).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel();
    let app = router(state);
    let handle = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    Ok(RunningService {
        addr,
        shutdown: tx,
        handle,
    })
}

/// Serves until interrupted, on a fresh multi-threaded runtime.
pub fn serve_blocking(config: ServiceConfig, bind: &str) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(async {
        let state = AppState::open(config)?;
        let listener = TcpListener::bind(bind).await?;
        log::info!("listening on http://{}", listener.local_addr()?);
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })
}
