use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::Json;
use nuggetcut::evalstat::dice;
use nuggetcut::metaimage::{decode_mask, decode_volume, encode_mask, encode_volume};
use nuggetcut::segmenter::{SegmentationSummary, SessionState};
use nuggetcut::surface::Plane;
use nuggetcut::vec3::Vec3;
use nuggetcut::{Segmentation, SegmentationParams, Session};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};
use crate::render::{self, ContourAvailability, ContourOverlay};
use crate::store::{self, mask_id_for, volume_id_for, MaskMeta, SessionRecord, VolumeMeta};
use crate::{AppState, SessionEntry};

type AppRef = State<Arc<AppState>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point {
    pub fn to_vec3(self) -> Vec3 {
        [self.x, self.y, self.z]
    }
}

impl From<Vec3> for Point {
    fn from(p: Vec3) -> Self {
        Point {
            x: p[0],
            y: p[1],
            z: p[2],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub volume_id: String,
    #[serde(default)]
    pub params: SegmentationParams,
    /// Initial seed in world mm; the volume centre when absent.
    #[serde(default)]
    pub seed: Option<Point>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentReply {
    pub session_id: String,
    pub summary: SegmentationSummary,
    pub border_seeds: Vec<Vec3>,
    pub contours: ContourAvailability,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub session_id: String,
    pub reference: String,
    pub dsc: f64,
    pub dsc_percent: f64,
    pub reference_voxels: usize,
    pub segmentation_voxels: usize,
    pub reference_volume_mm3: f64,
    pub segmentation_volume_mm3: f64,
}

#[derive(Debug, Deserialize)]
pub struct SliceQuery {
    plane: Plane,
    index: usize,
    window_center: Option<f64>,
    window_width: Option<f64>,
}

#[derive(Debug, Deserialize)]
pub struct ContourQuery {
    plane: Plane,
    index: usize,
}

#[derive(Debug, Deserialize)]
pub struct MetricsQuery {
    reference: String,
}

fn reply(entry: &SessionEntry, seg: &Segmentation) -> SegmentReply {
    SegmentReply {
        session_id: entry.record.session_id.clone(),
        summary: seg.summary(),
        border_seeds: entry.session.border_seeds().to_vec(),
        contours: render::availability(&seg.surface, seg.mask.geometry()),
    }
}

/// The session's current result, computed if the last call invalidated it.
fn current(entry: &mut SessionEntry) -> ApiResult<Arc<Segmentation>> {
    match entry.session.last_result() {
        Some(s) => Ok(s.clone()),
        None => Ok(entry.session.segment()?),
    }
}

pub async fn upload_volume(State(state): AppRef, body: Bytes) -> ApiResult<impl IntoResponse> {
    let max_voxels = state.config().max_voxels;
    let (volume, canonical) = tokio::task::spawn_blocking(move || -> ApiResult<_> {
        let volume = decode_volume(&body, None)?;
        if volume.geometry().len() > max_voxels {
            return Err(ApiError::too_large(format!(
                "volume has {} voxels, limit is {max_voxels}",
                volume.geometry().len()
            )));
        }
        let canonical = encode_volume(&volume);
        Ok((volume, canonical))
    })
    .await??;
    let g = *volume.geometry();
    let meta = {
        let mut store = state.store();
        let sha = store.put_blob(&canonical)?;
        store.register_volume(VolumeMeta {
            volume_id: volume_id_for(&sha),
            sha256: sha,
            dims: g.dims,
            spacing: g.spacing,
            origin: g.origin,
            created_ms: store::now_ms(),
        })?
    };
    state.cache_volume(&meta.volume_id, Arc::new(volume));
    Ok((StatusCode::CREATED, Json(meta)))
}

pub async fn get_volume(
    State(state): AppRef,
    Path(id): Path<String>,
) -> ApiResult<Json<VolumeMeta>> {
    state
        .store()
        .volume(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found("volume", &id))
}

pub async fn get_slice(
    State(state): AppRef,
    Path(id): Path<String>,
    Query(q): Query<SliceQuery>,
) -> ApiResult<impl IntoResponse> {
    let volume = state.volume(&id).await?;
    let png = tokio::task::spawn_blocking(move || {
        render::slice_png(
            &volume,
            q.plane,
            q.index,
            q.window_center.unwrap_or(render::DEFAULT_WINDOW_CENTER),
            q.window_width.unwrap_or(render::DEFAULT_WINDOW_WIDTH),
        )
    })
    .await??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png))
}

pub async fn create_session(
    State(state): AppRef,
    Json(req): Json<CreateSession>,
) -> ApiResult<impl IntoResponse> {
    let volume = state.volume(&req.volume_id).await?;
    let seed = match req.seed {
        Some(p) => p.to_vec3(),
        None => {
            let (lo, hi) = volume.geometry().hull();
            [0, 1, 2].map(|k| 0.5 * (lo[k] + hi[k]))
        }
    };
    let session = Session::from_state(
        volume,
        SessionState {
            params: req.params,
            seed,
            border_seeds: Vec::new(),
        },
    )?;
    let now = store::now_ms();
    let record = {
        let mut store = state.store();
        let record = SessionRecord {
            session_id: store.allocate_session_id(),
            volume_id: req.volume_id,
            params: session.params().clone(),
            seed,
            border_seeds: Vec::new(),
            created_ms: now,
            updated_ms: now,
            committed_masks: Vec::new(),
        };
        store.put_session(record.clone())?;
        record
    };
    state.insert_slot(SessionEntry {
        session,
        record: record.clone(),
        deleted: false,
    });
    Ok((StatusCode::CREATED, Json(record)))
}

pub async fn get_session(
    State(state): AppRef,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionRecord>> {
    let record = state.with_session(&id, |e, _| Ok(e.record.clone())).await?;
    Ok(Json(record))
}

pub async fn delete_session(State(state): AppRef, Path(id): Path<String>) -> ApiResult<StatusCode> {
    state.delete_session(&id).await?;
    Ok(StatusCode::NO_CONTENT)
}

pub async fn put_seed(
    State(state): AppRef,
    Path(id): Path<String>,
    Json(p): Json<Point>,
) -> ApiResult<Json<SegmentReply>> {
    let out = state
        .with_session(&id, move |e, st| {
            let seg = e.session.drag_seed(p.to_vec3())?;
            e.sync_record();
            st.persist(e)?;
            Ok(reply(e, &seg))
        })
        .await?;
    Ok(Json(out))
}

pub async fn add_border_seed(
    State(state): AppRef,
    Path(id): Path<String>,
    Json(p): Json<Point>,
) -> ApiResult<Json<SegmentReply>> {
    let out = state
        .with_session(&id, move |e, st| {
            let seg = e.session.add_border_seed(p.to_vec3())?;
            e.sync_record();
            st.persist(e)?;
            Ok(reply(e, &seg))
        })
        .await?;
    Ok(Json(out))
}

pub async fn clear_border_seeds(
    State(state): AppRef,
    Path(id): Path<String>,
) -> ApiResult<Json<SegmentReply>> {
    let out = state
        .with_session(&id, move |e, st| {
            e.session.clear_border_seeds();
            e.sync_record();
            st.persist(e)?;
            let seg = current(e)?;
            Ok(reply(e, &seg))
        })
        .await?;
    Ok(Json(out))
}

pub async fn get_contour(
    State(state): AppRef,
    Path(id): Path<String>,
    Query(q): Query<ContourQuery>,
) -> ApiResult<Json<ContourOverlay>> {
    let out = state
        .with_session(&id, move |e, _| {
            let seg = current(e)?;
            render::overlay(
                &seg.surface,
                seg.mask.geometry(),
                q.plane,
                q.index,
                seg.seed,
                e.session.border_seeds(),
            )
        })
        .await?;
    Ok(Json(out))
}

pub async fn commit(State(state): AppRef, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let meta = state
        .with_session(&id, move |e, st| {
            let seg = current(e)?;
            let bytes = encode_mask(&seg.mask);
            let meta = {
                let mut store = st.store();
                let sha = store.put_blob(&bytes)?;
                store.register_mask(MaskMeta {
                    mask_id: mask_id_for(&sha),
                    sha256: sha,
                    dims: seg.mask.geometry().dims,
                    voxel_count: seg.mask.count(),
                    session_id: Some(e.record.session_id.clone()),
                    created_ms: store::now_ms(),
                })?
            };
            if !e.record.committed_masks.contains(&meta.mask_id) {
                e.record.committed_masks.push(meta.mask_id.clone());
            }
            e.sync_record();
            st.persist(e)?;
            Ok(meta)
        })
        .await?;
    Ok((StatusCode::CREATED, Json(meta)))
}

pub async fn get_metrics(
    State(state): AppRef,
    Path(id): Path<String>,
    Query(q): Query<MetricsQuery>,
) -> ApiResult<Json<Metrics>> {
    let reference = load_mask(&state, &q.reference).await?;
    let out = state
        .with_session(&id, move |e, _| {
            let seg = current(e)?;
            let d = dice(&reference, &seg.mask)?;
            Ok(Metrics {
                session_id: e.record.session_id.clone(),
                reference: q.reference,
                dsc: d,
                dsc_percent: 100.0 * d,
                reference_voxels: reference.count(),
                segmentation_voxels: seg.mask.count(),
                reference_volume_mm3: reference.physical_volume_mm3(),
                segmentation_volume_mm3: seg.mask.physical_volume_mm3(),
            })
        })
        .await?;
    Ok(Json(out))
}

async fn load_mask(state: &AppState, id: &str) -> ApiResult<nuggetcut::BinaryMask> {
    let bytes = mask_bytes(state, id)?;
    Ok(tokio::task::spawn_blocking(move || decode_mask(&bytes, None)).await??)
}

fn mask_bytes(state: &AppState, id: &str) -> ApiResult<Vec<u8>> {
    let store = state.store();
    let meta = store
        .mask(id)
        .ok_or_else(|| ApiError::not_found("mask", id))?;
    Ok(store.read_blob(&meta.sha256)?)
}

pub async fn upload_mask(State(state): AppRef, body: Bytes) -> ApiResult<impl IntoResponse> {
    let max_voxels = state.config().max_voxels;
    let (mask, canonical) = tokio::task::spawn_blocking(move || -> ApiResult<_> {
        let mask = decode_mask(&body, None)?;
        if mask.geometry().len() > max_voxels {
            return Err(ApiError::too_large(format!(
                "mask has {} voxels, limit is {max_voxels}",
                mask.geometry().len()
            )));
        }
        let canonical = encode_mask(&mask);
        Ok((mask, canonical))
    })
    .await??;
    let meta = {
        let mut store = state.store();
        let sha = store.put_blob(&canonical)?;
        store.register_mask(MaskMeta {
            mask_id: mask_id_for(&sha),
            sha256: sha,
            dims: mask.geometry().dims,
            voxel_count: mask.count(),
            session_id: None,
            created_ms: store::now_ms(),
        })?
    };
    Ok((StatusCode::CREATED, Json(meta)))
}

pub async fn get_mask(
    State(state): AppRef,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    let bytes = mask_bytes(&state, &id)?;
    let disposition = format!("attachment; filename=\"{id}.mhd\"");
    Ok((
        [
            (header::CONTENT_TYPE, "application/octet-stream".to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        bytes,
    ))
}
