//! HTTP/JSON service for the annotation workflow: browse reconstructions
//! and meshes, segment the table, align objects from three clicked
//! correspondences, store annotations and render labels in the background.

mod error;
mod state;

pub use error::ApiError;
pub use state::{AppState, RenderState, RenderStatus, SceneEntry};

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use scenelabel::geometry::{PointCloud, RigidTransform};
use scenelabel::labeler::{render_frames, ObjectAnnotation};
use scenelabel::registration::{align_object, AlignOptions, ClickSet, IcpParams};
use scenelabel::session::{SessionStatus, TablePlane};

type Shared = State<Arc<AppState>>;
type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/scenes", get(list_scenes))
        .route("/scenes/{id}", get(scene_detail))
        .route("/scenes/{id}/cloud", get(cloud))
        .route("/scenes/{id}/table-click", post(table_click).delete(undo_table))
        .route("/scenes/{id}/align", post(align))
        .route("/scenes/{id}/annotations", get(list_annotations).post(put_annotation))
        .route("/scenes/{id}/annotations/{object_id}", delete(delete_annotation))
        .route("/scenes/{id}/render", post(start_render))
        .route("/scenes/{id}/render/status", get(render_status))
        .route("/meshes", get(list_meshes))
        .route("/meshes/{key}", get(mesh))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SceneSummary {
    pub scene_id: String,
    pub status: SessionStatus,
}

async fn list_scenes(State(app): Shared) -> ApiResult<Json<Vec<SceneSummary>>> {
    let mut out = Vec::new();
    for id in app.scene_ids()? {
        let entry = app.scene(&id).await?;
        let status = entry.session.read().await.status();
        out.push(SceneSummary { scene_id: id, status });
    }
    Ok(Json(out))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SceneDetail {
    pub scene_id: String,
    pub status: SessionStatus,
    pub frames: usize,
    pub points: usize,
    pub active_points: usize,
    pub cloud_version: u64,
    pub table: Option<TablePlane>,
    pub annotations: Vec<ObjectAnnotation>,
}

async fn scene_detail(State(app): Shared, Path(id): Path<String>) -> ApiResult<Json<SceneDetail>> {
    let entry = app.scene(&id).await?;
    let s = entry.session.read().await;
    Ok(Json(SceneDetail {
        scene_id: s.scene_id.clone(),
        status: s.status(),
        frames: s.frames.len(),
        points: s.reconstruction.len(),
        active_points: s.active_cloud().len(),
        cloud_version: s.cloud_version(),
        table: s.table,
        annotations: s.annotations().to_vec(),
    }))
}

#[derive(Debug, Deserialize)]
struct CloudQuery {
    decimation: Option<usize>,
}

/// `u64` little-endian point count followed by `x y z` as little-endian `f32`.
pub fn encode_cloud(cloud: &PointCloud, stride: usize) -> Vec<u8> {
    let stride = stride.max(1);
    let count = cloud.len().div_ceil(stride);
    let mut out = Vec::with_capacity(8 + 12 * count);
    out.extend_from_slice(&(count as u64).to_le_bytes());
    for p in cloud.points.iter().step_by(stride) {
        for c in [p.x, p.y, p.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
    out
}

async fn cloud(State(app): Shared, Path(id): Path<String>, Query(q): Query<CloudQuery>) -> ApiResult<impl IntoResponse> {
    let stride = q.decimation.unwrap_or(1);
    if stride == 0 {
        return Err(ApiError::bad_request("decimation must be at least 1"));
    }
    let entry = app.scene(&id).await?;
    let s = entry.session.read().await;
    if s.status() < SessionStatus::Fused {
        return Err(ApiError::new(StatusCode::CONFLICT, "invalid-state", "scene has not been fused"));
    }
    let body = encode_cloud(s.active_cloud(), stride);
    let version = s.cloud_version().to_string();
    Ok((
        [(header::CONTENT_TYPE, "application/octet-stream".to_owned()), (header::ETAG, version)],
        Bytes::from(body),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TableClickRequest {
    pub point: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TableClickResponse {
    pub cloud_version: u64,
    pub plane: Option<TablePlane>,
    pub remaining_points: usize,
}

async fn table_click(
    State(app): Shared,
    Path(id): Path<String>,
    Json(req): Json<TableClickRequest>,
) -> ApiResult<Json<TableClickResponse>> {
    if !req.point.iter().all(|c| c.is_finite()) {
        return Err(ApiError::bad_request("point must be finite"));
    }
    let entry = app.scene(&id).await?;
    let mut guard = entry.session.clone().write_owned().await;
    let response = blocking(move || {
        guard.segment_table(&Point3::from(req.point))?;
        guard.save()?;
        Ok::<_, ApiError>(TableClickResponse {
            cloud_version: guard.cloud_version(),
            plane: guard.table,
            remaining_points: guard.active_cloud().len(),
        })
    })
    .await??;
    Ok(Json(response))
}

async fn undo_table(State(app): Shared, Path(id): Path<String>) -> ApiResult<Json<TableClickResponse>> {
    let entry = app.scene(&id).await?;
    let mut s = entry.session.write().await;
    s.undo_table();
    s.save()?;
    Ok(Json(TableClickResponse {
        cloud_version: s.cloud_version(),
        plane: None,
        remaining_points: s.active_cloud().len(),
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignRequest {
    pub mesh_key: String,
    #[serde(flatten)]
    pub clicks: ClickSet,
    /// Partial overrides; missing fields keep their defaults.
    #[serde(default)]
    pub icp: Option<IcpParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignResponse {
    pub rough_pose: RigidTransform,
    pub refined_pose: RigidTransform,
    pub fitness: f64,
    pub rmse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub cropped_points: usize,
}

async fn align(State(app): Shared, Path(id): Path<String>, Json(req): Json<AlignRequest>) -> ApiResult<Json<AlignResponse>> {
    if !req.clicks.is_finite() {
        return Err(ApiError::bad_request("click coordinates must be finite"));
    }
    let entry = app.scene(&id).await?;
    let mesh = app
        .meshes
        .get(&req.mesh_key)
        .cloned()
        .ok_or_else(|| ApiError::unknown_mesh(&req.mesh_key))?;
    let _turn = entry.align.lock().await;
    let cloud = {
        let s = entry.session.read().await;
        if s.status() < SessionStatus::Fused {
            return Err(ApiError::new(StatusCode::CONFLICT, "invalid-state", "scene has not been fused"));
        }
        s.active_cloud().clone()
    };
    let options = AlignOptions {
        icp: req.icp.unwrap_or_default(),
        ..AlignOptions::default()
    };
    let alignment = blocking(move || align_object(&cloud, &mesh, &req.clicks, &options)).await??;
    Ok(Json(AlignResponse {
        rough_pose: alignment.rough_pose,
        refined_pose: alignment.pose,
        fitness: alignment.icp.fitness,
        rmse: alignment.icp.rmse,
        iterations: alignment.icp.iterations_used,
        converged: alignment.icp.converged,
        cropped_points: alignment.cropped_points,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub object_id: u8,
    #[serde(alias = "mesh")]
    pub mesh_key: String,
    pub pose: RigidTransform,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnnotationResponse {
    /// False when an identical annotation was already stored.
    pub changed: bool,
    pub annotation: ObjectAnnotation,
}

async fn list_annotations(State(app): Shared, Path(id): Path<String>) -> ApiResult<Json<Vec<ObjectAnnotation>>> {
    let entry = app.scene(&id).await?;
    let s = entry.session.read().await;
    Ok(Json(s.annotations().to_vec()))
}

async fn put_annotation(
    State(app): Shared,
    Path(id): Path<String>,
    Json(req): Json<AnnotationRequest>,
) -> ApiResult<Json<AnnotationResponse>> {
    let entry = app.scene(&id).await?;
    if !app.meshes.contains_key(&req.mesh_key) {
        return Err(ApiError::unknown_mesh(&req.mesh_key));
    }
    let annotation = ObjectAnnotation::new(req.object_id, req.mesh_key, req.pose);
    let mut s = entry.session.write().await;
    let changed = s.upsert_annotation(annotation.clone())?;
    if changed {
        s.save()?;
    }
    Ok(Json(AnnotationResponse { changed, annotation }))
}

async fn delete_annotation(
    State(app): Shared,
    Path((id, object_id)): Path<(String, u8)>,
) -> ApiResult<Json<ObjectAnnotation>> {
    let entry = app.scene(&id).await?;
    let mut s = entry.session.write().await;
    let removed = s.remove_annotation(object_id).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "unknown-object", format!("no annotation for object {object_id}"))
    })?;
    s.save()?;
    Ok(Json(removed))
}

async fn start_render(State(app): Shared, Path(id): Path<String>) -> ApiResult<(StatusCode, Json<RenderStatus>)> {
    let entry = app.scene(&id).await?;
    let (dir, trajectory, annotations) = {
        let s = entry.session.read().await;
        if s.status() < SessionStatus::Annotated || s.annotations().is_empty() {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "invalid-state",
                "scene has no annotations to render",
            ));
        }
        (s.dir.clone(), s.trajectory.clone(), s.annotations().to_vec())
    };
    {
        let mut status = entry.render.lock().expect("render status lock");
        if matches!(status.state, RenderState::Queued | RenderState::Running) {
            return Err(ApiError::new(StatusCode::CONFLICT, "render-in-progress", "a render job is already active"));
        }
        *status = RenderStatus {
            state: RenderState::Queued,
            frames_done: 0,
            frames_total: trajectory.len(),
            error: None,
        };
    }
    let queued = entry.render_status();
    let meshes = app.meshes.clone();
    let job_entry = entry.clone();
    tokio::spawn(async move {
        let worker_entry = job_entry.clone();
        let outcome = tokio::task::spawn_blocking(move || {
            worker_entry.set_render(|r| r.state = RenderState::Running);
            let intr = dir.read_camera()?;
            let progress = |n: usize| worker_entry.set_render(|r| r.frames_done = r.frames_done.max(n));
            render_frames(&dir, &intr, &trajectory, &annotations, &meshes, &progress).map_err(ApiError::from)
        })
        .await
        .unwrap_or_else(|e| Err(ApiError::internal(e.to_string())));
        let outcome = match outcome {
            Ok(_) => {
                let mut s = job_entry.session.write().await;
                s.advance(SessionStatus::Rendered).map_err(ApiError::from).and_then(|_| s.save().map_err(ApiError::from))
            }
            Err(e) => Err(e),
        };
        job_entry.set_render(|r| match outcome {
            Ok(()) => r.state = RenderState::Done,
            Err(e) => {
                log::warn!("render failed: {}", e.message);
                r.state = RenderState::Failed;
                r.error = Some(format!("{}: {}", e.class, e.message));
            }
        });
    });
    Ok((StatusCode::ACCEPTED, Json(queued)))
}

async fn render_status(State(app): Shared, Path(id): Path<String>) -> ApiResult<Json<RenderStatus>> {
    let entry = app.scene(&id).await?;
    Ok(Json(entry.render_status()))
}

async fn list_meshes(State(app): Shared) -> Json<Vec<String>> {
    Json(app.meshes.keys().cloned().collect())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MeshPayload {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
}

async fn mesh(State(app): Shared, Path(key): Path<String>) -> ApiResult<Json<MeshPayload>> {
    let mesh = app.meshes.get(&key).ok_or_else(|| ApiError::unknown_mesh(&key))?;
    Ok(Json(MeshPayload {
        vertices: mesh.vertices().iter().map(|v| [v.x, v.y, v.z]).collect(),
        faces: mesh.faces().to_vec(),
    }))
}
