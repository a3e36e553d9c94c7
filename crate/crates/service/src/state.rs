use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex as StdMutex};

use serde::Serialize;
use tokio::sync::{Mutex, RwLock};

use scenelabel::io::{load_mesh_dir, SceneDir};
use scenelabel::labeler::MeshLibrary;
use scenelabel::session::SceneSession;

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderState {
    Idle,
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderStatus {
    pub state: RenderState,
    pub frames_done: usize,
    pub frames_total: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RenderStatus {
    fn idle() -> Self {
        Self {
            state: RenderState::Idle,
            frames_done: 0,
            frames_total: 0,
            error: None,
        }
    }
}

/// One loaded scene. Reads share `session`; mutations take it exclusively.
/// Alignments are serialized through `align` so they run one at a time in
/// arrival order (tokio locks are fair).
pub struct SceneEntry {
    pub session: Arc<RwLock<SceneSession>>,
    pub align: Mutex<()>,
    pub render: StdMutex<RenderStatus>,
}

impl SceneEntry {
    pub fn render_status(&self) -> RenderStatus {
        self.render.lock().expect("render status lock").clone()
    }

    pub fn set_render(&self, f: impl FnOnce(&mut RenderStatus)) {
        f(&mut self.render.lock().expect("render status lock"));
    }
}

pub struct AppState {
    pub scenes_root: PathBuf,
    pub meshes: Arc<MeshLibrary>,
    loaded: Mutex<HashMap<String, Arc<SceneEntry>>>,
}

impl AppState {
    /// Loads the mesh library eagerly; scenes are loaded on first access.
    pub fn new(scenes_root: impl Into<PathBuf>, meshes_dir: Option<&Path>) -> Result<Self, ApiError> {
        let scenes_root = scenes_root.into();
        let default_dir = scenes_root.join("meshes");
        let meshes = match meshes_dir {
            Some(dir) => load_mesh_dir(dir)?,
            None if default_dir.is_dir() => load_mesh_dir(&default_dir)?,
            None => MeshLibrary::new(),
        };
        log::info!("{} meshes in the library", meshes.len());
        Ok(Self::with_meshes(scenes_root, meshes))
    }

    pub fn with_meshes(scenes_root: impl Into<PathBuf>, meshes: MeshLibrary) -> Self {
        Self {
            scenes_root: scenes_root.into(),
            meshes: Arc::new(meshes),
            loaded: Mutex::new(HashMap::new()),
        }
    }

    /// Scene ids are the names of subdirectories holding a `camera.json`.
    pub fn scene_ids(&self) -> Result<Vec<String>, ApiError> {
        let entries = std::fs::read_dir(&self.scenes_root)
            .map_err(|e| ApiError::internal(format!("{}: {e}", self.scenes_root.display())))?;
        let mut ids: Vec<String> = entries
            .filter_map(Result::ok)
            .filter(|e| e.path().join("camera.json").is_file())
            .filter_map(|e| e.file_name().to_str().map(str::to_owned))
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub async fn scene(&self, id: &str) -> Result<Arc<SceneEntry>, ApiError> {
        let valid = !id.is_empty() && !id.starts_with('.') && !id.contains(['/', '\\']);
        let dir = SceneDir::new(self.scenes_root.join(id));
        if !valid || !dir.camera().is_file() {
            return Err(ApiError::unknown_scene(id));
        }
        let mut loaded = self.loaded.lock().await;
        if let Some(entry) = loaded.get(id) {
            return Ok(entry.clone());
        }
        let session = tokio::task::spawn_blocking(move || SceneSession::load(&dir))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??;
        let entry = Arc::new(SceneEntry {
            session: Arc::new(RwLock::new(session)),
            align: Mutex::new(()),
            render: StdMutex::new(RenderStatus::idle()),
        });
        loaded.insert(id.to_owned(), entry.clone());
        Ok(entry)
    }
}
