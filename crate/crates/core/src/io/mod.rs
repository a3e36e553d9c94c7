//! On-disk formats: PNG images, PLY/OBJ geometry, JSON documents and the
//! scene directory layout.

pub mod obj;
pub mod ply;
pub mod png;
mod scene;

pub use scene::{SceneDir, NATIVE_HZ};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use log::warn;
use serde::{de::DeserializeOwned, Serialize};

use crate::geometry::TriangleMesh;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {}", .0.display(), .1)]
    Format(PathBuf, String),
    #[error("encoding failed: {0}")]
    Encode(String),
}

impl IoError {
    pub fn at(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn is_not_found(&self) -> bool {
        matches!(self, IoError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes through a sibling temp file and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent).map_err(|e| IoError::at(parent, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = parent.join(format!(
        ".{name}.{}.{}.tmp",
        std::process::id(),
        TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::write(&tmp, bytes).map_err(|e| IoError::at(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        IoError::at(path, e)
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| IoError::Encode(e.to_string()))?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::at(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| IoError::Format(path.to_path_buf(), e.to_string()))
}

/// Fan-triangulates polygons, dropping triangles with repeated indices.
pub(crate) fn triangulate(polygons: &[Vec<u32>]) -> Vec<[u32; 3]> {
    let mut faces = Vec::new();
    let mut dropped = 0;
    for poly in polygons {
        for k in 1..poly.len().saturating_sub(1) {
            let f = [poly[0], poly[k], poly[k + 1]];
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                dropped += 1;
            } else {
                faces.push(f);
            }
        }
    }
    if dropped > 0 {
        warn!("dropped {dropped} degenerate triangles");
    }
    faces
}

/// Loads a mesh by extension (`.obj` or `.ply`).
pub fn read_mesh(path: &Path) -> Result<TriangleMesh, IoError> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("obj") => obj::read_obj(path),
        Some("ply") => ply::read_mesh(path),
        _ => Err(IoError::Format(path.to_path_buf(), "mesh must be .obj or .ply".into())),
    }
}

/// Every `.obj`/`.ply` file in `dir`, keyed by file stem.
pub fn load_mesh_dir(dir: &Path) -> Result<BTreeMap<String, TriangleMesh>, IoError> {
    let mut meshes = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| IoError::at(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("obj") | Some("ply")
            )
        })
        .collect();
    paths.sort();
    for path in paths {
        let key = path.file_stem().unwrap().to_string_lossy().into_owned();
        if meshes.contains_key(&key) {
            warn!("ignoring {}: mesh key '{key}' already loaded", path.display());
            continue;
        }
        meshes.insert(key, read_mesh(&path)?);
    }
    Ok(meshes)
}
