use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::Point3;

use scenelabel::eval::{
    downsample_scene, pose_error_over_frames, segmentation_report, timing_report, SegmentationReport,
    PoseErrorReport, TimingLog,
};
use scenelabel::fusion::{icp_odometry, reconstruct, OdometryParams, Trajectory};
use scenelabel::geometry::Image;
use scenelabel::io::{self, load_mesh_dir, png, ply, SceneDir};
use scenelabel::labeler::{render_frames, MeshLibrary, ObjectAnnotation};
use scenelabel::registration::{align_object, AlignOptions};
use scenelabel::session::{SceneSession, SessionStatus};
use scenelabel::synth::{generate, ObjectClicks, SynthSceneSpec};
use scenelabel_service::AppState;

use crate::error::CliError;

fn record_timing(scene: &SceneDir, stage: &str, started: Instant, frames: usize) -> Result<(), CliError> {
    let path = scene.timing_log();
    let mut log: TimingLog = match io::read_json(&path) {
        Ok(log) => log,
        Err(e) if e.is_not_found() => TimingLog::default(),
        Err(e) => return Err(e.into()),
    };
    log.record(stage, started.elapsed().as_secs_f64(), frames);
    io::write_json(&path, &log)?;
    Ok(())
}

fn existing_scene(dir: &Path) -> Result<SceneDir, CliError> {
    let scene = SceneDir::new(dir);
    if !scene.camera().is_file() {
        return Err(CliError::user(
            "missing-input",
            format!("{} is not a scene directory (no camera.json)", dir.display()),
        ));
    }
    Ok(scene)
}

fn mesh_library(scene: &SceneDir, meshes: Option<&Path>) -> Result<MeshLibrary, CliError> {
    let dir = meshes.map_or_else(|| scene.meshes_dir(), Path::to_path_buf);
    Ok(load_mesh_dir(&dir)?)
}

pub fn fuse(dir: &Path, voxel: f64, odometry: bool, bounds: Option<&[f64]>) -> Result<(), CliError> {
    let scene = existing_scene(dir)?;
    if !odometry && !scene.trajectory().is_file() {
        return Err(CliError::user(
            "missing-trajectory",
            "scene has no trajectory.json; pass --odometry to estimate one",
        ));
    }
    let intr = scene.read_camera()?;
    let frames = scene.read_frames(&intr)?;
    if frames.is_empty() {
        return Err(CliError::user("missing-input", "scene has no frames"));
    }
    let trajectory: Trajectory = if odometry {
        let started = Instant::now();
        let t = icp_odometry(&frames, &intr, &OdometryParams::default())?;
        io::write_json(&scene.trajectory(), &t)?;
        record_timing(&scene, "odometry", started, frames.len())?;
        log::info!("estimated {} camera poses", t.len());
        t
    } else {
        io::read_json(&scene.trajectory())?
    };

    let bounds = bounds.map(|b| (Point3::new(b[0], b[1], b[2]), Point3::new(b[3], b[4], b[5])));
    let started = Instant::now();
    let (_, cloud) = reconstruct(&frames, &intr, &trajectory, voxel, bounds)?;
    ply::write_cloud(&scene.reconstruction(), &cloud)?;
    record_timing(&scene, "fusion", started, trajectory.len())?;
    log::info!("reconstruction has {} points", cloud.len());

    let mut session = SceneSession::load(&scene)?;
    session.advance(session.status().max(SessionStatus::Fused))?;
    session.save()?;
    Ok(())
}

pub fn align(dir: &Path, clicks: &Path, meshes: Option<&Path>) -> Result<(), CliError> {
    let scene = existing_scene(dir)?;
    let clicks: Vec<ObjectClicks> = io::read_json(clicks)?;
    let library = mesh_library(&scene, meshes)?;
    let mut session = SceneSession::load(&scene)?;
    if session.status() < SessionStatus::Fused {
        return Err(CliError::user("missing-reconstruction", "run fuse before align"));
    }
    let started = Instant::now();
    for oc in &clicks {
        let mesh = library
            .get(&oc.mesh)
            .ok_or_else(|| CliError::user("unknown-mesh", format!("unknown mesh '{}'", oc.mesh)))?;
        let a = align_object(session.active_cloud(), mesh, &oc.clicks, &AlignOptions::default())?;
        log::info!(
            "object {} ({}): fitness {:.3}, rmse {:.4} m, {} iterations",
            oc.object_id,
            oc.mesh,
            a.icp.fitness,
            a.icp.rmse,
            a.icp.iterations_used
        );
        session.upsert_annotation(ObjectAnnotation::new(oc.object_id, oc.mesh.clone(), a.pose))?;
    }
    session.save()?;
    record_timing(&scene, "align", started, 0)
}

pub fn serve(root: &Path, listen: SocketAddr, meshes: Option<&Path>) -> Result<(), CliError> {
    let state = AppState::new(root, meshes).map_err(|e| CliError::user(e.class, e.message))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::internal("runtime", e.to_string()))?;
    runtime
        .block_on(scenelabel_service::serve(listen, Arc::new(state)))
        .map_err(|e| CliError::internal("io-error", e.to_string()))
}

pub fn render(dir: &Path, meshes: Option<&Path>) -> Result<(), CliError> {
    let scene = existing_scene(dir)?;
    let mut session = SceneSession::load(&scene)?;
    if session.annotations().is_empty() {
        return Err(CliError::user("missing-annotations", "scene has no annotations.json to render"));
    }
    let library = mesh_library(&scene, meshes)?;
    let intr = scene.read_camera()?;
    let started = Instant::now();
    let summary = render_frames(&scene, &intr, &session.trajectory, session.annotations(), &library, &|_| {})?;
    record_timing(&scene, "render", started, summary.frames)?;
    log::info!("rendered {} frames with {} objects", summary.frames, summary.objects);
    session.advance(SessionStatus::Rendered)?;
    session.save()?;
    Ok(())
}

pub fn synth(spec: &Path, out: &Path) -> Result<(), CliError> {
    let spec = SynthSceneSpec::load(spec)?;
    let scene = generate(&spec)?;
    scene.write(&SceneDir::new(out))?;
    log::info!("wrote {} frames to {}", scene.frame_count(), out.display());
    Ok(())
}

#[derive(serde::Serialize)]
struct EvalReport {
    segmentation: SegmentationReport,
    poses: PoseErrorReport,
}

pub fn eval(dir: &Path, truth: &Path, json: Option<&Path>) -> Result<(), CliError> {
    let scene = existing_scene(dir)?;
    let truth = SceneDir::new(truth);
    let mut label_pairs = Vec::new();
    let mut pose_pairs = Vec::new();
    for frame in 0..scene.frame_count() {
        if !truth.label(frame).is_file() {
            continue;
        }
        let expected = png::read_gray8(&truth.label(frame))?;
        let predicted = if scene.label(frame).is_file() {
            png::read_gray8(&scene.label(frame))?
        } else {
            log::warn!("frame {frame} has no rendered label; scoring it as empty");
            Image::filled(expected.width(), expected.height(), 0)
        };
        label_pairs.push((frame, predicted, expected));
        if truth.pose(frame).is_file() {
            let expected: Vec<ObjectAnnotation> = io::read_json(&truth.pose(frame))?;
            let predicted: Vec<ObjectAnnotation> = match io::read_json(&scene.pose(frame)) {
                Ok(p) => p,
                Err(e) if e.is_not_found() => Vec::new(),
                Err(e) => return Err(e.into()),
            };
            pose_pairs.push((predicted, expected));
        }
    }
    if label_pairs.is_empty() {
        return Err(CliError::user("missing-input", "no ground-truth labels matched the scene's frames"));
    }
    let report = EvalReport {
        segmentation: segmentation_report(&label_pairs)?,
        poses: pose_error_over_frames(&pose_pairs),
    };
    println!("frames: {}", report.segmentation.frames.len());
    for (id, iou) in &report.segmentation.per_object {
        print!("object {id}: IoU {iou:.4}");
        match report.poses.per_object.get(id) {
            Some(e) => println!(", pose error {:.3} deg {:.2} mm", e.rotation_rad.to_degrees(), e.translation_m * 1e3),
            None => println!(),
        }
    }
    println!("mean IoU: {:.4}", report.segmentation.mean_iou);
    println!(
        "mean pose error: {:.3} deg {:.2} mm",
        report.poses.mean_rotation_rad.to_degrees(),
        report.poses.mean_translation_m * 1e3
    );
    if let Some(path) = json {
        io::write_json(path, &report)?;
    }
    Ok(())
}

pub fn downsample(dir: &Path, hz: f64, out: &Path, native_hz: f64) -> Result<(), CliError> {
    let scene = existing_scene(dir)?;
    let summary = downsample_scene(&scene, &SceneDir::new(out), hz, native_hz)?;
    println!(
        "kept {} of {} frames (every {} at {} Hz)",
        summary.source_frames.len(),
        scene.frame_count(),
        summary.stride,
        summary.target_hz
    );
    Ok(())
}

pub fn timing(dir: &Path) -> Result<(), CliError> {
    let scene = SceneDir::new(dir);
    let path: PathBuf = scene.timing_log();
    let log: TimingLog = io::read_json(&path)?;
    print!("{}", timing_report(&log));
    Ok(())
}
