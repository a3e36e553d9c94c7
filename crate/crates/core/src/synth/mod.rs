//! Synthetic RGBD scenes with exact ground truth.
//!
//! Primitives are tessellated and drawn through the same rasterizer the
//! labeler uses, so generated depth and labels agree with rendered labels by
//! construction. Every frame draws its depth noise from its own ChaCha
//! stream, making output independent of evaluation order.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fusion::Trajectory;
use crate::geometry::{CameraIntrinsics, DepthImage, Image, RgbImage, RgbdFrame, RigidTransform, TriangleMesh};
use crate::io::{self, IoError, SceneDir};
use crate::labeler::{rasterize_labels, LabelError, LabelImage, MeshLibrary, ObjectAnnotation, Rasterizer};
use crate::registration::ClickSet;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("degenerate trajectory: {0}")]
    DegenerateTrajectory(String),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl SynthError {
    pub fn class(&self) -> &'static str {
        match self {
            SynthError::InvalidSpec(_) => "invalid-spec",
            SynthError::DegenerateTrajectory(_) => "degenerate-trajectory",
            SynthError::Label(e) => e.class(),
            SynthError::Io(_) => "io-error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Shape {
    /// Axis-aligned box centered on the object origin, meters.
    Box { size: [f64; 3] },
    Sphere {
        radius: f64,
        #[serde(default = "default_sphere_step")]
        step_deg: f64,
    },
    /// Rectangle in the object's z = 0 plane.
    Plane { size: [f64; 2] },
    /// OBJ or PLY file; relative paths resolve against the spec file.
    Mesh { path: PathBuf },
}

fn default_sphere_step() -> f64 {
    1.0
}

impl Shape {
    pub fn tessellate(&self) -> Result<TriangleMesh, SynthError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        match self {
            Shape::Box { size } if size.iter().all(|&s| positive(s)) => Ok(TriangleMesh::cuboid(size[0], size[1], size[2])),
            Shape::Sphere { radius, step_deg } if positive(*radius) && positive(*step_deg) && *step_deg <= 60.0 => {
                Ok(TriangleMesh::uv_sphere(*radius, *step_deg))
            }
            Shape::Plane { size } if size.iter().all(|&s| positive(s)) => Ok(TriangleMesh::plane(size[0], size[1])),
            Shape::Mesh { path } => Ok(io::read_mesh(path)?),
            other => Err(SynthError::InvalidSpec(format!("bad shape dimensions: {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthObject {
    /// Label value; objects without one are scenery (depth only, never labeled).
    #[serde(default)]
    pub id: Option<u8>,
    /// Mesh-library key; defaults to `object_<id>`.
    #[serde(default)]
    pub name: Option<String>,
    pub shape: Shape,
    /// Object-to-world pose.
    #[serde(default)]
    pub pose: RigidTransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TrajectorySpec {
    /// Camera circling `center` at `radius` and `height` above it, always
    /// looking at the center with world +z up. Frames are spaced
    /// `span_deg / frames` apart starting at `start_deg`.
    Orbit {
        radius: f64,
        height: f64,
        frames: usize,
        #[serde(default = "full_turn")]
        span_deg: f64,
        #[serde(default)]
        start_deg: f64,
        #[serde(default)]
        center: [f64; 3],
    },
    /// Explicit camera-to-world poses.
    Poses { poses: Vec<RigidTransform> },
}

fn full_turn() -> f64 {
    360.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSceneSpec {
    pub objects: Vec<SynthObject>,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub intrinsics: CameraIntrinsics,
    /// Standard deviation of additive Gaussian depth noise, meters.
    #[serde(default)]
    pub depth_noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// RMS displacement of the simulated scene clicks, meters.
    #[serde(default)]
    pub click_noise: f64,
}

impl SynthSceneSpec {
    /// Reads a spec, resolving relative mesh paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let mut spec: SynthSceneSpec = io::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for obj in &mut spec.objects {
            if let Shape::Mesh { path: p } = &mut obj.shape {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(spec)
    }

    /// Two boxes on a table seen from a 120-frame orbit.
    pub fn tabletop() -> Self {
        let on_table = |yaw_deg: f64, x: f64, y: f64, half_height: f64| {
            RigidTransform::new(
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw_deg.to_radians()),
                Vector3::new(x, y, half_height),
            )
        };
        SynthSceneSpec {
            objects: vec![
                SynthObject {
                    id: None,
                    name: Some("table".into()),
                    shape: Shape::Plane { size: [1.2, 1.2] },
                    pose: RigidTransform::identity(),
                },
                SynthObject {
                    id: Some(1),
                    name: Some("cracker_box".into()),
                    shape: Shape::Box { size: [0.16, 0.06, 0.21] },
                    pose: on_table(25.0, 0.08, 0.06, 0.105),
                },
                SynthObject {
                    id: Some(2),
                    name: Some("sugar_box".into()),
                    shape: Shape::Box { size: [0.09, 0.14, 0.04] },
                    pose: on_table(-40.0, -0.1, -0.09, 0.02),
                },
            ],
            trajectory: TrajectorySpec::Orbit {
                radius: 0.7,
                height: 0.55,
                frames: 120,
                span_deg: 360.0,
                start_deg: 0.0,
                center: [0.0, 0.0, 0.05],
            },
            intrinsics: CameraIntrinsics::default(),
            depth_noise_sigma: 0.002,
            seed: 7,
            click_noise: 0.02,
        }
    }

    /// A cluttered table: eight boxes and a ball of assorted sizes.
    pub fn cluttered() -> Self {
        let mut spec = Self::tabletop();
        let items: [([f64; 3], f64, f64, f64); 6] = [
            ([0.10, 0.10, 0.12], 10.0, 0.25, -0.2),
            ([0.25, 0.05, 0.08], 70.0, -0.25, 0.2),
            ([0.07, 0.07, 0.25], 0.0, 0.22, 0.22),
            ([0.15, 0.12, 0.06], -20.0, -0.3, -0.25),
            ([0.05, 0.20, 0.10], 45.0, 0.0, 0.3),
            ([0.12, 0.08, 0.16], -60.0, 0.05, -0.3),
        ];
        for (k, (size, yaw, x, y)) in items.into_iter().enumerate() {
            spec.objects.push(SynthObject {
                id: Some(3 + k as u8),
                name: None,
                shape: Shape::Box { size },
                pose: RigidTransform::new(
                    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw.to_radians()),
                    Vector3::new(x, y, size[2] / 2.0),
                ),
            });
        }
        spec.objects.push(SynthObject {
            id: Some(9),
            name: None,
            shape: Shape::Sphere { radius: 0.06, step_deg: 4.0 },
            pose: RigidTransform::from_translation(Vector3::new(-0.15, 0.12, 0.06)),
        });
        spec
    }

    fn validate(&self) -> Result<(), SynthError> {
        self.intrinsics.validate().map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        if !(self.depth_noise_sigma >= 0.0 && self.depth_noise_sigma.is_finite()) {
            return Err(SynthError::InvalidSpec("depth_noise_sigma must be >= 0".into()));
        }
        if !(self.click_noise >= 0.0 && self.click_noise.is_finite()) {
            return Err(SynthError::InvalidSpec("click_noise must be >= 0".into()));
        }
        Ok(())
    }
}

/// Camera-to-world pose at `eye` looking at `target` with `up` pointing up in the image.
pub fn look_at(eye: Point3<f64>, target: Point3<f64>, up: Vector3<f64>) -> Option<RigidTransform> {
    let forward = (target - eye).try_normalize(1e-12)?;
    let right = forward.cross(&up).try_normalize(1e-9)?;
    let down = forward.cross(&right);
    let r = Matrix3::from_columns(&[right, down, forward]);
    Some(RigidTransform::new(
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r)),
        eye.coords,
    ))
}

/// Camera-to-world poses for a trajectory spec.
pub fn camera_poses(spec: &TrajectorySpec) -> Result<Vec<RigidTransform>, SynthError> {
    match spec {
        TrajectorySpec::Orbit {
            radius,
            height,
            frames,
            span_deg,
            start_deg,
            center,
        } => {
            if *frames == 0 {
                return Err(SynthError::DegenerateTrajectory("orbit needs at least one frame".into()));
            }
            if !(radius.is_finite() && *radius > 0.0) {
                return Err(SynthError::DegenerateTrajectory(format!("orbit radius {radius} must be positive")));
            }
            let c = Point3::from(*center);
            (0..*frames)
                .map(|i| {
                    let theta = (start_deg + span_deg * i as f64 / *frames as f64).to_radians();
                    let eye = c + Vector3::new(radius * theta.cos(), radius * theta.sin(), *height);
                    look_at(eye, c, Vector3::z()).ok_or_else(|| SynthError::DegenerateTrajectory("camera looks straight along +z".into()))
                })
                .collect()
        }
        TrajectorySpec::Poses { poses } if poses.is_empty() => Err(SynthError::DegenerateTrajectory("empty pose list".into())),
        TrajectorySpec::Poses { poses } => Ok(poses.clone()),
    }
}

/// Simulated three-click correspondences for one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectClicks {
    pub object_id: u8,
    pub mesh: String,
    pub clicks: ClickSet,
}

/// A generated scene. Frames are rendered on demand.
#[derive(Debug, Clone)]
pub struct SynthScene {
    pub intrinsics: CameraIntrinsics,
    /// Camera poses in the reconstruction frame (camera 0 at identity).
    pub trajectory: Trajectory,
    /// Labeled objects in the reconstruction frame.
    pub annotations: Vec<ObjectAnnotation>,
    pub meshes: MeshLibrary,
    pub clicks: Vec<ObjectClicks>,
    scenery: Vec<(TriangleMesh, RigidTransform)>,
    noise_sigma: f64,
    seed: u64,
}

pub fn generate(spec: &SynthSceneSpec) -> Result<SynthScene, SynthError> {
    spec.validate()?;
    let cameras = camera_poses(&spec.trajectory)?;
    let origin_inv = cameras[0].inverse();
    let trajectory = Trajectory::from_poses(cameras.iter().map(|c| origin_inv * *c));

    let mut annotations = Vec::new();
    let mut meshes = MeshLibrary::new();
    let mut scenery = Vec::new();
    for obj in &spec.objects {
        let mesh = obj.shape.tessellate()?;
        let pose = origin_inv * obj.pose;
        match obj.id {
            None => scenery.push((mesh, pose)),
            Some(0) => return Err(SynthError::InvalidSpec("object id 0 is reserved for background".into())),
            Some(id) => {
                let name = obj.name.clone().unwrap_or_else(|| format!("object_{id}"));
                if meshes.insert(name.clone(), mesh).is_some() {
                    return Err(SynthError::InvalidSpec(format!("mesh name '{name}' used twice")));
                }
                annotations.push(ObjectAnnotation::new(id, name, pose));
            }
        }
    }
    crate::labeler::validate_annotations(&annotations)?;

    let mut click_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    click_rng.set_stream(u64::MAX);
    let axis_sigma = spec.click_noise / 3f64.sqrt();
    let clicks = annotations
        .iter()
        .map(|a| {
            let model = spread_points(&meshes[&a.mesh], spec.seed);
            let scene = model.map(|p| {
                let jitter = Vector3::from_fn(|_, _| gaussian(&mut click_rng, axis_sigma));
                a.pose.apply(&p) + jitter
            });
            ObjectClicks {
                object_id: a.object_id,
                mesh: a.mesh.clone(),
                clicks: ClickSet::new(model, scene),
            }
        })
        .collect();

    Ok(SynthScene {
        intrinsics: spec.intrinsics,
        trajectory,
        annotations,
        meshes,
        clicks,
        scenery,
        noise_sigma: spec.depth_noise_sigma,
        seed: spec.seed,
    })
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
}

/// Three well-separated surface points, as a person would click them.
fn spread_points(mesh: &TriangleMesh, seed: u64) -> [Point3<f64>; 3] {
    let sample = mesh.sample_surface(500, seed).points;
    let centroid = sample.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / sample.len() as f64;
    let farthest = |key: &dyn Fn(&Point3<f64>) -> f64| {
        *sample
            .iter()
            .max_by(|a, b| key(a).total_cmp(&key(b)))
            .expect("nonempty sample")
    };
    let a = farthest(&|p| (p.coords - centroid).norm());
    let b = farthest(&|p| (p - a).norm());
    let c = farthest(&|p| (b - a).cross(&(p - a)).norm());
    [a, b, c]
}

impl SynthScene {
    pub fn frame_count(&self) -> usize {
        self.trajectory.len()
    }

    pub fn camera_pose(&self, frame: usize) -> RigidTransform {
        self.trajectory.entries()[frame].pose
    }

    /// Ground-truth label image, rendered by the labeler from the true poses.
    pub fn truth_labels(&self, frame: usize) -> Result<LabelImage, SynthError> {
        let (labels, _) = rasterize_labels(&self.annotations, &self.meshes, &self.camera_pose(frame), &self.intrinsics)?;
        Ok(labels)
    }

    /// Noise-free depth in meters (`f64::INFINITY` where nothing is hit).
    pub fn exact_depth(&self, frame: usize) -> Image<f64> {
        let camera_inv = self.camera_pose(frame).inverse();
        let mut objects: Vec<(u8, &TriangleMesh, RigidTransform)> = self
            .scenery
            .iter()
            .map(|(m, p)| (0, m, camera_inv * *p))
            .collect();
        for a in &self.annotations {
            objects.push((a.object_id, &self.meshes[&a.mesh], camera_inv * a.pose));
        }
        Rasterizer::new(self.intrinsics).render(&objects).1
    }

    pub fn frame(&self, frame: usize) -> RgbdFrame {
        let depth_m = self.exact_depth(frame);
        let intr = &self.intrinsics;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(frame as u64);
        let noise = (self.noise_sigma > 0.0).then(|| Normal::new(0.0, self.noise_sigma).expect("finite sigma"));
        let mut depth = DepthImage::filled(intr.width, intr.height, 0);
        let mut rgb = RgbImage::filled(intr.width, intr.height, [0, 0, 0]);
        for (i, &z) in depth_m.as_slice().iter().enumerate() {
            if !z.is_finite() {
                continue;
            }
            let noisy = z + noise.map_or(0.0, |n| n.sample(&mut rng));
            let raw = (noisy / intr.depth_scale).round();
            depth.as_mut_slice()[i] = if (1.0..=u16::MAX as f64).contains(&raw) { raw as u16 } else { 0 };
            let shade = (1.2 / z).clamp(0.3, 1.0);
            rgb.as_mut_slice()[i] = [(180.0 * shade) as u8, (170.0 * shade) as u8, (150.0 * shade) as u8];
        }
        RgbdFrame {
            index: frame,
            timestamp: frame as f64 / io::NATIVE_HZ,
            rgb,
            depth,
        }
    }

    /// All frames in memory.
    pub fn frames(&self) -> Vec<RgbdFrame> {
        (0..self.frame_count()).into_par_iter().map(|i| self.frame(i)).collect()
    }

    /// Writes the scene directory plus ground truth under `truth/`:
    /// annotations, per-frame labels and poses, and the simulated clicks.
    pub fn write(&self, dir: &SceneDir) -> Result<(), SynthError> {
        dir.write_camera(&self.intrinsics)?;
        io::write_json(&dir.trajectory(), &self.trajectory)?;
        for (name, mesh) in &self.meshes {
            io::ply::write_mesh(&dir.meshes_dir().join(format!("{name}.ply")), mesh)?;
        }
        let truth = SceneDir::new(dir.truth_dir());
        io::write_json(&truth.annotations(), &self.annotations)?;
        io::write_json(&truth.trajectory(), &self.trajectory)?;
        io::write_json(&truth.root().join("clicks.json"), &self.clicks)?;
        (0..self.frame_count()).into_par_iter().try_for_each(|i| -> Result<(), SynthError> {
            dir.write_frame(&self.frame(i))?;
            io::png::write_gray8(&truth.label(i), &self.truth_labels(i)?)?;
            let poses = crate::labeler::poses_in_camera(&self.annotations, &self.camera_pose(i));
            io::write_json(&truth.pose(i), &poses)?;
            Ok(())
        })
    }
}
