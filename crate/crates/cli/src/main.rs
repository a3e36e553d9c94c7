//! `scenelabel`: reconstruct RGBD scenes, align object meshes, render
//! per-frame labels and evaluate them.

mod commands;
mod error;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::CliError;

#[derive(Parser)]
#[command(name = "scenelabel", version, about = "Object label generation for RGBD scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse depth frames into `reconstruction.ply`, estimating the camera
    /// trajectory first with --odometry.
    Fuse {
        scene_dir: PathBuf,
        /// Voxel edge length in meters.
        #[arg(long, default_value_t = 0.01)]
        voxel: f64,
        /// Estimate `trajectory.json` by frame-to-frame ICP instead of reading it.
        #[arg(long)]
        odometry: bool,
        /// Volume bounds as min_x,min_y,min_z,max_x,max_y,max_z (meters).
        /// Defaults to the first frame's extent plus 0.5 m.
        #[arg(long, value_delimiter = ',', num_args = 6, allow_negative_numbers = true)]
        bounds: Option<Vec<f64>>,
    },
    /// Align meshes from three-click correspondences stored in a file and
    /// record the resulting annotations.
    Align {
        scene_dir: PathBuf,
        /// JSON array of {object_id, mesh, clicks: {model_points, scene_points}}.
        #[arg(long)]
        clicks: PathBuf,
        /// Mesh library directory; defaults to `<scene_dir>/meshes`.
        #[arg(long)]
        meshes: Option<PathBuf>,
    },
    /// Run the annotation HTTP service over a directory of scenes.
    Serve {
        scenes_root: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Mesh library directory; defaults to `<scenes_root>/meshes`.
        #[arg(long)]
        meshes: Option<PathBuf>,
    },
    /// Render label images and per-frame object poses for every frame.
    Render {
        scene_dir: PathBuf,
        /// Mesh library directory; defaults to `<scene_dir>/meshes`.
        #[arg(long)]
        meshes: Option<PathBuf>,
    },
    /// Generate a synthetic scene with ground truth from a JSON spec.
    Synth { spec: PathBuf, out_dir: PathBuf },
    /// Compare rendered labels and poses against ground truth.
    Eval {
        scene_dir: PathBuf,
        /// Directory holding the reference `labels/` and `poses/`.
        #[arg(long)]
        truth: PathBuf,
        /// Also write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Copy a scene keeping only frames at the target rate.
    Downsample {
        scene_dir: PathBuf,
        #[arg(long)]
        hz: f64,
        out_dir: PathBuf,
        /// Capture rate of the source scene.
        #[arg(long, default_value_t = scenelabel::io::NATIVE_HZ)]
        native_hz: f64,
    },
    /// Print wall-clock time per pipeline stage.
    Timing { scene_dir: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fuse {
            scene_dir,
            voxel,
            odometry,
            bounds,
        } => commands::fuse(&scene_dir, voxel, odometry, bounds.as_deref()),
        Command::Align {
            scene_dir,
            clicks,
            meshes,
        } => commands::align(&scene_dir, &clicks, meshes.as_deref()),
        Command::Serve {
            scenes_root,
            listen,
            meshes,
        } => commands::serve(&scenes_root, listen, meshes.as_deref()),
        Command::Render { scene_dir, meshes } => commands::render(&scene_dir, meshes.as_deref()),
        Command::Synth { spec, out_dir } => commands::synth(&spec, &out_dir),
        Command::Eval { scene_dir, truth, json } => commands::eval(&scene_dir, &truth, json.as_deref()),
        Command::Downsample {
            scene_dir,
            hz,
            out_dir,
            native_hz,
        } => commands::downsample(&scene_dir, hz, &out_dir, native_hz),
        Command::Timing { scene_dir } => commands::timing(&scene_dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
