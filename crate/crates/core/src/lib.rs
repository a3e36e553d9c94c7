//! Turn posed RGBD sequences and rigid object meshes into per-pixel label
//! images and per-frame object poses.
//!
//! The pipeline stages live in their own modules: [`fusion`] builds the scene
//! reconstruction, [`registration`] aligns object meshes to it from three
//! clicked correspondences, and [`labeler`] renders labels for every frame.

pub mod geometry;
pub mod registration;
pub mod fusion;
pub mod io;
pub mod labeler;
pub mod synth;
pub mod eval;
pub mod session;
