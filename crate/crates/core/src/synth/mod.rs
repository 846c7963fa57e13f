//! Ray-cast rigid scenes with exact spherical ground-truth flow.
//!
//! A scene is a set of analytic primitives, each with an object-to-world
//! pose per frame, seen by a spherical camera with a pose per frame. Flow
//! from frame a to frame b takes the surface point hit by each pixel ray at
//! a, moves it with its object, and re-observes it from the camera at b.

mod dataset;
mod render;
mod scene;
mod texture;

pub use dataset::{
    build_scene, generate_dataset, rng_stream, rotation_sign, DatasetConfig, Manifest, PairRecord,
    PoseRecord, Schedule, CITY_MAX_TILT, EFT_FLIP_PERIOD,
};
pub use render::{
    ground_truth_flow, occlusion_mask, render_buffers, render_frame, track_direction, FrameBuffers,
};
pub use scene::{CameraPose, Hit, LocalHit, Primitive, RigidMotion, Scene, SceneObject, Sky};
pub use texture::{fbm, soft_checker, value_noise, Texture};
