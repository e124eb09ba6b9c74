//! 3D math shared by every stage: meshes, rigid transforms and the pinhole camera.
//!
//! Conventions (used everywhere in the crate):
//!
//! * Units are meters until a point is projected; pixel units only after projection.
//! * World frame: right-handed, +z up, table surface is the `z = 0` plane.
//! * Camera frame: right-handed, +x to the image right, +y to the image bottom and
//!   +z along the viewing direction. A point is in front of the camera iff `z > 0`.
//! * Image coordinates are continuous; pixel `(i, j)` covers `[i, i+1) x [j, j+1)`
//!   and its center sits at `(i + 0.5, j + 0.5)`.
//! * A [`RigidTransform`] stored as a camera pose maps camera coordinates to world
//!   coordinates.

mod camera;
mod mesh;
mod obj;
pub mod primitives;
mod transform;

pub use camera::{look_at, PinholeCamera};
pub use mesh::{mesh_aabb, Aabb, Mesh};
pub use obj::{keypoint_sidecar_path, load_mesh, parse_obj};
pub use transform::RigidTransform;

use std::path::PathBuf;

use thiserror::Error;

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("up hint is parallel to the viewing direction")]
    DegenerateFrame,
    #[error("mesh has no vertices")]
    EmptyMesh,
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("rotation is not orthonormal with determinant +1")]
    NotOrthonormal,
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("malformed keypoint file {path}: {source}")]
    KeypointFile {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
