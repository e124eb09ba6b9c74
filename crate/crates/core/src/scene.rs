//! Randomized tabletop scene composition.
//!
//! A scene is one object resting on a rectangular table (the `z = 0` plane)
//! plus a fixed number of cameras looking at it. Every random draw comes from a
//! per-scene stream keyed by `(master_seed, scene_id)`.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{CatalogError, MeshCatalog};
use crate::geometry::{look_at, mesh_aabb, GeometryError, Mesh, PinholeCamera, Point3, RigidTransform, Vec3};
use crate::seeding;

pub const SCENE_SCHEMA_VERSION: u32 = 1;
pub const MAX_PLACEMENT_ATTEMPTS: usize = 100;
pub const MAX_CAMERA_ATTEMPTS: usize = 100;
/// Object center must project inside this fraction of the image, centered.
pub const CENTRAL_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("could not place {object} on the table after {attempts} attempts")]
    PlacementFailure { object: String, attempts: usize },
    #[error("invalid randomization config: {0}")]
    InvalidConfig(String),
    #[error("scene {scene_id} violates invariants: {}", .violations.join("; "))]
    Invalid { scene_id: u64, violations: Vec<String> },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Closed interval, serialized as `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min <= self.max
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

impl From<[f64; 2]> for Interval {
    fn from([min, max]: [f64; 2]) -> Self {
        Self { min, max }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.min, i.max]
    }
}

/// Ranges for every randomized scene quantity. All draws are uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneRandomizationConfig {
    /// Meters.
    pub table_width_range: Interval,
    /// Meters.
    pub table_depth_range: Interval,
    /// Radians.
    pub table_yaw_range: Interval,
    /// Radians.
    pub object_yaw_range: Interval,
    /// Maximum offset of the object from the table center, as a fraction of the half extents.
    pub object_xy_jitter: f64,
    /// Meters.
    pub camera_radius_range: Interval,
    /// Degrees above the table plane.
    pub camera_elevation_range: Interval,
    /// Half-width (meters) of the cube around the object center the look-at point is drawn from.
    pub look_at_jitter: f64,
    pub horizontal_fov_deg: f64,
    /// Square image side in pixels.
    pub resolution: u32,
    pub cameras_per_scene: u32,
}

impl Default for SceneRandomizationConfig {
    fn default() -> Self {
        Self {
            table_width_range: Interval::new(0.6, 1.2),
            table_depth_range: Interval::new(0.6, 1.2),
            table_yaw_range: Interval::new(0.0, TAU),
            object_yaw_range: Interval::new(0.0, TAU),
            object_xy_jitter: 0.3,
            camera_radius_range: Interval::new(0.4, 1.2),
            camera_elevation_range: Interval::new(20.0, 90.0),
            look_at_jitter: 0.05,
            horizontal_fov_deg: 60.0,
            resolution: 512,
            cameras_per_scene: 2,
        }
    }
}

impl SceneRandomizationConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::InvalidConfig(m));
        for (name, r) in [
            ("table_width_range", self.table_width_range),
            ("table_depth_range", self.table_depth_range),
            ("table_yaw_range", self.table_yaw_range),
            ("object_yaw_range", self.object_yaw_range),
            ("camera_radius_range", self.camera_radius_range),
            ("camera_elevation_range", self.camera_elevation_range),
        ] {
            if !r.is_valid() {
                return bad(format!("{name} must satisfy min <= max, got [{}, {}]", r.min, r.max));
            }
        }
        if self.table_width_range.min <= 0.0 || self.table_depth_range.min <= 0.0 {
            return bad("table dimensions must be positive".into());
        }
        if self.camera_radius_range.min <= 0.0 {
            return bad("camera radius must be positive".into());
        }
        if self.camera_elevation_range.min < 0.0 || self.camera_elevation_range.max > 90.0 {
            return bad("camera elevation must lie in [0, 90] degrees".into());
        }
        if !(0.0..=1.0).contains(&self.object_xy_jitter) || !(self.look_at_jitter >= 0.0) {
            return bad("jitter must be non-negative (object jitter at most 1)".into());
        }
        if !(self.horizontal_fov_deg > 0.0 && self.horizontal_fov_deg < 180.0) {
            return bad("horizontal_fov_deg must lie in (0, 180)".into());
        }
        if self.resolution == 0 {
            return bad("resolution must be positive".into());
        }
        if self.cameras_per_scene == 0 {
            return bad("cameras_per_scene must be at least 1".into());
        }
        Ok(())
    }
}

/// Rectangular table in the `z = 0` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    /// Extent along the table's local x axis (meters).
    pub width: f64,
    /// Extent along the table's local y axis (meters).
    pub depth: f64,
    /// Rotation about world z (radians).
    pub yaw: f64,
    pub center: Point3,
}

impl TableSpec {
    /// Table-local frame (x along width, y along depth) to world.
    pub fn frame(&self) -> RigidTransform {
        RigidTransform::rotation_z(self.yaw).with_translation(self.center.coords)
    }

    /// Corners in counter-clockwise order seen from above.
    pub fn corners(&self) -> [Point3; 4] {
        let f = self.frame();
        let (hw, hd) = (self.width / 2.0, self.depth / 2.0);
        [(-hw, -hd), (hw, -hd), (hw, hd), (-hw, hd)]
            .map(|(x, y)| f.transform_point(&Point3::new(x, y, 0.0)))
    }

    /// Whether the world point's xy projection lies on the table rectangle.
    pub fn contains_xy(&self, p: &Point3) -> bool {
        let local = self.frame().inverse().transform_point(&Point3::new(p.x, p.y, self.center.z));
        let tol = 1e-9;
        local.x.abs() <= self.width / 2.0 + tol && local.y.abs() <= self.depth / 2.0 + tol
    }
}

/// One composed scene: the unit of reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub version: u32,
    pub scene_id: u64,
    pub object_ref: String,
    pub object_pose: RigidTransform,
    pub table: TableSpec,
    pub cameras: Vec<PinholeCamera>,
    /// Seed of this scene's stream; also keys the light direction.
    pub seed: u64,
}

impl SceneSpec {
    pub fn object_center(&self, mesh: &Mesh) -> Result<Point3, GeometryError> {
        Ok(mesh_aabb(mesh, &self.object_pose)?.center())
    }
}

/// Composes scene `scene_id`. Deterministic in `(scene_id, master_seed, config, catalog)`.
pub fn compose_scene(
    scene_id: u64,
    catalog: &MeshCatalog,
    config: &SceneRandomizationConfig,
    master_seed: u64,
) -> Result<SceneSpec, SceneError> {
    config.validate()?;
    let seed = seeding::derive_seed(master_seed, seeding::SCENE, scene_id);
    let mut rng = seeding::rng(master_seed, seeding::SCENE, scene_id);

    let pick = rng.random_range(0..catalog.len());
    let entry = &catalog.entries()[pick];

    let (table, object_pose) = place_object(&entry.mesh, config, &mut rng).ok_or_else(|| {
        SceneError::PlacementFailure {
            object: entry.id.clone(),
            attempts: MAX_PLACEMENT_ATTEMPTS,
        }
    })?;

    let center = mesh_aabb(&entry.mesh, &object_pose)?.center();
    let cameras = (0..config.cameras_per_scene)
        .map(|_| sample_camera_pose(&mut rng, &center, config))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(SceneSpec {
        version: SCENE_SCHEMA_VERSION,
        scene_id,
        object_ref: entry.id.clone(),
        object_pose,
        table,
        cameras,
        seed,
    })
}

fn place_object(
    mesh: &Mesh,
    config: &SceneRandomizationConfig,
    rng: &mut ChaCha8Rng,
) -> Option<(TableSpec, RigidTransform)> {
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let table = TableSpec {
            width: config.table_width_range.sample(rng),
            depth: config.table_depth_range.sample(rng),
            yaw: config.table_yaw_range.sample(rng),
            center: Point3::origin(),
        };
        let yaw = config.object_yaw_range.sample(rng);
        let jx = rng.random_range(-1.0..=1.0) * config.object_xy_jitter;
        let jy = rng.random_range(-1.0..=1.0) * config.object_xy_jitter;

        let rotated = RigidTransform::rotation_z(yaw);
        let aabb = mesh_aabb(mesh, &rotated).ok()?;
        let target = table
            .frame()
            .transform_point(&Point3::new(jx * table.width / 2.0, jy * table.depth / 2.0, 0.0));
        let c = aabb.center();
        let pose = rotated.with_translation(Vec3::new(target.x - c.x, target.y - c.y, -aabb.min.z));

        if footprint_on_table(mesh, &pose, &table) {
            return Some((table, pose));
        }
    }
    None
}

/// The table top is convex, so the footprint is on it when every posed vertex is.
fn footprint_on_table(mesh: &Mesh, pose: &RigidTransform, table: &TableSpec) -> bool {
    mesh.vertices
        .iter()
        .all(|v| table.contains_xy(&pose.transform_point(v)))
}

/// Samples a camera on a spherical shell around a jittered look-at point near
/// `object_center`, rejecting draws where the center leaves the central 80% of
/// the image. After [`MAX_CAMERA_ATTEMPTS`] rejections the last draw is re-aimed
/// exactly at the object center.
pub fn sample_camera_pose(
    rng: &mut impl Rng,
    object_center: &Point3,
    config: &SceneRandomizationConfig,
) -> Result<PinholeCamera, SceneError> {
    let res = config.resolution;
    let mut last = None;
    for _ in 0..MAX_CAMERA_ATTEMPTS {
        let radius = config.camera_radius_range.sample(rng);
        let elevation = config.camera_elevation_range.sample(rng).to_radians();
        let azimuth = rng.random_range(0.0..TAU);
        let j = config.look_at_jitter;
        let jitter = if j > 0.0 {
            Vec3::new(
                rng.random_range(-j..=j),
                rng.random_range(-j..=j),
                rng.random_range(-j..=j),
            )
        } else {
            Vec3::zeros()
        };
        let target = object_center + jitter;
        let cam = camera_on_shell(&target, radius, elevation, azimuth, config)?;
        if center_in_central_region(&cam, object_center) {
            return Ok(cam);
        }
        last = Some((radius, elevation, azimuth));
    }
    let (radius, elevation, azimuth) = last.expect("at least one attempt");
    let cam = camera_on_shell(object_center, radius, elevation, azimuth, config)?;
    debug_assert!(res > 0);
    Ok(cam)
}

fn camera_on_shell(
    target: &Point3,
    radius: f64,
    elevation: f64,
    azimuth: f64,
    config: &SceneRandomizationConfig,
) -> Result<PinholeCamera, SceneError> {
    let dir = Vec3::new(
        elevation.cos() * azimuth.cos(),
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
    );
    let eye = target + dir * radius;
    let pose = match look_at(&eye, target, &Vec3::z()) {
        Ok(p) => p,
        // straight down: orient the image so "up" points away from the azimuth
        Err(GeometryError::DegenerateFrame) => {
            look_at(&eye, target, &Vec3::new(-azimuth.cos(), -azimuth.sin(), 0.0))?
        }
        Err(e) => return Err(e.into()),
    };
    Ok(PinholeCamera::from_fov(
        config.resolution,
        config.resolution,
        config.horizontal_fov_deg,
        pose,
    )?)
}

fn center_in_central_region(cam: &PinholeCamera, p: &Point3) -> bool {
    let margin = (1.0 - CENTRAL_FRACTION) / 2.0;
    match cam.project_world(p) {
        Ok(uv) => {
            let (w, h) = (cam.width as f64, cam.height as f64);
            uv.x >= margin * w && uv.x <= (1.0 - margin) * w && uv.y >= margin * h && uv.y <= (1.0 - margin) * h
        }
        Err(_) => false,
    }
}

/// Checks every [`SceneSpec`] invariant; returns all violations at once.
pub fn validate_scene(
    scene: &SceneSpec,
    mesh: &Mesh,
    config: &SceneRandomizationConfig,
) -> Result<(), SceneError> {
    let mut v = Vec::new();
    if scene.version != SCENE_SCHEMA_VERSION {
        v.push(format!("unsupported version {}", scene.version));
    }
    if !(scene.table.width > 0.0 && scene.table.depth > 0.0) {
        v.push("table has non-positive extent".into());
    }
    if !scene.object_pose.is_valid() {
        v.push("object rotation is not a proper rotation".into());
    }
    match mesh_aabb(mesh, &scene.object_pose) {
        Ok(b) => {
            if (b.min.z - scene.table.center.z).abs() > 1e-9 {
                v.push(format!("object does not rest on the table (min z = {})", b.min.z));
            }
            if !footprint_on_table(mesh, &scene.object_pose, &scene.table) {
                v.push("object footprint leaves the table".into());
            }
            for (i, cam) in scene.cameras.iter().enumerate() {
                if cam.validate().is_err() {
                    v.push(format!("camera {i} has invalid parameters"));
                }
                match cam.project_world(&b.center()) {
                    Ok(uv) if cam.contains(&uv) => {}
                    _ => v.push(format!("camera {i} does not see the object center")),
                }
            }
        }
        Err(e) => v.push(e.to_string()),
    }
    if scene.cameras.len() != config.cameras_per_scene as usize {
        v.push(format!(
            "{} cameras, expected {}",
            scene.cameras.len(),
            config.cameras_per_scene
        ));
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(SceneError::Invalid {
            scene_id: scene.scene_id,
            violations: v,
        })
    }
}
