use serde::{Deserialize, Serialize};

use super::{GeometryError, Mat3, Point3, RigidTransform, Vec2, Vec3};

/// Ideal pinhole camera. `pose` maps camera coordinates to world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub pose: RigidTransform,
}

impl PinholeCamera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        pose: RigidTransform,
    ) -> Result<Self, GeometryError> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pose,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Square-pixel camera with the principal point at the image center.
    pub fn from_fov(
        width: u32,
        height: u32,
        horizontal_fov_deg: f64,
        pose: RigidTransform,
    ) -> Result<Self, GeometryError> {
        if !(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0) {
            return Err(GeometryError::InvalidCamera(format!(
                "horizontal fov {horizontal_fov_deg} outside (0, 180)"
            )));
        }
        let f = width as f64 / 2.0 / (horizontal_fov_deg.to_radians() / 2.0).tan();
        Self::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height, pose)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidCamera("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidCamera("empty image".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::InvalidCamera(format!(
                "principal point ({}, {}) outside the {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        if !self.pose.is_valid() {
            return Err(GeometryError::NotOrthonormal);
        }
        Ok(())
    }

    /// Camera center in world coordinates.
    pub fn position(&self) -> Point3 {
        Point3::from(*self.pose.translation())
    }

    pub fn world_to_camera(&self, p: &Point3) -> Point3 {
        self.pose.inverse().transform_point(p)
    }

    /// `u = fx x / z + cx`, `v = fy y / z + cy`. The result may fall outside the image.
    pub fn project_point(&self, p: &Point3) -> Result<Vec2, GeometryError> {
        if !(p.z > 0.0) {
            return Err(GeometryError::BehindCamera { z: p.z });
        }
        Ok(Vec2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    pub fn project_world(&self, p: &Point3) -> Result<Vec2, GeometryError> {
        self.project_point(&self.world_to_camera(p))
    }

    /// Camera-frame point at depth `z` (camera-frame z, not ray length) behind `pixel`.
    pub fn unproject(&self, pixel: &Vec2, z: f64) -> Point3 {
        Point3::new(
            (pixel.x - self.cx) / self.fx * z,
            (pixel.y - self.cy) / self.fy * z,
            z,
        )
    }

    /// Unit-length viewing ray through `pixel`, in world coordinates.
    pub fn ray_direction_world(&self, pixel: &Vec2) -> Vec3 {
        let d = Vec3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, 1.0);
        self.pose.transform_vector(&d).normalize()
    }

    /// Whether a continuous image coordinate lies on the image rectangle `[0, w) x [0, h)`.
    pub fn contains(&self, pixel: &Vec2) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < self.width as f64
            && pixel.y < self.height as f64
    }

    /// Same pose and field of view at `factor` times the resolution.
    pub fn scaled(&self, factor: u32) -> PinholeCamera {
        let k = factor as f64;
        PinholeCamera {
            fx: self.fx * k,
            fy: self.fy * k,
            cx: self.cx * k,
            cy: self.cy * k,
            width: self.width * factor,
            height: self.height * factor,
            pose: self.pose,
        }
    }
}

/// Camera pose at `eye` whose optical axis (+z in camera frame) points at `target`.
///
/// The camera's image-up direction (−y in camera frame) is the component of
/// `up_hint` orthogonal to the viewing direction.
pub fn look_at(eye: &Point3, target: &Point3, up_hint: &Vec3) -> Result<RigidTransform, GeometryError> {
    let forward = target - eye;
    let dist = forward.norm();
    if !(dist > 0.0) || !dist.is_finite() {
        return Err(GeometryError::DegenerateFrame);
    }
    let z = forward / dist;
    let up_norm = up_hint.norm();
    if !(up_norm > 0.0) {
        return Err(GeometryError::DegenerateFrame);
    }
    let right = z.cross(&(up_hint / up_norm));
    let right_norm = right.norm();
    if right_norm < 1e-9 {
        return Err(GeometryError::DegenerateFrame);
    }
    let x = right / right_norm;
    let y = z.cross(&x);
    let rotation = Mat3::from_columns(&[x, y, z]);
    RigidTransform::new(rotation, eye.coords)
}
