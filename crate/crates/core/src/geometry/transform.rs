use serde::{Deserialize, Serialize};

use super::{GeometryError, Mat3, Point3, Vec3};

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Proper rigid motion `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "TransformRepr", try_from = "TransformRepr")]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Vec3,
}

/// Row-major on-disk layout.
#[derive(Serialize, Deserialize)]
struct TransformRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<RigidTransform> for TransformRepr {
    fn from(t: RigidTransform) -> Self {
        let r = &t.rotation;
        TransformRepr {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl TryFrom<TransformRepr> for RigidTransform {
    type Error = GeometryError;

    fn try_from(repr: TransformRepr) -> Result<Self, Self::Error> {
        let r = repr.rotation;
        let rotation = Mat3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        );
        RigidTransform::new(rotation, Vec3::from(repr.translation))
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Validates that `rotation` is orthonormal with determinant +1.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, GeometryError> {
        if !is_rotation(&rotation) {
            return Err(GeometryError::NotOrthonormal);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    /// Rotation by `angle` radians about `axis` (normalized internally), followed by `translation`.
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Self {
        let axis = nalgebra::Unit::new_normalize(axis);
        let rotation = *nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix();
        Self {
            rotation,
            translation,
        }
    }

    pub fn rotation_z(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::z(), angle, Vec3::zeros())
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn with_translation(mut self, translation: Vec3) -> Self {
        self.translation = translation;
        self
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn is_valid(&self) -> bool {
        is_rotation(&self.rotation) && self.translation.iter().all(|x| x.is_finite())
    }
}

fn is_rotation(r: &Mat3) -> bool {
    if r.iter().any(|x| !x.is_finite()) {
        return false;
    }
    let gram = r.transpose() * r;
    (gram - Mat3::identity()).amax() <= ORTHONORMAL_TOL
        && (r.determinant() - 1.0).abs() <= ORTHONORMAL_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_reflection() {
        let m = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(matches!(
            RigidTransform::new(m, Vec3::zeros()),
            Err(GeometryError::NotOrthonormal)
        ));
    }

    #[test]
    fn compose_with_identity() {
        let t = RigidTransform::from_axis_angle(Vec3::new(1.0, 2.0, 3.0), 0.7, Vec3::new(1.0, -2.0, 0.5));
        assert_eq!(RigidTransform::identity().compose(&t), t);
        let round = t.compose(&t.inverse());
        assert_relative_eq!(round.rotation, Mat3::identity(), epsilon = 1e-9);
        assert_relative_eq!(round.translation, Vec3::zeros(), epsilon = 1e-9);
    }

    #[test]
    fn serde_round_trip_is_row_major() {
        let t = RigidTransform::rotation_z(std::f64::consts::FRAC_PI_2)
            .with_translation(Vec3::new(1.0, 2.0, 3.0));
        let json = serde_json::to_value(t).unwrap();
        // first row of a +90 deg z rotation is (0, -1, 0)
        assert_relative_eq!(json["rotation"][0][1].as_f64().unwrap(), -1.0);
        let back: RigidTransform = serde_json::from_value(json).unwrap();
        assert_eq!(back, t);
    }
}
