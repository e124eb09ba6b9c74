use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{GeometryError, Point3, RigidTransform, Vec2};

/// Indexed triangle mesh in a mesh-local frame (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[u32; 3]>,
    /// Per-vertex texture coordinates, when the asset has them.
    pub uvs: Option<Vec<Vec2>>,
    /// Semantic keypoints in the mesh-local frame.
    pub keypoints: BTreeMap<String, Point3>,
}

impl Mesh {
    pub fn new(
        vertices: Vec<Point3>,
        triangles: Vec<[u32; 3]>,
        uvs: Option<Vec<Vec2>>,
        keypoints: BTreeMap<String, Point3>,
    ) -> Result<Self, GeometryError> {
        let mesh = Self {
            vertices,
            triangles,
            uvs,
            keypoints,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.vertices.is_empty() {
            return Err(GeometryError::EmptyMesh);
        }
        if self.triangles.is_empty() {
            return Err(GeometryError::InvalidMesh("no triangles".into()));
        }
        let n = self.vertices.len();
        if let Some(bad) = self
            .triangles
            .iter()
            .flatten()
            .find(|&&i| i as usize >= n)
        {
            return Err(GeometryError::InvalidMesh(format!(
                "triangle index {bad} out of range for {n} vertices"
            )));
        }
        if let Some(uvs) = &self.uvs {
            if uvs.len() != n {
                return Err(GeometryError::InvalidMesh(format!(
                    "{} uvs for {n} vertices",
                    uvs.len()
                )));
            }
        }
        if self
            .vertices
            .iter()
            .chain(self.keypoints.values())
            .any(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(GeometryError::InvalidMesh("non-finite coordinate".into()));
        }
        Ok(())
    }

    pub fn triangle(&self, t: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn center(&self) -> Point3 {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn extents(&self) -> nalgebra::Vector3<f64> {
        self.max - self.min
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

/// Tight box around the mesh vertices after applying `pose`.
pub fn mesh_aabb(mesh: &Mesh, pose: &RigidTransform) -> Result<Aabb, GeometryError> {
    let mut it = mesh.vertices.iter().map(|v| pose.transform_point(v));
    let first = it.next().ok_or(GeometryError::EmptyMesh)?;
    let (min, max) = it.fold((first, first), |(lo, hi), p| (lo.inf(&p), hi.sup(&p)));
    Ok(Aabb { min, max })
}
