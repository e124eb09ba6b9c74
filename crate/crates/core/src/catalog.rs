//! Object categories, their keypoint schemas and mesh catalogs.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::primitives::{cuboid, cylinder, ellipsoid, ellipsoid_vertex};
use crate::geometry::{load_mesh, GeometryError, Mesh, Point3};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("unknown category {0:?}; built-in categories are mug, shoe and tshirt")]
    UnknownCategory(String),
    #[error("no meshes found in {0}")]
    Empty(String),
    #[error("mesh {0:?} not in catalog")]
    MissingMesh(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Keypoint names (channel order) and skeleton edges of a category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySchema {
    pub name: String,
    pub keypoints: Vec<String>,
    /// 0-based index pairs into `keypoints`.
    pub skeleton: Vec<[usize; 2]>,
}

pub const MUG_KEYPOINTS: [&str; 3] = ["handle", "bottom", "top_rim"];
pub const SHOE_KEYPOINTS: [&str; 3] = ["nose", "heel", "tip"];
pub const TSHIRT_KEYPOINTS: [&str; 12] = [
    "shoulder_left",
    "neck_left",
    "neck_right",
    "shoulder_right",
    "sleeve_right_top",
    "sleeve_right_bottom",
    "armpit_right",
    "waist_right",
    "waist_left",
    "armpit_left",
    "sleeve_left_bottom",
    "sleeve_left_top",
];

impl CategorySchema {
    pub fn builtin(category: &str) -> Result<Self, CatalogError> {
        let names = |ks: &[&str]| ks.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let schema = match canonical_category(category)? {
            "mug" => CategorySchema {
                name: "mug".into(),
                keypoints: names(&MUG_KEYPOINTS),
                skeleton: vec![[1, 2], [2, 0]],
            },
            "shoe" => CategorySchema {
                name: "shoe".into(),
                keypoints: names(&SHOE_KEYPOINTS),
                skeleton: vec![[1, 0], [0, 2]],
            },
            _ => CategorySchema {
                name: "tshirt".into(),
                keypoints: names(&TSHIRT_KEYPOINTS),
                skeleton: (0..12).map(|i| [i, (i + 1) % 12]).collect(),
            },
        };
        Ok(schema)
    }

    pub fn channel(&self, name: &str) -> Option<usize> {
        self.keypoints.iter().position(|k| k == name)
    }
}

fn canonical_category(category: &str) -> Result<&'static str, CatalogError> {
    match category.to_ascii_lowercase().as_str() {
        "mug" | "mugs" => Ok("mug"),
        "shoe" | "shoes" => Ok("shoe"),
        "tshirt" | "tshirts" | "t-shirt" | "t-shirts" => Ok("tshirt"),
        _ => Err(CatalogError::UnknownCategory(category.to_string())),
    }
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub id: String,
    pub mesh: Arc<Mesh>,
}

/// Ordered set of meshes for one category. Entry order is stable (sorted by id).
#[derive(Debug, Clone)]
pub struct MeshCatalog {
    entries: Vec<CatalogEntry>,
}

impl MeshCatalog {
    pub fn new(mut entries: Vec<CatalogEntry>) -> Result<Self, CatalogError> {
        if entries.is_empty() {
            return Err(CatalogError::Empty("catalog".into()));
        }
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self { entries })
    }

    /// Every `*.obj` in `dir` (non-recursive), with optional keypoint sidecars.
    pub fn load_dir(dir: &Path) -> Result<Self, CatalogError> {
        let mut entries = Vec::new();
        for item in std::fs::read_dir(dir)? {
            let path = item?.path();
            let is_obj = path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("obj"));
            if !is_obj {
                continue;
            }
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            entries.push(CatalogEntry {
                id,
                mesh: Arc::new(load_mesh(&path)?),
            });
        }
        if entries.is_empty() {
            return Err(CatalogError::Empty(dir.display().to_string()));
        }
        Self::new(entries)
    }

    /// Procedural convex stand-ins so the pipeline runs without downloaded assets.
    pub fn builtin(category: &str) -> Result<Self, CatalogError> {
        let cat = canonical_category(category)?;
        let entries = match cat {
            "mug" => [(0.040, 0.095), (0.045, 0.110), (0.050, 0.100), (0.038, 0.120)]
                .iter()
                .enumerate()
                .map(|(i, &(r, h))| entry(format!("builtin_mug_{i}"), builtin_mug(r, h)))
                .collect(),
            "shoe" => [(0.14, 0.050, 0.055), (0.15, 0.045, 0.050), (0.13, 0.050, 0.060), (0.16, 0.055, 0.050)]
                .iter()
                .enumerate()
                .map(|(i, &(a, b, c))| entry(format!("builtin_shoe_{i}"), builtin_shoe(a, b, c)))
                .collect(),
            _ => [(0.50, 0.60), (0.45, 0.55), (0.55, 0.65), (0.48, 0.58)]
                .iter()
                .enumerate()
                .map(|(i, &(w, l))| entry(format!("builtin_tshirt_{i}"), builtin_tshirt(w, l)))
                .collect(),
        };
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Result<&Arc<Mesh>, CatalogError> {
        self.entries
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .map(|i| &self.entries[i].mesh)
            .map_err(|_| CatalogError::MissingMesh(id.to_string()))
    }
}

fn entry(id: String, mesh: Mesh) -> CatalogEntry {
    CatalogEntry {
        id,
        mesh: Arc::new(mesh),
    }
}

fn builtin_mug(radius: f64, height: f64) -> Mesh {
    const SEGMENTS: u32 = 32;
    let mut mesh = cylinder(radius, height, SEGMENTS, 1);
    // ring 1 is the mid-height ring; slice 8 faces +y
    let handle = mesh.vertices[(SEGMENTS + SEGMENTS / 4) as usize];
    let top_rim = mesh.vertices[(2 * SEGMENTS) as usize];
    let kp = [
        ("handle", handle),
        ("bottom", Point3::new(0.0, 0.0, 0.0)),
        ("top_rim", top_rim),
    ];
    mesh.keypoints = kp.iter().map(|(k, p)| (k.to_string(), *p)).collect();
    mesh
}

fn builtin_shoe(rx: f64, ry: f64, rz: f64) -> Mesh {
    const SLICES: u32 = 24;
    const STACKS: u32 = 12;
    let mut mesh = ellipsoid(rx, ry, rz, SLICES, STACKS);
    let v = |i, j| ellipsoid_vertex(rx, ry, rz, SLICES, STACKS, i, j);
    let kp: BTreeMap<String, Point3> = [
        ("nose", v(3, 0)),
        ("heel", v(STACKS / 2, SLICES / 2)),
        ("tip", v(STACKS / 2, 0)),
    ]
    .into_iter()
    .map(|(k, p)| (k.to_string(), p))
    .collect();
    mesh.keypoints = kp;
    mesh
}

fn builtin_tshirt(width: f64, length: f64) -> Mesh {
    const THICKNESS: f64 = 0.01;
    let mut mesh = cuboid(width, length, THICKNESS);
    let (hx, hy, top) = (width / 2.0, length / 2.0, THICKNESS / 2.0);
    // (x, y) as fractions of the half extents; +y is the collar side
    let layout = [
        ("shoulder_left", -0.5, 0.8),
        ("neck_left", -0.2, 0.85),
        ("neck_right", 0.2, 0.85),
        ("shoulder_right", 0.5, 0.8),
        ("sleeve_right_top", 0.9, 0.6),
        ("sleeve_right_bottom", 0.8, 0.3),
        ("armpit_right", 0.5, 0.3),
        ("waist_right", 0.45, -0.9),
        ("waist_left", -0.45, -0.9),
        ("armpit_left", -0.5, 0.3),
        ("sleeve_left_bottom", -0.8, 0.3),
        ("sleeve_left_top", -0.9, 0.6),
    ];
    mesh.keypoints = layout
        .iter()
        .map(|&(k, fx, fy)| (k.to_string(), Point3::new(fx * hx, fy * hy, top)))
        .collect();
    mesh
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_meshes_match_schemas() {
        for cat in ["mug", "shoes", "T-shirt"] {
            let schema = CategorySchema::builtin(cat).unwrap();
            let catalog = MeshCatalog::builtin(cat).unwrap();
            assert_eq!(catalog.len(), 4);
            for e in catalog.entries() {
                let mut names: Vec<_> = e.mesh.keypoints.keys().cloned().collect();
                let mut expected = schema.keypoints.clone();
                names.sort();
                expected.sort();
                assert_eq!(names, expected, "{}", e.id);
            }
            for [a, b] in &schema.skeleton {
                assert!(*a < schema.keypoints.len() && *b < schema.keypoints.len());
            }
        }
    }

    #[test]
    fn unknown_category() {
        assert!(matches!(
            MeshCatalog::builtin("chair"),
            Err(CatalogError::UnknownCategory(_))
        ));
    }

    #[test]
    fn lookup_by_id() {
        let c = MeshCatalog::builtin("mug").unwrap();
        assert!(c.get("builtin_mug_2").is_ok());
        assert!(c.get("nope").is_err());
    }
}
