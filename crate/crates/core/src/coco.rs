//! COCO keypoint/instance-segmentation export and parsing.
//!
//! One category (id 1) per dataset. Keypoints are `(x, y, v)` triplets in
//! category schema order with `v = 0` outside the image (x = y = 0),
//! `v = 1` occluded and `v = 2` visible. Segmentations are polygons traced
//! from the object mask; `area` is the mask pixel count and `bbox` its tight
//! `[x, y, w, h]` box in pixels.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotate::{ImageAnnotation, KeypointAnnotation};
use crate::catalog::CategorySchema;
use crate::polygon::mask_to_polygons;
use crate::raster::KeypointState;

pub const CATEGORY_ID: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CocoError {
    #[error("keypoints of image {image_id} do not match the {category:?} schema")]
    Schema { image_id: u64, category: String },
    #[error("image file {0} does not exist")]
    MissingImage(PathBuf),
    #[error("annotation {0} has a keypoint list whose length is not a multiple of 3")]
    MalformedKeypoints(u64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoInfo {
    pub description: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
    pub supercategory: String,
    pub keypoints: Vec<String>,
    /// 1-based keypoint index pairs.
    pub skeleton: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub keypoints: Vec<f64>,
    pub num_keypoints: usize,
    pub segmentation: Vec<Vec<f64>>,
    pub area: f64,
    pub bbox: [f64; 4],
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoDataset {
    pub info: CocoInfo,
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

pub fn visibility_flag(state: KeypointState) -> u8 {
    match state {
        KeypointState::Outside => 0,
        KeypointState::Occluded => 1,
        KeypointState::Visible => 2,
    }
}

pub fn state_from_flag(v: f64) -> KeypointState {
    if v >= 2.0 {
        KeypointState::Visible
    } else if v >= 1.0 {
        KeypointState::Occluded
    } else {
        KeypointState::Outside
    }
}

pub fn category_entry(schema: &CategorySchema) -> CocoCategory {
    CocoCategory {
        id: CATEGORY_ID,
        name: schema.name.clone(),
        supercategory: "object".into(),
        keypoints: schema.keypoints.clone(),
        skeleton: schema.skeleton.iter().map(|[a, b]| [a + 1, b + 1]).collect(),
    }
}

/// Builds a dataset from `(file_name, annotation)` pairs. Annotation ids equal image ids.
pub fn build_coco(
    schema: &CategorySchema,
    items: &[(String, &ImageAnnotation)],
    polygon_tolerance: f64,
) -> Result<CocoDataset, CocoError> {
    let mut images = Vec::with_capacity(items.len());
    let mut annotations = Vec::with_capacity(items.len());
    for (file_name, ann) in items {
        let names_match = ann.keypoints.len() == schema.keypoints.len()
            && ann.keypoints.iter().zip(&schema.keypoints).all(|(k, n)| &k.name == n);
        if !names_match || ann.category != schema.name {
            return Err(CocoError::Schema {
                image_id: ann.image_id,
                category: schema.name.clone(),
            });
        }
        images.push(CocoImage {
            id: ann.image_id,
            file_name: file_name.clone(),
            width: ann.width,
            height: ann.height,
        });
        let mut keypoints = Vec::with_capacity(3 * ann.keypoints.len());
        for k in &ann.keypoints {
            let v = visibility_flag(k.state);
            let (x, y) = if v == 0 { (0.0, 0.0) } else { (k.u, k.v) };
            keypoints.extend([x, y, v as f64]);
        }
        let b = ann.bbox;
        annotations.push(CocoAnnotation {
            id: ann.image_id,
            image_id: ann.image_id,
            category_id: CATEGORY_ID,
            num_keypoints: ann.keypoints.iter().filter(|k| k.state != KeypointState::Outside).count(),
            keypoints,
            segmentation: mask_to_polygons(&ann.mask, polygon_tolerance),
            area: ann.area as f64,
            bbox: [b.x as f64, b.y as f64, b.w as f64, b.h as f64],
            iscrowd: 0,
        });
    }
    Ok(CocoDataset {
        info: CocoInfo {
            description: format!("synthetic {} dataset", schema.name),
            version: env!("CARGO_PKG_VERSION").into(),
        },
        images,
        annotations,
        categories: vec![category_entry(schema)],
    })
}

impl CocoDataset {
    /// Fails when an image file is missing below `root`.
    pub fn check_images(&self, root: &Path) -> Result<(), CocoError> {
        for img in &self.images {
            let p = root.join(&img.file_name);
            if !p.is_file() {
                return Err(CocoError::MissingImage(p));
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), CocoError> {
        let json = serde_json::to_vec_pretty(self).map_err(|source| CocoError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        std::fs::write(path, json).map_err(|source| CocoError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, CocoError> {
        let text = std::fs::read_to_string(path).map_err(|source| CocoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CocoError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn category(&self) -> Option<&CocoCategory> {
        self.categories.first()
    }

    /// Keypoints of `ann` with names from the dataset's category.
    pub fn keypoints_of(&self, ann: &CocoAnnotation) -> Result<Vec<KeypointAnnotation>, CocoError> {
        let names = self.category().map(|c| c.keypoints.as_slice()).unwrap_or(&[]);
        if ann.keypoints.len() % 3 != 0 || ann.keypoints.len() / 3 != names.len() {
            return Err(CocoError::MalformedKeypoints(ann.id));
        }
        Ok(ann
            .keypoints
            .chunks_exact(3)
            .zip(names)
            .map(|(t, name)| KeypointAnnotation {
                name: name.clone(),
                u: t[0],
                v: t[1],
                state: state_from_flag(t[2]),
            })
            .collect())
    }
}
