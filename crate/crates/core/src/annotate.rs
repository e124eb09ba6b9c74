//! Per-image annotations and keypoint target heatmaps.

use serde::{Deserialize, Serialize};

use crate::catalog::CategorySchema;
use crate::geometry::{Mesh, PinholeCamera};
use crate::mask::{BinaryMask, PixelRect};
use crate::raster::{classify_keypoints, Framebuffer, KeypointState, INSTANCE_OBJECT};
use crate::scene::SceneSpec;

pub const DEFAULT_HEATMAP_SIGMA: f64 = 8.0;

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("object is not visible in image {0}")]
    ObjectNotVisible(u64),
    #[error("mesh has no keypoint named {0:?} required by category {1:?}")]
    MissingKeypoint(String, String),
    #[error("heatmap sigma must be positive, got {0}")]
    InvalidSigma(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointAnnotation {
    pub name: String,
    pub u: f64,
    pub v: f64,
    pub state: KeypointState,
}

impl KeypointAnnotation {
    /// Pixel containing the keypoint.
    pub fn pixel(&self) -> (i64, i64) {
        (self.u.floor() as i64, self.v.floor() as i64)
    }
}

/// Annotation of one rendered image. The mask is not serialized; it is stored
/// as a PNG next to the annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAnnotation {
    pub image_id: u64,
    pub category: String,
    pub width: u32,
    pub height: u32,
    /// In category schema order.
    pub keypoints: Vec<KeypointAnnotation>,
    pub bbox: PixelRect,
    pub area: usize,
    #[serde(skip)]
    pub mask: BinaryMask,
}

/// Keypoints, object mask and tight bbox for one render.
pub fn annotate_image(
    image_id: u64,
    scene: &SceneSpec,
    cam: &PinholeCamera,
    fb: &Framebuffer,
    object: &Mesh,
    schema: &CategorySchema,
    eps: f64,
) -> Result<ImageAnnotation, AnnotationError> {
    let mask = fb.instance_mask(INSTANCE_OBJECT);
    let bbox = mask.bbox().ok_or(AnnotationError::ObjectNotVisible(image_id))?;
    let projected = classify_keypoints(scene, cam, fb, object, eps);
    let keypoints = schema
        .keypoints
        .iter()
        .map(|name| {
            let k = projected
                .iter()
                .find(|k| &k.name == name)
                .ok_or_else(|| AnnotationError::MissingKeypoint(name.clone(), schema.name.clone()))?;
            Ok(KeypointAnnotation {
                name: name.clone(),
                u: k.pixel[0],
                v: k.pixel[1],
                state: k.state,
            })
        })
        .collect::<Result<Vec<_>, AnnotationError>>()?;
    Ok(ImageAnnotation {
        image_id,
        category: schema.name.clone(),
        width: fb.width,
        height: fb.height,
        keypoints,
        bbox,
        area: mask.count(),
        mask,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapConfig {
    pub sigma: f64,
    pub width: u32,
    pub height: u32,
}

impl HeatmapConfig {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            sigma: DEFAULT_HEATMAP_SIGMA,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<(), AnnotationError> {
        if self.sigma > 0.0 && self.sigma.is_finite() {
            Ok(())
        } else {
            Err(AnnotationError::InvalidSigma(self.sigma))
        }
    }
}

/// Row-major heatmap channels, one per name in `channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmaps {
    pub width: u32,
    pub height: u32,
    pub names: Vec<String>,
    pub data: Vec<Vec<f32>>,
}

impl Heatmaps {
    pub fn get(&self, channel: usize, x: u32, y: u32) -> f32 {
        self.data[channel][(y * self.width + x) as usize]
    }
}

/// Gaussian blobs around visible keypoints.
///
/// Each blob is centered on the pixel containing its keypoint, so that pixel
/// holds exactly 1; a channel takes the maximum over its keypoints.
pub fn generate_heatmap(
    keypoints: &[KeypointAnnotation],
    channels: &[String],
    cfg: &HeatmapConfig,
) -> Result<Heatmaps, AnnotationError> {
    cfg.validate()?;
    let (w, h) = (cfg.width as usize, cfg.height as usize);
    let inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
    let data = channels
        .iter()
        .map(|name| {
            let mut ch = vec![0f32; w * h];
            for k in keypoints.iter().filter(|k| &k.name == name && k.state == KeypointState::Visible) {
                let (kx, ky) = k.pixel();
                for y in 0..h as i64 {
                    for x in 0..w as i64 {
                        let d2 = ((x - kx).pow(2) + (y - ky).pow(2)) as f64;
                        let v = (-d2 * inv).exp() as f32;
                        let cell = &mut ch[y as usize * w + x as usize];
                        *cell = cell.max(v);
                    }
                }
            }
            ch
        })
        .collect();
    Ok(Heatmaps {
        width: cfg.width,
        height: cfg.height,
        names: channels.to_vec(),
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kp(name: &str, u: f64, v: f64, state: KeypointState) -> KeypointAnnotation {
        KeypointAnnotation { name: name.into(), u, v, state }
    }

    #[test]
    fn heatmap_peak_and_sigma() {
        let cfg = HeatmapConfig::new(64, 64);
        let names = vec!["a".to_string(), "b".to_string()];
        let hm = generate_heatmap(
            &[kp("a", 20.3, 30.9, KeypointState::Visible), kp("b", 5.0, 5.0, KeypointState::Occluded)],
            &names,
            &cfg,
        )
        .unwrap();
        assert_eq!(hm.get(0, 20, 30), 1.0);
        assert!((hm.get(0, 28, 30) as f64 - (-0.5f64).exp()).abs() < 1e-6);
        assert!(hm.data[1].iter().all(|&v| v == 0.0));
        assert!(hm.data[0].iter().all(|&v| v <= 1.0));
    }

    #[test]
    fn sigma_must_be_positive() {
        let cfg = HeatmapConfig { sigma: 0.0, width: 4, height: 4 };
        assert!(generate_heatmap(&[], &[], &cfg).is_err());
    }
}
