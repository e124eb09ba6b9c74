//! Depth-conditioned texturing through an external image-generation service.
//!
//! The service is reached through [`TexturingBackend`]; [`MockBackend`] is a
//! deterministic stand-in with the same wire semantics. Pipelines only ever
//! produce RGB images: depth, masks and keypoints are never touched here.

mod backend;
mod pipelines;
pub mod wire;

pub use backend::{
    mock_block_color, mock_inpaint, mock_texture, CallRecord, MockBackend, RequestMode, Retrying, TexturingBackend, MOCK_BLOCK,
    MOCK_MODEL_ID,
};
pub use pipelines::{
    square_crop, texture_inpainting_baseline, texture_one_stage, texture_three_stage, texture_three_stage_from_renders,
    texture_two_stage, StageImage, TexturedImage,
};

use std::time::Duration;

use image::{GrayImage, Luma, RgbImage};
use serde::{Deserialize, Serialize};

use crate::mask::BinaryMask;
use crate::raster::Framebuffer;

pub const DEFAULT_CONDITIONING_SCALE: f64 = 1.5;
pub const DEFAULT_STEPS: u32 = 30;
pub const DEFAULT_GUIDANCE: f64 = 7.5;
pub const DEFAULT_WORKING_RESOLUTION: u32 = 512;
pub const DEFAULT_BBOX_PAD: u32 = 16;
pub const DEFAULT_DILATION: u32 = 8;
/// Crops are grown to a multiple of this many pixels.
pub const CROP_MULTIPLE: u32 = 8;

#[derive(Debug, thiserror::Error)]
pub enum DiffusionError {
    #[error("backend error: {0}")]
    Backend(String),
    #[error("request rejected by backend: {0}")]
    Rejected(String),
    #[error("object is not visible in the frame")]
    ObjectNotVisible,
    #[error("table is not visible in the empty-table render")]
    TableNotVisible,
    #[error("invalid diffusion parameters: {0}")]
    InvalidParams(String),
    #[error("backend returned a {got_w}x{got_h} image for a {want_w}x{want_h} request")]
    ResolutionMismatch { want_w: u32, want_h: u32, got_w: u32, got_h: u32 },
    #[error("image encoding: {0}")]
    Codec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionParams {
    pub conditioning_scale: f64,
    pub steps: u32,
    pub guidance: f64,
    pub seed: u64,
    /// Square working resolution of the backend.
    pub resolution: u32,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        Self {
            conditioning_scale: DEFAULT_CONDITIONING_SCALE,
            steps: DEFAULT_STEPS,
            guidance: DEFAULT_GUIDANCE,
            seed: 0,
            resolution: DEFAULT_WORKING_RESOLUTION,
        }
    }
}

impl DiffusionParams {
    pub fn validate(&self) -> Result<(), DiffusionError> {
        if !(self.conditioning_scale > 0.0 && self.conditioning_scale.is_finite()) {
            return Err(DiffusionError::InvalidParams("conditioning_scale must be > 0".into()));
        }
        if self.steps == 0 {
            return Err(DiffusionError::InvalidParams("steps must be >= 1".into()));
        }
        if !self.guidance.is_finite() {
            return Err(DiffusionError::InvalidParams("guidance must be finite".into()));
        }
        if self.resolution == 0 || self.resolution % CROP_MULTIPLE != 0 {
            return Err(DiffusionError::InvalidParams(format!(
                "resolution must be a positive multiple of {CROP_MULTIPLE}"
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Depth-conditioned generation request.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureRequest {
    pub prompt: String,
    pub control: GrayImage,
    pub params: DiffusionParams,
}

/// Inpainting request; mask pixels != 0 are regenerated.
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintRequest {
    pub prompt: String,
    pub image: RgbImage,
    pub mask: GrayImage,
    pub params: DiffusionParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TexturingResult {
    pub image: RgbImage,
    pub latency: Duration,
    pub backend_id: String,
}

/// Maps depth to an 8-bit image, nearer surfaces brighter.
///
/// Covered pixels get `round(255 (d_max - d) / (d_max - d_min))` clamped to at
/// least 1; uncovered pixels are 0. When every covered pixel has the same
/// depth (up to a relative 1e-9, which absorbs interpolation round-off) they
/// all map to 255.
pub fn depth_to_control_image(fb: &Framebuffer) -> GrayImage {
    let finite = fb.depth.iter().copied().filter(|d| d.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    let span = hi - lo;
    GrayImage::from_fn(fb.width, fb.height, |x, y| {
        let d = fb.depth_at(x, y);
        let v = if !d.is_finite() {
            0
        } else if span <= 1e-9 * hi {
            255
        } else {
            (255.0 * (hi - d) / span).round().clamp(1.0, 255.0) as u8
        };
        Luma([v])
    })
}

/// Morphological dilation with a `(2r+1) x (2r+1)` square.
pub fn dilate_mask(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let r = radius as usize;
    // the square element is separable: a horizontal then a vertical running max
    let pass = |src: &[bool], len: usize, lines: usize, at: &dyn Fn(usize, usize) -> usize| -> Vec<bool> {
        let mut out = vec![false; src.len()];
        let mut prefix = vec![0u32; len + 1];
        for line in 0..lines {
            for i in 0..len {
                prefix[i + 1] = prefix[i] + src[at(line, i)] as u32;
            }
            for i in 0..len {
                let a = i.saturating_sub(r);
                let b = (i + r + 1).min(len);
                out[at(line, i)] = prefix[b] > prefix[a];
            }
        }
        out
    };
    let rows = pass(mask.data(), w, h, &|y, x| y * w + x);
    let both = pass(&rows, h, w, &|x, y| y * w + x);
    BinaryMask::from_vec(mask.width(), mask.height(), both)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::INSTANCE_TABLE;

    #[test]
    fn control_image_two_depths() {
        let mut fb = Framebuffer::empty(4, 1);
        fb.depth = vec![0.5, 1.0, 0.75, f64::INFINITY];
        fb.instance = vec![INSTANCE_TABLE, INSTANCE_TABLE, INSTANCE_TABLE, 0];
        let c = depth_to_control_image(&fb);
        assert_eq!(c.as_raw(), &vec![255, 1, 128, 0]);
    }

    #[test]
    fn control_image_degenerate_and_empty() {
        let mut fb = Framebuffer::empty(3, 1);
        assert!(depth_to_control_image(&fb).pixels().all(|p| p.0[0] == 0));
        fb.depth = vec![2.0, 2.0, f64::INFINITY];
        fb.instance = vec![1, 1, 0];
        assert_eq!(depth_to_control_image(&fb).as_raw(), &vec![255, 255, 0]);
    }

    #[test]
    fn dilate_single_pixel() {
        let mut m = BinaryMask::new(5, 5);
        m.set(2, 2, true);
        assert_eq!(dilate_mask(&m, 0), m);
        let d = dilate_mask(&m, 1);
        assert_eq!(d.count(), 9);
        assert!(d.get(1, 1) && d.get(3, 3) && !d.get(0, 2));
        let mut corner = BinaryMask::new(5, 5);
        corner.set(0, 0, true);
        assert_eq!(dilate_mask(&corner, 2).count(), 9);
    }

    #[test]
    fn default_params() {
        let p = DiffusionParams::default();
        assert_eq!(p.conditioning_scale, 1.5);
        assert_eq!((p.steps, p.guidance, p.resolution), (30, 7.5, 512));
        p.validate().unwrap();
        assert!(DiffusionParams { conditioning_scale: 0.0, ..p.clone() }.validate().is_err());
        assert!(DiffusionParams { steps: 0, ..p }.validate().is_err());
    }
}
