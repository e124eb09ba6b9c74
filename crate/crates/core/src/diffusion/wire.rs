//! JSON bodies of the texturing HTTP protocol.
//!
//! `POST /v1/texture` takes [`TextureRequestBody`], `POST /v1/inpaint` takes
//! [`InpaintRequestBody`]; both answer with [`ImageResponse`] on success and
//! [`ErrorResponse`] otherwise. Images travel as base64-encoded PNG.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use super::{DiffusionError, DiffusionParams, InpaintRequest, TextureRequest};

pub const TEXTURE_PATH: &str = "/v1/texture";
pub const INPAINT_PATH: &str = "/v1/inpaint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureRequestBody {
    pub prompt: String,
    /// 8-bit grayscale depth control image.
    pub control_image: String,
    pub conditioning_scale: f64,
    pub steps: u32,
    pub guidance: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpaintRequestBody {
    pub prompt: String,
    /// RGB input image.
    pub image: String,
    /// 8-bit mask, non-zero pixels are regenerated.
    pub mask: String,
    pub conditioning_scale: f64,
    pub steps: u32,
    pub guidance: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResponse {
    pub image: String,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
}

fn encode(img: DynamicImage) -> Result<String, DiffusionError> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| DiffusionError::Codec(e.to_string()))?;
    Ok(STANDARD.encode(buf.into_inner()))
}

fn decode(b64: &str) -> Result<DynamicImage, DiffusionError> {
    let bytes = STANDARD
        .decode(b64.trim())
        .map_err(|e| DiffusionError::Codec(format!("base64: {e}")))?;
    image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|e| DiffusionError::Codec(e.to_string()))
}

pub fn encode_rgb(img: &RgbImage) -> Result<String, DiffusionError> {
    encode(DynamicImage::ImageRgb8(img.clone()))
}

pub fn encode_gray(img: &GrayImage) -> Result<String, DiffusionError> {
    encode(DynamicImage::ImageLuma8(img.clone()))
}

pub fn decode_rgb(b64: &str) -> Result<RgbImage, DiffusionError> {
    Ok(decode(b64)?.to_rgb8())
}

pub fn decode_gray(b64: &str) -> Result<GrayImage, DiffusionError> {
    Ok(decode(b64)?.to_luma8())
}

fn params(conditioning_scale: f64, steps: u32, guidance: f64, seed: u64, resolution: u32) -> DiffusionParams {
    DiffusionParams {
        conditioning_scale,
        steps,
        guidance,
        seed,
        resolution,
    }
}

impl TextureRequest {
    pub fn to_body(&self) -> Result<TextureRequestBody, DiffusionError> {
        Ok(TextureRequestBody {
            prompt: self.prompt.clone(),
            control_image: encode_gray(&self.control)?,
            conditioning_scale: self.params.conditioning_scale,
            steps: self.params.steps,
            guidance: self.params.guidance,
            seed: self.params.seed,
        })
    }

    pub fn from_body(body: &TextureRequestBody) -> Result<Self, DiffusionError> {
        let control = decode_gray(&body.control_image)?;
        let res = control.width();
        Ok(Self {
            prompt: body.prompt.clone(),
            control,
            params: params(body.conditioning_scale, body.steps, body.guidance, body.seed, res),
        })
    }
}

impl InpaintRequest {
    pub fn to_body(&self) -> Result<InpaintRequestBody, DiffusionError> {
        Ok(InpaintRequestBody {
            prompt: self.prompt.clone(),
            image: encode_rgb(&self.image)?,
            mask: encode_gray(&self.mask)?,
            conditioning_scale: self.params.conditioning_scale,
            steps: self.params.steps,
            guidance: self.params.guidance,
            seed: self.params.seed,
        })
    }

    pub fn from_body(body: &InpaintRequestBody) -> Result<Self, DiffusionError> {
        let image = decode_rgb(&body.image)?;
        let mask = decode_gray(&body.mask)?;
        if image.dimensions() != mask.dimensions() {
            return Err(DiffusionError::Codec("image and mask sizes differ".into()));
        }
        let res = image.width();
        Ok(Self {
            prompt: body.prompt.clone(),
            image,
            mask,
            params: params(body.conditioning_scale, body.steps, body.guidance, body.seed, res),
        })
    }
}
