use image::imageops::{self, FilterType};
use image::{GrayImage, Luma, Rgb, RgbImage};

use super::{depth_to_control_image, dilate_mask, DiffusionError, DiffusionParams, InpaintRequest, TextureRequest, TexturingBackend, CROP_MULTIPLE};
use crate::geometry::{Mesh, PinholeCamera};
use crate::mask::{BinaryMask, PixelRect};
use crate::prompt::PromptSpec;
use crate::raster::{rasterize, render_depth_without_object, Framebuffer, INSTANCE_OBJECT, INSTANCE_TABLE};
use crate::scene::SceneSpec;

/// Full-resolution intermediate image of a multi-stage pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct StageImage {
    pub name: &'static str,
    pub image: RgbImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TexturedImage {
    pub image: RgbImage,
    pub stages: Vec<StageImage>,
    /// Backend requests issued.
    pub requests: usize,
    pub backend_id: String,
}

impl TexturedImage {
    pub fn stage(&self, name: &str) -> Option<&RgbImage> {
        self.stages.iter().find(|s| s.name == name).map(|s| &s.image)
    }
}

fn resize_rgb(img: &RgbImage, w: u32, h: u32) -> RgbImage {
    if img.dimensions() == (w, h) {
        img.clone()
    } else {
        imageops::resize(img, w, h, FilterType::Triangle)
    }
}

fn resize_gray(img: &GrayImage, w: u32, h: u32, filter: FilterType) -> GrayImage {
    if img.dimensions() == (w, h) {
        img.clone()
    } else {
        imageops::resize(img, w, h, filter)
    }
}

fn check_size(img: &RgbImage, w: u32, h: u32) -> Result<(), DiffusionError> {
    if img.dimensions() != (w, h) {
        return Err(DiffusionError::ResolutionMismatch {
            want_w: w,
            want_h: h,
            got_w: img.width(),
            got_h: img.height(),
        });
    }
    Ok(())
}

struct Session<'a> {
    backend: &'a dyn TexturingBackend,
    params: &'a DiffusionParams,
    requests: usize,
    backend_id: String,
}

impl<'a> Session<'a> {
    fn new(backend: &'a dyn TexturingBackend, params: &'a DiffusionParams) -> Result<Self, DiffusionError> {
        params.validate()?;
        Ok(Self {
            backend,
            params,
            requests: 0,
            backend_id: String::new(),
        })
    }

    /// Stage `k` uses seed `params.seed + k`.
    fn stage_params(&self, stage: u64) -> DiffusionParams {
        self.params.with_seed(self.params.seed.wrapping_add(stage))
    }

    /// Depth-conditioned request for `control`, result at `control`'s size.
    fn texture(&mut self, prompt: &str, control: &GrayImage, stage: u64) -> Result<RgbImage, DiffusionError> {
        let res = self.params.resolution;
        let req = TextureRequest {
            prompt: prompt.to_string(),
            control: resize_gray(control, res, res, FilterType::Triangle),
            params: self.stage_params(stage),
        };
        self.requests += 1;
        let out = self.backend.texture(&req)?;
        check_size(&out.image, res, res)?;
        self.backend_id = out.backend_id;
        Ok(resize_rgb(&out.image, control.width(), control.height()))
    }

    /// Inpaint request regenerating `region`, result at `image`'s size.
    fn inpaint(&mut self, prompt: &str, image: &RgbImage, region: &BinaryMask, stage: u64) -> Result<RgbImage, DiffusionError> {
        let res = self.params.resolution;
        let req = InpaintRequest {
            prompt: prompt.to_string(),
            image: resize_rgb(image, res, res),
            mask: resize_gray(&region.to_gray(), res, res, FilterType::Nearest),
            params: self.stage_params(stage),
        };
        self.requests += 1;
        let out = self.backend.inpaint(&req)?;
        check_size(&out.image, res, res)?;
        self.backend_id = out.backend_id;
        Ok(resize_rgb(&out.image, image.width(), image.height()))
    }

    fn finish(self, image: RgbImage, stages: Vec<StageImage>) -> TexturedImage {
        TexturedImage {
            image,
            stages,
            requests: self.requests,
            backend_id: self.backend_id,
        }
    }
}

/// Square crop around `mask`, padded by `pad`, grown to a multiple of
/// [`CROP_MULTIPLE`] and shifted to lie inside the image.
pub fn square_crop(mask: &BinaryMask, pad: u32) -> Option<PixelRect> {
    let b = mask.bbox()?;
    let (w, h) = (mask.width(), mask.height());
    let side = (b.w.max(b.h) + 2 * pad).div_ceil(CROP_MULTIPLE) * CROP_MULTIPLE;
    let side = side.min(w.min(h));
    let place = |start: u32, len: u32, limit: u32| -> u32 {
        let center2 = 2 * start + len;
        (center2.saturating_sub(side) / 2).min(limit - side)
    };
    Some(PixelRect {
        x: place(b.x, b.w, w),
        y: place(b.y, b.h, h),
        w: side,
        h: side,
    })
}

/// Depth-textures the `crop` of `fb` and pastes the result onto a black canvas.
fn textured_crop(s: &mut Session<'_>, fb: &Framebuffer, crop: PixelRect, prompt: &str, stage: u64) -> Result<RgbImage, DiffusionError> {
    let control = depth_to_control_image(&fb.crop(crop));
    let patch = s.texture(prompt, &control, stage)?;
    let mut canvas = RgbImage::new(fb.width, fb.height);
    imageops::replace(&mut canvas, &patch, crop.x as i64, crop.y as i64);
    Ok(canvas)
}

fn composite(keep: &BinaryMask, fg: &RgbImage, bg: &RgbImage) -> RgbImage {
    RgbImage::from_fn(fg.width(), fg.height(), |x, y| {
        if keep.get(x, y) {
            *fg.get_pixel(x, y)
        } else {
            *bg.get_pixel(x, y)
        }
    })
}

/// Crop-texture the pixels of `target`, then inpaint everything outside its dilated mask.
fn crop_then_inpaint(
    s: &mut Session<'_>,
    fb: &Framebuffer,
    target: u8,
    crop_prompt: &str,
    background_prompt: &str,
    pad: u32,
    dilation: u32,
    first_stage: u64,
) -> Result<(RgbImage, RgbImage, BinaryMask), DiffusionError> {
    let mask = fb.instance_mask(target);
    let crop = square_crop(&mask, pad).ok_or(if target == INSTANCE_OBJECT {
        DiffusionError::ObjectNotVisible
    } else {
        DiffusionError::TableNotVisible
    })?;
    let canvas = textured_crop(s, fb, crop, crop_prompt, first_stage)?;
    let dilated = dilate_mask(&mask, dilation);
    let keep = BinaryMask::from_fn(fb.width, fb.height, |x, y| dilated.get(x, y) && crop.contains(x, y));
    let background = s.inpaint(background_prompt, &canvas, &keep.complement(), first_stage + 1)?;
    let out = composite(&keep, &canvas, &background);
    Ok((out, canvas, keep))
}

/// One depth-conditioned request over the full frame with the combined prompt.
pub fn texture_one_stage(
    fb: &Framebuffer,
    prompt: &PromptSpec,
    params: &DiffusionParams,
    backend: &dyn TexturingBackend,
) -> Result<TexturedImage, DiffusionError> {
    let mut s = Session::new(backend, params)?;
    let image = s.texture(&prompt.combined, &depth_to_control_image(fb), 0)?;
    Ok(s.finish(image, Vec::new()))
}

/// Object crop first, then the background inpainted around the dilated object mask.
///
/// Stages: `"object"` (the textured crop on a black canvas). Pixels inside the
/// dilated object mask come from that stage, all others from the inpainting.
pub fn texture_two_stage(
    fb: &Framebuffer,
    prompt: &PromptSpec,
    params: &DiffusionParams,
    backend: &dyn TexturingBackend,
    pad: u32,
    dilation: u32,
) -> Result<TexturedImage, DiffusionError> {
    let mut s = Session::new(backend, params)?;
    let (image, canvas, _) = crop_then_inpaint(
        &mut s,
        fb,
        INSTANCE_OBJECT,
        &prompt.object_text,
        &prompt.background_text,
        pad,
        dilation,
        0,
    )?;
    Ok(s.finish(image, vec![StageImage { name: "object", image: canvas }]))
}

/// Empty-table scene textured in two stages, then the separately textured
/// object crop overlaid through the object mask.
///
/// Stages: `"empty_table"` and `"object"`.
pub fn texture_three_stage_from_renders(
    fb: &Framebuffer,
    fb_empty: &Framebuffer,
    prompt: &PromptSpec,
    params: &DiffusionParams,
    backend: &dyn TexturingBackend,
    pad: u32,
    dilation: u32,
) -> Result<TexturedImage, DiffusionError> {
    let mut s = Session::new(backend, params)?;
    let object_mask = fb.instance_mask(INSTANCE_OBJECT);
    let object_crop = square_crop(&object_mask, pad).ok_or(DiffusionError::ObjectNotVisible)?;
    let (table, _, _) = crop_then_inpaint(
        &mut s,
        fb_empty,
        INSTANCE_TABLE,
        &prompt.background_text,
        &prompt.background_text,
        pad,
        dilation,
        0,
    )?;
    let object = textured_crop(&mut s, fb, object_crop, &prompt.object_text, 2)?;
    let image = composite(&object_mask, &object, &table);
    Ok(s.finish(
        image,
        vec![
            StageImage { name: "empty_table", image: table },
            StageImage { name: "object", image: object },
        ],
    ))
}

/// Renders the scene with and without the object and runs the three-stage pipeline.
#[allow(clippy::too_many_arguments)]
pub fn texture_three_stage(
    scene: &SceneSpec,
    cam: &PinholeCamera,
    object: &Mesh,
    prompt: &PromptSpec,
    params: &DiffusionParams,
    backend: &dyn TexturingBackend,
    pad: u32,
    dilation: u32,
) -> Result<TexturedImage, DiffusionError> {
    let fb = rasterize(scene, cam, object, None);
    let empty = render_depth_without_object(scene, cam);
    texture_three_stage_from_renders(&fb, &empty, prompt, params, backend, pad, dilation)
}

/// Two inpaint requests without depth conditioning: the object region, then the rest.
///
/// The starting canvas is the depth control image replicated to RGB.
/// Stages: `"object"`.
pub fn texture_inpainting_baseline(
    fb: &Framebuffer,
    prompt: &PromptSpec,
    params: &DiffusionParams,
    backend: &dyn TexturingBackend,
) -> Result<TexturedImage, DiffusionError> {
    let mut s = Session::new(backend, params)?;
    let mask = fb.instance_mask(INSTANCE_OBJECT);
    if mask.is_empty() {
        return Err(DiffusionError::ObjectNotVisible);
    }
    let control = depth_to_control_image(fb);
    let start = RgbImage::from_fn(fb.width, fb.height, |x, y| {
        let Luma([v]) = control.get_pixel(x, y);
        Rgb([*v; 3])
    });
    let object = s.inpaint(&prompt.object_text, &start, &mask, 0)?;
    let rest = s.inpaint(&prompt.background_text, &object, &mask.complement(), 1)?;
    let image = composite(&mask, &object, &rest);
    Ok(s.finish(image, vec![StageImage { name: "object", image: object }]))
}
