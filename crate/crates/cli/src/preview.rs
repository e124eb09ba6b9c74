//! Contact sheet of textured images with masks and keypoints drawn on top.

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};
use scenesynth::annotate::ImageAnnotation;
use scenesynth::raster::KeypointState;

use crate::config::TexturingMethod;
use crate::pipeline::{Manifest, Pipeline, PipelineError};

const OUTLINE: Rgb<u8> = Rgb([255, 220, 0]);
const VISIBLE: Rgb<u8> = Rgb([0, 230, 0]);
const OCCLUDED: Rgb<u8> = Rgb([230, 0, 0]);

/// Draws the object outline and keypoint markers (green visible, red occluded).
pub fn overlay(img: &mut RgbImage, ann: &ImageAnnotation) {
    let m = &ann.mask;
    for y in 0..m.height() {
        for x in 0..m.width() {
            let (xi, yi) = (x as i64, y as i64);
            let edge = m.get(x, y)
                && [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .any(|(dx, dy)| !m.get_signed(xi + dx, yi + dy));
            if edge {
                img.put_pixel(x, y, OUTLINE);
            }
        }
    }
    for k in &ann.keypoints {
        let color = match k.state {
            KeypointState::Visible => VISIBLE,
            KeypointState::Occluded => OCCLUDED,
            KeypointState::Outside => continue,
        };
        let (kx, ky) = k.pixel();
        for y in ky - 3..=ky + 3 {
            for x in kx - 3..=kx + 3 {
                if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
                    img.put_pixel(x as u32, y as u32, color);
                }
            }
        }
    }
}

/// Up to `count` images evenly spaced over the manifest, tiled `columns` wide
/// at `thumb` pixels per tile.
pub fn contact_sheet(
    p: &Pipeline,
    method: TexturingMethod,
    count: usize,
    columns: u32,
    thumb: u32,
) -> Result<RgbImage, PipelineError> {
    let manifest = Manifest::read(&p.layout.abs(&p.layout.manifest(method)))?;
    let ids = manifest.ok_ids();
    let n = count.min(ids.len());
    let picked: Vec<u64> = (0..n).map(|i| ids[i * ids.len() / n.max(1)]).collect();
    let columns = columns.max(1);
    let rows = (n as u32).div_ceil(columns);
    let mut sheet = RgbImage::from_pixel(columns * thumb, rows.max(1) * thumb, Rgb([24, 24, 24]));
    for (i, id) in picked.iter().enumerate() {
        let rgb_path = p.layout.abs(&p.layout.rgb(method, *id));
        let mut img = image::open(&rgb_path)
            .map_err(|e| PipelineError::File { path: rgb_path, message: e.to_string() })?
            .into_rgb8();
        overlay(&mut img, &p.load_annotation(*id)?.annotation);
        let tile = imageops::resize(&img, thumb, thumb, FilterType::Triangle);
        let (c, r) = (i as u32 % columns, i as u32 / columns);
        imageops::replace(&mut sheet, &tile, (c * thumb) as i64, (r * thumb) as i64);
    }
    Ok(sheet)
}
