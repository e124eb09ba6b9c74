use std::collections::BTreeMap;
use std::sync::Arc;

use approx::assert_abs_diff_eq;
use image::{Rgb, RgbImage};
use scenesynth::geometry::Vec3;
use scenesynth::texture::{assign_random_textures, sample_environment, ProceduralConfig, Texture, TextureLibrary, TextureRef};

fn solid(c: u8) -> Arc<RgbImage> {
    Arc::new(RgbImage::from_pixel(4, 4, Rgb([c, c, c])))
}

fn image_library(n: usize) -> TextureLibrary {
    let textures = (0..n).map(|i| (format!("textures/t{i:02}.png"), solid(i as u8))).collect();
    let envs = BTreeMap::from([("envmaps/e.png".to_string(), solid(0))]);
    TextureLibrary::from_images(textures, envs, ProceduralConfig::disabled())
}

#[test]
fn draws_are_uniform_over_library() {
    let n = 7;
    let lib = image_library(n);
    let draws = 10_000;
    let mut counts = BTreeMap::<String, usize>::new();
    for scene in 0..draws {
        let a = assign_random_textures(scene, &lib, 99).unwrap();
        let TextureRef::Image(name) = a.object_texture else { panic!("procedural draw from image-only library") };
        *counts.entry(name).or_default() += 1;
    }
    assert_eq!(counts.len(), n);
    let p = 1.0 / n as f64;
    let sigma = (p * (1.0 - p) / draws as f64).sqrt();
    for (name, c) in counts {
        let f = c as f64 / draws as f64;
        assert!((f - p).abs() <= 3.0 * sigma, "{name}: {f}");
    }
}

#[test]
fn single_texture_always_chosen_and_draws_repeat() {
    let lib = image_library(1);
    for scene in 0..50 {
        let a = assign_random_textures(scene, &lib, 5).unwrap();
        assert_eq!(a.object_texture, TextureRef::Image("textures/t00.png".into()));
        assert_eq!(a.table_texture, a.object_texture);
        assert_eq!(a, assign_random_textures(scene, &lib, 5).unwrap());
    }
}

#[test]
fn procedural_library_is_never_empty() {
    let lib = TextureLibrary::procedural(ProceduralConfig::default());
    assert!(!lib.is_empty());
    let a = assign_random_textures(3, &lib, 1).unwrap();
    assert!(matches!(a.environment, TextureRef::Procedural(_)));
}

/// Red grows 20 per column, green 40 per row, so bilinear samples are exact.
fn ramp() -> Texture {
    Texture::Image(Arc::new(RgbImage::from_fn(8, 4, |x, y| Rgb([(x * 20) as u8, (y * 40) as u8, 9]))))
}

#[test]
fn environment_mapping_examples() {
    let env = ramp();
    let up = sample_environment(&Vec3::z(), &env);
    assert_abs_diff_eq!(up[1], 0.0, epsilon = 1e-12);

    // u = 0.5 -> x = 3.5 texels, v = 0.5 -> y = 1.5 texels
    let side = sample_environment(&Vec3::x(), &env);
    assert_abs_diff_eq!(side[0], 70.0 / 255.0, epsilon = 1e-9);
    assert_abs_diff_eq!(side[1], 60.0 / 255.0, epsilon = 1e-9);

    let flat = Texture::Image(solid(77));
    for d in [Vec3::x(), -Vec3::z(), Vec3::new(0.3, -0.4, 0.5).normalize()] {
        let c = sample_environment(&d, &flat);
        assert!(c.iter().all(|v| (v - 77.0 / 255.0).abs() < 1e-12));
    }
}
