//! Domain-randomization texturing: texture sources, equirectangular
//! environments and the per-scene random assignment.
//!
//! Colors are linear `[0, 1]` RGB triples. UV addressing wraps in both
//! directions for surface textures; environment lookups wrap in longitude and
//! clamp in latitude.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Vec2, Vec3};
use crate::seeding;

pub type Color = [f64; 3];

#[derive(Debug, Error)]
pub enum TextureError {
    #[error("texture library has no usable sources")]
    EmptyLibrary,
    #[error("texture {0:?} is not in the library")]
    Unresolved(String),
    #[error("failed to load {path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Analytic textures, defined on the unit UV square and periodic with period 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProceduralTexture {
    Constant { color: [u8; 3] },
    /// `tiles` squares per unit along each axis.
    Checker { tiles: u32, a: [u8; 3], b: [u8; 3] },
    /// Hard stripes whose phase is `freq_u * u + freq_v * v` (integers keep it seamless).
    Stripes { freq_u: i32, freq_v: i32, a: [u8; 3], b: [u8; 3] },
    /// Periodic value noise on a `cells x cells` lattice blending `a` to `b`.
    Noise { seed: u64, cells: u32, a: [u8; 3], b: [u8; 3] },
    /// Vertical gradient from `top` (v = 0) to `bottom` (v = 1); used for skies.
    Gradient { top: [u8; 3], bottom: [u8; 3] },
}

impl ProceduralTexture {
    pub fn sample(&self, uv: Vec2) -> Color {
        let u = uv.x.rem_euclid(1.0);
        let v = uv.y.rem_euclid(1.0);
        match *self {
            ProceduralTexture::Constant { color } => to_unit(color),
            ProceduralTexture::Checker { tiles, a, b } => {
                let t = tiles.max(1) as f64;
                let parity = ((u * t).floor() as i64 + (v * t).floor() as i64).rem_euclid(2);
                to_unit(if parity == 0 { a } else { b })
            }
            ProceduralTexture::Stripes { freq_u, freq_v, a, b } => {
                let phase = (freq_u as f64 * u + freq_v as f64 * v).rem_euclid(1.0);
                to_unit(if phase < 0.5 { a } else { b })
            }
            ProceduralTexture::Noise { seed, cells, a, b } => {
                let t = value_noise(seed, cells.max(1), u, v);
                lerp(to_unit(a), to_unit(b), t)
            }
            ProceduralTexture::Gradient { top, bottom } => lerp(to_unit(top), to_unit(bottom), uv.y.clamp(0.0, 1.0)),
        }
    }
}

fn value_noise(seed: u64, cells: u32, u: f64, v: f64) -> f64 {
    let n = cells as i64;
    let x = u * cells as f64;
    let y = v * cells as f64;
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (smooth(x - x0), smooth(y - y0));
    let lattice = |i: i64, j: i64| {
        let h = seeding::splitmix64(seed ^ seeding::splitmix64((i.rem_euclid(n) as u64) << 32 | j.rem_euclid(n) as u64));
        (h >> 11) as f64 / (1u64 << 53) as f64
    };
    let (i, j) = (x0 as i64, y0 as i64);
    let top = lattice(i, j) * (1.0 - fx) + lattice(i + 1, j) * fx;
    let bottom = lattice(i, j + 1) * (1.0 - fx) + lattice(i + 1, j + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn to_unit(c: [u8; 3]) -> Color {
    c.map(|x| x as f64 / 255.0)
}

fn lerp(a: Color, b: Color, t: f64) -> Color {
    [0, 1, 2].map(|i| a[i] * (1.0 - t) + b[i] * t)
}

/// Converts a `[0, 1]` color to 8-bit with rounding and clamping.
pub fn to_rgb8(c: Color) -> [u8; 3] {
    c.map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8)
}

/// A loaded texture.
#[derive(Debug, Clone)]
pub enum Texture {
    Image(Arc<RgbImage>),
    Procedural(ProceduralTexture),
}

impl Texture {
    /// Wrap-around lookup; bilinear for images.
    pub fn lookup(&self, uv: Vec2) -> Color {
        match self {
            Texture::Image(img) => bilinear(img, uv.x, uv.y, true),
            Texture::Procedural(p) => p.sample(uv),
        }
    }

    fn lookup_env(&self, uv: Vec2) -> Color {
        match self {
            Texture::Image(img) => bilinear(img, uv.x, uv.y, false),
            Texture::Procedural(p) => p.sample(Vec2::new(uv.x, uv.y.clamp(0.0, 1.0 - 1e-12))),
        }
    }
}

/// Bilinear sample with texel centers at `(i + 0.5) / w`. `wrap_v = false` clamps rows.
fn bilinear(img: &RgbImage, u: f64, v: f64, wrap_v: bool) -> Color {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x = u * w as f64 - 0.5;
    let y = v * h as f64 - 0.5;
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let col = |i: i64| i.rem_euclid(w) as u32;
    let row = |j: i64| {
        if wrap_v {
            j.rem_euclid(h) as u32
        } else {
            j.clamp(0, h - 1) as u32
        }
    };
    let px = |i: i64, j: i64| to_unit(img.get_pixel(col(i), row(j)).0);
    let (a, b, c, d) = (px(x0, y0), px(x0 + 1, y0), px(x0, y0 + 1), px(x0 + 1, y0 + 1));
    let top = lerp(a, b, fx);
    let bottom = lerp(c, d, fx);
    lerp(top, bottom, fy)
}

/// Equirectangular UV for a world direction: `u = (atan2(dy, dx) + π) / 2π`, `v = acos(dz) / π`.
pub fn equirect_uv(direction: &Vec3) -> Vec2 {
    let u = (direction.y.atan2(direction.x) + PI) / (2.0 * PI);
    let v = direction.z.clamp(-1.0, 1.0).acos() / PI;
    Vec2::new(u, v)
}

/// Background color seen along a unit `direction` (+z up).
pub fn sample_environment(direction: &Vec3, env: &Texture) -> Color {
    debug_assert!((direction.norm() - 1.0).abs() <= 1e-6);
    env.lookup_env(equirect_uv(direction))
}

/// Triplanar lookup for surfaces without UVs: three axis projections of the
/// object-local point blended by the squared normal components.
pub fn triplanar_lookup(texture: &Texture, local: &Vec3, normal: &Vec3, tiles_per_meter: f64) -> Color {
    let w = normal.map(|c| c * c);
    let sum = w.x + w.y + w.z;
    if !(sum > 0.0) {
        return texture.lookup(Vec2::new(local.x, local.y) * tiles_per_meter);
    }
    let p = local * tiles_per_meter;
    let mut out = [0.0; 3];
    for (weight, uv) in [
        (w.x, Vec2::new(p.y, p.z)),
        (w.y, Vec2::new(p.x, p.z)),
        (w.z, Vec2::new(p.x, p.y)),
    ] {
        if weight > 0.0 {
            let c = texture.lookup(uv);
            for i in 0..3 {
                out[i] += c[i] * weight / sum;
            }
        }
    }
    out
}

/// Serializable pointer to a texture source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureRef {
    /// Path relative to the library root.
    Image(String),
    Procedural(ProceduralTexture),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Checker,
    Noise,
    Stripes,
}

/// Parameter ranges of the procedural generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProceduralConfig {
    pub generators: Vec<GeneratorKind>,
    /// Inclusive checker tile count range.
    pub checker_tiles: [u32; 2],
    /// Inclusive noise lattice size range.
    pub noise_cells: [u32; 2],
    /// Maximum absolute stripe frequency per axis.
    pub stripe_max_freq: i32,
    /// Use procedural sky gradients and noise as environments.
    pub procedural_environments: bool,
    /// Log-uniform range of texture density on surfaces (tiles per meter).
    pub tiles_per_meter: [f64; 2],
}

impl Default for ProceduralConfig {
    fn default() -> Self {
        Self {
            generators: vec![GeneratorKind::Checker, GeneratorKind::Noise, GeneratorKind::Stripes],
            checker_tiles: [2, 16],
            noise_cells: [2, 12],
            stripe_max_freq: 8,
            procedural_environments: true,
            tiles_per_meter: [0.25, 4.0],
        }
    }
}

impl ProceduralConfig {
    /// No generators: only image assets are drawn.
    pub fn disabled() -> Self {
        Self {
            generators: Vec::new(),
            procedural_environments: false,
            ..Self::default()
        }
    }
}

/// Image assets plus procedural generators.
///
/// Directory layout: `<root>/textures/*.{png,jpg,jpeg}` and
/// `<root>/envmaps/*.{png,jpg,jpeg}` (equirectangular).
#[derive(Debug, Clone)]
pub struct TextureLibrary {
    root: Option<PathBuf>,
    textures: BTreeMap<String, Arc<RgbImage>>,
    environments: BTreeMap<String, Arc<RgbImage>>,
    procedural: ProceduralConfig,
}

impl TextureLibrary {
    pub fn procedural(procedural: ProceduralConfig) -> Self {
        Self {
            root: None,
            textures: BTreeMap::new(),
            environments: BTreeMap::new(),
            procedural,
        }
    }

    pub fn load(root: &Path, procedural: ProceduralConfig) -> Result<Self, TextureError> {
        let mut lib = Self::procedural(procedural);
        lib.root = Some(root.to_path_buf());
        lib.textures = load_images(root, "textures")?;
        lib.environments = load_images(root, "envmaps")?;
        if lib.is_empty() {
            return Err(TextureError::EmptyLibrary);
        }
        Ok(lib)
    }

    /// In-memory library (tests and embedding).
    pub fn from_images(
        textures: BTreeMap<String, Arc<RgbImage>>,
        environments: BTreeMap<String, Arc<RgbImage>>,
        procedural: ProceduralConfig,
    ) -> Self {
        Self {
            root: None,
            textures,
            environments,
            procedural,
        }
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn is_empty(&self) -> bool {
        (self.textures.is_empty() && self.procedural.generators.is_empty())
            || (self.environments.is_empty() && !self.procedural.procedural_environments)
    }

    pub fn procedural_config(&self) -> &ProceduralConfig {
        &self.procedural
    }

    pub fn resolve(&self, r: &TextureRef) -> Result<Texture, TextureError> {
        match r {
            TextureRef::Procedural(p) => Ok(Texture::Procedural(p.clone())),
            TextureRef::Image(name) => self
                .textures
                .get(name)
                .or_else(|| self.environments.get(name))
                .map(|img| Texture::Image(img.clone()))
                .ok_or_else(|| TextureError::Unresolved(name.clone())),
        }
    }

    fn draw_surface(&self, rng: &mut impl Rng) -> Result<TextureRef, TextureError> {
        let n_img = self.textures.len();
        let n = n_img + self.procedural.generators.len();
        if n == 0 {
            return Err(TextureError::EmptyLibrary);
        }
        let k = rng.random_range(0..n);
        if k < n_img {
            let name = self.textures.keys().nth(k).expect("index in range");
            return Ok(TextureRef::Image(name.clone()));
        }
        let p = &self.procedural;
        let tex = match p.generators[k - n_img] {
            GeneratorKind::Checker => ProceduralTexture::Checker {
                tiles: rng.random_range(p.checker_tiles[0]..=p.checker_tiles[1].max(p.checker_tiles[0])),
                a: rng.random(),
                b: rng.random(),
            },
            GeneratorKind::Noise => ProceduralTexture::Noise {
                seed: rng.random(),
                cells: rng.random_range(p.noise_cells[0]..=p.noise_cells[1].max(p.noise_cells[0])),
                a: rng.random(),
                b: rng.random(),
            },
            GeneratorKind::Stripes => {
                let m = p.stripe_max_freq.max(1);
                let mut fu = rng.random_range(-m..=m);
                let fv = rng.random_range(-m..=m);
                if fu == 0 && fv == 0 {
                    fu = 1;
                }
                ProceduralTexture::Stripes {
                    freq_u: fu,
                    freq_v: fv,
                    a: rng.random(),
                    b: rng.random(),
                }
            }
        };
        Ok(TextureRef::Procedural(tex))
    }

    fn draw_environment(&self, rng: &mut impl Rng) -> Result<TextureRef, TextureError> {
        let n_img = self.environments.len();
        let n = n_img + if self.procedural.procedural_environments { 2 } else { 0 };
        if n == 0 {
            return Err(TextureError::EmptyLibrary);
        }
        let k = rng.random_range(0..n);
        if k < n_img {
            let name = self.environments.keys().nth(k).expect("index in range");
            return Ok(TextureRef::Image(name.clone()));
        }
        let tex = if k == n_img {
            ProceduralTexture::Gradient {
                top: rng.random(),
                bottom: rng.random(),
            }
        } else {
            ProceduralTexture::Noise {
                seed: rng.random(),
                cells: rng.random_range(4..=16),
                a: rng.random(),
                b: rng.random(),
            }
        };
        Ok(TextureRef::Procedural(tex))
    }
}

fn load_images(root: &Path, sub: &str) -> Result<BTreeMap<String, Arc<RgbImage>>, TextureError> {
    let dir = root.join(sub);
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for item in std::fs::read_dir(&dir)? {
        let path = item?.path();
        let ok = path.extension().and_then(|e| e.to_str()).is_some_and(|e| {
            matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg")
        });
        if !ok {
            continue;
        }
        let img = image::open(&path)
            .map_err(|source| TextureError::Image {
                path: path.clone(),
                source,
            })?
            .to_rgb8();
        let name = format!("{sub}/{}", path.file_name().unwrap_or_default().to_string_lossy());
        out.insert(name, Arc::new(img));
    }
    Ok(out)
}

/// Textures for one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureAssignment {
    pub object_texture: TextureRef,
    pub table_texture: TextureRef,
    pub environment: TextureRef,
    pub object_tiles_per_meter: f64,
    pub table_tiles_per_meter: f64,
    pub seed: u64,
}

/// Uniform draw over image and procedural sources for the object, the table
/// and the environment. Deterministic per `(scene_id, seed)`.
pub fn assign_random_textures(
    scene_id: u64,
    lib: &TextureLibrary,
    seed: u64,
) -> Result<TextureAssignment, TextureError> {
    let mut rng = seeding::rng(seed, seeding::TEXTURE, scene_id);
    let object_texture = lib.draw_surface(&mut rng)?;
    let table_texture = lib.draw_surface(&mut rng)?;
    let environment = lib.draw_environment(&mut rng)?;
    let [lo, hi] = lib.procedural.tiles_per_meter;
    let mut log_uniform = || {
        if lo == hi {
            lo
        } else {
            (rng.random_range(lo.ln()..=hi.ln())).exp()
        }
    };
    let object_tiles_per_meter = log_uniform();
    let table_tiles_per_meter = log_uniform();
    Ok(TextureAssignment {
        object_texture,
        table_texture,
        environment,
        object_tiles_per_meter,
        table_tiles_per_meter,
        seed,
    })
}
