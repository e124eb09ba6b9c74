//! Software z-buffer renderer.
//!
//! Rendering is deferred: a visibility pass resolves, per pixel center, the
//! nearest surface (camera-frame depth, instance id, triangle and perspective-
//! correct barycentrics); an optional shading pass then turns that into RGB.
//! Depth and instance outputs therefore never depend on textures or lighting.
//!
//! Coverage uses pixel centers with a top-left tie rule, so triangles sharing
//! an edge never both cover a pixel. Work is split into bands of rows, each
//! band owned by one thread, which keeps the result bit-identical to a
//! single-threaded render.

use image::{GrayImage, ImageBuffer, Luma, RgbImage};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{Mesh, PinholeCamera, Point3, RigidTransform, Vec2, Vec3};
use crate::mask::{BinaryMask, PixelRect};
use crate::scene::{SceneSpec, TableSpec};
use crate::seeding;
use crate::texture::{sample_environment, to_rgb8, triplanar_lookup, Color, Texture};

pub const INSTANCE_BACKGROUND: u8 = 0;
pub const INSTANCE_TABLE: u8 = 1;
pub const INSTANCE_OBJECT: u8 = 2;

/// Triangles are clipped against this camera-frame depth (meters).
pub const NEAR_PLANE: f64 = 1e-3;
/// Default depth slack for keypoint visibility (meters).
pub const DEFAULT_VISIBILITY_EPS: f64 = 0.005;
/// Minimum Lambert factor.
pub const AMBIENT: f64 = 0.3;
/// 16-bit depth PNG units per meter (0.1 mm resolution, 6.5535 m range; 0 = no hit).
pub const DEPTH_PNG_UNITS_PER_METER: f64 = 10_000.0;

const BAND_ROWS: usize = 16;

/// Render output. Depth is camera-frame z in meters, `+inf` where nothing was hit.
#[derive(Debug, Clone, PartialEq)]
pub struct Framebuffer {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f64>,
    pub instance: Vec<u8>,
    pub rgb: Option<RgbImage>,
}

impl Framebuffer {
    pub fn empty(width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        Self {
            width,
            height,
            depth: vec![f64::INFINITY; n],
            instance: vec![INSTANCE_BACKGROUND; n],
            rgb: None,
        }
    }

    pub fn index(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    pub fn depth_at(&self, x: u32, y: u32) -> f64 {
        self.depth[self.index(x, y)]
    }

    pub fn instance_at(&self, x: u32, y: u32) -> u8 {
        self.instance[self.index(x, y)]
    }

    pub fn instance_mask(&self, id: u8) -> BinaryMask {
        BinaryMask::from_vec(self.width, self.height, self.instance.iter().map(|&i| i == id).collect())
    }

    pub fn covered_mask(&self) -> BinaryMask {
        BinaryMask::from_vec(
            self.width,
            self.height,
            self.instance.iter().map(|&i| i != INSTANCE_BACKGROUND).collect(),
        )
    }

    /// Sub-framebuffer over `rect` (must lie inside the image).
    pub fn crop(&self, rect: PixelRect) -> Framebuffer {
        assert!(rect.x + rect.w <= self.width && rect.y + rect.h <= self.height, "crop out of bounds");
        let mut out = Framebuffer::empty(rect.w, rect.h);
        for y in 0..rect.h {
            let src = self.index(rect.x, rect.y + y);
            let dst = (y * rect.w) as usize;
            let n = rect.w as usize;
            out.depth[dst..dst + n].copy_from_slice(&self.depth[src..src + n]);
            out.instance[dst..dst + n].copy_from_slice(&self.instance[src..src + n]);
        }
        out.rgb = self
            .rgb
            .as_ref()
            .map(|img| image::imageops::crop_imm(img, rect.x, rect.y, rect.w, rect.h).to_image());
        out
    }

    /// Checks the depth/instance consistency invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = (self.width * self.height) as usize;
        if self.depth.len() != n || self.instance.len() != n {
            return Err("channel sizes do not match the dimensions".into());
        }
        for (i, (&d, &id)) in self.depth.iter().zip(&self.instance).enumerate() {
            if (id != INSTANCE_BACKGROUND) != d.is_finite() {
                return Err(format!("pixel {i}: instance {id} with depth {d}"));
            }
        }
        Ok(())
    }

    /// 16-bit depth image, [`DEPTH_PNG_UNITS_PER_METER`] units per meter, 0 for no hit.
    pub fn depth_image_u16(&self) -> ImageBuffer<Luma<u16>, Vec<u16>> {
        ImageBuffer::from_fn(self.width, self.height, |x, y| {
            let d = self.depth_at(x, y);
            let v = if d.is_finite() {
                (d * DEPTH_PNG_UNITS_PER_METER).round().clamp(1.0, 65535.0) as u16
            } else {
                0
            };
            Luma([v])
        })
    }

    /// 8-bit image of instance ids.
    pub fn instance_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| Luma([self.instance_at(x, y)]))
    }
}

/// Texture and mapping used to shade one surface.
#[derive(Debug, Clone, Copy)]
pub struct Material<'a> {
    pub texture: &'a Texture,
    pub tiles_per_meter: f64,
    pub mapping: UvMapping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UvMapping {
    /// Mesh UVs when present, triplanar from mesh-local coordinates otherwise.
    MeshOrTriplanar,
    /// Planar projection of the mesh-local xy coordinates.
    PlanarXy,
}

/// A mesh placed in the world.
#[derive(Debug, Clone, Copy)]
pub struct Surface<'a> {
    pub mesh: &'a Mesh,
    pub pose: RigidTransform,
    pub instance: u8,
    pub material: Option<Material<'a>>,
}

/// Lighting and background for the shading pass.
#[derive(Debug, Clone, Copy)]
pub struct Lighting<'a> {
    /// Unit vector pointing toward the light.
    pub light_dir: Vec3,
    pub environment: &'a Texture,
}

#[derive(Debug, Clone, Copy)]
struct Fragment {
    surface: u16,
    triangle: u32,
    bary: [f64; 3],
}

#[derive(Debug, Clone, Copy)]
struct ScreenTri {
    surface: u16,
    triangle: u32,
    p: [[f64; 2]; 3],
    inv_z: [f64; 3],
    /// Barycentrics of each clipped vertex with respect to the source triangle.
    bary: [[f64; 3]; 3],
    area: f64,
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

/// Renders `surfaces` through `cam`. With `lighting`, also produces RGB.
pub fn render_surfaces(surfaces: &[Surface<'_>], cam: &PinholeCamera, lighting: Option<&Lighting<'_>>) -> Framebuffer {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let tris = setup_triangles(surfaces, cam);

    let n_bands = h.div_ceil(BAND_ROWS);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); n_bands];
    for (i, t) in tris.iter().enumerate() {
        for band in bins.iter_mut().take(t.y1 / BAND_ROWS + 1).skip(t.y0 / BAND_ROWS) {
            band.push(i as u32);
        }
    }

    let mut fb = Framebuffer::empty(cam.width, cam.height);
    let mut frags: Vec<Option<Fragment>> = vec![None; w * h];
    fb.depth
        .par_chunks_mut(w * BAND_ROWS)
        .zip(frags.par_chunks_mut(w * BAND_ROWS))
        .zip(bins.par_iter())
        .enumerate()
        .for_each(|(band, ((depth, frag), bin))| {
            let row0 = band * BAND_ROWS;
            let rows = depth.len() / w;
            for &ti in bin {
                raster_triangle(&tris[ti as usize], row0, rows, w, depth, frag);
            }
        });

    for (id, f) in fb.instance.iter_mut().zip(&frags) {
        if let Some(f) = f {
            *id = surfaces[f.surface as usize].instance;
        }
    }

    if let Some(light) = lighting {
        fb.rgb = Some(shade(surfaces, cam, light, &frags));
    }
    fb
}

fn setup_triangles(surfaces: &[Surface<'_>], cam: &PinholeCamera) -> Vec<ScreenTri> {
    let world_to_cam = cam.pose.inverse();
    let (w, h) = (cam.width as f64, cam.height as f64);
    let mut out = Vec::new();
    for (si, s) in surfaces.iter().enumerate() {
        let to_cam = world_to_cam.compose(&s.pose);
        let verts: Vec<Point3> = s.mesh.vertices.iter().map(|v| to_cam.transform_point(v)).collect();
        for (ti, tri) in s.mesh.triangles.iter().enumerate() {
            let corners = tri.map(|i| verts[i as usize]);
            let poly = clip_near(&corners);
            if poly.len() < 3 {
                continue;
            }
            let proj: Vec<([f64; 2], f64, [f64; 3])> = poly
                .iter()
                .map(|(c, b)| ([cam.fx * c.x / c.z + cam.cx, cam.fy * c.y / c.z + cam.cy], 1.0 / c.z, *b))
                .collect();
            for k in 1..proj.len() - 1 {
                let mut v = [proj[0], proj[k], proj[k + 1]];
                let mut area = edge_fn(v[0].0, v[1].0, v[2].0);
                if area == 0.0 || !area.is_finite() {
                    continue;
                }
                if area < 0.0 {
                    v.swap(1, 2);
                    area = -area;
                }
                let min_x = v.iter().map(|q| q.0[0]).fold(f64::INFINITY, f64::min);
                let max_x = v.iter().map(|q| q.0[0]).fold(f64::NEG_INFINITY, f64::max);
                let min_y = v.iter().map(|q| q.0[1]).fold(f64::INFINITY, f64::min);
                let max_y = v.iter().map(|q| q.0[1]).fold(f64::NEG_INFINITY, f64::max);
                // pixel i is a candidate when its center i + 0.5 lies in [min, max]
                let x0 = (min_x - 0.5).ceil().max(0.0);
                let x1 = (max_x - 0.5).floor().min(w - 1.0);
                let y0 = (min_y - 0.5).ceil().max(0.0);
                let y1 = (max_y - 0.5).floor().min(h - 1.0);
                if x0 > x1 || y0 > y1 {
                    continue;
                }
                out.push(ScreenTri {
                    surface: si as u16,
                    triangle: ti as u32,
                    p: v.map(|q| q.0),
                    inv_z: v.map(|q| q.1),
                    bary: v.map(|q| q.2),
                    area,
                    x0: x0 as usize,
                    x1: x1 as usize,
                    y0: y0 as usize,
                    y1: y1 as usize,
                });
            }
        }
    }
    out
}

/// Sutherland–Hodgman clip of a camera-frame triangle against `z >= NEAR_PLANE`.
/// Each output vertex carries its barycentric coordinates in the input triangle.
fn clip_near(c: &[Point3; 3]) -> Vec<(Point3, [f64; 3])> {
    let input = [(c[0], [1.0, 0.0, 0.0]), (c[1], [0.0, 1.0, 0.0]), (c[2], [0.0, 0.0, 1.0])];
    if input.iter().all(|(p, _)| p.z >= NEAR_PLANE) {
        return input.to_vec();
    }
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let cur = input[i];
        let next = input[(i + 1) % 3];
        let cur_in = cur.0.z >= NEAR_PLANE;
        let next_in = next.0.z >= NEAR_PLANE;
        if cur_in {
            out.push(cur);
        }
        if cur_in != next_in {
            // interpolate from the lexicographically smaller endpoint so shared edges clip identically
            let (a, b) = if (cur.0.x, cur.0.y, cur.0.z) <= (next.0.x, next.0.y, next.0.z) {
                (cur, next)
            } else {
                (next, cur)
            };
            let t = (NEAR_PLANE - a.0.z) / (b.0.z - a.0.z);
            let p = a.0 + (b.0 - a.0) * t;
            let bary = [0, 1, 2].map(|k| a.1[k] + (b.1[k] - a.1[k]) * t);
            out.push((Point3::new(p.x, p.y, NEAR_PLANE), bary));
        }
    }
    out
}

/// Twice the signed area of `(a, b, p)`, antisymmetric in `(a, b)` bit for bit.
#[inline]
fn edge_fn(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    if (a[0], a[1]) <= (b[0], b[1]) {
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    } else {
        -((a[0] - b[0]) * (p[1] - b[1]) - (a[1] - b[1]) * (p[0] - b[0]))
    }
}

/// Top or left edge for a triangle with positive `edge_fn` area (y grows downward).
#[inline]
fn is_top_left(a: [f64; 2], b: [f64; 2]) -> bool {
    let dy = b[1] - a[1];
    let dx = b[0] - a[0];
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

fn raster_triangle(
    t: &ScreenTri,
    row0: usize,
    rows: usize,
    w: usize,
    depth: &mut [f64],
    frags: &mut [Option<Fragment>],
) {
    let y_start = t.y0.max(row0);
    let y_end = t.y1.min(row0 + rows - 1);
    if y_start > y_end {
        return;
    }
    let [a, b, c] = t.p;
    let tl = [is_top_left(b, c), is_top_left(c, a), is_top_left(a, b)];
    for y in y_start..=y_end {
        let py = y as f64 + 0.5;
        for x in t.x0..=t.x1 {
            let p = [x as f64 + 0.5, py];
            let e = [edge_fn(b, c, p), edge_fn(c, a, p), edge_fn(a, b, p)];
            if !(0..3).all(|k| e[k] > 0.0 || (e[k] == 0.0 && tl[k])) {
                continue;
            }
            let l = e.map(|v| v / t.area);
            let inv_z = l[0] * t.inv_z[0] + l[1] * t.inv_z[1] + l[2] * t.inv_z[2];
            if !(inv_z > 0.0) {
                continue;
            }
            let z = 1.0 / inv_z;
            let idx = (y - row0) * w + x;
            if z < depth[idx] {
                depth[idx] = z;
                let mut bary = [0.0; 3];
                for (k, lk) in l.iter().enumerate() {
                    let wk = lk * t.inv_z[k] * z;
                    for (j, bj) in bary.iter_mut().enumerate() {
                        *bj += wk * t.bary[k][j];
                    }
                }
                frags[idx] = Some(Fragment {
                    surface: t.surface,
                    triangle: t.triangle,
                    bary,
                });
            }
        }
    }
}

fn shade(surfaces: &[Surface<'_>], cam: &PinholeCamera, light: &Lighting<'_>, frags: &[Option<Fragment>]) -> RgbImage {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let eye = cam.position();
    let mut buf = vec![0u8; w * h * 3];
    buf.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let color = match &frags[y * w + x] {
                Some(f) => shade_fragment(&surfaces[f.surface as usize], f, &eye, light),
                None => {
                    let dir = cam.ray_direction_world(&Vec2::new(x as f64 + 0.5, y as f64 + 0.5));
                    sample_environment(&dir, light.environment)
                }
            };
            row[x * 3..x * 3 + 3].copy_from_slice(&to_rgb8(color));
        }
    });
    RgbImage::from_raw(cam.width, cam.height, buf).expect("buffer sized to image")
}

fn shade_fragment(s: &Surface<'_>, f: &Fragment, eye: &Point3, light: &Lighting<'_>) -> Color {
    let [a, b, c] = s.mesh.triangle(f.triangle as usize);
    let local = a.coords * f.bary[0] + b.coords * f.bary[1] + c.coords * f.bary[2];
    let local_normal = (b - a).cross(&(c - a)).try_normalize(0.0).unwrap_or_else(Vec3::z);
    let world = s.pose.transform_point(&Point3::from(local));
    let mut normal = s.pose.transform_vector(&local_normal);
    if normal.dot(&(eye - world)) < 0.0 {
        normal = -normal;
    }
    let lambert = AMBIENT + (1.0 - AMBIENT) * normal.dot(&light.light_dir).max(0.0);
    let albedo = match &s.material {
        None => [0.8; 3],
        Some(m) => match (m.mapping, &s.mesh.uvs) {
            (UvMapping::MeshOrTriplanar, Some(uvs)) => {
                let [ia, ib, ic] = s.mesh.triangles[f.triangle as usize];
                let uv = uvs[ia as usize] * f.bary[0] + uvs[ib as usize] * f.bary[1] + uvs[ic as usize] * f.bary[2];
                m.texture.lookup(uv)
            }
            (UvMapping::MeshOrTriplanar, None) => triplanar_lookup(m.texture, &local, &local_normal, m.tiles_per_meter),
            (UvMapping::PlanarXy, _) => m.texture.lookup(Vec2::new(local.x, local.y) * m.tiles_per_meter),
        },
    };
    albedo.map(|v| v * lambert)
}

/// Table as a two-triangle quad in its local frame; place it with `table.frame()`.
pub fn table_mesh(table: &TableSpec) -> Mesh {
    let (hw, hd) = (table.width / 2.0, table.depth / 2.0);
    let vertices = vec![
        Point3::new(-hw, -hd, 0.0),
        Point3::new(hw, -hd, 0.0),
        Point3::new(hw, hd, 0.0),
        Point3::new(-hw, hd, 0.0),
    ];
    Mesh::new(vertices, vec![[0, 1, 2], [0, 2, 3]], None, Default::default()).expect("valid quad")
}

/// Light direction (toward the light) fixed by the scene seed: elevation in
/// [30°, 80°], uniform azimuth.
pub fn light_direction(scene_seed: u64) -> Vec3 {
    let mut rng = seeding::rng(scene_seed, seeding::LIGHT, 0);
    let el = rng.random_range(30f64..=80.0).to_radians();
    let az = rng.random_range(0.0..std::f64::consts::TAU);
    Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

/// Textures for the shading pass of a scene render.
#[derive(Debug, Clone, Copy)]
pub struct SceneShading<'a> {
    pub object: &'a Texture,
    pub table: &'a Texture,
    pub environment: &'a Texture,
    pub object_tiles_per_meter: f64,
    pub table_tiles_per_meter: f64,
}

/// Renders the table and the object of `scene` through `cam`.
pub fn rasterize(scene: &SceneSpec, cam: &PinholeCamera, object: &Mesh, shading: Option<&SceneShading<'_>>) -> Framebuffer {
    render_scene(scene, cam, Some(object), shading)
}

/// Same as [`rasterize`] with the object removed (empty table).
pub fn render_depth_without_object(scene: &SceneSpec, cam: &PinholeCamera) -> Framebuffer {
    render_scene(scene, cam, None, None)
}

fn render_scene(
    scene: &SceneSpec,
    cam: &PinholeCamera,
    object: Option<&Mesh>,
    shading: Option<&SceneShading<'_>>,
) -> Framebuffer {
    let table = table_mesh(&scene.table);
    let mut surfaces = vec![Surface {
        mesh: &table,
        pose: scene.table.frame(),
        instance: INSTANCE_TABLE,
        material: shading.map(|s| Material {
            texture: s.table,
            tiles_per_meter: s.table_tiles_per_meter,
            mapping: UvMapping::PlanarXy,
        }),
    }];
    if let Some(mesh) = object {
        surfaces.push(Surface {
            mesh,
            pose: scene.object_pose,
            instance: INSTANCE_OBJECT,
            material: shading.map(|s| Material {
                texture: s.object,
                tiles_per_meter: s.object_tiles_per_meter,
                mapping: UvMapping::MeshOrTriplanar,
            }),
        });
    }
    let lighting = shading.map(|s| Lighting {
        light_dir: light_direction(scene.seed),
        environment: s.environment,
    });
    render_surfaces(&surfaces, cam, lighting.as_ref())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeypointState {
    Visible,
    Occluded,
    Outside,
}

/// A mesh keypoint projected into one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedKeypoint {
    pub name: String,
    /// Continuous image coordinates; `(-1, -1)` when the point is behind the camera.
    pub pixel: [f64; 2],
    pub state: KeypointState,
    /// Camera-frame depth (meters).
    pub depth: f64,
}

/// Projects the object's keypoints and classifies them against `fb`.
///
/// A keypoint inside the image is visible when its depth is at most the
/// framebuffer depth at its pixel plus `eps` and that pixel shows the object;
/// otherwise it is occluded. The second condition keeps keypoints whose pixel
/// center falls just off the silhouette out of the visible set.
pub fn classify_keypoints(
    scene: &SceneSpec,
    cam: &PinholeCamera,
    fb: &Framebuffer,
    object: &Mesh,
    eps: f64,
) -> Vec<ProjectedKeypoint> {
    let to_cam = cam.pose.inverse().compose(&scene.object_pose);
    object
        .keypoints
        .iter()
        .map(|(name, local)| {
            let c = to_cam.transform_point(local);
            let Ok(uv) = cam.project_point(&c) else {
                return ProjectedKeypoint {
                    name: name.clone(),
                    pixel: [-1.0, -1.0],
                    state: KeypointState::Outside,
                    depth: c.z,
                };
            };
            let state = if !cam.contains(&uv) {
                KeypointState::Outside
            } else {
                let (x, y) = (uv.x.floor() as u32, uv.y.floor() as u32);
                let visible = c.z <= fb.depth_at(x, y) + eps && fb.instance_at(x, y) == INSTANCE_OBJECT;
                if visible {
                    KeypointState::Visible
                } else {
                    KeypointState::Occluded
                }
            };
            ProjectedKeypoint {
                name: name.clone(),
                pixel: [uv.x, uv.y],
                state,
                depth: c.z,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::look_at;
    use std::collections::BTreeMap;

    fn quad(half: f64, z: f64) -> Mesh {
        let v = vec![
            Point3::new(-half, -half, z),
            Point3::new(half, -half, z),
            Point3::new(half, half, z),
            Point3::new(-half, half, z),
        ];
        Mesh::new(v, vec![[0, 1, 2], [0, 2, 3]], None, BTreeMap::new()).unwrap()
    }

    fn cam(size: u32) -> PinholeCamera {
        PinholeCamera::from_fov(size, size, 60.0, RigidTransform::identity()).unwrap()
    }

    fn surf(mesh: &Mesh, instance: u8) -> Surface<'_> {
        Surface { mesh, pose: RigidTransform::identity(), instance, material: None }
    }

    #[test]
    fn full_frustum_quad() {
        let q = quad(10.0, 2.0);
        let fb = render_surfaces(&[surf(&q, 1)], &cam(64), None);
        assert!(fb.depth.iter().all(|&d| (d - 2.0).abs() < 1e-12));
        assert!(fb.instance.iter().all(|&i| i == 1));
        fb.check_invariants().unwrap();
    }

    #[test]
    fn nearer_quad_wins() {
        let far = quad(10.0, 2.0);
        let near = quad(0.3, 1.0);
        let fb = render_surfaces(&[surf(&far, 1), surf(&near, 2)], &cam(64), None);
        let c = fb.index(32, 32);
        assert_eq!(fb.depth[c], 1.0);
        assert_eq!(fb.instance[c], 2);
        assert_eq!(fb.depth_at(0, 0), 2.0);
        // order independence
        let fb2 = render_surfaces(&[surf(&near, 2), surf(&far, 1)], &cam(64), None);
        assert_eq!(fb.depth, fb2.depth);
        assert_eq!(fb.instance, fb2.instance);
    }

    #[test]
    fn shared_edges_cover_each_pixel_once() {
        // A fan of thin triangles around a point; every pixel of the disk must be covered exactly once.
        let n = 37;
        let mut v = vec![Point3::new(0.013, -0.007, 1.0)];
        for i in 0..n {
            let a = i as f64 / n as f64 * std::f64::consts::TAU;
            v.push(Point3::new(0.4 * a.cos(), 0.4 * a.sin(), 1.0));
        }
        let tris: Vec<[u32; 3]> = (0..n).map(|i| [0, 1 + i, 1 + (i + 1) % n]).collect();
        let cam = cam(96);
        let mut counts = vec![0u32; 96 * 96];
        for t in &tris {
            let m = Mesh::new(v.clone(), vec![*t], None, BTreeMap::new()).unwrap();
            let fb = render_surfaces(&[surf(&m, 1)], &cam, None);
            for (c, &id) in counts.iter_mut().zip(&fb.instance) {
                *c += (id == 1) as u32;
            }
        }
        let whole = Mesh::new(v, tris, None, BTreeMap::new()).unwrap();
        let fb = render_surfaces(&[surf(&whole, 1)], &cam, None);
        for (i, &c) in counts.iter().enumerate() {
            assert!(c <= 1, "pixel {i} covered {c} times");
            assert_eq!(c == 1, fb.instance[i] == 1);
        }
    }

    #[test]
    fn near_plane_clipping_keeps_visible_part() {
        // a floor plane that extends behind the camera
        let floor = Mesh::new(
            vec![
                Point3::new(-5.0, -5.0, 0.0),
                Point3::new(5.0, -5.0, 0.0),
                Point3::new(5.0, 5.0, 0.0),
                Point3::new(-5.0, 5.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            None,
            BTreeMap::new(),
        )
        .unwrap();
        let pose = look_at(&Point3::new(0.0, -0.5, 0.3), &Point3::new(0.0, 1.0, 0.0), &Vec3::z()).unwrap();
        let cam = PinholeCamera::from_fov(64, 64, 90.0, pose).unwrap();
        let fb = render_surfaces(&[surf(&floor, 1)], &cam, None);
        fb.check_invariants().unwrap();
        // bottom row sees the floor, top row sees the sky
        assert_eq!(fb.instance_at(32, 63), 1);
        assert_eq!(fb.instance_at(32, 0), 0);
    }

    #[test]
    fn depth_png_encoding() {
        let q = quad(10.0, 2.0);
        let fb = render_surfaces(&[surf(&q, 1)], &cam(8), None);
        assert!(fb.depth_image_u16().pixels().all(|p| p.0[0] == 20000));
        assert!(Framebuffer::empty(4, 4).depth_image_u16().pixels().all(|p| p.0[0] == 0));
    }

    #[test]
    fn crop_copies_channels() {
        let near = quad(0.3, 1.0);
        let fb = render_surfaces(&[surf(&near, 2)], &cam(64), None);
        let r = PixelRect { x: 20, y: 25, w: 10, h: 7 };
        let c = fb.crop(r);
        assert_eq!(c.depth_at(3, 2), fb.depth_at(23, 27));
        assert_eq!(c.instance_at(9, 6), fb.instance_at(29, 31));
    }

    #[test]
    fn light_direction_is_fixed_per_seed() {
        let a = light_direction(5);
        assert_eq!(a, light_direction(5));
        assert!((a.norm() - 1.0).abs() < 1e-12 && a.z > 0.4);
    }
}
