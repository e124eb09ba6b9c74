//! Procedural closed meshes used for built-in assets and tests.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::{Mesh, Point3};

/// Axis-aligned box centered on the origin.
pub fn cuboid(sx: f64, sy: f64, sz: f64) -> Mesh {
    let (hx, hy, hz) = (sx / 2.0, sy / 2.0, sz / 2.0);
    let vertices = vec![
        Point3::new(-hx, -hy, -hz),
        Point3::new(hx, -hy, -hz),
        Point3::new(hx, hy, -hz),
        Point3::new(-hx, hy, -hz),
        Point3::new(-hx, -hy, hz),
        Point3::new(hx, -hy, hz),
        Point3::new(hx, hy, hz),
        Point3::new(-hx, hy, hz),
    ];
    let quads = [
        [0, 3, 2, 1], // bottom
        [4, 5, 6, 7], // top
        [0, 1, 5, 4],
        [1, 2, 6, 5],
        [2, 3, 7, 6],
        [3, 0, 4, 7],
    ];
    let triangles = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    Mesh::new(vertices, triangles, None, BTreeMap::new()).expect("valid cuboid")
}

/// Closed cylinder along +z from `z = 0` to `z = height`.
///
/// `rings` intermediate rings are inserted so that side points at fractional
/// heights exist as vertices. Cap centers are vertices.
pub fn cylinder(radius: f64, height: f64, segments: u32, rings: u32) -> Mesh {
    let segments = segments.max(3);
    let levels = rings + 2;
    let mut vertices = Vec::new();
    for l in 0..levels {
        let z = height * l as f64 / (levels - 1) as f64;
        for s in 0..segments {
            let a = 2.0 * PI * s as f64 / segments as f64;
            vertices.push(Point3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let bottom_center = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, 0.0));
    let top_center = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, height));

    let idx = |l: u32, s: u32| l * segments + (s % segments);
    let mut triangles = Vec::new();
    for l in 0..levels - 1 {
        for s in 0..segments {
            let (a, b, c, d) = (idx(l, s), idx(l, s + 1), idx(l + 1, s + 1), idx(l + 1, s));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let top = levels - 1;
    for s in 0..segments {
        triangles.push([bottom_center, idx(0, s + 1), idx(0, s)]);
        triangles.push([top_center, idx(top, s), idx(top, s + 1)]);
    }
    Mesh::new(vertices, triangles, None, BTreeMap::new()).expect("valid cylinder")
}

/// UV-sphere scaled to semi-axes `(rx, ry, rz)`, centered on the origin.
pub fn ellipsoid(rx: f64, ry: f64, rz: f64, slices: u32, stacks: u32) -> Mesh {
    let slices = slices.max(3);
    let stacks = stacks.max(2);
    let mut vertices = vec![Point3::new(0.0, 0.0, rz)];
    for i in 1..stacks {
        let theta = PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let phi = 2.0 * PI * j as f64 / slices as f64;
            vertices.push(Point3::new(
                rx * theta.sin() * phi.cos(),
                ry * theta.sin() * phi.sin(),
                rz * theta.cos(),
            ));
        }
    }
    let south = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, -rz));

    let ring = |i: u32, j: u32| 1 + (i - 1) * slices + (j % slices);
    let mut triangles = Vec::new();
    for j in 0..slices {
        triangles.push([0, ring(1, j), ring(1, j + 1)]);
        triangles.push([south, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            let (a, b, c, d) = (ring(i, j), ring(i + 1, j), ring(i + 1, j + 1), ring(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Mesh::new(vertices, triangles, None, BTreeMap::new()).expect("valid ellipsoid")
}

/// Vertex of `ellipsoid(.., slices, stacks)` at stack `i` (1..stacks) and slice `j`.
pub fn ellipsoid_vertex(rx: f64, ry: f64, rz: f64, slices: u32, stacks: u32, i: u32, j: u32) -> Point3 {
    let theta = PI * i as f64 / stacks as f64;
    let phi = 2.0 * PI * j as f64 / slices as f64;
    Point3::new(
        rx * theta.sin() * phi.cos(),
        ry * theta.sin() * phi.sin(),
        rz * theta.cos(),
    )
}
