//! Mask ↔ polygon conversion.
//!
//! Contours follow pixel edges (vertices on integer pixel corners), so an
//! unsimplified contour covers exactly the mask's pixel centers. Diagonally
//! touching pixels are treated as separate regions. Each hole is joined to
//! its enclosing outline by a zero-width bridge, giving one polygon per
//! connected region that reproduces the hole under the even-odd rule.

use crate::mask::BinaryMask;

/// Default simplification tolerance in pixels.
pub const DEFAULT_TOLERANCE: f64 = 0.5;

type Pt = [f64; 2];

/// Closed boundary loops of `mask` on the pixel-corner grid. Outer loops have
/// positive [`signed_area`], holes negative.
pub fn trace_loops(mask: &BinaryMask) -> Vec<Vec<[i64; 2]>> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let vid = |x: i64, y: i64| (y * (w + 1) + x) as usize;
    // up to two outgoing boundary edges per corner, stored as direction indices
    const DIRS: [[i64; 2]; 4] = [[1, 0], [0, 1], [-1, 0], [0, -1]];
    let mut out: Vec<[u8; 2]> = vec![[u8::MAX; 2]; ((w + 1) * (h + 1)) as usize];
    let mut push = |x: i64, y: i64, d: u8| {
        let slot = &mut out[vid(x, y)];
        if slot[0] == u8::MAX {
            slot[0] = d;
        } else {
            slot[1] = d;
        }
    };
    let mut starts = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as u32, y as u32) {
                continue;
            }
            // clockwise on screen (y down); the region is on the right of travel
            if !mask.get_signed(x, y - 1) {
                push(x, y, 0);
                starts.push((x, y, 0u8));
            }
            if !mask.get_signed(x + 1, y) {
                push(x + 1, y, 1);
            }
            if !mask.get_signed(x, y + 1) {
                push(x + 1, y + 1, 2);
            }
            if !mask.get_signed(x - 1, y) {
                push(x, y + 1, 3);
            }
        }
    }
    let mut used = vec![[false; 2]; out.len()];
    let mut loops = Vec::new();
    // every loop contains at least one rightward (top) edge
    for (sx, sy, _) in starts {
        let s = vid(sx, sy);
        let slot = if out[s][0] == 0 { 0 } else { 1 };
        if used[s][slot] {
            continue;
        }
        let mut pts = Vec::new();
        let (mut x, mut y, mut d) = (sx, sy, 0u8);
        used[s][slot] = true;
        loop {
            pts.push([x, y]);
            x += DIRS[d as usize][0];
            y += DIRS[d as usize][1];
            let v = vid(x, y);
            let cand = out[v];
            let k = if cand[1] == u8::MAX {
                0
            } else {
                // saddle corner: turn right to stay with the current pixel
                let right = (d + 1) % 4;
                if cand[0] == right {
                    0
                } else {
                    1
                }
            };
            if used[v][k] {
                break;
            }
            used[v][k] = true;
            d = cand[k];
        }
        loops.push(pts);
    }
    loops
}

pub fn signed_area(pts: &[[i64; 2]]) -> i64 {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<i64>()
        / 2
}

fn point_in_loop(p: Pt, pts: &[[i64; 2]]) -> bool {
    let mut inside = false;
    let n = pts.len();
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        let (ay, by) = (a[1] as f64, b[1] as f64);
        if (ay > p[1]) != (by > p[1]) {
            let x = a[0] as f64 + (p[1] - ay) / (by - ay) * (b[0] - a[0]) as f64;
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn drop_collinear(pts: &[[i64; 2]]) -> Vec<Pt> {
    let n = pts.len();
    (0..n)
        .filter(|&i| {
            let (a, b, c) = (pts[(i + n - 1) % n], pts[i], pts[(i + 1) % n]);
            (b[0] - a[0]) * (c[1] - b[1]) != (b[1] - a[1]) * (c[0] - b[0])
        })
        .map(|i| [pts[i][0] as f64, pts[i][1] as f64])
        .collect()
}

fn seg_dist(p: Pt, a: Pt, b: Pt) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    ((p[0] - a[0] - t * dx).powi(2) + (p[1] - a[1] - t * dy).powi(2)).sqrt()
}

fn douglas_peucker(pts: &[Pt], tol: f64, keep: &mut [bool]) {
    let mut stack = vec![(0, pts.len() - 1)];
    while let Some((i, j)) = stack.pop() {
        if j <= i + 1 {
            continue;
        }
        let (mut best, mut at) = (-1.0, i);
        for k in i + 1..j {
            let d = seg_dist(pts[k], pts[i], pts[j]);
            if d > best {
                best = d;
                at = k;
            }
        }
        if best > tol {
            keep[at] = true;
            stack.push((i, at));
            stack.push((at, j));
        }
    }
}

/// Douglas–Peucker on a closed loop, anchored at vertex 0 and the vertex farthest from it.
pub fn simplify_loop(pts: &[Pt], tol: f64) -> Vec<Pt> {
    if pts.len() <= 4 || tol <= 0.0 {
        return pts.to_vec();
    }
    let far = (1..pts.len())
        .max_by(|&a, &b| {
            let da = (pts[a][0] - pts[0][0]).hypot(pts[a][1] - pts[0][1]);
            let db = (pts[b][0] - pts[0][0]).hypot(pts[b][1] - pts[0][1]);
            da.total_cmp(&db)
        })
        .unwrap_or(0);
    let mut closed = pts.to_vec();
    closed.push(pts[0]);
    let mut keep = vec![false; closed.len()];
    keep[0] = true;
    keep[far] = true;
    douglas_peucker(&closed[..=far], tol, &mut keep[..=far]);
    douglas_peucker(&closed[far..], tol, &mut keep[far..]);
    let out: Vec<Pt> = (0..pts.len()).filter(|&i| keep[i]).map(|i| pts[i]).collect();
    if out.len() < 3 {
        pts.to_vec()
    } else {
        out
    }
}

/// Polygons (flattened `[x0, y0, x1, y1, ...]`) whose union covers `mask`.
pub fn mask_to_polygons(mask: &BinaryMask, tolerance: f64) -> Vec<Vec<f64>> {
    let loops = trace_loops(mask);
    let (outers, holes): (Vec<_>, Vec<_>) = loops.into_iter().partition(|l| signed_area(l) > 0);
    let mut joined: Vec<Vec<Vec<Pt>>> = outers
        .iter()
        .map(|l| vec![simplify_loop(&drop_collinear(l), tolerance)])
        .collect();
    for hole in &holes {
        // a pixel center just inside the hole: left of the first edge
        let (a, b) = (hole[0], hole[1]);
        let (dx, dy) = ((b[0] - a[0]) as f64, (b[1] - a[1]) as f64);
        let probe = [a[0] as f64 + (dx + dy) / 2.0, a[1] as f64 + (dy - dx) / 2.0];
        let owner = outers
            .iter()
            .enumerate()
            .filter(|(_, o)| point_in_loop(probe, o))
            .min_by_key(|(_, o)| signed_area(o))
            .map(|(i, _)| i);
        if let Some(i) = owner {
            joined[i].push(simplify_loop(&drop_collinear(hole), tolerance));
        }
    }
    joined
        .into_iter()
        .map(|parts| {
            let anchor = parts[0][0];
            let mut flat: Vec<f64> = parts[0].iter().flatten().copied().collect();
            for hole in &parts[1..] {
                // out along the bridge, around the hole, and back to the anchor
                flat.extend(anchor);
                flat.extend(hole.iter().flatten());
                flat.extend(hole[0]);
            }
            flat
        })
        .collect()
}

/// Union of the even-odd interiors of `polygons`, sampled at pixel centers.
pub fn rasterize_polygons(polygons: &[Vec<f64>], width: u32, height: u32) -> BinaryMask {
    let mut mask = BinaryMask::new(width, height);
    let mut xs = Vec::new();
    for poly in polygons {
        let n = poly.len() / 2;
        if n < 3 {
            continue;
        }
        for y in 0..height {
            let yc = y as f64 + 0.5;
            xs.clear();
            for i in 0..n {
                let j = (i + 1) % n;
                let (ax, ay, bx, by) = (poly[2 * i], poly[2 * i + 1], poly[2 * j], poly[2 * j + 1]);
                if (ay > yc) != (by > yc) {
                    xs.push(ax + (yc - ay) / (by - ay) * (bx - ax));
                }
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks_exact(2) {
                // pixel centers in [x0, x1)
                let x0 = (pair[0] - 0.5).ceil().max(0.0) as i64;
                let x1 = (pair[1] - 0.5).ceil().min(width as f64) as i64;
                for x in x0..x1 {
                    mask.set(x as u32, y, true);
                }
            }
        }
    }
    mask
}
