//! Wavefront OBJ reader with a JSON keypoint sidecar.
//!
//! Only `v`, `vt` and `f` records are interpreted; everything else (normals,
//! groups, materials) is skipped. Polygons are fan-triangulated from their first
//! corner. Texture `v` is flipped so that `uv.y = 0` is the top image row.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use super::{GeometryError, Mesh, Point3, Vec2};

/// `<dir>/<stem>.keypoints.json` for `<dir>/<stem>.obj`.
pub fn keypoint_sidecar_path(obj_path: &Path) -> PathBuf {
    let stem = obj_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    obj_path.with_file_name(format!("{stem}.keypoints.json"))
}

/// Loads an OBJ and its keypoint sidecar. A missing sidecar only logs a warning.
pub fn load_mesh(path: &Path) -> Result<Mesh, GeometryError> {
    let text = fs::read_to_string(path)?;
    let mut mesh = parse_obj(&text, path)?;
    let sidecar = keypoint_sidecar_path(path);
    match fs::read_to_string(&sidecar) {
        Ok(json) => {
            let raw: BTreeMap<String, [f64; 3]> =
                serde_json::from_str(&json).map_err(|source| GeometryError::KeypointFile {
                    path: sidecar.clone(),
                    source,
                })?;
            mesh.keypoints = raw
                .into_iter()
                .map(|(k, [x, y, z])| (k, Point3::new(x, y, z)))
                .collect();
            mesh.validate()?;
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            log::warn!("no keypoint file for {} (expected {})", path.display(), sidecar.display());
        }
        Err(e) => return Err(e.into()),
    }
    Ok(mesh)
}

/// Parses OBJ text. `origin` is only used for error messages.
pub fn parse_obj(text: &str, origin: &Path) -> Result<Mesh, GeometryError> {
    let err = |line: usize, message: String| GeometryError::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };

    let mut positions: Vec<Point3> = Vec::new();
    let mut texcoords: Vec<Vec2> = Vec::new();
    // (position index, texcoord index) per face corner
    let mut faces: Vec<(usize, Vec<(usize, Option<usize>)>)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        match tag {
            "v" => {
                let xyz = parse_floats(tokens, 3).map_err(|m| err(line_no, m))?;
                positions.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            }
            "vt" => {
                let uv = parse_floats(tokens, 2).map_err(|m| err(line_no, m))?;
                texcoords.push(Vec2::new(uv[0], 1.0 - uv[1]));
            }
            "f" => {
                let mut corners = Vec::new();
                for tok in tokens {
                    let mut parts = tok.split('/');
                    let v = parts.next().unwrap_or("");
                    let vt = parts.next().filter(|s| !s.is_empty());
                    let vi = resolve_index(v, positions.len())
                        .map_err(|m| err(line_no, format!("vertex {m}")))?;
                    let ti = vt
                        .map(|t| resolve_index(t, texcoords.len()))
                        .transpose()
                        .map_err(|m| err(line_no, format!("texcoord {m}")))?;
                    corners.push((vi, ti));
                }
                if corners.len() < 3 {
                    return Err(err(line_no, format!("face with {} corners", corners.len())));
                }
                faces.push((line_no, corners));
            }
            _ => {}
        }
    }

    if faces.is_empty() {
        return Err(err(text.lines().count().max(1), "no faces".into()));
    }

    let uses_texcoords = faces.iter().flat_map(|(_, c)| c).any(|(_, t)| t.is_some());
    let (vertices, uvs, corner_index): (Vec<Point3>, Option<Vec<Vec2>>, Vec<Vec<u32>>) =
        if uses_texcoords {
            // Split vertices along texture seams: one output vertex per (v, vt) pair.
            let mut map: HashMap<(usize, Option<usize>), u32> = HashMap::new();
            let mut verts = Vec::new();
            let mut uvs = Vec::new();
            let mut idx = Vec::with_capacity(faces.len());
            for (_, corners) in &faces {
                let mut face = Vec::with_capacity(corners.len());
                for &key in corners {
                    let id = *map.entry(key).or_insert_with(|| {
                        verts.push(positions[key.0]);
                        uvs.push(key.1.map(|t| texcoords[t]).unwrap_or_else(Vec2::zeros));
                        (verts.len() - 1) as u32
                    });
                    face.push(id);
                }
                idx.push(face);
            }
            (verts, Some(uvs), idx)
        } else {
            let idx = faces
                .iter()
                .map(|(_, c)| c.iter().map(|&(v, _)| v as u32).collect())
                .collect();
            (positions, None, idx)
        };

    let mut triangles = Vec::new();
    for face in &corner_index {
        for k in 1..face.len() - 1 {
            triangles.push([face[0], face[k], face[k + 1]]);
        }
    }

    Mesh::new(vertices, triangles, uvs, BTreeMap::new())
}

fn parse_floats<'a>(tokens: impl Iterator<Item = &'a str>, n: usize) -> Result<Vec<f64>, String> {
    let vals: Vec<f64> = tokens
        .take(n)
        .map(|t| t.parse::<f64>().map_err(|e| format!("bad number {t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if vals.len() < n {
        return Err(format!("expected {n} coordinates, found {}", vals.len()));
    }
    Ok(vals)
}

/// 1-based (or negative, relative) OBJ index to a 0-based index.
fn resolve_index(tok: &str, count: usize) -> Result<usize, String> {
    let i: i64 = tok.parse().map_err(|_| format!("index {tok:?} is not an integer"))?;
    let resolved = if i > 0 {
        i - 1
    } else if i < 0 {
        count as i64 + i
    } else {
        return Err("index 0 is invalid".into());
    };
    if resolved < 0 || resolved as usize >= count {
        return Err(format!("index {i} out of range ({count} defined)"));
    }
    Ok(resolved as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Mesh, GeometryError> {
        parse_obj(s, Path::new("test.obj"))
    }

    #[test]
    fn single_triangle() {
        let m = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!(m.vertices.len(), 3);
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
        assert!(m.uvs.is_none());
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let m = parse("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn out_of_range_index_reports_line() {
        let e = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\n\nf 1 2 7\n").unwrap_err();
        match e {
            GeometryError::Parse { line, .. } => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_indices_and_texcoords() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nvn 0 0 1\nf -3/-3/1 -2/-2/1 -1/-1/1\n";
        let m = parse(src).unwrap();
        let uvs = m.uvs.unwrap();
        assert_eq!(uvs[0], Vec2::new(0.0, 1.0));
        assert_eq!(uvs[2], Vec2::new(0.0, 0.0));
    }

    #[test]
    fn seam_vertices_are_split() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nvt 0 0\nvt 1 1\nf 1/1 2/1 3/1\nf 2/2 4/2 3/2\n";
        let m = parse(src).unwrap();
        assert_eq!(m.vertices.len(), 6);
        assert_eq!(m.triangles.len(), 2);
    }

    #[test]
    fn sidecar_keypoints_and_missing_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let obj = dir.path().join("mug.obj");
        fs::write(&obj, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let m = load_mesh(&obj).unwrap();
        assert!(m.keypoints.is_empty());
        fs::write(
            keypoint_sidecar_path(&obj),
            r#"{"handle": [0.5, 0.0, 0.0], "bottom": [0, 0, 0]}"#,
        )
        .unwrap();
        let m = load_mesh(&obj).unwrap();
        assert_eq!(m.keypoints["handle"], Point3::new(0.5, 0.0, 0.0));
        assert_eq!(m.keypoints.len(), 2);
    }
}
