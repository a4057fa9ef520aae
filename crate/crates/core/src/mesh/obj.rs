//! ASCII Wavefront OBJ reading and writing (`v`, `vt`, `f` records).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use nalgebra::{Vector2, Vector3};

use super::Mesh;
use crate::error::{Error, Result};

/// Parses an OBJ stream.
///
/// Faces with more than three corners are fan-triangulated. A vertex referenced
/// with several different texture coordinates is duplicated so every vertex
/// carries exactly one UV. Normals (`vn`) and all other records are ignored.
pub fn load_obj<R: Read>(stream: R) -> Result<Mesh> {
    let reader = BufReader::new(stream);
    let mut positions: Vec<Vector3<f64>> = Vec::new();
    let mut texcoords: Vec<Vector2<f64>> = Vec::new();
    // Each corner: (line, position index, texcoord index)
    let mut faces: Vec<(usize, Vec<(usize, Option<usize>)>)> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        match tag {
            "v" => {
                let c = parse_floats(parts, 3, lineno)?;
                positions.push(Vector3::new(c[0], c[1], c[2]));
            }
            "vt" => {
                let c = parse_floats(parts, 2, lineno)?;
                texcoords.push(Vector2::new(c[0], c[1]));
            }
            "f" => {
                let mut corners = Vec::new();
                for token in parts {
                    corners.push(parse_corner(token, positions.len(), texcoords.len(), lineno)?);
                }
                if corners.len() < 3 {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "face with fewer than 3 vertices".into(),
                    });
                }
                faces.push((lineno, corners));
            }
            _ => {}
        }
    }

    for (line, corners) in &faces {
        for (v, vt) in corners {
            if *v >= positions.len() {
                return Err(Error::validation(format!(
                    "line {line}: vertex index {} out of range ({} vertices)",
                    v + 1,
                    positions.len()
                )));
            }
            if let Some(t) = vt {
                if *t >= texcoords.len() {
                    return Err(Error::validation(format!(
                        "line {line}: texture index {} out of range ({} texcoords)",
                        t + 1,
                        texcoords.len()
                    )));
                }
            }
        }
    }

    let has_uvs = faces
        .iter()
        .any(|(_, c)| c.iter().any(|(_, vt)| vt.is_some()))
        || (faces.is_empty() && !texcoords.is_empty());
    if has_uvs
        && faces
            .iter()
            .any(|(_, c)| c.iter().any(|(_, vt)| vt.is_none()))
    {
        return Err(Error::validation(
            "faces mix corners with and without texture coordinates",
        ));
    }

    let mut vertices = positions.clone();
    let mut uvs: Vec<Option<Vector2<f64>>> = vec![None; positions.len()];
    let mut first_vt: Vec<Option<usize>> = vec![None; positions.len()];
    let mut splits: HashMap<(usize, usize), usize> = HashMap::new();
    let mut triangles = Vec::new();

    for (_, corners) in &faces {
        let mut resolve = |(v, vt): (usize, Option<usize>)| -> usize {
            let Some(t) = vt else { return v };
            match first_vt[v] {
                None => {
                    first_vt[v] = Some(t);
                    uvs[v] = Some(texcoords[t]);
                    v
                }
                Some(existing) if existing == t => v,
                Some(_) => *splits.entry((v, t)).or_insert_with(|| {
                    vertices.push(positions[v]);
                    uvs.push(Some(texcoords[t]));
                    vertices.len() - 1
                }),
            }
        };
        let idx: Vec<usize> = corners.iter().map(|&c| resolve(c)).collect();
        for k in 1..idx.len() - 1 {
            triangles.push([idx[0], idx[k], idx[k + 1]]);
        }
    }

    let uvs = if has_uvs {
        let same_count = texcoords.len() == positions.len();
        Some(
            uvs.into_iter()
                .enumerate()
                .map(|(i, uv)| match uv {
                    Some(uv) => uv,
                    // Unreferenced vertex: use the matching texcoord when the file pairs them 1:1.
                    None if same_count => texcoords[i],
                    None => Vector2::zeros(),
                })
                .collect(),
        )
    } else {
        None
    };

    Mesh::new(vertices, triangles, uvs)
}

fn parse_floats<'a>(
    parts: impl Iterator<Item = &'a str>,
    count: usize,
    line: usize,
) -> Result<Vec<f64>> {
    let values: Vec<f64> = parts
        .take(count)
        .map(|s| {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("invalid number {s:?}"),
            })
        })
        .collect::<Result<_>>()?;
    if values.len() < count {
        return Err(Error::Parse {
            line,
            message: format!("expected {count} coordinates, found {}", values.len()),
        });
    }
    Ok(values)
}

fn parse_index(s: &str, len: usize, line: usize) -> Result<usize> {
    let raw: i64 = s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid index {s:?}"),
    })?;
    match raw {
        0 => Err(Error::Parse {
            line,
            message: "OBJ indices are 1-based; found 0".into(),
        }),
        r if r > 0 => Ok((r - 1) as usize),
        // Negative indices count back from the most recent element.
        r => {
            let back = (-r) as usize;
            if back > len {
                Err(Error::validation(format!(
                    "line {line}: relative index {r} out of range"
                )))
            } else {
                Ok(len - back)
            }
        }
    }
}

fn parse_corner(
    token: &str,
    n_pos: usize,
    n_tex: usize,
    line: usize,
) -> Result<(usize, Option<usize>)> {
    let mut fields = token.split('/');
    let v = parse_index(fields.next().unwrap_or(""), n_pos, line)?;
    let vt = match fields.next() {
        Some("") | None => None,
        Some(t) => Some(parse_index(t, n_tex, line)?),
    };
    Ok((v, vt))
}

/// Serializes a mesh as OBJ text. Floats use the shortest round-tripping form.
pub fn write_obj(mesh: &Mesh) -> String {
    let mut out = String::with_capacity(mesh.vertices.len() * 64);
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    if let Some(uvs) = &mesh.uvs {
        for uv in uvs {
            let _ = writeln!(out, "vt {} {}", uv.x, uv.y);
        }
    }
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| i + 1);
        if mesh.uvs.is_some() {
            let _ = writeln!(out, "f {a}/{a} {b}/{b} {c}/{c}");
        } else {
            let _ = writeln!(out, "f {a} {b} {c}");
        }
    }
    out
}

pub fn load_obj_file(path: &Path) -> Result<Mesh> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_obj(file).map_err(|e| match e {
        Error::Parse { line, message } => {
            Error::format(path, format!("line {line}: {message}"))
        }
        Error::Validation(m) => Error::format(path, m),
        other => other,
    })
}

pub fn write_obj_file(mesh: &Mesh, path: &Path) -> Result<()> {
    std::fs::write(path, write_obj(mesh)).map_err(|e| Error::io(path, e))
}
