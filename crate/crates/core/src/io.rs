//! Point cloud and transform file I/O.
//!
//! Supported formats:
//! - XYZ text: one point per line, 3 or 6 whitespace-separated decimal
//!   fields (`x y z [nx ny nz]`); `#` comment lines and blank lines ignored.
//!   Field count must be consistent across the file.
//! - ASCII PLY subset: `element vertex N` with float properties x, y, z and
//!   optionally nx, ny, nz; any other scalar vertex properties are ignored.
//! - Transform file: 4x4 row-major homogeneous matrix, one row per line.
//!
//! Writers emit shortest-round-trip decimal floats, so save/load cycles are
//! exact and reruns are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Matrix4;

use crate::cloud::{PointCloud, Vec3};
use crate::error::io_err;
use crate::transform::RigidTransform;
use crate::{Error, Result};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Load a cloud from XYZ or ASCII PLY, sniffing the format from the `.ply`
/// extension or a leading `ply` magic line.
pub fn load_cloud(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let is_ply = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ply"))
        || text.lines().next().map(str::trim) == Some("ply");
    if is_ply {
        parse_ply(&text, path)
    } else {
        parse_xyz(&text, path)
    }
}

pub fn load_xyz(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_xyz(&text, path)
}

fn parse_field(tok: &str, path: &Path, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("non-numeric field '{tok}'")))
}

/// Build normals from parsed components, normalizing anything that is not
/// already unit length. Zero-length normals are a data error.
fn finish_normals(raw: Vec<(Vec3, usize)>, path: &Path) -> Result<Vec<Vec3>> {
    let mut out = Vec::with_capacity(raw.len());
    for (n, line) in raw {
        let norm = n.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(parse_err(path, line, "zero-length normal"));
        }
        out.push(if (norm - 1.0).abs() <= crate::cloud::NORMAL_TOL {
            n
        } else {
            n / norm
        });
    }
    Ok(out)
}

pub fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut normals: Vec<(Vec3, usize)> = Vec::new();
    let mut arity: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 6 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 3 or 6 fields, found {}", fields.len()),
            ));
        }
        match arity {
            None => arity = Some(fields.len()),
            Some(a) if a != fields.len() => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("inconsistent field count: {} after {a}", fields.len()),
                ));
            }
            _ => {}
        }
        let mut vals = [0.0f64; 6];
        for (v, tok) in vals.iter_mut().zip(&fields) {
            *v = parse_field(tok, path, line_no)?;
        }
        if !vals[..fields.len()].iter().all(|v| v.is_finite()) {
            return Err(parse_err(path, line_no, "non-finite coordinate"));
        }
        points.push(Vec3::new(vals[0], vals[1], vals[2]));
        if fields.len() == 6 {
            normals.push((Vec3::new(vals[3], vals[4], vals[5]), line_no));
        }
    }
    let cloud = PointCloud::from_points(points)?;
    if normals.is_empty() {
        Ok(cloud)
    } else {
        cloud.with_normals(finish_normals(normals, path)?)
    }
}

pub fn save_xyz(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut out = String::new();
    match cloud.normals() {
        Some(normals) => {
            for (p, n) in cloud.points().iter().zip(normals) {
                writeln!(out, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z)
                    .expect("string write");
            }
        }
        None => {
            for p in cloud.points() {
                writeln!(out, "{} {} {}", p.x, p.y, p.z).expect("string write");
            }
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn parse_ply(text: &str, path: &Path) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    if first.trim() != "ply" {
        return Err(parse_err(path, 1, "missing 'ply' magic line"));
    }

    let mut vertex_count: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex_element = false;
    let mut header_end = 0usize;
    for (idx, raw) in lines.by_ref() {
        let line_no = idx + 1;
        let line = raw.trim();
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("format") => {
                if toks.next() != Some("ascii") {
                    return Err(parse_err(path, line_no, "only ascii format supported"));
                }
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = toks.next().unwrap_or("");
                in_vertex_element = name == "vertex";
                if in_vertex_element {
                    let n = toks
                        .next()
                        .and_then(|t| t.parse::<usize>().ok())
                        .ok_or_else(|| parse_err(path, line_no, "bad vertex count"))?;
                    vertex_count = Some(n);
                }
            }
            Some("property") => {
                if in_vertex_element {
                    let toks: Vec<&str> = toks.collect();
                    if toks.first() == Some(&"list") {
                        return Err(parse_err(
                            path,
                            line_no,
                            "list properties not supported on vertex element",
                        ));
                    }
                    let name = toks
                        .last()
                        .ok_or_else(|| parse_err(path, line_no, "property without a name"))?;
                    props.push((*name).to_string());
                }
            }
            Some("end_header") => {
                header_end = line_no;
                break;
            }
            Some(other) => {
                return Err(parse_err(path, line_no, format!("unknown header line '{other}'")));
            }
        }
    }
    if header_end == 0 {
        return Err(parse_err(path, 1, "missing end_header"));
    }
    let vertex_count =
        vertex_count.ok_or_else(|| parse_err(path, header_end, "no 'element vertex' in header"))?;

    let pos = |name: &str| props.iter().position(|p| p == name);
    let (xi, yi, zi) = match (pos("x"), pos("y"), pos("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(parse_err(path, header_end, "vertex element lacks x/y/z")),
    };
    let normal_idx = match (pos("nx"), pos("ny"), pos("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };

    let mut points = Vec::with_capacity(vertex_count);
    let mut normals: Vec<(Vec3, usize)> = Vec::new();
    for (idx, raw) in lines {
        if points.len() == vertex_count {
            break;
        }
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < props.len() {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {} fields, found {}", props.len(), fields.len()),
            ));
        }
        let get = |i: usize| parse_field(fields[i], path, line_no);
        points.push(Vec3::new(get(xi)?, get(yi)?, get(zi)?));
        if let Some((a, b, c)) = normal_idx {
            normals.push((Vec3::new(get(a)?, get(b)?, get(c)?), line_no));
        }
    }
    if points.len() != vertex_count {
        return Err(parse_err(
            path,
            header_end,
            format!("expected {vertex_count} vertices, file holds {}", points.len()),
        ));
    }
    let cloud = PointCloud::from_points(points)?;
    if normals.is_empty() {
        Ok(cloud)
    } else {
        cloud.with_normals(finish_normals(normals, path)?)
    }
}

pub fn save_ply(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    writeln!(out, "element vertex {}", cloud.len()).expect("string write");
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.normals().is_some() {
        out.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    out.push_str("end_header\n");
    match cloud.normals() {
        Some(normals) => {
            for (p, n) in cloud.points().iter().zip(normals) {
                writeln!(out, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z)
                    .expect("string write");
            }
        }
        None => {
            for p in cloud.points() {
                writeln!(out, "{} {} {}", p.x, p.y, p.z).expect("string write");
            }
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Load a 4x4 row-major homogeneous transform.
pub fn load_transform(path: &Path) -> Result<RigidTransform> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<([f64; 4], usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let mut row = [0.0f64; 4];
        for (v, tok) in row.iter_mut().zip(&fields) {
            *v = parse_field(tok, path, line_no)?;
        }
        rows.push((row, line_no));
    }
    if rows.len() != 4 {
        return Err(parse_err(
            path,
            rows.last().map_or(1, |r| r.1),
            format!("expected 4 matrix rows, found {}", rows.len()),
        ));
    }
    let m = Matrix4::from_fn(|r, c| rows[r].0[c]);
    RigidTransform::from_matrix(&m)
}

pub fn save_transform(t: &RigidTransform, path: &Path) -> Result<()> {
    let m = t.to_matrix();
    let mut out = String::new();
    for r in 0..4 {
        writeln!(out, "{} {} {} {}", m[(r, 0)], m[(r, 1)], m[(r, 2)], m[(r, 3)])
            .expect("string write");
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}
