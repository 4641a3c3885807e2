use std::fmt::Write as _;
use std::path::Path;

use super::{EmbeddedGeometry, GeometryKind};
use crate::mesh::geometry::Vec3;
use crate::mesh::io::read_text;
use crate::mesh::MeshError;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn write(path: &Path, text: &str) -> Result<(), MeshError> {
    std::fs::write(path, text).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads `v`, `l` and `f` records. Faces make an indexed mesh, lines make
/// polylines, otherwise the file is a point set. Other records are ignored.
pub fn read_obj(path: &Path) -> Result<EmbeddedGeometry, MeshError> {
    let text = read_text(path)?;
    let mut points = Vec::new();
    let mut lines = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let mut tok = raw.split_whitespace();
        let Some(tag) = tok.next() else { continue };
        match tag {
            "v" => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(|s| s.parse::<f64>().map_err(|_| parse_err(path, i + 1, format!("bad coordinate '{s}'"))))
                    .collect::<Result<_, _>>()?;
                if c.len() != 3 || !c.iter().all(|x| x.is_finite()) {
                    return Err(parse_err(path, i + 1, "vertex needs three finite coordinates"));
                }
                points.push(Vec3::new(c[0], c[1], c[2]));
            }
            "l" | "f" => {
                let idx: Vec<usize> = tok
                    .map(|s| {
                        let head = s.split('/').next().unwrap_or("");
                        match head.parse::<i64>() {
                            Ok(k) if k > 0 => Ok(k as usize - 1),
                            Ok(k) if k < 0 && (-k) as usize <= points.len() => Ok(points.len() - (-k) as usize),
                            _ => Err(parse_err(path, i + 1, format!("bad index '{s}'"))),
                        }
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() < 2 {
                    return Err(parse_err(path, i + 1, "element needs at least two indices"));
                }
                if tag == "l" { lines.push(idx) } else { faces.push(idx) }
            }
            _ => {}
        }
    }
    let (kind, cells) = match (faces.is_empty(), lines.is_empty()) {
        (false, _) => (GeometryKind::IndexedMesh, faces),
        (true, false) => (GeometryKind::Polylines, lines),
        (true, true) => (GeometryKind::Points, Vec::new()),
    };
    let g = EmbeddedGeometry { kind, points, cells };
    g.validate().map_err(|e| parse_err(path, 0, e.to_string()))?;
    Ok(g)
}

pub fn write_obj(g: &EmbeddedGeometry, path: &Path) -> Result<(), MeshError> {
    let mut s = String::new();
    for p in &g.points {
        writeln!(s, "v {:.16e} {:.16e} {:.16e}", p.x, p.y, p.z).unwrap();
    }
    let tag = if g.kind == GeometryKind::Polylines { "l" } else { "f" };
    for c in &g.cells {
        s.push_str(tag);
        for i in c {
            write!(s, " {}", i + 1).unwrap();
        }
        s.push('\n');
    }
    write(path, &s)
}

/// One value per line, taken from the last comma-separated column. A
/// non-numeric first line is treated as a header.
pub fn read_field_csv(path: &Path) -> Result<Vec<f64>, MeshError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let last = raw.rsplit(',').next().unwrap_or("").trim();
        match last.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ if i == 0 => {}
            _ => return Err(parse_err(path, i + 1, format!("bad value '{last}'"))),
        }
    }
    Ok(out)
}

pub fn write_field_csv(values: &[f64], path: &Path) -> Result<(), MeshError> {
    let mut s = String::from("vertex,value\n");
    for (i, v) in values.iter().enumerate() {
        writeln!(s, "{i},{v:.16e}").unwrap();
    }
    write(path, &s)
}
