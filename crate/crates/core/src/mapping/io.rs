use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{BarycentricMap, MapRow};
use crate::mesh::geometry::Vec3;
use crate::mesh::io::read_text;
use crate::mesh::MeshError;

fn io_err(path: &Path, source: std::io::Error) -> MeshError {
    MeshError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: String) -> MeshError {
    MeshError::Parse {
        path: path.display().to_string(),
        line,
        msg,
    }
}

/// One line per row: `tet_id b0 b1 b2 b3`.
pub fn write_barycentric_map(p: &BarycentricMap, path: &Path) -> Result<(), MeshError> {
    let mut s = String::with_capacity(p.len() * 96);
    for r in &p.rows {
        let w = r.weights;
        writeln!(s, "{} {:.16e} {:.16e} {:.16e} {:.16e}", r.tet, w[0], w[1], w[2], w[3]).unwrap();
    }
    fs::write(path, s).map_err(|e| io_err(path, e))
}

/// One line per vertex: `x y z`.
pub fn write_vertex_image(x: &[Vec3], path: &Path) -> Result<(), MeshError> {
    let mut s = String::with_capacity(x.len() * 72);
    for v in x {
        writeln!(s, "{:.16e} {:.16e} {:.16e}", v.x, v.y, v.z).unwrap();
    }
    fs::write(path, s).map_err(|e| io_err(path, e))
}

fn numeric_lines(path: &Path, width: usize) -> Result<Vec<Vec<f64>>, MeshError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let tok: Vec<&str> = raw.split_whitespace().collect();
        if tok.is_empty() {
            continue;
        }
        if tok.len() != width {
            return Err(parse_err(path, i + 1, format!("expected {width} fields, found {}", tok.len())));
        }
        let vals = tok
            .iter()
            .map(|s| s.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| parse_err(path, i + 1, "expected finite numbers".into()))?;
        out.push(vals);
    }
    Ok(out)
}

pub fn read_barycentric_map(path: &Path) -> Result<BarycentricMap, MeshError> {
    let rows = numeric_lines(path, 5)?
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            if v[0] < 0.0 || v[0].fract() != 0.0 {
                return Err(parse_err(path, i + 1, format!("bad tet index {}", v[0])));
            }
            Ok(MapRow {
                tet: v[0] as usize,
                weights: [v[1], v[2], v[3], v[4]],
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(BarycentricMap { rows })
}

pub fn read_vertex_image(path: &Path) -> Result<Vec<Vec3>, MeshError> {
    Ok(numeric_lines(path, 3)?.into_iter().map(|v| Vec3::new(v[0], v[1], v[2])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::MapPair;
    use crate::mesh::generate;

    #[test]
    fn round_trip() {
        let m = generate::box_grid([2, 2, 2], [1.0, 1.0, 1.0]);
        let pair = MapPair::identity(&m);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.txt");
        let x = dir.path().join("x.txt");
        write_barycentric_map(&pair.p12, &p).unwrap();
        write_vertex_image(&pair.x12, &x).unwrap();
        assert_eq!(read_barycentric_map(&p).unwrap(), pair.p12);
        assert_eq!(read_vertex_image(&x).unwrap(), pair.x12);
    }
}
