//! ASCII TetGen (`.node`/`.ele`) and Medit (`.mesh`) readers and writers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::geometry::Vec3;
use super::{MeshError, TetMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    TetgenNodeEle,
    MeditMesh,
}

impl MeshFormat {
    /// `.mesh` is Medit; `.node`, `.ele` or no extension is TetGen.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("mesh") => Some(MeshFormat::MeditMesh),
            Some("node") | Some("ele") | None => Some(MeshFormat::TetgenNodeEle),
            _ => None,
        }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, MeshError> {
    fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), MeshError> {
    fs::write(path, text).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Whitespace tokens tagged with their 1-based line number; `#` starts a
/// comment.
pub(crate) struct Tokens<'a> {
    path: String,
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    pub(crate) fn new(path: &Path, text: &'a str) -> Self {
        let mut items = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("");
            items.extend(line.split_whitespace().map(|t| (i + 1, t)));
        }
        Tokens {
            path: path.display().to_string(),
            items,
            pos: 0,
        }
    }

    pub(crate) fn error(&self, line: usize, msg: impl Into<String>) -> MeshError {
        MeshError::Parse {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn line(&self) -> usize {
        self.items
            .get(self.pos)
            .or_else(|| self.items.last())
            .map_or(1, |t| t.0)
    }

    pub(crate) fn next_str(&mut self) -> Result<(usize, &'a str), MeshError> {
        let t = self
            .items
            .get(self.pos)
            .copied()
            .ok_or_else(|| self.error(self.line(), "unexpected end of file"))?;
        self.pos += 1;
        Ok(t)
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.items.get(self.pos).copied()
    }

    pub(crate) fn next_f64(&mut self) -> Result<f64, MeshError> {
        let (line, s) = self.next_str()?;
        match s.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(self.error(line, format!("expected a finite number, found '{s}'"))),
        }
    }

    pub(crate) fn next_int(&mut self) -> Result<i64, MeshError> {
        let (line, s) = self.next_str()?;
        s.parse::<i64>()
            .map_err(|_| self.error(line, format!("expected an integer, found '{s}'")))
    }

    fn next_count(&mut self) -> Result<usize, MeshError> {
        let (line, s) = self.next_str()?;
        s.parse::<usize>()
            .map_err(|_| self.error(line, format!("expected a count, found '{s}'")))
    }
}

/// Loads a tet mesh. The format is inferred from the extension when not
/// given. For TetGen input, `path` may name the `.node` file, the `.ele` file
/// or their common stem.
pub fn load_mesh(path: &Path, format: Option<MeshFormat>) -> Result<TetMesh, MeshError> {
    let (vertices, tets) = load_raw(path, format)?;
    TetMesh::new(vertices, tets)
}

/// Vertices and tets as stored, without validation or reorientation.
pub fn load_raw(path: &Path, format: Option<MeshFormat>) -> Result<(Vec<Vec3>, Vec<[usize; 4]>), MeshError> {
    let format = format.or_else(|| MeshFormat::from_path(path)).ok_or_else(|| MeshError::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: "unknown mesh extension (expected .node, .ele or .mesh)".into(),
    })?;
    let (vertices, tets) = match format {
        MeshFormat::TetgenNodeEle => {
            let (node, ele) = tetgen_paths(path);
            read_tetgen(&node, &read_text(&node)?, &ele, &read_text(&ele)?)?
        }
        MeshFormat::MeditMesh => read_medit(path, &read_text(path)?)?,
    };
    Ok((vertices, tets))
}

fn tetgen_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("node") | Some("ele") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut s = stem.clone().into_os_string();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".node"), with(".ele"))
}

/// Parses TetGen node and element text. Index base (0 or 1) follows the first
/// node id.
pub fn read_tetgen(node_path: &Path, node_text: &str, ele_path: &Path, ele_text: &str) -> Result<(Vec<Vec3>, Vec<[usize; 4]>), MeshError> {
    let mut t = Tokens::new(node_path, node_text);
    let (hline, _) = t.peek().ok_or_else(|| t.error(1, "empty node file"))?;
    let n = t.next_count()?;
    let dim = t.next_count()?;
    if dim != 3 {
        return Err(t.error(hline, format!("dimension must be 3, found {dim}")));
    }
    let n_attr = t.next_count()?;
    let n_marker = t.next_count()?;
    if n_marker > 1 {
        return Err(t.error(hline, "boundary marker flag must be 0 or 1"));
    }
    let mut base = 0i64;
    let mut vertices = Vec::with_capacity(n);
    for i in 0..n {
        let line = t.line();
        let id = t.next_int()?;
        if i == 0 {
            if id != 0 && id != 1 {
                return Err(t.error(line, format!("first node id must be 0 or 1, found {id}")));
            }
            base = id;
        }
        if id != base + i as i64 {
            return Err(t.error(line, format!("node ids must be consecutive, expected {}", base + i as i64)));
        }
        let p = Vec3::new(t.next_f64()?, t.next_f64()?, t.next_f64()?);
        for _ in 0..(n_attr + n_marker) {
            t.next_f64()?;
        }
        vertices.push(p);
    }

    let mut t = Tokens::new(ele_path, ele_text);
    let (hline, _) = t.peek().ok_or_else(|| t.error(1, "empty element file"))?;
    let m = t.next_count()?;
    let per = t.next_count()?;
    if per != 4 {
        return Err(t.error(hline, format!("only linear tets are supported, found {per} nodes per element")));
    }
    let e_attr = t.next_count()?;
    let mut tets = Vec::with_capacity(m);
    for _ in 0..m {
        let line = t.line();
        t.next_int()?;
        let mut tet = [0usize; 4];
        for slot in tet.iter_mut() {
            let raw = t.next_int()? - base;
            if raw < 0 || raw as usize >= n {
                return Err(t.error(line, format!("node index {} out of range", raw + base)));
            }
            *slot = raw as usize;
        }
        for _ in 0..e_attr {
            t.next_f64()?;
        }
        tets.push(tet);
    }
    Ok((vertices, tets))
}

/// Parses Medit `.mesh` text (1-based indices). Sections other than
/// `Vertices` and `Tetrahedra` are skipped.
pub fn read_medit(path: &Path, text: &str) -> Result<(Vec<Vec3>, Vec<[usize; 4]>), MeshError> {
    let mut t = Tokens::new(path, text);
    let mut vertices: Option<Vec<Vec3>> = None;
    let mut tets = Vec::new();
    let mut pending: Vec<(usize, [i64; 4])> = Vec::new();
    while let Some((line, kw)) = t.peek() {
        t.pos += 1;
        match kw {
            "MeshVersionFormatted" => {
                t.next_int()?;
            }
            "Dimension" => {
                let d = t.next_int()?;
                if d != 3 {
                    return Err(t.error(line, format!("dimension must be 3, found {d}")));
                }
            }
            "Vertices" => {
                let n = t.next_count()?;
                let mut v = Vec::with_capacity(n);
                for _ in 0..n {
                    v.push(Vec3::new(t.next_f64()?, t.next_f64()?, t.next_f64()?));
                    t.next_int()?;
                }
                vertices = Some(v);
            }
            "Tetrahedra" => {
                let m = t.next_count()?;
                for _ in 0..m {
                    let l = t.line();
                    let ids = [t.next_int()?, t.next_int()?, t.next_int()?, t.next_int()?];
                    t.next_int()?;
                    pending.push((l, ids));
                }
            }
            "End" => break,
            _ => {
                let Some(width) = medit_section_width(kw) else {
                    return Err(t.error(line, format!("unknown keyword '{kw}'")));
                };
                let count = t.next_count()?;
                for _ in 0..count * width {
                    t.next_str()?;
                }
            }
        }
    }
    let vertices = vertices.ok_or_else(|| t.error(1, "missing Vertices section"))?;
    for (line, ids) in pending {
        let mut tet = [0usize; 4];
        for (slot, id) in tet.iter_mut().zip(ids) {
            if id < 1 || id as usize > vertices.len() {
                return Err(t.error(line, format!("vertex index {id} out of range")));
            }
            *slot = id as usize - 1;
        }
        tets.push(tet);
    }
    Ok((vertices, tets))
}

fn medit_section_width(kw: &str) -> Option<usize> {
    Some(match kw {
        "Edges" => 3,
        "Triangles" => 4,
        "Quadrilaterals" => 5,
        "Hexahedra" => 9,
        "Corners" | "Ridges" | "RequiredVertices" | "RequiredEdges" | "RequiredTriangles" => 1,
        "Normals" | "Tangents" => 3,
        "NormalAtVertices" | "TangentAtVertices" => 2,
        _ => return None,
    })
}

pub fn write_mesh(mesh: &TetMesh, path: &Path, format: MeshFormat) -> Result<(), MeshError> {
    write_raw(mesh.vertices(), mesh.tets(), path, format)
}

pub fn write_raw(vertices: &[Vec3], tets: &[[usize; 4]], path: &Path, format: MeshFormat) -> Result<(), MeshError> {
    match format {
        MeshFormat::TetgenNodeEle => {
            let (node, ele) = tetgen_paths(path);
            let (nt, et) = tetgen_text(vertices, tets);
            write_text(&node, &nt)?;
            write_text(&ele, &et)
        }
        MeshFormat::MeditMesh => write_text(path, &medit_text(vertices, tets)),
    }
}

/// Node and element text, 0-based, with shortest round-trip float formatting.
pub fn tetgen_text(vertices: &[Vec3], tets: &[[usize; 4]]) -> (String, String) {
    let mut node = format!("{} 3 0 0\n", vertices.len());
    for (i, v) in vertices.iter().enumerate() {
        writeln!(node, "{i} {:?} {:?} {:?}", v.x, v.y, v.z).unwrap();
    }
    let mut ele = format!("{} 4 0\n", tets.len());
    for (k, t) in tets.iter().enumerate() {
        writeln!(ele, "{k} {} {} {} {}", t[0], t[1], t[2], t[3]).unwrap();
    }
    (node, ele)
}

pub fn medit_text(vertices: &[Vec3], tets: &[[usize; 4]]) -> String {
    let mut s = String::from("MeshVersionFormatted 2\nDimension 3\n");
    writeln!(s, "Vertices\n{}", vertices.len()).unwrap();
    for v in vertices {
        writeln!(s, "{:?} {:?} {:?} 0", v.x, v.y, v.z).unwrap();
    }
    writeln!(s, "Tetrahedra\n{}", tets.len()).unwrap();
    for t in tets {
        writeln!(s, "{} {} {} {} 0", t[0] + 1, t[1] + 1, t[2] + 1, t[3] + 1).unwrap();
    }
    s.push_str("End\n");
    s
}
