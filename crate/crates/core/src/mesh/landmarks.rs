use std::path::Path;

use super::geometry::Vec3;
use super::io::read_text;
use super::{MeshError, TetMesh};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimplexPoint {
    /// Point inside tet `id` with weights over its four vertices.
    Tet { id: usize, weights: [f64; 4] },
    /// Point on boundary face `id` with weights over its three vertices.
    Face { id: usize, weights: [f64; 3] },
}

impl SimplexPoint {
    /// The same point as a tet index plus four barycentric weights.
    pub fn tet_weights(&self, mesh: &TetMesh) -> (usize, [f64; 4]) {
        match *self {
            SimplexPoint::Tet { id, weights } => (id, weights),
            SimplexPoint::Face { id, weights } => {
                let b = mesh.boundary();
                (b.face_tet[id], b.face_to_tet_weights(id, weights))
            }
        }
    }

    pub fn position(&self, mesh: &TetMesh) -> Vec3 {
        let (k, w) = self.tet_weights(mesh);
        let t = mesh.tets()[k];
        (0..4).fold(Vec3::zeros(), |acc, l| acc + mesh.vertices()[t[l]] * w[l])
    }

    fn check(&self, mesh: &TetMesh) -> Result<(), String> {
        match *self {
            SimplexPoint::Tet { id, .. } if id >= mesh.num_tets() => {
                Err(format!("tet {id} out of range ({} tets)", mesh.num_tets()))
            }
            SimplexPoint::Face { id, .. } if id >= mesh.boundary().faces.len() => {
                Err(format!("boundary face {id} out of range ({} faces)", mesh.boundary().faces.len()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub on_first: SimplexPoint,
    pub on_second: SimplexPoint,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LandmarkSet {
    pub pairs: Vec<Landmark>,
}

impl LandmarkSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The same landmarks with the roles of the two meshes exchanged.
    pub fn swapped(&self) -> LandmarkSet {
        LandmarkSet {
            pairs: self
                .pairs
                .iter()
                .map(|l| Landmark {
                    on_first: l.on_second,
                    on_second: l.on_first,
                })
                .collect(),
        }
    }

    /// Checks every referenced simplex exists in its mesh.
    pub fn validate(&self, first: &TetMesh, second: &TetMesh) -> Result<(), MeshError> {
        for (k, l) in self.pairs.iter().enumerate() {
            for (side, p, m) in [(1, &l.on_first, first), (2, &l.on_second, second)] {
                p.check(m).map_err(|msg| MeshError::Parse {
                    path: "landmarks".into(),
                    line: 0,
                    msg: format!("landmark {k} side {side}: {msg}"),
                })?;
            }
        }
        Ok(())
    }

    /// Parses lines `side simplex_id b0 b1 b2 [b3]`. Three weights refer to a
    /// boundary face, four to a tet. The k-th side-1 entry pairs with the
    /// k-th side-2 entry.
    pub fn parse(path: &Path, text: &str) -> Result<LandmarkSet, MeshError> {
        let err = |line: usize, msg: String| MeshError::Parse {
            path: path.display().to_string(),
            line,
            msg,
        };
        let mut sides: [Vec<SimplexPoint>; 2] = [Vec::new(), Vec::new()];
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("");
            let tok: Vec<&str> = content.split_whitespace().collect();
            if tok.is_empty() {
                continue;
            }
            if tok.len() != 5 && tok.len() != 6 {
                return Err(err(line, format!("expected 5 or 6 fields, found {}", tok.len())));
            }
            let side = match tok[0] {
                "1" => 0,
                "2" => 1,
                s => return Err(err(line, format!("side must be 1 or 2, found '{s}'"))),
            };
            let id: usize = tok[1]
                .parse()
                .map_err(|_| err(line, format!("bad simplex id '{}'", tok[1])))?;
            let mut w = Vec::with_capacity(4);
            for s in &tok[2..] {
                let x: f64 = s.parse().map_err(|_| err(line, format!("bad weight '{s}'")))?;
                if !x.is_finite() || x < -1e-12 {
                    return Err(err(line, format!("weight {s} must be non-negative")));
                }
                w.push(x.max(0.0));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(err(line, format!("weights sum to {sum}, expected 1")));
            }
            w.iter_mut().for_each(|x| *x /= sum);
            let p = if w.len() == 3 {
                SimplexPoint::Face { id, weights: [w[0], w[1], w[2]] }
            } else {
                SimplexPoint::Tet { id, weights: [w[0], w[1], w[2], w[3]] }
            };
            sides[side].push(p);
        }
        if sides[0].len() != sides[1].len() {
            return Err(err(
                text.lines().count().max(1),
                format!("{} side-1 entries but {} side-2 entries", sides[0].len(), sides[1].len()),
            ));
        }
        let [a, b] = sides;
        Ok(LandmarkSet {
            pairs: a
                .into_iter()
                .zip(b)
                .map(|(on_first, on_second)| Landmark { on_first, on_second })
                .collect(),
        })
    }
}

pub fn read_landmarks(path: &Path) -> Result<LandmarkSet, MeshError> {
    LandmarkSet::parse(path, &read_text(path)?)
}
