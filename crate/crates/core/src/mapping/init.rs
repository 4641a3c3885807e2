use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::{BarycentricMap, MapPair, MapRow, MappingError};
use crate::mesh::bvh::{Aabb, Bvh};
use crate::mesh::geometry::{to_array, Vec3};
use crate::mesh::{LandmarkSet, MeshError, SurfaceIndex, TetMesh};

/// Every vertex copies the target of the closest source landmark (ties go to
/// the lower landmark index); then `X_ij = P_ij V_j`.
pub fn init_from_landmarks(m1: &TetMesh, m2: &TetMesh, landmarks: &LandmarkSet) -> Result<MapPair, MappingError> {
    if landmarks.is_empty() {
        return Err(MappingError::EmptyLandmarks);
    }
    landmarks.validate(m1, m2)?;
    let p12 = landmark_rows(
        m1,
        &landmarks.pairs.iter().map(|l| l.on_first.position(m1)).collect::<Vec<_>>(),
        &landmarks.pairs.iter().map(|l| l.on_second.tet_weights(m2)).collect::<Vec<_>>(),
    );
    let p21 = landmark_rows(
        m2,
        &landmarks.pairs.iter().map(|l| l.on_second.position(m2)).collect::<Vec<_>>(),
        &landmarks.pairs.iter().map(|l| l.on_first.tet_weights(m1)).collect::<Vec<_>>(),
    );
    Ok(MapPair::from_maps(m1, m2, p12, p21))
}

fn landmark_rows(source: &TetMesh, anchors: &[Vec3], targets: &[(usize, [f64; 4])]) -> BarycentricMap {
    let rows = source
        .vertices()
        .par_iter()
        .map(|v| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, a) in anchors.iter().enumerate() {
                let d = (a - v).norm_squared();
                if d < best_d {
                    best = k;
                    best_d = d;
                }
            }
            let (tet, weights) = targets[best];
            MapRow { tet, weights }
        })
        .collect();
    BarycentricMap { rows }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceMapEntry {
    pub vertex: usize,
    pub face: usize,
    pub weights: [f64; 3],
}

/// Boundary-to-boundary correspondence: for each boundary vertex of either
/// mesh, a point on a boundary face of the other mesh.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfaceMap {
    pub first_to_second: Vec<SurfaceMapEntry>,
    pub second_to_first: Vec<SurfaceMapEntry>,
}

impl SurfaceMap {
    /// Parses lines `side vertex_id face_id b0 b1 b2`.
    pub fn parse(path: &Path, text: &str) -> Result<SurfaceMap, MeshError> {
        let err = |line: usize, msg: String| MeshError::Parse {
            path: path.display().to_string(),
            line,
            msg,
        };
        let mut map = SurfaceMap::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let tok: Vec<&str> = raw.split('#').next().unwrap_or("").split_whitespace().collect();
            if tok.is_empty() {
                continue;
            }
            if tok.len() != 6 {
                return Err(err(line, format!("expected 6 fields, found {}", tok.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| err(line, format!("bad index '{s}'")));
            let side = int(tok[0])?;
            let vertex = int(tok[1])?;
            let face = int(tok[2])?;
            let mut w = [0.0; 3];
            for (k, s) in tok[3..].iter().enumerate() {
                let x: f64 = s.parse().map_err(|_| err(line, format!("bad weight '{s}'")))?;
                if !x.is_finite() || x < -1e-12 {
                    return Err(err(line, format!("weight {s} must be non-negative")));
                }
                w[k] = x.max(0.0);
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(err(line, format!("weights sum to {sum}, expected 1")));
            }
            w.iter_mut().for_each(|x| *x /= sum);
            let entry = SurfaceMapEntry { vertex, face, weights: w };
            match side {
                1 => map.first_to_second.push(entry),
                2 => map.second_to_first.push(entry),
                _ => return Err(err(line, format!("side must be 1 or 2, found {side}"))),
            }
        }
        Ok(map)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (side, entries) in [(1, &self.first_to_second), (2, &self.second_to_first)] {
            for e in entries {
                writeln!(s, "{side} {} {} {:?} {:?} {:?}", e.vertex, e.face, e.weights[0], e.weights[1], e.weights[2]).unwrap();
            }
        }
        s
    }

    pub fn swapped(&self) -> SurfaceMap {
        SurfaceMap {
            first_to_second: self.second_to_first.clone(),
            second_to_first: self.first_to_second.clone(),
        }
    }
}

pub fn read_surface_map(path: &Path) -> Result<SurfaceMap, MeshError> {
    SurfaceMap::parse(path, &crate::mesh::io::read_text(path)?)
}

/// Builds a surface map by sending each boundary vertex through `f12` (or
/// `f21`) and snapping the result to the closest point of the other boundary.
pub fn surface_map_from_fn<F, G>(m1: &TetMesh, m2: &TetMesh, f12: F, f21: G) -> SurfaceMap
where
    F: Fn(&Vec3) -> Vec3 + Sync,
    G: Fn(&Vec3) -> Vec3 + Sync,
{
    SurfaceMap {
        first_to_second: snap_boundary(m1, m2, &f12),
        second_to_first: snap_boundary(m2, m1, &f21),
    }
}

fn snap_boundary<F: Fn(&Vec3) -> Vec3 + Sync>(src: &TetMesh, dst: &TetMesh, f: &F) -> Vec<SurfaceMapEntry> {
    let index = SurfaceIndex::new(dst.boundary_with_positions(dst.vertices()));
    src.boundary()
        .vertices
        .par_iter()
        .map(|&v| {
            let hit = index.closest(&f(&src.vertices()[v])).expect("target boundary has faces");
            SurfaceMapEntry {
                vertex: v,
                face: hit.face,
                weights: hit.weights,
            }
        })
        .collect()
}

/// Boundary rows come from the surface map; every interior vertex copies
/// the row of its closest boundary vertex (ties go to the lower vertex id).
pub fn init_from_surface_map(m1: &TetMesh, m2: &TetMesh, map: &SurfaceMap) -> Result<MapPair, MappingError> {
    let p12 = surface_rows(m1, m2, &map.first_to_second, 1)?;
    let p21 = surface_rows(m2, m1, &map.second_to_first, 2)?;
    Ok(MapPair::from_maps(m1, m2, p12, p21))
}

fn surface_rows(src: &TetMesh, dst: &TetMesh, entries: &[SurfaceMapEntry], side: u8) -> Result<BarycentricMap, MappingError> {
    let n = src.num_vertices();
    let nf = dst.boundary().faces.len();
    let bad = |msg: String| {
        MappingError::Mesh(MeshError::Parse {
            path: "surface map".into(),
            line: 0,
            msg: format!("side {side}: {msg}"),
        })
    };
    let mut rows: Vec<Option<MapRow>> = vec![None; n];
    for e in entries {
        if e.vertex >= n || !src.is_boundary_vertex(e.vertex) {
            return Err(bad(format!("vertex {} is not a boundary vertex", e.vertex)));
        }
        if e.face >= nf {
            return Err(bad(format!("boundary face {} out of range ({nf} faces)", e.face)));
        }
        rows[e.vertex] = Some(MapRow {
            tet: dst.boundary().face_tet[e.face],
            weights: dst.boundary().face_to_tet_weights(e.face, e.weights),
        });
    }
    let boundary = &src.boundary().vertices;
    if let Some(&v) = boundary.iter().find(|&&v| rows[v].is_none()) {
        return Err(MappingError::MissingBoundaryVertex { side, vertex: v });
    }
    let points: Vec<[f64; 3]> = boundary.iter().map(|&v| to_array(&src.vertices()[v])).collect();
    let boxes: Vec<Aabb<3>> = points.iter().map(|p| Aabb::from_points([p])).collect();
    let bvh = Bvh::build(&boxes);
    let filled: Vec<MapRow> = (0..n)
        .into_par_iter()
        .map(|v| {
            if let Some(r) = rows[v] {
                return r;
            }
            let q = to_array(&src.vertices()[v]);
            let (k, _) = bvh
                .nearest(&q, |p| (0..3).map(|c| (points[p][c] - q[c]).powi(2)).sum())
                .expect("mesh has boundary vertices");
            rows[boundary[k]].expect("boundary rows filled")
        })
        .collect();
    Ok(BarycentricMap { rows: filled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::apply_map;
    use crate::mesh::{generate, Landmark, SimplexPoint};

    fn vertex_point(mesh: &TetMesh, v: usize) -> SimplexPoint {
        let tet = mesh.vertex_tets(v)[0];
        let mut weights = [0.0; 4];
        weights[mesh.tets()[tet].iter().position(|&u| u == v).unwrap()] = 1.0;
        SimplexPoint::Tet { id: tet, weights }
    }

    #[test]
    fn single_landmark_collapses() {
        let m1 = generate::box_grid([2, 2, 2], [1.0, 1.0, 1.0]);
        let m2 = generate::five_tet_cube(2.0);
        let set = LandmarkSet {
            pairs: vec![Landmark {
                on_first: vertex_point(&m1, 0),
                on_second: SimplexPoint::Tet { id: 0, weights: [0.25; 4] },
            }],
        };
        let pair = init_from_landmarks(&m1, &m2, &set).unwrap();
        let c = Vec3::new(1.0, 1.0, 1.0);
        assert!(pair.x12.iter().all(|x| (x - c).norm() < 1e-12));
        assert!(init_from_landmarks(&m1, &m2, &LandmarkSet::default()).is_err());
    }

    #[test]
    fn landmark_vertex_maps_to_partner_and_ties_go_low() {
        let m = generate::box_grid([2, 1, 1], [2.0, 1.0, 1.0]);
        // vertices 0 at x=0 and 2 at x=2, vertex 1 at x=1 is equidistant
        let a = (0..m.num_vertices()).find(|&v| m.vertices()[v] == Vec3::zeros()).unwrap();
        let b = (0..m.num_vertices()).find(|&v| m.vertices()[v] == Vec3::new(2.0, 0.0, 0.0)).unwrap();
        let mid = (0..m.num_vertices()).find(|&v| m.vertices()[v] == Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let set = LandmarkSet {
            pairs: vec![
                Landmark { on_first: vertex_point(&m, b), on_second: vertex_point(&m, a) },
                Landmark { on_first: vertex_point(&m, a), on_second: vertex_point(&m, b) },
            ],
        };
        let pair = init_from_landmarks(&m, &m, &set).unwrap();
        assert_eq!(pair.x12[b], m.vertices()[a]);
        assert_eq!(pair.x12[a], m.vertices()[b]);
        assert_eq!(pair.x12[mid], m.vertices()[a]);
        let again = init_from_landmarks(&m, &m, &set).unwrap();
        assert_eq!(pair, again);
    }

    #[test]
    fn landmark_init_swaps_with_roles() {
        let m1 = generate::box_grid([2, 2, 2], [1.0, 1.0, 1.0]);
        let m2 = generate::box_grid([3, 2, 2], [1.5, 1.0, 1.0]);
        let set = LandmarkSet {
            pairs: (0..4)
                .map(|k| Landmark {
                    on_first: vertex_point(&m1, 3 * k),
                    on_second: vertex_point(&m2, 5 * k + 1),
                })
                .collect(),
        };
        let a = init_from_landmarks(&m1, &m2, &set).unwrap();
        let b = init_from_landmarks(&m2, &m1, &set.swapped()).unwrap();
        assert_eq!(a.swapped(), b);
    }

    #[test]
    fn identity_surface_map() {
        let m = generate::box_grid([3, 3, 3], [1.0, 1.0, 1.0]);
        let sm = surface_map_from_fn(&m, &m, |p| *p, |p| *p);
        let pair = init_from_surface_map(&m, &m, &sm).unwrap();
        for &v in &m.boundary().vertices {
            assert!((pair.x12[v] - m.vertices()[v]).norm() < 1e-12);
        }
        // interior vertices copy their closest boundary vertex
        let interior: Vec<usize> = (0..m.num_vertices()).filter(|&v| !m.is_boundary_vertex(v)).collect();
        assert!(!interior.is_empty());
        for v in interior {
            let p = m.vertices()[v];
            let dmin = m.boundary().vertices.iter().map(|&b| (m.vertices()[b] - p).norm()).fold(f64::INFINITY, f64::min);
            assert!(((pair.x12[v] - p).norm() - dmin).abs() < 1e-12);
        }
        let text = sm.to_text();
        assert_eq!(SurfaceMap::parse(Path::new("s"), &text).unwrap(), sm);
    }

    #[test]
    fn flipped_surface_map_is_accepted() {
        let m = generate::box_grid([2, 2, 2], [1.0, 1.0, 1.0]);
        let mirror = |p: &Vec3| Vec3::new(1.0 - p.x, p.y, p.z);
        let sm = surface_map_from_fn(&m, &m, mirror, mirror);
        let pair = init_from_surface_map(&m, &m, &sm).unwrap();
        let inv = crate::mapping::count_inversions(&m, &pair.x12);
        assert!(!inv.is_empty());
        let x = apply_map(&pair.p12, m.tets(), m.vertices());
        assert_eq!(x, pair.x12);
    }

    #[test]
    fn surface_map_errors() {
        let m = generate::unit_tet();
        let err = SurfaceMap::parse(Path::new("s"), "1 0 0 1 0 0\n1 1 0 0.5 0.5 x\n").unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 2, .. }));
        let partial = SurfaceMap::parse(Path::new("s"), "1 0 0 1 0 0\n").unwrap();
        assert!(matches!(
            init_from_surface_map(&m, &m, &partial),
            Err(MappingError::MissingBoundaryVertex { side: 1, vertex: 1 })
        ));
    }
}
