//! Pushing geometry forward through a vertex image and pulling scalar fields
//! back through a barycentric map.

mod io;

pub use io::{read_field_csv, read_obj, write_field_csv, write_obj};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::mapping::{BarycentricMap, MapRow};
use crate::mesh::bvh::{Aabb, Bvh};
use crate::mesh::geometry::{project_onto_simplex, to_array, Vec3};
use crate::mesh::{MeshError, TetMesh};

/// Points further than this fraction of the bounding box diagonal from the
/// mesh are reported as skipped.
pub const EXTERIOR_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("field has {got} values, expected {expected}")]
    FieldLength { got: usize, expected: usize },
    #[error("geometry references point {index} but has {n} points")]
    BadIndex { index: usize, n: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Points,
    Polylines,
    IndexedMesh,
}

/// Geometry embedded in the source volume. `cells` holds polylines or
/// polygons (faces, or tets for volumetric input) as point index lists.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedGeometry {
    pub kind: GeometryKind,
    pub points: Vec<Vec3>,
    pub cells: Vec<Vec<usize>>,
}

impl EmbeddedGeometry {
    pub fn points(points: Vec<Vec3>) -> Self {
        EmbeddedGeometry { kind: GeometryKind::Points, points, cells: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), TransferError> {
        let n = self.points.len();
        match self.cells.iter().flatten().find(|&&i| i >= n) {
            Some(&index) => Err(TransferError::BadIndex { index, n }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub row: MapRow,
    /// Distance from the query to the located point (0 inside the mesh).
    pub dist: f64,
}

/// Nearest-tet queries against a tet mesh.
pub struct PointLocator<'a> {
    mesh: &'a TetMesh,
    bvh: Bvh<3>,
    tolerance: f64,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a TetMesh) -> Self {
        let boxes: Vec<Aabb<3>> = (0..mesh.num_tets())
            .map(|k| Aabb::from_points(mesh.tet_corners(k).iter().map(to_array).collect::<Vec<_>>().iter()))
            .collect();
        PointLocator {
            mesh,
            bvh: Bvh::build(&boxes),
            tolerance: EXTERIOR_TOLERANCE * mesh.bbox_diagonal(),
        }
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    fn corners(&self, k: usize) -> [[f64; 3]; 4] {
        self.mesh.tet_corners(k).map(|v| to_array(&v))
    }

    /// Containing tet, or the closest one with the clamped point.
    pub fn locate(&self, p: &Vec3) -> Location {
        let q = to_array(p);
        let (tet, _) = self
            .bvh
            .nearest(&q, |k| project_onto_simplex(&q, &self.corners(k)).1)
            .expect("mesh has tets");
        let (weights, d2) = project_onto_simplex(&q, &self.corners(tet));
        Location { row: MapRow { tet, weights }, dist: d2.sqrt() }
    }
}

pub fn locate_point(mesh: &TetMesh, p: &Vec3) -> Location {
    PointLocator::new(mesh).locate(p)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SkipReport {
    /// Indices of points further than the tolerance from the source mesh.
    /// They are mapped through their clamped location.
    pub skipped: Vec<usize>,
    pub max_distance: f64,
}

/// Maps every point through the piecewise-linear map given by vertex images
/// `x` of `src`. Connectivity is kept.
pub fn push_forward(geometry: &EmbeddedGeometry, src: &TetMesh, x: &[Vec3]) -> Result<(EmbeddedGeometry, SkipReport), TransferError> {
    geometry.validate()?;
    let locator = PointLocator::new(src);
    let located: Vec<Location> = geometry.points.par_iter().map(|p| locator.locate(p)).collect();
    let points = located.iter().map(|l| l.row.point(src.tets(), x)).collect();
    let skipped = located
        .iter()
        .enumerate()
        .filter(|(_, l)| l.dist > locator.tolerance())
        .map(|(i, _)| i)
        .collect();
    let max_distance = located.iter().fold(0.0f64, |m, l| m.max(l.dist));
    Ok((
        EmbeddedGeometry { kind: geometry.kind, points, cells: geometry.cells.clone() },
        SkipReport { skipped, max_distance },
    ))
}

/// Source-vertex values interpolated from target-vertex values at the
/// locations given by `p`.
pub fn pull_back_field(field: &[f64], p: &BarycentricMap, target: &TetMesh) -> Result<Vec<f64>, TransferError> {
    if field.len() != target.num_vertices() {
        return Err(TransferError::FieldLength { got: field.len(), expected: target.num_vertices() });
    }
    Ok(p.rows
        .iter()
        .map(|r| {
            let t = target.tets()[r.tet];
            (0..4).map(|l| r.weights[l] * field[t[l]]).sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{apply_map, MapPair};
    use crate::mesh::generate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn locate_cases() {
        let m = generate::box_grid([2, 2, 2], [1.0, 1.0, 1.0]);
        let loc = PointLocator::new(&m);
        for k in [0, 7, 30] {
            let c = m.tet_corners(k).iter().sum::<Vec3>() / 4.0;
            let l = loc.locate(&c);
            assert_eq!(l.row.tet, k);
            assert!(l.row.weights.iter().all(|w| (w - 0.25).abs() < 1e-12));
        }
        let v = 13;
        let l = loc.locate(&m.vertices()[v]);
        assert_eq!(l.dist, 0.0);
        let local = m.tets()[l.row.tet].iter().position(|&u| u == v).unwrap();
        assert_eq!(l.row.weights[local], 1.0);

        // exterior points against a brute-force scan
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let p = Vec3::new(rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5), rng.gen_range(1.01..1.5));
            let brute = (0..m.num_tets())
                .map(|k| project_onto_simplex(&to_array(&p), &m.tet_corners(k).map(|c| to_array(&c))).1)
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            let l = loc.locate(&p);
            assert!((l.dist - brute).abs() < 1e-9);
            assert!((l.row.point(m.tets(), m.vertices()) - p).norm() - l.dist < 1e-12);
        }
    }

    #[test]
    fn push_forward_cases() {
        let m = generate::box_grid([2, 2, 2], [1.0, 1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Vec3> = (0..40).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let g = EmbeddedGeometry { kind: GeometryKind::Polylines, points: pts.clone(), cells: vec![(0..40).collect()] };
        let (same, skip) = push_forward(&g, &m, m.vertices()).unwrap();
        assert!(skip.skipped.is_empty());
        assert_eq!(same.cells, g.cells);
        assert!(same.points.iter().zip(&pts).all(|(a, b)| (a - b).norm() < 1e-12));

        let a = nalgebra::Matrix3::new(1.3, 0.2, 0.0, -0.1, 0.9, 0.3, 0.0, 0.1, 1.1);
        let t = Vec3::new(0.5, -1.0, 2.0);
        let x: Vec<Vec3> = m.vertices().iter().map(|v| a * v + t).collect();
        let (mapped, _) = push_forward(&g, &m, &x).unwrap();
        assert!(mapped.points.iter().zip(&pts).all(|(q, p)| (q - (a * p + t)).norm() < 1e-10));

        let far = EmbeddedGeometry::points(vec![Vec3::new(0.5, 0.5, 0.5), Vec3::new(3.0, 0.5, 0.5)]);
        let (_, skip) = push_forward(&far, &m, m.vertices()).unwrap();
        assert_eq!(skip.skipped, vec![1]);
        assert!((skip.max_distance - 2.0).abs() < 1e-12);

        let bad = EmbeddedGeometry { kind: GeometryKind::IndexedMesh, points: pts, cells: vec![vec![0, 1, 99]] };
        assert!(push_forward(&bad, &m, m.vertices()).is_err());
    }

    #[test]
    fn pull_back_cases() {
        let m = generate::box_grid([2, 2, 2], [1.0, 1.0, 1.0]);
        let pair = MapPair::identity(&m);
        assert_eq!(pull_back_field(&vec![2.5; m.num_vertices()], &pair.p12, &m).unwrap(), vec![2.5; m.num_vertices()]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let field: Vec<f64> = (0..m.num_vertices()).map(|_| rng.gen()).collect();
        assert_eq!(pull_back_field(&field, &pair.p12, &m).unwrap(), field);

        // random interior locations: linear fields are reproduced exactly
        let loc = PointLocator::new(&m);
        let pts: Vec<Vec3> = (0..30).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let p = BarycentricMap { rows: pts.iter().map(|q| loc.locate(q).row).collect() };
        let lin = |v: &Vec3| 0.3 * v.x - 1.2 * v.y + 2.0 * v.z + 0.5;
        let field: Vec<f64> = m.vertices().iter().map(lin).collect();
        let back = pull_back_field(&field, &p, &m).unwrap();
        for (q, b) in pts.iter().zip(back) {
            assert!((lin(q) - b).abs() < 1e-12);
        }
        let img = apply_map(&p, m.tets(), m.vertices());
        assert!(img.iter().zip(&pts).all(|(a, b)| (a - b).norm() < 1e-12));
        assert!(pull_back_field(&[1.0], &p, &m).is_err());
    }
}
