//! Map representation: barycentric vertex-to-tet maps `P`, free vertex images
//! `X`, per-tet Jacobians and initialization.

mod init;
mod io;

pub use init::{
    init_from_landmarks, init_from_surface_map, read_surface_map, surface_map_from_fn, SurfaceMap, SurfaceMapEntry,
};
pub use io::{read_barycentric_map, read_vertex_image, write_barycentric_map, write_vertex_image};

use nalgebra::{Matrix3, SMatrix};
use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::geometry::{edge_columns, Vec3};
use crate::mesh::{MeshError, TetMesh};

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("landmark set is empty")]
    EmptyLandmarks,
    #[error("surface map has no entry for boundary vertex {vertex} of mesh {side}")]
    MissingBoundaryVertex { side: u8, vertex: usize },
    #[error("degenerate rest tet")]
    DegenerateRest,
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// One row of `P`: a tet of the target mesh and convex weights over its
/// vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapRow {
    pub tet: usize,
    pub weights: [f64; 4],
}

impl MapRow {
    pub fn point(&self, target_tets: &[[usize; 4]], positions: &[Vec3]) -> Vec3 {
        let t = target_tets[self.tet];
        self.weights
            .iter()
            .zip(t)
            .fold(Vec3::zeros(), |acc, (&w, v)| acc + positions[v] * w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarycentricMap {
    pub rows: Vec<MapRow>,
}

impl BarycentricMap {
    /// Maps every vertex of `mesh` to itself, through its first incident tet.
    pub fn identity(mesh: &TetMesh) -> Self {
        let rows = (0..mesh.num_vertices())
            .map(|v| {
                let tet = mesh.vertex_tets(v)[0];
                let mut weights = [0.0; 4];
                let local = mesh.tets()[tet].iter().position(|&u| u == v).expect("incident tet");
                weights[local] = 1.0;
                MapRow { tet, weights }
            })
            .collect();
        BarycentricMap { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Checks tet indices and convexity of every row.
    pub fn is_valid_for(&self, target: &TetMesh) -> bool {
        self.rows.iter().all(|r| {
            r.tet < target.num_tets()
                && r.weights.iter().all(|&w| w >= 0.0)
                && (r.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-10
        })
    }
}

/// `P V`: each row's weighted combination of target positions.
pub fn apply_map(p: &BarycentricMap, target_tets: &[[usize; 4]], positions: &[Vec3]) -> Vec<Vec3> {
    p.rows.par_iter().map(|r| r.point(target_tets, positions)).collect()
}

/// Maps in both directions plus the free vertex images. `x12` lives in the
/// space of mesh 2 and has one row per vertex of mesh 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MapPair {
    pub p12: BarycentricMap,
    pub p21: BarycentricMap,
    pub x12: Vec<Vec3>,
    pub x21: Vec<Vec3>,
}

impl MapPair {
    /// Sets `X_ij = P_ij V_j` in both directions.
    pub fn from_maps(m1: &TetMesh, m2: &TetMesh, p12: BarycentricMap, p21: BarycentricMap) -> Self {
        let x12 = apply_map(&p12, m2.tets(), m2.vertices());
        let x21 = apply_map(&p21, m1.tets(), m1.vertices());
        MapPair { p12, p21, x12, x21 }
    }

    pub fn identity(mesh: &TetMesh) -> Self {
        let p = BarycentricMap::identity(mesh);
        MapPair::from_maps(mesh, mesh, p.clone(), p)
    }

    /// Roles of the two meshes exchanged.
    pub fn swapped(&self) -> MapPair {
        MapPair {
            p12: self.p21.clone(),
            p21: self.p12.clone(),
            x12: self.x21.clone(),
            x21: self.x12.clone(),
        }
    }
}

/// Edge extractor `B` with rows `v1-v0, v2-v0, v3-v0`.
pub fn edge_matrix_b() -> SMatrix<f64, 3, 4> {
    SMatrix::<f64, 3, 4>::new(-1.0, 1.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 1.0)
}

/// Differential of the affine map taking `rest` onto `mapped`.
pub fn tet_jacobian(rest: &[Vec3; 4], mapped: &[Vec3; 4]) -> Result<Matrix3<f64>, MappingError> {
    let inv = edge_columns(rest).try_inverse().ok_or(MappingError::DegenerateRest)?;
    if !inv.iter().all(|x| x.is_finite()) {
        return Err(MappingError::DegenerateRest);
    }
    Ok(edge_columns(mapped) * inv)
}

/// Jacobian of tet `k` of `mesh` under vertex images `x`.
pub fn mesh_jacobian(mesh: &TetMesh, x: &[Vec3], k: usize) -> Matrix3<f64> {
    let t = mesh.tets()[k];
    edge_columns(&[x[t[0]], x[t[1]], x[t[2]], x[t[3]]]) * mesh.rest_inverse(k)
}

/// Tets whose Jacobian determinant is not positive.
pub fn count_inversions(mesh: &TetMesh, x: &[Vec3]) -> Vec<usize> {
    (0..mesh.num_tets())
        .into_par_iter()
        .filter(|&k| mesh_jacobian(mesh, x, k).determinant() <= 0.0)
        .collect()
}
