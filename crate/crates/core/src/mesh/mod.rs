//! Tetrahedral mesh data model.
//!
//! A [`TetMesh`] is immutable once built: construction validates the
//! connectivity, repairs inverted rest tetrahedra by swapping two vertices,
//! extracts the boundary surface and computes lumped masses.

mod boundary;
pub mod bvh;
pub mod generate;
pub mod geometry;
pub mod io;
mod landmarks;
mod surface;

pub use boundary::{extract_boundary, BoundarySurface};
pub use geometry::Vec3;
pub use io::{load_mesh, load_raw, write_mesh, write_raw, MeshFormat};
pub use landmarks::{read_landmarks, Landmark, LandmarkSet, SimplexPoint};
pub use surface::{SurfaceHit, SurfaceIndex, TriangleMesh};

use geometry::{tet_signed_volume, triangle_area};
use nalgebra::Matrix3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("tet {tet} references vertex {vertex}, mesh has {n} vertices")]
    IndexOutOfRange { tet: usize, vertex: usize, n: usize },
    #[error("tet {0} repeats a vertex")]
    RepeatedVertex(usize),
    #[error("tet {tet} has zero rest volume ({volume:e})")]
    DegenerateTet { tet: usize, volume: f64 },
    #[error("boundary edge ({0}, {1}) is shared by {2} boundary faces")]
    NonManifoldEdge(usize, usize, usize),
    #[error("mesh has no tetrahedra")]
    Empty,
    #[error("non-finite vertex coordinate at vertex {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone)]
pub struct TetMesh {
    vertices: Vec<Vec3>,
    tets: Vec<[usize; 4]>,
    boundary: BoundarySurface,
    tet_volumes: Vec<f64>,
    /// Inverse of the rest edge matrix `[v1-v0, v2-v0, v3-v0]` per tet.
    rest_inverse: Vec<Matrix3<f64>>,
    vertex_masses: Vec<f64>,
    boundary_masses: Vec<f64>,
    total_volume: f64,
    total_surface_area: f64,
    vertex_tets: Vec<Vec<usize>>,
    reoriented: Vec<usize>,
}

impl TetMesh {
    /// Builds a mesh from raw coordinates and connectivity.
    ///
    /// Tets with negative rest volume get vertices 2 and 3 swapped; the ids of
    /// those tets are available from [`TetMesh::reoriented_tets`].
    pub fn new(vertices: Vec<Vec3>, mut tets: Vec<[usize; 4]>) -> Result<Self, MeshError> {
        if tets.is_empty() {
            return Err(MeshError::Empty);
        }
        let n = vertices.len();
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(MeshError::NonFinite(i));
        }
        let scale = bbox_diagonal(&vertices).max(f64::MIN_POSITIVE);
        let mut reoriented = Vec::new();
        for (k, t) in tets.iter_mut().enumerate() {
            if let Some(&v) = t.iter().find(|&&v| v >= n) {
                return Err(MeshError::IndexOutOfRange { tet: k, vertex: v, n });
            }
            for a in 0..4 {
                for b in (a + 1)..4 {
                    if t[a] == t[b] {
                        return Err(MeshError::RepeatedVertex(k));
                    }
                }
            }
            let vol = tet_signed_volume(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]], &vertices[t[3]]);
            if vol.abs() <= 1e-14 * scale.powi(3) {
                return Err(MeshError::DegenerateTet { tet: k, volume: vol });
            }
            if vol < 0.0 {
                t.swap(2, 3);
                reoriented.push(k);
            }
        }
        let boundary = extract_boundary(n, &tets)?;
        Ok(Self::assemble(vertices, tets, boundary, reoriented))
    }

    fn assemble(vertices: Vec<Vec3>, tets: Vec<[usize; 4]>, boundary: BoundarySurface, reoriented: Vec<usize>) -> Self {
        let n = vertices.len();
        let mut tet_volumes = Vec::with_capacity(tets.len());
        let mut rest_inverse = Vec::with_capacity(tets.len());
        let mut vertex_masses = vec![0.0; n];
        let mut vertex_tets = vec![Vec::new(); n];
        for (k, t) in tets.iter().enumerate() {
            let corners = [vertices[t[0]], vertices[t[1]], vertices[t[2]], vertices[t[3]]];
            let vol = tet_signed_volume(&corners[0], &corners[1], &corners[2], &corners[3]);
            tet_volumes.push(vol);
            let inv = geometry::edge_columns(&corners)
                .try_inverse()
                .expect("rest tet validated as non-degenerate");
            rest_inverse.push(inv);
            for &v in t {
                vertex_masses[v] += 0.25 * vol;
                vertex_tets[v].push(k);
            }
        }
        let mut boundary_masses = vec![0.0; n];
        let mut total_surface_area = 0.0;
        for f in &boundary.faces {
            let a = triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]);
            total_surface_area += a;
            for &v in f {
                boundary_masses[v] += a / 3.0;
            }
        }
        let total_volume = tet_volumes.iter().sum();
        TetMesh {
            vertices,
            tets,
            boundary,
            tet_volumes,
            rest_inverse,
            vertex_masses,
            boundary_masses,
            total_volume,
            total_surface_area,
            vertex_tets,
            reoriented,
        }
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn boundary(&self) -> &BoundarySurface {
        &self.boundary
    }

    pub fn tet_volumes(&self) -> &[f64] {
        &self.tet_volumes
    }

    /// Inverse rest edge matrix of tet `k`.
    pub fn rest_inverse(&self, k: usize) -> &Matrix3<f64> {
        &self.rest_inverse[k]
    }

    /// Lumped vertex masses: a quarter of the volume of every incident tet.
    pub fn vertex_masses(&self) -> &[f64] {
        &self.vertex_masses
    }

    /// Lumped boundary areas: a third of the area of every incident boundary
    /// triangle; zero for interior vertices.
    pub fn boundary_masses(&self) -> &[f64] {
        &self.boundary_masses
    }

    pub fn total_volume(&self) -> f64 {
        self.total_volume
    }

    pub fn total_surface_area(&self) -> f64 {
        self.total_surface_area
    }

    pub fn vertex_tets(&self, v: usize) -> &[usize] {
        &self.vertex_tets[v]
    }

    pub fn reoriented_tets(&self) -> &[usize] {
        &self.reoriented
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary.is_boundary[v]
    }

    pub fn tet_corners(&self, k: usize) -> [Vec3; 4] {
        let t = self.tets[k];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]], self.vertices[t[3]]]
    }

    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.vertices)
    }

    /// Scales coordinates about the origin so the total volume becomes one.
    /// Returns the new mesh and the applied factor `(1/c)^(1/3)`.
    pub fn normalize_volume(&self) -> (TetMesh, f64) {
        let scale = (1.0 / self.total_volume).cbrt();
        (self.scaled(scale), scale)
    }

    pub fn scaled(&self, factor: f64) -> TetMesh {
        let vertices = self.vertices.iter().map(|v| v * factor).collect();
        Self::assemble(vertices, self.tets.clone(), self.boundary.clone(), self.reoriented.clone())
    }

    /// Same connectivity with new coordinates. The caller guarantees the new
    /// rest pose is positively oriented.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<TetMesh, MeshError> {
        TetMesh::new(vertices, self.tets.clone())
    }

    /// The boundary surface realized with arbitrary vertex positions (for
    /// instance a vertex image `X`).
    pub fn boundary_with_positions(&self, positions: &[Vec3]) -> TriangleMesh {
        self.boundary.to_triangle_mesh(positions)
    }
}

pub(crate) fn bbox_diagonal(points: &[Vec3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}
