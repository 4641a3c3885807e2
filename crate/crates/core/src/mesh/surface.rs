use super::bvh::{Aabb, Bvh};
use super::geometry::{closest_point_triangle, to_array, Vec3};

/// Plain indexed triangle mesh.
#[derive(Debug, Clone, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub face: usize,
    pub weights: [f64; 3],
    pub point: Vec3,
    pub dist_sq: f64,
}

/// Closest-point queries against a triangle mesh.
#[derive(Debug, Clone)]
pub struct SurfaceIndex {
    mesh: TriangleMesh,
    bvh: Bvh<3>,
}

impl SurfaceIndex {
    pub fn new(mesh: TriangleMesh) -> Self {
        let boxes: Vec<Aabb<3>> = mesh
            .faces
            .iter()
            .map(|f| Aabb::from_points(f.iter().map(|&v| to_array(&mesh.vertices[v])).collect::<Vec<_>>().iter()))
            .collect();
        let bvh = Bvh::build(&boxes);
        SurfaceIndex { mesh, bvh }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.faces.is_empty()
    }

    pub fn face_hit(&self, p: &Vec3, face: usize) -> SurfaceHit {
        let [a, b, c] = self.mesh.faces[face];
        let v = &self.mesh.vertices;
        let w = closest_point_triangle(p, &v[a], &v[b], &v[c]);
        let point = v[a] * w[0] + v[b] * w[1] + v[c] * w[2];
        SurfaceHit {
            face,
            weights: w,
            point,
            dist_sq: (point - p).norm_squared(),
        }
    }

    /// Exact closest point on the mesh; `None` for a mesh without faces.
    pub fn closest(&self, p: &Vec3) -> Option<SurfaceHit> {
        let (face, _) = self.bvh.nearest(&to_array(p), |f| self.face_hit(p, f).dist_sq)?;
        Some(self.face_hit(p, face))
    }

    /// Linear scan over all faces; used as a reference in tests.
    pub fn closest_brute_force(&self, p: &Vec3) -> Option<SurfaceHit> {
        (0..self.mesh.faces.len())
            .map(|f| self.face_hit(p, f))
            .min_by(|a, b| a.dist_sq.total_cmp(&b.dist_sq).then(a.face.cmp(&b.face)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closest_matches_brute_force() {
        let m = generate::torus_grid(2);
        let idx = SurfaceIndex::new(m.boundary_with_positions(m.vertices()));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let p = Vec3::new(rng.gen_range(-0.5..3.5), rng.gen_range(-0.5..3.5), rng.gen_range(-0.5..1.5));
            let a = idx.closest(&p).unwrap();
            let b = idx.closest_brute_force(&p).unwrap();
            assert!((a.dist_sq - b.dist_sq).abs() < 1e-12);
        }
    }

    #[test]
    fn vertex_query_is_exact() {
        let m = generate::five_tet_cube(1.0);
        let idx = SurfaceIndex::new(m.boundary_with_positions(m.vertices()));
        for v in m.vertices() {
            assert_eq!(idx.closest(v).unwrap().dist_sq, 0.0);
        }
    }
}
