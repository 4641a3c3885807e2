use std::collections::HashMap;

use super::geometry::Vec3;
use super::surface::TriangleMesh;
use super::MeshError;

/// Local faces of a positively oriented tet, wound so their normals point
/// away from the opposite vertex. Entry `l` is the face opposite vertex `l`.
pub const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

#[derive(Debug, Clone)]
pub struct BoundarySurface {
    /// Outward-oriented boundary triangles, ordered by (tet, local face).
    pub faces: Vec<[usize; 3]>,
    /// Tet owning each boundary face.
    pub face_tet: Vec<usize>,
    /// Index of the tet vertex opposite each boundary face.
    pub face_opposite: Vec<usize>,
    /// Sorted boundary vertex ids.
    pub vertices: Vec<usize>,
    pub is_boundary: Vec<bool>,
    pub num_edges: usize,
}

impl BoundarySurface {
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.num_edges as i64 + self.faces.len() as i64
    }

    pub fn to_triangle_mesh(&self, positions: &[Vec3]) -> TriangleMesh {
        TriangleMesh {
            vertices: positions.to_vec(),
            faces: self.faces.clone(),
        }
    }

    /// Barycentric weights over the owning tet's four vertices for a point
    /// given by weights over boundary face `f`.
    pub fn face_to_tet_weights(&self, f: usize, w: [f64; 3]) -> [f64; 4] {
        let local = TET_FACES[self.face_opposite[f]];
        let mut out = [0.0; 4];
        for (k, &l) in local.iter().enumerate() {
            out[l] = w[k];
        }
        out
    }
}

/// Faces used by exactly one tet, oriented outward. Fails if a boundary edge
/// is not shared by exactly two boundary faces.
pub fn extract_boundary(num_vertices: usize, tets: &[[usize; 4]]) -> Result<BoundarySurface, MeshError> {
    let mut count: HashMap<[usize; 3], u32> = HashMap::with_capacity(tets.len() * 4);
    for t in tets {
        for lf in TET_FACES {
            *count.entry(sorted_face([t[lf[0]], t[lf[1]], t[lf[2]]])).or_insert(0) += 1;
        }
    }
    let mut faces = Vec::new();
    let mut face_tet = Vec::new();
    let mut face_opposite = Vec::new();
    for (k, t) in tets.iter().enumerate() {
        for (l, lf) in TET_FACES.iter().enumerate() {
            let f = [t[lf[0]], t[lf[1]], t[lf[2]]];
            if count[&sorted_face(f)] == 1 {
                faces.push(f);
                face_tet.push(k);
                face_opposite.push(l);
            }
        }
    }

    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for f in &faces {
        for e in 0..3 {
            let (a, b) = (f[e], f[(e + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut bad: Vec<_> = edges.iter().filter(|(_, &c)| c != 2).map(|(&e, &c)| (e, c)).collect();
    bad.sort_unstable();
    if let Some(&((a, b), c)) = bad.first() {
        return Err(MeshError::NonManifoldEdge(a, b, c));
    }

    let mut is_boundary = vec![false; num_vertices];
    for f in &faces {
        for &v in f {
            is_boundary[v] = true;
        }
    }
    let vertices = (0..num_vertices).filter(|&v| is_boundary[v]).collect();
    Ok(BoundarySurface {
        faces,
        face_tet,
        face_opposite,
        vertices,
        is_boundary,
        num_edges: edges.len(),
    })
}

fn sorted_face(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;
    use crate::mesh::geometry::tet_signed_volume;

    #[test]
    fn faces_point_outward() {
        let m = generate::box_grid([3, 2, 2], [1.0, 1.0, 1.0]);
        let b = m.boundary();
        for (i, f) in b.faces.iter().enumerate() {
            let t = m.tets()[b.face_tet[i]];
            let opp = m.vertices()[t[b.face_opposite[i]]];
            let v = m.vertices();
            // the opposite vertex sits behind the outward face
            assert!(tet_signed_volume(&v[f[0]], &v[f[1]], &v[f[2]], &opp) < 0.0);
        }
    }

    #[test]
    fn closed_surface_euler_characteristics() {
        let cube = generate::box_grid([3, 3, 3], [1.0, 1.0, 1.0]);
        assert_eq!(cube.boundary().euler_characteristic(), 2);
        let torus = generate::torus_grid(2);
        assert_eq!(torus.boundary().euler_characteristic(), 0);
    }

    #[test]
    fn non_manifold_edge_rejected() {
        // two tets sharing only an edge
        let v = vec![
            Vec3::zeros(),
            Vec3::z(),
            Vec3::x(),
            Vec3::y(),
            -Vec3::x(),
            -Vec3::y(),
        ];
        let err = crate::mesh::TetMesh::new(v, vec![[0, 2, 3, 1], [0, 4, 5, 1]]).unwrap_err();
        assert!(matches!(err, MeshError::NonManifoldEdge(0, 1, 4)), "{err}");
    }

    #[test]
    fn face_weights_lift_to_tet() {
        let m = generate::unit_tet();
        let b = m.boundary();
        for f in 0..4 {
            let w = b.face_to_tet_weights(f, [0.2, 0.3, 0.5]);
            assert_eq!(w[b.face_opposite[f]], 0.0);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }
}
