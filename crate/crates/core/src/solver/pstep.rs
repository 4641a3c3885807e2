//! Row-wise update of the barycentric maps.
//!
//! For direction `i -> j`, the `P`-dependent part of the objective is, per
//! source vertex `v`,
//! `m_v [ w_Q^2 |X_ij(v) - P_v V_j|^2 + w_R^2 |P_v X_ji - V_i(v)|^2 ]`,
//! a squared distance in `R^6` between the stacked point
//! `[w_Q X_ij(v); w_R V_i(v)]` and the lifted tet mesh with vertices
//! `[w_Q V_j; w_R X_ji]`.

use rayon::prelude::*;

use crate::mapping::{BarycentricMap, MapRow};
use crate::mesh::bvh::{Aabb, Bvh};
use crate::mesh::geometry::{project_onto_simplex, Vec3};
use crate::mesh::TetMesh;

/// Stacking weights `(w_Q, w_R)` for direction `i -> j`.
pub fn stacking_weights(alpha: f64, beta: f64, ci: f64, cj: f64) -> (f64, f64) {
    ((beta / (ci * cj)).sqrt(), ((1.0 - alpha) / (ci * ci)).sqrt())
}

fn lift(a: &Vec3, b: &Vec3, wa: f64, wb: f64) -> [f64; 6] {
    [wa * a.x, wa * a.y, wa * a.z, wb * b.x, wb * b.y, wb * b.z]
}

/// The target tet mesh lifted to `R^6`.
pub struct LiftedMesh<'a> {
    target: &'a TetMesh,
    points: Vec<[f64; 6]>,
    tet_bvh: Bvh<6>,
    face_bvh: Bvh<6>,
}

impl<'a> LiftedMesh<'a> {
    /// `x_back` is `X_ji`, indexed by target vertices.
    pub fn new(target: &'a TetMesh, x_back: &[Vec3], w_q: f64, w_r: f64) -> Self {
        let points: Vec<[f64; 6]> = target
            .vertices()
            .iter()
            .zip(x_back)
            .map(|(v, x)| lift(v, x, w_q, w_r))
            .collect();
        let tet_boxes: Vec<Aabb<6>> = target
            .tets()
            .iter()
            .map(|t| Aabb::from_points(t.iter().map(|&v| &points[v])))
            .collect();
        let face_boxes: Vec<Aabb<6>> = target
            .boundary()
            .faces
            .iter()
            .map(|f| Aabb::from_points(f.iter().map(|&v| &points[v])))
            .collect();
        LiftedMesh {
            target,
            tet_bvh: Bvh::build(&tet_boxes),
            face_bvh: Bvh::build(&face_boxes),
            points,
        }
    }

    fn tet_points(&self, k: usize) -> [[f64; 6]; 4] {
        self.target.tets()[k].map(|v| self.points[v])
    }

    fn face_points(&self, f: usize) -> [[f64; 6]; 3] {
        self.target.boundary().faces[f].map(|v| self.points[v])
    }

    /// Closest point of the lifted volume.
    pub fn project(&self, q: &[f64; 6]) -> (MapRow, f64) {
        let (tet, _) = self
            .tet_bvh
            .nearest(q, |k| project_onto_simplex(q, &self.tet_points(k)).1)
            .expect("target has tets");
        let (weights, d) = project_onto_simplex(q, &self.tet_points(tet));
        (MapRow { tet, weights }, d)
    }

    /// Closest point of the lifted boundary surface, expressed in the owning
    /// tet.
    pub fn project_boundary(&self, q: &[f64; 6]) -> (MapRow, f64) {
        let (face, _) = self
            .face_bvh
            .nearest(q, |f| project_onto_simplex(q, &self.face_points(f)).1)
            .expect("target has boundary faces");
        let (w, d) = project_onto_simplex(q, &self.face_points(face));
        let b = self.target.boundary();
        let row = MapRow {
            tet: b.face_tet[face],
            weights: b.face_to_tet_weights(face, [w[0], w[1], w[2]]),
        };
        (row, d)
    }

    /// Squared distance from `q` to the lifted point of an existing row.
    pub fn row_dist_sq(&self, q: &[f64; 6], row: &MapRow) -> f64 {
        let p = self.tet_points(row.tet);
        let mut d2 = 0.0;
        for c in 0..6 {
            let mut x = 0.0;
            for l in 0..4 {
                x += row.weights[l] * p[l][c];
            }
            d2 += (x - q[c]).powi(2);
        }
        d2
    }
}

/// How each source row is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowMode {
    Volume,
    Boundary,
    Frozen,
}

/// Updates `p` (direction `src -> dst`) row by row. A row is replaced only
/// when the new point is strictly closer. Returns the number of changed rows.
#[allow(clippy::too_many_arguments)]
pub fn p_step_direction(
    src: &TetMesh,
    dst: &TetMesh,
    p: &mut BarycentricMap,
    x_fwd: &[Vec3],
    x_back: &[Vec3],
    alpha: f64,
    beta: f64,
    mode: impl Fn(usize) -> RowMode + Sync,
) -> usize {
    let (w_q, w_r) = stacking_weights(alpha, beta, src.total_volume(), dst.total_volume());
    let lifted = LiftedMesh::new(dst, x_back, w_q, w_r);
    let updates: Vec<Option<MapRow>> = (0..src.num_vertices())
        .into_par_iter()
        .map(|v| {
            let m = mode(v);
            if m == RowMode::Frozen {
                return None;
            }
            let q = lift(&x_fwd[v], &src.vertices()[v], w_q, w_r);
            let (row, d) = match m {
                RowMode::Boundary => lifted.project_boundary(&q),
                _ => lifted.project(&q),
            };
            (d < lifted.row_dist_sq(&q, &p.rows[v])).then_some(row)
        })
        .collect();
    let mut changed = 0;
    for (v, u) in updates.into_iter().enumerate() {
        if let Some(row) = u {
            p.rows[v] = row;
            changed += 1;
        }
    }
    changed
}

/// Stacked query point for source vertex `v`; exposed for verification.
pub fn query_point(src: &TetMesh, x_fwd: &[Vec3], v: usize, w_q: f64, w_r: f64) -> [f64; 6] {
    lift(&x_fwd[v], &src.vertices()[v], w_q, w_r)
}
