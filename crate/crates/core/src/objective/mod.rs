//! The symmetric map objective and its gradient with respect to the vertex
//! images.
//!
//! Every term is a sum of two directional parts, `1 -> 2` and `2 -> 1`, each
//! computed by the same code with the roles of the meshes exchanged. Index
//! `d` below is a direction: `d = 0` maps mesh 1 into mesh 2, `d = 1` the
//! reverse. Reductions are sequential compensated sums over per-element
//! values, so results do not depend on thread count or on which mesh is
//! called "first".

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::energies::{signed_svd, Energy};
use crate::mapping::{mesh_jacobian, BarycentricMap};
use crate::mesh::geometry::{compensated_sum, Vec3};
use crate::mesh::{SurfaceIndex, TetMesh};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let ok = (0.0..=1.0).contains(&self.alpha) && self.beta >= 0.0 && self.gamma >= 0.0;
        if ok && self.beta.is_finite() && self.gamma.is_finite() {
            Ok(())
        } else {
            Err(ObjectiveError::BadWeights(*self))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EnergyBreakdown {
    pub e_arap: f64,
    pub e_r: f64,
    pub e_p: f64,
    pub e_q: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn combine(terms: [&DirectionTerms; 2], w: &ObjectiveWeights) -> Self {
        let e_arap = terms[0].arap + terms[1].arap;
        let e_r = terms[0].r + terms[1].r;
        let e_q = terms[0].q + terms[1].q;
        let e_p = (terms[0].p_fwd + terms[0].p_bwd) + (terms[1].p_fwd + terms[1].p_bwd);
        EnergyBreakdown {
            e_arap,
            e_r,
            e_p,
            e_q,
            total: w.alpha * e_arap + (1.0 - w.alpha) * e_r + w.gamma * e_p + w.beta * e_q,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("objective term {term} is not finite")]
    NonFinite { term: &'static str },
    #[error("invalid objective weights {0:?}")]
    BadWeights(ObjectiveWeights),
}

/// Closest-point data held fixed while differentiating the projection terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionFeet {
    /// Per direction, per source boundary vertex: the closest point of the
    /// target rest boundary to the mapped vertex.
    pub forward: [Vec<Vec3>; 2],
    /// Per direction, per source boundary vertex: face of the deformed target
    /// boundary and barycentric weights of the closest point to the rest
    /// vertex.
    pub backward: [Vec<(usize, [f64; 3])>; 2],
}

#[derive(Debug, Clone, Default)]
struct DirectionTerms {
    arap: f64,
    q: f64,
    r: f64,
    p_fwd: f64,
    p_bwd: f64,
}

/// Directional gradients: `own` terms act on this direction's `X`, `cross`
/// terms act on the opposite direction's `X`.
#[derive(Debug, Clone)]
struct DirectionGrad {
    arap: Vec<Vec3>,
    q: Vec<Vec3>,
    p_fwd: Vec<Vec3>,
    r_cross: Vec<Vec3>,
    p_bwd_cross: Vec<Vec3>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub breakdown: EnergyBreakdown,
    /// Gradients with respect to `X12` and `X21`.
    pub grad: [Vec<Vec3>; 2],
}

/// Fixed data of a mesh pair: meshes, distortion function and the rest
/// boundary closest-point indices.
pub struct Objective<'a> {
    pub meshes: [&'a TetMesh; 2],
    pub energy: Energy,
    rest_boundary: [SurfaceIndex; 2],
}

impl<'a> Objective<'a> {
    pub fn new(m1: &'a TetMesh, m2: &'a TetMesh, energy: Energy) -> Self {
        let idx = |m: &TetMesh| SurfaceIndex::new(m.boundary_with_positions(m.vertices()));
        Objective {
            meshes: [m1, m2],
            energy,
            rest_boundary: [idx(m1), idx(m2)],
        }
    }

    fn src(&self, d: usize) -> &TetMesh {
        self.meshes[d]
    }

    fn dst(&self, d: usize) -> &TetMesh {
        self.meshes[1 - d]
    }

    /// Closest points for the current `X` in both directions.
    pub fn projection_feet(&self, x: [&[Vec3]; 2]) -> ProjectionFeet {
        let fwd = |d: usize| {
            let src = self.src(d);
            let target = &self.rest_boundary[1 - d];
            src.boundary()
                .vertices
                .par_iter()
                .map(|&v| target.closest(&x[d][v]).expect("boundary has faces").point)
                .collect::<Vec<_>>()
        };
        let bwd = |d: usize| {
            let src = self.src(d);
            let deformed = SurfaceIndex::new(self.dst(d).boundary_with_positions(x[1 - d]));
            src.boundary()
                .vertices
                .par_iter()
                .map(|&v| {
                    let h = deformed.closest(&src.vertices()[v]).expect("boundary has faces");
                    (h.face, h.weights)
                })
                .collect::<Vec<_>>()
        };
        ProjectionFeet {
            forward: [fwd(0), fwd(1)],
            backward: [bwd(0), bwd(1)],
        }
    }

    pub fn energy(&self, p: [&BarycentricMap; 2], x: [&[Vec3]; 2], w: &ObjectiveWeights) -> Result<EnergyBreakdown, ObjectiveError> {
        let feet = self.projection_feet(x);
        self.energy_with_feet(p, x, w, &feet)
    }

    pub fn energy_with_feet(
        &self,
        p: [&BarycentricMap; 2],
        x: [&[Vec3]; 2],
        w: &ObjectiveWeights,
        feet: &ProjectionFeet,
    ) -> Result<EnergyBreakdown, ObjectiveError> {
        let t0 = self.direction_terms(0, p, x, feet)?;
        let t1 = self.direction_terms(1, p, x, feet)?;
        finite(EnergyBreakdown::combine([&t0, &t1], w))
    }

    /// Energy and gradient with freshly computed projection feet.
    pub fn evaluate(&self, p: [&BarycentricMap; 2], x: [&[Vec3]; 2], w: &ObjectiveWeights) -> Result<Evaluation, ObjectiveError> {
        let feet = self.projection_feet(x);
        self.evaluate_with_feet(p, x, w, &feet)
    }

    pub fn evaluate_with_feet(
        &self,
        p: [&BarycentricMap; 2],
        x: [&[Vec3]; 2],
        w: &ObjectiveWeights,
        feet: &ProjectionFeet,
    ) -> Result<Evaluation, ObjectiveError> {
        let t0 = self.direction_terms(0, p, x, feet)?;
        let t1 = self.direction_terms(1, p, x, feet)?;
        let breakdown = finite(EnergyBreakdown::combine([&t0, &t1], w))?;
        let g = [self.direction_grad(0, p, x, feet), self.direction_grad(1, p, x, feet)];
        let grad = [assemble(&g[0], &g[1], w), assemble(&g[1], &g[0], w)];
        if grad.iter().flatten().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(ObjectiveError::NonFinite { term: "gradient" });
        }
        Ok(Evaluation { breakdown, grad })
    }

    fn direction_terms(&self, d: usize, p: [&BarycentricMap; 2], x: [&[Vec3]; 2], feet: &ProjectionFeet) -> Result<DirectionTerms, ObjectiveError> {
        let src = self.src(d);
        let dst = self.dst(d);
        let (ci, cj) = (src.total_volume(), dst.total_volume());
        let arap = arap_energy(src, x[d], self.energy) / (2.0 * ci);
        let masses = src.vertex_masses();
        let q = compensated_sum((0..src.num_vertices()).into_par_iter().map(|v| {
            let target = p[d].rows[v].point(dst.tets(), dst.vertices());
            masses[v] * (x[d][v] - target).norm_squared()
        }).collect::<Vec<_>>()) / (ci * cj);
        let r = compensated_sum((0..src.num_vertices()).into_par_iter().map(|v| {
            let back = p[d].rows[v].point(dst.tets(), x[1 - d]);
            masses[v] * (back - src.vertices()[v]).norm_squared()
        }).collect::<Vec<_>>()) / (ci * ci);
        let (p_fwd, p_bwd) = self.projection_terms(d, x, feet);
        let t = DirectionTerms { arap, q, r, p_fwd, p_bwd };
        for (v, name) in [(t.arap, "E_ARAP"), (t.q, "E_Q"), (t.r, "E_R"), (t.p_fwd + t.p_bwd, "E_P")] {
            if !v.is_finite() {
                return Err(ObjectiveError::NonFinite { term: name });
            }
        }
        Ok(t)
    }

    fn projection_terms(&self, d: usize, x: [&[Vec3]; 2], feet: &ProjectionFeet) -> (f64, f64) {
        let src = self.src(d);
        let dst = self.dst(d);
        let bverts = &src.boundary().vertices;
        let area = src.boundary_masses();
        let s = src.total_surface_area();
        let fwd = compensated_sum(bverts.iter().enumerate().map(|(k, &v)| area[v] * (x[d][v] - feet.forward[d][k]).norm_squared())) / s;
        let bwd = compensated_sum(bverts.iter().enumerate().map(|(k, &v)| {
            let foot = face_point(dst, x[1 - d], feet.backward[d][k]);
            area[v] * (src.vertices()[v] - foot).norm_squared()
        })) / s;
        (fwd, bwd)
    }

    fn direction_grad(&self, d: usize, p: [&BarycentricMap; 2], x: [&[Vec3]; 2], feet: &ProjectionFeet) -> DirectionGrad {
        let src = self.src(d);
        let dst = self.dst(d);
        let (ci, cj) = (src.total_volume(), dst.total_volume());
        let n_src = src.num_vertices();
        let n_dst = dst.num_vertices();
        let masses = src.vertex_masses();

        let mut arap = arap_gradient(src, x[d], self.energy);
        let scale = 1.0 / (2.0 * ci);
        arap.iter_mut().for_each(|g| *g *= scale);

        let q: Vec<Vec3> = (0..n_src)
            .into_par_iter()
            .map(|v| {
                let target = p[d].rows[v].point(dst.tets(), dst.vertices());
                (x[d][v] - target) * (2.0 * masses[v] / (ci * cj))
            })
            .collect();

        let mut r_cross = vec![Vec3::zeros(); n_dst];
        for v in 0..n_src {
            let row = p[d].rows[v];
            let t = dst.tets()[row.tet];
            let resid = row.point(dst.tets(), x[1 - d]) - src.vertices()[v];
            let c = 2.0 * masses[v] / (ci * ci);
            for l in 0..4 {
                r_cross[t[l]] += resid * (c * row.weights[l]);
            }
        }

        let area = src.boundary_masses();
        let s = src.total_surface_area();
        let mut p_fwd = vec![Vec3::zeros(); n_src];
        let mut p_bwd_cross = vec![Vec3::zeros(); n_dst];
        for (k, &v) in src.boundary().vertices.iter().enumerate() {
            p_fwd[v] = (x[d][v] - feet.forward[d][k]) * (2.0 * area[v] / s);
            let (face, bw) = feet.backward[d][k];
            let f = dst.boundary().faces[face];
            let resid = src.vertices()[v] - face_point(dst, x[1 - d], (face, bw));
            for l in 0..3 {
                p_bwd_cross[f[l]] -= resid * (2.0 * area[v] / s * bw[l]);
            }
        }
        DirectionGrad { arap, q, p_fwd, r_cross, p_bwd_cross }
    }
}

fn finite(b: EnergyBreakdown) -> Result<EnergyBreakdown, ObjectiveError> {
    if b.total.is_finite() {
        Ok(b)
    } else {
        Err(ObjectiveError::NonFinite { term: "total" })
    }
}

fn face_point(mesh: &TetMesh, positions: &[Vec3], (face, w): (usize, [f64; 3])) -> Vec3 {
    let f = mesh.boundary().faces[face];
    positions[f[0]] * w[0] + positions[f[1]] * w[1] + positions[f[2]] * w[2]
}

/// Gradient for one direction's `X`: its own terms plus the cross terms of
/// the opposite direction, summed in a fixed order.
fn assemble(own: &DirectionGrad, other: &DirectionGrad, w: &ObjectiveWeights) -> Vec<Vec3> {
    (0..own.arap.len())
        .map(|v| {
            own.arap[v] * w.alpha + own.q[v] * w.beta + own.p_fwd[v] * w.gamma + other.r_cross[v] * (1.0 - w.alpha)
                + other.p_bwd_cross[v] * w.gamma
        })
        .collect()
}

/// `sum_k v(T_k) f(sigma(J_k))` without the `1/(2c)` factor.
pub fn arap_energy(mesh: &TetMesh, x: &[Vec3], energy: Energy) -> f64 {
    compensated_sum(per_tet_energy(mesh, x, energy).iter().zip(mesh.tet_volumes()).map(|(f, v)| f * v))
}

/// `f(sigma(J_k))` for every tet.
pub fn per_tet_energy(mesh: &TetMesh, x: &[Vec3], energy: Energy) -> Vec<f64> {
    (0..mesh.num_tets())
        .into_par_iter()
        .map(|k| match signed_svd(&mesh_jacobian(mesh, x, k)) {
            Ok(s) => energy.f(&s.sigma),
            Err(_) => f64::NAN,
        })
        .collect()
}

/// Gradient of one tet's `f(J)` with respect to its four mapped vertices.
pub fn tet_energy_gradient(mesh: &TetMesh, x: &[Vec3], k: usize, energy: Energy) -> [Vec3; 4] {
    let nan = Vec3::repeat(f64::NAN);
    let Ok(svd) = signed_svd(&mesh_jacobian(mesh, x, k)) else {
        return [nan; 4];
    };
    let g: Matrix3<f64> = energy.grad_j(&svd);
    let h = g * mesh.rest_inverse(k).transpose();
    let c = [h.column(0).into_owned(), h.column(1).into_owned(), h.column(2).into_owned()];
    [-(c[0] + c[1] + c[2]), c[0], c[1], c[2]]
}

/// Gradient of [`arap_energy`] with respect to every vertex image.
pub fn arap_gradient(mesh: &TetMesh, x: &[Vec3], energy: Energy) -> Vec<Vec3> {
    let per_tet: Vec<[Vec3; 4]> = (0..mesh.num_tets())
        .into_par_iter()
        .map(|k| {
            let vol = mesh.tet_volumes()[k];
            tet_energy_gradient(mesh, x, k, energy).map(|g| g * vol)
        })
        .collect();
    let mut out = vec![Vec3::zeros(); mesh.num_vertices()];
    for (k, g) in per_tet.iter().enumerate() {
        for (l, &v) in mesh.tets()[k].iter().enumerate() {
            out[v] += g[l];
        }
    }
    out
}

/// The four terms and total of the objective in one call.
pub fn total_energy(
    m1: &TetMesh,
    m2: &TetMesh,
    p: [&BarycentricMap; 2],
    x: [&[Vec3]; 2],
    w: &ObjectiveWeights,
    energy: Energy,
) -> Result<EnergyBreakdown, ObjectiveError> {
    Objective::new(m1, m2, energy).energy(p, x, w)
}
