//! Map quality measures: boundary fit, inversions, normalized Jacobian
//! determinant and per-tet distortion export.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::energies::{signed_svd, Energy};
use crate::mapping::{count_inversions, mesh_jacobian};
use crate::mesh::geometry::{compensated_sum, Vec3};
use crate::mesh::{SurfaceIndex, TetMesh, TriangleMesh};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mesh has no faces to measure distance against")]
    NoFaces,
    #[error("bounding box diagonal is zero")]
    ZeroDiagonal,
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapMetrics {
    pub d_max: f64,
    pub d_avg: f64,
    pub d_max_hat: f64,
    pub d_avg_hat: f64,
    pub n_inv: usize,
    pub det_j_hat_mean: f64,
    pub det_j_hat_std: f64,
    pub e_arap: f64,
    pub e_r: f64,
}

fn face_vertices(m: &TriangleMesh) -> Vec<usize> {
    let mut v: Vec<usize> = m.faces.iter().flatten().copied().collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn distances(from: &TriangleMesh, to: &SurfaceIndex) -> Vec<f64> {
    face_vertices(from)
        .par_iter()
        .map(|&v| to.closest(&from.vertices[v]).expect("nonempty").dist_sq.sqrt())
        .collect()
}

/// Symmetric vertex-to-surface Hausdorff and chamfer distances `(d_max, d_avg)`.
/// Only vertices referenced by faces are sampled.
pub fn chamfer_hausdorff(a: &TriangleMesh, b: &TriangleMesh) -> Result<(f64, f64), MetricsError> {
    if a.faces.is_empty() || b.faces.is_empty() {
        return Err(MetricsError::NoFaces);
    }
    let ab = distances(a, &SurfaceIndex::new(b.clone()));
    let ba = distances(b, &SurfaceIndex::new(a.clone()));
    let d_max = ab.iter().chain(&ba).fold(0.0f64, |m, &d| m.max(d));
    let n = (ab.len() + ba.len()) as f64;
    // sum each side separately so swapping arguments is exact
    let d_avg = (compensated_sum(ab.iter().copied()) + compensated_sum(ba.iter().copied())) / n;
    Ok((d_max, d_avg))
}

pub fn normalize_by_bbox(d: f64, target: &TetMesh) -> Result<f64, MetricsError> {
    let diag = target.bbox_diagonal();
    if diag <= 0.0 {
        return Err(MetricsError::ZeroDiagonal);
    }
    Ok(d / diag)
}

/// Determinant of `j` with unit-length columns; 0 if a column vanishes.
pub fn normalized_det(j: &Matrix3<f64>) -> f64 {
    let mut jh = *j;
    for c in 0..3 {
        let n = j.column(c).norm();
        if n == 0.0 || !n.is_finite() {
            return 0.0;
        }
        jh.set_column(c, &(j.column(c) / n));
    }
    jh.determinant()
}

/// Per-tet normalized Jacobian determinants with their volume-weighted mean
/// and standard deviation.
pub fn normalized_jacobian_det(mesh: &TetMesh, x: &[Vec3]) -> (Vec<f64>, f64, f64) {
    let dets: Vec<f64> = (0..mesh.num_tets())
        .into_par_iter()
        .map(|k| normalized_det(&mesh_jacobian(mesh, x, k)))
        .collect();
    let vols = mesh.tet_volumes();
    let total = compensated_sum(vols.iter().copied());
    let mean = compensated_sum(dets.iter().zip(vols).map(|(d, v)| d * v)) / total;
    let var = compensated_sum(dets.iter().zip(vols).map(|(d, v)| v * (d - mean).powi(2))) / total;
    (dets, mean, var.sqrt())
}

/// Volume-weighted mean of `prod sigma` (signed volume ratio).
pub fn mean_volume_ratio(mesh: &TetMesh, x: &[Vec3]) -> f64 {
    let vols = mesh.tet_volumes();
    let dets: Vec<f64> = (0..mesh.num_tets())
        .into_par_iter()
        .map(|k| mesh_jacobian(mesh, x, k).determinant())
        .collect();
    compensated_sum(dets.iter().zip(vols).map(|(d, v)| d * v)) / compensated_sum(vols.iter().copied())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetDistortion {
    /// `sum (|sigma_i| - 1)^2`.
    pub abs_arap: f64,
    /// `sum (sigma_i - 1)^2` with signed singular values.
    pub signed_arap: f64,
    pub det_j_hat: f64,
    /// The chosen distortion function.
    pub energy: f64,
}

pub fn per_tet_distortion(mesh: &TetMesh, x: &[Vec3], energy: Energy) -> Vec<TetDistortion> {
    (0..mesh.num_tets())
        .into_par_iter()
        .map(|k| {
            let j = mesh_jacobian(mesh, x, k);
            let det_j_hat = normalized_det(&j);
            match signed_svd(&j) {
                Ok(s) => TetDistortion {
                    abs_arap: s.sigma.iter().map(|v| (v.abs() - 1.0).powi(2)).sum(),
                    signed_arap: Energy::Arap.f(&s.sigma),
                    det_j_hat,
                    energy: energy.f(&s.sigma),
                },
                Err(_) => TetDistortion {
                    abs_arap: f64::NAN,
                    signed_arap: f64::NAN,
                    det_j_hat,
                    energy: f64::NAN,
                },
            }
        })
        .collect()
}

pub fn distortion_csv(rows: &[TetDistortion]) -> String {
    let mut s = String::from("tet,abs_arap,signed_arap,det_j_hat,energy\n");
    for (k, r) in rows.iter().enumerate() {
        writeln!(s, "{k},{:.16e},{:.16e},{:.16e},{:.16e}", r.abs_arap, r.signed_arap, r.det_j_hat, r.energy).unwrap();
    }
    s
}

pub fn write_distortion_csv(rows: &[TetDistortion], path: &Path) -> Result<(), MetricsError> {
    std::fs::write(path, distortion_csv(rows)).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Metrics of the map `src -> dst` given by vertex images `x`.
pub fn map_metrics(src: &TetMesh, dst: &TetMesh, x: &[Vec3], e_arap: f64, e_r: f64) -> Result<MapMetrics, MetricsError> {
    let mapped = src.boundary_with_positions(x);
    let target = dst.boundary_with_positions(dst.vertices());
    let (d_max, d_avg) = chamfer_hausdorff(&mapped, &target)?;
    let (_, det_j_hat_mean, det_j_hat_std) = normalized_jacobian_det(src, x);
    Ok(MapMetrics {
        d_max,
        d_avg,
        d_max_hat: normalize_by_bbox(d_max, dst)?,
        d_avg_hat: normalize_by_bbox(d_avg, dst)?,
        n_inv: count_inversions(src, x).len(),
        det_j_hat_mean,
        det_j_hat_std,
        e_arap,
        e_r,
    })
}
