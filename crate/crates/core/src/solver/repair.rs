//! Local untangling of inverted tets by minimizing the distortion energy over
//! a small set of free vertices.

use serde::Serialize;

use super::lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsStatus};
use crate::energies::Energy;
use crate::mapping::{count_inversions, mesh_jacobian};
use crate::mesh::geometry::{compensated_sum, Vec3};
use crate::mesh::TetMesh;
use crate::objective::tet_energy_gradient;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairScope {
    /// Vertices of inverted tets plus their 1-ring.
    OneRing,
    /// Vertices of inverted tets only.
    InvertedOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepairOutcome {
    pub inverted_before: usize,
    pub inverted_after: usize,
    pub free_vertices: usize,
    pub local_energy_before: f64,
    pub local_energy_after: f64,
    pub iters: usize,
    pub status: Option<LbfgsStatus>,
}

fn free_set(mesh: &TetMesh, inverted: &[usize], scope: RepairScope) -> Vec<usize> {
    let mut free = vec![false; mesh.num_vertices()];
    for &k in inverted {
        for &v in &mesh.tets()[k] {
            free[v] = true;
        }
    }
    if scope == RepairScope::OneRing {
        let seeds: Vec<usize> = (0..free.len()).filter(|&v| free[v]).collect();
        for v in seeds {
            for &k in mesh.vertex_tets(v) {
                for &u in &mesh.tets()[k] {
                    free[u] = true;
                }
            }
        }
    }
    (0..free.len()).filter(|&v| free[v]).collect()
}

/// Volume-weighted energy of the listed tets.
fn local_energy(mesh: &TetMesh, x: &[Vec3], tets: &[usize], energy: Energy) -> f64 {
    compensated_sum(tets.iter().map(|&k| {
        let f = energy.eval_f(&mesh_jacobian(mesh, x, k)).unwrap_or(f64::INFINITY);
        mesh.tet_volumes()[k] * f
    }))
}

/// Minimizes the energy over tets touching the free vertices, with every
/// other vertex fixed. No-op without inversions.
pub fn repair_inverted(mesh: &TetMesh, x: &mut [Vec3], energy: Energy, scope: RepairScope, cfg: &LbfgsConfig) -> RepairOutcome {
    let inverted = count_inversions(mesh, x);
    let free = free_set(mesh, &inverted, scope);
    let mut slot = vec![usize::MAX; mesh.num_vertices()];
    for (i, &v) in free.iter().enumerate() {
        slot[v] = i;
    }
    let mut touched: Vec<usize> = free.iter().flat_map(|&v| mesh.vertex_tets(v).iter().copied()).collect();
    touched.sort_unstable();
    touched.dedup();
    let before = local_energy(mesh, x, &touched, energy);
    if inverted.is_empty() {
        return RepairOutcome {
            inverted_before: 0,
            inverted_after: 0,
            free_vertices: 0,
            local_energy_before: before,
            local_energy_after: before,
            iters: 0,
            status: None,
        };
    }
    let x0: Vec<f64> = free.iter().flat_map(|&v| [x[v].x, x[v].y, x[v].z]).collect();
    let base: Vec<Vec3> = x.to_vec();
    let place = |vars: &[f64]| {
        let mut y = base.clone();
        for (i, &v) in free.iter().enumerate() {
            y[v] = Vec3::new(vars[3 * i], vars[3 * i + 1], vars[3 * i + 2]);
        }
        y
    };
    let result = lbfgs_minimize(
        |vars| {
            let y = place(vars);
            let f = local_energy(mesh, &y, &touched, energy);
            if !f.is_finite() {
                return None;
            }
            let mut g = vec![0.0; vars.len()];
            for &k in &touched {
                let gk = tet_energy_gradient(mesh, &y, k, energy);
                let vol = mesh.tet_volumes()[k];
                for (l, &v) in mesh.tets()[k].iter().enumerate() {
                    let s = slot[v];
                    if s != usize::MAX {
                        for c in 0..3 {
                            g[3 * s + c] += vol * gk[l][c];
                        }
                    }
                }
            }
            Some((f, g))
        },
        x0,
        cfg,
        &[3 * free.len()],
    );
    let after_x = place(&result.x);
    let after = local_energy(mesh, &after_x, &touched, energy);
    if after <= before {
        x.copy_from_slice(&after_x);
    }
    RepairOutcome {
        inverted_before: inverted.len(),
        inverted_after: count_inversions(mesh, x).len(),
        free_vertices: free.len(),
        local_energy_before: before,
        local_energy_after: after.min(before),
        iters: result.iters,
        status: Some(result.status),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;

    #[test]
    fn no_inversions_is_a_no_op() {
        let m = generate::box_grid([2, 2, 2], [1.0, 1.0, 1.0]);
        let mut x = m.vertices().to_vec();
        let out = repair_inverted(&m, &mut x, Energy::Arap, RepairScope::OneRing, &LbfgsConfig::default());
        assert_eq!(out.inverted_before, 0);
        assert_eq!(x, m.vertices());
    }

    #[test]
    fn single_flipped_vertex_is_repaired() {
        let m = generate::box_grid([3, 3, 3], [1.0, 1.0, 1.0]);
        let v = (0..m.num_vertices()).find(|&v| !m.is_boundary_vertex(v)).unwrap();
        let mut x = m.vertices().to_vec();
        // push one interior vertex through its neighbours
        x[v] += Vec3::new(0.5, 0.45, 0.4);
        let before = count_inversions(&m, &x).len();
        assert!(before > 0);
        let snapshot = x.clone();
        let out = repair_inverted(&m, &mut x, Energy::Arap, RepairScope::OneRing, &LbfgsConfig::default());
        assert_eq!(out.inverted_after, 0);
        assert!(out.local_energy_after <= out.local_energy_before);
        let free = free_set(&m, &count_inversions(&m, &snapshot), RepairScope::OneRing);
        for u in 0..m.num_vertices() {
            if !free.contains(&u) {
                assert_eq!(x[u], snapshot[u]);
            }
        }
    }

    #[test]
    fn swapped_images_are_repaired() {
        let m = generate::box_grid([2, 2, 2], [1.0, 1.0, 1.0]);
        let mut x = m.vertices().to_vec();
        let t = m.tets()[0];
        x.swap(t[0], t[1]);
        assert!(!count_inversions(&m, &x).is_empty());
        let out = repair_inverted(&m, &mut x, Energy::Arap, RepairScope::OneRing, &LbfgsConfig::default());
        assert_eq!(out.inverted_after, 0, "{out:?}");
    }

    #[test]
    fn inverted_only_scope_moves_only_inverted_vertices() {
        let m = generate::box_grid([3, 3, 3], [1.0, 1.0, 1.0]);
        let v = (0..m.num_vertices()).find(|&v| !m.is_boundary_vertex(v)).unwrap();
        let mut x = m.vertices().to_vec();
        x[v] += Vec3::new(0.5, 0.45, 0.4);
        let inv = count_inversions(&m, &x);
        let allowed = free_set(&m, &inv, RepairScope::InvertedOnly);
        let snapshot = x.clone();
        let cfg = LbfgsConfig { max_iters: 100, ..Default::default() };
        repair_inverted(&m, &mut x, Energy::Arap, RepairScope::InvertedOnly, &cfg);
        for u in 0..m.num_vertices() {
            if !allowed.contains(&u) {
                assert_eq!(x[u], snapshot[u]);
            }
        }
        assert!(count_inversions(&m, &x).len() < inv.len());
    }
}
