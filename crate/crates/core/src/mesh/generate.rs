//! Procedural tet meshes used by tests, examples and the acceptance suite.

use super::geometry::{tet_signed_volume, Vec3};
use super::TetMesh;

pub fn unit_tet() -> TetMesh {
    TetMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()], vec![[0, 1, 2, 3]]).expect("valid tet")
}

fn cube_corner(bits: usize, edge: f64) -> Vec3 {
    Vec3::new((bits & 1) as f64, ((bits >> 1) & 1) as f64, ((bits >> 2) & 1) as f64) * edge
}

fn orient(vertices: &[Vec3], mut t: [usize; 4]) -> [usize; 4] {
    if tet_signed_volume(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]], &vertices[t[3]]) < 0.0 {
        t.swap(2, 3);
    }
    t
}

/// Cube `[0, edge]^3` split into a central tet and four corner tets.
pub fn five_tet_cube(edge: f64) -> TetMesh {
    let v: Vec<Vec3> = (0..8).map(|b| cube_corner(b, edge)).collect();
    let raw = [[1, 2, 4, 7], [0, 1, 2, 4], [3, 1, 2, 7], [5, 1, 4, 7], [6, 2, 4, 7]];
    let tets = raw.iter().map(|&t| orient(&v, t)).collect();
    TetMesh::new(v, tets).expect("valid cube")
}

/// Axis-aligned box `[0,sx]x[0,sy]x[0,sz]` with `nx*ny*nz` cells, each split
/// into six tets around its main diagonal.
pub fn box_grid(cells: [usize; 3], size: [f64; 3]) -> TetMesh {
    masked_grid(cells, size, |_, _, _| true)
}

/// A `3k x 3k x k` cell block with the central `k x k` column removed: a
/// solid torus of square cross-section, side 3 and height 1.
pub fn torus_grid(k: usize) -> TetMesh {
    masked_grid([3 * k, 3 * k, k], [3.0, 3.0, 1.0], |i, j, _| !((k..2 * k).contains(&i) && (k..2 * k).contains(&j)))
}

/// Grid of Kuhn-subdivided cells; cells for which `keep` is false are
/// dropped along with vertices no remaining tet uses.
pub fn masked_grid<F: Fn(usize, usize, usize) -> bool>(cells: [usize; 3], size: [f64; 3], keep: F) -> TetMesh {
    let [nx, ny, nz] = cells;
    let h = [size[0] / nx as f64, size[1] / ny as f64, size[2] / nz as f64];
    let vid = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);
    let mut all = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                all.push(Vec3::new(i as f64 * h[0], j as f64 * h[1], k as f64 * h[2]));
            }
        }
    }
    const PATHS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut tets = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if !keep(i, j, k) {
                    continue;
                }
                for path in PATHS {
                    let mut c = [i, j, k];
                    let mut t = [vid(i, j, k); 4];
                    for (step, &axis) in path.iter().enumerate() {
                        c[axis] += 1;
                        t[step + 1] = vid(c[0], c[1], c[2]);
                    }
                    tets.push(orient(&all, t));
                }
            }
        }
    }
    compact(all, tets)
}

fn compact(all: Vec<Vec3>, mut tets: Vec<[usize; 4]>) -> TetMesh {
    let mut remap = vec![usize::MAX; all.len()];
    let mut vertices = Vec::new();
    for t in tets.iter_mut() {
        for v in t.iter_mut() {
            if remap[*v] == usize::MAX {
                remap[*v] = vertices.len();
                vertices.push(all[*v]);
            }
            *v = remap[*v];
        }
    }
    TetMesh::new(vertices, tets).expect("generated grid is valid")
}

/// Bends the x axis of a bar into a circular arc of total angle `angle`
/// over length `length`. The centerline `y = 0` keeps its length.
pub fn bend_point(p: &Vec3, length: f64, angle: f64) -> Vec3 {
    if angle == 0.0 {
        return *p;
    }
    let radius = length / angle;
    let phi = p.x / radius;
    let r = radius - p.y;
    Vec3::new(r * phi.sin(), radius - r * phi.cos(), p.z)
}

/// Inverse of [`bend_point`].
pub fn unbend_point(p: &Vec3, length: f64, angle: f64) -> Vec3 {
    if angle == 0.0 {
        return *p;
    }
    let radius = length / angle;
    let dy = radius - p.y;
    let phi = p.x.atan2(dy);
    let r = (p.x * p.x + dy * dy).sqrt();
    Vec3::new(phi * radius, radius - r, p.z)
}

/// Box grid of size `size` centered in y and z, bent by `angle` radians.
pub fn bent_bar(cells: [usize; 3], size: [f64; 3], angle: f64) -> TetMesh {
    let grid = box_grid(cells, size);
    let offset = Vec3::new(0.0, 0.5 * size[1], 0.5 * size[2]);
    let vertices = grid
        .vertices()
        .iter()
        .map(|v| bend_point(&(v - offset), size[0], angle))
        .collect();
    grid.with_vertices(vertices).expect("moderate bend keeps tets positive")
}

/// Applies `f` to every vertex and rebuilds the mesh.
pub fn transformed<F: Fn(&Vec3) -> Vec3>(mesh: &TetMesh, f: F) -> TetMesh {
    mesh.with_vertices(mesh.vertices().iter().map(f).collect())
        .expect("transform keeps tets non-degenerate")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts() {
        let m = box_grid([2, 3, 4], [1.0, 1.0, 1.0]);
        assert_eq!(m.num_tets(), 6 * 24);
        assert_eq!(m.num_vertices(), 3 * 4 * 5);
        assert!(m.reoriented_tets().is_empty());
        assert!((m.total_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn torus_volume() {
        let m = torus_grid(1);
        assert_eq!(m.num_tets(), 6 * 8);
        assert!((m.total_volume() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn bend_round_trip() {
        let p = Vec3::new(1.3, 0.2, -0.4);
        let q = unbend_point(&bend_point(&p, 4.0, 0.8), 4.0, 0.8);
        assert!((p - q).norm() < 1e-14);
    }

    #[test]
    fn bent_bar_keeps_orientation() {
        let m = bent_bar([12, 3, 3], [4.0, 1.0, 1.0], std::f64::consts::FRAC_PI_4);
        assert!(m.reoriented_tets().is_empty());
        assert!(m.tet_volumes().iter().all(|&v| v > 0.0));
    }
}
