//! Small dense geometry kernels shared by the mesh, solver and metrics code.

use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;

/// Signed volume of the tetrahedron `(a, b, c, d)`; positive when `d` lies on
/// the side of `abc` that the right-hand normal points away from.
pub fn tet_signed_volume(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    (b - a).dot(&(c - a).cross(&(d - a))) / 6.0
}

/// Edge matrix with columns `v1 - v0, v2 - v0, v3 - v0`.
pub fn edge_columns(v: &[Vec3; 4]) -> Matrix3<f64> {
    Matrix3::from_columns(&[v[1] - v[0], v[2] - v[0], v[3] - v[0]])
}

pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision
/// Detection, 5.1.5). Returns barycentric weights of the closest point.
pub fn closest_point_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> [f64; 3] {
    let ab = b - a;
    let ac = c - a;
    if ab.cross(&ac).norm_squared() <= 1e-28 * ab.norm_squared() * ac.norm_squared() {
        return closest_on_edges(p, a, b, c);
    }
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return [1.0, 0.0, 0.0];
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return [0.0, 1.0, 0.0];
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = ratio(d1, d1 - d3);
        return [1.0 - v, v, 0.0];
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return [0.0, 0.0, 1.0];
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = ratio(d2, d2 - d6);
        return [1.0 - w, 0.0, w];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = ratio(d4 - d3, (d4 - d3) + (d5 - d6));
        return [0.0, 1.0 - w, w];
    }
    if !(va + vb + vc > 0.0) {
        return closest_on_edges(p, a, b, c);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    [1.0 - v - w, v, w]
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 { (num / den).clamp(0.0, 1.0) } else { 0.0 }
}

// degenerate triangle: best of the three segments
fn closest_on_edges(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> [f64; 3] {
    let seg = |u: &Vec3, v: &Vec3| {
        let e = v - u;
        let t = ratio(e.dot(&(p - u)), e.norm_squared());
        (t, (u + e * t - p).norm_squared())
    };
    let (tab, dab) = seg(a, b);
    let (tbc, dbc) = seg(b, c);
    let (tca, dca) = seg(c, a);
    if dab <= dbc && dab <= dca {
        [1.0 - tab, tab, 0.0]
    } else if dbc <= dca {
        [0.0, 1.0 - tbc, tbc]
    } else {
        [tca, 0.0, 1.0 - tca]
    }
}

/// Euclidean projection of `point` onto the convex hull of up to four points
/// in `R^D`.
///
/// Every face of the simplex (every nonempty vertex subset) is tried: the
/// unconstrained projection onto the face's affine hull is kept when its
/// barycentric weights are non-negative, and the closest such candidate wins.
/// Affinely dependent subsets are skipped; their hull is covered by smaller
/// subsets, so the result stays exact for degenerate simplices.
///
/// Returns the weights (padded with zeros past `verts.len()`) and the squared
/// distance.
pub fn project_onto_simplex<const D: usize>(point: &[f64; D], verts: &[[f64; D]]) -> ([f64; 4], f64) {
    let k = verts.len();
    assert!((1..=4).contains(&k), "simplex must have 1..=4 vertices");
    let mut best_w = [0.0; 4];
    let mut best_d = f64::INFINITY;
    for mask in 1u32..(1u32 << k) {
        let mut idx_buf = [0usize; 4];
        let mut len = 0;
        for i in 0..k {
            if mask & (1 << i) != 0 {
                idx_buf[len] = i;
                len += 1;
            }
        }
        let idx = &idx_buf[..len];
        let Some(local) = affine_projection(point, verts, idx) else {
            continue;
        };
        let mut w = [0.0; 4];
        for (slot, &i) in idx.iter().enumerate() {
            w[i] = local[slot];
        }
        let d = dist_sq_combination(point, verts, &w);
        if d < best_d {
            best_d = d;
            best_w = w;
        }
    }
    (best_w, best_d)
}

/// Projection onto the affine hull of `verts[idx]`, or `None` if the subset is
/// degenerate or the projection falls outside the face.
fn affine_projection<const D: usize>(point: &[f64; D], verts: &[[f64; D]], idx: &[usize]) -> Option<[f64; 4]> {
    let m = idx.len() - 1;
    let mut out = [0.0; 4];
    if m == 0 {
        out[0] = 1.0;
        return Some(out);
    }
    let base = &verts[idx[0]];
    let mut edges = [[0.0; D]; 3];
    for l in 0..m {
        for d in 0..D {
            edges[l][d] = verts[idx[l + 1]][d] - base[d];
        }
    }
    let mut gram = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for a in 0..m {
        for b in 0..m {
            gram[a][b] = (0..D).map(|d| edges[a][d] * edges[b][d]).sum();
        }
        rhs[a] = (0..D).map(|d| edges[a][d] * (point[d] - base[d])).sum();
    }
    let t = solve_small(&gram, &rhs, m)?;
    const FEAS: f64 = -1e-12;
    let mut sum = 0.0;
    for l in 0..m {
        if t[l] < FEAS {
            return None;
        }
        sum += t[l];
    }
    if 1.0 - sum < FEAS {
        return None;
    }
    out[0] = (1.0 - sum).max(0.0);
    for l in 0..m {
        out[l + 1] = t[l].max(0.0);
    }
    let total: f64 = out[..=m].iter().sum();
    for w in out[..=m].iter_mut() {
        *w /= total;
    }
    Some(out)
}

/// Gaussian elimination with partial pivoting on an `m x m` block; rejects
/// near-singular Gram matrices.
fn solve_small(a: &[[f64; 3]; 3], b: &[f64; 3], m: usize) -> Option<[f64; 3]> {
    let scale = (0..m).map(|i| a[i][i]).fold(0.0_f64, f64::max);
    if scale <= 0.0 {
        return None;
    }
    let mut a = *a;
    let mut b = *b;
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-13 * scale {
            return None;
        }
        if piv != col {
            a.swap(piv, col);
            b.swap(piv, col);
        }
        for row in (col + 1)..m {
            let f = a[row][col] / a[col][col];
            for c in col..m {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..m).rev() {
        let mut s = b[row];
        for c in (row + 1)..m {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

fn dist_sq_combination<const D: usize>(point: &[f64; D], verts: &[[f64; D]], w: &[f64; 4]) -> f64 {
    let mut d2 = 0.0;
    for d in 0..D {
        let mut x = 0.0;
        for (l, v) in verts.iter().enumerate() {
            x += w[l] * v[d];
        }
        let r = x - point[d];
        d2 += r * r;
    }
    d2
}

/// Neumaier-compensated sum; the reduction order is the iterator order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn to_array(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_triangles_stay_finite() {
        let p = Vec3::new(0.3, 0.7, -0.2);
        let a = Vec3::new(0.0, 0.0, 0.0);
        let c = Vec3::new(1.0, 0.0, 0.0);
        for (u, v, w) in [(a, a, c), (a, c, a), (c, a, a), (a, a, a), (a, (a + c) * 0.5, c)] {
            let b = closest_point_triangle(&p, &u, &v, &w);
            assert!(b.iter().all(|x| x.is_finite() && *x >= 0.0));
            let q = u * b[0] + v * b[1] + w * b[2];
            let want = if u == v && v == w { a } else { Vec3::new(0.3, 0.0, 0.0) };
            assert!((q - want).norm() < 1e-15, "{q:?}");
        }
    }

    #[test]
    fn unit_right_tet_volume() {
        let o = Vec3::zeros();
        let v = tet_signed_volume(&o, &Vec3::x(), &Vec3::y(), &Vec3::z());
        assert!((v - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn triangle_closest_matches_generic_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let mut r = || Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let (a, b, c, p) = (r(), r(), r(), r() * 2.0);
            let w = closest_point_triangle(&p, &a, &b, &c);
            let q = a * w[0] + b * w[1] + c * w[2];
            let (_, d2) = project_onto_simplex(&to_array(&p), &[to_array(&a), to_array(&b), to_array(&c)]);
            assert!(((q - p).norm_squared() - d2).abs() < 1e-12);
        }
    }

    #[test]
    fn simplex_vertex_and_centroid() {
        let verts = [[0.0; 6], [1.0, 0.0, 0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0, 0.0, 1.0]];
        let (w, d) = project_onto_simplex(&verts[2], &verts);
        assert_eq!(d, 0.0);
        assert!((w[2] - 1.0).abs() < 1e-15);
        let mut c = [0.0; 6];
        for v in &verts {
            for k in 0..6 {
                c[k] += 0.25 * v[k];
            }
        }
        let (w, d) = project_onto_simplex(&c, &verts);
        assert!(d < 1e-28);
        for x in w {
            assert!((x - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_simplex_still_projects() {
        // four collinear points: hull is the segment [0, 3] on the x axis
        let verts: Vec<[f64; 3]> = (0..4).map(|i| [i as f64, 0.0, 0.0]).collect();
        let (_, d) = project_onto_simplex(&[5.0, 1.0, 0.0], &verts);
        assert!((d - 5.0).abs() < 1e-12);
        let (_, d) = project_onto_simplex(&[1.5, 2.0, 0.0], &verts);
        assert!((d - 4.0).abs() < 1e-12);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }
}
