//! Numerical property analysis of the catalog: symmetry checks, minimizers
//! of `f^Sym`, classification and level-set sampling.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::catalog::Energy;
use super::svd::signed_svd;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyProperties {
    pub favors_isometry: bool,
    pub preserves_structure: bool,
    pub nonsingular: bool,
    pub sigma_min: [f64; 3],
    pub f_sym_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelSetKind {
    F,
    FSym,
}

/// Relative violation of `g(sigma) = (prod sigma) g(1/sigma)`.
pub fn symmetry_violation<G: Fn(&Vector3<f64>) -> f64>(g: G, s: &Vector3<f64>) -> f64 {
    let lhs = g(s);
    let rhs = s.product().abs() * g(&s.map(|x| 1.0 / x));
    (lhs - rhs).abs() / lhs.abs().max(1e-12)
}

/// Largest [`symmetry_violation`] over `trials` random `sigma` in
/// `[lo, hi]^3`.
pub fn check_symmetry_condition<G: Fn(&Vector3<f64>) -> f64>(g: G, trials: usize, range: (f64, f64), seed: u64) -> f64 {
    assert!(trials >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = symmetry_violation(&g, &Vector3::repeat(1.0));
    for _ in 0..trials {
        let s = Vector3::from_fn(|_, _| rng.gen_range(range.0..range.1));
        worst = worst.max(symmetry_violation(&g, &s));
    }
    worst
}

/// Random invertible matrix `R1 diag(sigma) R2` with `|sigma_i|` in
/// `[0.1, 5]` and a random orientation.
pub fn random_invertible(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let mut rot = || {
        let q = nalgebra::Quaternion::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
    };
    let (a, b) = (rot(), rot());
    let mut s = Vector3::from_fn(|_, _| rng.gen_range(0.1..5.0));
    if rng.gen_bool(0.5) {
        s[2] = -s[2];
    }
    a * Matrix3::from_diagonal(&s) * b
}

/// Largest relative violation of `f^Sym(J) = |det J| f^Sym(J^-1)` over random
/// invertible `J`.
pub fn check_matrix_symmetry(energy: Energy, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let j = random_invertible(&mut rng);
        let inv = j.try_inverse().expect("invertible by construction");
        let lhs = energy.eval_f_sym(&j).expect("finite on invertible J");
        let rhs = j.determinant().abs() * energy.eval_f_sym(&inv).expect("finite on invertible J");
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1e-12));
    }
    worst
}

const NUM_STARTS: usize = 20;
const FD_STEP: f64 = 1e-6;
const TOL: f64 = 1e-10;
const MAX_DESCENT_ITERS: usize = 20_000;

fn numerical_gradient<G: Fn(&Vector3<f64>) -> f64>(g: &G, s: &Vector3<f64>) -> Vector3<f64> {
    let f0 = g(s);
    Vector3::from_fn(|k, _| {
        let h = FD_STEP * s[k].abs().max(1.0);
        let mut p = *s;
        p[k] += h;
        let mut m = *s;
        m[k] -= h;
        if m[k] > 0.0 {
            (g(&p) - g(&m)) / (2.0 * h)
        } else {
            (g(&p) - f0) / h
        }
    })
}

/// Projected gradient descent on `sigma >= 0` with Armijo backtracking.
fn projected_descent<G: Fn(&Vector3<f64>) -> f64>(g: &G, start: Vector3<f64>) -> (Vector3<f64>, f64) {
    let mut x = start;
    let mut fx = g(&x);
    let mut step = 0.1;
    for _ in 0..MAX_DESCENT_ITERS {
        let grad = numerical_gradient(g, &x);
        if !grad.iter().all(|v| v.is_finite()) {
            break;
        }
        let mut accepted = false;
        while step > 1e-16 {
            let y = (x - step * grad).map(|v| v.max(0.0));
            let fy = g(&y);
            let decrease = grad.dot(&(x - y));
            if fy.is_finite() && fy <= fx - 1e-4 * decrease {
                let moved = (y - x).norm();
                let gain = fx - fy;
                x = y;
                fx = fy;
                accepted = true;
                step *= 2.0;
                if moved < TOL || gain <= TOL * fx.abs().max(1e-300) {
                    return (x, fx);
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (x, fx)
}

/// Best point of `g` along `a (1,1,1)` for `a` in `[1e-6, 3]`: log-spaced
/// scan followed by golden-section refinement.
fn diagonal_minimum<G: Fn(&Vector3<f64>) -> f64>(g: &G) -> f64 {
    let eval = |a: f64| g(&Vector3::repeat(a));
    let n = 400;
    let (lo, hi) = (1e-6_f64.ln(), 3f64.ln());
    let grid: Vec<f64> = (0..=n).map(|i| (lo + (hi - lo) * i as f64 / n as f64).exp()).collect();
    let best = (0..=n).min_by(|&a, &b| eval(grid[a]).total_cmp(&eval(grid[b]))).unwrap();
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n)]);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if eval(c) <= eval(d) {
            b = d;
        } else {
            a = c;
        }
        if b - a < TOL {
            break;
        }
    }
    0.5 * (a + b)
}

/// Local minimizer of `f^Sym` over `sigma >= 0`, best over 20 random starts in
/// `[0.01, 3]^3` and the minimum along the diagonal. Reported sorted
/// descending.
pub fn minimize_fsym(energy: Energy, seed: u64) -> ([f64; 3], f64) {
    let g = |s: &Vector3<f64>| energy.f_sym(s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<Vector3<f64>> = (0..NUM_STARTS)
        .map(|_| Vector3::from_fn(|_, _| rng.gen_range(0.01..3.0)))
        .collect();
    starts.push(Vector3::repeat(diagonal_minimum(&g)));
    let mut best = (Vector3::repeat(1.0), g(&Vector3::repeat(1.0)));
    for s in starts {
        let (x, fx) = projected_descent(&g, s);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    let mut out = [best.0[0], best.0[1], best.0[2]];
    out.sort_by(|a, b| b.total_cmp(a));
    (out, best.1)
}

/// `f` minimized at `(1,1,1)`: vanishing gradient there and no lower value
/// at nearby perturbations.
pub fn preserves_structure(energy: Energy, seed: u64) -> bool {
    let one = Vector3::repeat(1.0);
    let f1 = energy.f(&one);
    if energy.grad(&one).norm() > 1e-8 {
        return false;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slack = 1e-12 * f1.abs().max(1.0);
    for k in 0..200 {
        let scale = [1e-3, 1e-2, 1e-1, 0.5][k % 4];
        let p = one + Vector3::from_fn(|_, _| rng.gen_range(-scale..scale));
        if energy.f(&p) < f1 - slack {
            return false;
        }
    }
    true
}

/// `f` finite at singular values with a zero entry and at random rank
/// deficient matrices.
pub fn nonsingular(energy: Energy, seed: u64) -> bool {
    let probes = [Vector3::new(1.0, 1.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::zeros()];
    if probes.iter().any(|s| !energy.f(s).is_finite()) {
        return false;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..20 {
        let a = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let svd = signed_svd(&a).expect("finite");
        let mut s = svd.sigma;
        s[2] = 0.0;
        let j = svd.u * Matrix3::from_diagonal(&s) * svd.v.transpose();
        match energy.eval_f(&j) {
            Ok(v) if v.is_finite() => {}
            _ => return false,
        }
    }
    true
}

pub fn classify_energy(energy: Energy, seed: u64) -> EnergyProperties {
    let (sigma_min, f_sym_min) = minimize_fsym(energy, seed);
    let favors_isometry = sigma_min.iter().all(|&x| (x - 1.0).abs() <= 0.02);
    EnergyProperties {
        favors_isometry,
        preserves_structure: preserves_structure(energy, seed),
        nonsingular: nonsingular(energy, seed),
        sigma_min,
        f_sym_min,
    }
}

/// Values on a `grid x grid` lattice of `(sigma1, sigma2, 1)` with both
/// coordinates spanning `range`. Row index follows `sigma2`.
pub fn sample_level_sets(energy: Energy, kind: LevelSetKind, grid: usize, range: (f64, f64)) -> Vec<Vec<f64>> {
    assert!(grid >= 2, "grid must have at least two samples per axis");
    let coord = |i: usize| range.0 + (range.1 - range.0) * i as f64 / (grid - 1) as f64;
    (0..grid)
        .map(|r| {
            (0..grid)
                .map(|c| {
                    let s = Vector3::new(coord(c), coord(r), 1.0);
                    match kind {
                        LevelSetKind::F => energy.f(&s),
                        LevelSetKind::FSym => energy.f_sym(&s),
                    }
                })
                .collect()
        })
        .collect()
}

/// AMIPS `f^Sym` as expanded in closed form on matrices:
/// `(det+1)/32 (|J|^2 |J^-1|^2 - 1) + (det + 1/det)/4 + (det^2 + 1)/4`.
pub fn amips_sym_expanded(s: &Vector3<f64>) -> f64 {
    let sq = s.component_mul(s);
    let d = s.product().abs();
    let st = sq.sum() * sq.iter().map(|x| 1.0 / x).sum::<f64>();
    (d + 1.0) / 32.0 * (st - 1.0) + 0.25 * (d + 1.0 / d) + 0.25 * (d * d + 1.0)
}

/// Largest relative gap between the symmetrized AMIPS and
/// [`amips_sym_expanded`] over random positive `sigma`.
pub fn amips_expansion_mismatch(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| {
            let s = Vector3::from_fn(|_, _| rng.gen_range(0.1..5.0));
            let a = Energy::Amips.f_sym(&s);
            (a - amips_sym_expanded(&s)).abs() / a.abs().max(1e-12)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetrized_forms_are_symmetric() {
        for e in Energy::ALL {
            let v = check_symmetry_condition(|s| e.f_sym(s), 10_000, (0.1, 5.0), 9);
            assert!(v <= 1e-10, "{e}: {v}");
        }
    }

    #[test]
    fn raw_dirichlet_is_not_symmetric() {
        let s = Vector3::repeat(2.0);
        let v = symmetry_violation(|s| Energy::Dirichlet.f(s), &s);
        assert!((v - 0.5).abs() < 1e-15);
        assert_eq!(symmetry_violation(|s| Energy::Dirichlet.f_sym(s), &Vector3::repeat(1.0)), 0.0);
    }

    #[test]
    fn matrix_level_symmetry() {
        for e in Energy::ALL {
            let v = check_matrix_symmetry(e, 2000, 10);
            assert!(v <= 1e-9, "{e}: {v}");
        }
    }

    #[test]
    fn arap_and_hencky_minimized_at_identity() {
        for e in [Energy::Arap, Energy::Hencky] {
            let (s, f) = minimize_fsym(e, 0);
            for x in s {
                assert!((x - 1.0).abs() < 1e-4, "{e}: {s:?}");
            }
            assert!(f.abs() < 1e-8);
        }
    }

    #[test]
    fn symmetric_dirichlet_minimizer_oracle() {
        // along the diagonal f^Sym = 1.5 (a^2 + a^-2)(1 + a^3); its minimizer
        // solves 5a^7 + 2a^4 + a^3 - 2 = 0, about 0.7730
        let (s, _) = minimize_fsym(Energy::SymmetricDirichlet, 0);
        let root = {
            let (mut lo, mut hi) = (0.5_f64, 1.0_f64);
            for _ in 0..100 {
                let m = 0.5 * (lo + hi);
                let p = 5.0 * m.powi(7) + 2.0 * m.powi(4) + m.powi(3) - 2.0;
                if p > 0.0 {
                    hi = m
                } else {
                    lo = m
                }
            }
            lo
        };
        for x in s {
            assert!((x - root).abs() < 1e-3, "{s:?} vs {root}");
        }
    }

    #[test]
    fn collapsing_energies_move_away_from_identity() {
        for e in [Energy::Dirichlet, Energy::Dirichlet3, Energy::Mips, Energy::ConformalAmips] {
            let (s, _) = minimize_fsym(e, 0);
            assert!(s.iter().all(|&x| (x - 1.0).abs() > 0.5), "{e}: {s:?}");
        }
    }

    #[test]
    fn classification_table() {
        let expect = [
            (Energy::Dirichlet, false, false, true),
            (Energy::Dirichlet3, false, false, true),
            (Energy::SymmetricDirichlet, false, true, false),
            (Energy::Mips, false, true, false),
            (Energy::Amips, false, true, false),
            (Energy::ConformalAmips, false, true, false),
            (Energy::SymmetricGradient, false, true, false),
            (Energy::Hencky, true, true, false),
            (Energy::Arap, true, true, true),
        ];
        for (e, fav, pres, nonsing) in expect {
            let p = classify_energy(e, 1);
            assert_eq!((p.favors_isometry, p.preserves_structure, p.nonsingular), (fav, pres, nonsing), "{e}");
            if p.favors_isometry && p.preserves_structure {
                assert!(e.f(&Vector3::repeat(1.0)) <= 1e-12);
                assert!(e.grad(&Vector3::repeat(1.0)).norm() <= 1e-8);
            }
        }
    }

    #[test]
    fn level_set_samples() {
        let g = sample_level_sets(Energy::Arap, LevelSetKind::F, 3, (0.0, 2.0));
        assert_eq!(g[1][1], 0.0);
        let g = sample_level_sets(Energy::Arap, LevelSetKind::FSym, 3, (0.0, 2.0));
        assert!((g[1][2] - 0.75).abs() < 1e-15);
        let g = sample_level_sets(Energy::Dirichlet, LevelSetKind::F, 3, (0.0, 2.0));
        assert_eq!(g[0][0], 1.0);
        for e in Energy::ALL {
            let g = sample_level_sets(e, LevelSetKind::FSym, 5, (0.0, 2.0));
            assert!(g.iter().flatten().all(|v| !v.is_nan()));
        }
    }

    #[test]
    fn amips_expansion_matches_definition() {
        assert!(amips_expansion_mismatch(1000, 3) < 1e-12);
    }
}
