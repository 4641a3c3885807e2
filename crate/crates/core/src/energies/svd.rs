use nalgebra::{Matrix3, Vector3};

use super::EnergyError;

/// `J = U diag(sigma) V^T` with `U, V` in SO(3), `sigma[0] >= sigma[1] >= |sigma[2]|`
/// and `sign(sigma[2]) = sign(det J)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedSvd {
    pub u: Matrix3<f64>,
    pub sigma: Vector3<f64>,
    pub v: Matrix3<f64>,
}

impl SignedSvd {
    pub fn reconstruct(&self) -> Matrix3<f64> {
        self.u * Matrix3::from_diagonal(&self.sigma) * self.v.transpose()
    }
}

pub fn signed_svd(j: &Matrix3<f64>) -> Result<SignedSvd, EnergyError> {
    if !j.iter().all(|x| x.is_finite()) {
        return Err(EnergyError::NonFinite);
    }
    let svd = j.svd(true, true);
    let u0 = svd.u.expect("requested U");
    let vt0 = svd.v_t.expect("requested V^T");
    let s0 = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| s0[b].total_cmp(&s0[a]).then(a.cmp(&b)));
    let mut u = Matrix3::from_columns(&[u0.column(order[0]), u0.column(order[1]), u0.column(order[2])]);
    let mut v = Matrix3::from_columns(&[
        vt0.row(order[0]).transpose(),
        vt0.row(order[1]).transpose(),
        vt0.row(order[2]).transpose(),
    ]);
    let mut sigma = Vector3::new(s0[order[0]], s0[order[1]], s0[order[2]]);
    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
        sigma[2] = -sigma[2];
    }
    if v.determinant() < 0.0 {
        v.column_mut(2).neg_mut();
        sigma[2] = -sigma[2];
    }
    Ok(SignedSvd { u, sigma, v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check(j: &Matrix3<f64>) -> SignedSvd {
        let s = signed_svd(j).unwrap();
        assert!((s.u.determinant() - 1.0).abs() < 1e-12);
        assert!((s.v.determinant() - 1.0).abs() < 1e-12);
        assert!(s.sigma[0] >= s.sigma[1] && s.sigma[1] >= s.sigma[2].abs());
        assert!((s.reconstruct() - j).norm() <= 1e-10 * j.norm().max(1e-300));
        s
    }

    #[test]
    fn identity_and_reflection() {
        let s = check(&Matrix3::identity());
        assert_eq!(s.sigma, Vector3::new(1.0, 1.0, 1.0));
        assert!((s.u - Matrix3::identity()).norm() < 1e-14);
        assert!((s.v - Matrix3::identity()).norm() < 1e-14);

        let r = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
        let s = check(&r);
        assert!((s.sigma - Vector3::new(1.0, 1.0, -1.0)).norm() < 1e-14);
    }

    #[test]
    fn random_sign_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let j = Matrix3::from_fn(|_, _| rng.gen_range(-2.0..2.0));
            let s = check(&j);
            let negatives = s.sigma.iter().filter(|&&x| x < 0.0).count();
            let det = j.determinant();
            assert_eq!(negatives, usize::from(det < 0.0), "{det} {:?}", s.sigma);
            // oracle: unsigned SVD magnitudes are unchanged
            let mut plain: Vec<f64> = j.singular_values().iter().copied().collect();
            plain.sort_by(|a, b| b.total_cmp(a));
            for k in 0..3 {
                assert!((plain[k] - s.sigma[k].abs()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_matrices() {
        check(&Matrix3::zeros());
        let rank1 = Vector3::new(1.0, 2.0, 3.0) * Vector3::new(0.5, -1.0, 1.0).transpose();
        let s = check(&rank1);
        assert!(s.sigma[1].abs() < 1e-12 && s.sigma[2].abs() < 1e-12);
    }

    #[test]
    fn non_finite_rejected() {
        let mut j = Matrix3::identity();
        j[(1, 2)] = f64::NAN;
        assert!(signed_svd(&j).is_err());
    }
}
