use std::fmt;

use nalgebra::{Matrix3, Vector3};

use super::svd::{signed_svd, SignedSvd};
use super::EnergyError;

/// Rotation-invariant distortion functions, written on signed singular values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Energy {
    Dirichlet,
    Dirichlet3,
    SymmetricDirichlet,
    Mips,
    Amips,
    ConformalAmips,
    SymmetricGradient,
    Hencky,
    Arap,
}

impl Energy {
    pub const ALL: [Energy; 9] = [
        Energy::Dirichlet,
        Energy::Dirichlet3,
        Energy::SymmetricDirichlet,
        Energy::Mips,
        Energy::Amips,
        Energy::ConformalAmips,
        Energy::SymmetricGradient,
        Energy::Hencky,
        Energy::Arap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Energy::Dirichlet => "dirichlet",
            Energy::Dirichlet3 => "dirichlet3",
            Energy::SymmetricDirichlet => "symmetric-dirichlet",
            Energy::Mips => "mips",
            Energy::Amips => "amips",
            Energy::ConformalAmips => "conformal-amips",
            Energy::SymmetricGradient => "symmetric-gradient",
            Energy::Hencky => "hencky",
            Energy::Arap => "arap",
        }
    }

    /// Accepts catalog names (`-` or `_`) plus the `s`-prefixed names used
    /// for the two-direction objective: `sarap`, `sdirichlet`, `sdirichlet3`.
    pub fn from_name(name: &str) -> Option<Energy> {
        let n = name.to_ascii_lowercase().replace('_', "-");
        match n.as_str() {
            "sarap" => return Some(Energy::Arap),
            "sdirichlet" | "sdir" => return Some(Energy::Dirichlet),
            "sdirichlet3" | "sdir3" => return Some(Energy::Dirichlet3),
            _ => {}
        }
        Energy::ALL.into_iter().find(|e| e.name() == n)
    }

    /// True when `f` diverges as a singular value approaches zero.
    pub fn requires_invertible(self) -> bool {
        !matches!(self, Energy::Dirichlet | Energy::Dirichlet3 | Energy::Arap)
    }

    /// `f(sigma)`. Singular energies return `+inf` at a zero singular value.
    pub fn f(self, s: &Vector3<f64>) -> f64 {
        if self.requires_invertible() && s.iter().any(|&x| x == 0.0) {
            return f64::INFINITY;
        }
        let sq = s.component_mul(s);
        let big_s = sq.sum();
        let inv_t = || sq.iter().map(|x| 1.0 / x).sum::<f64>();
        let d = || (s[0] * s[1] * s[2]).abs();
        match self {
            Energy::Dirichlet => big_s,
            Energy::Dirichlet3 => s.iter().map(|x| x.abs().powi(3)).sum(),
            Energy::SymmetricDirichlet => big_s + inv_t(),
            Energy::Mips => (big_s * inv_t() - 1.0) / 8.0,
            Energy::Amips => {
                let d = d();
                (big_s * inv_t() - 1.0) / 16.0 + 0.5 * (d + 1.0 / d)
            }
            Energy::ConformalAmips => big_s * d().powf(-2.0 / 3.0),
            Energy::SymmetricGradient => 0.5 * big_s - d().ln(),
            Energy::Hencky => s.iter().map(|x| x.abs().ln().powi(2)).sum(),
            Energy::Arap => s.iter().map(|x| (x - 1.0).powi(2)).sum(),
        }
    }

    /// Gradient of [`Energy::f`] with respect to the signed singular values.
    pub fn grad(self, s: &Vector3<f64>) -> Vector3<f64> {
        let sq = s.component_mul(s);
        let big_s = sq.sum();
        let t = sq.iter().map(|x| 1.0 / x).sum::<f64>();
        let d = (s[0] * s[1] * s[2]).abs();
        match self {
            Energy::Dirichlet => 2.0 * s,
            Energy::Dirichlet3 => s.map(|x| 3.0 * x * x.abs()),
            Energy::SymmetricDirichlet => s.map(|x| 2.0 * x - 2.0 / (x * x * x)),
            Energy::Mips => s.map(|x| (2.0 * x * t - 2.0 * big_s / (x * x * x)) / 8.0),
            Energy::Amips => {
                s.map(|x| (2.0 * x * t - 2.0 * big_s / (x * x * x)) / 16.0 + 0.5 * (1.0 - 1.0 / (d * d)) * d / x)
            }
            Energy::ConformalAmips => {
                let w = d.powf(-2.0 / 3.0);
                s.map(|x| 2.0 * x * w - (2.0 / 3.0) * big_s * w / x)
            }
            Energy::SymmetricGradient => s.map(|x| x - 1.0 / x),
            Energy::Hencky => s.map(|x| 2.0 * x.abs().ln() / x),
            Energy::Arap => s.map(|x| 2.0 * (x - 1.0)),
        }
    }

    /// `f^Sym(sigma) = f(sigma)/2 + |prod sigma| f(1/sigma)/2`. A zero
    /// component gives `+inf`: the second term is `0 * inf` there and its
    /// limit depends on the approach path.
    pub fn f_sym(self, s: &Vector3<f64>) -> f64 {
        if s.iter().any(|&x| x == 0.0) {
            return f64::INFINITY;
        }
        let det = (s[0] * s[1] * s[2]).abs();
        let v = 0.5 * self.f(s) + 0.5 * det * self.f(&inverse_sigma(s));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    /// `f(J)` through the signed SVD.
    pub fn eval_f(self, j: &Matrix3<f64>) -> Result<f64, EnergyError> {
        let svd = signed_svd(j)?;
        let v = self.f(&svd.sigma);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EnergyError::Divergent { energy: self.name() })
        }
    }

    pub fn eval_f_sym(self, j: &Matrix3<f64>) -> Result<f64, EnergyError> {
        let svd = signed_svd(j)?;
        let v = self.f_sym(&svd.sigma);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EnergyError::Divergent { energy: self.name() })
        }
    }

    /// `df/dJ = U diag(grad f) V^T`.
    pub fn grad_j(self, svd: &SignedSvd) -> Matrix3<f64> {
        svd.u * Matrix3::from_diagonal(&self.grad(&svd.sigma)) * svd.v.transpose()
    }
}

/// Signed singular values of `J^-1` given those of `J`: reciprocals, with a
/// negative sign carried by the entry of smallest magnitude.
pub fn inverse_sigma(s: &Vector3<f64>) -> Vector3<f64> {
    let mut inv = s.map(|x| 1.0 / x.abs());
    if s.iter().filter(|&&x| x < 0.0).count() % 2 == 1 {
        let k = (0..3).min_by(|&a, &b| inv[a].total_cmp(&inv[b])).unwrap_or(0);
        inv[k] = -inv[k];
    }
    inv
}

impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
