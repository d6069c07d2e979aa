use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{Mode, ScalarField};
use crate::error::{check_dim, Error, Result};

/// Default per-dimension resolution of the Jacobian validation grid.
pub const VALIDATION_RESOLUTION: usize = 64;

const VALIDATION_POINT_CAP: usize = 1 << 20;

/// Torus diffeomorphism `Φ(x) = A x + Φ♯(x)` with `A` unimodular and `Φ♯`
/// periodic.
///
/// Invertibility of `∇Φ` is checked on a grid at construction; the sign of
/// `det ∇Φ` must be the same at every grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diffeomorphism {
    dim: usize,
    lattice: Vec<i64>,
    #[serde(skip)]
    lattice_inverse: Vec<i64>,
    periodic: Vec<ScalarField>,
    #[serde(skip)]
    det_sign: i8,
    #[serde(skip)]
    min_abs_det: f64,
    #[serde(skip)]
    max_inverse_norm: f64,
}

impl Diffeomorphism {
    pub fn new(dim: usize, lattice: Vec<i64>, periodic: Vec<ScalarField>) -> Result<Self> {
        Self::with_validation(dim, lattice, periodic, VALIDATION_RESOLUTION)
    }

    pub fn identity(dim: usize) -> Self {
        let mut lattice = vec![0; dim * dim];
        for i in 0..dim {
            lattice[i * dim + i] = 1;
        }
        Self::new(dim, lattice, vec![ScalarField::zero(dim); dim]).expect("identity is valid")
    }

    /// Pure lattice map `x ↦ A x`.
    pub fn linear(dim: usize, lattice: Vec<i64>) -> Result<Self> {
        Self::new(dim, lattice, vec![ScalarField::zero(dim); dim])
    }

    pub fn with_validation(
        dim: usize,
        lattice: Vec<i64>,
        periodic: Vec<ScalarField>,
        resolution: usize,
    ) -> Result<Self> {
        if dim == 0 || lattice.len() != dim * dim {
            return Err(Error::InvalidField(format!(
                "lattice matrix must be {dim}x{dim}"
            )));
        }
        if periodic.len() != dim {
            return Err(Error::InvalidField(format!(
                "periodic part needs {dim} components, got {}",
                periodic.len()
            )));
        }
        for p in &periodic {
            check_dim(dim, p.dim())?;
            if p.mode() != Mode::Raw {
                return Err(Error::InvalidField(
                    "periodic part components must be raw fields".into(),
                ));
            }
        }
        let det = integer_det(&lattice, dim);
        if det.abs() != 1 {
            return Err(Error::InvalidField(format!(
                "lattice matrix has determinant {det}, expected ±1"
            )));
        }
        let lattice_inverse = integer_inverse(&lattice, dim, det);
        let mut phi = Self {
            dim,
            lattice,
            lattice_inverse,
            periodic,
            det_sign: 0,
            min_abs_det: 0.0,
            max_inverse_norm: 0.0,
        };
        phi.validate_grid(resolution)?;
        Ok(phi)
    }

    fn validate_grid(&mut self, resolution: usize) -> Result<()> {
        let d = self.dim;
        let cap = (VALIDATION_POINT_CAP as f64).powf(1.0 / d as f64).floor() as usize;
        let res = resolution.clamp(2, cap.max(2));
        let total = res.pow(d as u32);
        let mut x = vec![0.0; d];
        let mut sign = 0i8;
        let mut min_abs = f64::INFINITY;
        let mut max_inv = 0.0f64;
        for idx in 0..total {
            let mut r = idx;
            for j in (0..d).rev() {
                x[j] = (r % res) as f64 / res as f64;
                r /= res;
            }
            let jac = DMatrix::from_row_slice(d, d, &self.jacobian_unchecked(&x));
            let det = jac.determinant();
            let s = if det > 0.0 {
                1
            } else if det < 0.0 {
                -1
            } else {
                0
            };
            if s == 0 || (sign != 0 && s != sign) {
                return Err(Error::InvalidField(format!(
                    "det ∇Φ changes sign or vanishes near {x:?} (det = {det:e})"
                )));
            }
            sign = s;
            min_abs = min_abs.min(det.abs());
            if let Some(inv) = jac.try_inverse() {
                max_inv = max_inv.max(inv.norm());
            }
        }
        self.det_sign = sign;
        self.min_abs_det = min_abs;
        self.max_inverse_norm = max_inv;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major integer matrix `A`.
    pub fn lattice(&self) -> &[i64] {
        &self.lattice
    }

    /// Row-major integer matrix `A⁻¹`.
    pub fn lattice_inverse(&self) -> &[i64] {
        &self.lattice_inverse
    }

    pub fn periodic(&self) -> &[ScalarField] {
        &self.periodic
    }

    /// Sign of `det ∇Φ` on the validation grid.
    pub fn orientation(&self) -> i8 {
        self.det_sign
    }

    /// Smallest `|det ∇Φ|` seen on the validation grid.
    pub fn min_abs_jacobian_det(&self) -> f64 {
        self.min_abs_det
    }

    /// Largest Frobenius norm of `∇Φ⁻¹` seen on the validation grid.
    pub fn max_inverse_jacobian_norm(&self) -> f64 {
        self.max_inverse_norm
    }

    pub fn is_identity(&self) -> bool {
        let d = self.dim;
        (0..d * d).all(|i| self.lattice[i] == i64::from(i / d == i % d))
            && self.periodic.iter().all(|p| p.is_constant() && p.constant_term() == 0.0)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut y = apply_integer(&self.lattice, self.dim, x);
        for (yi, p) in y.iter_mut().zip(&self.periodic) {
            *yi += p.value(x);
        }
        y
    }

    /// Row-major `∇Φ(x) = A + ∇Φ♯(x)`.
    pub fn jacobian(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok(self.jacobian_unchecked(x))
    }

    pub(crate) fn jacobian_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut jac: Vec<f64> = self.lattice.iter().map(|&a| a as f64).collect();
        let mut g = vec![0.0; d];
        for (i, p) in self.periodic.iter().enumerate() {
            if p.terms().is_empty() {
                continue;
            }
            p.value_grad(x, &mut g);
            for j in 0..d {
                jac[i * d + j] += g[j];
            }
        }
        jac
    }

    /// Solves `∇Φ(x) z = rhs`.
    pub fn solve_jacobian(&self, x: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        let jac = DMatrix::from_row_slice(d, d, &self.jacobian_unchecked(x));
        jac.lu()
            .solve(&DVector::from_column_slice(rhs))
            .map(|z| z.iter().copied().collect())
            .ok_or_else(|| Error::SingularJacobian { at: x.to_vec() })
    }

    /// `A⁻¹ v` in floating point.
    pub fn apply_lattice_inverse(&self, v: &[f64]) -> Vec<f64> {
        apply_integer(&self.lattice_inverse, self.dim, v)
    }

    /// Solves `Φ(x) = y` by damped Newton. The lattice part of `y` is
    /// split off first and mapped back through `A⁻¹`, so
    /// `Φ⁻¹(y + k) = Φ⁻¹(y) + A⁻¹k` holds up to rounding of `y + k`.
    pub fn inverse(&self, y: &[f64], tol: f64) -> Result<Vec<f64>> {
        check_dim(self.dim, y.len())?;
        let d = self.dim;
        let shift: Vec<f64> = y.iter().map(|v| v.floor()).collect();
        let target: Vec<f64> = y.iter().zip(&shift).map(|(v, k)| v - k).collect();
        let mut x = self.apply_lattice_inverse(&target);
        let residual = |x: &[f64]| -> (Vec<f64>, f64) {
            let r: Vec<f64> = self
                .forward_unchecked(x)
                .iter()
                .zip(&target)
                .map(|(a, b)| a - b)
                .collect();
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            (r, n)
        };
        let (mut r, mut norm) = residual(&x);
        const MAX_ITER: usize = 100;
        let mut iterations = 0;
        while norm > tol && iterations < MAX_ITER {
            iterations += 1;
            let step = self.solve_jacobian(&x, &r)?;
            let mut lambda = 1.0;
            let mut accepted = false;
            while lambda >= 1e-6 {
                let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - lambda * s).collect();
                let (rt, nt) = residual(&trial);
                if nt < norm {
                    x = trial;
                    r = rt;
                    norm = nt;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if norm > tol {
            return Err(Error::NewtonDiverged {
                iterations,
                residual: norm,
            });
        }
        let back = self.apply_lattice_inverse(&shift);
        for j in 0..d {
            x[j] += back[j];
        }
        Ok(x)
    }
}

fn apply_integer(m: &[i64], d: usize, v: &[f64]) -> Vec<f64> {
    (0..d)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..d {
                let a = m[i * d + j];
                if a != 0 {
                    s += a as f64 * v[j];
                }
            }
            s
        })
        .collect()
}

/// Exact determinant by fraction-free (Bareiss) elimination.
pub fn integer_det(m: &[i64], d: usize) -> i64 {
    if d == 0 {
        return 1;
    }
    let mut a: Vec<i128> = m.iter().map(|&v| v as i128).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..d - 1 {
        if a[k * d + k] == 0 {
            match (k + 1..d).find(|&r| a[r * d + k] != 0) {
                Some(r) => {
                    for c in 0..d {
                        a.swap(k * d + c, r * d + c);
                    }
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..d {
            for j in k + 1..d {
                a[i * d + j] = (a[i * d + j] * a[k * d + k] - a[i * d + k] * a[k * d + j]) / prev;
            }
        }
        prev = a[k * d + k];
    }
    (sign * a[(d - 1) * d + (d - 1)]) as i64
}

fn integer_inverse(m: &[i64], d: usize, det: i64) -> Vec<i64> {
    if d == 1 {
        return vec![det];
    }
    // A⁻¹ = adj(A) / det with det = ±1.
    let mut inv = vec![0i64; d * d];
    let mut minor = vec![0i64; (d - 1) * (d - 1)];
    for i in 0..d {
        for j in 0..d {
            let mut idx = 0;
            for r in (0..d).filter(|&r| r != i) {
                for c in (0..d).filter(|&c| c != j) {
                    minor[idx] = m[r * d + c];
                    idx += 1;
                }
            }
            let cof = if (i + j) % 2 == 0 { 1 } else { -1 } * integer_det(&minor, d - 1);
            inv[j * d + i] = cof * det;
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Term;

    fn shear() -> Diffeomorphism {
        Diffeomorphism::new(
            2,
            vec![1, 1, 0, 1],
            vec![
                ScalarField::raw(2, 0.0, vec![Term::sin([0.0, 1.0], 0.05)]).unwrap(),
                ScalarField::raw(2, 0.0, vec![Term::sin([1.0, 0.0], 0.05)]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn integer_determinants() {
        assert_eq!(integer_det(&[1, 1, 0, 1], 2), 1);
        assert_eq!(integer_det(&[0, 1, 1, 0], 2), -1);
        assert_eq!(integer_det(&[2, 0, 0, 3], 2), 6);
        assert_eq!(integer_det(&[0, 1, 0, 0, 0, 1, 1, 0, 0], 3), 1);
        assert_eq!(integer_det(&[2, -1, 0, -1, 2, -1, 0, -1, 2], 3), 4);
    }

    #[test]
    fn shear_inverse_is_exact() {
        let phi = Diffeomorphism::linear(2, vec![1, 1, 0, 1]).unwrap();
        assert_eq!(phi.lattice_inverse(), &[1, -1, 0, 1]);
        let x = phi.inverse(&[0.7, 0.2], 1e-14).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn identity_inverse() {
        let phi = Diffeomorphism::identity(3);
        assert!(phi.is_identity());
        let y = [0.3, -1.7, 5.25];
        assert_eq!(phi.inverse(&y, 1e-14).unwrap(), y.to_vec());
    }

    #[test]
    fn rejects_non_unimodular_lattice() {
        let err = Diffeomorphism::linear(2, vec![2, 0, 0, 1]).unwrap_err();
        assert!(matches!(err, Error::InvalidField(_)));
    }

    #[test]
    fn rejects_folding_periodic_part() {
        // Φ(x) = x + 0.3 sin(2πx) has Φ'(x) = 1 + 0.6π cos(2πx) < 0 somewhere.
        let err = Diffeomorphism::new(
            1,
            vec![1],
            vec![ScalarField::raw(1, 0.0, vec![Term::sin([1.0], 0.3)]).unwrap()],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidField(_)));
    }

    #[test]
    fn round_trip_and_equivariance() {
        let phi = shear();
        assert_eq!(phi.orientation(), 1);
        for x in [[0.1, 0.2], [-3.4, 7.9], [0.5, 0.5]] {
            let y = phi.forward(&x).unwrap();
            let back = phi.inverse(&y, 1e-12).unwrap();
            assert!((back[0] - x[0]).abs() < 1e-10 && (back[1] - x[1]).abs() < 1e-10);
            let shifted = phi.forward(&[x[0] + 2.0, x[1] - 1.0]).unwrap();
            // A (2, -1) = (1, -1)
            assert!((shifted[0] - y[0] - 1.0).abs() < 1e-12);
            assert!((shifted[1] - y[1] + 1.0).abs() < 1e-12);
        }
    }
}
