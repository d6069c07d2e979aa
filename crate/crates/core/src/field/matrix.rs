use serde::Serialize;

use super::ScalarField;
use crate::error::{check_dim, Error, Result};

/// Conductivity `A(x) = B(x)ᵀB(x) + m·I`, symmetric and positive
/// semidefinite by construction (definite when `m > 0`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixField {
    dim: usize,
    /// Row-major `B(x)`.
    factor: Vec<ScalarField>,
    ridge: f64,
}

impl MatrixField {
    pub fn new(dim: usize, factor: Vec<ScalarField>, ridge: f64) -> Result<Self> {
        if factor.len() != dim * dim {
            return Err(Error::InvalidField(format!(
                "conductivity factor needs {} entries, got {}",
                dim * dim,
                factor.len()
            )));
        }
        for entry in &factor {
            check_dim(dim, entry.dim())?;
        }
        if !(ridge.is_finite() && ridge >= 0.0) {
            return Err(Error::InvalidField(format!(
                "ridge must be finite and nonnegative, got {ridge}"
            )));
        }
        Ok(Self { dim, factor, ridge })
    }

    /// `m·I` with a zero factor.
    pub fn scaled_identity(dim: usize, ridge: f64) -> Result<Self> {
        Self::new(dim, vec![ScalarField::zero(dim); dim * dim], ridge)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn factor(&self) -> &[ScalarField] {
        &self.factor
    }

    /// Row-major `A(x)`. Only the upper triangle is computed and mirrored,
    /// so the result is exactly symmetric.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok(self.value(x))
    }

    pub(crate) fn value(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let b: Vec<f64> = self.factor.iter().map(|f| f.value(x)).collect();
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += b[k * d + i] * b[k * d + j];
                }
                if i == j {
                    s += self.ridge;
                }
                a[i * d + j] = s;
                a[j * d + i] = s;
            }
        }
        a
    }

    /// Upper bound on the spectral norm of `A(x)` over the torus.
    pub fn norm_bound(&self) -> f64 {
        let frob_sq: f64 = self.factor.iter().map(|f| f.sup_bound().powi(2)).sum();
        frob_sq + self.ridge
    }
}
