use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{Diffeomorphism, MatrixField, ScalarField, ZERO_TOL};
use crate::error::{check_dim, Error, Result};

/// A velocity field `b` on the lifted space ℝ^d.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;

    /// Writes `b(x)` into `out`.
    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    /// Short identifier recorded on trajectories.
    fn id(&self) -> String {
        String::from("anonymous")
    }

    /// True when `b(x + k) = b(x)` for every integer vector `k`.
    fn lattice_periodic(&self) -> bool {
        false
    }
}

/// `-b`, for integrating backwards in time.
#[derive(Debug, Clone, Copy)]
pub struct Reversed<'a, F: ?Sized>(pub &'a F);

impl<F: VectorField + ?Sized> VectorField for Reversed<'_, F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.0.eval_into(x, out)?;
        out.iter_mut().for_each(|v| *v = -*v);
        Ok(())
    }

    fn id(&self) -> String {
        format!("reversed:{}", self.0.id())
    }

    fn lattice_periodic(&self) -> bool {
        self.0.lattice_periodic()
    }
}

/// The families of periodic vector fields the laboratory knows about.
///
/// Use the constructors; they check dimensions, normalize `xi`, and reject
/// direction amplitudes that go negative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FieldSpec {
    /// `b(y) = a(y) ξ`
    Direction { a: ScalarField, xi: Vec<f64> },
    /// `b(x) = a(Φ(x)) ∇Φ(x)⁻¹ ξ`
    Rectified {
        a: ScalarField,
        xi: Vec<f64>,
        phi: Diffeomorphism,
    },
    /// `b = A ∇v`
    Current {
        conductivity: MatrixField,
        potential: ScalarField,
    },
    /// Scalar velocity on the circle; may change sign.
    OneD { b: ScalarField },
    Generic { components: Vec<ScalarField> },
}

/// Normalizes `v` to unit Euclidean length.
pub fn unit_vector(v: &[f64]) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::InvalidField(format!("cannot normalize {v:?}")));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

fn check_amplitude(a: &ScalarField) -> Result<()> {
    let min = a.positivity().min();
    if min < -ZERO_TOL {
        return Err(Error::InvalidField(format!(
            "direction amplitude must be nonnegative (found {min:e})"
        )));
    }
    Ok(())
}

fn check_unit(xi: &[f64]) -> Result<()> {
    let n = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (n - 1.0).abs() > 1e-14 {
        return Err(Error::InvalidField(format!("|xi| = {n}, expected 1")));
    }
    Ok(())
}

impl FieldSpec {
    pub fn direction(a: ScalarField, xi: &[f64]) -> Result<Self> {
        check_dim(a.dim(), xi.len())?;
        let xi = unit_vector(xi)?;
        check_amplitude(&a)?;
        Ok(FieldSpec::Direction { a, xi })
    }

    pub fn rectified(a: ScalarField, xi: &[f64], phi: Diffeomorphism) -> Result<Self> {
        check_dim(a.dim(), xi.len())?;
        check_dim(a.dim(), phi.dim())?;
        let xi = unit_vector(xi)?;
        check_amplitude(&a)?;
        Ok(FieldSpec::Rectified { a, xi, phi })
    }

    pub fn current(conductivity: MatrixField, potential: ScalarField) -> Result<Self> {
        check_dim(conductivity.dim(), potential.dim())?;
        Ok(FieldSpec::Current {
            conductivity,
            potential,
        })
    }

    pub fn one_d(b: ScalarField) -> Result<Self> {
        check_dim(1, b.dim())?;
        Ok(FieldSpec::OneD { b })
    }

    pub fn generic(components: Vec<ScalarField>) -> Result<Self> {
        let d = components.len();
        if d == 0 {
            return Err(Error::InvalidField("generic field needs components".into()));
        }
        for c in &components {
            check_dim(d, c.dim())?;
        }
        Ok(FieldSpec::Generic { components })
    }

    /// Cheap structural checks, for specs assembled by hand.
    pub fn validate(&self) -> Result<()> {
        match self {
            FieldSpec::Direction { a, xi } => {
                check_dim(a.dim(), xi.len())?;
                check_unit(xi)
            }
            FieldSpec::Rectified { a, xi, phi } => {
                check_dim(a.dim(), xi.len())?;
                check_dim(a.dim(), phi.dim())?;
                check_unit(xi)
            }
            FieldSpec::Current {
                conductivity,
                potential,
            } => check_dim(conductivity.dim(), potential.dim()),
            FieldSpec::OneD { b } => check_dim(1, b.dim()),
            FieldSpec::Generic { components } => {
                for c in components {
                    check_dim(components.len(), c.dim())?;
                }
                Ok(())
            }
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            FieldSpec::Direction { .. } => "direction",
            FieldSpec::Rectified { .. } => "rectified",
            FieldSpec::Current { .. } => "current",
            FieldSpec::OneD { .. } => "oned",
            FieldSpec::Generic { .. } => "generic",
        }
    }

    /// Upper bound on `|b|` over the torus. Coefficient sums everywhere
    /// except for rectified fields, where the `∇Φ⁻¹` factor uses the
    /// largest norm seen on the diffeomorphism's validation grid.
    pub fn speed_bound(&self) -> f64 {
        match self {
            FieldSpec::Direction { a, .. } => a.sup_bound(),
            FieldSpec::Rectified { a, phi, .. } => a.sup_bound() * phi.max_inverse_jacobian_norm(),
            FieldSpec::Current {
                conductivity,
                potential,
            } => conductivity.norm_bound() * potential.lipschitz_bound(),
            FieldSpec::OneD { b } => b.sup_bound(),
            FieldSpec::Generic { components } => components
                .iter()
                .map(|c| c.sup_bound().powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("field specs serialize");
        let hash = Sha256::digest(&json);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl VectorField for FieldSpec {
    fn dim(&self) -> usize {
        match self {
            FieldSpec::Direction { a, .. } | FieldSpec::Rectified { a, .. } => a.dim(),
            FieldSpec::Current { potential, .. } => potential.dim(),
            FieldSpec::OneD { .. } => 1,
            FieldSpec::Generic { components } => components.len(),
        }
    }

    fn lattice_periodic(&self) -> bool {
        true
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        match self {
            FieldSpec::Direction { a, xi } => {
                let s = a.value(x);
                for (o, e) in out.iter_mut().zip(xi) {
                    *o = s * e;
                }
            }
            FieldSpec::Rectified { a, xi, phi } => {
                let y = phi.forward_unchecked(x);
                let s = a.value(&y);
                let z = phi.solve_jacobian(x, xi)?;
                for (o, e) in out.iter_mut().zip(&z) {
                    *o = s * e;
                }
            }
            FieldSpec::Current {
                conductivity,
                potential,
            } => {
                let d = potential.dim();
                let mut g = vec![0.0; d];
                potential.value_grad(x, &mut g);
                let m = conductivity.value(x);
                for i in 0..d {
                    out[i] = (0..d).map(|j| m[i * d + j] * g[j]).sum();
                }
            }
            FieldSpec::OneD { b } => out[0] = b.value(x),
            FieldSpec::Generic { components } => {
                for (o, c) in out.iter_mut().zip(components) {
                    *o = c.value(x);
                }
            }
        }
        Ok(())
    }

    fn id(&self) -> String {
        format!("{}:{}", self.family(), &self.digest()[..16])
    }
}
