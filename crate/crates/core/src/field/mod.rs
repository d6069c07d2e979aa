//! Periodic scalar, matrix and vector fields on the torus, and torus
//! diffeomorphisms, all with exact analytic derivatives.

mod diffeo;
mod direction;
mod matrix;
mod scalar;
mod spec;

pub use diffeo::{integer_det, Diffeomorphism, VALIDATION_RESOLUTION};
pub use direction::{classify_direction, DirectionClass, DEFAULT_SEARCH_BOUND, RATIONAL_TOL};
pub use matrix::MatrixField;
pub use scalar::{Mode, Positivity, ScalarField, Term, ZERO_TOL};
pub use spec::{unit_vector, FieldSpec, Reversed, VectorField};

pub(crate) use scalar::local_descent;

/// Orthogonal projection of `x` onto the hyperplane `ξ^⊥`.
pub fn project_orthogonal(xi: &[f64], x: &[f64]) -> Vec<f64> {
    let dot: f64 = xi.iter().zip(x).map(|(a, b)| a * b).sum();
    x.iter().zip(xi).map(|(v, e)| v - dot * e).collect()
}
