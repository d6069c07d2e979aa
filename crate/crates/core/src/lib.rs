//! Numerical laboratory for periodic flows `X' = b(X)` on the d-torus.
//!
//! Trajectories are integrated in the lifted space ℝ^d so the drift
//! `X(t, x)/t` is meaningful. The crate estimates drifts, Birkhoff
//! averages and empirical invariant measures, and compares them with the
//! closed-form asymptotics available for direction, rectified, current and
//! one-dimensional fields.
//!
//! ```
//! use torus_drift::field::{FieldSpec, ScalarField, Term};
//! use torus_drift::flow::{integrate, IntegratorOptions};
//! use torus_drift::ergodic::drift_estimate;
//!
//! let b = ScalarField::raw(1, 2.0, vec![Term::sin([1.0], 1.0)]).unwrap();
//! let spec = FieldSpec::one_d(b).unwrap();
//! let traj = integrate(&spec, &[0.0], 1e3, &IntegratorOptions::default()).unwrap();
//! let drift = drift_estimate(&traj).unwrap();
//! assert!((drift.last[0] - 3f64.sqrt()).abs() < 1e-2);
//! ```

pub mod analytic;
pub mod ergodic;
pub mod error;
pub mod field;
pub mod flow;
pub mod invariance;
pub mod quadrature;

pub use analytic::{predict_drift, CaseTag, DriftPrediction};
pub use error::{Error, Result};
pub use ergodic::{DriftEstimate, EmpiricalMeasure};
pub use field::{DirectionClass, Diffeomorphism, FieldSpec, MatrixField, ScalarField, Term, VectorField};
pub use flow::{IntegratorOptions, Trajectory};

/// Shortest round-trip text for `v`, in exponent form outside `[1e-4, 1e15)`.
/// Used by every CSV writer so identical values print identically.
pub fn format_real(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}
