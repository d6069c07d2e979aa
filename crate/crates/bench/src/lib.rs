//! Fixtures shared by the benchmarks.

use torus_drift::field::{Diffeomorphism, FieldSpec, MatrixField, ScalarField, Term};
use torus_drift::flow::{integrate, IntegratorOptions};
use torus_drift::Trajectory;

/// 2 + sin(2πy₁)cos(2πy₂).
pub fn product_amplitude() -> ScalarField {
    ScalarField::raw(2, 2.0, vec![Term::sin([1.0, 1.0], 0.5), Term::sin([1.0, -1.0], 0.5)]).unwrap()
}

/// A positive amplitude with `terms` distinct frequencies from `{-2..2}^dim`.
pub fn busy_amplitude(dim: usize, terms: usize) -> ScalarField {
    let mut out = Vec::with_capacity(terms);
    let mut code = 0usize;
    while out.len() < terms && code < 5usize.pow(dim as u32) {
        let k: Vec<f64> = (0..dim).map(|j| ((code / 5usize.pow(j as u32)) % 5) as f64 - 2.0).collect();
        code += 1;
        // One representative of each ±k pair.
        if k.iter().find(|v| **v != 0.0).is_some_and(|v| *v > 0.0) {
            let w = 0.3 / (out.len() + 1) as f64;
            out.push(Term::new(k, w, 0.5 * w));
        }
    }
    ScalarField::raw(dim, 2.0, out).unwrap()
}

pub fn irrational_direction() -> FieldSpec {
    FieldSpec::direction(product_amplitude(), &[1.0, 2f64.sqrt()]).unwrap()
}

pub fn sheared_rectified() -> FieldSpec {
    let phi = Diffeomorphism::new(
        2,
        vec![1, 1, 0, 1],
        vec![
            ScalarField::raw(2, 0.0, vec![Term::sin([0.0, 1.0], 0.05)]).unwrap(),
            ScalarField::raw(2, 0.0, vec![Term::sin([1.0, 0.0], 0.05)]).unwrap(),
        ],
    )
    .unwrap();
    let a = ScalarField::raw(2, 2.0, vec![Term::sin([1.0, 0.0], 1.0)]).unwrap();
    FieldSpec::rectified(a, &[1.0, 0.0], phi).unwrap()
}

pub fn egg_crate_current() -> FieldSpec {
    let c = 1.0 / (4.0 * std::f64::consts::PI);
    let v = ScalarField::raw(2, 0.0, vec![Term::cos([1.0, 1.0], c), Term::cos([1.0, -1.0], c)]).unwrap();
    FieldSpec::current(MatrixField::scaled_identity(2, 1.1).unwrap(), v).unwrap()
}

pub fn trajectory(spec: &FieldSpec, t_end: f64) -> Trajectory {
    integrate(spec, &[0.1, 0.2], t_end, &IntegratorOptions::default()).unwrap()
}
