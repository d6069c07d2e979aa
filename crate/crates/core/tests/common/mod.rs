#![allow(dead_code)]

use std::f64::consts::{FRAC_1_PI, PI};

use rand::Rng;
use torus_drift::field::{Diffeomorphism, FieldSpec, MatrixField, ScalarField, Term};

/// 2 + sin(2πy) in d = 1.
pub fn two_plus_sine() -> ScalarField {
    ScalarField::raw(1, 2.0, vec![Term::sin([1.0], 1.0)]).unwrap()
}

/// 2 + sin(2πy₁) in dimension `dim`.
pub fn two_plus_sine_first(dim: usize) -> ScalarField {
    let mut k = vec![0.0; dim];
    k[0] = 1.0;
    ScalarField::raw(dim, 2.0, vec![Term::sin(k, 1.0)]).unwrap()
}

/// 2 + sin(2πy₁)cos(2πy₂).
pub fn product_amplitude() -> ScalarField {
    ScalarField::raw(
        2,
        2.0,
        vec![Term::sin([1.0, 1.0], 0.5), Term::sin([1.0, -1.0], 0.5)],
    )
    .unwrap()
}

/// (1/π)cos²(πy₁) as the square of cos(2π·½·y₁)/√π.
pub fn cos_squared(dim: usize) -> ScalarField {
    let mut k = vec![0.0; dim];
    k[0] = 0.5;
    ScalarField::squared(dim, 0.0, vec![Term::cos(k, FRAC_1_PI.sqrt())], 0.0).unwrap()
}

/// Φ(x) = [[1,1],[0,1]]x + 0.05(sin 2πx₂, sin 2πx₁).
pub fn sheared_diffeo() -> Diffeomorphism {
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

/// cos(2πx₁)cos(2πx₂)/(2π).
pub fn egg_crate_potential() -> ScalarField {
    let c = 1.0 / (4.0 * PI);
    ScalarField::raw(
        2,
        0.0,
        vec![Term::cos([1.0, 1.0], c), Term::cos([1.0, -1.0], c)],
    )
    .unwrap()
}

/// Closed-form solution of y' = (1/π)cos²(πy).
pub fn cos_squared_solution(x0: f64, t: f64) -> f64 {
    ((t + (PI * x0).tan()).atan()) / PI
}

fn random_freq<R: Rng>(rng: &mut R, dim: usize, bound: i64) -> Vec<f64> {
    loop {
        let k: Vec<f64> = (0..dim).map(|_| rng.gen_range(-bound..=bound) as f64).collect();
        if k.iter().any(|v| *v != 0.0) {
            return k;
        }
    }
}

fn random_terms<R: Rng>(rng: &mut R, dim: usize, count: usize, scale: f64) -> Vec<Term> {
    // Frequencies up to sign in {-2..2}^d \ {0}.
    let available = (5usize.pow(dim as u32) - 1) / 2;
    let count = count.min(available);
    let mut terms: Vec<Term> = Vec::new();
    while terms.len() < count {
        let k = random_freq(rng, dim, 2);
        let neg: Vec<f64> = k.iter().map(|v| -v).collect();
        if terms.iter().any(|t| t.freq == k || t.freq == neg) {
            continue;
        }
        terms.push(Term::new(k, scale * rng.gen_range(-1.0..1.0), scale * rng.gen_range(-1.0..1.0)));
    }
    terms
}

/// Random raw trig polynomial with up to three terms.
pub fn random_raw<R: Rng>(rng: &mut R, dim: usize) -> ScalarField {
    let count = rng.gen_range(1..=3);
    let terms = random_terms(rng, dim, count, 1.0);
    ScalarField::raw(dim, rng.gen_range(-1.0..1.0), terms).unwrap()
}

/// Random raw amplitude bounded below by 0.5 via the coefficient bound.
pub fn random_positive<R: Rng>(rng: &mut R, dim: usize) -> ScalarField {
    let count = rng.gen_range(1..=3);
    let terms = random_terms(rng, dim, count, 1.0);
    let sum: f64 = terms.iter().map(|t| t.cos.abs() + t.sin.abs()).sum();
    ScalarField::raw(dim, sum + 0.5 + rng.gen_range(0.0..1.0), terms).unwrap()
}

/// Random squared amplitude q² + m.
pub fn random_squared<R: Rng>(rng: &mut R, dim: usize, offset: f64) -> ScalarField {
    let count = rng.gen_range(1..=2);
    let terms = random_terms(rng, dim, count, 0.7);
    ScalarField::squared(dim, rng.gen_range(-0.5..0.5), terms, offset).unwrap()
}

/// Random unit direction.
pub fn random_direction<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Random small perturbation of a unimodular map, validated.
pub fn random_diffeo<R: Rng>(rng: &mut R, dim: usize) -> Diffeomorphism {
    let lattices: [&[i64]; 4] = [&[1, 0, 0, 1], &[1, 1, 0, 1], &[2, 1, 1, 1], &[0, 1, 1, 0]];
    let lattice = if dim == 2 {
        lattices[rng.gen_range(0..lattices.len())].to_vec()
    } else {
        let mut m = vec![0i64; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = 1;
        }
        m
    };
    loop {
        let periodic: Vec<ScalarField> = (0..dim)
            .map(|_| {
                let terms = random_terms(rng, dim, 1, 0.03);
                ScalarField::raw(dim, 0.0, terms).unwrap()
            })
            .collect();
        if let Ok(phi) = Diffeomorphism::new(dim, lattice.clone(), periodic) {
            return phi;
        }
    }
}

/// Random field of any family in dimension `dim` (OneD when dim = 1).
pub fn random_spec<R: Rng>(rng: &mut R, dim: usize) -> FieldSpec {
    if dim == 1 {
        return match rng.gen_range(0..2) {
            0 => FieldSpec::one_d(random_raw(rng, 1)).unwrap(),
            _ => FieldSpec::one_d(random_positive(rng, 1)).unwrap(),
        };
    }
    match rng.gen_range(0..5) {
        0 => FieldSpec::direction(random_positive(rng, dim), &random_direction(rng, dim)).unwrap(),
        1 => FieldSpec::direction(random_squared(rng, dim, 0.1), &random_direction(rng, dim)).unwrap(),
        2 => FieldSpec::rectified(
            random_positive(rng, dim),
            &random_direction(rng, dim),
            random_diffeo(rng, dim),
        )
        .unwrap(),
        3 => {
            let factor = (0..dim * dim).map(|_| random_raw(rng, dim).scaled(0.3).unwrap()).collect();
            let m = MatrixField::new(dim, factor, rng.gen_range(0.0..1.0)).unwrap();
            FieldSpec::current(m, random_raw(rng, dim).scaled(0.3).unwrap()).unwrap()
        }
        _ => FieldSpec::generic((0..dim).map(|_| random_raw(rng, dim)).collect()).unwrap(),
    }
}

/// Random field with a positive invariant density and no attracting set:
/// direction or rectified with positive amplitude, or a OneD field of one sign.
pub fn random_conservative_spec<R: Rng>(rng: &mut R, dim: usize) -> FieldSpec {
    if dim == 1 {
        let b = random_positive(rng, 1);
        return FieldSpec::one_d(if rng.gen_bool(0.5) { b } else { b.negated().unwrap() }).unwrap();
    }
    match rng.gen_range(0..3) {
        0 => FieldSpec::direction(random_positive(rng, dim), &random_direction(rng, dim)).unwrap(),
        1 => FieldSpec::direction(random_squared(rng, dim, 0.1), &random_direction(rng, dim)).unwrap(),
        _ => FieldSpec::rectified(
            random_positive(rng, dim),
            &random_direction(rng, dim),
            random_diffeo(rng, dim),
        )
        .unwrap(),
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|p| p * p).sum::<f64>().sqrt()
}
