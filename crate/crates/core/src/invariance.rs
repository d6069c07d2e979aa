//! Invariance tests: the residual `∫ b·∇ψ dμ` against periodic test
//! functions, and the closed-form invariant densities it is checked on.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ergodic::EmpiricalMeasure;
use crate::error::{check_dim, Error, Result};
use crate::field::{Diffeomorphism, FieldSpec, Positivity, ScalarField, Term, VectorField, ZERO_TOL};
use crate::quadrature::{adaptive_torus, Refinement, TorusGrid};

/// Default largest |k|∞ in a random test-function panel.
pub const PANEL_FREQ_BOUND: i64 = 3;

const DENSITY_INITIAL_POINTS: usize = 64;

/// A periodic test function ψ with its analytic gradient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestFunction {
    pub id: String,
    pub psi: ScalarField,
}

impl TestFunction {
    pub fn new(id: impl Into<String>, psi: ScalarField) -> Result<Self> {
        if psi.mode() != crate::field::Mode::Raw {
            return Err(Error::InvalidArgument("test functions must be raw trig polynomials".into()));
        }
        Ok(Self { id: id.into(), psi })
    }

    pub fn dim(&self) -> usize {
        self.psi.dim()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.psi.value(x)
    }

    /// Upper bound on max |ψ|.
    pub fn sup_bound(&self) -> f64 {
        self.psi.sup_bound()
    }

    /// `count` random trig polynomials with integer frequencies in
    /// `[-freq_bound, freq_bound]^d`, zero mean and unit coefficient norm.
    pub fn panel(dim: usize, count: usize, seed: u64, freq_bound: i64) -> Result<Vec<TestFunction>> {
        if dim == 0 || freq_bound < 1 {
            return Err(Error::InvalidArgument("panel needs dim ≥ 1 and freq_bound ≥ 1".into()));
        }
        let freqs = half_space_frequencies(dim, freq_bound);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|i| {
                let n_terms = rng.gen_range(1..=freqs.len().min(6));
                let mut chosen: Vec<&Vec<i64>> = Vec::with_capacity(n_terms);
                while chosen.len() < n_terms {
                    let k = &freqs[rng.gen_range(0..freqs.len())];
                    if !chosen.contains(&k) {
                        chosen.push(k);
                    }
                }
                let mut terms: Vec<Term> = chosen
                    .into_iter()
                    .map(|k| {
                        let freq: Vec<f64> = k.iter().map(|&v| v as f64).collect();
                        Term::new(freq, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                    })
                    .collect();
                let norm = terms
                    .iter()
                    .map(|t| t.cos * t.cos + t.sin * t.sin)
                    .sum::<f64>()
                    .sqrt();
                for t in &mut terms {
                    t.cos /= norm;
                    t.sin /= norm;
                }
                TestFunction::new(format!("psi-{seed}-{i}"), ScalarField::raw(dim, 0.0, terms)?)
            })
            .collect()
    }
}

/// Nonzero integer vectors in the box whose first nonzero entry is positive.
fn half_space_frequencies(dim: usize, bound: i64) -> Vec<Vec<i64>> {
    let side = (2 * bound + 1) as usize;
    let mut out = Vec::new();
    for flat in 0..side.pow(dim as u32) {
        let mut r = flat;
        let mut k = vec![0i64; dim];
        for j in (0..dim).rev() {
            k[j] = (r % side) as i64 - bound;
            r /= side;
        }
        if k.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0) {
            out.push(k);
        }
    }
    out
}

/// A probability measure on the torus that integrates functions.
pub trait Measure: Sync {
    fn dim(&self) -> usize;

    fn integrate(&self, g: &(dyn Fn(&[f64]) -> Result<f64> + Sync)) -> Result<f64>;
}

impl Measure for EmpiricalMeasure {
    fn dim(&self) -> usize {
        EmpiricalMeasure::dim(self)
    }

    fn integrate(&self, g: &(dyn Fn(&[f64]) -> Result<f64> + Sync)) -> Result<f64> {
        EmpiricalMeasure::integrate(self, g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
enum DensityKind {
    /// `σ = b̄ / b`
    Harmonic { b: ScalarField, mean: f64 },
    /// `σ = |det ∇Φ| / (a∘Φ) / Z`
    Rectified {
        a: ScalarField,
        phi: Diffeomorphism,
        normalization: f64,
    },
}

/// An invariant probability density `σ(x) dx`, integrated on a fixed
/// tensor Gauss–Legendre grid.
#[derive(Debug, Clone)]
pub struct DensityField {
    kind: DensityKind,
    grid: TorusGrid,
}

impl DensityField {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// The constant that divides the unnormalized density: `1/b̄` for
    /// harmonic densities, `∫ |det ∇Φ| / (a∘Φ)` for rectified ones.
    pub fn normalization(&self) -> f64 {
        match &self.kind {
            DensityKind::Harmonic { mean, .. } => 1.0 / mean,
            DensityKind::Rectified { normalization, .. } => *normalization,
        }
    }

    fn sigma(&self, x: &[f64]) -> Result<f64> {
        match &self.kind {
            DensityKind::Harmonic { b, mean } => Ok(mean / b.value(x)),
            DensityKind::Rectified {
                a,
                phi,
                normalization,
            } => Ok(rectified_weight(a, phi, x)? / normalization),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        self.sigma(x)
    }

    /// `∫ σ` on the density's grid; 1 up to quadrature error.
    pub fn total_mass(&self) -> Result<f64> {
        self.grid.integrate(|x| self.sigma(x))
    }
}

impl Measure for DensityField {
    fn dim(&self) -> usize {
        DensityField::dim(self)
    }

    fn integrate(&self, g: &(dyn Fn(&[f64]) -> Result<f64> + Sync)) -> Result<f64> {
        self.grid.integrate(|x| Ok(self.sigma(x)? * g(x)?))
    }
}

fn rectified_weight(a: &ScalarField, phi: &Diffeomorphism, x: &[f64]) -> Result<f64> {
    let d = phi.dim();
    let jac = phi.jacobian(x)?;
    let det = DMatrix::from_row_slice(d, d, &jac).determinant();
    Ok(det.abs() / a.value(&phi.forward(x)?))
}

fn density_refinement() -> Refinement {
    Refinement {
        rel_tol: 1e-13,
        ..Refinement::default()
    }
}

/// `σ = b̄/b` with `b̄ = (∫ 1/b)⁻¹`, the invariant density of a
/// nonvanishing one-dimensional field.
pub fn harmonic_density_1d(b: &ScalarField) -> Result<DensityField> {
    check_dim(1, b.dim())?;
    if b.lower_bound() <= 0.0 {
        let (_, min) = b.abs_minimum();
        if min < ZERO_TOL {
            return Err(Error::VanishingField { min });
        }
    }
    let (inv, grid) = adaptive_torus(
        |x| Ok(1.0 / b.value(x)),
        1,
        DENSITY_INITIAL_POINTS,
        density_refinement(),
    )?;
    Ok(DensityField {
        kind: DensityKind::Harmonic {
            b: b.clone(),
            mean: 1.0 / inv,
        },
        grid,
    })
}

/// `σ = det(∇Φ) / (a∘Φ)`, normalized, the invariant density of the
/// rectified field `a(Φ) ∇Φ⁻¹ ξ` for any direction ξ.
pub fn rectified_density(a: &ScalarField, phi: &Diffeomorphism) -> Result<DensityField> {
    check_dim(phi.dim(), a.dim())?;
    if let Positivity::Vanishing { value, .. } = a.positivity() {
        return Err(Error::VanishingField { min: value });
    }
    let (normalization, grid) = adaptive_torus(
        |x| rectified_weight(a, phi, x),
        a.dim(),
        DENSITY_INITIAL_POINTS,
        density_refinement(),
    )?;
    Ok(DensityField {
        kind: DensityKind::Rectified {
            a: a.clone(),
            phi: phi.clone(),
            normalization,
        },
        grid,
    })
}

/// `∫ b·∇ψ dμ`; zero for every ψ exactly when μ is invariant.
pub fn divcurl_residual(spec: &FieldSpec, mu: &dyn Measure, psi: &TestFunction) -> Result<f64> {
    let d = spec.dim();
    check_dim(d, mu.dim())?;
    check_dim(d, psi.dim())?;
    if psi.psi.is_constant() {
        return Ok(0.0);
    }
    let integrand = |x: &[f64]| -> Result<f64> {
        let mut b = vec![0.0; d];
        let mut g = vec![0.0; d];
        spec.eval_into(x, &mut b)?;
        psi.psi.value_grad(x, &mut g);
        Ok(b.iter().zip(&g).map(|(p, q)| p * q).sum())
    };
    mu.integrate(&integrand)
}

/// Estimate of the Lipschitz constant of `b·∇ψ` from central differences
/// on a grid (at most 2^16 points).
pub fn transport_lipschitz(spec: &FieldSpec, psi: &TestFunction) -> Result<f64> {
    let d = spec.dim();
    check_dim(d, psi.dim())?;
    let res = ((65536f64).powf(1.0 / d as f64).floor() as usize).clamp(4, 256);
    let h = 1e-6;
    let transport = |x: &[f64]| -> Result<f64> {
        let b = spec.eval(x)?;
        let mut g = vec![0.0; d];
        psi.psi.value_grad(x, &mut g);
        Ok(b.iter().zip(&g).map(|(p, q)| p * q).sum())
    };
    let mut best = 0.0f64;
    let mut x = vec![0.0; d];
    for flat in 0..res.pow(d as u32) {
        let mut r = flat;
        for j in (0..d).rev() {
            x[j] = (r % res) as f64 / res as f64;
            r /= res;
        }
        let mut norm2 = 0.0;
        for j in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let dj = (transport(&xp)? - transport(&xm)?) / (2.0 * h);
            norm2 += dj * dj;
        }
        best = best.max(norm2.sqrt());
    }
    Ok(best)
}

/// One entry of a residual panel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRecord {
    pub psi_id: String,
    pub horizon: f64,
    pub residual: f64,
    /// `2 max|ψ| / t`, the size of the boundary term for an empirical
    /// measure; infinite for analytic densities.
    pub bound: f64,
}

/// Residuals of `μ` against every ψ in the panel.
pub fn residual_panel(
    spec: &FieldSpec,
    mu: &dyn Measure,
    panel: &[TestFunction],
    horizon: f64,
) -> Result<Vec<ResidualRecord>> {
    panel
        .iter()
        .map(|psi| {
            Ok(ResidualRecord {
                psi_id: psi.id.clone(),
                horizon,
                residual: divcurl_residual(spec, mu, psi)?,
                bound: 2.0 * psi.sup_bound() / horizon,
            })
        })
        .collect()
}

pub fn write_residual_csv<W: Write>(records: &[ResidualRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "psi_id,horizon,residual,bound")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{}",
            r.psi_id,
            crate::format_real(r.horizon),
            crate::format_real(r.residual),
            crate::format_real(r.bound)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_plus_sine() -> ScalarField {
        ScalarField::raw(1, 2.0, vec![Term::sin([1.0], 1.0)]).unwrap()
    }

    #[test]
    fn panel_is_deterministic_and_normalized() {
        let a = TestFunction::panel(2, 10, 7, PANEL_FREQ_BOUND).unwrap();
        let b = TestFunction::panel(2, 10, 7, PANEL_FREQ_BOUND).unwrap();
        assert_eq!(a, b);
        for psi in &a {
            let norm: f64 = psi.psi.terms().iter().map(|t| t.cos * t.cos + t.sin * t.sin).sum();
            assert!((norm - 1.0).abs() < 1e-14);
            for t in psi.psi.terms() {
                assert!(t.freq.iter().all(|k| k.abs() <= 3.0 && k.fract() == 0.0));
            }
        }
    }

    #[test]
    fn half_space_count() {
        assert_eq!(half_space_frequencies(1, 3).len(), 3);
        assert_eq!(half_space_frequencies(2, 3).len(), 24);
    }

    #[test]
    fn harmonic_density_of_two_plus_sine() {
        let sigma = harmonic_density_1d(&two_plus_sine()).unwrap();
        assert!((1.0 / sigma.normalization() - 3f64.sqrt()).abs() < 1e-13);
        assert!((sigma.total_mass().unwrap() - 1.0).abs() < 1e-10);
        let y = 0.3;
        let expect = 3f64.sqrt() / (2.0 + (std::f64::consts::TAU * y).sin());
        assert!((sigma.eval(&[y]).unwrap() - expect).abs() < 1e-13);
    }

    #[test]
    fn harmonic_density_residual_vanishes() {
        let b = two_plus_sine();
        let spec = FieldSpec::one_d(b.clone()).unwrap();
        let sigma = harmonic_density_1d(&b).unwrap();
        let psi = TestFunction::new("sin", ScalarField::raw(1, 0.0, vec![Term::sin([1.0], 1.0)]).unwrap())
            .unwrap();
        assert!(divcurl_residual(&spec, &sigma, &psi).unwrap().abs() < 1e-8);
    }

    #[test]
    fn vanishing_field_has_no_density() {
        let b = ScalarField::squared(
            1,
            0.0,
            vec![Term::cos([0.5], std::f64::consts::FRAC_1_PI.sqrt())],
            0.0,
        )
        .unwrap();
        assert!(matches!(harmonic_density_1d(&b), Err(Error::VanishingField { .. })));
    }

    #[test]
    fn constant_test_function_gives_zero() {
        let spec = FieldSpec::one_d(two_plus_sine()).unwrap();
        let sigma = harmonic_density_1d(&ScalarField::constant(1, 1.0)).unwrap();
        let psi = TestFunction::new("one", ScalarField::constant(1, 1.0)).unwrap();
        assert_eq!(divcurl_residual(&spec, &sigma, &psi).unwrap(), 0.0);
    }

    #[test]
    fn identity_rectified_density_matches_harmonic() {
        let a = ScalarField::raw(2, 2.0, vec![Term::sin([1.0, 0.0], 1.0)]).unwrap();
        let sigma = rectified_density(&a, &Diffeomorphism::identity(2)).unwrap();
        let h = harmonic_density_1d(&two_plus_sine()).unwrap();
        for y in [0.0, 0.13, 0.5, 0.77] {
            let s = sigma.eval(&[y, 0.4]).unwrap();
            assert!((s - h.eval(&[y]).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        write_residual_csv(
            &[ResidualRecord {
                psi_id: "p".into(),
                horizon: 10.0,
                residual: 0.5,
                bound: 0.2,
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "psi_id,horizon,residual,bound\np,10,0.5,0.2\n");
    }
}
