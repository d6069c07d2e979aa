use std::f64::consts::TAU;

use serde::Serialize;

use crate::error::{check_dim, Error, Result};

/// Values below this count as zeros of a field.
pub const ZERO_TOL: f64 = 1e-12;

/// One Fourier mode `c cos(2π k·x) + s sin(2π k·x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Term {
    pub freq: Vec<f64>,
    pub cos: f64,
    pub sin: f64,
}

impl Term {
    pub fn new(freq: impl Into<Vec<f64>>, cos: f64, sin: f64) -> Self {
        Self {
            freq: freq.into(),
            cos,
            sin,
        }
    }

    pub fn cos(freq: impl Into<Vec<f64>>, c: f64) -> Self {
        Self::new(freq, c, 0.0)
    }

    pub fn sin(freq: impl Into<Vec<f64>>, s: f64) -> Self {
        Self::new(freq, 0.0, s)
    }

    fn magnitude(&self) -> f64 {
        self.cos.abs() + self.sin.abs()
    }

    fn freq_norm(&self) -> f64 {
        self.freq.iter().map(|k| k * k).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Mode {
    /// value = q
    Raw,
    /// value = q² + offset
    Squared { offset: f64 },
}

/// Outcome of the positivity decision for a field on the torus.
#[derive(Debug, Clone, PartialEq)]
pub enum Positivity {
    /// Lower bound proven from the coefficients.
    Certified { lower: f64 },
    /// Positive on a sampled grid after local refinement; not a proof.
    Sampled { min: f64, at: Vec<f64> },
    /// A point where the value drops below [`ZERO_TOL`].
    Vanishing { at: Vec<f64>, value: f64 },
}

impl Positivity {
    pub fn is_vanishing(&self) -> bool {
        matches!(self, Positivity::Vanishing { .. })
    }

    /// Smallest value seen (or proven).
    pub fn min(&self) -> f64 {
        match self {
            Positivity::Certified { lower } => *lower,
            Positivity::Sampled { min, .. } => *min,
            Positivity::Vanishing { value, .. } => *value,
        }
    }
}

/// Real trigonometric polynomial on the d-torus,
/// `q(x) = c₀ + Σ_k [c_k cos(2π k·x) + s_k sin(2π k·x)]`,
/// evaluated either as `q` or as `q² + m`.
///
/// Frequencies are integer vectors. In squared mode every frequency may
/// instead lie in a common half-integer coset `k ∈ ℤ^d + h`; then `q` is
/// antiperiodic along the shifted axes and `q²` is still periodic. This is
/// how `cos²(πy)` is written: `q = cos(2π·½·y)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarField {
    dim: usize,
    constant: f64,
    terms: Vec<Term>,
    mode: Mode,
}

impl ScalarField {
    pub fn new(dim: usize, constant: f64, terms: Vec<Term>, mode: Mode) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidField("dimension must be positive".into()));
        }
        if !constant.is_finite() {
            return Err(Error::InvalidField("non-finite constant".into()));
        }
        if let Mode::Squared { offset } = mode {
            if !(offset.is_finite() && offset >= 0.0) {
                return Err(Error::InvalidField(format!(
                    "squared offset must be finite and nonnegative, got {offset}"
                )));
            }
        }
        let mut constant = constant;
        let mut kept: Vec<Term> = Vec::with_capacity(terms.len());
        let mut shift: Option<Vec<bool>> = None;
        for term in terms {
            check_dim(dim, term.freq.len())?;
            if !(term.cos.is_finite() && term.sin.is_finite()) {
                return Err(Error::InvalidField("non-finite coefficient".into()));
            }
            let mut half = Vec::with_capacity(dim);
            for &k in &term.freq {
                let twice = 2.0 * k;
                if !k.is_finite() || twice.fract() != 0.0 {
                    return Err(Error::InvalidField(format!(
                        "frequency component {k} is not an integer or half-integer"
                    )));
                }
                half.push(twice.rem_euclid(2.0) == 1.0);
            }
            if term.freq.iter().all(|&k| k == 0.0) {
                if term.sin != 0.0 {
                    return Err(Error::InvalidField(
                        "zero frequency with a nonzero sine coefficient".into(),
                    ));
                }
                constant += term.cos;
                continue;
            }
            match &shift {
                None => shift = Some(half),
                Some(s) if *s != half => {
                    return Err(Error::InvalidField(
                        "frequencies mix integer and half-integer cosets".into(),
                    ))
                }
                _ => {}
            }
            if kept.iter().any(|t| t.freq == term.freq) {
                return Err(Error::InvalidField(format!(
                    "duplicate frequency {:?}",
                    term.freq
                )));
            }
            kept.push(term);
        }
        if shift.as_ref().is_some_and(|s| s.iter().any(|&h| h)) {
            if mode == Mode::Raw {
                return Err(Error::InvalidField(
                    "half-integer frequencies require squared mode".into(),
                ));
            }
            if constant != 0.0 {
                return Err(Error::InvalidField(
                    "half-integer frequencies cannot carry a constant term".into(),
                ));
            }
        }
        Ok(Self {
            dim,
            constant,
            terms: kept,
            mode,
        })
    }

    pub fn raw(dim: usize, constant: f64, terms: Vec<Term>) -> Result<Self> {
        Self::new(dim, constant, terms, Mode::Raw)
    }

    pub fn squared(dim: usize, constant: f64, terms: Vec<Term>, offset: f64) -> Result<Self> {
        Self::new(dim, constant, terms, Mode::Squared { offset })
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Self::raw(dim, value, Vec::new()).expect("constant field is valid")
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(dim, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.cos == 0.0 && t.sin == 0.0)
    }

    /// Value of the inner polynomial q and its gradient.
    fn inner(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let mut q = self.constant;
        match grad {
            None => {
                for t in &self.terms {
                    let (s, c) = (TAU * phase(&t.freq, x)).sin_cos();
                    q += t.cos * c + t.sin * s;
                }
            }
            Some(g) => {
                g.iter_mut().for_each(|v| *v = 0.0);
                for t in &self.terms {
                    let (s, c) = (TAU * phase(&t.freq, x)).sin_cos();
                    q += t.cos * c + t.sin * s;
                    let dq = TAU * (t.sin * c - t.cos * s);
                    for (gi, ki) in g.iter_mut().zip(&t.freq) {
                        *gi += dq * ki;
                    }
                }
            }
        }
        q
    }

    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let q = self.inner(x, None);
        match self.mode {
            Mode::Raw => q,
            Mode::Squared { offset } => q * q + offset,
        }
    }

    /// Value and gradient, writing the gradient into `grad`.
    pub(crate) fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let q = self.inner(x, Some(grad));
        match self.mode {
            Mode::Raw => q,
            Mode::Squared { offset } => {
                grad.iter_mut().for_each(|g| *g *= 2.0 * q);
                q * q + offset
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(self.value(x))
    }

    /// Exact analytic gradient.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let mut g = vec![0.0; self.dim];
        self.value_grad(x, &mut g);
        Ok(g)
    }

    fn coefficient_sum(&self) -> f64 {
        self.terms.iter().map(Term::magnitude).sum()
    }

    fn inner_sup(&self) -> f64 {
        self.constant.abs() + self.coefficient_sum()
    }

    fn inner_lipschitz(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| TAU * t.freq_norm() * t.magnitude())
            .sum()
    }

    /// Upper bound on |value| from the coefficients.
    pub fn sup_bound(&self) -> f64 {
        match self.mode {
            Mode::Raw => self.inner_sup(),
            Mode::Squared { offset } => self.inner_sup().powi(2) + offset,
        }
    }

    /// Lower bound on value from the coefficients; may be negative.
    pub fn lower_bound(&self) -> f64 {
        let sum = self.coefficient_sum();
        match self.mode {
            Mode::Raw => self.constant - sum,
            Mode::Squared { offset } => {
                let gap = (self.constant.abs() - sum).max(0.0);
                gap * gap + offset
            }
        }
    }

    /// Upper bound on the Euclidean norm of the gradient.
    pub fn lipschitz_bound(&self) -> f64 {
        match self.mode {
            Mode::Raw => self.inner_lipschitz(),
            Mode::Squared { .. } => 2.0 * self.inner_sup() * self.inner_lipschitz(),
        }
    }

    /// `c · self` for `c > 0` (squared fields rescale q by √c).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {c}")));
        }
        let (factor, mode) = match self.mode {
            Mode::Raw => (c, Mode::Raw),
            Mode::Squared { offset } => (c.sqrt(), Mode::Squared { offset: c * offset }),
        };
        let terms = self
            .terms
            .iter()
            .map(|t| Term::new(t.freq.clone(), factor * t.cos, factor * t.sin))
            .collect();
        Self::new(self.dim, factor * self.constant, terms, mode)
    }

    /// Raw field `-self`; fails for squared fields.
    pub fn negated(&self) -> Result<Self> {
        if self.mode != Mode::Raw {
            return Err(Error::InvalidField("cannot negate a squared field".into()));
        }
        let terms = self
            .terms
            .iter()
            .map(|t| Term::new(t.freq.clone(), -t.cos, -t.sin))
            .collect();
        Self::raw(self.dim, -self.constant, terms)
    }

    /// Decides whether the field is bounded away from zero on the torus.
    ///
    /// Squared fields with positive offset, and fields whose coefficient
    /// lower bound is positive, are certified. Otherwise the minimum of the
    /// value over a fine grid is refined by local descent and compared
    /// against [`ZERO_TOL`].
    pub fn positivity(&self) -> Positivity {
        let lower = self.lower_bound();
        if lower > 0.0 {
            return Positivity::Certified { lower };
        }
        let f = |x: &[f64], g: &mut [f64]| self.value_grad(x, g);
        let (at, min) = grid_minimum(self.dim, &f, fine_resolution(self.dim), 8);
        if min < ZERO_TOL {
            Positivity::Vanishing { at, value: min }
        } else {
            Positivity::Sampled { min, at }
        }
    }

    /// Minimum of |value| over the torus, refined on the squared value.
    pub fn abs_minimum(&self) -> (Vec<f64>, f64) {
        let f = |x: &[f64], g: &mut [f64]| {
            let v = self.value_grad(x, g);
            g.iter_mut().for_each(|gi| *gi *= 2.0 * v);
            v * v
        };
        let (at, min_sq) = grid_minimum(self.dim, &f, fine_resolution(self.dim), 8);
        (at, min_sq.max(0.0).sqrt())
    }
}

/// k·x reduced modulo 1 so trig arguments stay small on long trajectories.
#[inline]
fn phase(freq: &[f64], x: &[f64]) -> f64 {
    let mut p = 0.0;
    for (k, xi) in freq.iter().zip(x) {
        if *k != 0.0 {
            // Reduce each product separately; integer k keeps the shift exact.
            let kx = k * xi;
            p += kx - kx.round();
        }
    }
    p
}

/// Per-dimension grid resolution used for positivity decisions: 256 in low
/// dimension, shrinking so the grid stays near 2^20 points.
pub(crate) fn fine_resolution(dim: usize) -> usize {
    let cap = (f64::from(1u32 << 20)).powf(1.0 / dim as f64).floor() as usize;
    cap.clamp(8, 256)
}

type ValueGrad<'a> = dyn Fn(&[f64], &mut [f64]) -> f64 + 'a;

/// Grid search followed by local refinement of the `keep` best grid points.
pub(crate) fn grid_minimum(
    dim: usize,
    f: &ValueGrad<'_>,
    resolution: usize,
    keep: usize,
) -> (Vec<f64>, f64) {
    let total = resolution.pow(dim as u32);
    let mut x = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(keep + 1);
    for idx in 0..total {
        let mut r = idx;
        for j in (0..dim).rev() {
            x[j] = (r % resolution) as f64 / resolution as f64;
            r /= resolution;
        }
        let v = f(&x, &mut g);
        if best.len() < keep || v < best[best.len() - 1].0 {
            let pos = best.partition_point(|(bv, _)| *bv <= v);
            best.insert(pos, (v, idx));
            best.truncate(keep);
        }
    }
    let mut winner = (Vec::new(), f64::INFINITY);
    for (_, idx) in best {
        let mut r = idx;
        for j in (0..dim).rev() {
            x[j] = (r % resolution) as f64 / resolution as f64;
            r /= resolution;
        }
        let (p, v) = local_descent(f, &x);
        if v < winner.1 {
            winner = (p, v);
        }
    }
    winner
}

/// Gradient descent with a Polyak initial step toward zero and Armijo
/// backtracking. The Polyak step makes this a Newton iteration on q for
/// squared fields with a simple zero.
pub(crate) fn local_descent(f: &ValueGrad<'_>, start: &[f64]) -> (Vec<f64>, f64) {
    let dim = start.len();
    let mut x = start.to_vec();
    let mut g = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    let mut v = f(&x, &mut g);
    for _ in 0..200 {
        let g2: f64 = g.iter().map(|gi| gi * gi).sum();
        if g2 == 0.0 || v <= 0.0 {
            break;
        }
        let mut step = (2.0 * v / g2).min(0.05 / g2.sqrt());
        let mut improved = false;
        for _ in 0..60 {
            for j in 0..dim {
                trial[j] = x[j] - step * g[j];
            }
            let vt = f(&trial, &mut scratch);
            if vt <= v - 1e-4 * step * g2 {
                x.copy_from_slice(&trial);
                v = f(&x, &mut g);
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved || step * g2.sqrt() < 1e-16 {
            break;
        }
    }
    (x, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_PI, PI};

    fn cos_squared_over_pi(dim: usize) -> ScalarField {
        let mut k = vec![0.0; dim];
        k[0] = 0.5;
        ScalarField::squared(dim, 0.0, vec![Term::cos(k, FRAC_1_PI.sqrt())], 0.0).unwrap()
    }

    #[test]
    fn constant_field_evaluates_to_constant() {
        let f = ScalarField::constant(3, 1.0);
        assert_eq!(f.eval(&[0.3, -7.0, 12.5]).unwrap(), 1.0);
        assert_eq!(f.grad(&[0.3, -7.0, 12.5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn cos_squared_vanishes_at_half() {
        let a = cos_squared_over_pi(1);
        assert!(a.eval(&[0.5]).unwrap().abs() < 1e-30);
        assert!((a.eval(&[0.0]).unwrap() - FRAC_1_PI).abs() < 1e-16);
        assert!((a.eval(&[0.25]).unwrap() - 0.5 * FRAC_1_PI).abs() < 1e-16);
    }

    #[test]
    fn shifted_sine_at_quarter() {
        let a = ScalarField::raw(1, 2.0, vec![Term::sin([1.0], 1.0)]).unwrap();
        assert!((a.eval(&[0.25]).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn sine_gradient_at_origin() {
        let f = ScalarField::raw(1, 0.0, vec![Term::sin([1.0], 1.0)]).unwrap();
        assert!((f.grad(&[0.0]).unwrap()[0] - 2.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let f = ScalarField::constant(2, 1.0);
        assert_eq!(
            f.eval(&[0.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        );
    }

    #[test]
    fn construction_rejects_bad_frequency_lists() {
        let dup = ScalarField::raw(
            1,
            0.0,
            vec![Term::cos([1.0], 1.0), Term::sin([1.0], 1.0)],
        );
        assert!(matches!(dup, Err(Error::InvalidField(_))));
        let zero_sin = ScalarField::raw(1, 0.0, vec![Term::sin([0.0], 1.0)]);
        assert!(matches!(zero_sin, Err(Error::InvalidField(_))));
        let half_raw = ScalarField::raw(1, 0.0, vec![Term::cos([0.5], 1.0)]);
        assert!(matches!(half_raw, Err(Error::InvalidField(_))));
        let mixed = ScalarField::squared(
            1,
            0.0,
            vec![Term::cos([0.5], 1.0), Term::cos([1.0], 1.0)],
            0.0,
        );
        assert!(matches!(mixed, Err(Error::InvalidField(_))));
        let third = ScalarField::raw(1, 0.0, vec![Term::cos([1.0 / 3.0], 1.0)]);
        assert!(matches!(third, Err(Error::InvalidField(_))));
    }

    #[test]
    fn zero_frequency_cosine_folds_into_constant() {
        let f = ScalarField::raw(2, 1.0, vec![Term::cos([0.0, 0.0], 2.0)]).unwrap();
        assert_eq!(f.constant_term(), 3.0);
        assert!(f.terms().is_empty());
    }

    #[test]
    fn positivity_decisions() {
        let certified = ScalarField::raw(1, 2.0, vec![Term::sin([1.0], 1.0)]).unwrap();
        assert!(matches!(certified.positivity(), Positivity::Certified { lower } if lower == 1.0));
        let ridge = ScalarField::squared(2, 0.0, vec![Term::sin([1.0, 0.0], 1.0)], 0.1).unwrap();
        assert!(matches!(ridge.positivity(), Positivity::Certified { .. }));
        let vanishing = cos_squared_over_pi(2);
        match vanishing.positivity() {
            Positivity::Vanishing { at, value } => {
                assert!(value < ZERO_TOL);
                assert!((at[0].rem_euclid(1.0) - 0.5).abs() < 1e-6);
            }
            other => panic!("expected vanishing, got {other:?}"),
        }
        // q = 2 + sin never vanishes, so q² is positive though m = 0.
        let sampled = ScalarField::squared(1, 2.0, vec![Term::sin([1.0], 1.0)], 0.0).unwrap();
        assert!(matches!(sampled.positivity(), Positivity::Certified { lower } if lower == 1.0));
        // A zero off the grid is found by refinement: sin(2π(y - 0.3001)).
        let off = ScalarField::squared(
            1,
            0.0,
            vec![Term::new(
                [1.0],
                -(TAU * 0.3001).sin(),
                (TAU * 0.3001).cos(),
            )],
            0.0,
        )
        .unwrap();
        assert!(off.positivity().is_vanishing());
    }

    #[test]
    fn periodicity_on_long_lifts() {
        let f = ScalarField::raw(
            2,
            0.3,
            vec![Term::new([1.0, -2.0], 0.4, -0.7), Term::sin([3.0, 1.0], 0.2)],
        )
        .unwrap();
        let x = [0.123, 0.456];
        let base = f.eval(&x).unwrap();
        for shift in [1.0, -3.0, 1000.0] {
            let y = [x[0] + shift, x[1] - 2.0 * shift];
            assert!((f.eval(&y).unwrap() - base).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_keeps_shape() {
        let f = ScalarField::squared(1, 0.0, vec![Term::cos([0.5], 0.8)], 0.2).unwrap();
        let g = f.scaled(3.0).unwrap();
        for y in [0.0, 0.17, 0.5, 0.9] {
            assert!((g.eval(&[y]).unwrap() - 3.0 * f.eval(&[y]).unwrap()).abs() < 1e-14);
        }
    }
}
