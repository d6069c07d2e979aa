//! Closed-form large-time drifts for the structured field families.

use std::fmt;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Error, Result};
use crate::field::{
    classify_direction, DirectionClass, FieldSpec, Mode, Positivity, ScalarField, VectorField,
    DEFAULT_SEARCH_BOUND, RATIONAL_TOL, ZERO_TOL,
};
use crate::flow::LineRestriction;
use crate::quadrature::{adaptive_torus, Refinement};

/// Points per dimension of the first harmonic-mean quadrature.
pub const HARMONIC_INITIAL_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CaseTag {
    OneDPositive,
    OneDVanishing,
    IrrationalPositive,
    IrrationalVanishing,
    RationalLinePositive,
    RationalLineVanishing,
    Rectified,
    Current,
    Unsupported,
}

impl CaseTag {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseTag::OneDPositive => "OneD-positive",
            CaseTag::OneDVanishing => "OneD-vanishing",
            CaseTag::IrrationalPositive => "Irrational-positive",
            CaseTag::IrrationalVanishing => "Irrational-vanishing",
            CaseTag::RationalLinePositive => "Rational-line-positive",
            CaseTag::RationalLineVanishing => "Rational-line-vanishing",
            CaseTag::Rectified => "Rectified",
            CaseTag::Current => "Current",
            CaseTag::Unsupported => "Unsupported",
        }
    }

    /// Tags whose prediction is the zero vector by construction.
    pub fn is_zero_case(self) -> bool {
        matches!(
            self,
            CaseTag::OneDVanishing
                | CaseTag::IrrationalVanishing
                | CaseTag::RationalLineVanishing
                | CaseTag::Current
        )
    }
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftPrediction {
    pub value: Vec<f64>,
    pub case_tag: CaseTag,
    /// sha256 of the field digest, start point and direction class.
    pub digest: String,
    /// Caveats such as positivity that was sampled rather than certified.
    pub notes: Vec<String>,
}

/// `(∫_{[0,1]^d} 1/a)⁻¹` for a strictly positive `a`.
pub fn harmonic_mean(a: &ScalarField, initial_points: usize) -> Result<f64> {
    if let Positivity::Vanishing { value, .. } = a.positivity() {
        return Err(Error::VanishingField { min: value });
    }
    if a.is_constant() {
        return Ok(a.value(&vec![0.0; a.dim()]));
    }
    let refinement = Refinement {
        rel_tol: 1e-12,
        ..Refinement::default()
    };
    let (inv, _) = adaptive_torus(|x| Ok(1.0 / a.value(x)), a.dim(), initial_points, refinement)?;
    Ok(1.0 / inv)
}

/// `(1/T ∫_0^T ds / a(s ξ + Π x))⁻¹` over one period `T` of the line.
pub fn line_harmonic_mean(a: &ScalarField, xi: &[f64], period: f64, x: &[f64]) -> Result<f64> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidArgument(format!("period must be positive, got {period}")));
    }
    let line = LineRestriction::through(a, xi, x)?;
    line.require_positive(0.0, period)?;
    Ok(period / line.reciprocal_integral(0.0, period)?)
}

fn prediction_digest(spec: &FieldSpec, x: &[f64], class: Option<&DirectionClass>) -> String {
    let payload = serde_json::json!({
        "field": spec.digest(),
        "x": x,
        "class": class,
    });
    let hash = Sha256::digest(payload.to_string().as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// Drift magnitude `a*` of the direction field `a ξ` through `y`, with the
/// tag of the branch that produced it.
fn direction_speed(
    a: &ScalarField,
    xi: &[f64],
    y: &[f64],
    class: &DirectionClass,
    notes: &mut Vec<String>,
) -> Result<(f64, CaseTag)> {
    match class {
        DirectionClass::TotallyIrrational { .. } => match a.positivity() {
            Positivity::Vanishing { .. } => Ok((0.0, CaseTag::IrrationalVanishing)),
            p => {
                if let Positivity::Sampled { min, .. } = p {
                    notes.push(format!("positivity sampled, not certified (min {min:e})"));
                }
                Ok((harmonic_mean(a, HARMONIC_INITIAL_POINTS)?, CaseTag::IrrationalPositive))
            }
        },
        DirectionClass::RationalPeriod { period, .. } => {
            match line_harmonic_mean(a, xi, *period, y) {
                Ok(v) => Ok((v, CaseTag::RationalLinePositive)),
                Err(Error::VanishesOnLine { .. }) => Ok((0.0, CaseTag::RationalLineVanishing)),
                Err(e) => Err(e),
            }
        }
        DirectionClass::Indeterminate { .. } => Ok((0.0, CaseTag::Unsupported)),
    }
}

/// Drift of the one-dimensional field `b`: `b̄ = (∫ 1/b)⁻¹` when `b` has no
/// zero, and 0 otherwise (an equilibrium blocks every trajectory).
fn one_d_drift(b: &ScalarField) -> Result<(f64, CaseTag)> {
    if b.lower_bound() <= 0.0 {
        let (_, min) = b.abs_minimum();
        if min < ZERO_TOL {
            return Ok((0.0, CaseTag::OneDVanishing));
        }
    }
    let negative = b.mode() == Mode::Raw && b.value(&[0.0]) < 0.0;
    if negative {
        Ok((-harmonic_mean(&b.negated()?, HARMONIC_INITIAL_POINTS)?, CaseTag::OneDPositive))
    } else {
        Ok((harmonic_mean(b, HARMONIC_INITIAL_POINTS)?, CaseTag::OneDPositive))
    }
}

/// The predicted limit of `X(t, x)/t`.
///
/// `class` is the direction class of ξ for direction and rectified fields;
/// it is computed with the default search bound when omitted.
pub fn predict_drift(
    spec: &FieldSpec,
    x: &[f64],
    class: Option<&DirectionClass>,
) -> Result<DriftPrediction> {
    let d = spec.dim();
    check_dim(d, x.len())?;
    let mut notes = Vec::new();
    let owned_class;
    let class = match (spec, class) {
        (FieldSpec::Direction { xi, .. } | FieldSpec::Rectified { xi, .. }, None) => {
            owned_class = classify_direction(xi, DEFAULT_SEARCH_BOUND, RATIONAL_TOL)?;
            Some(&owned_class)
        }
        (_, c) => c,
    };
    let (value, case_tag) = match spec {
        FieldSpec::OneD { b } => {
            let (v, tag) = one_d_drift(b)?;
            (vec![v], tag)
        }
        FieldSpec::Direction { a, xi } => {
            let class = class.expect("class resolved above");
            let (speed, tag) = direction_speed(a, xi, x, class, &mut notes)?;
            (xi.iter().map(|e| speed * e).collect(), tag)
        }
        FieldSpec::Rectified { a, xi, phi } => {
            let class = class.expect("class resolved above");
            let y = phi.forward(x)?;
            let (speed, tag) = direction_speed(a, xi, &y, class, &mut notes)?;
            if tag == CaseTag::Unsupported {
                (vec![0.0; d], CaseTag::Unsupported)
            } else {
                let dir = phi.apply_lattice_inverse(xi);
                (dir.iter().map(|e| speed * e).collect(), CaseTag::Rectified)
            }
        }
        FieldSpec::Current { .. } => (vec![0.0; d], CaseTag::Current),
        FieldSpec::Generic { .. } => (vec![0.0; d], CaseTag::Unsupported),
    };
    if case_tag == CaseTag::Unsupported {
        notes.push(match spec {
            FieldSpec::Generic { .. } => "no closed form for generic fields".to_string(),
            _ => "direction class indeterminate at the search bound".to_string(),
        });
    }
    Ok(DriftPrediction {
        value,
        case_tag,
        digest: prediction_digest(spec, x, class),
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Diffeomorphism, MatrixField, Term};
    use std::f64::consts::FRAC_1_PI;

    fn product_amplitude() -> ScalarField {
        // 2 + sin(2πy₁)cos(2πy₂)
        ScalarField::raw(
            2,
            2.0,
            vec![Term::sin([1.0, 1.0], 0.5), Term::sin([1.0, -1.0], 0.5)],
        )
        .unwrap()
    }

    fn cos_squared(dim: usize) -> ScalarField {
        let mut k = vec![0.0; dim];
        k[0] = 0.5;
        ScalarField::squared(dim, 0.0, vec![Term::cos(k, FRAC_1_PI.sqrt())], 0.0).unwrap()
    }

    #[test]
    fn constant_harmonic_mean() {
        assert_eq!(harmonic_mean(&ScalarField::constant(3, 2.5), 64).unwrap(), 2.5);
    }

    #[test]
    fn one_d_harmonic_mean() {
        let a = ScalarField::raw(1, 2.0, vec![Term::sin([1.0], 1.0)]).unwrap();
        assert!((harmonic_mean(&a, 64).unwrap() - 3f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn two_d_harmonic_mean() {
        let v = harmonic_mean(&product_amplitude(), 64).unwrap();
        assert!((v - 1.863_616_783_244_896_5).abs() < 1e-12, "{v}");
    }

    #[test]
    fn vanishing_harmonic_mean() {
        assert!(matches!(
            harmonic_mean(&cos_squared(1), 64),
            Err(Error::VanishingField { .. })
        ));
    }

    #[test]
    fn line_means() {
        let a = product_amplitude();
        let cases = [
            (0.0, 1.732_050_807_568_877_3),
            (0.125, 1.870_828_693_386_970_7),
            (0.25, 2.0),
        ];
        for (x2, expect) in cases {
            let v = line_harmonic_mean(&a, &[1.0, 0.0], 1.0, &[0.0, x2]).unwrap();
            assert!((v - expect).abs() < 1e-12, "{x2}: {v}");
        }
    }

    #[test]
    fn tags_render() {
        assert_eq!(CaseTag::RationalLineVanishing.to_string(), "Rational-line-vanishing");
        assert_eq!(CaseTag::OneDPositive.to_string(), "OneD-positive");
    }

    #[test]
    fn current_predicts_zero() {
        let v = ScalarField::raw(2, 0.0, vec![Term::cos([1.0, 1.0], 0.3)]).unwrap();
        let spec = FieldSpec::current(MatrixField::scaled_identity(2, 1.0).unwrap(), v).unwrap();
        let p = predict_drift(&spec, &[0.1, 0.2], None).unwrap();
        assert_eq!(p.value, vec![0.0, 0.0]);
        assert_eq!(p.case_tag, CaseTag::Current);
    }

    #[test]
    fn rational_vanishing_line() {
        let spec = FieldSpec::direction(cos_squared(2), &[1.0, 0.0]).unwrap();
        let p = predict_drift(&spec, &[0.0, 0.3], None).unwrap();
        assert_eq!(p.case_tag, CaseTag::RationalLineVanishing);
        assert_eq!(p.value, vec![0.0, 0.0]);
    }

    #[test]
    fn sign_changing_one_d() {
        let b = ScalarField::raw(1, 0.0, vec![Term::sin([1.0], 1.0)]).unwrap();
        let p = predict_drift(&FieldSpec::one_d(b).unwrap(), &[0.2], None).unwrap();
        assert_eq!(p.case_tag, CaseTag::OneDVanishing);
        assert_eq!(p.value, vec![0.0]);
    }

    #[test]
    fn negative_one_d() {
        let b = ScalarField::raw(1, -2.0, vec![Term::sin([1.0], 1.0)]).unwrap();
        let p = predict_drift(&FieldSpec::one_d(b).unwrap(), &[0.2], None).unwrap();
        assert!((p.value[0] + 3f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn identity_rectification_is_bitwise_direction() {
        let a = product_amplitude();
        let xi = [1.0, 0.0];
        let direct = FieldSpec::direction(a.clone(), &xi).unwrap();
        let rect = FieldSpec::rectified(a, &xi, Diffeomorphism::identity(2)).unwrap();
        for x in [[0.0, 0.0], [0.3, 0.125], [-2.2, 0.4]] {
            let p = predict_drift(&direct, &x, None).unwrap();
            let q = predict_drift(&rect, &x, None).unwrap();
            assert_eq!(p.value, q.value);
        }
    }

    #[test]
    fn sheared_rectification_direction() {
        let a = ScalarField::raw(2, 2.0, vec![Term::sin([1.0, 0.0], 1.0)]).unwrap();
        let phi = Diffeomorphism::new(
            2,
            vec![1, 1, 0, 1],
            vec![
                ScalarField::raw(2, 0.0, vec![Term::sin([0.0, 1.0], 0.05)]).unwrap(),
                ScalarField::raw(2, 0.0, vec![Term::sin([1.0, 0.0], 0.05)]).unwrap(),
            ],
        )
        .unwrap();
        let spec = FieldSpec::rectified(a, &[1.0, 0.0], phi).unwrap();
        let p = predict_drift(&spec, &[0.1, 0.2], None).unwrap();
        assert_eq!(p.case_tag, CaseTag::Rectified);
        assert!((p.value[0] - 3f64.sqrt()).abs() < 1e-12);
        assert!(p.value[1].abs() < 1e-15);
    }

    #[test]
    fn predictions_are_deterministic() {
        let spec = FieldSpec::direction(product_amplitude(), &[1.0, 2f64.sqrt()]).unwrap();
        let p = predict_drift(&spec, &[0.1, 0.2], None).unwrap();
        let q = predict_drift(&spec, &[0.1, 0.2], None).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.case_tag, CaseTag::IrrationalPositive);
    }
}
