use serde::Serialize;

use crate::error::{Error, Result};

/// Default `|k|∞` cutoff for lattice searches.
pub const DEFAULT_SEARCH_BOUND: i64 = 64;

/// Tolerance on `|T ξ − k|` for accepting a rational period.
pub const RATIONAL_TOL: f64 = 1e-12;

const ENUMERATION_CAP: f64 = 5e7;

/// Arithmetic class of a unit direction `ξ` relative to ℤ^d.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DirectionClass {
    /// `T ξ = k` for a primitive lattice vector `k`.
    RationalPeriod { period: f64, lattice: Vec<i64> },
    /// `|ξ·k| > tol` for every `0 < |k|∞ ≤ search_bound`.
    TotallyIrrational { search_bound: i64 },
    /// Some `ξ·k` is within tolerance of zero but `ξ` is not parallel to a
    /// lattice vector within the bound.
    Indeterminate { search_bound: i64 },
}

impl DirectionClass {
    pub fn label(&self) -> &'static str {
        match self {
            DirectionClass::RationalPeriod { .. } => "rational",
            DirectionClass::TotallyIrrational { .. } => "irrational",
            DirectionClass::Indeterminate { .. } => "indeterminate",
        }
    }
}

/// Classifies `xi` by bounded lattice search.
///
/// The rational test walks the multiples `m = 1, 2, …` of the largest
/// component and accepts the first integer vector matching `T ξ` to
/// [`RATIONAL_TOL`]; the first hit is primitive. The irrational test
/// enumerates one half-space of `{-B..B}^d`. When `(2B+1)^d` is too large
/// to enumerate, `B` is lowered and the lowered bound is reported.
pub fn classify_direction(xi: &[f64], search_bound: i64, tol: f64) -> Result<DirectionClass> {
    let d = xi.len();
    let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    if d == 0 || (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "classify_direction needs a unit vector, |xi| = {norm}"
        )));
    }
    if search_bound < 1 {
        return Err(Error::InvalidArgument("search bound must be positive".into()));
    }
    if let Some((period, lattice)) = rational_period(xi, search_bound) {
        return Ok(DirectionClass::RationalPeriod { period, lattice });
    }

    let mut bound = search_bound;
    while bound > 1 && ((2 * bound + 1) as f64).powi(d as i32) > ENUMERATION_CAP {
        bound -= 1;
    }
    if smallest_pairing(xi, bound) > tol {
        Ok(DirectionClass::TotallyIrrational { search_bound: bound })
    } else {
        Ok(DirectionClass::Indeterminate { search_bound: bound })
    }
}

fn rational_period(xi: &[f64], bound: i64) -> Option<(f64, Vec<i64>)> {
    let (lead, lead_val) = xi
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, v)| (i, *v))?;
    for m in 1..=bound {
        let scale = m as f64 / lead_val.abs();
        let mut k: Vec<i64> = xi.iter().map(|v| (scale * v).round() as i64).collect();
        k[lead] = m * lead_val.signum() as i64;
        if k.iter().any(|c| c.abs() > bound) {
            return None;
        }
        let period = k.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
        if xi
            .iter()
            .zip(&k)
            .all(|(v, &c)| (period * v - c as f64).abs() <= RATIONAL_TOL)
        {
            return Some((period, k));
        }
    }
    None
}

/// `min |ξ·k|` over one half-space of `0 < |k|∞ ≤ bound`.
fn smallest_pairing(xi: &[f64], bound: i64) -> f64 {
    let d = xi.len();
    let mut k = vec![-bound; d];
    let mut best = f64::INFINITY;
    loop {
        // Keep k whose first nonzero entry is positive.
        if let Some(first) = k.iter().find(|&&c| c != 0) {
            if *first > 0 {
                let dot: f64 = xi.iter().zip(&k).map(|(v, &c)| v * c as f64).sum();
                best = best.min(dot.abs());
            }
        }
        let mut j = d;
        loop {
            if j == 0 {
                return best;
            }
            j -= 1;
            if k[j] < bound {
                k[j] += 1;
                break;
            }
            k[j] = -bound;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_direction() {
        assert_eq!(
            classify_direction(&[1.0, 0.0], 8, 1e-9).unwrap(),
            DirectionClass::RationalPeriod {
                period: 1.0,
                lattice: vec![1, 0]
            }
        );
    }

    #[test]
    fn diagonal_direction() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match classify_direction(&[s, s], 8, 1e-9).unwrap() {
            DirectionClass::RationalPeriod { period, lattice } => {
                assert_eq!(lattice, vec![1, 1]);
                assert!((period - 2f64.sqrt()).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_rational_direction_is_primitive() {
        let xi = crate::field::unit_vector(&[-2.0, 4.0, 6.0]).unwrap();
        match classify_direction(&xi, 16, 1e-9).unwrap() {
            DirectionClass::RationalPeriod { lattice, .. } => assert_eq!(lattice, vec![-1, 2, 3]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sqrt_two_direction_is_irrational() {
        let xi = [1.0 / 3f64.sqrt(), 2f64.sqrt() / 3f64.sqrt()];
        assert_eq!(
            classify_direction(&xi, 64, 1e-9).unwrap(),
            DirectionClass::TotallyIrrational { search_bound: 64 }
        );
    }

    #[test]
    fn partially_rational_direction_is_indeterminate() {
        // Orthogonal to e₃ but not parallel to any lattice vector.
        let xi = crate::field::unit_vector(&[1.0, 2f64.sqrt(), 0.0]).unwrap();
        assert!(matches!(
            classify_direction(&xi, 8, 1e-9).unwrap(),
            DirectionClass::Indeterminate { search_bound: 8 }
        ));
    }

    #[test]
    fn bound_is_lowered_in_high_dimension() {
        let xi = crate::field::unit_vector(&[1.0, 2f64.sqrt(), 3f64.sqrt(), 5f64.sqrt(), 7f64.sqrt()]).unwrap();
        match classify_direction(&xi, 64, 1e-12).unwrap() {
            DirectionClass::TotallyIrrational { search_bound }
            | DirectionClass::Indeterminate { search_bound } => assert!(search_bound < 64),
            other => panic!("unexpected {other:?}"),
        }
    }
}
