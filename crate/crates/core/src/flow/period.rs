use serde::Serialize;

use super::dopri::{integrate, IntegratorOptions};
use super::line::LineRestriction;
use crate::error::{check_dim, Result};
use crate::field::{classify_direction, DirectionClass, FieldSpec, VectorField, DEFAULT_SEARCH_BOUND};

/// Result of a search for `X(t + τ, x) = X(t, x) + k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodReport {
    pub found: bool,
    pub tau: f64,
    pub lattice: Vec<i64>,
    pub residual: f64,
    /// `x` is an equilibrium: periodic in ℝ^d with `k = 0` for every τ.
    pub stationary: bool,
}

impl PeriodReport {
    fn not_found(dim: usize, residual: f64) -> Self {
        Self {
            found: false,
            tau: 0.0,
            lattice: vec![0; dim],
            residual,
            stationary: false,
        }
    }
}

fn lattice_residual(x_tau: &[f64], x: &[f64], k: &[i64]) -> f64 {
    x_tau
        .iter()
        .zip(x)
        .zip(k)
        .map(|((a, b), &c)| (a - b - c as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Looks for a torus-periodic solution through `x` with period `≤ tau_max`.
///
/// Equilibria are reported as found and stationary. Direction and
/// rectified fields with a rational direction and an amplitude that stays
/// positive on the relevant line get the period from
/// `τ = ∫_0^T ds / a(s ξ + Π y)`, checked by integration. Everything else
/// falls back to scanning the dense output for near-returns modulo ℤ^d and
/// confirming candidates by re-integration.
pub fn detect_torus_period(
    spec: &FieldSpec,
    x: &[f64],
    tau_max: f64,
    tol: f64,
    opts: &IntegratorOptions,
) -> Result<PeriodReport> {
    let d = spec.dim();
    check_dim(d, x.len())?;
    let speed = spec.eval(x)?.iter().map(|v| v * v).sum::<f64>().sqrt();
    if speed < opts.stationary_eps {
        return Ok(PeriodReport {
            found: true,
            tau: tau_max,
            lattice: vec![0; d],
            residual: 0.0,
            stationary: true,
        });
    }

    if let Some(report) = line_period(spec, x, tau_max, tol, opts)? {
        return Ok(report);
    }
    scan_for_return(spec, x, tau_max, tol, opts)
}

fn line_period(
    spec: &FieldSpec,
    x: &[f64],
    tau_max: f64,
    tol: f64,
    opts: &IntegratorOptions,
) -> Result<Option<PeriodReport>> {
    let (a, xi, y, phi) = match spec {
        FieldSpec::Direction { a, xi } => (a, xi, x.to_vec(), None),
        FieldSpec::Rectified { a, xi, phi } => (a, xi, phi.forward(x)?, Some(phi)),
        _ => return Ok(None),
    };
    let DirectionClass::RationalPeriod { period, lattice } =
        classify_direction(xi, DEFAULT_SEARCH_BOUND, 1e-9)?
    else {
        return Ok(None);
    };
    let line = LineRestriction::through(a, xi, &y)?;
    if line.require_positive(0.0, period).is_err() {
        return Ok(None);
    }
    let tau = line.reciprocal_integral(0.0, period)?;
    if tau > tau_max {
        return Ok(Some(PeriodReport::not_found(x.len(), f64::INFINITY)));
    }
    // X-space shift is A⁻¹k for rectified fields.
    let k: Vec<i64> = match phi {
        None => lattice,
        Some(phi) => {
            let d = x.len();
            let inv = phi.lattice_inverse();
            (0..d)
                .map(|i| (0..d).map(|j| inv[i * d + j] * lattice[j]).sum())
                .collect()
        }
    };
    let traj = integrate(spec, x, tau, &quiet(opts))?;
    let residual = lattice_residual(traj.final_state(), x, &k);
    Ok(Some(PeriodReport {
        found: residual <= tol,
        tau,
        lattice: k,
        residual,
        stationary: false,
    }))
}

fn quiet(opts: &IntegratorOptions) -> IntegratorOptions {
    IntegratorOptions {
        checkpoints: super::Checkpoints::Explicit(Vec::new()),
        ..opts.clone()
    }
}

fn distance_to_lattice(p: &[f64], x: &[f64]) -> (f64, Vec<i64>) {
    let k: Vec<i64> = p.iter().zip(x).map(|(a, b)| (a - b).round() as i64).collect();
    (lattice_residual(p, x, &k), k)
}

fn scan_for_return(
    spec: &FieldSpec,
    x: &[f64],
    tau_max: f64,
    tol: f64,
    opts: &IntegratorOptions,
) -> Result<PeriodReport> {
    let d = x.len();
    let mut dense = quiet(opts);
    dense.keep_dense = true;
    let traj = integrate(spec, x, tau_max, &dense)?;

    // Ignore the start until the orbit has clearly left x (mod ℤ^d).
    let departure = (100.0 * tol).max(1e-3);
    let mut departed = false;
    let mut best = f64::INFINITY;
    let mut buf = vec![0.0; d];
    const SUB: usize = 8;
    let mut prev: Option<(f64, f64)> = None;
    let mut falling = false;
    for seg in traj.segments() {
        for j in 1..=SUB {
            let t = seg.t0 + seg.h * j as f64 / SUB as f64;
            seg.eval(t, &mut buf);
            let (dist, _) = distance_to_lattice(&buf, x);
            if !departed {
                departed = dist > departure;
                prev = Some((t, dist));
                continue;
            }
            if let Some((tp, dp)) = prev {
                if dist > dp && falling {
                    // Local minimum near tp: refine by golden section.
                    let lo = (tp - seg.h / SUB as f64).max(0.0);
                    let hi = t;
                    let t_star = golden_min(lo, hi, |s| {
                        let p = traj.state_at(s).unwrap_or_else(|_| buf.clone());
                        distance_to_lattice(&p, x).0
                    });
                    let candidate = traj.state_at(t_star)?;
                    let (dc, _) = distance_to_lattice(&candidate, x);
                    best = best.min(dc);
                    if dc <= 10.0 * tol {
                        let confirm_opts = IntegratorOptions {
                            rtol: (opts.rtol * 0.1).max(1e-14),
                            atol: (opts.atol * 0.1).max(1e-15),
                            ..quiet(opts)
                        };
                        let check = integrate(spec, x, t_star, &confirm_opts)?;
                        let (residual, k) = distance_to_lattice(check.final_state(), x);
                        if residual <= tol {
                            return Ok(PeriodReport {
                                found: true,
                                tau: t_star,
                                lattice: k,
                                residual,
                                stationary: false,
                            });
                        }
                    }
                }
                falling = dist < dp;
            }
            prev = Some((t, dist));
        }
    }
    Ok(PeriodReport::not_found(d, best))
}

fn golden_min<F: Fn(f64) -> f64>(mut lo: f64, mut hi: f64, f: F) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - r * (hi - lo);
    let mut e = lo + r * (hi - lo);
    let (mut fc, mut fe) = (f(c), f(e));
    for _ in 0..80 {
        if fc < fe {
            hi = e;
            e = c;
            fe = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = e;
            fc = fe;
            e = lo + r * (hi - lo);
            fe = f(e);
        }
        if hi - lo < 1e-14 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{MatrixField, ScalarField, Term};

    #[test]
    fn unit_speed_axis_period() {
        let spec = FieldSpec::direction(ScalarField::constant(2, 1.0), &[1.0, 0.0]).unwrap();
        let r = detect_torus_period(&spec, &[0.0, 0.0], 5.0, 1e-9, &IntegratorOptions::default())
            .unwrap();
        assert!(r.found && !r.stationary);
        assert!((r.tau - 1.0).abs() < 1e-14);
        assert_eq!(r.lattice, vec![1, 0]);
    }

    #[test]
    fn equilibrium_is_stationary() {
        let a = ScalarField::squared(1, 0.0, vec![Term::cos([0.5], std::f64::consts::FRAC_1_PI.sqrt())], 0.0)
            .unwrap();
        let spec = FieldSpec::one_d(a).unwrap();
        let r = detect_torus_period(&spec, &[0.5], 10.0, 1e-9, &IntegratorOptions::default())
            .unwrap();
        assert!(r.found && r.stationary);
        assert_eq!(r.lattice, vec![0]);
    }

    #[test]
    fn generic_scan_finds_closed_orbit() {
        // b = (1, 0.2 sin 2πy₁): y₂ returns to 0 after one lap, τ = 1.
        let spec = FieldSpec::generic(vec![
            ScalarField::constant(2, 1.0),
            ScalarField::raw(2, 0.0, vec![Term::sin([1.0, 0.0], 0.2)]).unwrap(),
        ])
        .unwrap();
        let r = detect_torus_period(&spec, &[0.0, 0.0], 3.0, 1e-7, &IntegratorOptions::default())
            .unwrap();
        assert!(r.found, "{r:?}");
        assert_eq!(r.lattice, vec![1, 0]);
        assert!((r.tau - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gradient_flow_has_no_period() {
        let v = ScalarField::raw(2, 0.0, vec![Term::cos([1.0, 1.0], 0.1)]).unwrap();
        let spec = FieldSpec::current(MatrixField::scaled_identity(2, 1.0).unwrap(), v).unwrap();
        let r = detect_torus_period(&spec, &[0.1, 0.05], 20.0, 1e-8, &IntegratorOptions::default())
            .unwrap();
        assert!(!r.found);
    }
}
