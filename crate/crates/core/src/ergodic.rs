//! Time averages along lifted trajectories: Birkhoff averages, drift
//! estimates, empirical measures on a torus grid, and multi-start probes of
//! the set of attainable drifts.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::field::{FieldSpec, ScalarField, VectorField};
use crate::flow::{integrate, IntegratorOptions, Trajectory};
use crate::quadrature::GaussLegendre;

/// Largest number of histogram bins.
pub const MAX_BINS: usize = 100_000_000;

const SEGMENT_RULE_ORDER: usize = 8;

fn segment_rule() -> &'static GaussLegendre {
    static RULE: std::sync::OnceLock<GaussLegendre> = std::sync::OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(SEGMENT_RULE_ORDER))
}

/// `(1/t) ∫_0^t g(X(s)) ds` over `[0, horizon]` by Gauss–Legendre on every
/// dense-output segment.
pub fn time_average<G>(traj: &Trajectory, horizon: f64, mut g: G) -> Result<f64>
where
    G: FnMut(&[f64]) -> Result<f64>,
{
    if !traj.has_dense_output() || horizon.is_nan() || horizon <= 0.0 || horizon > traj.t_end {
        return Err(Error::EmptyTrajectory);
    }
    let rule = segment_rule();
    let mut buf = vec![0.0; traj.dim()];
    let mut total = 0.0;
    for seg in traj.segments() {
        if seg.t0 >= horizon {
            break;
        }
        let hi = seg.t1().min(horizon);
        if seg.travel_bound() == 0.0 {
            seg.eval_theta(0.0, &mut buf);
            total += (hi - seg.t0) * g(&buf)?;
            continue;
        }
        let mut part = 0.0;
        for (t, w) in rule.mapped(seg.t0, hi) {
            seg.eval(t, &mut buf);
            part += w * g(&buf)?;
        }
        total += part;
    }
    Ok(total / horizon)
}

/// Birkhoff average of `f` over the whole trajectory.
pub fn birkhoff_average(traj: &Trajectory, f: &ScalarField) -> Result<f64> {
    check_dim(traj.dim(), f.dim())?;
    time_average(traj, traj.t_end, |x| Ok(f.value(x)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftCheckpoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub drift: Vec<f64>,
}

/// `X(t)/t` along the checkpoint schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftEstimate {
    pub x0: Vec<f64>,
    pub checkpoints: Vec<DriftCheckpoint>,
    /// Drift at the largest checkpoint time.
    pub last: Vec<f64>,
    /// Per-component `max − min` of the drift over checkpoints with
    /// `t ≥ t_final / 4`.
    pub oscillation: Vec<f64>,
}

impl DriftEstimate {
    pub fn norm(&self) -> f64 {
        self.last.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn drift_estimate(traj: &Trajectory) -> Result<DriftEstimate> {
    let checkpoints: Vec<DriftCheckpoint> = traj
        .samples
        .iter()
        .filter(|s| s.t > 0.0)
        .map(|s| DriftCheckpoint {
            t: s.t,
            x: s.x.clone(),
            drift: s.x.iter().map(|v| v / s.t).collect(),
        })
        .collect();
    let last_cp = checkpoints.last().ok_or(Error::EmptyTrajectory)?;
    let last = last_cp.drift.clone();
    let cutoff = last_cp.t / 4.0;
    let d = traj.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for cp in checkpoints.iter().filter(|c| c.t >= cutoff) {
        for j in 0..d {
            lo[j] = lo[j].min(cp.drift[j]);
            hi[j] = hi[j].max(cp.drift[j]);
        }
    }
    let oscillation = hi.iter().zip(&lo).map(|(h, l)| h - l).collect();
    Ok(DriftEstimate {
        x0: traj.x0.clone(),
        checkpoints,
        last,
        oscillation,
    })
}

/// Time-average histogram `ν_t` of the wrapped trajectory on an `n^d` grid.
///
/// Bins are ordered row-major (last coordinate fastest).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMeasure {
    dim: usize,
    resolution: usize,
    weights: Vec<f64>,
    pub horizon: f64,
    pub x0: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for j in (0..self.dim).rev() {
            idx[j] = flat % self.resolution;
            flat /= self.resolution;
        }
        idx
    }

    pub fn bin_center(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .into_iter()
            .map(|i| (i as f64 + 0.5) / self.resolution as f64)
            .collect()
    }

    /// Bin containing `x` after wrapping to `[0, 1)^d`.
    pub fn bin_of(&self, x: &[f64]) -> usize {
        let n = self.resolution;
        x.iter().fold(0, |acc, v| {
            let i = ((v.rem_euclid(1.0) * n as f64).floor() as usize).min(n - 1);
            acc * n + i
        })
    }

    /// Σ weight · g(bin center), skipping empty bins.
    pub fn integrate<G>(&self, mut g: G) -> Result<f64>
    where
        G: FnMut(&[f64]) -> Result<f64>,
    {
        let mut total = 0.0;
        for (flat, &w) in self.weights.iter().enumerate() {
            if w != 0.0 {
                total += w * g(&self.bin_center(flat))?;
            }
        }
        Ok(total)
    }

    /// Horizon-weighted union of two histograms on the same grid.
    pub fn merge(&self, other: &EmpiricalMeasure) -> Result<EmpiricalMeasure> {
        check_dim(self.dim, other.dim)?;
        if self.resolution != other.resolution {
            return Err(Error::InvalidArgument(format!(
                "cannot merge resolutions {} and {}",
                self.resolution, other.resolution
            )));
        }
        let total = self.horizon + other.horizon;
        let (wa, wb) = (self.horizon / total, other.horizon / total);
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| wa * a + wb * b)
            .collect();
        Ok(EmpiricalMeasure {
            dim: self.dim,
            resolution: self.resolution,
            weights,
            horizon: total,
            x0: self.x0.clone(),
        })
    }

    /// CSV rows `i_1..i_d, c_1..c_d, weight` for nonempty bins.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let d = self.dim;
        let names: Vec<String> = (1..=d)
            .map(|j| format!("i{j}"))
            .chain((1..=d).map(|j| format!("c{j}")))
            .chain(std::iter::once("weight".to_string()))
            .collect();
        writeln!(out, "{}", names.join(","))?;
        for (flat, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let idx = self.multi_index(flat);
            let center = self.bin_center(flat);
            let row: Vec<String> = idx
                .iter()
                .map(|i| i.to_string())
                .chain(center.iter().map(|c| crate::format_real(*c)))
                .chain(std::iter::once(crate::format_real(w)))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `ν_t` over the whole trajectory.
pub fn empirical_measure(traj: &Trajectory, n: usize) -> Result<EmpiricalMeasure> {
    empirical_measure_until(traj, n, traj.t_end)
}

/// `ν_t` over `[0, horizon]`.
///
/// Each dense segment is cut into sub-steps short enough to move less than
/// a quarter bin; inside a sub-step the path is treated as a chord and the
/// time between consecutive bin-boundary crossings is credited to the bin
/// containing that piece.
pub fn empirical_measure_until(traj: &Trajectory, n: usize, horizon: f64) -> Result<EmpiricalMeasure> {
    let d = traj.dim();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("resolution must be ≥ 2, got {n}")));
    }
    let bins = (n as f64).powi(d as i32);
    if bins > MAX_BINS as f64 {
        return Err(Error::ResolutionOverflow { resolution: n, dim: d });
    }
    if !traj.has_dense_output() || horizon.is_nan() || horizon <= 0.0 || horizon > traj.t_end {
        return Err(Error::EmptyTrajectory);
    }
    let mut measure = EmpiricalMeasure {
        dim: d,
        resolution: n,
        weights: vec![0.0; bins as usize],
        horizon,
        x0: traj.x0.clone(),
    };
    let nf = n as f64;
    let mut pa = vec![0.0; d];
    let mut pb = vec![0.0; d];
    let mut mid = vec![0.0; d];
    let mut cuts: Vec<f64> = Vec::with_capacity(4 * d + 2);
    for seg in traj.segments() {
        if seg.t0 >= horizon {
            break;
        }
        let hi = seg.t1().min(horizon);
        let span = hi - seg.t0;
        if span <= 0.0 {
            continue;
        }
        let travel = seg.travel_bound() * span / seg.h;
        let pieces = ((4.0 * nf * travel).ceil() as usize).max(1);
        seg.eval(seg.t0, &mut pa);
        for p in 0..pieces {
            let tb = if p + 1 == pieces {
                hi
            } else {
                seg.t0 + span * (p + 1) as f64 / pieces as f64
            };
            let ta = seg.t0 + span * p as f64 / pieces as f64;
            seg.eval(tb, &mut pb);
            let dt = tb - ta;
            cuts.clear();
            cuts.push(0.0);
            for j in 0..d {
                let (a, b) = (pa[j] * nf, pb[j] * nf);
                if a.floor() != b.floor() {
                    let (lo, hi_) = if a < b { (a, b) } else { (b, a) };
                    let mut c = lo.floor() + 1.0;
                    while c <= hi_ {
                        cuts.push((c - a) / (b - a));
                        c += 1.0;
                    }
                }
            }
            cuts.push(1.0);
            cuts.sort_by(f64::total_cmp);
            for w in cuts.windows(2) {
                let frac = w[1] - w[0];
                if frac <= 0.0 {
                    continue;
                }
                let lam = 0.5 * (w[0] + w[1]);
                for j in 0..d {
                    mid[j] = pa[j] + lam * (pb[j] - pa[j]);
                }
                let bin = measure.bin_of(&mid);
                measure.weights[bin] += frac * dt;
            }
            std::mem::swap(&mut pa, &mut pb);
        }
    }
    let total: f64 = measure.weights.iter().sum();
    measure.weights.iter_mut().for_each(|w| *w /= total);
    Ok(measure)
}

/// `∫ f dμ` by the midpoint rule on bin centers.
pub fn measure_average(mu: &EmpiricalMeasure, f: &ScalarField) -> Result<f64> {
    check_dim(mu.dim(), f.dim())?;
    mu.integrate(|x| Ok(f.value(x)))
}

/// `∫ b dμ` by the midpoint rule on bin centers.
pub fn measure_vector_average(mu: &EmpiricalMeasure, spec: &FieldSpec) -> Result<Vec<f64>> {
    check_dim(mu.dim(), spec.dim())?;
    let d = spec.dim();
    let mut acc = vec![0.0; d];
    let mut b = vec![0.0; d];
    for (flat, &w) in mu.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        spec.eval_into(&mu.bin_center(flat), &mut b)?;
        for j in 0..d {
            acc[j] += w * b[j];
        }
    }
    Ok(acc)
}

/// Drift estimates from a panel of starts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CbProbe {
    pub estimates: Vec<DriftEstimate>,
    /// `∫ b dν_t` per start at the probe's grid resolution.
    pub measure_averages: Vec<Vec<f64>>,
    /// Largest pairwise distance between final drifts.
    pub diameter: f64,
}

/// Integrates every start (in parallel), and reports the spread of the
/// final drifts. A small diameter is evidence, not proof, of a single
/// limit; a large one shows start-dependent limits.
pub fn cb_probe(
    spec: &FieldSpec,
    starts: &[Vec<f64>],
    t_end: f64,
    n: usize,
    opts: &IntegratorOptions,
) -> Result<CbProbe> {
    if starts.len() < 2 {
        return Err(Error::InvalidArgument("cb_probe needs at least two starts".into()));
    }
    let per_start: Vec<Result<(DriftEstimate, Vec<f64>)>> = starts
        .par_iter()
        .map(|x0| {
            let traj = integrate(spec, x0, t_end, opts)?;
            let est = drift_estimate(&traj)?;
            let mu = empirical_measure(&traj, n)?;
            Ok((est, measure_vector_average(&mu, spec)?))
        })
        .collect();
    let mut estimates = Vec::with_capacity(starts.len());
    let mut measure_averages = Vec::with_capacity(starts.len());
    for r in per_start {
        let (e, m) = r?;
        estimates.push(e);
        measure_averages.push(m);
    }
    let diameter = diameter(estimates.iter().map(|e| e.last.as_slice()));
    Ok(CbProbe {
        estimates,
        measure_averages,
        diameter,
    })
}

/// Largest pairwise Euclidean distance.
pub fn diameter<'a>(points: impl Iterator<Item = &'a [f64]>) -> f64 {
    let pts: Vec<&[f64]> = points.collect();
    let mut best = 0.0f64;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = pts[i]
                .iter()
                .zip(pts[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            best = best.max(d);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Term;

    fn unit_rotation_1d(t_end: f64) -> Trajectory {
        let spec = FieldSpec::one_d(ScalarField::constant(1, 1.0)).unwrap();
        integrate(&spec, &[0.0], t_end, &IntegratorOptions::default()).unwrap()
    }

    #[test]
    fn constant_integrand_average() {
        let traj = unit_rotation_1d(7.5);
        let c = ScalarField::constant(1, 2.5);
        assert!((birkhoff_average(&traj, &c).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_rotation_gives_uniform_histogram() {
        let traj = unit_rotation_1d(20.0);
        let mu = empirical_measure(&traj, 16).unwrap();
        assert!((mu.total_mass() - 1.0).abs() < 1e-12);
        for w in mu.weights() {
            assert!((w - 1.0 / 16.0).abs() < 1.0 / (16.0 * 20.0), "{w}");
        }
    }

    #[test]
    fn stationary_trajectory_is_a_dirac() {
        let spec = FieldSpec::one_d(ScalarField::raw(1, 0.0, vec![Term::sin([1.0], 1.0)]).unwrap())
            .unwrap();
        // Start exactly at the equilibrium y = 0.
        let traj = integrate(&spec, &[0.0], 50.0, &IntegratorOptions::default()).unwrap();
        let mu = empirical_measure(&traj, 10).unwrap();
        assert_eq!(mu.weights()[0], 1.0);
        assert!(mu.weights()[1..].iter().all(|&w| w == 0.0));
    }

    #[test]
    fn resolution_guards() {
        let traj = unit_rotation_1d(1.0);
        assert!(matches!(empirical_measure(&traj, 1), Err(Error::InvalidArgument(_))));
        let spec = FieldSpec::direction(ScalarField::constant(3, 1.0), &[1.0, 0.0, 0.0]).unwrap();
        let traj3 = integrate(&spec, &[0.0; 3], 1.0, &IntegratorOptions::default()).unwrap();
        assert!(matches!(
            empirical_measure(&traj3, 1000),
            Err(Error::ResolutionOverflow { .. })
        ));
    }

    #[test]
    fn drift_of_constant_field_is_exact() {
        let spec = FieldSpec::direction(ScalarField::constant(2, 1.0), &[3.0, 4.0]).unwrap();
        let traj = integrate(&spec, &[0.0, 0.0], 64.0, &IntegratorOptions::default()).unwrap();
        let est = drift_estimate(&traj).unwrap();
        for cp in &est.checkpoints {
            assert!((cp.drift[0] - 0.6).abs() < 1e-14 && (cp.drift[1] - 0.8).abs() < 1e-14);
        }
        assert!(est.oscillation.iter().all(|o| *o < 1e-14));
    }

    #[test]
    fn merge_is_horizon_weighted() {
        let a = empirical_measure(&unit_rotation_1d(1.0), 4).unwrap();
        let b = empirical_measure(&unit_rotation_1d(3.0), 4).unwrap();
        let m = a.merge(&b).unwrap();
        assert_eq!(m.horizon, 4.0);
        assert!((m.total_mass() - 1.0).abs() < 1e-15);
        let c = b.merge(&a).unwrap();
        for (x, y) in m.weights().iter().zip(c.weights()) {
            assert!((x - y).abs() < 1e-16);
        }
    }

    #[test]
    fn csv_lists_nonempty_bins() {
        let mu = empirical_measure(&unit_rotation_1d(2.0), 4).unwrap();
        let mut buf = Vec::new();
        mu.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("i1,c1,weight"));
        assert_eq!(lines.count(), 4);
    }
}
