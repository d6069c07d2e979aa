//! Dormand–Prince 5(4) with Hairer's PI step control and 5th-order dense
//! output, integrating in the lifted space (no wrapping).

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::field::VectorField;

const A21: f64 = 0.2;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Where trajectory samples are recorded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Checkpoints {
    /// `t_j = first · ratio^j`, capped at the horizon.
    Geometric { first: f64, ratio: f64 },
    Explicit(Vec<f64>),
}

impl Default for Checkpoints {
    fn default() -> Self {
        Checkpoints::Geometric {
            first: 1.0,
            ratio: 2.0,
        }
    }
}

impl Checkpoints {
    /// Strictly increasing times in `(0, t_end]`, always ending at `t_end`.
    pub fn schedule(&self, t_end: f64) -> Vec<f64> {
        let mut times = Vec::new();
        match self {
            Checkpoints::Geometric { first, ratio } => {
                let mut t = *first;
                while t < t_end && *ratio > 1.0 && t > 0.0 {
                    times.push(t);
                    t *= ratio;
                }
            }
            Checkpoints::Explicit(list) => {
                let mut sorted: Vec<f64> =
                    list.iter().copied().filter(|&t| t > 0.0 && t < t_end).collect();
                sorted.sort_by(f64::total_cmp);
                sorted.dedup();
                times = sorted;
            }
        }
        times.push(t_end);
        times
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub checkpoints: Checkpoints,
    /// Mean speed (net displacement over the dwell window divided by its
    /// length) below which the state counts as stationary. The pointwise
    /// speed must also stay below `100 · stationary_eps` throughout.
    pub stationary_eps: f64,
    /// Length of the window over which stationarity is judged.
    pub stationary_dwell: f64,
    pub max_steps: usize,
    /// Keep per-step dense output (needed for averages and measures).
    pub keep_dense: bool,
    pub h_max: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            checkpoints: Checkpoints::default(),
            stationary_eps: 1e-10,
            stationary_dwell: 10.0,
            max_steps: 50_000_000,
            keep_dense: true,
            h_max: None,
        }
    }
}

impl IntegratorOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryExit {
    pub t: f64,
    pub speed: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// One accepted step's dense interpolant on `[t0, t0 + h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub h: f64,
    /// Five blocks of `d` coefficients.
    coeffs: Vec<f64>,
}

impl Segment {
    fn constant(t0: f64, h: f64, x: &[f64]) -> Self {
        let d = x.len();
        let mut coeffs = vec![0.0; 5 * d];
        coeffs[..d].copy_from_slice(x);
        Self { t0, h, coeffs }
    }

    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len() / 5
    }

    /// State at normalized time `theta ∈ [0, 1]`.
    pub fn eval_theta(&self, theta: f64, out: &mut [f64]) {
        let d = self.dim();
        let c = &self.coeffs;
        let th1 = 1.0 - theta;
        for i in 0..d {
            out[i] = c[i]
                + theta
                    * (c[d + i]
                        + th1 * (c[2 * d + i] + theta * (c[3 * d + i] + th1 * c[4 * d + i])));
        }
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let theta = if self.h > 0.0 {
            ((t - self.t0) / self.h).clamp(0.0, 1.0)
        } else {
            0.0
        };
        self.eval_theta(theta, out);
    }

    /// Crude bound on the distance travelled within the segment.
    pub fn travel_bound(&self) -> f64 {
        let d = self.dim();
        let block_max = |b: usize| {
            self.coeffs[b * d..(b + 1) * d]
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
        };
        block_max(1) + block_max(2) + block_max(3) + block_max(4)
    }
}

/// Lifted path `X(t, x0)` with checkpoint samples and dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub spec_id: String,
    pub x0: Vec<f64>,
    /// Starts at `(0, x0)`, then one sample per checkpoint.
    pub samples: Vec<Sample>,
    pub t_end: f64,
    pub rtol: f64,
    pub atol: f64,
    pub stationary_exit: Option<StationaryExit>,
    pub stats: IntegratorStats,
    segments: Vec<Segment>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn horizon(&self) -> f64 {
        self.t_end
    }

    pub fn final_state(&self) -> &[f64] {
        &self.samples.last().expect("trajectory has samples").x
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn has_dense_output(&self) -> bool {
        !self.segments.is_empty()
    }

    /// `X(t)` from the dense output.
    pub fn state_at(&self, t: f64) -> Result<Vec<f64>> {
        if self.segments.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        if !(0.0..=self.t_end).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "t = {t} outside [0, {}]",
                self.t_end
            )));
        }
        if t == self.t_end {
            return Ok(self.final_state().to_vec());
        }
        let idx = self
            .segments
            .partition_point(|s| s.t1() <= t)
            .min(self.segments.len() - 1);
        let mut out = vec![0.0; self.dim()];
        self.segments[idx].eval(t, &mut out);
        Ok(out)
    }
}

/// RMS of `err / (atol + rtol·min(|y|, 1))`. Capping the relative scale at
/// one period keeps the accuracy of a lifted run from degrading as it winds.
fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], rtol: f64, atol: f64) -> f64 {
    let n = err.len() as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sk = atol + rtol * a.abs().max(b.abs()).min(1.0);
            (e / sk).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

struct Rhs<'a, F: ?Sized> {
    field: &'a F,
    evaluations: usize,
}

impl<F: VectorField + ?Sized> Rhs<'_, F> {
    fn call(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.evaluations += 1;
        self.field.eval_into(x, out)
    }
}

fn initial_step<F: VectorField + ?Sized>(
    rhs: &mut Rhs<'_, F>,
    y: &[f64],
    f0: &[f64],
    rtol: f64,
    atol: f64,
    h_max: f64,
) -> Result<f64> {
    let d = y.len();
    let sk: Vec<f64> = y.iter().map(|v| atol + rtol * v.abs().min(1.0)).collect();
    let dnf: f64 = f0.iter().zip(&sk).map(|(f, s)| (f / s).powi(2)).sum();
    let dny: f64 = y.iter().zip(&sk).map(|(v, s)| (v / s).powi(2)).sum();
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(h_max);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(v, f)| v + h * f).collect();
    let mut f1 = vec![0.0; d];
    rhs.call(&y1, &mut f1)?;
    let der2 = f1
        .iter()
        .zip(f0)
        .zip(&sk)
        .map(|((a, b), s)| ((a - b) / s).powi(2))
        .sum::<f64>()
        .sqrt()
        / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    Ok((100.0 * h).min(h1).min(h_max))
}

/// Integrates `X' = b(X)` from `x0` on `[0, t_end]`.
///
/// Once the state is stationary in the sense of [`IntegratorOptions`], it
/// is frozen for the rest of the horizon and the exit is recorded on the
/// trajectory. The mean-speed test matters near attracting equilibria,
/// where step-size control parks the state at an offset of a few `atol`.
///
/// For lattice-periodic fields the state is carried relative to the integer
/// point nearest `x0`, and the relative tolerance applies to that offset.
/// Shifting `x0` by a lattice vector then shifts the whole trajectory by
/// exactly that vector.
pub fn integrate<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    let d = field.dim();
    check_dim(d, x0.len())?;
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InvalidArgument(format!("t_end must be positive, got {t_end}")));
    }
    for (name, tol) in [("rtol", opts.rtol), ("atol", opts.atol)] {
        if !(tol > 0.0 && tol <= 1e-2) {
            return Err(Error::InvalidArgument(format!("{name} = {tol} outside (0, 1e-2]")));
        }
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t: 0.0 });
    }
    let (rtol, atol) = (opts.rtol, opts.atol);
    let h_max = opts.h_max.unwrap_or(t_end).min(t_end);
    let schedule = opts.checkpoints.schedule(t_end);
    let mut next_cp = 0;

    let mut rhs = Rhs {
        field,
        evaluations: 0,
    };
    let mut samples = vec![Sample {
        t: 0.0,
        x: x0.to_vec(),
    }];
    let mut segments = Vec::new();
    let mut stats = IntegratorStats::default();
    let mut stationary_exit = None;

    let anchor: Vec<f64> = if field.lattice_periodic() {
        x0.iter().map(|v| v.round()).collect()
    } else {
        vec![0.0; d]
    };
    let lift = |z: &[f64]| -> Vec<f64> { z.iter().zip(&anchor).map(|(a, b)| a + b).collect() };

    let mut t = 0.0;
    let mut y: Vec<f64> = x0.iter().zip(&anchor).map(|(a, b)| a - b).collect();
    let mut k1 = vec![0.0; d];
    rhs.call(&y, &mut k1)?;
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
    );
    let mut ytmp = vec![0.0; d];
    let mut ynew = vec![0.0; d];
    let mut err = vec![0.0; d];
    let mut cp_buf = vec![0.0; d];

    let mut h = initial_step(&mut rhs, &y, &k1, rtol, atol, h_max)?;
    let mut facold = 1e-4f64;
    let mut last_rejected = false;
    let mut dwell_start: Option<(f64, Vec<f64>)> = None;
    let expo1 = 0.2 - BETA * 0.75;

    while t < t_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::MaxStepsExceeded(opts.max_steps));
        }
        if h <= 10.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let last = t + 1.01 * h >= t_end;
        if last {
            h = t_end - t;
        }

        for i in 0..d {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs.call(&ytmp, &mut k2)?;
        for i in 0..d {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs.call(&ytmp, &mut k3)?;
        for i in 0..d {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs.call(&ytmp, &mut k4)?;
        for i in 0..d {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs.call(&ytmp, &mut k5)?;
        for i in 0..d {
            ytmp[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs.call(&ytmp, &mut k6)?;
        for i in 0..d {
            ynew[i] =
                y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        rhs.call(&ynew, &mut k7)?;
        for i in 0..d {
            err[i] = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let errn = error_norm(&err, &y, &ynew, rtol, atol);

        if !errn.is_finite() || ynew.iter().any(|v| !v.is_finite()) {
            stats.rejected += 1;
            last_rejected = true;
            h *= FAC_MIN;
            if h <= 10.0 * f64::EPSILON * t.abs().max(1.0) {
                return Err(Error::NonFinite { t });
            }
            continue;
        }

        let fac11 = errn.powf(expo1);
        let fac = (fac11 / facold.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
        let mut h_new = h / fac;

        if errn <= 1.0 {
            facold = errn.max(1e-4);
            stats.accepted += 1;
            let t_new = if last { t_end } else { t + h };

            if opts.keep_dense || next_cp < schedule.len() {
                let mut coeffs = vec![0.0; 5 * d];
                for i in 0..d {
                    let ydiff = ynew[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    coeffs[i] = y[i] + anchor[i];
                    coeffs[d + i] = ydiff;
                    coeffs[2 * d + i] = bspl;
                    coeffs[3 * d + i] = ydiff - h * k7[i] - bspl;
                    coeffs[4 * d + i] = h
                        * (D1 * k1[i]
                            + D3 * k3[i]
                            + D4 * k4[i]
                            + D5 * k5[i]
                            + D6 * k6[i]
                            + D7 * k7[i]);
                }
                let seg = Segment {
                    t0: t,
                    h: t_new - t,
                    coeffs,
                };
                while next_cp < schedule.len() && schedule[next_cp] <= t_new {
                    let tc = schedule[next_cp];
                    if tc == t_new {
                        cp_buf = lift(&ynew);
                    } else {
                        seg.eval(tc, &mut cp_buf);
                    }
                    samples.push(Sample {
                        t: tc,
                        x: cp_buf.clone(),
                    });
                    next_cp += 1;
                }
                if opts.keep_dense {
                    segments.push(seg);
                }
            }

            t = t_new;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);

            let speed = k1.iter().map(|v| v * v).sum::<f64>().sqrt();
            if speed < 100.0 * opts.stationary_eps {
                let (start, ref y_start) = *dwell_start.get_or_insert_with(|| (t, y.clone()));
                let window = t - start;
                if window >= opts.stationary_dwell && t < t_end {
                    let moved = y
                        .iter()
                        .zip(y_start)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    if moved <= opts.stationary_eps * window {
                        stationary_exit = Some(StationaryExit {
                            t,
                            speed,
                            reason: format!(
                                "mean speed below {:e} over {} time units",
                                opts.stationary_eps, window
                            ),
                        });
                        let frozen = lift(&y);
                        while next_cp < schedule.len() {
                            samples.push(Sample {
                                t: schedule[next_cp],
                                x: frozen.clone(),
                            });
                            next_cp += 1;
                        }
                        if opts.keep_dense {
                            segments.push(Segment::constant(t, t_end - t, &frozen));
                        }
                        break;
                    }
                    dwell_start = Some((t, y.clone()));
                }
            } else {
                dwell_start = None;
            }

            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new.min(h_max);
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
    }

    stats.evaluations = rhs.evaluations;
    Ok(Trajectory {
        spec_id: field.id(),
        x0: x0.to_vec(),
        samples,
        t_end,
        rtol,
        atol,
        stationary_exit,
        stats,
        segments,
    })
}
