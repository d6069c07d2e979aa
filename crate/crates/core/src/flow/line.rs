//! Closed-form solutions of direction fields along their lines.
//!
//! For `b = a ξ` the component `u = X·ξ` solves the scalar equation
//! `u' = a(u ξ + Π x)` while `Π X = Π x` stays fixed, so
//! `∫_{x·ξ}^{u(t)} ds / a(s ξ + Π x) = t`.

use crate::error::{check_dim, Error, Result};
use crate::field::{local_descent, project_orthogonal, ScalarField, ZERO_TOL};
use crate::quadrature::{adaptive, Refinement};

/// The restriction `s ↦ a(s ξ + base)`.
#[derive(Debug, Clone)]
pub struct LineRestriction<'a> {
    a: &'a ScalarField,
    xi: &'a [f64],
    base: Vec<f64>,
    /// Largest `|k·ξ|`; sets the oscillation scale along the line.
    rate: f64,
}

impl<'a> LineRestriction<'a> {
    /// The line through `x` in direction `xi`, parametrized so that
    /// `s = x·ξ` returns `x`.
    pub fn through(a: &'a ScalarField, xi: &'a [f64], x: &[f64]) -> Result<Self> {
        check_dim(a.dim(), xi.len())?;
        check_dim(a.dim(), x.len())?;
        let rate = a
            .terms()
            .iter()
            .map(|t| t.freq.iter().zip(xi).map(|(k, e)| k * e).sum::<f64>().abs())
            .fold(0.0, f64::max);
        Ok(Self {
            a,
            xi,
            base: project_orthogonal(xi, x),
            rate,
        })
    }

    pub fn point(&self, s: f64) -> Vec<f64> {
        self.base.iter().zip(self.xi).map(|(b, e)| b + s * e).collect()
    }

    pub fn value(&self, s: f64) -> f64 {
        self.a.value(&self.point(s))
    }

    fn value_deriv(&self, s: f64) -> (f64, f64) {
        let p = self.point(s);
        let mut g = vec![0.0; p.len()];
        let v = self.a.value_grad(&p, &mut g);
        (v, g.iter().zip(self.xi).map(|(gi, e)| gi * e).sum())
    }

    /// Minimum of the restriction over `[lo, hi]`: dense sampling at a
    /// spacing tied to the oscillation rate, then local refinement.
    pub fn minimum(&self, lo: f64, hi: f64) -> (f64, f64) {
        let spacing = 1.0 / (32.0 * self.rate.max(1.0));
        let n = (((hi - lo) / spacing).ceil() as usize).clamp(16, 20_000_000);
        let mut best: Vec<(f64, f64)> = Vec::with_capacity(5);
        for i in 0..=n {
            let s = lo + (hi - lo) * i as f64 / n as f64;
            let v = self.value(s);
            if best.len() < 4 || v < best[best.len() - 1].1 {
                let pos = best.partition_point(|(_, bv)| *bv <= v);
                best.insert(pos, (s, v));
                best.truncate(4);
            }
        }
        let f = |s: &[f64], g: &mut [f64]| {
            let (v, dv) = self.value_deriv(s[0]);
            g[0] = dv;
            v
        };
        let mut winner = (lo, f64::INFINITY);
        for (s, _) in best {
            let (p, v) = local_descent(&f, &[s]);
            let v = if (lo..=hi).contains(&p[0]) { v } else { self.value(s) };
            let at = if (lo..=hi).contains(&p[0]) { p[0] } else { s };
            if v < winner.1 {
                winner = (at, v);
            }
        }
        winner
    }

    /// Fails with `VanishesOnLine` when the minimum on `[lo, hi]` drops
    /// below [`ZERO_TOL`].
    pub fn require_positive(&self, lo: f64, hi: f64) -> Result<f64> {
        let (at, value) = self.minimum(lo.min(hi), lo.max(hi));
        if value < ZERO_TOL {
            Err(Error::VanishesOnLine { at, value })
        } else {
            Ok(value)
        }
    }

    /// `∫_lo^hi ds / a(s ξ + base)` by doubling composite Gauss–Legendre.
    pub fn reciprocal_integral(&self, lo: f64, hi: f64) -> Result<f64> {
        if lo == hi {
            return Ok(0.0);
        }
        let panels = (((hi - lo).abs() * 2.0 * self.rate.max(1.0)).ceil() as usize).max(1);
        adaptive(|s| 1.0 / self.value(s), lo, hi, panels, Refinement::default())
    }
}

/// `X(t, x)` for the direction field `a ξ` with `a > 0` along the line.
///
/// Inverts `F(u) = ∫_{x·ξ}^u ds/a` by growing a bracket (doubling) and
/// running Newton safeguarded by bisection; `F' = 1/a > 0` makes the root
/// unique.
pub fn exact_line_solve(a: &ScalarField, xi: &[f64], x: &[f64], t: f64) -> Result<Vec<f64>> {
    let line = LineRestriction::through(a, xi, x)?;
    let u0: f64 = x.iter().zip(xi).map(|(p, e)| p * e).sum();
    if t == 0.0 {
        return Ok(x.to_vec());
    }
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("t must be finite, got {t}")));
    }
    let dir = t.signum();
    let target = t.abs();
    let reach = |u: f64| -> Result<f64> {
        // Time to travel from u0 to u along the flow direction.
        Ok(dir * line.reciprocal_integral(u0, u)?)
    };

    // Bracket [near, far] in the direction of motion.
    let a0 = line.value(u0);
    if a0 < ZERO_TOL {
        return Err(Error::VanishesOnLine { at: u0, value: a0 });
    }
    let mut near = u0;
    let mut far = u0 + dir * target * a0;
    let mut checked_to = u0;
    loop {
        line.require_positive(checked_to, far)?;
        checked_to = far;
        if reach(far)? >= target {
            break;
        }
        near = far;
        far = u0 + 2.0 * (far - u0);
    }

    let mut u = 0.5 * (near + far);
    for _ in 0..200 {
        let g = reach(u)? - target;
        if g == 0.0 {
            break;
        }
        if g < 0.0 {
            near = u;
        } else {
            far = u;
        }
        let newton = u - dir * g * line.value(u);
        let inside = (newton - near) * (newton - far) < 0.0;
        let next = if inside { newton } else { 0.5 * (near + far) };
        let done = (next - u).abs() <= 4.0 * f64::EPSILON * u.abs().max(1.0);
        u = next;
        if done {
            break;
        }
    }
    Ok(x.iter().zip(xi).map(|(p, e)| p + (u - u0) * e).collect())
}
