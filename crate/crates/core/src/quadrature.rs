//! Composite Gauss–Legendre quadrature on intervals and on the unit cube.
//!
//! All adaptive routines refine by doubling the panel count until two
//! successive estimates agree to the requested relative tolerance. Sums are
//! accumulated in a fixed order so results are reproducible across thread
//! counts.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Nodes per panel of the default rule.
pub const DEFAULT_ORDER: usize = 16;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Shared 16-point rule.
    pub fn standard() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(DEFAULT_ORDER))
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Stopping rule for doubling refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refinement {
    pub rel_tol: f64,
    /// Absolute floor, for integrals that are exactly zero.
    pub abs_tol: f64,
    pub max_doublings: usize,
}

impl Default for Refinement {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-15,
            max_doublings: 12,
        }
    }
}

impl Refinement {
    fn converged(&self, prev: f64, next: f64) -> bool {
        (next - prev).abs() <= self.rel_tol * next.abs().max(prev.abs()) + self.abs_tol
    }
}

/// Composite rule with `panels` equal panels on `[a, b]`.
pub fn composite<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let rule = GaussLegendre::standard();
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let hi = if p + 1 == panels { b } else { lo + width };
        let mut part = 0.0;
        for (x, w) in rule.mapped(lo, hi) {
            part += w * f(x);
        }
        total += part;
    }
    total
}

/// Doubling composite quadrature on `[a, b]`, starting from `initial_panels`.
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    initial_panels: usize,
    refinement: Refinement,
) -> Result<f64> {
    let mut panels = initial_panels.max(1);
    let mut prev = composite(&mut f, a, b, panels);
    let mut change = f64::INFINITY;
    for _ in 0..refinement.max_doublings {
        panels *= 2;
        let next = composite(&mut f, a, b, panels);
        change = (next - prev).abs();
        if refinement.converged(prev, next) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureNotConverged {
        tolerance: refinement.rel_tol,
        change,
    })
}

/// Tensor-product composite Gauss–Legendre grid on `[0, 1)^d`.
#[derive(Debug, Clone)]
pub struct TorusGrid {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl TorusGrid {
    /// `panels` panels per dimension of the standard 16-point rule.
    pub fn new(dim: usize, panels: usize) -> Self {
        let rule = GaussLegendre::standard();
        let panels = panels.max(1);
        let width = 1.0 / panels as f64;
        let mut nodes = Vec::with_capacity(panels * rule.order());
        let mut weights = Vec::with_capacity(panels * rule.order());
        for p in 0..panels {
            let lo = p as f64 * width;
            for (x, w) in rule.mapped(lo, lo + width) {
                nodes.push(x);
                weights.push(w);
            }
        }
        Self {
            dim,
            nodes,
            weights,
        }
    }

    /// Smallest grid with at least `points_per_dim` nodes per dimension.
    pub fn with_points(dim: usize, points_per_dim: usize) -> Self {
        Self::new(dim, points_per_dim.div_ceil(DEFAULT_ORDER))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.len().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn refined(&self) -> Self {
        Self::new(self.dim, 2 * self.points_per_dim() / DEFAULT_ORDER)
    }

    /// Node and weight of flat index `idx` (last dimension fastest).
    pub fn point(&self, mut idx: usize, out: &mut [f64]) -> f64 {
        let m = self.nodes.len();
        let mut w = 1.0;
        for j in (0..self.dim).rev() {
            let i = idx % m;
            idx /= m;
            out[j] = self.nodes[i];
            w *= self.weights[i];
        }
        w
    }

    /// ∫_{[0,1]^d} f, parallel over the leading index with an ordered sum.
    pub fn integrate<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> Result<f64> + Sync,
    {
        let m = self.nodes.len();
        let inner = self.len() / m;
        let partials: Vec<Result<f64>> = (0..m)
            .into_par_iter()
            .map(|lead| {
                let mut x = vec![0.0; self.dim];
                let mut sum = 0.0;
                for r in 0..inner {
                    let w = self.point(lead * inner + r, &mut x);
                    sum += w * f(&x)?;
                }
                Ok(sum)
            })
            .collect();
        let mut total = 0.0;
        for p in partials {
            total += p?;
        }
        Ok(total)
    }
}

/// Doubling tensor quadrature over the unit cube, from `initial_points`
/// per dimension. Returns the estimate and the grid that produced it.
pub fn adaptive_torus<F>(
    f: F,
    dim: usize,
    initial_points: usize,
    refinement: Refinement,
) -> Result<(f64, TorusGrid)>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let mut grid = TorusGrid::with_points(dim, initial_points);
    let mut prev = grid.integrate(&f)?;
    let mut change = f64::INFINITY;
    for _ in 0..refinement.max_doublings {
        // 2^24 nodes is the practical ceiling.
        if grid.len() * (1usize << dim) > 1 << 24 {
            break;
        }
        let next_grid = grid.refined();
        let next = next_grid.integrate(&f)?;
        change = (next - prev).abs();
        if refinement.converged(prev, next) {
            return Ok((next, next_grid));
        }
        prev = next;
        grid = next_grid;
    }
    Err(Error::QuadratureNotConverged {
        tolerance: refinement.rel_tol,
        change,
    })
}
