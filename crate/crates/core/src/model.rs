//! Power-law coefficients `K_l(x) = lambda_l |x|^{b_l}`, the cubic-quintic
//! nonlinearity and the conserved or monitored functionals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{grad_norm2_sq, radial_weight, ComplexField, GridSpec};

/// `K_1 = lambda1 |x|^b1`, `K_2 = lambda2 |x|^b2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    pub lambda1: f64,
    pub b1: f64,
    pub lambda2: f64,
    pub b2: f64,
}

impl CoefficientSpec {
    pub fn new(lambda1: f64, b1: f64, lambda2: f64, b2: f64) -> Result<Self> {
        let c = Self {
            lambda1,
            b1,
            lambda2,
            b2,
        };
        c.validate()?;
        Ok(c)
    }

    /// Linear Schroedinger flow.
    pub fn free() -> Self {
        Self {
            lambda1: 0.0,
            b1: 0.0,
            lambda2: 0.0,
            b2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite, got {v}")));
            }
        }
        for (name, b) in [("b1", self.b1), ("b2", self.b2)] {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {b}")));
            }
        }
        Ok(())
    }

    pub fn is_free(&self) -> bool {
        self.lambda1 == 0.0 && self.lambda2 == 0.0
    }

    pub fn is_focusing(&self) -> bool {
        self.lambda1 <= 0.0 && self.lambda2 <= 0.0
    }

    pub fn is_defocusing(&self) -> bool {
        self.lambda1 >= 0.0 && self.lambda2 >= 0.0
    }

    pub fn k1(&self, r: f64) -> f64 {
        self.lambda1 * power(r, self.b1)
    }

    pub fn k2(&self, r: f64) -> f64 {
        self.lambda2 * power(r, self.b2)
    }

    /// Range over the grid of `(K_1 - x.grad K_1) / K_1`, with `x.grad K_1`
    /// measured by a centered radial difference. For the power law this is
    /// `1 - b1` everywhere.
    pub fn quartic_dilation_ratio(&self, grid: &GridSpec) -> Option<(f64, f64)> {
        if self.lambda1 == 0.0 {
            return None;
        }
        Some(dilation_ratio_range(grid, |r| self.k1(r), 1.0))
    }

    /// Range of `(4 K_2 - x.grad K_2) / K_2`, `4 - b2` for the power law.
    pub fn sextic_dilation_ratio(&self, grid: &GridSpec) -> Option<(f64, f64)> {
        if self.lambda2 == 0.0 {
            return None;
        }
        Some(dilation_ratio_range(grid, |r| self.k2(r), 4.0))
    }

    /// Whether `K_1 - x.grad K_1 <= alpha K_1` and `4 K_2 - x.grad K_2 <= alpha K_2`
    /// hold at every sample (the hypotheses of the blowup bound).
    pub fn satisfies_blowup_hypothesis(&self, grid: &GridSpec, alpha: f64) -> bool {
        let check = |k: &dyn Fn(f64) -> f64, factor: f64| {
            grid.radii().into_iter().all(|r| {
                let lhs = factor * k(r) - radial_derivative(k, r) * r;
                lhs <= alpha * k(r) + 1e-9 * k(r).abs().max(1e-300)
            })
        };
        check(&|r| self.k1(r), 1.0) && check(&|r| self.k2(r), 4.0)
    }
}

#[inline]
fn power(r: f64, b: f64) -> f64 {
    if b == 0.0 {
        1.0
    } else {
        r.powf(b)
    }
}

fn radial_derivative(k: &dyn Fn(f64) -> f64, r: f64) -> f64 {
    let h = 1e-6 * r.max(1e-12);
    (k(r + h) - k(r - h)) / (2.0 * h)
}

fn dilation_ratio_range(grid: &GridSpec, k: impl Fn(f64) -> f64, factor: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in grid.radii() {
        let kr = k(r);
        if kr == 0.0 {
            continue;
        }
        let ratio = (factor * kr - r * radial_derivative(&k, r)) / kr;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    (lo, hi)
}

/// Constant `C(b, j)` with `|d^j |x|^b| <= C |x|^{b-j}` for every partial
/// derivative of order `j <= 2`.
pub fn power_law_derivative_constant(b: f64, j: u32) -> Option<f64> {
    match j {
        0 => Some(1.0),
        // d_i |x|^b = b x_i |x|^{b-2}
        1 => Some(b.abs()),
        // d_i d_j |x|^b = b |x|^{b-2} (delta_ij + (b-2) x_i x_j / |x|^2)
        2 => Some(b.abs() * (1.0 + (b - 2.0).abs())),
        _ => None,
    }
}

/// The coefficients evaluated on a grid, reused by every step.
#[derive(Clone, Debug)]
pub struct GridCoefficients {
    spec: CoefficientSpec,
    grid: GridSpec,
    /// `|x|^{b1}` at the samples.
    w1: Vec<f64>,
    /// `|x|^{b2}` at the samples.
    w2: Vec<f64>,
}

impl GridCoefficients {
    pub fn new(grid: &GridSpec, spec: &CoefficientSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec: *spec,
            grid: grid.clone(),
            w1: radial_weight(grid, spec.b1)?,
            w2: radial_weight(grid, spec.b2)?,
        })
    }

    pub fn spec(&self) -> &CoefficientSpec {
        &self.spec
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn check(&self, u: &ComplexField) -> Result<()> {
        if u.grid() != &self.grid {
            return Err(Error::GridMismatch(
                "field and coefficients live on different grids".into(),
            ));
        }
        Ok(())
    }

    /// Pointwise `K_1 |u|^2 + K_2 |u|^4`, the real potential felt by `u`.
    #[inline]
    pub(crate) fn potential_at(&self, idx: usize, rho: f64) -> f64 {
        self.spec.lambda1 * self.w1[idx] * rho + self.spec.lambda2 * self.w2[idx] * rho * rho
    }

    /// `max |K_1 |u|^2 + K_2 |u|^4|`, the phase rate of the nonlinear substep.
    pub fn max_phase_rate(&self, u: &ComplexField) -> f64 {
        u.values()
            .iter()
            .enumerate()
            .map(|(idx, v)| self.potential_at(idx, v.norm_sqr()).abs())
            .fold(0.0, f64::max)
    }

    pub fn nonlinear_term(&self, u: &ComplexField) -> Result<ComplexField> {
        self.check(u)?;
        let values = u
            .values()
            .iter()
            .enumerate()
            .map(|(idx, &v)| v * self.potential_at(idx, v.norm_sqr()))
            .collect();
        ComplexField::new(&self.grid, values)
    }

    /// Unsigned weighted integrals `(int |x|^{b1} |u|^4, int |x|^{b2} |u|^6)`.
    pub fn weighted_moments(&self, u: &ComplexField) -> Result<(f64, f64)> {
        self.check(u)?;
        let mut q4 = 0.0;
        let mut q6 = 0.0;
        for (idx, v) in u.values().iter().enumerate() {
            let rho = v.norm_sqr();
            let rho2 = rho * rho;
            q4 += self.w1[idx] * rho2;
            q6 += self.w2[idx] * rho2 * rho;
        }
        let cell = self.grid.cell_volume();
        Ok((q4 * cell, q6 * cell))
    }

    /// `V(u) = lambda1/4 int |x|^{b1}|u|^4 + lambda2/6 int |x|^{b2}|u|^6`.
    pub fn potential_energy(&self, u: &ComplexField) -> Result<f64> {
        let (q4, q6) = self.weighted_moments(u)?;
        Ok(self.potential_from_moments(q4, q6))
    }

    pub fn potential_from_moments(&self, q4: f64, q6: f64) -> f64 {
        0.25 * self.spec.lambda1 * q4 + self.spec.lambda2 * q6 / 6.0
    }

    /// `E(u) = 1/2 ||grad u||^2 + V(u)`.
    pub fn energy(&self, u: &ComplexField) -> Result<f64> {
        self.check(u)?;
        Ok(0.5 * grad_norm2_sq(u) + self.potential_energy(u)?)
    }

    /// Right-hand side of the dilation balance without the `4 E` term:
    /// `1/2 (1 - b1) int K_1 |u|^4 + 1/3 (4 - b2) int K_2 |u|^6`.
    pub fn dilation_source(&self, q4: f64, q6: f64) -> f64 {
        let c = &self.spec;
        0.5 * (1.0 - c.b1) * c.lambda1 * q4 + (4.0 - c.b2) * c.lambda2 * q6 / 3.0
    }

    /// Right-hand side of the pseudo-conformal balance at time `t`:
    /// `-4 t [ (1-b1)/2 int K_1|u|^4 + (4-b2)/3 int K_2|u|^6 ]`.
    pub fn pseudoconformal_source(&self, t: f64, q4: f64, q6: f64) -> f64 {
        -4.0 * t * self.dilation_source(q4, q6)
    }
}

/// `lambda1 |x|^{b1} |u|^2 u + lambda2 |x|^{b2} |u|^4 u`.
pub fn nonlinear_term(u: &ComplexField, c: &CoefficientSpec) -> Result<ComplexField> {
    u.ensure_finite("nonlinear_term")?;
    GridCoefficients::new(u.grid(), c)?.nonlinear_term(u)
}

/// `m(u) = ||u||_2^2`.
pub fn mass(u: &ComplexField) -> f64 {
    u.norm2_sq()
}

pub fn energy(u: &ComplexField, c: &CoefficientSpec) -> Result<f64> {
    GridCoefficients::new(u.grid(), c)?.energy(u)
}

pub fn potential_energy(u: &ComplexField, c: &CoefficientSpec) -> Result<f64> {
    GridCoefficients::new(u.grid(), c)?.potential_energy(u)
}

/// Inputs of the variance bound
/// `||x u(t)||^2 <= ||x phi||^2 + 4 t A(0) + (8 + 4 alpha) t^2 E(phi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupBoundParams {
    pub alpha: f64,
    pub initial_variance: f64,
    pub initial_dilation: f64,
    pub initial_energy: f64,
}

impl BlowupBoundParams {
    pub fn new(
        alpha: f64,
        initial_variance: f64,
        initial_dilation: f64,
        initial_energy: f64,
    ) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(Error::Parameter(format!("alpha must be >= 0, got {alpha}")));
        }
        Ok(Self {
            alpha,
            initial_variance,
            initial_dilation,
            initial_energy,
        })
    }

    /// The quadratic right-hand side at time `t`.
    pub fn bound_at(&self, t: f64) -> f64 {
        self.initial_variance
            + 4.0 * t * self.initial_dilation
            + (8.0 + 4.0 * self.alpha) * t * t * self.initial_energy
    }
}

/// First `t > 0` at which the variance bound turns negative, or `None` if it
/// never does.
pub fn blowup_time_bound(p: &BlowupBoundParams) -> Option<f64> {
    let a = (8.0 + 4.0 * p.alpha) * p.initial_energy;
    let b = 4.0 * p.initial_dilation;
    let c = p.initial_variance;
    if a == 0.0 {
        return (b < 0.0).then(|| -c / b).filter(|t| *t > 0.0);
    }
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = [q / a, if q != 0.0 { c / q } else { -b / a }];
    roots.sort_by(f64::total_cmp);
    if a < 0.0 {
        // opens downward: negative beyond the larger root
        roots.into_iter().rev().find(|t| *t > 0.0)
    } else {
        // opens upward: negative strictly between the roots
        (roots[0] > 0.0).then_some(roots[0])
    }
}

/// Closed-form integrals for `A exp(-|x - c|^2 / (2 w^2))` style data.
pub mod gaussian {
    use std::f64::consts::PI;

    /// `int_{R^3} |x|^b exp(-a |x|^2) dx = 2 pi Gamma((3+b)/2) a^{-(3+b)/2}`.
    pub fn radial_moment(b: f64, a: f64) -> f64 {
        let s = 0.5 * (3.0 + b);
        2.0 * PI * statrs::function::gamma::gamma(s) * a.powf(-s)
    }

    /// Energy of the centered real Gaussian `A exp(-|x|^2/(2 w^2))`.
    pub fn energy(amplitude: f64, width: f64, c: &super::CoefficientSpec) -> f64 {
        let a2 = amplitude * amplitude;
        let w2 = width * width;
        // ||grad phi||^2 = A^2 int |x|^2/w^4 exp(-|x|^2/w^2)
        let kinetic = 0.5 * a2 * radial_moment(2.0, 1.0 / w2) / (w2 * w2);
        let quartic = 0.25 * c.lambda1 * a2 * a2 * radial_moment(c.b1, 2.0 / w2);
        let sextic = c.lambda2 * a2 * a2 * a2 * radial_moment(c.b2, 3.0 / w2) / 6.0;
        kinetic + quartic + sextic
    }

    pub fn mass(amplitude: f64, width: f64) -> f64 {
        amplitude * amplitude * (PI * width * width).powf(1.5)
    }

    pub fn variance(amplitude: f64, width: f64) -> f64 {
        amplitude * amplitude * radial_moment(2.0, 1.0 / (width * width))
    }

    /// Smallest amplitude with `E < 0` for focusing coefficients, by
    /// bisection on the closed-form energy. `None` if the energy stays
    /// non-negative up to `A = 1e3`.
    pub fn negative_energy_threshold(width: f64, c: &super::CoefficientSpec) -> Option<f64> {
        let e = |a: f64| energy(a, width, c);
        let mut hi = 1.0;
        while e(hi) >= 0.0 {
            hi *= 2.0;
            if hi > 1e3 {
                return None;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if e(mid) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(hi)
    }
}
