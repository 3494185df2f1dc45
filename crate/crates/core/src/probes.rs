//! Empirical constants of functional inequalities over seeded ensembles.
//!
//! Each probe evaluates, per sample, the ratio of the two sides of an
//! inequality (or the relative defect of an identity) and aggregates the
//! worst case. Ratios are measured, never assumed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::evolve::free_propagate;
use crate::grid::{
    angular_momentum, angular_momentum_squared, angular_pairs, ComplexField,
    GridSpec,
};
use crate::norms::{angular_sobolev_norm, homogeneous_sobolev_norm, inner, lp_norm, weighted_lp_norm};
use crate::Complex64;

/// Right-hand sides below this are treated as degenerate and skipped.
pub const DEGENERATE_RHS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Hardy,
    AngularSup,
    AngularSupLinearWeight,
    AngularInterpolation,
    LEquivalence,
    SecondOrderEquivalence,
    CommuteMultiplier,
    FreeDecay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    /// Evaluation times (free_decay) or the heat-kernel time (commute_multiplier).
    #[serde(default)]
    pub t: Vec<f64>,
}

impl Default for ProbeParams {
    fn default() -> Self {
        Self {
            s: None,
            p: None,
            b: None,
            epsilon: None,
            theta: None,
            t: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// The single sample `exp(-|x|^2 / 2)`.
    Gaussian,
    /// Random sums of shifted Gaussians times solid harmonics of degree <= 2.
    HarmonicGaussians,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub generator: Generator,
    pub count: usize,
    /// Falls back to the scenario seed when omitted.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub n_per_axis: usize,
    pub half_length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub kind: ProbeKind,
    #[serde(default)]
    pub parameters: ProbeParams,
    pub ensemble: EnsembleSpec,
    /// Overrides the documented default ceiling of the kind.
    #[serde(default)]
    pub ceiling: Option<f64>,
    /// Overrides the scenario grid (always offset).
    #[serde(default)]
    pub grid: Option<ProbeGrid>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    pub kind: ProbeKind,
    pub worst_ratio: f64,
    pub worst_case_id: usize,
    pub ratios: Vec<f64>,
    /// Samples dropped because the right-hand side was degenerate.
    pub skipped: Vec<usize>,
    pub ceiling: Option<f64>,
    pub pass: bool,
    /// For two-sided equivalences, the worst ratio in the reverse direction.
    pub reverse_worst_ratio: Option<f64>,
}

/// Sharp constant of `|| |x|^{-s} f ||_2 <= C || D^s f ||_2` in three dimensions.
pub fn sharp_hardy_constant(s: f64) -> f64 {
    2f64.powf(-s) * gamma((3.0 - 2.0 * s) / 4.0) / gamma((3.0 + 2.0 * s) / 4.0)
}

fn require(name: &str, v: Option<f64>) -> Result<f64> {
    v.ok_or_else(|| Error::Parameter(format!("parameter `{name}` is required")))
}

fn in_open(name: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v > lo && v < hi {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} = {v} must lie in ({lo}, {hi})")))
    }
}

impl ProbeSpec {
    /// Check the hypotheses of the underlying inequality.
    pub fn validate(&self) -> Result<()> {
        let p = &self.parameters;
        if self.ensemble.count == 0 {
            return Err(Error::Parameter("ensemble count must be >= 1".into()));
        }
        match self.kind {
            ProbeKind::Hardy => {
                let s = require("s", p.s)?;
                let q = require("p", p.p)?;
                if !(q >= 1.0) {
                    return Err(Error::Parameter(format!("p = {q} must be >= 1")));
                }
                in_open("s", s, 0.0, 3.0 / q)?;
            }
            ProbeKind::AngularSup => in_open("b", require("b", p.b)?, 0.0, 1.0)?,
            ProbeKind::AngularInterpolation => {
                let b = require("b", p.b)?;
                let eps = require("epsilon", p.epsilon)?;
                let q = require("p", p.p)?;
                in_open("b", b, 0.0, 1.0)?;
                in_open("epsilon", eps, 0.0, 1.0 - b)?;
                if !(2.0..f64::INFINITY).contains(&q) {
                    return Err(Error::Parameter(format!("p = {q} must lie in [2, inf)")));
                }
            }
            ProbeKind::FreeDecay => {
                in_open("theta", require("theta", p.theta)?, 0.0, 1.5)?;
                if p.t.len() < 2 || p.t.iter().any(|&t| !(t > 0.0)) {
                    return Err(Error::Parameter(
                        "free_decay needs at least two positive times".into(),
                    ));
                }
            }
            ProbeKind::CommuteMultiplier => {
                if p.t.iter().any(|&t| !(t > 0.0)) {
                    return Err(Error::Parameter("heat-kernel time must be positive".into()));
                }
            }
            ProbeKind::AngularSupLinearWeight
            | ProbeKind::LEquivalence
            | ProbeKind::SecondOrderEquivalence => {}
        }
        Ok(())
    }

    /// Configured ceiling, else the kind's default: 1.025 x the sharp
    /// constant for `hardy` with `p = 2`, `1e-8` for the identity defects,
    /// `1.10` for the free-decay rate spread, none otherwise.
    pub fn effective_ceiling(&self) -> Option<f64> {
        self.ceiling.or(match self.kind {
            ProbeKind::Hardy if self.parameters.p == Some(2.0) => {
                self.parameters.s.map(|s| 1.025 * sharp_hardy_constant(s))
            }
            ProbeKind::LEquivalence | ProbeKind::CommuteMultiplier => Some(1e-8),
            ProbeKind::FreeDecay => Some(1.10),
            _ => None,
        })
    }
}

/// Real solid harmonics of degree <= 2 in Cartesian form.
fn solid_harmonic(index: usize, [x, y, z]: [f64; 3]) -> f64 {
    match index {
        0 => 1.0,
        1 => x,
        2 => y,
        3 => z,
        4 => x * y,
        5 => y * z,
        6 => z * x,
        7 => x * x - y * y,
        _ => 2.0 * z * z - x * x - y * y,
    }
}

const HARMONIC_COUNT: usize = 9;

fn harmonic_degree(index: usize) -> i32 {
    match index {
        0 => 0,
        1..=3 => 1,
        _ => 2,
    }
}

/// Samples of the ensemble, reproducible from the seed.
pub fn ensemble(grid: &GridSpec, spec: &EnsembleSpec) -> Vec<ComplexField> {
    match spec.generator {
        Generator::Gaussian => vec![ComplexField::from_fn(grid, |[x, y, z]| {
            Complex64::new((-(x * x + y * y + z * z) / 2.0).exp(), 0.0)
        })],
        Generator::HarmonicGaussians => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.unwrap_or(0));
            (0..spec.count).map(|_| random_sample(grid, &mut rng)).collect()
        }
    }
}

struct Term {
    coefficient: Complex64,
    width: f64,
    center: [f64; 3],
    harmonic: usize,
}

fn random_sample(grid: &GridSpec, rng: &mut ChaCha8Rng) -> ComplexField {
    let n_terms = rng.gen_range(1..=3);
    let terms: Vec<Term> = (0..n_terms)
        .map(|_| {
            let center = loop {
                let c = [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ];
                if c.iter().map(|v: &f64| v * v).sum::<f64>() <= 1.0 {
                    break c;
                }
            };
            Term {
                coefficient: Complex64::from_polar(
                    rng.gen_range(0.5..1.5),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                ),
                width: rng.gen_range(0.5..1.0),
                center,
                harmonic: rng.gen_range(0..HARMONIC_COUNT),
            }
        })
        .collect();
    ComplexField::from_fn(grid, |x| {
        terms
            .iter()
            .map(|term| {
                let d = [
                    x[0] - term.center[0],
                    x[1] - term.center[1],
                    x[2] - term.center[2],
                ];
                let r2 = d.iter().map(|v| v * v).sum::<f64>();
                let w = term.width;
                term.coefficient
                    * (solid_harmonic(term.harmonic, d) / w.powi(harmonic_degree(term.harmonic)))
                    * (-r2 / (2.0 * w * w)).exp()
            })
            .sum()
    })
}

fn rel_diff(a: &[ComplexField], b: &[ComplexField]) -> Result<(f64, f64)> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += x.sub(y)?.norm2_sq();
        den += y.norm2_sq();
    }
    Ok((num.sqrt(), den.sqrt()))
}

/// Per-sample `(lhs, rhs)`; the ratio is `lhs / rhs`. For identity defects
/// `lhs` is the absolute defect and `rhs` the normalization.
fn evaluate(spec: &ProbeSpec, f: &ComplexField) -> Result<(f64, f64)> {
    let prm = &spec.parameters;
    match spec.kind {
        ProbeKind::Hardy => {
            let s = prm.s.expect("validated");
            let p = prm.p.expect("validated");
            Ok((weighted_lp_norm(f, -s, p)?, homogeneous_sobolev_norm(f, s, p)?))
        }
        ProbeKind::AngularSup => {
            Ok((
                weighted_lp_norm(f, prm.b.expect("validated"), f64::INFINITY)?,
                angular_sobolev_norm(f, 1, 1, 2.0)?.value,
            ))
        }
        ProbeKind::AngularSupLinearWeight => {
            Ok((
                weighted_lp_norm(f, 1.0, f64::INFINITY)?,
                angular_sobolev_norm(f, 1, 2, 2.0)?.value,
            ))
        }
        ProbeKind::AngularInterpolation => {
            let b = prm.b.expect("validated");
            let eps = prm.epsilon.expect("validated");
            let p = prm.p.expect("validated");
            let lhs = weighted_lp_norm(f, b, p / eps)?;
            let h = angular_sobolev_norm(f, 1, 1, 2.0)?.value;
            Ok((lhs, h.powf(1.0 - eps) * lp_norm(f, p).powf(eps)))
        }
        ProbeKind::LEquivalence => {
            let l = angular_momentum(f).value;
            let lhs = l.iter().map(|c| c.norm2_sq()).sum::<f64>();
            let rhs = inner(f, &angular_momentum_squared(f).value)?.re;
            Ok(((lhs - rhs).abs(), rhs.abs()))
        }
        ProbeKind::SecondOrderEquivalence => {
            let pairs = angular_pairs(f).value;
            let lhs = pairs
                .iter()
                .flat_map(|row| row.iter())
                .map(|c| c.norm2_sq())
                .sum::<f64>()
                .sqrt();
            Ok((lhs, angular_momentum_squared(f).value.norm2_sq().sqrt()))
        }
        ProbeKind::CommuteMultiplier => {
            let tau = prm.t.first().copied().unwrap_or(0.1);
            let heat = |g: &ComplexField| {
                g.apply_multiplier(|kx, ky, kz| {
                    Complex64::new((-tau * (kx * kx + ky * ky + kz * kz)).exp(), 0.0)
                })
            };
            let first = angular_momentum(&heat(f)).value;
            let second = angular_momentum(f).value.map(|c| heat(&c));
            rel_diff(&first, &second)
        }
        ProbeKind::FreeDecay => {
            let theta = prm.theta.expect("validated");
            let rates: Vec<f64> = prm
                .t
                .iter()
                .map(|&t| {
                    let u = free_propagate(f, t);
                    Ok(weighted_lp_norm(&u, theta, f64::INFINITY)? * t.powf(1.5 - theta))
                })
                .collect::<Result<_>>()?;
            let hi = rates.iter().copied().fold(0.0, f64::max);
            let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
            Ok((hi, lo))
        }
    }
}

/// Run one probe on `grid` (the spec's own grid, if any, takes precedence).
pub fn probe(spec: &ProbeSpec, grid: &GridSpec) -> Result<ProbeReport> {
    spec.validate()?;
    let grid = match spec.grid {
        Some(g) => crate::grid::make_grid(g.n_per_axis, g.half_length, true)?,
        None => grid.clone(),
    };
    if !grid.offset() {
        return Err(Error::Config(
            "probes evaluate radial weights and require an offset grid".into(),
        ));
    }
    let samples = ensemble(&grid, &spec.ensemble);
    let mut ratios = Vec::with_capacity(samples.len());
    let mut skipped = Vec::new();
    let mut reverse: Option<f64> = None;
    for (id, f) in samples.iter().enumerate() {
        let (lhs, rhs) = evaluate(spec, f)?;
        if !(rhs.abs() >= DEGENERATE_RHS) {
            log::debug!("sample {id}: degenerate right-hand side {rhs:e}, skipped");
            skipped.push(id);
            ratios.push(f64::NAN);
            continue;
        }
        let ratio = lhs / rhs;
        if !ratio.is_finite() || ratio < 0.0 {
            return Err(Error::NonFinite("probe ratio"));
        }
        if spec.kind == ProbeKind::SecondOrderEquivalence && lhs > DEGENERATE_RHS {
            reverse = Some(reverse.unwrap_or(0.0).max(rhs / lhs));
        }
        ratios.push(ratio);
    }
    let (worst_case_id, worst_ratio) = ratios
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_nan())
        .fold((0, f64::NAN), |(bi, br), (i, &r)| {
            if br.is_nan() || r > br {
                (i, r)
            } else {
                (bi, br)
            }
        });
    if worst_ratio.is_nan() {
        return Err(Error::InsufficientData(
            "every sample had a degenerate right-hand side".into(),
        ));
    }
    let ceiling = spec.effective_ceiling();
    Ok(ProbeReport {
        kind: spec.kind,
        worst_ratio,
        worst_case_id,
        ratios,
        skipped,
        ceiling,
        pass: ceiling.map_or(true, |c| worst_ratio <= c),
        reverse_worst_ratio: reverse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use proptest::prelude::*;

    fn spec(kind: ProbeKind, parameters: ProbeParams, generator: Generator, count: usize) -> ProbeSpec {
        ProbeSpec {
            kind,
            parameters,
            ensemble: EnsembleSpec {
                generator,
                count,
                seed: Some(7),
            },
            ceiling: None,
            grid: None,
        }
    }

    #[test]
    fn sharp_constant_at_s_one_is_two() {
        assert!((sharp_hardy_constant(1.0) - 2.0).abs() < 1e-12);
        // s = 1/2: Gamma(1/2) / (sqrt 2 Gamma(1)) = sqrt(pi / 2)
        assert!((sharp_hardy_constant(0.5) - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn hypotheses_are_enforced() {
        let bad = spec(
            ProbeKind::AngularInterpolation,
            ProbeParams {
                b: Some(0.5),
                epsilon: Some(0.5),
                p: Some(2.0),
                ..Default::default()
            },
            Generator::Gaussian,
            1,
        );
        assert!(matches!(bad.validate(), Err(Error::Parameter(_))));
        let hardy = spec(
            ProbeKind::Hardy,
            ProbeParams {
                s: Some(1.5),
                p: Some(2.0),
                ..Default::default()
            },
            Generator::Gaussian,
            1,
        );
        assert!(hardy.validate().is_err());
        let sup = spec(
            ProbeKind::AngularSup,
            ProbeParams {
                b: Some(1.0),
                ..Default::default()
            },
            Generator::Gaussian,
            1,
        );
        assert!(sup.validate().is_err());
    }

    #[test]
    fn ensembles_are_reproducible_and_localized() {
        let g = make_grid(32, 8.0, true).unwrap();
        let e = EnsembleSpec {
            generator: Generator::HarmonicGaussians,
            count: 4,
            seed: Some(11),
        };
        let a = ensemble(&g, &e);
        let b = ensemble(&g, &e);
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        assert!(a.iter().all(|f| f.boundary_fraction() < 1e-12));
        let c = ensemble(&g, &EnsembleSpec { seed: Some(12), ..e });
        assert_ne!(a[0], c[0]);
    }

    #[test]
    fn gaussian_ratios_match_closed_forms() {
        let g = make_grid(48, 8.0, true).unwrap();
        let hardy = spec(
            ProbeKind::Hardy,
            ProbeParams {
                s: Some(1.0),
                p: Some(2.0),
                ..Default::default()
            },
            Generator::Gaussian,
            1,
        );
        let r = probe(&hardy, &g).unwrap();
        // || phi / |x| ||^2 = 4 pi int e^{-r^2} dr = 2 pi^{3/2}; ||grad phi||^2 = 3/2 pi^{3/2}
        assert!((r.worst_ratio / (4.0f64 / 3.0).sqrt() - 1.0).abs() < 1e-3, "{}", r.worst_ratio);
        assert!(r.pass);
        let l = probe(&spec(ProbeKind::LEquivalence, ProbeParams::default(), Generator::Gaussian, 1), &g);
        // radial: both sides vanish
        assert!(matches!(l, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn identity_defects_are_small_on_random_fields() {
        let g = make_grid(48, 8.0, true).unwrap();
        let l = probe(
            &spec(ProbeKind::LEquivalence, ProbeParams::default(), Generator::HarmonicGaussians, 3),
            &g,
        )
        .unwrap();
        assert!(l.pass && l.worst_ratio < 1e-8, "{l:?}");
        let c = probe(
            &spec(ProbeKind::CommuteMultiplier, ProbeParams::default(), Generator::HarmonicGaussians, 3),
            &g,
        )
        .unwrap();
        assert!(c.pass, "{c:?}");
        let s = probe(
            &spec(ProbeKind::SecondOrderEquivalence, ProbeParams::default(), Generator::HarmonicGaussians, 3),
            &g,
        )
        .unwrap();
        assert!(s.pass && s.ceiling.is_none());
        assert!(s.reverse_worst_ratio.is_some());
    }

    #[test]
    fn non_offset_grid_is_rejected() {
        let g = make_grid(16, 8.0, false).unwrap();
        let s = spec(ProbeKind::LEquivalence, ProbeParams::default(), Generator::Gaussian, 1);
        assert!(matches!(probe(&s, &g), Err(Error::Config(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn homogeneous_ratios_are_scale_invariant(c in 0.01f64..100.0, seed in 0u64..1000) {
            let g = make_grid(24, 8.0, true).unwrap();
            let e = EnsembleSpec { generator: Generator::HarmonicGaussians, count: 1, seed: Some(seed) };
            let f = ensemble(&g, &e).remove(0);
            let cf = f.scale(Complex64::new(c, 0.0));
            let kinds = [
                (ProbeKind::Hardy, ProbeParams { s: Some(1.0), p: Some(2.0), ..Default::default() }),
                (ProbeKind::AngularSup, ProbeParams { b: Some(0.5), ..Default::default() }),
                (ProbeKind::AngularInterpolation, ProbeParams { b: Some(0.5), epsilon: Some(0.25), p: Some(2.0), ..Default::default() }),
            ];
            for (kind, prm) in kinds {
                let s = spec(kind, prm, Generator::Gaussian, 1);
                let (a1, b1) = evaluate(&s, &f).unwrap();
                let (a2, b2) = evaluate(&s, &cf).unwrap();
                prop_assert!(((a2 / b2) / (a1 / b1) - 1.0).abs() < 1e-10);
            }
        }
    }
}
