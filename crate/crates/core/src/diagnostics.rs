//! Monitored functionals, identity residuals and regime monitors.
//!
//! Pointwise functionals act on a single field; residuals and fits act on
//! the record series a [`Recorder`] collects during an evolution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{free_propagate, StepControl, StepObserver, Trajectory};
use crate::grid::{boundary_check, grad_norm2_sq, gradient, ComplexField, Warned};
use crate::model::{mass, BlowupBoundParams, CoefficientSpec, GridCoefficients};
use crate::norms::{angular_sobolev_norm, inner, lp_norm};
use crate::Complex64;

/// Column order of the time-series table.
pub const CSV_COLUMNS: [&str; 15] = [
    "t",
    "mass",
    "energy",
    "grad_norm2",
    "variance",
    "dilation",
    "potential",
    "hl11_norm",
    "galilean_norm2",
    "scatter_distance",
    "interaction_gap",
    "overlap_H",
    "virial_residual",
    "dilation_residual",
    "pconf_residual",
];

/// One row of monitored quantities. Unrecorded quantities are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: Option<f64>,
    pub grad_norm2: Option<f64>,
    pub variance: Option<f64>,
    pub dilation: Option<f64>,
    pub potential: Option<f64>,
    pub hl11_norm: Option<f64>,
    pub galilean_norm2: Option<f64>,
    pub scatter_distance: Option<f64>,
    pub interaction_gap: Option<f64>,
    #[serde(rename = "overlap_H")]
    pub overlap_h: Option<f64>,
    pub virial_residual: Option<f64>,
    pub dilation_residual: Option<f64>,
    pub pconf_residual: Option<f64>,
    /// Unsigned `int |x|^{b1} |u|^4`.
    #[serde(skip)]
    pub quartic_moment: Option<f64>,
    /// Unsigned `int |x|^{b2} |u|^6`.
    #[serde(skip)]
    pub sextic_moment: Option<f64>,
}

impl DiagnosticRecord {
    /// Values in [`CSV_COLUMNS`] order.
    pub fn row(&self) -> [Option<f64>; 15] {
        [
            Some(self.t),
            Some(self.mass),
            self.energy,
            self.grad_norm2,
            self.variance,
            self.dilation,
            self.potential,
            self.hl11_norm,
            self.galilean_norm2,
            self.scatter_distance,
            self.interaction_gap,
            self.overlap_h,
            self.virial_residual,
            self.dilation_residual,
            self.pconf_residual,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Energy,
    GradNorm2,
    Variance,
    Dilation,
    Potential,
    Hl11Norm,
    GalileanNorm2,
}

impl Quantity {
    pub const ALL: [Quantity; 7] = [
        Quantity::Energy,
        Quantity::GradNorm2,
        Quantity::Variance,
        Quantity::Dilation,
        Quantity::Potential,
        Quantity::Hl11Norm,
        Quantity::GalileanNorm2,
    ];

    /// Needs multiplication by coordinates.
    pub fn is_coordinate_weighted(self) -> bool {
        matches!(
            self,
            Quantity::Variance | Quantity::Dilation | Quantity::Hl11Norm | Quantity::GalileanNorm2
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSchedule {
    pub enabled: Vec<Quantity>,
    /// Record every `stride`-th accepted step (the initial state is step 0).
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

impl Default for DiagnosticSchedule {
    fn default() -> Self {
        Self {
            enabled: vec![Quantity::Energy],
            stride: 1,
        }
    }
}

impl DiagnosticSchedule {
    pub fn all(stride: usize) -> Self {
        Self {
            enabled: Quantity::ALL.to_vec(),
            stride,
        }
    }

    pub fn has(&self, q: Quantity) -> bool {
        self.enabled.contains(&q)
    }
}

/// `Im int conj(u) x . grad u`.
pub fn dilation_a(u: &ComplexField) -> Warned<f64> {
    let grad = gradient(u);
    Warned {
        value: dilation_from_gradient(u, &grad),
        warning: boundary_check(u),
    }
}

fn dilation_from_gradient(u: &ComplexField, grad: &[ComplexField; 3]) -> f64 {
    let grid = u.grid();
    let mut acc = 0.0;
    for (idx, v) in u.values().iter().enumerate() {
        let [x, y, z] = grid.point(idx);
        let xg = grad[0].values()[idx] * x + grad[1].values()[idx] * y + grad[2].values()[idx] * z;
        acc += (v.conj() * xg).im;
    }
    acc * grid.cell_volume()
}

/// `int |x|^2 |u|^2`.
pub fn variance(u: &ComplexField) -> Warned<f64> {
    let grid = u.grid();
    let acc: f64 = u
        .values()
        .iter()
        .enumerate()
        .map(|(idx, v)| {
            let [x, y, z] = grid.point(idx);
            (x * x + y * y + z * z) * v.norm_sqr()
        })
        .sum();
    Warned {
        value: acc * grid.cell_volume(),
        warning: boundary_check(u),
    }
}

/// `||(x + 2 i t grad) u||_2^2`.
pub fn galilean_norm(u: &ComplexField, t: f64) -> Warned<f64> {
    let grad = gradient(u);
    Warned {
        value: galilean_from_gradient(u, &grad, t),
        warning: boundary_check(u),
    }
}

fn galilean_from_gradient(u: &ComplexField, grad: &[ComplexField; 3], t: f64) -> f64 {
    let grid = u.grid();
    let two_it = Complex64::new(0.0, 2.0 * t);
    let mut acc = 0.0;
    for (idx, v) in u.values().iter().enumerate() {
        let p = grid.point(idx);
        for (j, xj) in p.into_iter().enumerate() {
            acc += (v * xj + two_it * grad[j].values()[idx]).norm_sqr();
        }
    }
    acc * grid.cell_volume()
}

/// Evaluate the enabled quantities of `schedule` at `(t, u)`.
pub fn measure(
    t: f64,
    u: &ComplexField,
    coeffs: &GridCoefficients,
    enabled: &[Quantity],
) -> Result<Warned<DiagnosticRecord>> {
    let has = |q| enabled.contains(&q);
    let mut rec = DiagnosticRecord {
        t,
        mass: mass(u),
        ..Default::default()
    };
    let needs_grad_field = has(Quantity::Dilation) || has(Quantity::GalileanNorm2);
    let grad = needs_grad_field.then(|| gradient(u));
    let g2 = if has(Quantity::Energy) || has(Quantity::GradNorm2) {
        Some(match &grad {
            Some(g) => g.iter().map(|c| c.norm2_sq()).sum(),
            None => grad_norm2_sq(u),
        })
    } else {
        None
    };
    if has(Quantity::GradNorm2) {
        rec.grad_norm2 = g2;
    }
    if has(Quantity::Energy) || has(Quantity::Potential) {
        let (q4, q6) = coeffs.weighted_moments(u)?;
        rec.quartic_moment = Some(q4);
        rec.sextic_moment = Some(q6);
        let v = coeffs.potential_from_moments(q4, q6);
        if has(Quantity::Potential) {
            rec.potential = Some(v);
        }
        if let Some(g2) = g2.filter(|_| has(Quantity::Energy)) {
            rec.energy = Some(0.5 * g2 + v);
        }
    }
    let weighted = enabled.iter().any(|q| q.is_coordinate_weighted());
    let mut warning = weighted.then(|| boundary_check(u)).flatten();
    if has(Quantity::Variance) {
        rec.variance = Some(variance(u).value);
    }
    if let Some(grad) = &grad {
        if has(Quantity::Dilation) {
            rec.dilation = Some(dilation_from_gradient(u, grad));
        }
        if has(Quantity::GalileanNorm2) {
            rec.galilean_norm2 = Some(galilean_from_gradient(u, grad, t));
        }
    }
    if has(Quantity::Hl11Norm) {
        let n = angular_sobolev_norm(u, 1, 1, 2.0)?;
        rec.hl11_norm = Some(n.value);
        warning = crate::grid::merge_warnings([warning, n.warning]);
    }
    Ok(Warned {
        value: rec,
        warning,
    })
}

/// Observer appending one [`DiagnosticRecord`] every `stride` steps.
pub struct Recorder {
    coeffs: GridCoefficients,
    schedule: DiagnosticSchedule,
    step: usize,
    worst_boundary: Option<crate::grid::BoundaryWarning>,
}

impl Recorder {
    pub fn new(coeffs: GridCoefficients, schedule: DiagnosticSchedule) -> Result<Self> {
        if schedule.stride == 0 {
            return Err(Error::Config("diagnostics stride must be >= 1".into()));
        }
        Ok(Self {
            coeffs,
            schedule,
            step: 0,
            worst_boundary: None,
        })
    }

    /// Largest outer-shell mass fraction seen, if it ever exceeded tolerance.
    pub fn boundary_warning(&self) -> Option<crate::grid::BoundaryWarning> {
        self.worst_boundary
    }
}

impl StepObserver for Recorder {
    fn observe(
        &mut self,
        t: f64,
        u: &ComplexField,
        records: &mut Vec<DiagnosticRecord>,
    ) -> Result<StepControl> {
        let due = self.step % self.schedule.stride == 0;
        self.step += 1;
        if due {
            let m = measure(t, u, &self.coeffs, &self.schedule.enabled)?;
            self.worst_boundary = crate::grid::merge_warnings([self.worst_boundary, m.warning]);
            records.push(m.value);
        }
        Ok(StepControl::Continue)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupThresholds {
    /// Trigger when `||grad u||_2` reaches this multiple of its initial value.
    pub gradient_factor: f64,
    /// Flag single-step relative energy jumps above this.
    pub energy_jump: f64,
}

impl Default for BlowupThresholds {
    fn default() -> Self {
        Self {
            gradient_factor: 10.0,
            energy_jump: 0.01,
        }
    }
}

/// Observer that halts the run once the gradient norm has grown by the
/// configured factor, and notes under-resolution through energy jumps.
pub struct BlowupDetector {
    coeffs: GridCoefficients,
    thresholds: BlowupThresholds,
    initial_grad: Option<f64>,
    last_energy: Option<f64>,
    pub trigger_time: Option<f64>,
    /// First time a single step changed the energy by more than the tolerance.
    pub energy_jump_time: Option<f64>,
    pub max_energy_jump: f64,
    /// `(t, ||grad u||_2)` at every step.
    pub gradient_history: Vec<(f64, f64)>,
}

impl BlowupDetector {
    pub fn new(coeffs: GridCoefficients, thresholds: BlowupThresholds) -> Self {
        Self {
            coeffs,
            thresholds,
            initial_grad: None,
            last_energy: None,
            trigger_time: None,
            energy_jump_time: None,
            max_energy_jump: 0.0,
            gradient_history: Vec::new(),
        }
    }
}

impl StepObserver for BlowupDetector {
    fn observe(
        &mut self,
        t: f64,
        u: &ComplexField,
        _records: &mut Vec<DiagnosticRecord>,
    ) -> Result<StepControl> {
        let g2 = grad_norm2_sq(u);
        let g = g2.sqrt();
        self.gradient_history.push((t, g));
        let e = 0.5 * g2 + self.coeffs.potential_energy(u)?;
        if let Some(prev) = self.last_energy {
            let jump = (e - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
            self.max_energy_jump = self.max_energy_jump.max(jump);
            if jump > self.thresholds.energy_jump && self.energy_jump_time.is_none() {
                log::warn!("energy jumped by {:.2}% at t = {t:.6}", 100.0 * jump);
                self.energy_jump_time = Some(t);
            }
        }
        self.last_energy = Some(e);
        let g0 = *self.initial_grad.get_or_insert(g);
        if !g.is_finite() || g >= self.thresholds.gradient_factor * g0 {
            self.trigger_time = Some(t);
            return Ok(StepControl::Stop(format!(
                "gradient norm {g:.4e} reached {:.1}x its initial value {g0:.4e}",
                g / g0
            )));
        }
        Ok(StepControl::Continue)
    }
}

fn series(records: &[DiagnosticRecord], name: &'static str, f: impl Fn(&DiagnosticRecord) -> Option<f64>) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| f(r).ok_or(Error::MissingSeries(name)))
        .collect()
}

/// Running trapezoidal integral of `y` over `t`, starting at 0.
pub fn cumulative_trapezoid(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    for i in 0..t.len() {
        if i > 0 {
            acc += 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]);
        }
        out.push(acc);
    }
    out
}

/// `(variance(t) - variance(0) - 4 int_0^t A) / variance(0)`.
pub fn virial_residual(records: &[DiagnosticRecord]) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let var = series(records, "variance", |r| r.variance)?;
    let a = series(records, "dilation", |r| r.dilation)?;
    let int_a = cumulative_trapezoid(&t, &a);
    let scale = if var[0] > 0.0 { var[0] } else { 1.0 };
    Ok(var
        .iter()
        .zip(&int_a)
        .map(|(v, ia)| (v - var[0] - 4.0 * ia) / scale)
        .collect())
}

/// `A(t) - [A(0) + 4 t E(0) + int_0^t source]`, relative to `max(max_t |A|, 1)`.
pub fn dilation_identity_residual(
    records: &[DiagnosticRecord],
    coeffs: &GridCoefficients,
) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let a = series(records, "dilation", |r| r.dilation)?;
    let e0 = records[0].energy.ok_or(Error::MissingSeries("energy"))?;
    let q4 = series(records, "quartic_moment", |r| r.quartic_moment)?;
    let q6 = series(records, "sextic_moment", |r| r.sextic_moment)?;
    let src: Vec<f64> = q4
        .iter()
        .zip(&q6)
        .map(|(&a4, &a6)| coeffs.dilation_source(a4, a6))
        .collect();
    let int_src = cumulative_trapezoid(&t, &src);
    let scale = a.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let t0 = t[0];
    Ok(a.iter()
        .zip(&t)
        .zip(&int_src)
        .map(|((ai, ti), is)| (ai - a[0] - 4.0 * (ti - t0) * e0 - is) / scale)
        .collect())
}

/// Centered-difference residual of the pseudo-conformal balance
/// `d/dt [ ||J u||^2 + 8 t^2 V ] = -4 t [ (1-b1)/2 Q4 + (4-b2)/3 Q6 ]`,
/// normalized by the initial value of the bracket. Endpoints are `None`.
pub fn pseudoconformal_residual(
    records: &[DiagnosticRecord],
    coeffs: &GridCoefficients,
) -> Result<Vec<Option<f64>>> {
    let n = records.len();
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let j2 = series(records, "galilean_norm2", |r| r.galilean_norm2)?;
    let q4 = series(records, "quartic_moment", |r| r.quartic_moment)?;
    let q6 = series(records, "sextic_moment", |r| r.sextic_moment)?;
    let lhs: Vec<f64> = (0..n)
        .map(|i| j2[i] + 8.0 * t[i] * t[i] * coeffs.potential_from_moments(q4[i], q6[i]))
        .collect();
    let scale = match lhs.first() {
        Some(&v) if v > 0.0 => v,
        _ => 1.0,
    };
    let mut out = vec![None; n];
    for i in 1..n.saturating_sub(1) {
        let (h0, h1) = (t[i] - t[i - 1], t[i + 1] - t[i]);
        // three-point derivative on a possibly nonuniform stencil
        let d = -h1 / (h0 * (h0 + h1)) * lhs[i - 1]
            + (h1 - h0) / (h0 * h1) * lhs[i]
            + h0 / (h1 * (h0 + h1)) * lhs[i + 1];
        let rhs = coeffs.pseudoconformal_source(t[i], q4[i], q6[i]);
        out[i] = Some((d - rhs) / scale);
    }
    Ok(out)
}

/// Write the three identity residual columns into `records` where the
/// needed series are present.
pub fn fill_residuals(records: &mut [DiagnosticRecord], coeffs: &GridCoefficients) {
    if let Ok(v) = virial_residual(records) {
        records.iter_mut().zip(v).for_each(|(r, x)| r.virial_residual = Some(x));
    }
    if let Ok(v) = dilation_identity_residual(records, coeffs) {
        records.iter_mut().zip(v).for_each(|(r, x)| r.dilation_residual = Some(x));
    }
    if let Ok(v) = pseudoconformal_residual(records, coeffs) {
        records.iter_mut().zip(v).for_each(|(r, x)| r.pconf_residual = x);
    }
}

/// Largest absolute entry, ignoring gaps.
pub fn max_abs<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConcavityPoint {
    pub t: f64,
    pub bound: f64,
    pub variance: f64,
    /// `bound - variance`; nonnegative when the inequality holds.
    pub margin: f64,
}

/// Compare the recorded variance with the quadratic concavity bound.
pub fn concavity_check(
    records: &[DiagnosticRecord],
    p: &BlowupBoundParams,
) -> Result<Vec<ConcavityPoint>> {
    let var = series(records, "variance", |r| r.variance)?;
    Ok(records
        .iter()
        .zip(var)
        .map(|(r, v)| {
            let bound = p.bound_at(r.t);
            ConcavityPoint {
                t: r.t,
                bound,
                variance: v,
                margin: bound - v,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    /// Slope of `log(t^2 V)` against `log t`.
    pub slope: f64,
    pub intercept: f64,
    /// `exp(intercept)`, so that `t^2 V ~ constant * t^slope`.
    pub constant: f64,
    /// The bound `b1 - 1` on the slope.
    pub bound: f64,
    pub samples: usize,
}

/// Minimum number of samples in the fit window.
pub const MIN_FIT_SAMPLES: usize = 8;

/// Least-squares fit of `log(t^2 V(u(t)))` against `log t` on `window`.
pub fn potential_decay_fit(
    records: &[DiagnosticRecord],
    c: &CoefficientSpec,
    window: [f64; 2],
) -> Result<DecayFit> {
    let [t1, t2] = window;
    if !(t1 >= 1.0 && t2 > t1) {
        return Err(Error::Parameter(format!(
            "fit window must satisfy 1 <= t1 < t2, got [{t1}, {t2}]"
        )));
    }
    let mut pts = Vec::new();
    for r in records.iter().filter(|r| r.t >= t1 && r.t <= t2) {
        let v = r.potential.ok_or(Error::MissingSeries("potential"))?;
        pts.push((r.t, v));
    }
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples in [{t1}, {t2}], need {MIN_FIT_SAMPLES}",
            pts.len()
        )));
    }
    if pts.iter().any(|&(_, v)| !(v > 0.0)) {
        return Err(Error::InsufficientData(
            "potential energy is not positive on the window (vacuum or focusing data)".into(),
        ));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|&(t, v)| (t * t * v).ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    Ok(DecayFit {
        slope,
        intercept,
        constant: intercept.exp(),
        bound: c.b1 - 1.0,
        samples: pts.len(),
    })
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Interaction-picture monitor over the snapshot times of a trajectory.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ScatteringMonitor {
    pub times: Vec<f64>,
    /// `||w(t_{i+1}) - w(t_i)||` for consecutive snapshot times.
    pub gaps_l2: Vec<f64>,
    pub gaps_hl11: Vec<f64>,
    /// `||u(t) - e^{it Laplacian} phi_plus||` at every snapshot time.
    pub distance_l2: Vec<f64>,
    pub distance_hl11: Vec<f64>,
    /// `H(t) = -Im <u(t), e^{it Laplacian} phi_plus>`.
    pub overlap_h: Vec<f64>,
    #[serde(skip)]
    pub boundary_warning: Option<crate::grid::BoundaryWarning>,
}

impl ScatteringMonitor {
    /// Gap between the snapshots at `a` and `b`, if both were monitored and
    /// adjacent.
    pub fn gap_between(&self, a: f64, b: f64) -> Option<(f64, f64)> {
        let i = self.times.iter().position(|&t| t == a)?;
        (self.times.get(i + 1) == Some(&b)).then(|| (self.gaps_l2[i], self.gaps_hl11[i]))
    }
}

/// Pull snapshots back with the free flow, `w(t) = e^{-it Laplacian} u(t)`,
/// and compare them with each other and with `phi_plus` (default: the last
/// `w`). Norms of `w` differences equal the norms of the corresponding
/// `u - e^{it Laplacian} phi_plus` differences because the free flow is an
/// isometry of both `L^2` and `H^{1,1}_L`.
pub fn scattering_monitor(
    traj: &Trajectory,
    reference: Option<&ComplexField>,
) -> Result<ScatteringMonitor> {
    let n = traj.snapshots.len();
    if n == 0 {
        return Err(Error::InsufficientData("trajectory has no snapshots".into()));
    }
    let ws: Vec<ComplexField> = traj
        .snapshots
        .iter()
        .zip(&traj.snapshot_times)
        .map(|(u, &t)| free_propagate(u, -t))
        .collect();
    let phi_plus = reference.unwrap_or(&ws[n - 1]);
    let mut mon = ScatteringMonitor {
        times: traj.snapshot_times.clone(),
        ..Default::default()
    };
    let mut warnings = Vec::new();
    let mut hl11 = |f: &ComplexField| -> Result<f64> {
        let w = angular_sobolev_norm(f, 1, 1, 2.0)?;
        warnings.push(w.warning);
        Ok(w.value)
    };
    for pair in ws.windows(2) {
        let d = pair[1].sub(&pair[0])?;
        mon.gaps_l2.push(lp_norm(&d, 2.0));
        mon.gaps_hl11.push(hl11(&d)?);
    }
    for w in &ws {
        let d = w.sub(phi_plus)?;
        mon.distance_l2.push(lp_norm(&d, 2.0));
        mon.distance_hl11.push(hl11(&d)?);
        mon.overlap_h.push(-inner(w, phi_plus)?.im);
    }
    mon.boundary_warning = crate::grid::merge_warnings(warnings);
    Ok(mon)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeNormSpec {
    pub q: f64,
    pub r: f64,
    pub admissible: bool,
}

impl SpaceTimeNormSpec {
    /// `q, r` in `[2, inf]`; admissibility `2/q + 3/r = 3/2` is recorded, not
    /// enforced.
    pub fn new(q: f64, r: f64) -> Result<Self> {
        for (name, v) in [("q", q), ("r", r)] {
            if !(v >= 2.0) {
                return Err(Error::Parameter(format!("{name} must lie in [2, inf], got {v}")));
            }
        }
        let admissible = (2.0 / q + 3.0 / r - 1.5).abs() < 1e-12;
        Ok(Self { q, r, admissible })
    }
}

/// Discrete `L^q_t L^r_x` norm over the snapshots (trapezoid in time).
pub fn spacetime_norm(traj: &Trajectory, spec: &SpaceTimeNormSpec) -> Result<f64> {
    if !spec.admissible {
        log::warn!("space-time pair ({}, {}) is not admissible", spec.q, spec.r);
    }
    let norms: Vec<f64> = traj.snapshots.iter().map(|u| lp_norm(u, spec.r)).collect();
    if norms.is_empty() {
        return Err(Error::InsufficientData("trajectory has no snapshots".into()));
    }
    if spec.q.is_infinite() {
        return Ok(norms.iter().copied().fold(0.0, f64::max));
    }
    if norms.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least two snapshots for a time integral".into(),
        ));
    }
    let powered: Vec<f64> = norms.iter().map(|v| v.powf(spec.q)).collect();
    let total = *cumulative_trapezoid(&traj.snapshot_times, &powered)
        .last()
        .expect("non-empty");
    Ok(total.powf(1.0 / spec.q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{strang_evolve, StepperConfig};
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn gaussian(grid: &crate::grid::GridSpec) -> ComplexField {
        ComplexField::from_fn(grid, |[x, y, z]| Complex64::new((-(x * x + y * y + z * z) / 2.0).exp(), 0.0))
    }

    fn free_closed_form(grid: &crate::grid::GridSpec, t: f64) -> ComplexField {
        let a = Complex64::new(1.0, 2.0 * t);
        ComplexField::from_fn(grid, |[x, y, z]| {
            a.powf(-1.5) * (-(x * x + y * y + z * z) / (2.0 * a)).exp()
        })
    }

    #[test]
    fn pointwise_functionals_on_gaussians() {
        let g = make_grid(48, 8.0, true).unwrap();
        let phi = gaussian(&g);
        let pi32 = PI.powf(1.5);
        assert!(dilation_a(&phi).value.abs() < 1e-12);
        assert!((variance(&phi).value / (1.5 * pi32) - 1.0).abs() < 1e-6);
        let t = 0.4;
        let u = free_closed_form(&g, t);
        assert!((dilation_a(&u).value / (3.0 * pi32 * t) - 1.0).abs() < 1e-6);
        assert!((variance(&u).value / (1.5 * pi32 * (1.0 + 4.0 * t * t)) - 1.0).abs() < 1e-5);
        // J commutes with the free flow
        let j = galilean_norm(&u, t).value;
        assert!((j / variance(&phi).value - 1.0).abs() < 1e-8);
        assert!((galilean_norm(&phi, 0.0).value / variance(&phi).value - 1.0).abs() < 1e-12);
        let boosted = phi.map_with_point(|[x, y, _], v| v * Complex64::from_polar(1.0, 0.7 * x - 0.2 * y));
        assert!(dilation_a(&boosted).value.abs() < 1e-10);
    }

    #[test]
    fn parallel_axis_identity() {
        let g = make_grid(48, 10.0, true).unwrap();
        let a = [0.5, -0.25, 0.75];
        let shifted = ComplexField::from_fn(&g, |[x, y, z]| {
            let r2 = (x - a[0]).powi(2) + (y - a[1]).powi(2) + (z - a[2]).powi(2);
            Complex64::new((-r2 / 2.0).exp(), 0.0)
        });
        let phi = gaussian(&g);
        let a2 = a.iter().map(|v| v * v).sum::<f64>();
        let expected = variance(&phi).value + a2 * mass(&phi);
        assert!((variance(&shifted).value / expected - 1.0).abs() < 1e-8);
    }

    #[test]
    fn real_gaussian_galilean_expansion() {
        let g = make_grid(48, 8.0, true).unwrap();
        let phi = gaussian(&g);
        let t = 0.3;
        let expected = variance(&phi).value + 4.0 * t * t * grad_norm2_sq(&phi);
        assert!((galilean_norm(&phi, t).value / expected - 1.0).abs() < 1e-8);
    }

    fn free_run(dt: f64) -> Vec<DiagnosticRecord> {
        let g = make_grid(48, 10.0, true).unwrap();
        let c = CoefficientSpec::free();
        let coeffs = GridCoefficients::new(&g, &c).unwrap();
        let mut rec = Recorder::new(coeffs, DiagnosticSchedule::all(1)).unwrap();
        let cfg = StepperConfig::fixed(dt, 0.5);
        let ev = strang_evolve(&gaussian(&g), &c, &cfg, &mut [&mut rec]).unwrap();
        ev.trajectory.records
    }

    #[test]
    fn free_flow_identities() {
        let g = make_grid(48, 10.0, true).unwrap();
        let coeffs = GridCoefficients::new(&g, &CoefficientSpec::free()).unwrap();
        let recs = free_run(0.05);
        assert_eq!(recs.len(), 11);
        assert!(max_abs(&virial_residual(&recs).unwrap()) < 1e-8);
        assert!(max_abs(&dilation_identity_residual(&recs, &coeffs).unwrap()) < 1e-8);
        let pc = pseudoconformal_residual(&recs, &coeffs).unwrap();
        assert!(pc[0].is_none() && pc[10].is_none());
        // d/dt ||J u||^2 is zero; the quadratic J-norm is differentiated exactly
        assert!(pc.iter().flatten().all(|r| r.abs() < 1e-8));
        let j0 = recs[0].galilean_norm2.unwrap();
        assert!(recs.iter().all(|r| (r.galilean_norm2.unwrap() / j0 - 1.0).abs() < 1e-8));
        let empty: Vec<DiagnosticRecord> = Vec::new();
        assert!(virial_residual(&empty).unwrap().is_empty());
    }

    #[test]
    fn missing_series_is_reported() {
        let recs = vec![DiagnosticRecord {
            t: 0.0,
            mass: 1.0,
            ..Default::default()
        }];
        assert!(matches!(virial_residual(&recs), Err(Error::MissingSeries("variance"))));
    }

    #[test]
    fn vacuum_residuals_vanish_and_fit_is_rejected() {
        let g = make_grid(16, 4.0, true).unwrap();
        let c = CoefficientSpec::new(1.0, 2.0, 1.0, 4.0).unwrap();
        let coeffs = GridCoefficients::new(&g, &c).unwrap();
        let zero = ComplexField::zeros(&g);
        let recs: Vec<DiagnosticRecord> = (0..10)
            .map(|i| {
                measure(1.0 + i as f64, &zero, &coeffs, &Quantity::ALL)
                    .unwrap()
                    .value
            })
            .collect();
        assert!(virial_residual(&recs).unwrap().iter().all(|&r| r == 0.0));
        assert!(matches!(
            potential_decay_fit(&recs, &c, [1.0, 10.0]),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            potential_decay_fit(&recs[..5], &c, [1.0, 10.0]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn decay_fit_recovers_power_law() {
        let c = CoefficientSpec::new(1.0, 2.0, 1.0, 4.0).unwrap();
        let recs: Vec<DiagnosticRecord> = (0..20)
            .map(|i| {
                let t = 1.0 + 0.5 * i as f64;
                DiagnosticRecord {
                    t,
                    potential: Some(3.0 * t.powf(-2.7)),
                    ..Default::default()
                }
            })
            .collect();
        let fit = potential_decay_fit(&recs, &c, [1.0, 8.0]).unwrap();
        assert!((fit.slope + 0.7).abs() < 1e-12);
        assert!((fit.constant - 3.0).abs() < 1e-12);
        assert_eq!(fit.bound, 1.0);
        assert_eq!(fit.samples, 15);
    }

    #[test]
    fn concavity_margin_starts_at_zero() {
        let recs = free_run(0.1);
        let p = BlowupBoundParams::new(
            0.0,
            recs[0].variance.unwrap(),
            recs[0].dilation.unwrap(),
            recs[0].energy.unwrap(),
        )
        .unwrap();
        let pts = concavity_check(&recs, &p).unwrap();
        assert_eq!(pts[0].margin, 0.0);
        assert!(pts.iter().all(|p| p.margin >= -1e-9 * p.variance));
    }

    #[test]
    fn free_scattering_monitor_is_trivial() {
        let g = make_grid(32, 8.0, true).unwrap();
        let mut cfg = StepperConfig::fixed(0.1, 1.0);
        cfg.snapshot_times = vec![0.25, 0.5];
        let phi = gaussian(&g);
        let ev = strang_evolve(&phi, &CoefficientSpec::free(), &cfg, &mut []).unwrap();
        let mon = scattering_monitor(&ev.trajectory, None).unwrap();
        assert_eq!(mon.times, vec![0.0, 0.25, 0.5, 1.0]);
        assert!(mon.gaps_l2.iter().chain(&mon.gaps_hl11).all(|&g| g <= 1e-10));
        assert!(mon.distance_l2.iter().all(|&d| d <= 1e-10));
        assert!(mon.overlap_h.iter().all(|h| h.abs() < 1e-12));
        assert!(mon.gap_between(0.25, 0.5).is_some());
        assert!(mon.gap_between(0.0, 0.5).is_none());
    }

    #[test]
    fn spacetime_norms() {
        let s = SpaceTimeNormSpec::new(10.0, 30.0 / 13.0).unwrap();
        assert!(s.admissible);
        assert!(!SpaceTimeNormSpec::new(4.0, 4.0).unwrap().admissible);
        assert!(SpaceTimeNormSpec::new(1.0, 2.0).is_err());
        let g = make_grid(24, 8.0, true).unwrap();
        let mut cfg = StepperConfig::fixed(0.1, 1.0);
        cfg.snapshot_stride = 1;
        let phi = gaussian(&g);
        let ev = strang_evolve(&phi, &CoefficientSpec::free(), &cfg, &mut []).unwrap();
        let sup = spacetime_norm(&ev.trajectory, &SpaceTimeNormSpec::new(f64::INFINITY, 2.0).unwrap()).unwrap();
        assert!((sup / mass(&phi).sqrt() - 1.0).abs() < 1e-12);
        let st = spacetime_norm(&ev.trajectory, &SpaceTimeNormSpec::new(2.0, 6.0).unwrap()).unwrap();
        assert!(st.is_finite() && st > 0.0 && st < 10.0 * mass(&phi).sqrt());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn variance_matches_galilean_norm_at_time_zero(amp in 0.1f64..3.0, k in -1.0f64..1.0) {
            let g = make_grid(16, 6.0, true).unwrap();
            let u = gaussian(&g).map_with_point(|[x, _, _], v| v * amp * Complex64::from_polar(1.0, k * x));
            let v = variance(&u).value;
            proptest::prop_assert!((galilean_norm(&u, 0.0).value - v).abs() <= 1e-12 * v);
        }

        #[test]
        fn dilation_is_odd_under_conjugation(k in -1.0f64..1.0) {
            let g = make_grid(16, 6.0, true).unwrap();
            let u = gaussian(&g).map_with_point(|[x, y, _], v| v * Complex64::from_polar(1.0, k * (x + 0.5 * y)));
            let a = dilation_a(&u).value;
            let b = dilation_a(&u.map(|v| v.conj())).value;
            proptest::prop_assert!((a + b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
