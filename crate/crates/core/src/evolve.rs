//! Time integration of `i u_t = -Laplacian u + K_1 |u|^2 u + K_2 |u|^4 u`.
//!
//! The stepper is a symmetric (Strang) splitting of the exact free flow and
//! the exact pointwise nonlinear phase rotation. Both substeps are unitary,
//! so mass is conserved to roundoff. [`picard_solve`] iterates the Duhamel
//! formula instead and serves as an independent cross-check.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticRecord;
use crate::error::{Error, Result};
use crate::grid::{ComplexField, GridSpec, ZERO};
use crate::model::{CoefficientSpec, GridCoefficients};
use crate::Complex64;

/// Smallest step the adaptive controller may take.
pub const MIN_ADAPTIVE_DT: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub adaptive: bool,
    /// Cap on `dt * max |K_1 |u|^2 + K_2 |u|^4|` when adaptive.
    #[serde(default = "default_max_phase")]
    pub max_phase_per_step: f64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    /// Extra times at which the stepper lands exactly and keeps a snapshot.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

fn default_max_phase() -> f64 {
    std::f64::consts::FRAC_PI_4
}

fn default_stride() -> usize {
    usize::MAX
}

impl StepperConfig {
    pub fn fixed(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            adaptive: false,
            max_phase_per_step: default_max_phase(),
            snapshot_stride: usize::MAX,
            snapshot_times: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if self.adaptive
            && !(self.max_phase_per_step > 0.0
                && self.max_phase_per_step <= std::f64::consts::FRAC_PI_4)
        {
            return Err(Error::Config(format!(
                "max_phase_per_step must lie in (0, pi/4], got {}",
                self.max_phase_per_step
            )));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Config("snapshot_stride must be >= 1".into()));
        }
        if self.snapshot_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("snapshot_times must be finite".into()));
        }
        Ok(())
    }
}

/// Time-ordered record of an evolution.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    /// Every accepted step, starting with the initial time.
    pub times: Vec<f64>,
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<ComplexField>,
    /// Rows pushed by the observers.
    pub records: Vec<DiagnosticRecord>,
}

impl Trajectory {
    /// Snapshot taken at (exactly) time `t`, if any.
    pub fn snapshot_at(&self, t: f64) -> Option<&ComplexField> {
        self.snapshot_times
            .iter()
            .position(|&s| s == t)
            .map(|i| &self.snapshots[i])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepControl {
    Continue,
    Stop(String),
}

/// Called once for the initial state and once after every accepted step.
pub trait StepObserver {
    fn observe(
        &mut self,
        t: f64,
        u: &ComplexField,
        records: &mut Vec<DiagnosticRecord>,
    ) -> Result<StepControl>;
}

#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    Completed,
    /// An observer (typically the blowup detector) halted the run.
    ObserverStop { t: f64, reason: String },
    NonFinite { t: f64 },
    DtUnderflow { t: f64, dt: f64 },
}

impl Termination {
    pub fn is_completed(&self) -> bool {
        matches!(self, Termination::Completed)
    }

    /// Non-finite state or adaptive step collapse.
    pub fn is_blowup_suspected(&self) -> bool {
        matches!(
            self,
            Termination::NonFinite { .. } | Termination::DtUnderflow { .. }
        )
    }
}

#[derive(Clone, Debug)]
pub struct Evolution {
    pub trajectory: Trajectory,
    pub final_state: ComplexField,
    pub final_time: f64,
    pub steps: usize,
    pub termination: Termination,
}

/// Free-flow multiplier table `exp(-i t |k|^2) / n^3` for a given step.
struct PropagatorCache {
    grid: GridSpec,
    k2: Vec<f64>,
    tables: HashMap<u64, Vec<Complex64>>,
}

impl PropagatorCache {
    fn new(grid: &GridSpec) -> Self {
        let mut k2 = vec![0.0; grid.len()];
        grid.for_each_mode(|idx, kx, ky, kz| k2[idx] = kx * kx + ky * ky + kz * kz);
        Self {
            grid: grid.clone(),
            k2,
            tables: HashMap::new(),
        }
    }

    fn table(&mut self, t: f64) -> &[Complex64] {
        if self.tables.len() > 8 && !self.tables.contains_key(&t.to_bits()) {
            self.tables.clear();
        }
        let scale = 1.0 / self.grid.len() as f64;
        let k2 = &self.k2;
        self.tables.entry(t.to_bits()).or_insert_with(|| {
            k2.iter()
                .map(|&q| Complex64::from_polar(scale, -t * q))
                .collect()
        })
    }

    /// In place `values <- e^{i t Laplacian} values`.
    fn propagate(&mut self, values: &mut [Complex64], t: f64) {
        if t == 0.0 {
            return;
        }
        let grid = self.grid.clone();
        grid.forward(values);
        let table = self.table(t);
        for (v, m) in values.iter_mut().zip(table) {
            *v *= m;
        }
        // the table carries the 1/n^3 normalization
        let n3 = grid.len() as f64;
        grid.inverse(values);
        values.iter_mut().for_each(|v| *v *= n3);
    }
}

/// `e^{i t Laplacian} f`, exact on the lattice; any real `t`.
pub fn free_propagate(f: &ComplexField, t: f64) -> ComplexField {
    if t == 0.0 {
        return f.clone();
    }
    f.apply_multiplier(|kx, ky, kz| Complex64::from_polar(1.0, -t * (kx * kx + ky * ky + kz * kz)))
}

fn phase_rotate(coeffs: &GridCoefficients, values: &mut [Complex64], dt: f64) {
    for (idx, v) in values.iter_mut().enumerate() {
        let p = coeffs.potential_at(idx, v.norm_sqr());
        *v *= Complex64::from_polar(1.0, -dt * p);
    }
}

/// Exact flow of `i u_t = (K_1 |u|^2 + K_2 |u|^4) u` over `dt`.
pub fn nonlinear_phase_step(
    u: &ComplexField,
    dt: f64,
    c: &CoefficientSpec,
) -> Result<ComplexField> {
    u.ensure_finite("nonlinear_phase_step")?;
    let coeffs = GridCoefficients::new(u.grid(), c)?;
    let mut out = u.clone();
    phase_rotate(&coeffs, out.values_mut(), dt);
    Ok(out)
}

/// Reusable Strang stepper for one grid and coefficient set.
pub struct StrangStepper {
    coeffs: GridCoefficients,
    cache: PropagatorCache,
}

impl StrangStepper {
    pub fn new(grid: &GridSpec, c: &CoefficientSpec) -> Result<Self> {
        Ok(Self {
            coeffs: GridCoefficients::new(grid, c)?,
            cache: PropagatorCache::new(grid),
        })
    }

    pub fn coefficients(&self) -> &GridCoefficients {
        &self.coeffs
    }

    /// One symmetric step: half phase, full free flow, half phase. `dt` may
    /// be negative.
    pub fn step(&mut self, u: &mut ComplexField, dt: f64) {
        let free = self.coeffs.spec().is_free();
        if !free {
            phase_rotate(&self.coeffs, u.values_mut(), 0.5 * dt);
        }
        self.cache.propagate(u.values_mut(), dt);
        if !free {
            phase_rotate(&self.coeffs, u.values_mut(), 0.5 * dt);
        }
    }

    /// Largest `dt / 2^m` whose phase increment stays under the cap.
    fn adaptive_dt(&self, u: &ComplexField, base: f64, cap: f64) -> f64 {
        let rate = self.coeffs.max_phase_rate(u);
        let mut dt = base;
        while dt * rate > cap && dt >= MIN_ADAPTIVE_DT {
            dt *= 0.5;
        }
        dt
    }
}

/// Evolve `phi` from `t = 0` to `cfg.t_end`.
pub fn strang_evolve(
    phi: &ComplexField,
    c: &CoefficientSpec,
    cfg: &StepperConfig,
    observers: &mut [&mut dyn StepObserver],
) -> Result<Evolution> {
    strang_evolve_from(phi, 0.0, c, cfg, observers)
}

/// Evolve `phi`, given at time `t0`, to `cfg.t_end`.
pub fn strang_evolve_from(
    phi: &ComplexField,
    t0: f64,
    c: &CoefficientSpec,
    cfg: &StepperConfig,
    observers: &mut [&mut dyn StepObserver],
) -> Result<Evolution> {
    cfg.validate()?;
    c.validate()?;
    phi.ensure_finite("initial datum")?;
    if (c.b1 > 0.0 || c.b2 > 0.0) && !phi.grid().offset() {
        return Err(Error::Config(
            "power-law weights with b > 0 require an offset grid".into(),
        ));
    }
    if !(cfg.t_end > t0) {
        return Err(Error::Config(format!(
            "t_end = {} must exceed the start time {t0}",
            cfg.t_end
        )));
    }

    let mut stepper = StrangStepper::new(phi.grid(), c)?;
    let mut stops: Vec<f64> = cfg
        .snapshot_times
        .iter()
        .copied()
        .filter(|&s| s > t0 && s < cfg.t_end)
        .collect();
    stops.push(cfg.t_end);
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let mut traj = Trajectory::default();
    let mut u = phi.clone();
    let mut t = t0;
    let mut steps = 0usize;

    traj.times.push(t);
    traj.snapshot_times.push(t);
    traj.snapshots.push(u.clone());
    if let Some(stop) = notify(observers, t, &u, &mut traj.records)? {
        return Ok(finish(traj, u, t, steps, stop));
    }

    let mut next_stop = 0;
    let termination = loop {
        let target = stops[next_stop];
        let mut dt = if cfg.adaptive {
            stepper.adaptive_dt(&u, cfg.dt, cfg.max_phase_per_step)
        } else {
            cfg.dt
        };
        if dt < MIN_ADAPTIVE_DT {
            break Termination::DtUnderflow { t, dt };
        }
        let mut landed = false;
        if t + dt >= target - 1e-6 * dt {
            dt = target - t;
            landed = true;
        }
        stepper.step(&mut u, dt);
        steps += 1;
        t = if landed { target } else { t + dt };
        if !u.is_finite() {
            break Termination::NonFinite { t };
        }
        traj.times.push(t);
        let on_stride = cfg.snapshot_stride != usize::MAX && steps % cfg.snapshot_stride == 0;
        if landed || on_stride {
            traj.snapshot_times.push(t);
            traj.snapshots.push(u.clone());
        }
        if let Some(stop) = notify(observers, t, &u, &mut traj.records)? {
            break stop;
        }
        if landed {
            next_stop += 1;
            if next_stop == stops.len() {
                break Termination::Completed;
            }
        }
    };
    if !matches!(termination, Termination::Completed)
        && traj.snapshot_times.last() != Some(&t)
        && u.is_finite()
    {
        traj.snapshot_times.push(t);
        traj.snapshots.push(u.clone());
    }
    Ok(finish(traj, u, t, steps, termination))
}

fn notify(
    observers: &mut [&mut dyn StepObserver],
    t: f64,
    u: &ComplexField,
    records: &mut Vec<DiagnosticRecord>,
) -> Result<Option<Termination>> {
    for obs in observers.iter_mut() {
        if let StepControl::Stop(reason) = obs.observe(t, u, records)? {
            return Ok(Some(Termination::ObserverStop { t, reason }));
        }
    }
    Ok(None)
}

fn finish(
    trajectory: Trajectory,
    final_state: ComplexField,
    final_time: f64,
    steps: usize,
    termination: Termination,
) -> Evolution {
    Evolution {
        trajectory,
        final_state,
        final_time,
        steps,
        termination,
    }
}

#[derive(Clone, Debug)]
pub struct PicardOutcome {
    /// The last iterate at `t_end`.
    pub field: ComplexField,
    /// `sup_j ||u^{(k)}(s_j) - u^{(k-1)}(s_j)||_2` for `k = 1..=n_iter`.
    pub increments: Vec<f64>,
}

impl PicardOutcome {
    /// Last increment, the convergence certificate.
    pub fn last_increment(&self) -> f64 {
        *self.increments.last().expect("at least one iteration")
    }

    /// Successive increment ratios while both increments are above `floor`.
    pub fn contraction_ratios(&self, floor: f64) -> Vec<f64> {
        self.increments
            .windows(2)
            .filter(|w| w[0] > floor && w[1] > floor)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

/// Fixed-point iteration of the Duhamel formula
/// `u(t) = e^{it Laplacian} phi - i int_0^t e^{i(t-s) Laplacian} N(u(s)) ds`
/// on the node grid `s_j = j t_end / M`, `M = ceil(t_end / quad_dt)`, with the
/// trapezoidal rule in time and exact propagators. Starts from the free
/// evolution of `phi`.
pub fn picard_solve(
    phi: &ComplexField,
    c: &CoefficientSpec,
    t_end: f64,
    n_iter: usize,
    quad_dt: f64,
) -> Result<PicardOutcome> {
    if n_iter == 0 {
        return Err(Error::Parameter("n_iter must be >= 1".into()));
    }
    if !(t_end > 0.0 && quad_dt > 0.0) {
        return Err(Error::Parameter(format!(
            "t_end and quad_dt must be positive, got {t_end}, {quad_dt}"
        )));
    }
    phi.ensure_finite("initial datum")?;
    let grid = phi.grid().clone();
    let coeffs = GridCoefficients::new(&grid, c)?;
    let m = (t_end / quad_dt - 1e-9).ceil().max(1.0) as usize;
    let ds = t_end / m as f64;
    let nodes: Vec<f64> = (0..=m).map(|j| j as f64 * ds).collect();

    let mut k2 = vec![0.0; grid.len()];
    grid.for_each_mode(|idx, kx, ky, kz| k2[idx] = kx * kx + ky * ky + kz * kz);
    let phi_hat = phi.to_spectral();
    // u(s) from its interaction-picture spectrum: u_hat(s) = e^{-i s k^2} w_hat(s)
    let to_physical = |w_hat: &[Complex64], s: f64| -> ComplexField {
        let values: Vec<Complex64> = w_hat
            .iter()
            .zip(&k2)
            .map(|(w, &q)| w * Complex64::from_polar(1.0, -s * q))
            .collect();
        ComplexField::from_spectral(&grid, values)
    };

    let mut iterate: Vec<ComplexField> = nodes.iter().map(|&s| to_physical(&phi_hat, s)).collect();
    let mut increments = Vec::with_capacity(n_iter);
    let floor = 1e-11 * phi.norm2_sq().sqrt().max(f64::MIN_POSITIVE);

    for k in 1..=n_iter {
        // G_j = e^{-i s_j Laplacian} N(u(s_j)) in spectral form
        let g_hat: Vec<Vec<Complex64>> = nodes
            .iter()
            .zip(&iterate)
            .map(|(&s, u)| {
                let mut n_hat = coeffs.nonlinear_term(u)?.to_spectral();
                for (v, &q) in n_hat.iter_mut().zip(&k2) {
                    *v *= Complex64::from_polar(1.0, s * q);
                }
                Ok(n_hat)
            })
            .collect::<Result<_>>()?;

        let mut w_hat = phi_hat.clone();
        let mut next = Vec::with_capacity(nodes.len());
        next.push(to_physical(&w_hat, 0.0));
        let minus_i_half_ds = Complex64::new(0.0, -0.5 * ds);
        for j in 1..nodes.len() {
            for ((w, a), b) in w_hat.iter_mut().zip(&g_hat[j - 1]).zip(&g_hat[j]) {
                *w += minus_i_half_ds * (a + b);
            }
            next.push(to_physical(&w_hat, nodes[j]));
        }

        let increment = next
            .iter()
            .zip(&iterate)
            .map(|(a, b)| {
                a.values()
                    .iter()
                    .zip(b.values())
                    .map(|(x, y)| (x - y).norm_sqr())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
            .sqrt()
            * grid.cell_volume().sqrt();
        if !increment.is_finite() {
            return Err(Error::NonFinite("Picard iterate"));
        }
        if let Some(&previous) = increments.last() {
            if increment > previous && increment > floor {
                return Err(Error::Divergence {
                    iteration: k,
                    increment,
                    previous,
                });
            }
        }
        increments.push(increment);
        iterate = next;
    }
    let field = iterate.pop().expect("nodes non-empty");
    Ok(PicardOutcome { field, increments })
}

const CHECKPOINT_MAGIC: &str = "CQNLS-CHECKPOINT";
const CHECKPOINT_VERSION: u32 = 1;

/// Write `u` at time `t` as: one ASCII header line
/// `CQNLS-CHECKPOINT v1 n_per_axis=<n> offset=<0|1> samples=<n^3>`, then
/// little-endian `f64` half_length, `f64` time, and `(re, im)` pairs in
/// storage order.
pub fn write_checkpoint(path: &std::path::Path, u: &ComplexField, t: f64) -> Result<()> {
    use std::io::Write;
    let grid = u.grid();
    let mut buf = Vec::with_capacity(64 + 16 * (grid.len() + 1));
    writeln!(
        buf,
        "{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION} n_per_axis={} offset={} samples={}",
        grid.n_per_axis(),
        u8::from(grid.offset()),
        grid.len()
    )?;
    buf.extend_from_slice(&grid.half_length().to_le_bytes());
    buf.extend_from_slice(&t.to_le_bytes());
    for v in u.values() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Inverse of [`write_checkpoint`]; rebuilds the grid from the header.
pub fn read_checkpoint(path: &std::path::Path) -> Result<(ComplexField, f64)> {
    let bad = |reason: String| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    };
    let bytes = std::fs::read(path)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let header =
        std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not ASCII".into()))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(CHECKPOINT_MAGIC) {
        return Err(bad("bad magic".into()));
    }
    let version = parts.next().unwrap_or_default();
    if version != format!("v{CHECKPOINT_VERSION}") {
        return Err(bad(format!("unsupported version {version:?}")));
    }
    let mut fields = HashMap::new();
    for kv in parts {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed header entry {kv:?}")))?;
        fields.insert(k, v);
    }
    let get = |k: &str| -> Result<usize> {
        fields
            .get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(format!("header lacks {k}")))
    };
    let n = get("n_per_axis")?;
    let offset = get("offset")? == 1;
    let samples = get("samples")?;
    if samples != n * n * n {
        return Err(bad(format!("samples = {samples} inconsistent with n = {n}")));
    }
    let body = &bytes[nl + 1..];
    if body.len() != 16 + 16 * samples {
        return Err(bad(format!(
            "payload has {} bytes, expected {}",
            body.len(),
            16 + 16 * samples
        )));
    }
    let f = |i: usize| f64::from_le_bytes(body[8 * i..8 * i + 8].try_into().expect("8 bytes"));
    let half_length = f(0);
    let t = f(1);
    let grid = crate::grid::make_grid(n, half_length, offset)?;
    let values = (0..samples)
        .map(|s| Complex64::new(f(2 + 2 * s), f(3 + 2 * s)))
        .collect();
    Ok((ComplexField::new(&grid, values)?, t))
}

/// Zero field helper for callers that build data sample by sample.
pub fn zeros_like(f: &ComplexField) -> ComplexField {
    ComplexField::new(f.grid(), vec![ZERO; f.grid().len()]).expect("same length")
}
