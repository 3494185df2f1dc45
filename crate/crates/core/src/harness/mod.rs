//! Scenario orchestration: runs a [`ScenarioConfig`], evaluates its checks
//! and writes the time series, summaries, reports and checkpoints.
//!
//! Artifacts of a scenario named `name` in its `outputs` directory:
//!
//! * `name.csv`: one row per recorded step, columns [`CSV_COLUMNS`]
//! * `name.summary.json`: [`RunSummary`]
//! * `name.checkpoint`: final state, when `checkpoint` is set
//! * `name.probe-<i>-<kind>.json` and `name.probes.json`: probe reports
//! * `name.level<k>.csv` and `name.identities.json`: dt-ladder runs
//!
//! [`CSV_COLUMNS`]: crate::diagnostics::CSV_COLUMNS

pub mod config;
pub mod datum;
pub mod output;

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::diagnostics::{
    concavity_check, dilation_a, fill_residuals, potential_decay_fit, scattering_monitor,
    variance, BlowupDetector, DecayFit, DiagnosticRecord, Recorder, ScatteringMonitor,
};
use crate::error::{Error, Result};
use crate::evolve::{strang_evolve_from, write_checkpoint, Evolution, StepObserver, StepperConfig, Termination};
use crate::model::{blowup_time_bound, mass, BlowupBoundParams, CoefficientSpec, GridCoefficients};
use crate::probes::{probe, ProbeKind, ProbeReport, ProbeSpec};

pub use config::{Checks, GridConfig, InitialDatum, ScenarioConfig, Template};
pub use datum::build_datum;

/// Process exit status of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitStatus {
    Completed,
    BlowupDetected,
    AssertionFailed,
    ConfigError,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Completed => 0,
            ExitStatus::BlowupDetected => 2,
            ExitStatus::AssertionFailed => 3,
            ExitStatus::ConfigError => 4,
        }
    }

    fn of_error(e: &Error) -> Self {
        match e {
            Error::Config(_)
            | Error::Parameter(_)
            | Error::GridMismatch(_)
            | Error::Checkpoint { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => ExitStatus::ConfigError,
            _ => ExitStatus::AssertionFailed,
        }
    }
}

/// One evaluated acceptance check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub measured: f64,
    /// `"<="`, `">="` or `"in"` (with `tolerance` the lower and `upper` the upper end).
    pub relation: &'static str,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub pass: bool,
}

impl CheckOutcome {
    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            relation: "<=",
            tolerance,
            upper: None,
            pass: measured <= tolerance,
        }
    }

    pub fn at_least(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            relation: ">=",
            tolerance,
            upper: None,
            pass: measured >= tolerance,
        }
    }

    pub fn within(name: impl Into<String>, measured: f64, [lo, hi]: [f64; 2]) -> Self {
        Self {
            name: name.into(),
            measured,
            relation: "in",
            tolerance: lo,
            upper: Some(hi),
            pass: measured >= lo && measured <= hi,
        }
    }
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.pass { "ok" } else { "FAILED" };
        match self.upper {
            Some(hi) => write!(
                f,
                "{}: measured {:.6e}, required in [{:.6e}, {:.6e}] ({verdict})",
                self.name, self.measured, self.tolerance, hi
            ),
            None => write!(
                f,
                "{}: measured {:.6e}, required {} {:.6e} ({verdict})",
                self.name, self.measured, self.relation, self.tolerance
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TerminationSummary {
    pub kind: &'static str,
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl TerminationSummary {
    fn of(term: &Termination, final_time: f64) -> Self {
        let (kind, reason) = match term {
            Termination::Completed => ("completed", None),
            Termination::ObserverStop { reason, .. } => ("observer-stop", Some(reason.clone())),
            Termination::NonFinite { .. } => ("non-finite", None),
            Termination::DtUnderflow { dt, .. } => ("dt-underflow", Some(format!("dt = {dt:e}"))),
        };
        Self {
            kind,
            t: final_time,
            reason,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConservationSummary {
    pub mass_initial: f64,
    /// `max_t |m(t) - m(0)| / m(0)` over recorded steps and the final state.
    pub mass_drift: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
    /// `(E(final) - E(0)) / |E(0)|`.
    pub energy_drift: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IdentitySummary {
    pub virial_max: Option<f64>,
    pub dilation_max: Option<f64>,
    pub pconf_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlowupSummary {
    pub energy: f64,
    pub initial_variance: f64,
    pub initial_dilation: f64,
    pub alpha: f64,
    /// First zero of the concavity bound.
    pub time_bound: Option<f64>,
    pub trigger_time: Option<f64>,
    pub energy_jump_time: Option<f64>,
    pub max_energy_jump: f64,
    /// `min_t (bound - variance) / variance(0)` over recorded steps.
    pub worst_margin_ratio: Option<f64>,
    /// `blowup-confirmed`, `bound-exceeded`, `blowup-detected` or `no-blowup`.
    pub verdict: &'static str,
    /// Grid range of `(K_1 - x.grad K_1) / K_1` and `(4 K_2 - x.grad K_2) / K_2`.
    pub quartic_dilation_ratio: Option<(f64, f64)>,
    pub sextic_dilation_ratio: Option<(f64, f64)>,
    /// Whether the coefficient hypotheses of the bound hold for `alpha`.
    pub hypothesis_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScatteringSummary {
    #[serde(flatten)]
    pub monitor: ScatteringMonitor,
    /// Ratios of consecutive gaps whose intervals start at or after `gap_ratio_from`.
    pub ratios_l2: Vec<f64>,
    pub ratios_hl11: Vec<f64>,
    /// L2 distance to the final profile at the last snapshot before the end.
    pub distance_before_end: f64,
    /// Geometric estimate `last_gap / (last_ratio - 1)` of the remaining
    /// distance to the limit beyond the final snapshot.
    pub tail_estimate: Option<f64>,
    pub boundary_warning: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub template: Option<Template>,
    pub seed: u64,
    pub exit_code: i32,
    pub status: ExitStatus,
    pub termination: Option<TerminationSummary>,
    pub steps: usize,
    pub grid: GridConfig,
    pub coefficients: CoefficientSpec,
    pub stepper: StepperConfig,
    pub conservation: Option<ConservationSummary>,
    pub identities: Option<IdentitySummary>,
    pub blowup: Option<BlowupSummary>,
    pub scattering: Option<ScatteringSummary>,
    pub decay_fit: Option<DecayFit>,
    /// Largest outer-shell mass fraction, when it exceeded tolerance.
    pub boundary_warning: Option<f64>,
    pub checks: Vec<CheckOutcome>,
    pub first_failure: Option<CheckOutcome>,
    pub error: Option<String>,
    /// File names written to the output directory.
    pub artifacts: Vec<String>,
}

impl RunSummary {
    fn new(cfg: &ScenarioConfig) -> Self {
        Self {
            name: cfg.name.clone(),
            template: cfg.template,
            seed: cfg.seed,
            exit_code: 0,
            status: ExitStatus::Completed,
            termination: None,
            steps: 0,
            grid: cfg.grid,
            coefficients: cfg.coefficients,
            stepper: cfg.stepper.clone(),
            conservation: None,
            identities: None,
            blowup: None,
            scattering: None,
            decay_fit: None,
            boundary_warning: None,
            checks: Vec::new(),
            first_failure: None,
            error: None,
            artifacts: Vec::new(),
        }
    }

    fn finish(&mut self, status: ExitStatus) {
        self.first_failure = self.checks.iter().find(|c| !c.pass).cloned();
        let status = if self.first_failure.is_some() {
            status.max(ExitStatus::AssertionFailed)
        } else {
            status
        };
        self.status = status;
        self.exit_code = status.code();
    }

    fn fail(&mut self, e: &Error) {
        self.error = Some(e.to_string());
        self.finish(ExitStatus::of_error(e));
    }
}

/// Result of [`run_scenario`].
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub status: ExitStatus,
    pub summary: RunSummary,
    pub records: Vec<DiagnosticRecord>,
}

fn artifact(dir: &Path, name: &str, suffix: &str) -> (PathBuf, String) {
    let file = format!("{name}{suffix}");
    (dir.join(&file), file)
}

/// Write the summary, logging instead of failing when the directory is
/// unusable.
fn flush_summary<T: Serialize>(dir: &Path, file: &str, summary: &T) {
    if std::fs::create_dir_all(dir).is_ok() {
        if let Err(e) = output::write_json(&dir.join(file), summary) {
            log::error!("could not write {file}: {e}");
        }
    }
}

/// Run one scenario and write its artifacts.
pub fn run_scenario(cfg: &ScenarioConfig) -> RunOutcome {
    let mut summary = RunSummary::new(cfg);
    let summary_file = format!("{}.summary.json", cfg.name);
    summary.artifacts.push(summary_file.clone());
    let mut records = Vec::new();
    match scenario(cfg, &mut summary, &mut records) {
        Ok(status) => summary.finish(status),
        Err(e) => {
            log::error!("{}: {e}", cfg.name);
            summary.fail(&e);
        }
    }
    flush_summary(&cfg.outputs, &summary_file, &summary);
    if let Some(f) = &summary.first_failure {
        log::warn!("{}: first failed check {f}", cfg.name);
    }
    RunOutcome {
        status: summary.status,
        summary,
        records,
    }
}

fn scenario(
    cfg: &ScenarioConfig,
    summary: &mut RunSummary,
    records_out: &mut Vec<DiagnosticRecord>,
) -> Result<ExitStatus> {
    cfg.validate()?;
    let cfg = cfg.effective();
    let grid = cfg.grid.build()?;
    let (phi, t0) = build_datum(&cfg.initial_datum, &grid)?;
    let c = cfg.coefficients;
    let coeffs = GridCoefficients::new(&grid, &c)?;
    std::fs::create_dir_all(&cfg.outputs)?;
    log::info!("{}: evolving to t = {} on {:?}", cfg.name, cfg.stepper.t_end, grid);

    let watch_blowup = cfg.template == Some(Template::Blowup) || cfg.blowup_expected;
    let blowup_inputs = if watch_blowup {
        let e = coeffs.energy(&phi)?;
        let p = BlowupBoundParams::new(cfg.checks.blowup_alpha, variance(&phi).value, dilation_a(&phi).value, e)?;
        Some(p)
    } else {
        None
    };

    let mut recorder = Recorder::new(coeffs.clone(), cfg.diagnostics.clone())?;
    let mut detector = BlowupDetector::new(coeffs.clone(), cfg.checks.blowup_thresholds);
    let ev: Evolution = {
        let mut observers: Vec<&mut dyn StepObserver> = vec![&mut recorder];
        if watch_blowup {
            observers.push(&mut detector);
        }
        strang_evolve_from(&phi, t0, &c, &cfg.stepper, &mut observers)?
    };
    summary.steps = ev.steps;
    summary.termination = Some(TerminationSummary::of(&ev.termination, ev.final_time));
    let mut records = ev.trajectory.records.clone();
    fill_residuals(&mut records, &coeffs);
    let mut boundary = recorder.boundary_warning().map(|w| w.outer_mass_fraction);

    // conservation
    let m0 = mass(&phi);
    let m_scale = if m0 > 0.0 { m0 } else { 1.0 };
    let final_ok = ev.final_state.is_finite();
    let mut mass_drift = records.iter().map(|r| (r.mass - m0).abs() / m_scale).fold(0.0, f64::max);
    if final_ok {
        mass_drift = mass_drift.max((mass(&ev.final_state) - m0).abs() / m_scale);
    } else {
        mass_drift = f64::NAN;
    }
    let e0 = coeffs.energy(&phi)?;
    let e1 = if final_ok { coeffs.energy(&ev.final_state)? } else { f64::NAN };
    let e_scale = if e0 != 0.0 { e0.abs() } else { 1.0 };
    let cons = ConservationSummary {
        mass_initial: m0,
        mass_drift,
        energy_initial: e0,
        energy_final: e1,
        energy_drift: (e1 - e0) / e_scale,
    };
    if let Some(tol) = cfg.checks.mass_drift {
        summary.checks.push(CheckOutcome::at_most("mass_drift", cons.mass_drift, tol));
    }
    if let Some(tol) = cfg.checks.energy_drift {
        summary.checks.push(CheckOutcome::at_most("energy_drift", cons.energy_drift.abs(), tol));
    }
    summary.conservation = Some(cons);

    // identities
    let max_of = |f: fn(&DiagnosticRecord) -> Option<f64>| {
        let v: Vec<f64> = records.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().fold(0.0_f64, |m, x| m.max(x.abs())))
    };
    let ids = IdentitySummary {
        virial_max: max_of(|r| r.virial_residual),
        dilation_max: max_of(|r| r.dilation_residual),
        pconf_max: max_of(|r| r.pconf_residual),
    };
    if ids != IdentitySummary::default() {
        summary.identities = Some(ids);
    }

    // blowup
    let mut detected = !ev.termination.is_completed();
    if let Some(p) = blowup_inputs {
        detected = detector.trigger_time.is_some() || ev.termination.is_blowup_suspected();
        let trigger = detector
            .trigger_time
            .or_else(|| ev.termination.is_blowup_suspected().then_some(ev.final_time));
        let bound = blowup_time_bound(&p);
        let worst = concavity_check(&records, &p)?
            .iter()
            .map(|q| q.margin / p.initial_variance)
            .reduce(f64::min);
        let margin_tol = cfg.checks.concavity_margin;
        let margin_ok = match (worst, margin_tol) {
            (Some(w), Some(tol)) => w >= -tol,
            _ => true,
        };
        let verdict = match (trigger, bound) {
            (None, _) => "no-blowup",
            (Some(_), None) => "blowup-detected",
            (Some(t), Some(b)) if t <= b && margin_ok => "blowup-confirmed",
            (Some(t), Some(b)) if t <= b => "blowup-detected",
            _ => "bound-exceeded",
        };
        if cfg.blowup_expected && trigger.is_none() {
            summary.checks.push(CheckOutcome::at_least("blowup_detected", 0.0, 1.0));
        }
        if let Some(t) = trigger {
            summary
                .checks
                .push(CheckOutcome::at_most("trigger_time", t, bound.unwrap_or(f64::NAN)));
        }
        if let (Some(w), Some(tol)) = (worst, margin_tol) {
            summary.checks.push(CheckOutcome::at_least("concavity_margin", w, -tol));
        }
        summary.blowup = Some(BlowupSummary {
            energy: p.initial_energy,
            initial_variance: p.initial_variance,
            initial_dilation: p.initial_dilation,
            alpha: p.alpha,
            time_bound: bound,
            trigger_time: trigger,
            energy_jump_time: detector.energy_jump_time,
            max_energy_jump: detector.max_energy_jump,
            worst_margin_ratio: worst,
            verdict,
            quartic_dilation_ratio: cfg.coefficients.quartic_dilation_ratio(&grid),
            sextic_dilation_ratio: cfg.coefficients.sextic_dilation_ratio(&grid),
            hypothesis_holds: cfg.coefficients.satisfies_blowup_hypothesis(&grid, p.alpha),
        });
        if detected {
            log::info!("{}: {verdict} at t = {:?} (bound {:?})", cfg.name, trigger, bound);
        }
    }

    // scattering
    if cfg.template == Some(Template::Scattering) && ev.termination.is_completed() {
        let mon = scattering_monitor(&ev.trajectory, None)?;
        let s = scattering_summary(mon, cfg.checks.gap_ratio_from);
        annotate_scattering(&mut records, &s.monitor);
        if let Some(r) = cfg.checks.gap_ratio {
            let min = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().copied().fold(f64::INFINITY, f64::min) };
            summary.checks.push(CheckOutcome::at_least("gap_ratio_l2", min(&s.ratios_l2), r));
            summary.checks.push(CheckOutcome::at_least("gap_ratio_hl11", min(&s.ratios_hl11), r));
        }
        if let Some(tol) = cfg.checks.scatter_distance {
            let tail = s.tail_estimate.unwrap_or(f64::INFINITY);
            summary
                .checks
                .push(CheckOutcome::at_most("scatter_distance", s.distance_before_end.max(tail), tol));
        }
        boundary = boundary.into_iter().chain(s.boundary_warning).reduce(f64::max);
        summary.scattering = Some(s);
    }

    // potential decay
    if let Some(window) = cfg.checks.fit_window {
        match potential_decay_fit(&records, &c, window) {
            Ok(fit) => {
                if let Some(m) = cfg.checks.decay_slope_margin {
                    summary.checks.push(CheckOutcome::at_most("decay_slope", fit.slope, fit.bound + m));
                }
                summary.decay_fit = Some(fit);
            }
            Err(e) => {
                summary.error = Some(e.to_string());
                summary.checks.push(CheckOutcome::at_most("decay_slope", f64::NAN, c.b1 - 1.0));
            }
        }
    }
    if let Some(frac) = boundary {
        log::warn!("{}: up to {frac:.3e} of the mass reached the outer shell of the box", cfg.name);
    }
    summary.boundary_warning = boundary;

    let (csv_path, csv_file) = artifact(&cfg.outputs, &cfg.name, ".csv");
    output::write_csv(&csv_path, &records)?;
    summary.artifacts.push(csv_file);
    if cfg.checkpoint && final_ok {
        let (path, file) = artifact(&cfg.outputs, &cfg.name, ".checkpoint");
        write_checkpoint(&path, &ev.final_state, ev.final_time)?;
        summary.artifacts.push(file);
    }
    *records_out = records;
    Ok(if detected {
        ExitStatus::BlowupDetected
    } else {
        ExitStatus::Completed
    })
}

fn scattering_summary(monitor: ScatteringMonitor, from: f64) -> ScatteringSummary {
    let start = monitor.times.iter().position(|&t| t >= from).unwrap_or(monitor.times.len());
    let ratios = |gaps: &[f64]| -> Vec<f64> {
        gaps.iter()
            .skip(start)
            .collect::<Vec<_>>()
            .windows(2)
            .map(|w| w[0] / w[1])
            .collect()
    };
    let ratios_l2 = ratios(&monitor.gaps_l2);
    let ratios_hl11 = ratios(&monitor.gaps_hl11);
    let n = monitor.distance_l2.len();
    let distance_before_end = if n >= 2 { monitor.distance_l2[n - 2] } else { f64::NAN };
    let tail_estimate = match (monitor.gaps_l2.last(), ratios_l2.last()) {
        (Some(g), Some(&r)) if r > 1.0 => Some(g / (r - 1.0)),
        _ => None,
    };
    ScatteringSummary {
        boundary_warning: monitor.boundary_warning.map(|w| w.outer_mass_fraction),
        monitor,
        ratios_l2,
        ratios_hl11,
        distance_before_end,
        tail_estimate,
    }
}

/// Copy monitor values into the records taken at snapshot times.
fn annotate_scattering(records: &mut [DiagnosticRecord], mon: &ScatteringMonitor) {
    for (i, &t) in mon.times.iter().enumerate() {
        if let Some(r) = records.iter_mut().find(|r| r.t == t) {
            r.scatter_distance = Some(mon.distance_l2[i]);
            r.overlap_h = Some(mon.overlap_h[i]);
            r.interaction_gap = i.checked_sub(1).map(|j| mon.gaps_l2[j]);
        }
    }
}

/// Force `template`, rejecting configs that declare a different one.
pub fn with_template(cfg: &ScenarioConfig, template: Template) -> Result<ScenarioConfig> {
    match cfg.template {
        Some(t) if t != template => Err(Error::Config(format!(
            "template: config declares `{}`, command requires `{}`",
            t.name(),
            template.name()
        ))),
        _ => {
            let mut out = cfg.clone();
            out.template = Some(template);
            if template == Template::Blowup {
                out.blowup_expected = true;
            }
            Ok(out)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeEntry {
    pub index: usize,
    pub kind: ProbeKind,
    pub worst_ratio: f64,
    pub ceiling: Option<f64>,
    pub pass: bool,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeSuiteSummary {
    pub name: String,
    pub seed: u64,
    pub exit_code: i32,
    pub status: ExitStatus,
    pub reports: Vec<ProbeEntry>,
    pub checks: Vec<CheckOutcome>,
    pub first_failure: Option<CheckOutcome>,
    pub error: Option<String>,
}

#[derive(Serialize)]
struct ProbeFile<'a> {
    spec: &'a ProbeSpec,
    report: &'a ProbeReport,
}

#[derive(Clone, Debug)]
pub struct ProbeOutcome {
    pub status: ExitStatus,
    pub summary: ProbeSuiteSummary,
    pub reports: Vec<ProbeReport>,
}

fn kind_name(kind: ProbeKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Run every probe of the scenario, one report file per probe.
pub fn run_probes(cfg: &ScenarioConfig) -> ProbeOutcome {
    let mut summary = ProbeSuiteSummary {
        name: cfg.name.clone(),
        seed: cfg.seed,
        exit_code: 0,
        status: ExitStatus::Completed,
        reports: Vec::new(),
        checks: Vec::new(),
        first_failure: None,
        error: None,
    };
    let mut reports = Vec::new();
    let status = match probe_suite(cfg, &mut summary, &mut reports) {
        Ok(()) if summary.checks.iter().all(|c| c.pass) => ExitStatus::Completed,
        Ok(()) => ExitStatus::AssertionFailed,
        Err(e) => {
            log::error!("{}: {e}", cfg.name);
            summary.error = Some(e.to_string());
            ExitStatus::of_error(&e)
        }
    };
    summary.first_failure = summary.checks.iter().find(|c| !c.pass).cloned();
    summary.status = status;
    summary.exit_code = status.code();
    flush_summary(&cfg.outputs, &format!("{}.probes.json", cfg.name), &summary);
    ProbeOutcome {
        status,
        summary,
        reports,
    }
}

fn probe_suite(cfg: &ScenarioConfig, summary: &mut ProbeSuiteSummary, reports: &mut Vec<ProbeReport>) -> Result<()> {
    cfg.validate()?;
    if cfg.probes.is_empty() {
        return Err(Error::Config("probes: list is empty".into()));
    }
    let grid = cfg.grid.build()?;
    std::fs::create_dir_all(&cfg.outputs)?;
    for (i, spec) in cfg.probes.iter().enumerate() {
        let mut spec = spec.clone();
        spec.ensemble.seed.get_or_insert(cfg.seed);
        let report = probe(&spec, &grid)?;
        let kind = kind_name(spec.kind);
        let (path, file) = artifact(&cfg.outputs, &cfg.name, &format!(".probe-{i}-{kind}.json"));
        output::write_json(&path, &ProbeFile { spec: &spec, report: &report })?;
        log::info!("{}: probe {i} ({kind}) worst ratio {:.6e}", cfg.name, report.worst_ratio);
        if let Some(ceiling) = report.ceiling {
            summary
                .checks
                .push(CheckOutcome::at_most(format!("probe-{i}-{kind}"), report.worst_ratio, ceiling));
        }
        summary.reports.push(ProbeEntry {
            index: i,
            kind: spec.kind,
            worst_ratio: report.worst_ratio,
            ceiling: report.ceiling,
            pass: report.pass,
            file,
        });
        reports.push(report);
    }
    Ok(())
}

/// Residual maxima of one dt-ladder level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LadderLevel {
    pub dt: f64,
    pub steps: usize,
    pub virial_max: f64,
    pub dilation_max: f64,
    pub pconf_max: f64,
    /// `|E(t_end) - E(0)| / |E(0)|` from the recorded energies.
    pub energy_drift: f64,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LadderSummary {
    pub name: String,
    pub seed: u64,
    pub exit_code: i32,
    pub status: ExitStatus,
    pub levels: Vec<LadderLevel>,
    /// `[virial, dilation, pconf, energy]` ratios between consecutive levels.
    pub ratios: Vec<[f64; 4]>,
    pub checks: Vec<CheckOutcome>,
    pub first_failure: Option<CheckOutcome>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct LadderOutcome {
    pub status: ExitStatus,
    pub summary: LadderSummary,
}

/// Values below this are treated as round-off and not ratio-checked.
pub const LADDER_FLOOR: f64 = 1e-11;

/// Rerun the scenario with `dt, dt/2, ..., dt/2^(levels-1)` and check that
/// every identity residual and the energy drift shrink by a factor inside
/// `checks.ladder_ratio` per halving.
pub fn run_identity_ladder(cfg: &ScenarioConfig, levels: usize) -> LadderOutcome {
    let mut summary = LadderSummary {
        name: cfg.name.clone(),
        seed: cfg.seed,
        exit_code: 0,
        status: ExitStatus::Completed,
        levels: Vec::new(),
        ratios: Vec::new(),
        checks: Vec::new(),
        first_failure: None,
        error: None,
    };
    let status = match ladder(cfg, levels, &mut summary) {
        Ok(()) if summary.checks.iter().all(|c| c.pass) => ExitStatus::Completed,
        Ok(()) => ExitStatus::AssertionFailed,
        Err(e) => {
            log::error!("{}: {e}", cfg.name);
            summary.error = Some(e.to_string());
            ExitStatus::of_error(&e)
        }
    };
    summary.first_failure = summary.checks.iter().find(|c| !c.pass).cloned();
    summary.status = status;
    summary.exit_code = status.code();
    flush_summary(&cfg.outputs, &format!("{}.identities.json", cfg.name), &summary);
    LadderOutcome { status, summary }
}

fn ladder(cfg: &ScenarioConfig, levels: usize, summary: &mut LadderSummary) -> Result<()> {
    if levels < 2 {
        return Err(Error::Config(format!("dt-ladder needs at least 2 levels, got {levels}")));
    }
    let base = with_template(cfg, Template::Identities)?;
    base.validate()?;
    let base = base.effective();
    let grid = base.grid.build()?;
    let (phi, t0) = build_datum(&base.initial_datum, &grid)?;
    let c = base.coefficients;
    let coeffs = GridCoefficients::new(&grid, &c)?;
    std::fs::create_dir_all(&base.outputs)?;
    for k in 0..levels {
        let mut stepper = base.stepper.clone();
        stepper.dt /= (1u64 << k) as f64;
        stepper.adaptive = false;
        log::info!("{}: ladder level {k}, dt = {}", base.name, stepper.dt);
        let mut rec = Recorder::new(coeffs.clone(), base.diagnostics.clone())?;
        let ev = strang_evolve_from(&phi, t0, &c, &stepper, &mut [&mut rec])?;
        if !ev.termination.is_completed() {
            return Err(Error::InsufficientData(format!(
                "ladder level {k} stopped early at t = {}",
                ev.final_time
            )));
        }
        let mut records = ev.trajectory.records;
        fill_residuals(&mut records, &coeffs);
        let max_of = |f: fn(&DiagnosticRecord) -> Option<f64>| {
            records.iter().filter_map(f).fold(0.0_f64, |m, x| m.max(x.abs()))
        };
        let e0 = records.first().and_then(|r| r.energy).unwrap_or(f64::NAN);
        let e1 = records.last().and_then(|r| r.energy).unwrap_or(f64::NAN);
        let (path, file) = artifact(&base.outputs, &base.name, &format!(".level{k}.csv"));
        output::write_csv(&path, &records)?;
        summary.levels.push(LadderLevel {
            dt: stepper.dt,
            steps: ev.steps,
            virial_max: max_of(|r| r.virial_residual),
            dilation_max: max_of(|r| r.dilation_residual),
            pconf_max: max_of(|r| r.pconf_residual),
            energy_drift: (e1 - e0).abs() / if e0 != 0.0 { e0.abs() } else { 1.0 },
            file,
        });
    }
    let band = base.checks.ladder_ratio;
    for (k, pair) in summary.levels.windows(2).enumerate() {
        let [a, b] = [&pair[0], &pair[1]];
        let values = [
            ("virial", a.virial_max, b.virial_max),
            ("dilation", a.dilation_max, b.dilation_max),
            ("pconf", a.pconf_max, b.pconf_max),
            ("energy", a.energy_drift, b.energy_drift),
        ];
        let ratios = values.map(|(_, x, y)| x / y);
        for ((name, coarse, _), r) in values.iter().zip(ratios) {
            if *coarse >= LADDER_FLOOR {
                summary.checks.push(CheckOutcome::within(format!("{name}_ratio_{k}_{}", k + 1), r, band));
            }
        }
        summary.ratios.push(ratios);
    }
    Ok(())
}
