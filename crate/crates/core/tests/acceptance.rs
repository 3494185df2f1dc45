//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Run with `cargo test --release --test acceptance` (the test profile is
//! already optimized).

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use cqnls::diagnostics::{dilation_a, variance};
use cqnls::evolve::{free_propagate, picard_solve, strang_evolve, StepperConfig};
use cqnls::grid::{grad_norm2_sq, make_grid, ComplexField, GridSpec};
use cqnls::harness::{
    run_identity_ladder, run_probes, run_scenario, with_template, ExitStatus, ScenarioConfig, Template,
};
use cqnls::model::{gaussian, mass, CoefficientSpec};
use cqnls::norms::{weighted_lp_norm, weighted_power_integral};
use cqnls::probes::{ensemble, EnsembleSpec, Generator, ProbeKind};
use cqnls::Complex64;
use statrs::function::gamma::gamma;

type Outcome = Result<String, String>;

fn scenario(name: &str) -> ScenarioConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{e}"))
}

fn into_tmp(mut cfg: ScenarioConfig, dir: &Path) -> ScenarioConfig {
    cfg.outputs = dir.to_path_buf();
    cfg
}

/// `int_{R^3} |x|^b exp(-a |x|^2) dx`.
fn radial_gauss(b: f64, a: f64) -> f64 {
    2.0 * PI * gamma((3.0 + b) / 2.0) * a.powf(-(3.0 + b) / 2.0)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn require(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn unit_gaussian(g: &GridSpec) -> ComplexField {
    ComplexField::from_fn(g, |[x, y, z]| Complex64::new((-(x * x + y * y + z * z) / 2.0).exp(), 0.0))
}

fn gaussian_oracles() -> Outcome {
    let g = make_grid(64, 8.0, true).map_err(|e| e.to_string())?;
    let phi = unit_gaussian(&g);
    let p32 = PI.powf(1.5);
    let mut checks: Vec<(String, f64, f64)> = vec![
        ("mass".into(), mass(&phi), p32),
        ("grad_norm2".into(), grad_norm2_sq(&phi), 1.5 * p32),
        ("variance".into(), variance(&phi).value, 1.5 * p32),
    ];
    for b in [0.5, 1.0, 2.0, 4.0] {
        checks.push((format!("quartic(b={b})"), weighted_power_integral(&phi, b, 4.0).unwrap(), radial_gauss(b, 2.0)));
        checks.push((format!("sextic(b={b})"), weighted_power_integral(&phi, b, 6.0).unwrap(), radial_gauss(b, 3.0)));
    }
    for b in [-1.0, -0.5, 0.5, 1.0] {
        checks.push((format!("||x|^{b} phi|"), weighted_lp_norm(&phi, b, 2.0).unwrap(), radial_gauss(2.0 * b, 1.0).sqrt()));
    }
    let (name, worst) = checks
        .iter()
        .map(|(n, v, e)| (n.clone(), rel(*v, *e)))
        .fold((String::new(), 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    require(
        worst <= 1e-6,
        format!("{} functionals, worst relative error {worst:.2e} ({name}), tolerance 1e-6", checks.len()),
    )
}

fn free_propagator() -> Outcome {
    let g = make_grid(64, 16.0, true).map_err(|e| e.to_string())?;
    let phi = unit_gaussian(&g);
    let mut pointwise: f64 = 0.0;
    for t in [0.25, 0.5, 1.0] {
        let u = free_propagate(&phi, t);
        let s = Complex64::new(1.0, 2.0 * t);
        for (idx, v) in u.values().iter().enumerate() {
            let [x, y, z] = g.point(idx);
            let exact = s.powf(-1.5) * (-(x * x + y * y + z * z) / (2.0 * s)).exp();
            pointwise = pointwise.max((v - exact).norm());
        }
    }
    let samples = ensemble(
        &g,
        &EnsembleSpec {
            generator: Generator::HarmonicGaussians,
            count: 4,
            seed: Some(3),
        },
    );
    let (mut unitarity, mut group): (f64, f64) = (0.0, 0.0);
    for f in &samples {
        let m = f.norm2_sq();
        for t in [0.3, 1.0, -2.5] {
            unitarity = unitarity.max((free_propagate(f, t).norm2_sq() - m).abs() / m);
        }
        let two_step = free_propagate(&free_propagate(f, 0.4), 0.7);
        let one_step = free_propagate(f, 1.1);
        group = group.max((two_step.sub(&one_step).unwrap().norm2_sq() / m).sqrt());
    }
    require(
        pointwise <= 1e-8 && unitarity <= 1e-12 && group <= 1e-12,
        format!("pointwise {pointwise:.2e} (<= 1e-8), unitarity {unitarity:.2e} (<= 1e-12), group {group:.2e} (<= 1e-12)"),
    )
}

fn conservation() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let base = into_tmp(scenario("conservation.json"), dir.path());
    let coarse = run_scenario(&base);
    let mut fine_cfg = base.clone();
    fine_cfg.name = "conservation-fine".into();
    fine_cfg.stepper.dt /= 2.0;
    fine_cfg.diagnostics.stride *= 2;
    let fine = run_scenario(&fine_cfg);
    let c = coarse.summary.conservation.as_ref().ok_or("no conservation summary")?;
    let f = fine.summary.conservation.as_ref().ok_or("no conservation summary")?;
    let ratio = c.energy_drift / f.energy_drift;
    let mass = c.mass_drift.max(f.mass_drift);
    require(
        coarse.status == ExitStatus::Completed
            && fine.status == ExitStatus::Completed
            && mass <= 1e-10
            && (3.0..=5.0).contains(&ratio),
        format!(
            "{} steps, mass drift {mass:.2e} (<= 1e-10), energy drift {:.3e} -> {:.3e}, ratio {ratio:.4} (in [3, 5])",
            coarse.summary.steps, c.energy_drift, f.energy_drift
        ),
    )
}

fn solver_cross_check() -> Outcome {
    let g = make_grid(48, 8.0, true).map_err(|e| e.to_string())?;
    let c = CoefficientSpec::new(1.0, 0.5, 1.0, 1.0).unwrap();
    let phi = unit_gaussian(&g).scale(Complex64::new(0.1, 0.0));
    let strang = strang_evolve(&phi, &c, &StepperConfig::fixed(1e-3, 0.1), &mut []).map_err(|e| e.to_string())?;
    let picard = picard_solve(&phi, &c, 0.1, 6, 0.005).map_err(|e| e.to_string())?;
    let norm = strang.final_state.norm2_sq().sqrt();
    let diff = strang.final_state.sub(&picard.field).unwrap().norm2_sq().sqrt() / norm;
    let nonlinear = strang.final_state.sub(&free_propagate(&phi, 0.1)).unwrap().norm2_sq().sqrt() / norm;
    let ratios = picard.contraction_ratios(1e-12 * phi.norm2_sq().sqrt());
    let worst_ratio = ratios.iter().copied().fold(0.0, f64::max);
    require(
        diff <= 1e-6 && ratios.len() >= 2 && worst_ratio < 0.1,
        format!(
            "relative L2 difference {diff:.2e} (<= 1e-6), nonlinear effect {nonlinear:.1e}, increments {:?}, contraction ratios <= {worst_ratio:.1e}",
            picard.increments.iter().map(|v| format!("{v:.1e}")).collect::<Vec<_>>()
        ),
    )
}

fn identities() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = run_identity_ladder(&into_tmp(scenario("identities.json"), dir.path()), 3);
    let ratios: Vec<String> = out
        .summary
        .ratios
        .iter()
        .map(|r| format!("[{:.3}, {:.3}, {:.3}, {:.3}]", r[0], r[1], r[2], r[3]))
        .collect();
    let ladder_ok = out.status == ExitStatus::Completed && out.summary.checks.len() == 8;

    // free Gaussian closed forms
    let g = make_grid(64, 16.0, true).map_err(|e| e.to_string())?;
    let phi = unit_gaussian(&g);
    let mut free_err: f64 = 0.0;
    for t in [0.25, 0.5, 1.0] {
        let u = free_propagate(&phi, t);
        free_err = free_err
            .max(rel(dilation_a(&u).value, 3.0 * PI.powf(1.5) * t))
            .max(rel(variance(&u).value, 1.5 * PI.powf(1.5) * (1.0 + 4.0 * t * t)));
    }
    require(
        ladder_ok && free_err <= 1e-4,
        format!(
            "ladder ratios [virial, dilation, pconf, energy] {} (in [3, 5]){}; free Gaussian closed forms {free_err:.1e} (<= 1e-4)",
            ratios.join(" "),
            out.summary.first_failure.map(|c| format!(", first failure {c}")).unwrap_or_default()
        ),
    )
}

fn blowup() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_template(&into_tmp(scenario("blowup.json"), dir.path()), Template::Blowup).map_err(|e| e.to_string())?;
    let c = cfg.coefficients;
    let (amp, width) = match cfg.initial_datum {
        cqnls::harness::InitialDatum::Gaussian { amplitude, width, .. } => (amplitude, width),
        _ => return Err("blowup scenario must start from a Gaussian".into()),
    };
    // E(A) = A^2 e_kin + A^4 e_4 + A^6 e_6 for A exp(-r^2 / (2 w^2))
    let e_kin = 0.75 * PI.powf(1.5) * width;
    let e4 = 0.25 * c.lambda1 * radial_gauss(c.b1, 2.0 / (width * width));
    let e6 = c.lambda2 / 6.0 * radial_gauss(c.b2, 3.0 / (width * width));
    let energy = |a: f64| a * a * e_kin + a.powi(4) * e4 + a.powi(6) * e6;
    let threshold = gaussian::negative_energy_threshold(width, &c).ok_or("no negative-energy threshold")?;
    let out = run_scenario(&cfg);
    let b = out.summary.blowup.as_ref().ok_or("no blowup summary")?;
    let trigger = b.trigger_time.unwrap_or(f64::NAN);
    let bound = b.time_bound.unwrap_or(f64::NAN);
    let margin = b.worst_margin_ratio.unwrap_or(f64::NAN);
    require(
        energy(amp) < 0.0
            && (energy(threshold)).abs() < 1e-9 * e_kin
            && rel(b.energy, energy(amp)) < 1e-3
            && out.status == ExitStatus::BlowupDetected
            && b.verdict == "blowup-confirmed"
            && trigger <= bound
            && margin >= -1e-3,
        format!(
            "E = {:.4} (closed form {:.4}, amplitude {amp} > threshold {threshold:.4}), trigger t = {trigger:.4} <= bound t* = {bound:.4}, worst margin/var(0) = {margin:.2e} (>= -1e-3), verdict {}",
            b.energy,
            energy(amp),
            b.verdict
        ),
    )
}

fn scattering() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = run_scenario(&into_tmp(scenario("scattering.json"), dir.path()));
    let s = out.summary.scattering.as_ref().ok_or("no scattering summary")?;
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let distance = s.distance_before_end.max(s.tail_estimate.unwrap_or(f64::INFINITY));
    require(
        out.status == ExitStatus::Completed
            && s.ratios_l2.len() >= 2
            && min(&s.ratios_l2) >= 2.0
            && min(&s.ratios_hl11) >= 2.0
            && distance <= 1e-3,
        format!(
            "gap ratios past t = 2: L2 {:?}, H11 {:?} (>= 2); distance at t = {} {:.2e}, tail {:.2e} (<= 1e-3)",
            s.ratios_l2.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
            s.ratios_hl11.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
            s.monitor.times[s.monitor.times.len() - 2],
            s.distance_before_end,
            s.tail_estimate.unwrap_or(f64::NAN)
        ),
    )
}

fn decay() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = run_scenario(&into_tmp(scenario("nonscattering.json"), dir.path()));
    let fit = out.summary.decay_fit.ok_or("no decay fit")?;
    require(
        out.status == ExitStatus::Completed && fit.slope <= fit.bound + 0.2,
        format!("slope {:.4} over {} samples on [1, 8] (<= b1 - 1 + 0.2 = {:.1})", fit.slope, fit.samples, fit.bound + 0.2),
    )
}

fn probes() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = run_probes(&into_tmp(scenario("probes.json"), dir.path()));
    let find = |k: ProbeKind| {
        out.reports
            .iter()
            .find(|r| r.kind == k)
            .map(|r| r.worst_ratio)
            .unwrap_or(f64::NAN)
    };
    let oracle = 2f64.powf(-0.25) * (-0.25f64).exp() / ((2.5f64.sqrt() + 1.0) * PI.powf(0.75));
    let (hardy, leq, sup, commute, decay) = (
        find(ProbeKind::Hardy),
        find(ProbeKind::LEquivalence),
        find(ProbeKind::AngularSup),
        find(ProbeKind::CommuteMultiplier),
        find(ProbeKind::FreeDecay),
    );
    require(
        out.status == ExitStatus::Completed
            && hardy <= 2.05
            && leq <= 1e-8
            && (sup - 0.1075).abs() <= 1e-3
            && commute <= 1e-8
            && decay <= 1.10,
        format!(
            "hardy {hardy:.4} (<= 2.05), l_equivalence {leq:.1e} (<= 1e-8), angular_sup {sup:.5} (0.1075 +- 1e-3, closed form {oracle:.5}), commute {commute:.1e} (<= 1e-8), free_decay spread {decay:.4} (<= 1.10)"
        ),
    )
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (PathBuf::from(p.file_name().unwrap()), bytes)
        })
        .collect();
    v.sort();
    v
}

fn determinism() -> Outcome {
    let mut cfg = scenario("identities.json");
    cfg.name = "det".into();
    cfg.grid.n_per_axis = 32;
    cfg.stepper.t_end = 0.1;
    cfg.diagnostics = cqnls::diagnostics::DiagnosticSchedule::all(2);
    cfg.checkpoint = true;
    let mut probes = scenario("probes.json");
    probes.grid.n_per_axis = 32;
    probes.probes.retain(|p| p.grid.is_none());
    for p in &mut probes.probes {
        p.ensemble.count = p.ensemble.count.min(4);
    }
    let mut scatter = scenario("scattering.json");
    scatter.grid.n_per_axis = 32;
    scatter.stepper.t_end = 4.0;
    scatter.stepper.snapshot_times = vec![1.0, 2.0];
    let runs: Vec<Vec<(PathBuf, Vec<u8>)>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            run_scenario(&into_tmp(cfg.clone(), dir.path()));
            run_scenario(&into_tmp(scatter.clone(), dir.path()));
            run_probes(&into_tmp(probes.clone(), dir.path()));
            files(dir.path())
        })
        .collect();
    let total: usize = runs[0].iter().map(|f| f.1.len()).sum();
    require(
        runs[0] == runs[1] && runs[0].len() >= 8,
        format!("{} files, {total} bytes, identical across two runs: {}", runs[0].len(), runs[0] == runs[1]),
    )
}

fn main() {
    // (name, check, runtime limit in seconds)
    let criteria: [(&str, fn() -> Outcome, Option<f64>); 10] = [
        ("Gaussian oracle suite", gaussian_oracles, Some(10.0)),
        ("free propagator exactness", free_propagator, Some(10.0)),
        ("conservation", conservation, Some(120.0)),
        ("solver cross-validation", solver_cross_check, Some(60.0)),
        ("identity residual ladder", identities, Some(180.0)),
        ("blowup", blowup, Some(180.0)),
        ("scattering", scattering, Some(300.0)),
        ("non-scattering decay", decay, Some(300.0)),
        ("inequality probes", probes, Some(120.0)),
        ("determinism", determinism, None),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f, limit)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|s| name.contains(s.as_str()) || s == &n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        let result = match (result, limit) {
            (Ok(msg), Some(l)) if secs > *l => Err(format!("runtime {secs:.1} s exceeds {l} s; {msg}")),
            (r, _) => r,
        };
        match result {
            Ok(msg) => println!("criterion {n:>2} PASS {name} ({secs:.1} s): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n:>2} FAIL {name} ({secs:.1} s): {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
