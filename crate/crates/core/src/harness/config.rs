//! Scenario files: parsing, templates and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{BlowupThresholds, DiagnosticSchedule, Quantity};
use crate::error::{Error, Result};
use crate::evolve::StepperConfig;
use crate::grid::{make_grid, GridSpec};
use crate::model::CoefficientSpec;
use crate::probes::ProbeSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_per_axis: usize,
    pub half_length: f64,
    #[serde(default = "yes")]
    pub offset: bool,
}

fn yes() -> bool {
    true
}

impl GridConfig {
    pub fn build(&self) -> Result<GridSpec> {
        make_grid(self.n_per_axis, self.half_length, self.offset)
    }
}

/// Recipe for `u(0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDatum {
    /// `amplitude exp(-|x - center|^2 / (2 width^2)) exp(i v.x / 2)`; a plane
    /// wave `exp(i k.x)` travels with group velocity `2k`, so `v` is the
    /// velocity of the packet.
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: [f64; 3],
        #[serde(default)]
        boost_velocity: [f64; 3],
    },
    /// `amplitude (r / width)^l P_l^m(cos theta) e^{i m phi} exp(-r^2 / (2 width^2))`.
    HarmonicGaussian {
        degree: u32,
        order: i32,
        amplitude: f64,
        width: f64,
    },
    /// Resume from a checkpoint written by a previous run.
    FromCheckpoint { path: PathBuf },
}

pub const MAX_HARMONIC_DEGREE: u32 = 8;

/// Named parameter regimes with built-in acceptance checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Conservation,
    Blowup,
    Scattering,
    Nonscattering,
    Identities,
}

impl Template {
    pub fn name(self) -> &'static str {
        match self {
            Template::Conservation => "conservation",
            Template::Blowup => "blowup",
            Template::Scattering => "scattering",
            Template::Nonscattering => "nonscattering",
            Template::Identities => "identities",
        }
    }

    fn required_quantities(self) -> &'static [Quantity] {
        match self {
            Template::Conservation => &[Quantity::Energy],
            Template::Blowup => &[Quantity::Energy, Quantity::Variance],
            Template::Scattering => &[Quantity::Energy],
            Template::Nonscattering => &[Quantity::Potential],
            Template::Identities => &[
                Quantity::Energy,
                Quantity::Variance,
                Quantity::Dilation,
                Quantity::Potential,
                Quantity::GalileanNorm2,
            ],
        }
    }
}

/// Acceptance checks evaluated after a run. `None` disables a check unless
/// the template supplies a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Checks {
    /// Largest relative mass deviation.
    pub mass_drift: Option<f64>,
    /// Relative energy change between the initial and final state.
    pub energy_drift: Option<f64>,
    /// Smallest allowed `(bound - variance) / variance(0)`, as a positive number.
    pub concavity_margin: Option<f64>,
    pub blowup_alpha: f64,
    pub blowup_thresholds: BlowupThresholds,
    /// Minimum ratio of consecutive interaction-picture gaps.
    pub gap_ratio: Option<f64>,
    /// Gap ratios are checked for intervals starting at or after this time.
    pub gap_ratio_from: f64,
    /// Ceiling on the L2 distance to the final free profile.
    pub scatter_distance: Option<f64>,
    /// Allowed excess of the decay slope over `b1 - 1`.
    pub decay_slope_margin: Option<f64>,
    pub fit_window: Option<[f64; 2]>,
    /// Accepted band for residual ratios between dt-ladder levels.
    pub ladder_ratio: [f64; 2],
}

impl Default for Checks {
    fn default() -> Self {
        Self {
            mass_drift: None,
            energy_drift: None,
            concavity_margin: None,
            blowup_alpha: 0.0,
            blowup_thresholds: BlowupThresholds::default(),
            gap_ratio: None,
            gap_ratio_from: 2.0,
            scatter_distance: None,
            decay_slope_margin: None,
            fit_window: None,
            ladder_ratio: [3.0, 5.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub template: Option<Template>,
    pub grid: GridConfig,
    pub coefficients: CoefficientSpec,
    pub initial_datum: InitialDatum,
    pub stepper: StepperConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticSchedule,
    #[serde(default)]
    pub probes: Vec<ProbeSpec>,
    pub outputs: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Declares that a blowup trigger is the intended outcome.
    #[serde(default)]
    pub blowup_expected: bool,
    #[serde(default)]
    pub checks: Checks,
    /// Write the final state as `<name>.checkpoint`.
    #[serde(default)]
    pub checkpoint: bool,
}

/// A validation failure pinned to the config key it concerns.
fn invalid(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

fn rekey(key: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config(m) | Error::Parameter(m) => invalid(key, m),
        other => invalid(key, other),
    }
}

impl ScenarioConfig {
    /// Parse and validate. Errors carry the line of the offending text.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("line {}, column {}: {}", e.line(), e.column(), strip_position(&e)))
        })?;
        cfg.validate().map_err(|e| anchor(text, e))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// The configuration after the template has added its required
    /// diagnostics and default checks.
    pub fn effective(&self) -> Self {
        let mut cfg = self.clone();
        let Some(template) = cfg.template else {
            return cfg;
        };
        for &q in template.required_quantities() {
            if !cfg.diagnostics.has(q) {
                cfg.diagnostics.enabled.push(q);
            }
        }
        let c = &mut cfg.checks;
        match template {
            Template::Conservation => {
                c.mass_drift.get_or_insert(1e-10);
            }
            Template::Blowup => {
                c.concavity_margin.get_or_insert(1e-3);
            }
            Template::Scattering => {
                c.gap_ratio.get_or_insert(2.0);
                c.scatter_distance.get_or_insert(1e-3);
            }
            Template::Nonscattering => {
                c.decay_slope_margin.get_or_insert(0.2);
                c.fit_window.get_or_insert([1.0, cfg.stepper.t_end]);
            }
            Template::Identities => {}
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let ok_name = !self.name.is_empty()
            && self
                .name
                .chars()
                .all(|ch| ch.is_ascii_alphanumeric() || "-_.".contains(ch));
        if !ok_name {
            return Err(invalid("name", "must be non-empty and use only [A-Za-z0-9._-]"));
        }
        self.grid.build().map_err(rekey("grid"))?;
        self.coefficients.validate().map_err(rekey("coefficients"))?;
        self.stepper.validate().map_err(rekey("stepper"))?;
        if self.diagnostics.stride == 0 {
            return Err(invalid("stride", "must be >= 1"));
        }
        let cfg = self.effective();
        let c = &cfg.coefficients;
        if !self.grid.offset {
            if cfg.diagnostics.enabled.iter().any(|q| q.is_coordinate_weighted()) {
                return Err(invalid("offset", "coordinate-weighted diagnostics require an offset grid"));
            }
            if c.b1 > 0.0 || c.b2 > 0.0 {
                return Err(invalid("offset", "power-law weights with b > 0 require an offset grid"));
            }
        }
        self.validate_datum()?;
        self.validate_template(&cfg)?;
        self.validate_checks(&cfg.checks)?;
        for p in &self.probes {
            p.validate().map_err(rekey("probes"))?;
        }
        if self.outputs.as_os_str().is_empty() {
            return Err(invalid("outputs", "must name a directory"));
        }
        if self.outputs.is_file() {
            return Err(invalid("outputs", format!("{} is a file", self.outputs.display())));
        }
        Ok(())
    }

    fn validate_datum(&self) -> Result<()> {
        match &self.initial_datum {
            InitialDatum::Gaussian {
                amplitude,
                width,
                center,
                boost_velocity,
            } => {
                if !amplitude.is_finite() {
                    return Err(invalid("amplitude", "must be finite"));
                }
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(invalid("width", format!("must be positive, got {width}")));
                }
                if center.iter().chain(boost_velocity).any(|v| !v.is_finite()) {
                    return Err(invalid("center", "center and boost_velocity must be finite"));
                }
            }
            InitialDatum::HarmonicGaussian {
                degree,
                order,
                amplitude,
                width,
            } => {
                if *degree > MAX_HARMONIC_DEGREE {
                    return Err(invalid("degree", format!("must be <= {MAX_HARMONIC_DEGREE}")));
                }
                if order.unsigned_abs() > *degree {
                    return Err(invalid("order", format!("|order| must be <= degree = {degree}")));
                }
                if !amplitude.is_finite() {
                    return Err(invalid("amplitude", "must be finite"));
                }
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(invalid("width", format!("must be positive, got {width}")));
                }
            }
            InitialDatum::FromCheckpoint { path } => {
                if !path.is_file() {
                    return Err(invalid("path", format!("checkpoint {} does not exist", path.display())));
                }
            }
        }
        Ok(())
    }

    fn validate_template(&self, cfg: &ScenarioConfig) -> Result<()> {
        let c = &cfg.coefficients;
        match cfg.template {
            Some(Template::Blowup) => {
                if c.lambda1 > 0.0 || c.lambda2 > 0.0 {
                    return Err(invalid("coefficients", "blowup scenarios require lambda1, lambda2 <= 0"));
                }
            }
            Some(Template::Scattering) => {
                if !(c.b1 < 2.0 / 3.0 && c.b2 < 8.0 / 3.0) {
                    return Err(invalid(
                        "coefficients",
                        format!("scattering requires b1 < 2/3 and b2 < 8/3, got b1 = {}, b2 = {}", c.b1, c.b2),
                    ));
                }
                if cfg.stepper.snapshot_times.is_empty() {
                    return Err(invalid("snapshot_times", "scattering needs at least one snapshot time"));
                }
            }
            Some(Template::Nonscattering) => {
                if !(c.b1 >= 2.0 && c.b2 > 0.0 && c.b2 < 3.0 + c.b1) {
                    return Err(invalid(
                        "coefficients",
                        format!("non-scattering requires b1 >= 2 and 0 < b2 < 3 + b1, got b1 = {}, b2 = {}", c.b1, c.b2),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn validate_checks(&self, k: &Checks) -> Result<()> {
        let positive = [
            ("mass_drift", k.mass_drift),
            ("energy_drift", k.energy_drift),
            ("concavity_margin", k.concavity_margin),
            ("gap_ratio", k.gap_ratio),
            ("scatter_distance", k.scatter_distance),
        ];
        for (key, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(invalid(key, format!("must be positive, got {v}")));
                }
            }
        }
        if let Some(m) = k.decay_slope_margin {
            if !m.is_finite() {
                return Err(invalid("decay_slope_margin", "must be finite"));
            }
        }
        if let Some([t1, t2]) = k.fit_window {
            if !(t1 >= 1.0 && t2 > t1 && t2 <= self.stepper.t_end) {
                return Err(invalid("fit_window", format!("need 1 <= t1 < t2 <= t_end, got [{t1}, {t2}]")));
            }
        }
        if !(k.blowup_alpha >= 0.0) {
            return Err(invalid("blowup_alpha", "must be >= 0"));
        }
        let [lo, hi] = k.ladder_ratio;
        if !(lo > 0.0 && hi > lo) {
            return Err(invalid("ladder_ratio", format!("need 0 < lo < hi, got [{lo}, {hi}]")));
        }
        let th = &k.blowup_thresholds;
        if !(th.gradient_factor > 1.0 && th.energy_jump > 0.0) {
            return Err(invalid("blowup_thresholds", "need gradient_factor > 1 and energy_jump > 0"));
        }
        Ok(())
    }
}

fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

/// Prefix a validation message with the line where its key first appears.
fn anchor(text: &str, e: Error) -> Error {
    let Error::Config(msg) = e else { return e };
    let key = msg.split(':').next().unwrap_or("");
    let needle = format!("\"{key}\"");
    match text.lines().position(|l| l.contains(&needle)) {
        Some(i) => Error::Config(format!("line {}: {msg}", i + 1)),
        None => Error::Config(msg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
  "name": "t",
  "grid": {"n_per_axis": 16, "half_length": 6.0},
  "coefficients": {"lambda1": 1.0, "b1": 0.5, "lambda2": 1.0, "b2": 1.0},
  "initial_datum": {"gaussian": {"amplitude": 0.5, "width": 1.0}},
  "stepper": {"dt": 0.01, "t_end": 0.1},
  "outputs": "out"
}"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ScenarioConfig::from_json(BASE).unwrap();
        assert!(cfg.grid.offset);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.diagnostics.stride, 1);
        assert!(cfg.probes.is_empty());
        assert_eq!(cfg.checks, Checks::default());
    }

    #[test]
    fn missing_block_is_reported_with_its_line() {
        let text = BASE.replace("  \"grid\": {\"n_per_axis\": 16, \"half_length\": 6.0},\n", "");
        let err = ScenarioConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("missing field `grid`"), "{err}");
        assert!(err.contains("line 7"), "{err}");
    }

    #[test]
    fn semantic_errors_point_at_the_key() {
        let text = BASE.replace("\"width\": 1.0", "\"width\": -1.0");
        let err = ScenarioConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("line 5: width"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = BASE.replace("\"outputs\"", "\"outptus\": 1, \"outputs\"");
        assert!(ScenarioConfig::from_json(&text).is_err());
    }

    #[test]
    fn templates_enforce_their_regimes() {
        let with = |template: &str, coeffs: &str| {
            BASE.replace("\"name\": \"t\",", &format!("\"name\": \"t\", \"template\": \"{template}\","))
                .replace(
                    "{\"lambda1\": 1.0, \"b1\": 0.5, \"lambda2\": 1.0, \"b2\": 1.0}",
                    coeffs,
                )
                .replace("\"t_end\": 0.1}", "\"t_end\": 2.0, \"snapshot_times\": [0.5]}")
        };
        let focusing = "{\"lambda1\": -1.0, \"b1\": 0.5, \"lambda2\": -1.0, \"b2\": 1.0}";
        assert!(ScenarioConfig::from_json(&with("blowup", focusing)).is_ok());
        let defocusing = "{\"lambda1\": 1.0, \"b1\": 0.5, \"lambda2\": 1.0, \"b2\": 1.0}";
        assert!(ScenarioConfig::from_json(&with("blowup", defocusing)).is_err());
        assert!(ScenarioConfig::from_json(&with("scattering", defocusing)).is_ok());
        let steep = "{\"lambda1\": 1.0, \"b1\": 0.7, \"lambda2\": 1.0, \"b2\": 1.0}";
        assert!(ScenarioConfig::from_json(&with("scattering", steep)).is_err());
        let confining = "{\"lambda1\": 1.0, \"b1\": 2.0, \"lambda2\": 1.0, \"b2\": 4.0}";
        assert!(ScenarioConfig::from_json(&with("nonscattering", confining)).is_ok());
        let too_steep = "{\"lambda1\": 1.0, \"b1\": 2.0, \"lambda2\": 1.0, \"b2\": 5.0}";
        assert!(ScenarioConfig::from_json(&with("nonscattering", too_steep)).is_err());
        assert!(ScenarioConfig::from_json(&with("nonscattering", defocusing)).is_err());
    }

    #[test]
    fn weighted_diagnostics_need_an_offset_grid() {
        let text = BASE
            .replace("\"half_length\": 6.0}", "\"half_length\": 6.0, \"offset\": false}")
            .replace("\"b1\": 0.5", "\"b1\": 0.0")
            .replace("\"b2\": 1.0", "\"b2\": 0.0")
            .replace("\"outputs\"", "\"diagnostics\": {\"enabled\": [\"variance\"]}, \"outputs\"");
        let err = ScenarioConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("offset"), "{err}");
    }

    #[test]
    fn templates_add_required_diagnostics_and_checks() {
        let text = BASE.replace("\"name\": \"t\",", "\"name\": \"t\", \"template\": \"conservation\",");
        let cfg = ScenarioConfig::from_json(&text).unwrap().effective();
        assert_eq!(cfg.checks.mass_drift, Some(1e-10));
        assert!(cfg.diagnostics.has(Quantity::Energy));
    }
}
