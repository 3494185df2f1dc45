use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cqnls::harness::{
    run_identity_ladder, run_probes, run_scenario, with_template, ExitStatus, ScenarioConfig, Template,
};

/// Pseudo-spectral runs and diagnostics for the inhomogeneous cubic-quintic
/// Schroedinger equation.
#[derive(Parser, Debug)]
#[command(name = "cqnls", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Number of dt refinement levels for `identities`.
    #[arg(long, global = true, default_value_t = 3)]
    dt_ladder: usize,
    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve a scenario and write its time series and summary.
    Run { config: PathBuf },
    /// Run the inequality probes listed in a scenario.
    Probe { config: PathBuf },
    /// Conservation and identity residuals over a dt-refinement ladder.
    Identities { config: PathBuf },
    /// Run a scenario under the scattering template.
    Scatter { config: PathBuf },
    /// Run a scenario under the blowup template.
    Blowup { config: PathBuf },
    /// Run every scenario matching a glob, plus its probes if it lists any.
    Sweep { pattern: String },
}

struct Session {
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    quiet: bool,
}

impl Session {
    fn load(&self, path: &Path) -> Result<ScenarioConfig, ExitStatus> {
        let mut cfg = ScenarioConfig::load(path).map_err(|e| {
            eprintln!("error: {e}");
            ExitStatus::ConfigError
        })?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            cfg.outputs = dir.clone();
        }
        Ok(cfg)
    }

    fn report(&self, name: &str, what: &str, status: ExitStatus, detail: Option<String>) {
        if !self.quiet {
            println!("{name}: {what} {:?} (exit {})", status, status.code());
            if let Some(d) = detail {
                println!("  {d}");
            }
        }
    }

    fn scenario(&self, cfg: &ScenarioConfig) -> ExitStatus {
        let out = run_scenario(cfg);
        let detail = out
            .summary
            .first_failure
            .as_ref()
            .map(|c| format!("first failed check: {c}"))
            .or(out.summary.error.clone())
            .or_else(|| out.summary.blowup.as_ref().map(|b| format!("verdict: {}", b.verdict)));
        self.report(&cfg.name, "run", out.status, detail);
        out.status
    }

    fn probes(&self, cfg: &ScenarioConfig) -> ExitStatus {
        let out = run_probes(cfg);
        if !self.quiet {
            for r in &out.summary.reports {
                println!("  probe {} {:?}: worst ratio {:.6e} ceiling {:?}", r.index, r.kind, r.worst_ratio, r.ceiling);
            }
        }
        let detail = out
            .summary
            .first_failure
            .as_ref()
            .map(|c| format!("first failed check: {c}"))
            .or(out.summary.error.clone());
        self.report(&cfg.name, "probes", out.status, detail);
        out.status
    }

    fn templated(&self, path: &Path, template: Template) -> ExitStatus {
        let cfg = match self.load(path) {
            Ok(c) => c,
            Err(s) => return s,
        };
        match with_template(&cfg, template) {
            Ok(cfg) => self.scenario(&cfg),
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                ExitStatus::ConfigError
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let session = Session {
        seed: cli.seed,
        out_dir: cli.out_dir.clone(),
        quiet: cli.quiet,
    };
    let status = match &cli.command {
        Command::Run { config } => session.load(config).map_or_else(|s| s, |c| session.scenario(&c)),
        Command::Probe { config } => session.load(config).map_or_else(|s| s, |c| session.probes(&c)),
        Command::Identities { config } => match session.load(config) {
            Ok(cfg) => {
                let out = run_identity_ladder(&cfg, cli.dt_ladder);
                if !session.quiet {
                    for (k, l) in out.summary.levels.iter().enumerate() {
                        println!(
                            "  level {k} dt {:e}: virial {:.3e} dilation {:.3e} pconf {:.3e} energy {:.3e}",
                            l.dt, l.virial_max, l.dilation_max, l.pconf_max, l.energy_drift
                        );
                    }
                }
                let detail = out
                    .summary
                    .first_failure
                    .as_ref()
                    .map(|c| format!("first failed check: {c}"))
                    .or(out.summary.error.clone());
                session.report(&cfg.name, "identities", out.status, detail);
                out.status
            }
            Err(s) => s,
        },
        Command::Scatter { config } => session.templated(config, Template::Scattering),
        Command::Blowup { config } => session.templated(config, Template::Blowup),
        Command::Sweep { pattern } => sweep(&session, pattern),
    };
    ExitCode::from(status.code() as u8)
}

fn sweep(session: &Session, pattern: &str) -> ExitStatus {
    let paths = match glob::glob(pattern) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: bad pattern {pattern}: {e}");
            return ExitStatus::ConfigError;
        }
    };
    let mut paths: Vec<PathBuf> = paths.filter_map(|p| p.ok()).collect();
    paths.sort();
    if paths.is_empty() {
        eprintln!("error: no config matches {pattern}");
        return ExitStatus::ConfigError;
    }
    let mut worst = ExitStatus::Completed;
    for path in paths {
        let status = match session.load(&path) {
            Ok(cfg) => {
                let mut s = session.scenario(&cfg);
                if !cfg.probes.is_empty() {
                    s = s.max(session.probes(&cfg));
                }
                s
            }
            Err(s) => s,
        };
        worst = worst.max(status);
    }
    worst
}
