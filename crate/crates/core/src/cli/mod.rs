//! Command-line driver: TOML config in, CSV/JSON artifacts and a run
//! manifest out. Exit codes: 0 when every asserted invariant holds, 1 on an
//! invariant failure or runtime error, 2 on an invalid config.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde::Serialize;

pub use config::{Config, ConfigError};
pub use manifest::{OutputDigest, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Thread count for the worker pool; unset means rayon's default.
pub const THREADS_ENV: &str = "KINLAB_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    ToyExact,
    ToyStep,
    GevreyFit,
    Sharpness,
    VecfieldCheck,
    CollisionCheck,
    LinearRun,
    GrowthReport,
}

impl Subcommand {
    pub const ALL: [Subcommand; 8] = [
        Self::ToyExact,
        Self::ToyStep,
        Self::GevreyFit,
        Self::Sharpness,
        Self::VecfieldCheck,
        Self::CollisionCheck,
        Self::LinearRun,
        Self::GrowthReport,
    ];

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ToyExact => "toy-exact",
            Self::ToyStep => "toy-step",
            Self::GevreyFit => "gevrey-fit",
            Self::Sharpness => "sharpness",
            Self::VecfieldCheck => "vecfield-check",
            Self::CollisionCheck => "collision-check",
            Self::LinearRun => "linear-run",
            Self::GrowthReport => "growth-report",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "kinlab", version, about = "Kinetic smoothing laboratory")]
pub struct Cli {
    pub command: Subcommand,
    /// TOML config file.
    pub config: PathBuf,
    /// Overrides `run.out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance condition, e.g. `<= 1e-12`.
    pub condition: String,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Checks(pub Vec<Check>);

impl Checks {
    fn push(&mut self, name: &str, value: f64, condition: String, pass: bool) {
        self.0.push(Check {
            name: name.into(),
            value,
            condition,
            pass,
        });
    }

    pub fn le(&mut self, name: &str, value: f64, bound: f64) {
        self.push(name, value, format!("<= {bound:e}"), value <= bound);
    }

    pub fn lt(&mut self, name: &str, value: f64, bound: f64) {
        self.push(name, value, format!("< {bound:e}"), value < bound);
    }

    pub fn gt(&mut self, name: &str, value: f64, bound: f64) {
        self.push(name, value, format!("> {bound:e}"), value > bound);
    }

    pub fn within(&mut self, name: &str, value: f64, lo: f64, hi: f64) {
        self.push(name, value, format!("in [{lo}, {hi}]"), (lo..=hi).contains(&value));
    }

    pub fn holds(&mut self, name: &str, pass: bool) {
        self.push(name, if pass { 1.0 } else { 0.0 }, "true".into(), pass);
    }

    pub fn all_pass(&self) -> bool {
        self.0.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<String> {
        self.0.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect()
    }
}

/// What a subcommand hands back to the driver.
#[derive(Debug, Default)]
pub struct Report {
    pub checks: Checks,
    pub summary: serde_json::Value,
    pub params: serde_json::Value,
}

#[derive(Debug)]
pub enum CmdError {
    Config(ConfigError),
    Run(crate::Error),
}

impl From<ConfigError> for CmdError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<crate::Error> for CmdError {
    fn from(e: crate::Error) -> Self {
        Self::Run(e)
    }
}

/// Writes artifacts into the output directory and remembers their names.
pub struct Outputs {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

/// Shortest round-trip decimal form, so reruns compare bitwise.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

impl Outputs {
    pub fn new(dir: &Path) -> crate::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> crate::Result<()> {
        let fmt = |e: csv::Error| crate::Error::Format(e.to_string());
        let mut w = csv::Writer::from_path(self.dir.join(name)).map_err(fmt)?;
        w.write_record(header).map_err(fmt)?;
        for r in rows {
            w.write_record(r).map_err(fmt)?;
        }
        w.flush()?;
        self.files.push(name.into());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> crate::Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| crate::Error::Format(e.to_string()))?;
        std::fs::write(self.dir.join(name), text + "\n")?;
        self.files.push(name.into());
        Ok(())
    }

    fn digests(&self) -> crate::Result<Vec<OutputDigest>> {
        self.files
            .iter()
            .map(|f| {
                Ok(OutputDigest {
                    file: f.clone(),
                    sha256: manifest::sha256_file(&self.dir.join(f))?,
                })
            })
            .collect()
    }
}

#[derive(Serialize)]
struct Verdict<'a> {
    experiment: &'a str,
    subcommand: &'a str,
    status: &'a str,
    checks: &'a [Check],
    failures: Vec<String>,
    summary: &'a serde_json::Value,
}

fn config_failure(e: &ConfigError) -> i32 {
    let rec = serde_json::json!({"status": "config_error", "key": e.key, "message": e.message});
    eprintln!("{rec}");
    EXIT_CONFIG
}

/// Configures the global worker pool from `KINLAB_THREADS`.
pub fn init_threads() -> Result<(), ConfigError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError::new(THREADS_ENV, format!("expected a positive integer, got {v:?}")))?;
    // A pool that already exists (e.g. in tests) keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs one subcommand against a config file and returns the exit code.
pub fn execute(command: Subcommand, config_path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> i32 {
    let src = match std::fs::read_to_string(config_path) {
        Ok(s) => s,
        Err(e) => return config_failure(&ConfigError::new("<config file>", e.to_string())),
    };
    let mut cfg = match Config::parse(&src) {
        Ok(c) => c,
        Err(e) => return config_failure(&e),
    };
    if let Some(o) = out {
        cfg.run.out_dir = o;
    }
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    if cfg.run.id.trim().is_empty() {
        return config_failure(&ConfigError::new("run.id", "experiment id must be non-empty"));
    }
    let mut outputs = match Outputs::new(&cfg.run.out_dir) {
        Ok(o) => o,
        Err(e) => return config_failure(&ConfigError::new("run.out_dir", e.to_string())),
    };
    let start = Instant::now();
    let result = commands::dispatch(command, &cfg, &mut outputs);
    let (report, status) = match result {
        Ok(r) => {
            let st = if r.checks.all_pass() { "pass" } else { "fail" };
            (r, st)
        }
        Err(CmdError::Config(e)) => return config_failure(&e),
        Err(CmdError::Run(e)) => {
            let r = Report {
                summary: serde_json::json!({"error": e.to_string()}),
                ..Default::default()
            };
            (r, "error")
        }
    };
    let verdict = Verdict {
        experiment: &cfg.run.id,
        subcommand: command.name(),
        status,
        checks: &report.checks.0,
        failures: report.checks.failures(),
        summary: &report.summary,
    };
    if let Err(e) = outputs.json("verdict.json", &verdict) {
        eprintln!("{}", serde_json::json!({"status": "error", "message": e.to_string()}));
        return EXIT_FAIL;
    }
    if status != "pass" {
        eprintln!(
            "{}",
            serde_json::json!({"status": status, "failures": verdict.failures, "summary": report.summary})
        );
    }
    let written = outputs.digests().and_then(|digests| {
        let m = RunManifest {
            experiment: cfg.run.id.clone(),
            subcommand: command.name().into(),
            config: cfg.clone(),
            seed: cfg.run.seed,
            code_version: manifest::code_version(),
            params: report.params.clone(),
            threads: rayon::current_num_threads(),
            wall_time_s: start.elapsed().as_secs_f64(),
            outputs: digests,
        };
        let text = serde_json::to_string_pretty(&m).map_err(|e| crate::Error::Format(e.to_string()))?;
        std::fs::write(outputs.dir.join("manifest.json"), text + "\n")?;
        Ok(())
    });
    if let Err(e) = written {
        eprintln!("{}", serde_json::json!({"status": "error", "message": e.to_string()}));
        return EXIT_FAIL;
    }
    if status == "pass" {
        EXIT_OK
    } else {
        EXIT_FAIL
    }
}

pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        return config_failure(&e);
    }
    execute(cli.command, &cli.config, cli.out, cli.seed)
}
