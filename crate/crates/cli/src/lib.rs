//! `mcx`: command-line front end for the coalescent simulation lab.
//!
//! Every run is described by a [`Scenario`]. Flags build one directly, or
//! `--config` loads it from JSON and flags then override single fields.

use std::ffi::OsString;
use std::path::Path;

use clap::Parser;

pub mod commands;
pub mod output;
pub mod scenario;

pub use scenario::{parse_list, Command, Format, ScenarioParams, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MODULE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VERDICT: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Module(#[from] mcx_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => EXIT_USAGE,
            RunError::Module(_) | RunError::Io(_) => EXIT_MODULE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mcx", version, about = "Multiplicative coalescent simulation lab", allow_negative_numbers = true)]
pub struct Cli {
    /// Subcommand; optional when --config names one.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// Scenario JSON file; flags given alongside override its fields.
    #[arg(long)]
    pub config: Option<String>,
    /// System size, or a comma list of sizes for `convergence`.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    /// Comma list of non-increasing jump sizes.
    #[arg(long)]
    pub c: Option<String>,
    #[arg(long)]
    pub l: Option<usize>,
    /// Explicit non-increasing mass vector, overriding the standard one.
    #[arg(long)]
    pub masses: Option<String>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 means one per core.
    #[arg(long, env = "MCX_JOBS")]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub min_length: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// `simulate-limit`: write the first path instead of excursions.
    #[arg(long)]
    pub path: bool,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl Cli {
    /// Folds the flags into a scenario, starting from `--config` if given.
    pub fn scenario(&self) -> Result<Scenario, RunError> {
        let mut sc = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| RunError::Usage(format!("--config {path}: {e}")))?;
                serde_json::from_str::<Scenario>(&text)
                    .map_err(|e| RunError::Usage(format!("--config {path}: {e}")))?
            }
            None => {
                let cmd = self.command.ok_or_else(|| RunError::Usage("missing command".into()))?;
                Scenario::new(cmd)
            }
        };
        let usage = |flag: &str, e: String| RunError::Usage(format!("--{flag}: {e}"));
        if let Some(cmd) = self.command {
            sc.command = cmd;
        }
        if let Some(n) = &self.n {
            sc.n = parse_list(n).map_err(|e| usage("n", e))?;
        }
        if let Some(v) = self.kappa {
            sc.params.kappa = v;
        }
        if let Some(v) = self.t {
            sc.params.t = v;
        }
        if let Some(c) = &self.c {
            sc.params.c = parse_list(c).map_err(|e| usage("c", e))?;
        }
        if let Some(m) = &self.masses {
            sc.masses = Some(parse_list(m).map_err(|e| usage("masses", e))?);
        }
        macro_rules! set_opt {
            ($($f:ident),*) => { $( if self.$f.is_some() { sc.$f = self.$f; } )* };
        }
        set_opt!(l, q, s, horizon, step, min_length);
        if let Some(v) = self.replicas {
            sc.replicas = v;
        }
        if let Some(v) = self.seed {
            sc.seed = v;
        }
        if let Some(v) = self.threshold {
            sc.threshold = v;
        }
        if self.path {
            sc.path = true;
        }
        if let Some(o) = &self.out {
            sc.out_path = Some(o.clone());
        }
        if let Some(f) = self.format {
            sc.format = f;
        }
        sc.validate().map_err(RunError::Usage)?;
        Ok(sc)
    }
}

/// Runs a validated scenario on a pool of `jobs` threads and writes its
/// artifact. Returns the outcome's summary line and verdict.
pub fn run(sc: &Scenario, jobs: usize) -> Result<commands::Outcome, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| RunError::Usage(format!("--jobs: {e}")))?;
    let outcome = pool.install(|| commands::dispatch(sc))?;
    match &sc.out_path {
        Some(p) => output::write_atomic(Path::new(p), outcome.body.as_bytes())?,
        None => print!("{}", outcome.body),
    }
    Ok(outcome)
}

/// Whole program: parse, run, report. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = cli.scenario().and_then(|sc| run(&sc, cli.jobs.unwrap_or(0)));
    match result {
        Ok(out) => {
            eprintln!("{}", out.summary);
            if out.passed {
                EXIT_OK
            } else {
                EXIT_VERDICT
            }
        }
        Err(e) => {
            eprintln!("mcx: {e}");
            e.exit_code()
        }
    }
}
