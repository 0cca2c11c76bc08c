//! Scenario description shared by the flag parser and `--config` files.

use serde::{Deserialize, Deserializer, Serialize};

use mcx_core::config::{default_l, make_standard_config, DEFAULT_SPLIT_THRESHOLD};
use mcx_core::{MassConfig, RegimeParams};

/// Largest system accepted by `verify-exact`, which reports every pair.
pub const VERIFY_MAX_N: usize = 12;
/// Cap on grid points per limit path.
pub const MAX_GRID_POINTS: f64 = 5.0e7;
pub const MAX_REPLICAS: usize = 100_000_000;
pub const MAX_N: usize = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SimulateGraph,
    SimulateLimit,
    Uribe,
    VerifyExact,
    Convergence,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SimulateGraph => "simulate-graph",
            Command::SimulateLimit => "simulate-limit",
            Command::Uribe => "uribe",
            Command::VerifyExact => "verify-exact",
            Command::Convergence => "convergence",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub c: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self { kappa: 1.0, t: 0.0, c: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub command: Command,
    #[serde(default)]
    pub params: ScenarioParams,
    /// System sizes; every command but `convergence` takes exactly one.
    #[serde(default, deserialize_with = "one_or_many")]
    pub n: Vec<usize>,
    #[serde(default)]
    pub l: Option<usize>,
    #[serde(default)]
    pub masses: Option<Vec<f64>>,
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default = "one_usize")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub min_length: Option<f64>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// `simulate-limit` only: emit the first replica's path instead of
    /// excursion lengths.
    #[serde(default)]
    pub path: bool,
    #[serde(default)]
    pub out_path: Option<String>,
    #[serde(default)]
    pub format: Format,
}

fn one_usize() -> usize {
    1
}

fn default_threshold() -> f64 {
    DEFAULT_SPLIT_THRESHOLD
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

impl Scenario {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            params: ScenarioParams::default(),
            n: Vec::new(),
            l: None,
            masses: None,
            q: None,
            s: None,
            replicas: 1,
            seed: 0,
            horizon: None,
            step: None,
            min_length: None,
            threshold: DEFAULT_SPLIT_THRESHOLD,
            path: false,
            out_path: None,
            format: Format::Csv,
        }
    }

    /// Parses and validates a JSON scenario.
    pub fn from_json_str(text: &str) -> Result<Self, String> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| format!("scenario JSON: {e}"))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scenario serialises")
    }

    pub fn regime(&self) -> Result<RegimeParams, String> {
        let p = &self.params;
        RegimeParams::new(p.kappa, p.t, p.c.clone()).map_err(|e| format!("--kappa/--t/--c: {e}"))
    }

    /// The mass configuration named by `--masses`, or the standard one for
    /// `--n` under the regime parameters.
    pub fn mass_config(&self) -> Result<MassConfig, String> {
        if let Some(m) = &self.masses {
            return MassConfig::new(m.clone()).map_err(|e| format!("--masses: {e}"));
        }
        let n = self.single_n()?;
        let params = self.regime()?;
        let l = self.l.unwrap_or_else(|| default_l(n, &params));
        make_standard_config(n, &params, l).map_err(|e| format!("--n/--l: {e}"))
    }

    /// Checks the mass configuration without allocating it.
    fn check_masses(&self) -> Result<usize, String> {
        if let Some(m) = &self.masses {
            return MassConfig::new(m.clone()).map(|x| x.len()).map_err(|e| format!("--masses: {e}"));
        }
        let n = self.single_n()?;
        self.check_standard(n)
    }

    /// Block count of the standard configuration at size `n`.
    fn check_standard(&self, n: usize) -> Result<usize, String> {
        if n == 0 || n > MAX_N {
            return Err(format!("--n must be in 1..={MAX_N}"));
        }
        let params = self.regime()?;
        let l = self.l.unwrap_or_else(|| default_l(n, &params));
        make_standard_config(1, &params, l).map_err(|e| format!("--n {n}/--l: {e}"))?;
        Ok(if params.kappa > 0.0 { n + l } else { l })
    }

    fn single_n(&self) -> Result<usize, String> {
        match self.n.as_slice() {
            [n] => Ok(*n),
            [] => Err(format!("{} needs --n or --masses", self.command.name())),
            _ => Err(format!("{} takes a single --n", self.command.name())),
        }
    }

    /// Checks every field the command reads, with messages naming the flag.
    pub fn validate(&self) -> Result<(), String> {
        if self.replicas == 0 || self.replicas > MAX_REPLICAS {
            return Err(format!("--replicas must be in 1..={MAX_REPLICAS}"));
        }
        let params = self.regime()?;
        positive_opt("--horizon", self.horizon)?;
        positive_opt("--step", self.step)?;
        positive_opt("--min-length", self.min_length)?;
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err("--threshold must be in (0, 1]".into());
        }
        if let Some(q) = self.q {
            if !(q.is_finite() && q >= 0.0) {
                return Err("--q must be finite and non-negative".into());
            }
        }
        if let Some(s) = self.s {
            if !(s.is_finite() && s >= 0.0) {
                return Err("--s must be finite and non-negative".into());
            }
        }
        if let (Some(m), [n]) = (&self.masses, self.n.as_slice()) {
            if m.len() != *n {
                return Err(format!("--n {n} disagrees with {} entries in --masses", m.len()));
            }
        }
        match self.command {
            Command::SimulateGraph => {
                self.check_masses()?;
            }
            Command::Uribe => {
                self.check_masses()?;
                self.s.ok_or("uribe needs --s")?;
            }
            Command::VerifyExact => {
                if self.check_masses()? > VERIFY_MAX_N {
                    return Err(format!("verify-exact supports at most {VERIFY_MAX_N} blocks"));
                }
                self.s.ok_or("verify-exact needs --s")?;
            }
            Command::SimulateLimit => {
                if params.kappa == 0.0 && params.c.is_empty() {
                    return Err("simulate-limit needs --kappa > 0 or a non-empty --c".into());
                }
                let horizon = self.horizon.unwrap_or_else(|| mcx_core::levy::default_horizon(&params));
                if let Some(step) = self.step {
                    if horizon / step > MAX_GRID_POINTS {
                        return Err(format!("--horizon / --step exceeds {MAX_GRID_POINTS} grid points"));
                    }
                }
            }
            Command::Convergence => {
                if self.n.is_empty() {
                    return Err("convergence needs --n as a list of positive sizes".into());
                }
                if params.kappa == 0.0 && params.c.is_empty() {
                    return Err("convergence needs --kappa > 0 or a non-empty --c".into());
                }
                if self.masses.is_some() {
                    return Err("convergence builds its own configurations; drop --masses".into());
                }
                for &n in &self.n {
                    self.check_standard(n)?;
                }
            }
        }
        Ok(())
    }
}

fn positive_opt(flag: &str, v: Option<f64>) -> Result<(), String> {
    match v {
        Some(v) if !(v.is_finite() && v > 0.0) => Err(format!("{flag} must be finite and positive")),
        _ => Ok(()),
    }
}

/// Comma-separated list, e.g. `1,0.5,0.25`. Blank input is the empty list.
pub fn parse_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|item| {
            let item = item.trim();
            item.parse::<T>().map_err(|e| format!("bad list entry {item:?}: {e}"))
        })
        .collect()
}
