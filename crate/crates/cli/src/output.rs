//! Artifact rendering and atomic file output.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::scenario::Scenario;

pub const TOOL: &str = "mcx";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Scenario as embedded in artifacts. The output path is dropped so the
/// same run written to two places produces identical bytes.
pub fn embedded_scenario(sc: &Scenario) -> Scenario {
    Scenario { out_path: None, ..sc.clone() }
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(sc: &Scenario, columns: &[&str]) -> Self {
        let mut text = String::new();
        writeln!(text, "# {TOOL} {VERSION} {}", sc.command.name()).unwrap();
        writeln!(text, "# scenario: {}", embedded_scenario(sc).to_json()).unwrap();
        writeln!(text, "{}", columns.join(",")).unwrap();
        Self { text }
    }

    pub fn row(&mut self, fields: &[&dyn std::fmt::Display]) {
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            write!(self.text, "{f}").unwrap();
        }
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    scenario: Scenario,
    #[serde(flatten)]
    body: &'a T,
}

pub fn json<T: Serialize>(sc: &Scenario, body: &T) -> String {
    let env = Envelope { tool: TOOL, version: VERSION, scenario: embedded_scenario(sc), body };
    let mut s = serde_json::to_string_pretty(&env).expect("report serialises");
    s.push('\n');
    s
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
