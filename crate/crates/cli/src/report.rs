//! Deterministic report assembly: every byte of `report.csv` and
//! `summary.txt` is a pure function of the parsed config. Wall-clock and
//! throughput stay on stdout, never in the files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

/// Process exit contract: config errors beat gate failures beat
/// structural warnings beat success.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Pass,
    ConfigError,
    StructuralWarning,
    GateFailure,
}

impl ExitStatus {
    pub fn code(self) -> u8 {
        match self {
            ExitStatus::Pass => 0,
            ExitStatus::ConfigError => 2,
            ExitStatus::StructuralWarning => 3,
            ExitStatus::GateFailure => 4,
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ExitStatus::Pass => "pass",
            ExitStatus::ConfigError => "config error",
            ExitStatus::StructuralWarning => "structural warning",
            ExitStatus::GateFailure => "statistical gate failure",
        }
    }
}

/// One named CSV section.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self::from_header(name, header.iter().map(|s| s.to_string()).collect())
    }

    pub fn from_header(name: &str, header: Vec<String>) -> Self {
        Self { name: name.to_string(), header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }
}

/// One pass/fail gate with its supporting detail.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Full command output. Verdicts decide pass/fail; warnings demote a pass
/// to a structural warning without failing it.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: String,
    pub config_echo: String,
    pub tables: Vec<Table>,
    pub verdicts: Vec<Verdict>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(command: &str, config_echo: String) -> Self {
        Self {
            command: command.to_string(),
            config_echo,
            tables: Vec::new(),
            verdicts: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn verdict(&mut self, name: &str, pass: bool, detail: String) {
        self.verdicts.push(Verdict { name: name.to_string(), pass, detail });
    }

    pub fn exit(&self) -> ExitStatus {
        if self.verdicts.iter().any(|v| !v.pass) {
            ExitStatus::GateFailure
        } else if !self.warnings.is_empty() {
            ExitStatus::StructuralWarning
        } else {
            ExitStatus::Pass
        }
    }

    pub fn csv_text(&self) -> String {
        let mut out = String::new();
        for (i, table) in self.tables.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "# table: {}", table.name);
            let _ = writeln!(out, "{}", table.header.join(","));
            for row in &table.rows {
                let _ = writeln!(out, "{}", row.join(","));
            }
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let exit = self.exit();
        let mut out = String::new();
        let _ = writeln!(out, "command: {}", self.command);
        let _ = writeln!(out, "exit: {} ({})", exit.code(), exit.describe());
        for v in &self.verdicts {
            let _ = writeln!(
                out,
                "verdict {}: {} — {}",
                v.name,
                if v.pass { "PASS" } else { "FAIL" },
                v.detail
            );
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        let _ = writeln!(out, "config: {}", self.config_echo);
        out
    }

    /// Writes `report.csv` and `summary.txt` into `out_dir`.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir)
            .with_context(|| format!("creating output directory {}", out_dir.display()))?;
        fs::write(out_dir.join("report.csv"), self.csv_text()).context("writing report.csv")?;
        fs::write(out_dir.join("summary.txt"), self.summary_text())
            .context("writing summary.txt")?;
        Ok(())
    }
}

/// Canonical float formatting for reports: shortest round-trip form.
pub fn ff(v: f64) -> String {
    format!("{v}")
}

pub fn fb(v: bool) -> String {
    v.to_string()
}
