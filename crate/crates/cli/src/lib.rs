//! Command orchestration for the simulation suite: JSON configs in,
//! deterministic `report.csv` + `summary.txt` out, exit codes for CI.
//!
//! Every command is a pure function of its parsed config: rerunning with
//! the same file yields byte-identical outputs at any thread count.
//! Process exit contract: 0 pass, 2 config error, 4 statistical gate
//! failure, 3 structural warning (truncation or censoring beyond bound),
//! with conflicts resolved in that order.

use std::path::Path;

use anyhow::{Context, Result};

pub mod commands {
    pub mod bounds_sweep;
    pub mod riesz_mc;
    pub mod sparse_verify;
    pub mod weak_type;
}
pub mod config;
pub mod report;

use report::{ExitStatus, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    WeakType,
    SparseVerify,
    RieszMc,
    BoundsSweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::WeakType => "weak-type",
            Command::SparseVerify => "sparse-verify",
            Command::RieszMc => "riesz-mc",
            Command::BoundsSweep => "bounds-sweep",
        }
    }
}

/// Parses the config, runs the command, writes the report files, and
/// returns the report with its exit status. All `Err` returns are config
/// or I/O problems (exit 2); statistical outcomes live in the report.
pub fn execute(command: Command, config_path: &Path, out_dir: &Path) -> Result<(Report, ExitStatus)> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading config {}", config_path.display()))?;
    let base_dir = config_path.parent().unwrap_or(Path::new("."));
    let report = match command {
        Command::WeakType => {
            let cfg: config::WeakTypeConfig =
                serde_json::from_str(&text).context("parsing weak-type config")?;
            cfg.validate()?;
            let echo = serde_json::to_string(&cfg).context("echoing config")?;
            commands::weak_type::run(&cfg, echo)?
        }
        Command::SparseVerify => {
            let cfg: config::SparseVerifyConfig =
                serde_json::from_str(&text).context("parsing sparse-verify config")?;
            cfg.validate()?;
            let echo = serde_json::to_string(&cfg).context("echoing config")?;
            commands::sparse_verify::run(&cfg, echo)?
        }
        Command::RieszMc => {
            let cfg: config::RieszMcConfig =
                serde_json::from_str(&text).context("parsing riesz-mc config")?;
            let echo = serde_json::to_string(&cfg).context("echoing config")?;
            commands::riesz_mc::run(&cfg, base_dir, echo)?
        }
        Command::BoundsSweep => {
            let cfg: config::BoundsSweepConfig =
                serde_json::from_str(&text).context("parsing bounds-sweep config")?;
            cfg.validate()?;
            let echo = serde_json::to_string(&cfg).context("echoing config")?;
            commands::bounds_sweep::run(&cfg, echo)?
        }
    };
    report.write(out_dir)?;
    let exit = report.exit();
    Ok((report, exit))
}
