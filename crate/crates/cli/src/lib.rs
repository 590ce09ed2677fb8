//! Batch front end for `sublin-core`: experiment configurations, the `φ`
//! expression language, check execution and report files.
//!
//! The `sublin` binary wraps [`execute`]. Exit codes: `0` when every check
//! passes, `1` for usage, input or evaluation errors, `2` when a bound or
//! property check fails.

pub mod config;
pub mod phi;
pub mod report;
pub mod run;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::json;
use thiserror::Error;

pub use config::{parse_config, Check, ConfigError, ExperimentConfig, Format};
pub use phi::{parse_phi, PhiExpr, PhiSyntaxError};
pub use report::{Cell, Table};
pub use run::{columns, run_check, CheckError};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckSummary {
    pub check: Check,
    pub report: PathBuf,
    pub rows: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub checks: Vec<CheckSummary>,
}

impl RunSummary {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.failures == 0)
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass() {
            EXIT_PASS
        } else {
            EXIT_VIOLATION
        }
    }
}

/// Runs `checks` in order, writing `report_<check>.<format>` for each and
/// then `summary.json` into `out`.
pub fn execute(cfg: &ExperimentConfig, checks: &[Check], out: &Path) -> Result<RunSummary, RunError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut summary = RunSummary { checks: Vec::new() };
    for &check in checks {
        let table = run_check(check, cfg)?;
        let path = out.join(table.file_name(cfg.format));
        table.write(out, cfg.format).map_err(io_err(&path))?;
        summary.checks.push(CheckSummary {
            check,
            report: path,
            rows: table.rows.len(),
            failures: table.failures(),
        });
    }
    let doc = json!({
        "tool": "sublin",
        "version": env!("CARGO_PKG_VERSION"),
        "pass": summary.pass(),
        "format": cfg.format.name(),
        "seed": cfg.seed,
        "state_cap": cfg.state_cap,
        "checks": summary.checks.iter().map(|c| json!({
            "check": c.check.name(),
            "report": c.report.file_name().map(|s| s.to_string_lossy().into_owned()),
            "rows": c.rows,
            "failures": c.failures,
            "pass": c.failures == 0,
        })).collect::<Vec<_>>(),
    });
    let path = out.join("summary.json");
    let mut text = serde_json::to_string_pretty(&doc).expect("json");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(summary)
}
