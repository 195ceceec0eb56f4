use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::AuditConfig;
use crate::engine::{AuditResult, SweepCell, TrialOutcome};
use crate::error::{AuditError, Result};
use crate::estimation::{ceiling, EstimateSummary};
use crate::mechanisms::sentence_budget;

pub const SCHEMA_VERSION: &str = "1";

/// Columns of the sweep CSV, before the optional `eps_sentence` and the
/// trailing `status`.
pub const SWEEP_COLUMNS: [&str; 12] = [
    "epsilon_nominal",
    "epsilon_emp",
    "p_lower",
    "tp",
    "trials",
    "k",
    "lambda",
    "alpha",
    "delta",
    "mechanism",
    "adversary",
    "ceiling",
];

/// Fields that vary between otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub wall_time_secs: f64,
}

impl Environment {
    pub fn capture(wall_time_secs: f64) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            wall_time_secs,
        }
    }
}

/// One audit as stored on disk: a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub schema_version: String,
    pub summary: EstimateSummary,
    pub config_echo: AuditConfig,
    pub mechanism_queries: u64,
    /// Trials that errored and were left out of both the success count and
    /// the trial total.
    pub failed_trials: u64,
    pub environment: Environment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_log_path: Option<String>,
}

impl ResultFile {
    pub fn from_result(result: &AuditResult, trial_log_path: Option<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            summary: result.summary.clone(),
            config_echo: result.config_echo.clone(),
            mechanism_queries: result.mechanism_queries,
            failed_trials: result.failed_trials,
            environment: Environment::capture(result.wall_time_secs),
            trial_log_path,
        }
    }
}

/// Writes `doc` as the only line of `path`, replacing any existing file.
pub fn write_result(doc: &ResultFile, path: impl AsRef<Path>) -> Result<()> {
    let mut line = serde_json::to_string(doc)?;
    line.push('\n');
    fs::write(path, line)?;
    Ok(())
}

/// Appends `doc` as one line, creating the file if needed.
pub fn append_result(doc: &ResultFile, path: impl AsRef<Path>) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(doc)?)?;
    Ok(())
}

/// Reads every result line in `path`, rejecting unknown schema versions.
pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultFile>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| AuditError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let doc: ResultFile = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(malformed(format!(
                "unsupported schema_version {:?}",
                doc.schema_version
            )));
        }
        docs.push(doc);
    }
    Ok(docs)
}

/// Writes trial outcomes as JSON lines.
pub fn write_trial_log(log: &[TrialOutcome], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for outcome in log {
        serde_json::to_writer(&mut w, outcome)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trial_log(path: impl AsRef<Path>) -> Result<Vec<TrialOutcome>> {
    let reader = BufReader::new(File::open(path)?);
    reader
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

/// Writes one CSV row per sweep cell. With `mean_tokens`, an `eps_sentence`
/// column holds the per-token budget composed over that many tokens. Failed
/// cells keep their nominal epsilon and ceiling, leave the estimate columns
/// empty, and carry the error in `status`.
pub fn write_sweep(
    cells: &[SweepCell],
    base: &AuditConfig,
    mean_tokens: Option<f64>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    write_sweep_to(&mut w, cells, base, mean_tokens)?;
    w.flush()?;
    Ok(())
}

pub fn write_sweep_to<W: Write>(
    w: &mut csv::Writer<W>,
    cells: &[SweepCell],
    base: &AuditConfig,
    mean_tokens: Option<f64>,
) -> Result<()> {
    let mut header: Vec<&str> = SWEEP_COLUMNS.to_vec();
    if mean_tokens.is_some() {
        header.push("eps_sentence");
    }
    header.push("status");
    w.write_record(&header)?;

    let ceiling = ceiling(base.k, base.trials, base.alpha_conf, base.delta)?;
    for cell in cells {
        let mut row = vec![cell.epsilon.to_string()];
        match &cell.result {
            Ok(r) => {
                let s = &r.summary;
                row.extend([
                    format!("{:.4}", s.epsilon_emp),
                    format!("{:.6}", s.p_lower),
                    s.tp_count.to_string(),
                    s.trials.to_string(),
                ]);
            }
            Err(_) => row.extend(["", "", "", ""].map(String::from)),
        }
        row.extend([
            base.k.to_string(),
            base.lambda.to_string(),
            base.alpha_conf.to_string(),
            base.delta.to_string(),
            base.mechanism.name().to_string(),
            base.adversary.name().to_string(),
            format!("{ceiling:.4}"),
        ]);
        if let Some(n) = mean_tokens {
            row.push(format!("{}", sentence_budget_f(cell.epsilon, n)));
        }
        row.push(match &cell.result {
            Ok(_) => "ok".to_string(),
            Err(e) => format!("failed: {e}"),
        });
        w.write_record(&row)?;
    }
    Ok(())
}

/// Composition over a possibly fractional mean token count.
fn sentence_budget_f(epsilon: f64, mean_tokens: f64) -> f64 {
    if mean_tokens.fract() == 0.0 && mean_tokens >= 0.0 {
        sentence_budget(epsilon, mean_tokens as u64)
    } else {
        epsilon * mean_tokens
    }
}
