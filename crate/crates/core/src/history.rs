//! Append-only log of all evaluations and incumbent extraction.
//!
//! The history is written as JSONL: a header line carrying the schema
//! version, the space digest, and the declared budget set, followed by one
//! record per completed trial in completion order. Failed evaluations are
//! retained in the log but excluded from incumbents and analyses.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{Configuration, DesignSpace, ParamValue};

/// Loss of a completed trial, or the failure marker.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrialOutcome {
    Loss(f64),
    Failed,
}

impl TrialOutcome {
    pub fn loss(&self) -> Option<f64> {
        match self {
            TrialOutcome::Loss(l) => Some(*l),
            TrialOutcome::Failed => None,
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, TrialOutcome::Loss(_))
    }
}

/// One evaluation of a configuration at a budget.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    /// Stable id assigned at first submission; preserved across budgets
    /// when a configuration is promoted.
    pub config_id: u64,
    pub bracket_id: u64,
    pub budget: f64,
    pub config: Configuration,
    pub outcome: TrialOutcome,
    /// Simulated evaluation cost in budget units.
    pub duration: f64,
    /// Logical seconds since run start; `finished_at >= submitted_at`.
    pub submitted_at: f64,
    pub finished_at: f64,
    /// Per-trial evaluation seed.
    pub seed: u64,
}

impl TrialRecord {
    pub fn is_success(&self) -> bool {
        self.outcome.is_success()
    }
}

/// One improvement step of the running minimum at the highest budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub finished_at: f64,
    /// 1-based position in the full completion-ordered record sequence.
    pub evaluation_index: usize,
    pub best_loss: f64,
    pub config_id: u64,
}

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("UnknownBudget: {0} is not in the declared budget set")]
    UnknownBudget(f64),
    #[error("InvalidConfiguration: {0}")]
    InvalidConfiguration(String),
    #[error("NonFiniteLoss: successful record carries loss {0}")]
    NonFiniteLoss(f64),
    #[error("IllegalTimestamps: finished_at {finished} precedes submitted_at {submitted}")]
    IllegalTimestamps { submitted: f64, finished: f64 },
    #[error("NoMaxBudgetRecord: no successful record at the highest budget")]
    NoMaxBudgetRecord,
    #[error("EmptyBudgetSet: at least one budget must be declared")]
    EmptyBudgetSet,
    #[error("SchemaViolation at line {line}: {reason}")]
    SchemaViolation { line: usize, reason: String },
    #[error("SpaceDigestMismatch: history was recorded for a different space")]
    SpaceDigestMismatch,
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

/// Completion-ordered log of trial records for one run.
#[derive(Clone, Debug)]
pub struct RunHistory {
    records: Vec<TrialRecord>,
    budget_set: Vec<f64>,
    space_digest: String,
}

impl RunHistory {
    pub fn new(mut budget_set: Vec<f64>, space_digest: String) -> Result<Self, HistoryError> {
        if budget_set.is_empty() {
            return Err(HistoryError::EmptyBudgetSet);
        }
        budget_set.sort_by(|a, b| a.partial_cmp(b).expect("budgets are finite"));
        budget_set.dedup();
        Ok(RunHistory { records: Vec::new(), budget_set, space_digest })
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn budget_set(&self) -> &[f64] {
        &self.budget_set
    }

    pub fn max_budget(&self) -> f64 {
        *self.budget_set.last().expect("budget set is non-empty")
    }

    pub fn space_digest(&self) -> &str {
        &self.space_digest
    }

    /// Appends a record at the tail. The budget must be declared and the
    /// configuration must pass validity checks against `space`.
    pub fn append(&mut self, space: &DesignSpace, record: TrialRecord) -> Result<(), HistoryError> {
        if !self.budget_set.contains(&record.budget) {
            return Err(HistoryError::UnknownBudget(record.budget));
        }
        if let Some(v) = space.check_validity(&record.config).into_iter().next() {
            return Err(HistoryError::InvalidConfiguration(v.to_string()));
        }
        if let TrialOutcome::Loss(l) = record.outcome {
            if !l.is_finite() {
                return Err(HistoryError::NonFiniteLoss(l));
            }
        }
        if record.finished_at < record.submitted_at {
            return Err(HistoryError::IllegalTimestamps {
                submitted: record.submitted_at,
                finished: record.finished_at,
            });
        }
        self.records.push(record);
        Ok(())
    }

    /// All successful records at budget `b`, in completion order.
    pub fn records_at_budget(&self, b: f64) -> Result<Vec<&TrialRecord>, HistoryError> {
        if !self.budget_set.contains(&b) {
            return Err(HistoryError::UnknownBudget(b));
        }
        Ok(self.records.iter().filter(|r| r.budget == b && r.is_success()).collect())
    }

    /// Running minimum over successful records at the highest budget; one
    /// point per improvement. The incumbent is judged at the highest budget
    /// only, so losses are never compared across fidelities.
    pub fn incumbent_trajectory(&self) -> Result<Vec<TrajectoryPoint>, HistoryError> {
        let max_budget = self.max_budget();
        let mut best = f64::INFINITY;
        let mut points = Vec::new();
        for (i, record) in self.records.iter().enumerate() {
            if record.budget != max_budget {
                continue;
            }
            if let TrialOutcome::Loss(loss) = record.outcome {
                if loss < best {
                    best = loss;
                    points.push(TrajectoryPoint {
                        finished_at: record.finished_at,
                        evaluation_index: i + 1,
                        best_loss: loss,
                        config_id: record.config_id,
                    });
                }
            }
        }
        if points.is_empty() {
            return Err(HistoryError::NoMaxBudgetRecord);
        }
        Ok(points)
    }

    /// Serializes the full history as JSONL (header line plus one record
    /// per line).
    pub fn write_jsonl<W: Write>(&self, space: &DesignSpace, writer: W) -> io::Result<()> {
        let mut out = JsonlWriter::create(writer, space, &self.budget_set)?;
        for record in &self.records {
            out.append(space, record)?;
        }
        Ok(())
    }

    /// Parses a JSONL stream back into a history, validating the schema
    /// (with 1-based line numbers) and the space digest.
    pub fn read_jsonl<R: BufRead>(reader: R, space: &DesignSpace) -> Result<Self, HistoryError> {
        let mut lines = reader.lines().enumerate();
        let (_, header_line) = lines.next().ok_or(HistoryError::SchemaViolation {
            line: 1,
            reason: "missing header line".to_string(),
        })?;
        let header: HeaderJson = serde_json::from_str(&header_line?)
            .map_err(|e| HistoryError::SchemaViolation { line: 1, reason: e.to_string() })?;
        if header.version != 1 {
            return Err(HistoryError::SchemaViolation {
                line: 1,
                reason: format!("unsupported version {}", header.version),
            });
        }
        if header.space_digest != space.digest() {
            return Err(HistoryError::SpaceDigestMismatch);
        }
        let mut history = Self::new(header.budgets, header.space_digest)
            .map_err(|e| HistoryError::SchemaViolation { line: 1, reason: e.to_string() })?;
        for (idx, line) in lines {
            let line_no = idx + 1;
            let text = line?;
            if text.trim().is_empty() {
                continue;
            }
            let raw: RecordJson = serde_json::from_str(&text)
                .map_err(|e| HistoryError::SchemaViolation { line: line_no, reason: e.to_string() })?;
            let record = record_from_json(space, raw)
                .map_err(|reason| HistoryError::SchemaViolation { line: line_no, reason })?;
            history.append(space, record).map_err(|e| match e {
                HistoryError::SpaceDigestMismatch => e,
                other => HistoryError::SchemaViolation { line: line_no, reason: other.to_string() },
            })?;
        }
        Ok(history)
    }
}

/// Incremental JSONL writer; each appended line is flushed so an
/// interrupted run still leaves a truncated-but-valid log behind.
pub struct JsonlWriter<W: Write> {
    writer: W,
}

impl<W: Write> JsonlWriter<W> {
    pub fn create(mut writer: W, space: &DesignSpace, budgets: &[f64]) -> io::Result<Self> {
        let header = HeaderJson {
            version: 1,
            space_digest: space.digest(),
            budgets: budgets.to_vec(),
        };
        serde_json::to_writer(&mut writer, &header)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        Ok(JsonlWriter { writer })
    }

    pub fn append(&mut self, space: &DesignSpace, record: &TrialRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.writer, &record_to_json(space, record))?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderJson {
    version: u32,
    space_digest: String,
    budgets: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordJson {
    config_id: u64,
    bracket: u64,
    budget: f64,
    config: serde_json::Map<String, serde_json::Value>,
    active: serde_json::Map<String, serde_json::Value>,
    loss: Option<f64>,
    status: String,
    duration: f64,
    submitted: f64,
    finished: f64,
    seed: u64,
}

fn record_to_json(space: &DesignSpace, record: &TrialRecord) -> RecordJson {
    let mut active = serde_json::Map::new();
    for (hp, is_active) in space.hyperparameters().iter().zip(record.config.active_mask()) {
        active.insert(hp.name.clone(), serde_json::Value::Bool(is_active));
    }
    RecordJson {
        config_id: record.config_id,
        bracket: record.bracket_id,
        budget: record.budget,
        config: space.config_value_map(&record.config),
        active,
        loss: record.outcome.loss(),
        status: match record.outcome {
            TrialOutcome::Loss(_) => "ok".to_string(),
            TrialOutcome::Failed => "failed".to_string(),
        },
        duration: record.duration,
        submitted: record.submitted_at,
        finished: record.finished_at,
        seed: record.seed,
    }
}

fn record_from_json(space: &DesignSpace, raw: RecordJson) -> Result<TrialRecord, String> {
    let outcome = match raw.status.as_str() {
        "ok" => match raw.loss {
            Some(l) => TrialOutcome::Loss(l),
            None => return Err("status \"ok\" requires a numeric loss".to_string()),
        },
        "failed" => {
            if raw.loss.is_some() {
                return Err("status \"failed\" requires loss null".to_string());
            }
            TrialOutcome::Failed
        }
        other => return Err(format!("unknown status '{other}'")),
    };

    if raw.config.len() != space.len() {
        return Err(format!(
            "config object has {} entries, space has {}",
            raw.config.len(),
            space.len()
        ));
    }
    let mut values: Vec<Option<ParamValue>> = Vec::with_capacity(space.len());
    for hp in space.hyperparameters() {
        let json = raw
            .config
            .get(&hp.name)
            .ok_or_else(|| format!("config is missing hyperparameter '{}'", hp.name))?;
        let value = match json {
            serde_json::Value::Null => None,
            other => Some(
                serde_json::from_value::<ParamValue>(other.clone())
                    .map_err(|e| format!("bad value for '{}': {e}", hp.name))?,
            ),
        };
        let active_flag = raw
            .active
            .get(&hp.name)
            .and_then(|v| v.as_bool())
            .ok_or_else(|| format!("active map is missing hyperparameter '{}'", hp.name))?;
        if active_flag != value.is_some() {
            return Err(format!("active flag for '{}' contradicts its value", hp.name));
        }
        values.push(value);
    }

    Ok(TrialRecord {
        config_id: raw.config_id,
        bracket_id: raw.bracket,
        budget: raw.budget,
        config: Configuration::from_raw_values(values),
        outcome,
        duration: raw.duration,
        submitted_at: raw.submitted,
        finished_at: raw.finished,
        seed: raw.seed,
    })
}
