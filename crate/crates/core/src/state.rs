//! Per-step state records and the append-only trial log.
//!
//! The controller is only ever shown the single most recent record as
//! reference state; deeper history stays in the log for audit and replay.
//! Logs persist as JSON lines: one record per line plus a trailer carrying
//! the outcome and the config snapshot needed for replay.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

use crate::attack::InjectionEvent;
use crate::prompt::{ControlSignal, PerceptionBlock, TokenUsage};
use crate::validator::SafetyParams;
use crate::world::{BodyId, ExecutionResult, Pose, ScenarioKind, WorldConfig};

/// Per-signal validation summary stored in the log. `rejected_count` is the
/// number of whole command lists the validator rejected during the step
/// (shared by every signal of the finally executed list).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictSummary {
    pub valid: bool,
    pub rejected_count: u32,
}

/// Everything recorded for one completed pipeline step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: u32,
    pub signals_with_results: Vec<(ControlSignal, ExecutionResult)>,
    pub perception: PerceptionBlock,
    pub justifications: Vec<String>,
    pub validation_verdicts: Vec<VerdictSummary>,
    pub token_usage: TokenUsage,
    /// Robot pose after the step's signals executed.
    pub pose_after: Pose,
    /// Verbatim rendering of the step's user prompt, for audit.
    #[serde(default)]
    pub user_prompt_text: String,
    /// Canonical JSON of the accepted response, for audit.
    #[serde(default)]
    pub response_json: String,
    /// Verbatim wire exchanges for remote backends; empty for scripted ones.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wire_transcript: Vec<crate::brain::WireExchange>,
}

/// Trial outcome classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialOutcome {
    Completed,
    Timeout,
    Interrupted,
}

impl std::fmt::Display for TrialOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrialOutcome::Completed => write!(f, "completed"),
            TrialOutcome::Timeout => write!(f, "timeout"),
            TrialOutcome::Interrupted => write!(f, "interrupted"),
        }
    }
}

/// Where and how a collision ended a trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionNote {
    pub step_index: u32,
    pub body: BodyId,
    /// True when a moving obstacle ran into the robot during the dynamics
    /// phase (before the controller acted that step).
    pub during_dynamics: bool,
}

/// Append-only log for one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub trial_id: String,
    pub seed: u64,
    pub scenario: ScenarioKind,
    pub secured: bool,
    pub attacked: bool,
    pub world_config: WorldConfig,
    pub safety_params: SafetyParams,
    pub records: Vec<StepRecord>,
    pub outcome: Option<TrialOutcome>,
    /// Steps entered, including a final step cut short by a dynamics-phase
    /// collision before the controller ran.
    pub steps_taken: u32,
    pub injections: Vec<InjectionEvent>,
    pub collision: Option<CollisionNote>,
    pub mission_failed_at: Option<u32>,
    /// Verbatim rendering of the trial's system prompt, for audit.
    pub system_prompt_text: String,
}

impl TrialLog {
    pub fn new(
        trial_id: impl Into<String>,
        seed: u64,
        scenario: ScenarioKind,
        secured: bool,
        attacked: bool,
        world_config: WorldConfig,
        safety_params: SafetyParams,
    ) -> Self {
        Self {
            trial_id: trial_id.into(),
            seed,
            scenario,
            secured,
            attacked,
            world_config,
            safety_params,
            records: Vec::new(),
            outcome: None,
            steps_taken: 0,
            injections: Vec::new(),
            collision: None,
            mission_failed_at: None,
            system_prompt_text: String::new(),
        }
    }
}

/// Record sequencing violation.
#[derive(Debug, Error)]
#[error("step record out of sequence: expected index {expected}, got {got}")]
pub struct SequenceError {
    pub expected: u32,
    pub got: u32,
}

/// Log persistence failure.
#[derive(Debug, Error)]
pub enum LogIoError {
    #[error("log is not finalized (no outcome set)")]
    NotFinalized,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("log has no trailer line")]
    MissingTrailer,
}

/// Append a record. Indices must be contiguous from 1; history is never
/// rewritten.
pub fn record_step(log: &mut TrialLog, record: StepRecord) -> Result<(), SequenceError> {
    let expected = log.records.last().map(|r| r.step_index).unwrap_or(0) + 1;
    if record.step_index != expected {
        return Err(SequenceError {
            expected,
            got: record.step_index,
        });
    }
    log.records.push(record);
    Ok(())
}

/// The most recent step record, absent before the first step.
pub fn reference_state(log: &TrialLog) -> Option<&StepRecord> {
    log.records.last()
}

/// Fixed-template text handed back to the controller as reference state:
/// each signal with its execution result and justification.
pub fn render_reference(record: &StepRecord) -> String {
    let mut out = format!("Previous step {}:\n", record.step_index);
    for (i, (signal, result)) in record.signals_with_results.iter().enumerate() {
        let status = match result.status {
            crate::world::ExecutionStatus::Ok => "ok".to_string(),
            crate::world::ExecutionStatus::Collision => format!(
                "collision with {}",
                result
                    .collided_with
                    .map(|b| b.to_string())
                    .unwrap_or_else(|| "unknown body".into())
            ),
            crate::world::ExecutionStatus::Blocked => "blocked at contact".to_string(),
        };
        let effect = if signal.is_turn() {
            format!("turned {:.0} deg", result.turned_deg)
        } else {
            format!("traveled {:.0} mm", result.traveled_mm)
        };
        let justification = record
            .justifications
            .get(i)
            .map(String::as_str)
            .unwrap_or("");
        out.push_str(&format!(
            "  {}. {} -> {status}, {effect}. Justification: {justification}\n",
            i + 1,
            signal.describe()
        ));
    }
    if record.signals_with_results.is_empty() {
        out.push_str("  (no signals executed)\n");
    }
    out
}

/// Trailer line of the exported log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LogTrailer {
    trial_id: String,
    seed: u64,
    scenario: ScenarioKind,
    secured: bool,
    attacked: bool,
    outcome: TrialOutcome,
    steps_taken: u32,
    injections: Vec<InjectionEvent>,
    collision: Option<CollisionNote>,
    mission_failed_at: Option<u32>,
    world_config: WorldConfig,
    safety_params: SafetyParams,
    #[serde(default)]
    system_prompt_text: String,
}

/// Serialize a finalized log as JSON lines: one step record per line, then a
/// trailer with the outcome and config snapshot. Byte-stable for equal logs.
pub fn export_log_string(log: &TrialLog) -> Result<String, LogIoError> {
    let outcome = log.outcome.ok_or(LogIoError::NotFinalized)?;
    let mut out = String::new();
    for record in &log.records {
        out.push_str(&serde_json::to_string(record).expect("record serialization cannot fail"));
        out.push('\n');
    }
    let trailer = LogTrailer {
        trial_id: log.trial_id.clone(),
        seed: log.seed,
        scenario: log.scenario,
        secured: log.secured,
        attacked: log.attacked,
        outcome,
        steps_taken: log.steps_taken,
        injections: log.injections.clone(),
        collision: log.collision,
        mission_failed_at: log.mission_failed_at,
        world_config: log.world_config.clone(),
        safety_params: log.safety_params.clone(),
        system_prompt_text: log.system_prompt_text.clone(),
    };
    out.push_str(&serde_json::to_string(&trailer).expect("trailer serialization cannot fail"));
    out.push('\n');
    Ok(out)
}

/// Write a finalized log to disk.
pub fn export_log(log: &TrialLog, path: &Path) -> Result<(), LogIoError> {
    let text = export_log_string(log)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

/// Reconstruct a log from its JSON-lines form.
pub fn import_log_string(text: &str) -> Result<TrialLog, LogIoError> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let (&trailer_line, record_lines) = lines.split_last().ok_or(LogIoError::MissingTrailer)?;
    let mut records = Vec::with_capacity(record_lines.len());
    for (i, line) in record_lines.iter().enumerate() {
        let record: StepRecord = serde_json::from_str(line).map_err(|e| LogIoError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    let trailer: LogTrailer =
        serde_json::from_str(trailer_line).map_err(|e| LogIoError::Parse {
            line: lines.len(),
            message: e.to_string(),
        })?;
    Ok(TrialLog {
        trial_id: trailer.trial_id,
        seed: trailer.seed,
        scenario: trailer.scenario,
        secured: trailer.secured,
        attacked: trailer.attacked,
        world_config: trailer.world_config,
        safety_params: trailer.safety_params,
        records,
        outcome: Some(trailer.outcome),
        steps_taken: trailer.steps_taken,
        injections: trailer.injections,
        collision: trailer.collision,
        mission_failed_at: trailer.mission_failed_at,
        system_prompt_text: trailer.system_prompt_text,
    })
}

/// Read a log file exported by [`export_log`].
pub fn import_log(path: &Path) -> Result<TrialLog, LogIoError> {
    import_log_string(&std::fs::read_to_string(path)?)
}
