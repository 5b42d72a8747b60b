//! Session execution shared by the CLI and the HTTP API.

use oculab_core::geometry::GazeSample;
use oculab_core::metrics::{evaluate, ExamReport, MetricsError, Thresholds};
use oculab_core::protocol::{ExamConfig, ExamState, ProtocolError, RawTestOutput, SampleRecord, Step, TrialEvent};
use oculab_core::simulator::{run_closed_loop_with, SimulatorError, SubjectParams};
use oculab_core::store::{SessionRecord, StoreError};
use serde::{Deserialize, Serialize};

use crate::runspec::{RunSpec, SpecError};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub raw: RawTestOutput,
    pub report: ExamReport,
}

/// One consumed sample as seen by a stream client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamItem {
    pub index: u64,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<SampleRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<TrialEvent>,
}

impl StreamItem {
    pub fn new(index: u64, sample: &GazeSample, step: &Step) -> Self {
        Self { index, t: sample.t, record: step.record, events: step.events.clone() }
    }
}

pub fn simulate(spec: &RunSpec) -> Result<Outcome, RunError> {
    simulate_observed(spec, |_, _| {})
}

/// Simulates a session, handing every sample and protocol step to `observe`
/// as it happens.
pub fn simulate_observed<F>(spec: &RunSpec, observe: F) -> Result<Outcome, RunError>
where
    F: FnMut(&GazeSample, &Step),
{
    let raw = run_closed_loop_with(&spec.config, &spec.subject, observe)?;
    let report = evaluate(&raw, &spec.thresholds)?;
    Ok(Outcome { raw, report })
}

/// Scores a recorded stream against a test configuration.
pub fn analyze_samples(cfg: &ExamConfig, thresholds: &Thresholds, samples: &[GazeSample]) -> Result<Outcome, RunError> {
    replay_observed(cfg, thresholds, samples, |_, _| {})
}

/// Replays a recorded stream, handing every sample and protocol step to
/// `observe`. A stream that stops before the configured duration is closed at
/// its last sample.
pub fn replay_observed<F>(
    cfg: &ExamConfig,
    thresholds: &Thresholds,
    samples: &[GazeSample],
    mut observe: F,
) -> Result<Outcome, RunError>
where
    F: FnMut(&GazeSample, &Step),
{
    thresholds.validate()?;
    if samples.is_empty() {
        return Err(MetricsError::EmptyInput("samples").into());
    }
    let mut state = ExamState::new(cfg.clone())?;
    for s in samples {
        let step = state.advance(s)?;
        observe(s, &step);
        if state.is_finished() {
            break;
        }
    }
    state.end_of_stream();
    let raw = state.finalize()?;
    let report = evaluate(&raw, thresholds)?;
    Ok(Outcome { raw, report })
}

/// Rebuilds the per-sample stream of a stored session by replaying it.
pub fn replay_stream(cfg: &ExamConfig, samples: &[GazeSample]) -> Result<Vec<StreamItem>, RunError> {
    let mut state = ExamState::new(cfg.clone())?;
    let mut items = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let step = state.advance(s)?;
        items.push(StreamItem::new(i as u64, s, &step));
        if state.is_finished() {
            break;
        }
    }
    if !state.is_finished() {
        let before = state.events().len();
        state.end_of_stream();
        let events = state.events()[before..].to_vec();
        if !events.is_empty() {
            items.push(StreamItem { index: items.len() as u64, t: state.clock(), record: None, events });
        }
    }
    Ok(items)
}

pub fn session_record(
    session_id: String,
    patient_id: &str,
    started_at: &str,
    thresholds: &Thresholds,
    subject: Option<&SubjectParams>,
    outcome: &Outcome,
) -> SessionRecord {
    SessionRecord {
        samples_file: SessionRecord::samples_file_for(&session_id),
        session_id,
        patient_id: patient_id.to_string(),
        started_at: started_at.to_string(),
        config: outcome.raw.config.clone(),
        thresholds: thresholds.clone(),
        subject: subject.cloned(),
        report: outcome.report.clone(),
        events: outcome.raw.events.clone(),
    }
}
