//! The three examination tests as sample-driven state machines.
//!
//! A session is created from an [`ExamConfig`], fed [`GazeSample`]s in time
//! order through [`ExamState::advance`], and turned into a [`RawTestOutput`]
//! once the configured duration has elapsed.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, GazeRay, GazeSample, GeometryError, TargetSphere};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("invalid exam configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("sample at t={got} does not follow t={last}")]
    StreamOrder { last: f64, got: f64 },
    #[error("session already finished")]
    Finished,
    #[error("session is not finished")]
    Incomplete,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TestKind {
    SaccadeLatency,
    SmoothPursuit,
    Vor,
}

impl TestKind {
    pub const ALL: [TestKind; 3] = [TestKind::SaccadeLatency, TestKind::SmoothPursuit, TestKind::Vor];

    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::SaccadeLatency => "SACCADE_LATENCY",
            TestKind::SmoothPursuit => "SMOOTH_PURSUIT",
            TestKind::Vor => "VOR",
        }
    }
}

impl std::fmt::Display for TestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-test settings chosen before a session starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExamConfig {
    pub test_kind: TestKind,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    /// Test 1: angle between the centre and each peripheral focus object.
    pub eccentricity_deg: f64,
    /// Test 2: full peak-to-peak angle of travel.
    pub travel_deg: f64,
    pub period_s: f64,
    pub isi_min_s: f64,
    pub isi_max_s: f64,
    pub trial_timeout_s: f64,
    pub target_radius_m: f64,
    pub target_distance_m: f64,
    pub seed: u64,
    /// Test 1: abort the pending stimulus if gaze leaves the centre during the delay.
    #[serde(default)]
    pub require_hold: bool,
    /// Test 1: continuous time on the centre object required to trigger a trial.
    #[serde(default)]
    pub dwell_s: f64,
}

impl ExamConfig {
    pub const MIN_SAMPLE_RATE_HZ: f64 = 60.0;
    pub const MAX_SAMPLE_RATE_HZ: f64 = 120.0;

    pub fn new(test_kind: TestKind) -> Self {
        let duration_s = match test_kind {
            TestKind::SaccadeLatency => 60.0,
            TestKind::SmoothPursuit | TestKind::Vor => 20.0,
        };
        Self {
            test_kind,
            duration_s,
            sample_rate_hz: 120.0,
            eccentricity_deg: 15.0,
            travel_deg: 20.0,
            period_s: 2.5,
            isi_min_s: 2.0,
            isi_max_s: 5.0,
            trial_timeout_s: 5.0,
            target_radius_m: 0.1,
            target_distance_m: 2.0,
            seed: 0,
            require_hold: false,
            dwell_s: 0.0,
        }
    }

    /// Every violated constraint, by field name.
    pub fn violations(&self) -> Vec<String> {
        let mut bad = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                bad.push(format!("{name} must be a positive finite number (got {v})"));
            }
        };
        positive("duration_s", self.duration_s);
        positive("eccentricity_deg", self.eccentricity_deg);
        positive("travel_deg", self.travel_deg);
        positive("period_s", self.period_s);
        positive("isi_min_s", self.isi_min_s);
        positive("isi_max_s", self.isi_max_s);
        positive("trial_timeout_s", self.trial_timeout_s);
        positive("target_radius_m", self.target_radius_m);
        positive("target_distance_m", self.target_distance_m);
        if !(Self::MIN_SAMPLE_RATE_HZ..=Self::MAX_SAMPLE_RATE_HZ).contains(&self.sample_rate_hz) {
            bad.push(format!(
                "sample_rate_hz must lie in [{}, {}] (got {})",
                Self::MIN_SAMPLE_RATE_HZ,
                Self::MAX_SAMPLE_RATE_HZ,
                self.sample_rate_hz
            ));
        }
        if self.isi_min_s > self.isi_max_s {
            bad.push(format!(
                "isi_min_s ({}) must not exceed isi_max_s ({})",
                self.isi_min_s, self.isi_max_s
            ));
        }
        if self.eccentricity_deg >= 180.0 {
            bad.push(format!("eccentricity_deg must be below 180 (got {})", self.eccentricity_deg));
        }
        if self.travel_deg >= 360.0 {
            bad.push(format!("travel_deg must be below 360 (got {})", self.travel_deg));
        }
        if self.target_radius_m >= self.target_distance_m {
            bad.push("target_radius_m must be smaller than target_distance_m".to_string());
        }
        if !(self.dwell_s >= 0.0 && self.dwell_s.is_finite()) {
            bad.push(format!("dwell_s must be >= 0 (got {})", self.dwell_s));
        }
        bad
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = self.violations();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ProtocolError::InvalidConfig(bad))
        }
    }

    pub fn sample_period_s(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    pub fn target_at(&self, yaw_deg: f64) -> Result<TargetSphere, GeometryError> {
        TargetSphere::on_arc(yaw_deg, self.target_distance_m, self.target_radius_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    AwaitCenter,
    Delay,
    Stimulus,
    Running,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Side {
    Left,
    Right,
    None,
}

impl Side {
    /// Signed multiplier on the eccentricity: left of centre is negative yaw.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
            Side::None => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    CenterFixated,
    StimulusOn,
    StimulusHit,
    TrialTimeout,
    /// Consecutive samples further apart than three sample periods.
    SampleGap,
    SessionEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialEvent {
    pub kind: EventKind,
    pub t: f64,
    pub side: Side,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_s: Option<f64>,
}

impl TrialEvent {
    fn at(kind: EventKind, t: f64) -> Self {
        Self { kind, t, side: Side::None, latency_s: None }
    }
}

/// Per-sample derived angles, all in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub t: f64,
    pub target_yaw: f64,
    /// Signed yaw of the cyclopean gaze ray.
    pub gaze_yaw: f64,
    pub error_left: f64,
    pub error_right: f64,
    pub error_cyclopean: f64,
    pub head_yaw: f64,
}

/// What the subject is being shown at the current instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stimulus {
    /// A stationary focus object that became the active target at `since`.
    Fixed { yaw: f64, since: f64 },
    /// The pursuit target following [`pursuit_target_yaw`].
    Moving,
}

/// Everything produced by one consumed sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Step {
    pub events: Vec<TrialEvent>,
    pub record: Option<SampleRecord>,
}

/// Finished session bundle handed to metrics and persistence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTestOutput {
    pub config: ExamConfig,
    pub events: Vec<TrialEvent>,
    pub records: Vec<SampleRecord>,
    /// Every consumed sample, including the one that ended the session.
    pub samples: Vec<GazeSample>,
}

/// Running state of one examination session.
#[derive(Debug, Clone, PartialEq)]
pub struct ExamState {
    cfg: ExamConfig,
    phase: Phase,
    clock: f64,
    last_t: Option<f64>,
    rng: ChaCha8Rng,
    side: Side,
    center_since: f64,
    dwell_start: Option<f64>,
    fixated_at: f64,
    onset_due: f64,
    stimulus_on_at: f64,
    events: Vec<TrialEvent>,
    records: Vec<SampleRecord>,
    samples: Vec<GazeSample>,
    finished: bool,
}

pub fn pursuit_target_yaw(t: f64, cfg: &ExamConfig) -> f64 {
    0.5 * cfg.travel_deg * (2.0 * PI * t / cfg.period_s).sin()
}

/// Inter-stimulus interval, uniform on `[min_s, max_s]`.
pub fn draw_isi<R: Rng + ?Sized>(rng: &mut R, min_s: f64, max_s: f64) -> f64 {
    rng.random_range(min_s..=max_s)
}

pub fn draw_side<R: Rng + ?Sized>(rng: &mut R) -> Side {
    if rng.random_bool(0.5) {
        Side::Left
    } else {
        Side::Right
    }
}

impl ExamState {
    pub fn new(cfg: ExamConfig) -> Result<Self, ProtocolError> {
        cfg.validate()?;
        let phase = match cfg.test_kind {
            TestKind::SaccadeLatency => Phase::AwaitCenter,
            TestKind::SmoothPursuit | TestKind::Vor => Phase::Running,
        };
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            cfg,
            phase,
            clock: 0.0,
            last_t: None,
            rng,
            side: Side::None,
            center_since: 0.0,
            dwell_start: None,
            fixated_at: 0.0,
            onset_due: 0.0,
            stimulus_on_at: 0.0,
            events: Vec::new(),
            records: Vec::new(),
            samples: Vec::new(),
            finished: false,
        })
    }

    pub fn config(&self) -> &ExamConfig {
        &self.cfg
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn events(&self) -> &[TrialEvent] {
        &self.events
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    /// Side of the peripheral object for the pending or shown trial.
    pub fn stimulus_side(&self) -> Side {
        self.side
    }

    pub fn stimulus(&self) -> Stimulus {
        match self.cfg.test_kind {
            TestKind::SmoothPursuit => Stimulus::Moving,
            TestKind::Vor => Stimulus::Fixed { yaw: 0.0, since: 0.0 },
            TestKind::SaccadeLatency => match self.phase {
                Phase::Stimulus => Stimulus::Fixed {
                    yaw: self.peripheral_yaw(),
                    since: self.stimulus_on_at,
                },
                _ => Stimulus::Fixed { yaw: 0.0, since: self.center_since },
            },
        }
    }

    /// Yaw of the object the subject should be looking at, at time `t`.
    pub fn target_yaw_at(&self, t: f64) -> f64 {
        match self.stimulus() {
            Stimulus::Fixed { yaw, .. } => yaw,
            Stimulus::Moving => pursuit_target_yaw(t, &self.cfg),
        }
    }

    fn peripheral_yaw(&self) -> f64 {
        self.side.sign() * self.cfg.eccentricity_deg
    }

    /// Consumes one sample.
    pub fn advance(&mut self, s: &GazeSample) -> Result<Step, ProtocolError> {
        if self.finished {
            return Err(ProtocolError::Finished);
        }
        if !s.t.is_finite() || s.t < 0.0 {
            return Err(ProtocolError::StreamOrder { last: self.clock, got: s.t });
        }
        if let Some(last) = self.last_t {
            if s.t <= last {
                return Err(ProtocolError::StreamOrder { last, got: s.t });
            }
        }

        let mut step = Step::default();
        if let Some(last) = self.last_t {
            if s.t - last > 3.0 * self.cfg.sample_period_s() + 1e-9 {
                step.events.push(TrialEvent::at(EventKind::SampleGap, s.t));
            }
        }
        self.last_t = Some(s.t);
        self.clock = s.t;

        if s.t >= self.cfg.duration_s {
            step.events.push(TrialEvent::at(EventKind::SessionEnd, s.t));
            self.finished = true;
            self.events.extend_from_slice(&step.events);
            self.samples.push(*s);
            return Ok(step);
        }

        let target_yaw = self.target_yaw_at(s.t);
        let target = self.cfg.target_at(target_yaw)?;
        let cyc = geometry::cyclopean(s)?;
        let record = SampleRecord {
            t: s.t,
            target_yaw,
            gaze_yaw: geometry::yaw_of(cyc.dir)?,
            error_left: geometry::angular_error(&s.left, &target)?,
            error_right: geometry::angular_error(&s.right, &target)?,
            error_cyclopean: geometry::angular_error(&cyc, &target)?,
            head_yaw: s.head_yaw,
        };

        if self.cfg.test_kind == TestKind::SaccadeLatency {
            self.step_saccade_trial(s.t, &cyc, &mut step.events)?;
        }

        self.events.extend_from_slice(&step.events);
        self.records.push(record);
        self.samples.push(*s);
        step.record = Some(record);
        Ok(step)
    }

    fn step_saccade_trial(
        &mut self,
        t: f64,
        gaze: &GazeRay,
        out: &mut Vec<TrialEvent>,
    ) -> Result<(), ProtocolError> {
        let center = self.cfg.target_at(0.0)?;
        match self.phase {
            Phase::AwaitCenter => {
                if geometry::hit_test(gaze, &center)? {
                    let since = *self.dwell_start.get_or_insert(t);
                    if t - since >= self.cfg.dwell_s {
                        self.dwell_start = None;
                        let isi = draw_isi(&mut self.rng, self.cfg.isi_min_s, self.cfg.isi_max_s);
                        self.side = draw_side(&mut self.rng);
                        self.fixated_at = t;
                        self.onset_due = t + isi;
                        self.phase = Phase::Delay;
                        out.push(TrialEvent::at(EventKind::CenterFixated, t));
                    }
                } else {
                    self.dwell_start = None;
                }
            }
            Phase::Delay => {
                if self.cfg.require_hold && !geometry::hit_test(gaze, &center)? {
                    self.phase = Phase::AwaitCenter;
                    self.side = Side::None;
                } else if t >= self.onset_due {
                    self.stimulus_on_at = t;
                    self.phase = Phase::Stimulus;
                    out.push(TrialEvent { side: self.side, ..TrialEvent::at(EventKind::StimulusOn, t) });
                }
            }
            Phase::Stimulus => {
                let elapsed = t - self.stimulus_on_at;
                let target = self.cfg.target_at(self.peripheral_yaw())?;
                if elapsed <= self.cfg.trial_timeout_s && geometry::hit_test(gaze, &target)? {
                    out.push(TrialEvent {
                        side: self.side,
                        latency_s: Some(elapsed),
                        ..TrialEvent::at(EventKind::StimulusHit, t)
                    });
                    self.end_trial(t);
                } else if elapsed >= self.cfg.trial_timeout_s {
                    out.push(TrialEvent { side: self.side, ..TrialEvent::at(EventKind::TrialTimeout, t) });
                    self.end_trial(t);
                }
            }
            Phase::Running => {}
        }
        Ok(())
    }

    fn end_trial(&mut self, t: f64) {
        self.phase = Phase::AwaitCenter;
        self.side = Side::None;
        self.center_since = t;
    }

    /// Closes a session whose input ran out before the configured duration.
    pub fn end_of_stream(&mut self) {
        if !self.finished {
            let t = self.clock;
            self.events.push(TrialEvent::at(EventKind::SessionEnd, t));
            self.finished = true;
        }
    }

    pub fn finalize(self) -> Result<RawTestOutput, ProtocolError> {
        if !self.finished {
            return Err(ProtocolError::Incomplete);
        }
        Ok(RawTestOutput {
            config: self.cfg,
            events: self.events,
            records: self.records,
            samples: self.samples,
        })
    }
}

/// Runs a recorded stream through a fresh session. Samples at or past the
/// configured duration end the session; a stream that stops early is closed
/// at its last timestamp.
pub fn replay<'a, I>(cfg: ExamConfig, samples: I) -> Result<RawTestOutput, ProtocolError>
where
    I: IntoIterator<Item = &'a GazeSample>,
{
    let mut state = ExamState::new(cfg)?;
    for s in samples {
        state.advance(s)?;
        if state.is_finished() {
            break;
        }
    }
    state.end_of_stream();
    state.finalize()
}
