//! Closed-loop synthetic subject.
//!
//! The subject watches the protocol's current stimulus and answers with a
//! [`GazeSample`] per tick, so every pipeline can run without a headset.
//! Behaviour is deliberately simple and analytically checkable: reaction time
//! plus constant-speed saccades, gain-and-lag pursuit with catch-up saccades,
//! and a gain-scaled vestibulo-ocular reflex. None of the preset numbers are
//! clinical norms.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, direction_from_yaw, Direction3, GazeRay, GazeSample, Vec3};
use crate::protocol::{self, ExamConfig, ExamState, ProtocolError, RawTestOutput, Step, Stimulus, TestKind};

/// Catch-up saccades stop once the pursuit error falls below this.
pub const CATCHUP_EXIT_DEG: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulatorError {
    #[error("invalid subject parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

fn default_ipd() -> f64 {
    0.063
}

fn default_pupil() -> f64 {
    3.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectParams {
    pub saccade_latency_mean_s: f64,
    pub saccade_latency_sd_s: f64,
    /// Constant saccade flight speed, deg/s.
    pub saccade_speed_dps: f64,
    pub pursuit_gain: f64,
    pub pursuit_lag_s: f64,
    pub catchup_threshold_deg: f64,
    pub vor_gain: f64,
    pub head_amp_deg: f64,
    pub head_freq_hz: f64,
    /// Per-eye, per-sample Gaussian yaw noise.
    pub noise_sd_deg: f64,
    /// Interpupillary distance in meters.
    #[serde(default = "default_ipd")]
    pub ipd_m: f64,
    #[serde(default = "default_pupil")]
    pub pupil_diameter_mm: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Normal,
    Abnormal,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(Preset::Normal),
            "abnormal" => Ok(Preset::Abnormal),
            other => Err(format!("unknown preset {other:?} (expected normal or abnormal)")),
        }
    }
}

impl Preset {
    pub fn params(self, seed: u64) -> SubjectParams {
        match self {
            Preset::Normal => SubjectParams {
                saccade_latency_mean_s: 0.20,
                saccade_latency_sd_s: 0.03,
                saccade_speed_dps: 400.0,
                pursuit_gain: 0.95,
                pursuit_lag_s: 0.10,
                catchup_threshold_deg: 3.0,
                vor_gain: 0.95,
                head_amp_deg: 20.0,
                head_freq_hz: 1.0,
                noise_sd_deg: 0.1,
                ipd_m: default_ipd(),
                pupil_diameter_mm: default_pupil(),
                seed,
            },
            Preset::Abnormal => SubjectParams {
                saccade_latency_mean_s: 0.35,
                saccade_latency_sd_s: 0.05,
                saccade_speed_dps: 400.0,
                pursuit_gain: 0.70,
                pursuit_lag_s: 0.20,
                catchup_threshold_deg: 5.0,
                vor_gain: 0.60,
                head_amp_deg: 20.0,
                head_freq_hz: 1.0,
                noise_sd_deg: 0.2,
                ipd_m: default_ipd(),
                pupil_diameter_mm: default_pupil(),
                seed,
            },
        }
    }
}

impl SubjectParams {
    pub fn violations(&self) -> Vec<String> {
        let mut bad = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                bad.push(msg);
            }
        };
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        let pos = |v: f64| v > 0.0 && v.is_finite();
        check(nonneg(self.saccade_latency_mean_s), format!("saccade_latency_mean_s must be >= 0 (got {})", self.saccade_latency_mean_s));
        check(nonneg(self.saccade_latency_sd_s), format!("saccade_latency_sd_s must be >= 0 (got {})", self.saccade_latency_sd_s));
        check(pos(self.saccade_speed_dps), format!("saccade_speed_dps must be > 0 (got {})", self.saccade_speed_dps));
        check(
            self.pursuit_gain > 0.0 && self.pursuit_gain <= 1.0,
            format!("pursuit_gain must lie in (0, 1] (got {})", self.pursuit_gain),
        );
        check(nonneg(self.pursuit_lag_s), format!("pursuit_lag_s must be >= 0 (got {})", self.pursuit_lag_s));
        check(self.catchup_threshold_deg > 0.0, format!("catchup_threshold_deg must be > 0 (got {})", self.catchup_threshold_deg));
        check(
            (0.0..=1.5).contains(&self.vor_gain),
            format!("vor_gain must lie in [0, 1.5] (got {})", self.vor_gain),
        );
        check(pos(self.head_amp_deg), format!("head_amp_deg must be > 0 (got {})", self.head_amp_deg));
        check(pos(self.head_freq_hz), format!("head_freq_hz must be > 0 (got {})", self.head_freq_hz));
        check(nonneg(self.noise_sd_deg), format!("noise_sd_deg must be >= 0 (got {})", self.noise_sd_deg));
        check(nonneg(self.ipd_m), format!("ipd_m must be >= 0 (got {})", self.ipd_m));
        check(nonneg(self.pupil_diameter_mm), format!("pupil_diameter_mm must be >= 0 (got {})", self.pupil_diameter_mm));
        bad
    }

    pub fn validate(&self) -> Result<(), SimulatorError> {
        let bad = self.violations();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(SimulatorError::InvalidParams(bad))
        }
    }
}

/// Yaw reached `dt` seconds into a constant-speed saccade, clamped at `to`.
pub fn saccade_yaw(from: f64, to: f64, dt: f64, speed_dps: f64) -> f64 {
    let travel = speed_dps * dt.max(0.0);
    let span = to - from;
    if travel >= span.abs() {
        to
    } else {
        from + travel.copysign(span)
    }
}

/// Smooth-pursuit eye position for a (lag-delayed) target position.
pub fn pursuit_yaw(delayed_target_yaw: f64, gain: f64) -> f64 {
    gain * delayed_target_yaw
}

/// Eye rotation relative to the head that counters a head turn.
pub fn vor_eye_in_head(head_yaw: f64, vor_gain: f64) -> f64 {
    -vor_gain * head_yaw
}

pub fn head_yaw_at(t: f64, amp_deg: f64, freq_hz: f64) -> f64 {
    amp_deg * (2.0 * PI * freq_hz * t).sin()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Flight {
    from: f64,
    to: f64,
    start: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Planned {
    to: f64,
    start: f64,
}

/// Stateful synthetic observer.
#[derive(Debug, Clone)]
pub struct SyntheticSubject {
    params: SubjectParams,
    rng: ChaCha8Rng,
    latency: Normal<f64>,
    noise: Normal<f64>,
    rest_yaw: f64,
    seen: Option<(f64, f64)>,
    planned: Option<Planned>,
    flight: Option<Flight>,
    offset: f64,
    catching_up: bool,
    last_t: Option<f64>,
}

impl SyntheticSubject {
    pub fn new(params: SubjectParams) -> Result<Self, SimulatorError> {
        params.validate()?;
        let latency = Normal::new(params.saccade_latency_mean_s, params.saccade_latency_sd_s)
            .map_err(|e| SimulatorError::InvalidParams(vec![e.to_string()]))?;
        let noise = Normal::new(0.0, params.noise_sd_deg)
            .map_err(|e| SimulatorError::InvalidParams(vec![e.to_string()]))?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            params,
            latency,
            noise,
            rest_yaw: 0.0,
            seen: None,
            planned: None,
            flight: None,
            offset: 0.0,
            catching_up: false,
            last_t: None,
        })
    }

    pub fn params(&self) -> &SubjectParams {
        &self.params
    }

    /// Reaction time, Gaussian truncated at zero by redrawing.
    fn draw_latency(&mut self) -> f64 {
        for _ in 0..64 {
            let l = self.latency.sample(&mut self.rng);
            if l >= 0.0 {
                return l;
            }
        }
        0.0
    }

    fn position_at(&self, t: f64) -> f64 {
        match self.flight {
            Some(f) => saccade_yaw(f.from, f.to, t - f.start, self.params.saccade_speed_dps),
            None => self.rest_yaw,
        }
    }

    fn fixation_yaw(&mut self, t: f64, yaw: f64, since: f64) -> f64 {
        if self.seen != Some((yaw, since)) {
            self.seen = Some((yaw, since));
            let latency = self.draw_latency();
            self.planned = Some(Planned { to: yaw, start: since + latency });
        }
        if let Some(p) = self.planned {
            if t >= p.start {
                let from = self.position_at(p.start);
                self.flight = Some(Flight { from, to: p.to, start: p.start });
                self.planned = None;
            }
        }
        let g = self.position_at(t);
        if let Some(f) = self.flight {
            if g == f.to {
                self.rest_yaw = f.to;
                self.flight = None;
            }
        }
        g
    }

    fn pursuit_gaze_yaw(&mut self, t: f64, cfg: &ExamConfig) -> f64 {
        let p = &self.params;
        let dt = self.last_t.map_or(0.0, |last| t - last);
        let target_now = protocol::pursuit_target_yaw(t, cfg);
        let delayed = protocol::pursuit_target_yaw((t - p.pursuit_lag_s).max(0.0), cfg);
        let smooth = pursuit_yaw(delayed, p.pursuit_gain);
        let err = target_now - (smooth + self.offset);
        if self.catching_up || err.abs() > p.catchup_threshold_deg {
            self.catching_up = true;
            self.offset += saccade_yaw(0.0, err, dt, p.saccade_speed_dps);
            if (target_now - (smooth + self.offset)).abs() < CATCHUP_EXIT_DEG {
                self.catching_up = false;
            }
        }
        smooth + self.offset
    }

    /// World-frame gaze yaw and head yaw for the current tick.
    fn gaze_and_head(&mut self, t: f64, stimulus: Stimulus, cfg: &ExamConfig) -> (f64, f64) {
        match (cfg.test_kind, stimulus) {
            (TestKind::Vor, Stimulus::Fixed { yaw, .. }) => {
                let head = head_yaw_at(t, self.params.head_amp_deg, self.params.head_freq_hz);
                (yaw + head + vor_eye_in_head(head, self.params.vor_gain), head)
            }
            (_, Stimulus::Fixed { yaw, since }) => (self.fixation_yaw(t, yaw, since), 0.0),
            (_, Stimulus::Moving) => (self.pursuit_gaze_yaw(t, cfg), 0.0),
        }
    }

    fn eye_ray(&mut self, origin: Vec3, point: Vec3) -> Result<GazeRay, SimulatorError> {
        let toward = Direction3::normalize(point - origin).map_err(ProtocolError::from)?;
        let dir = if self.params.noise_sd_deg > 0.0 {
            let yaw = geometry::yaw_of(toward).map_err(ProtocolError::from)?;
            direction_from_yaw(yaw + self.noise.sample(&mut self.rng))
        } else {
            toward
        };
        Ok(GazeRay::new(origin, dir))
    }

    /// Produces the sample for time `t` given what the protocol is showing.
    pub fn sample(
        &mut self,
        t: f64,
        stimulus: Stimulus,
        cfg: &ExamConfig,
    ) -> Result<GazeSample, SimulatorError> {
        let (gaze_yaw, head_yaw) = self.gaze_and_head(t, stimulus, cfg);
        self.last_t = Some(t);
        let point = Vec3::on_arc(gaze_yaw, cfg.target_distance_m);
        let half_ipd = 0.5 * self.params.ipd_m;
        let left = self.eye_ray(Vec3::on_arc(head_yaw - 90.0, half_ipd), point)?;
        let right = self.eye_ray(Vec3::on_arc(head_yaw + 90.0, half_ipd), point)?;
        Ok(GazeSample {
            t,
            left,
            right,
            pupil_diameter_left: self.params.pupil_diameter_mm,
            pupil_diameter_right: self.params.pupil_diameter_mm,
            eye_openness_left: 1.0,
            eye_openness_right: 1.0,
            head_yaw,
        })
    }
}

/// Steps a full session, calling `observe` with every sample and the
/// protocol's response to it.
pub fn run_closed_loop_with<F>(
    cfg: &ExamConfig,
    subject: &SubjectParams,
    mut observe: F,
) -> Result<RawTestOutput, SimulatorError>
where
    F: FnMut(&GazeSample, &Step),
{
    let mut state = ExamState::new(cfg.clone())?;
    let mut subj = SyntheticSubject::new(subject.clone())?;
    let rate = cfg.sample_rate_hz;
    let mut k: u64 = 0;
    while !state.is_finished() {
        let t = k as f64 / rate;
        let s = subj.sample(t, state.stimulus(), cfg)?;
        let step = state.advance(&s)?;
        observe(&s, &step);
        k += 1;
    }
    Ok(state.finalize()?)
}

pub fn run_closed_loop(cfg: &ExamConfig, subject: &SubjectParams) -> Result<RawTestOutput, SimulatorError> {
    run_closed_loop_with(cfg, subject, |_, _| {})
}
