//! Measurements derived from a finished session and normal/abnormal screening.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{EventKind, RawTestOutput, SampleRecord, TestKind, TrialEvent};

/// I-VT velocity threshold.
pub const DEFAULT_SACCADE_THRESHOLD_DPS: f64 = 30.0;
/// Cycle-counting hysteresis as a fraction of the observed head amplitude.
pub const HYSTERESIS_FRACTION: f64 = 0.25;
/// Half-width of the moving average applied to gaze before pursuit velocity.
const PURSUIT_SMOOTH_HALF: usize = 2;
const MIN_PURSUIT_DURATION_S: f64 = 2.0;
const MIN_PURSUIT_SAMPLES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no threshold configured for metric {0}")]
    MissingThreshold(&'static str),
    #[error("invalid thresholds: {}", .0.join("; "))]
    InvalidThresholds(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Flag {
    Normal,
    Abnormal,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub latencies_s: Vec<f64>,
    pub mean_s: Option<f64>,
    pub sd_s: Option<f64>,
    pub miss_count: u32,
}

/// One latency per `STIMULUS_HIT`; timeouts are misses and excluded.
pub fn latency_stats(events: &[TrialEvent]) -> LatencyStats {
    let latencies_s: Vec<f64> = events
        .iter()
        .filter(|e| e.kind == EventKind::StimulusHit)
        .filter_map(|e| e.latency_s)
        .collect();
    let miss_count = events.iter().filter(|e| e.kind == EventKind::TrialTimeout).count() as u32;
    let n = latencies_s.len();
    let mean_s = (n > 0).then(|| latencies_s.iter().sum::<f64>() / n as f64);
    let sd_s = match mean_s {
        Some(m) if n > 1 => {
            Some((latencies_s.iter().map(|l| (l - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt())
        }
        Some(_) => Some(0.0),
        None => None,
    };
    LatencyStats { latencies_s, mean_s, sd_s, miss_count }
}

fn rms(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Per-eye angular error over time, with summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionSeries {
    pub t: Vec<f64>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub cyclopean: Vec<f64>,
    pub rms_left: f64,
    pub rms_right: f64,
    pub rms_cyclopean: f64,
    pub mean_cyclopean: f64,
    pub max_cyclopean: f64,
}

pub fn precision_series(records: &[SampleRecord]) -> Result<PrecisionSeries, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput("no sample records"));
    }
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let left: Vec<f64> = records.iter().map(|r| r.error_left).collect();
    let right: Vec<f64> = records.iter().map(|r| r.error_right).collect();
    let cyclopean: Vec<f64> = records.iter().map(|r| r.error_cyclopean).collect();
    Ok(PrecisionSeries {
        rms_left: rms(&left),
        rms_right: rms(&right),
        rms_cyclopean: rms(&cyclopean),
        mean_cyclopean: cyclopean.iter().sum::<f64>() / cyclopean.len() as f64,
        max_cyclopean: cyclopean.iter().copied().fold(0.0, f64::max),
        t,
        left,
        right,
        cyclopean,
    })
}

/// Three-point running median; the end samples pass through.
pub fn median3(x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    for i in 1..x.len().saturating_sub(1) {
        let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
        out[i] = a.max(b).min(a.min(b).max(c));
    }
    out
}

/// Central differences inside, one-sided differences at the ends.
pub fn central_difference(x: &[f64], sample_rate_hz: f64) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| match i {
            0 => (x[1] - x[0]) * sample_rate_hz,
            i if i == n - 1 => (x[n - 1] - x[n - 2]) * sample_rate_hz,
            i => (x[i + 1] - x[i - 1]) * 0.5 * sample_rate_hz,
        })
        .collect()
}

/// Angular velocity (deg/s) after the 3-sample median prefilter.
pub fn velocity(x: &[f64], sample_rate_hz: f64) -> Vec<f64> {
    central_difference(&median3(x), sample_rate_hz)
}

fn moving_average(x: &[f64], half: usize) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            x[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaccadeSpan {
    /// Inclusive sample indices.
    pub start: usize,
    pub end: usize,
    pub start_t: f64,
    pub end_t: f64,
}

/// I-VT detection: maximal runs with |velocity| above the threshold, with runs
/// separated by a single sub-threshold sample merged.
pub fn detect_saccades(yaw: &[f64], sample_rate_hz: f64, threshold_dps: f64) -> Vec<SaccadeSpan> {
    if yaw.len() < 3 {
        return Vec::new();
    }
    let v = velocity(yaw, sample_rate_hz);
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut open: Option<usize> = None;
    for (i, vi) in v.iter().enumerate() {
        let fast = vi.abs() > threshold_dps;
        match (open, fast) {
            (None, true) => open = Some(i),
            (Some(s), false) => {
                runs.push((s, i - 1));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        runs.push((s, v.len() - 1));
    }
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(runs.len());
    for (s, e) in runs {
        match merged.last_mut() {
            Some(last) if s - last.1 - 1 < 2 => last.1 = e,
            _ => merged.push((s, e)),
        }
    }
    merged
        .into_iter()
        .map(|(start, end)| SaccadeSpan {
            start,
            end,
            start_t: start as f64 / sample_rate_hz,
            end_t: end as f64 / sample_rate_hz,
        })
        .collect()
}

fn slope_through_origin(x: &[f64], y: &[f64]) -> Option<f64> {
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if sxx <= 1e-12 * x.len().max(1) as f64 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Some(sxy / sxx)
}

/// Least-squares ratio of smoothed gaze velocity to target velocity over
/// non-saccadic samples. `Ok(None)` when no usable samples remain or the
/// target does not move.
pub fn pursuit_gain_est(records: &[SampleRecord], sample_rate_hz: f64) -> Result<Option<f64>, MetricsError> {
    let span = match (records.first(), records.last()) {
        (Some(a), Some(b)) => b.t - a.t + 1.0 / sample_rate_hz,
        _ => return Err(MetricsError::EmptyInput("no sample records")),
    };
    if span < MIN_PURSUIT_DURATION_S - 1e-9 {
        return Err(MetricsError::InsufficientData(format!(
            "pursuit gain needs {MIN_PURSUIT_DURATION_S} s of records, got {span:.3} s"
        )));
    }
    let gaze: Vec<f64> = records.iter().map(|r| r.gaze_yaw).collect();
    let target: Vec<f64> = records.iter().map(|r| r.target_yaw).collect();
    let n = gaze.len();

    let mut keep = vec![true; n];
    for s in detect_saccades(&gaze, sample_rate_hz, DEFAULT_SACCADE_THRESHOLD_DPS) {
        let lo = s.start.saturating_sub(PURSUIT_SMOOTH_HALF + 1);
        let hi = (s.end + PURSUIT_SMOOTH_HALF + 1).min(n - 1);
        keep[lo..=hi].iter_mut().for_each(|k| *k = false);
    }
    let edge = PURSUIT_SMOOTH_HALF + 1;
    let gaze_v = central_difference(&moving_average(&gaze, PURSUIT_SMOOTH_HALF), sample_rate_hz);
    let target_v = central_difference(&moving_average(&target, PURSUIT_SMOOTH_HALF), sample_rate_hz);
    let (tv, gv): (Vec<f64>, Vec<f64>) = (edge..n.saturating_sub(edge))
        .filter(|&i| keep[i])
        .map(|i| (target_v[i], gaze_v[i]))
        .unzip();
    if tv.len() < MIN_PURSUIT_SAMPLES {
        return Ok(None);
    }
    Ok(slope_through_origin(&tv, &gv))
}

/// Left/right head-rotation cycle count.
///
/// An excursion starts when the signal passes beyond `±hysteresis` on the side
/// opposite the previous excursion and ends when it comes back inside the
/// band. Every two completed excursions make one cycle.
pub fn vor_frequency(head_yaw: &[f64], duration_s: f64, hysteresis_deg: f64) -> Result<(u32, f64), MetricsError> {
    if head_yaw.is_empty() || !(duration_s > 0.0) {
        return Err(MetricsError::EmptyInput("head-yaw series spans no time"));
    }
    let side_of = |y: f64| {
        if y > hysteresis_deg {
            1i8
        } else if y < -hysteresis_deg {
            -1
        } else {
            0
        }
    };
    let mut last_done: i8 = 0;
    let mut current: i8 = 0;
    let mut completed = 0u32;
    for &y in head_yaw {
        let side = side_of(y);
        if current != 0 && side != current {
            completed += 1;
            last_done = current;
            current = 0;
        }
        if current == 0 && side != 0 && side != last_done {
            current = side;
        }
    }
    let cycles = completed / 2;
    Ok((cycles, cycles as f64 / duration_s))
}

/// Mean and peak absolute head angular speed (deg/s).
pub fn head_speed(head_yaw: &[f64], sample_rate_hz: f64) -> Result<(f64, f64), MetricsError> {
    if head_yaw.len() < 2 {
        return Err(MetricsError::EmptyInput("head-yaw series needs at least two samples"));
    }
    let v = velocity(head_yaw, sample_rate_hz);
    let mean = v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;
    let peak = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    Ok((mean, peak))
}

/// 1 minus the slope of world gaze yaw against head yaw: 1 for perfect
/// stabilisation, 0 when the eyes move with the head.
pub fn vor_gain_proxy(records: &[SampleRecord]) -> Option<f64> {
    let head: Vec<f64> = records.iter().map(|r| r.head_yaw).collect();
    let slip: Vec<f64> = records.iter().map(|r| r.gaze_yaw - r.target_yaw).collect();
    slope_through_origin(&head, &slip).map(|s| 1.0 - s)
}

/// Screening limits. Calibrated against the synthetic presets; not clinical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub max_latency_s: Option<f64>,
    pub max_precision_rms_deg: Option<f64>,
    pub min_pursuit_gain: Option<f64>,
    pub min_vor_gain_proxy: Option<f64>,
    pub min_head_freq_hz: Option<f64>,
    pub max_head_freq_hz: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            max_latency_s: Some(0.30),
            max_precision_rms_deg: Some(2.3),
            min_pursuit_gain: Some(0.72),
            min_vor_gain_proxy: Some(0.78),
            min_head_freq_hz: Some(0.25),
            max_head_freq_hz: Some(3.0),
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let fields = [
            ("max_latency_s", self.max_latency_s),
            ("max_precision_rms_deg", self.max_precision_rms_deg),
            ("min_pursuit_gain", self.min_pursuit_gain),
            ("min_vor_gain_proxy", self.min_vor_gain_proxy),
            ("min_head_freq_hz", self.min_head_freq_hz),
            ("max_head_freq_hz", self.max_head_freq_hz),
        ];
        let mut bad: Vec<String> = fields
            .iter()
            .filter_map(|(name, v)| match v {
                Some(x) if !(*x > 0.0 && x.is_finite()) => Some(format!("{name} must be positive (got {x})")),
                _ => None,
            })
            .collect();
        if let (Some(lo), Some(hi)) = (self.min_head_freq_hz, self.max_head_freq_hz) {
            if lo > hi {
                bad.push(format!("min_head_freq_hz ({lo}) exceeds max_head_freq_hz ({hi})"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(MetricsError::InvalidThresholds(bad))
        }
    }
}

/// Computed measurements for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamReport {
    pub test_kind: TestKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub latencies_s: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_mean_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_sd_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub miss_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision_rms_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision_mean_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision_max_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision_rms_left_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision_rms_right_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pursuit_gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vor_cycles: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vor_freq_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vor_gain_proxy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_speed_mean_dps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_speed_peak_dps: Option<f64>,
    #[serde(default)]
    pub flags: BTreeMap<String, Flag>,
    pub overall: Flag,
}

/// Every scalar metric name a report may carry, in schema order.
pub const METRIC_NAMES: &[&str] = &[
    "latency_mean_s",
    "latency_sd_s",
    "miss_count",
    "precision_rms_deg",
    "precision_mean_deg",
    "precision_max_deg",
    "precision_rms_left_deg",
    "precision_rms_right_deg",
    "pursuit_gain",
    "vor_cycles",
    "vor_freq_hz",
    "vor_gain_proxy",
    "head_speed_mean_dps",
    "head_speed_peak_dps",
];

impl ExamReport {
    /// Report with no metrics and an undetermined verdict.
    pub fn empty(test_kind: TestKind) -> Self {
        Self {
            test_kind,
            latencies_s: Vec::new(),
            latency_mean_s: None,
            latency_sd_s: None,
            miss_count: None,
            precision_rms_deg: None,
            precision_mean_deg: None,
            precision_max_deg: None,
            precision_rms_left_deg: None,
            precision_rms_right_deg: None,
            pursuit_gain: None,
            vor_cycles: None,
            vor_freq_hz: None,
            vor_gain_proxy: None,
            head_speed_mean_dps: None,
            head_speed_peak_dps: None,
            flags: BTreeMap::new(),
            overall: Flag::Undetermined,
        }
    }

    /// Scalar metric by name; `None` when absent from this report.
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "latency_mean_s" => self.latency_mean_s,
            "latency_sd_s" => self.latency_sd_s,
            "miss_count" => self.miss_count.map(f64::from),
            "precision_rms_deg" => self.precision_rms_deg,
            "precision_mean_deg" => self.precision_mean_deg,
            "precision_max_deg" => self.precision_max_deg,
            "precision_rms_left_deg" => self.precision_rms_left_deg,
            "precision_rms_right_deg" => self.precision_rms_right_deg,
            "pursuit_gain" => self.pursuit_gain,
            "vor_cycles" => self.vor_cycles.map(f64::from),
            "vor_freq_hz" => self.vor_freq_hz,
            "vor_gain_proxy" => self.vor_gain_proxy,
            "head_speed_mean_dps" => self.head_speed_mean_dps,
            "head_speed_peak_dps" => self.head_speed_peak_dps,
            _ => None,
        }
    }

    /// Metrics that the classifier screens for this kind of test.
    pub fn screened_metrics(&self) -> &'static [&'static str] {
        match self.test_kind {
            TestKind::SaccadeLatency => &["latency_mean_s"],
            TestKind::SmoothPursuit => &["precision_rms_deg", "pursuit_gain"],
            TestKind::Vor => &["precision_rms_deg", "vor_freq_hz", "vor_gain_proxy"],
        }
    }
}

/// Computes every metric the session's test defines. Flags are left for
/// [`classify`].
pub fn analyze(raw: &RawTestOutput) -> Result<ExamReport, MetricsError> {
    let cfg = &raw.config;
    let mut report = ExamReport::empty(cfg.test_kind);
    match cfg.test_kind {
        TestKind::SaccadeLatency => {
            let stats = latency_stats(&raw.events);
            report.latencies_s = stats.latencies_s;
            report.latency_mean_s = stats.mean_s;
            report.latency_sd_s = stats.sd_s;
            report.miss_count = Some(stats.miss_count);
        }
        TestKind::SmoothPursuit | TestKind::Vor => {
            let p = precision_series(&raw.records)?;
            report.precision_rms_deg = Some(p.rms_cyclopean);
            report.precision_mean_deg = Some(p.mean_cyclopean);
            report.precision_max_deg = Some(p.max_cyclopean);
            report.precision_rms_left_deg = Some(p.rms_left);
            report.precision_rms_right_deg = Some(p.rms_right);
            if cfg.test_kind == TestKind::SmoothPursuit {
                report.pursuit_gain = pursuit_gain_est(&raw.records, cfg.sample_rate_hz)?;
            } else {
                let head: Vec<f64> = raw.records.iter().map(|r| r.head_yaw).collect();
                let peak = head.iter().map(|h| h.abs()).fold(0.0, f64::max);
                let (cycles, hz) = if peak > 0.0 {
                    vor_frequency(&head, cfg.duration_s, HYSTERESIS_FRACTION * peak)?
                } else {
                    (0, 0.0)
                };
                let (mean, peak_speed) = head_speed(&head, cfg.sample_rate_hz)?;
                report.vor_cycles = Some(cycles);
                report.vor_freq_hz = Some(hz);
                report.vor_gain_proxy = vor_gain_proxy(&raw.records);
                report.head_speed_mean_dps = Some(mean);
                report.head_speed_peak_dps = Some(peak_speed);
            }
        }
    }
    Ok(report)
}

fn at_most(value: Option<f64>, limit: f64) -> Flag {
    match value {
        Some(v) if v <= limit => Flag::Normal,
        Some(_) => Flag::Abnormal,
        None => Flag::Undetermined,
    }
}

fn at_least(value: Option<f64>, limit: f64) -> Flag {
    match value {
        Some(v) if v >= limit => Flag::Normal,
        Some(_) => Flag::Abnormal,
        None => Flag::Undetermined,
    }
}

fn need(v: Option<f64>, name: &'static str) -> Result<f64, MetricsError> {
    v.ok_or(MetricsError::MissingThreshold(name))
}

/// Flags each screened metric and derives the overall verdict: any abnormal
/// metric makes the session abnormal, otherwise any undetermined metric makes
/// it undetermined.
pub fn classify(report: &ExamReport, thresholds: &Thresholds) -> Result<ExamReport, MetricsError> {
    thresholds.validate()?;
    let mut out = report.clone();
    out.flags.clear();
    for &name in report.screened_metrics() {
        let flag = match name {
            "latency_mean_s" => at_most(report.latency_mean_s, need(thresholds.max_latency_s, "max_latency_s")?),
            "precision_rms_deg" => at_most(
                report.precision_rms_deg,
                need(thresholds.max_precision_rms_deg, "max_precision_rms_deg")?,
            ),
            "pursuit_gain" => at_least(report.pursuit_gain, need(thresholds.min_pursuit_gain, "min_pursuit_gain")?),
            "vor_freq_hz" => {
                let lo = need(thresholds.min_head_freq_hz, "min_head_freq_hz")?;
                let hi = need(thresholds.max_head_freq_hz, "max_head_freq_hz")?;
                match report.vor_freq_hz {
                    Some(f) if (lo..=hi).contains(&f) => Flag::Normal,
                    _ => Flag::Undetermined,
                }
            }
            "vor_gain_proxy" => {
                let limit = need(thresholds.min_vor_gain_proxy, "min_vor_gain_proxy")?;
                if out.flags.get("vor_freq_hz") == Some(&Flag::Undetermined) {
                    // Head movement outside the valid band: no verdict on the reflex.
                    Flag::Undetermined
                } else {
                    at_least(report.vor_gain_proxy, limit)
                }
            }
            _ => unreachable!("unscreened metric {name}"),
        };
        out.flags.insert(name.to_string(), flag);
    }
    out.overall = overall(out.flags.values().copied());
    Ok(out)
}

pub fn overall<I: IntoIterator<Item = Flag>>(flags: I) -> Flag {
    let mut any = false;
    let mut undetermined = false;
    for f in flags {
        any = true;
        match f {
            Flag::Abnormal => return Flag::Abnormal,
            Flag::Undetermined => undetermined = true,
            Flag::Normal => {}
        }
    }
    if !any || undetermined {
        Flag::Undetermined
    } else {
        Flag::Normal
    }
}

/// [`analyze`] followed by [`classify`].
pub fn evaluate(raw: &RawTestOutput, thresholds: &Thresholds) -> Result<ExamReport, MetricsError> {
    classify(&analyze(raw)?, thresholds)
}
