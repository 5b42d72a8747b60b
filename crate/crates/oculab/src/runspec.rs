//! Run configuration: which test, which subject, which thresholds.
//!
//! Each section is a partial JSON object laid over defaults, so a config file
//! only needs the keys it changes:
//!
//! ```json
//! {
//!   "test": { "test_kind": "SMOOTH_PURSUIT", "duration_s": 30 },
//!   "subject": { "preset": "ABNORMAL", "noise_sd_deg": 0.3 },
//!   "thresholds": { "min_pursuit_gain": 0.7 }
//! }
//! ```

use std::path::Path;

use oculab_core::metrics::Thresholds;
use oculab_core::protocol::{ExamConfig, TestKind};
use oculab_core::simulator::{Preset, SubjectParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
#[error("{0}")]
pub struct SpecError(pub String);

type Object = Map<String, Value>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpecFile {
    #[serde(default)]
    pub test: Object,
    #[serde(default)]
    pub subject: Object,
    #[serde(default)]
    pub thresholds: Object,
}

/// Fully resolved, validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSpec {
    pub config: ExamConfig,
    pub subject: SubjectParams,
    pub thresholds: Thresholds,
}

/// Command-line style overrides that win over the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub test_kind: Option<TestKind>,
    pub preset: Option<Preset>,
    /// Seeds both the protocol and the subject.
    pub seed: Option<u64>,
    pub duration_s: Option<f64>,
}

fn overlay<T: Serialize + DeserializeOwned>(section: &str, base: T, patch: &Object) -> Result<T, SpecError> {
    let mut v = serde_json::to_value(base).expect("config types serialize");
    let obj = v.as_object_mut().expect("config types are objects");
    for (k, val) in patch {
        obj.insert(k.clone(), val.clone());
    }
    serde_json::from_value(v).map_err(|e| SpecError(format!("{section}: {e}")))
}

pub fn parse_test_kind(s: &str) -> Result<TestKind, SpecError> {
    let canon = s.trim().to_ascii_uppercase().replace('-', "_");
    match canon.as_str() {
        "SACCADE_LATENCY" | "SACCADE" | "1" => Ok(TestKind::SaccadeLatency),
        "SMOOTH_PURSUIT" | "PURSUIT" | "2" => Ok(TestKind::SmoothPursuit),
        "VOR" | "3" => Ok(TestKind::Vor),
        _ => Err(SpecError(format!(
            "unknown test {s:?}; expected one of SACCADE_LATENCY, SMOOTH_PURSUIT, VOR"
        ))),
    }
}

impl RunSpecFile {
    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|e| SpecError(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| SpecError(format!("{}: {e}", path.display())))
    }

    pub fn resolve_thresholds(&self) -> Result<Thresholds, SpecError> {
        let t = overlay("thresholds", Thresholds::default(), &self.thresholds)?;
        t.validate().map_err(|e| SpecError(e.to_string()))?;
        Ok(t)
    }

    pub fn resolve(&self, ov: Overrides) -> Result<RunSpec, SpecError> {
        let mut test = self.test.clone();
        let kind = match (ov.test_kind, test.remove("test_kind")) {
            (Some(k), _) => k,
            (None, Some(Value::String(s))) => parse_test_kind(&s)?,
            (None, Some(other)) => return Err(SpecError(format!("test.test_kind must be a string, got {other}"))),
            (None, None) => return Err(SpecError("no test kind given".into())),
        };
        let mut config = overlay("test", ExamConfig::new(kind), &test)?;
        if let Some(d) = ov.duration_s {
            config.duration_s = d;
        }

        let mut subject = self.subject.clone();
        let preset = match (ov.preset, subject.remove("preset")) {
            (Some(p), _) => p,
            (None, Some(Value::String(s))) => s.parse().map_err(|e| SpecError(format!("subject.preset: {e}")))?,
            (None, Some(other)) => return Err(SpecError(format!("subject.preset must be a string, got {other}"))),
            (None, None) => Preset::Normal,
        };
        let mut subject_params = overlay("subject", preset.params(config.seed), &subject)?;

        if let Some(seed) = ov.seed {
            config.seed = seed;
            subject_params.seed = seed;
        }
        let thresholds = self.resolve_thresholds()?;

        config.validate().map_err(|e| SpecError(e.to_string()))?;
        subject_params.validate().map_err(|e| SpecError(e.to_string()))?;
        Ok(RunSpec { config, subject: subject_params, thresholds })
    }
}
