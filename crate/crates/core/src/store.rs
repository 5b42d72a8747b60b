//! File-backed records store.
//!
//! Layout under the root directory:
//!
//! ```text
//! patients.json
//! sessions/<session_id>.json
//! sessions/<session_id>.samples.csv
//! progress/<student_id>.json
//! pedagogy/graph.json
//! ```
//!
//! Sessions are append-only. Every write goes to a temporary file in the same
//! directory and is renamed into place. Mutating methods take `&mut self`; the
//! caller is expected to funnel writes through one owner.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Direction3, GazeRay, GazeSample, Vec3};
use crate::metrics::{ExamReport, Thresholds, METRIC_NAMES};
use crate::pedagogy::{StudentProgress, TopicGraph};
use crate::protocol::{ExamConfig, TrialEvent};
use crate::simulator::SubjectParams;

pub const SAMPLES_HEADER: &[&str] = &[
    "t", "left_ox", "left_oy", "left_oz", "left_dx", "left_dy", "left_dz", "right_ox", "right_oy", "right_oz",
    "right_dx", "right_dy", "right_dz", "pupil_l", "pupil_r", "open_l", "open_r", "head_yaw",
];

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed JSON: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("samples line {line}: {message}")]
    Samples { line: u64, message: String },
    #[error("samples header mismatch: expected {expected:?}, got {got:?}")]
    BadHeader { expected: String, got: String },
    #[error("{kind} {id:?} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("session {0:?} already exists")]
    AlreadyExists(String),
    #[error("unknown metric {name:?}; valid metrics: {}", .valid.join(", "))]
    UnknownMetric { name: String, valid: Vec<String> },
    #[error("invalid input: {0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, StoreError>;

/// UTC timestamp with millisecond precision, e.g. `2026-01-02T03:04:05.678Z`.
pub fn timestamp(at: DateTime<Utc>) -> String {
    at.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn now_timestamp() -> String {
    timestamp(Utc::now())
}

/// Accepts any RFC 3339 instant and normalizes it to [`timestamp`] form.
pub fn parse_timestamp(s: &str) -> Result<String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| timestamp(t.with_timezone(&Utc)))
        .map_err(|e| StoreError::Invalid(format!("bad timestamp {s:?}: {e}")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientProfile {
    pub id: String,
    pub display_name: String,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub patient_id: String,
    pub started_at: String,
    pub config: ExamConfig,
    pub thresholds: Thresholds,
    /// Present for simulated sessions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<SubjectParams>,
    pub report: ExamReport,
    pub events: Vec<TrialEvent>,
    /// Samples file name, relative to the sessions directory.
    pub samples_file: String,
}

impl SessionRecord {
    pub fn new_id() -> String {
        uuid::Uuid::new_v4().to_string()
    }

    pub fn samples_file_for(session_id: &str) -> String {
        format!("{session_id}.samples.csv")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub session_id: String,
    pub started_at: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct SampleRow {
    t: f64,
    left_ox: f64,
    left_oy: f64,
    left_oz: f64,
    left_dx: f64,
    left_dy: f64,
    left_dz: f64,
    right_ox: f64,
    right_oy: f64,
    right_oz: f64,
    right_dx: f64,
    right_dy: f64,
    right_dz: f64,
    pupil_l: f64,
    pupil_r: f64,
    open_l: f64,
    open_r: f64,
    head_yaw: f64,
}

impl From<&GazeSample> for SampleRow {
    fn from(s: &GazeSample) -> Self {
        let (lo, ld, ro, rd) = (s.left.origin, s.left.dir, s.right.origin, s.right.dir);
        SampleRow {
            t: s.t,
            left_ox: lo.x,
            left_oy: lo.y,
            left_oz: lo.z,
            left_dx: ld.x(),
            left_dy: ld.y(),
            left_dz: ld.z(),
            right_ox: ro.x,
            right_oy: ro.y,
            right_oz: ro.z,
            right_dx: rd.x(),
            right_dy: rd.y(),
            right_dz: rd.z(),
            pupil_l: s.pupil_diameter_left,
            pupil_r: s.pupil_diameter_right,
            open_l: s.eye_openness_left,
            open_r: s.eye_openness_right,
            head_yaw: s.head_yaw,
        }
    }
}

/// Unit vectors pass through bit-for-bit; anything else is normalized.
fn direction(v: Vec3) -> std::result::Result<Direction3, String> {
    Direction3::try_from(v).or_else(|_| Direction3::normalize(v).map_err(|e| e.to_string()))
}

impl TryFrom<SampleRow> for GazeSample {
    type Error = String;

    fn try_from(r: SampleRow) -> std::result::Result<Self, String> {
        let vals = [
            r.t, r.left_ox, r.left_oy, r.left_oz, r.left_dx, r.left_dy, r.left_dz, r.right_ox, r.right_oy,
            r.right_oz, r.right_dx, r.right_dy, r.right_dz, r.pupil_l, r.pupil_r, r.open_l, r.open_r, r.head_yaw,
        ];
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(format!("column {} is not finite", SAMPLES_HEADER[i]));
        }
        Ok(GazeSample {
            t: r.t,
            left: GazeRay::new(
                Vec3::new(r.left_ox, r.left_oy, r.left_oz),
                direction(Vec3::new(r.left_dx, r.left_dy, r.left_dz))?,
            ),
            right: GazeRay::new(
                Vec3::new(r.right_ox, r.right_oy, r.right_oz),
                direction(Vec3::new(r.right_dx, r.right_dy, r.right_dz))?,
            ),
            pupil_diameter_left: r.pupil_l,
            pupil_diameter_right: r.pupil_r,
            eye_openness_left: r.open_l,
            eye_openness_right: r.open_r,
            head_yaw: r.head_yaw,
        })
    }
}

pub fn write_samples_csv<W: Write>(w: W, samples: &[GazeSample]) -> std::result::Result<(), csv::Error> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(SAMPLES_HEADER)?;
    for s in samples {
        wr.serialize(SampleRow::from(s))?;
    }
    wr.flush()?;
    Ok(())
}

/// Parses a samples file. The header must match [`SAMPLES_HEADER`] exactly and
/// timestamps must be strictly increasing.
pub fn read_samples_csv<R: Read>(r: R) -> Result<Vec<GazeSample>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rd.headers().map_err(|e| StoreError::Samples { line: 1, message: e.to_string() })?.clone();
    if header.iter().ne(SAMPLES_HEADER.iter().copied()) {
        return Err(StoreError::BadHeader {
            expected: SAMPLES_HEADER.join(","),
            got: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out: Vec<GazeSample> = Vec::new();
    for row in rd.deserialize::<SampleRow>() {
        let row = row.map_err(|e| StoreError::Samples {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = out.len() as u64 + 2;
        let s = GazeSample::try_from(row).map_err(|message| StoreError::Samples { line, message })?;
        if let Some(prev) = out.last() {
            if s.t <= prev.t {
                return Err(StoreError::Samples {
                    line,
                    message: format!("timestamp {} does not follow {}", s.t, prev.t),
                });
            }
        }
        out.push(s);
    }
    Ok(out)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// Writes `bytes` to a sibling temp file, syncs it, then renames over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().expect("store paths have a parent");
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| StoreError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(v).expect("store types serialize");
    bytes.push(b'\n');
    bytes
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    match fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|source| StoreError::Json { path: path.to_path_buf(), source }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(StoreError::Io { path: path.to_path_buf(), source }),
    }
}

/// Ids become file names, so keep them to a safe alphabet.
fn check_id(kind: &'static str, id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(StoreError::Invalid(format!("{kind} id {id:?} must be 1-128 characters of [A-Za-z0-9_-]")))
    }
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["sessions", "progress", "pedagogy"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn patients_path(&self) -> PathBuf {
        self.root.join("patients.json")
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.json"))
    }

    pub fn samples_path(&self, record: &SessionRecord) -> PathBuf {
        self.root.join("sessions").join(&record.samples_file)
    }

    fn graph_path(&self) -> PathBuf {
        self.root.join("pedagogy").join("graph.json")
    }

    fn progress_path(&self, student: &str) -> PathBuf {
        self.root.join("progress").join(format!("{student}.json"))
    }

    pub fn list_patients(&self) -> Result<Vec<PatientProfile>> {
        Ok(read_json(&self.patients_path())?.unwrap_or_default())
    }

    pub fn patient(&self, id: &str) -> Result<PatientProfile> {
        self.list_patients()?
            .into_iter()
            .find(|p| p.id == id)
            .ok_or_else(|| StoreError::NotFound { kind: "patient", id: id.to_string() })
    }

    /// Registers a patient under the next free sequential id (`P1`, `P2`, ...).
    pub fn create_patient(&mut self, display_name: &str) -> Result<PatientProfile> {
        let name = display_name.trim();
        if name.is_empty() {
            return Err(StoreError::Invalid("display_name must not be empty".into()));
        }
        let mut patients = self.list_patients()?;
        let mut n = patients
            .iter()
            .filter_map(|p| p.id.strip_prefix('P').and_then(|d| d.parse::<u64>().ok()))
            .max()
            .unwrap_or(0)
            + 1;
        while patients.iter().any(|p| p.id == format!("P{n}")) {
            n += 1;
        }
        let profile = PatientProfile { id: format!("P{n}"), display_name: name.to_string(), created_at: now_timestamp() };
        patients.push(profile.clone());
        write_atomic(&self.patients_path(), &to_json(&patients))?;
        Ok(profile)
    }

    /// Persists a session and its samples. The samples file is written first,
    /// so a session record never points at a missing file.
    pub fn save_session(&mut self, record: &SessionRecord, samples: &[GazeSample]) -> Result<String> {
        check_id("session", &record.session_id)?;
        self.patient(&record.patient_id)?;
        if record.samples_file != SessionRecord::samples_file_for(&record.session_id) {
            return Err(StoreError::Invalid(format!(
                "samples_file must be {:?}",
                SessionRecord::samples_file_for(&record.session_id)
            )));
        }
        let path = self.session_path(&record.session_id);
        if path.exists() {
            return Err(StoreError::AlreadyExists(record.session_id.clone()));
        }
        let mut csv_bytes = Vec::new();
        write_samples_csv(&mut csv_bytes, samples).map_err(|e| StoreError::Invalid(e.to_string()))?;
        write_atomic(&self.samples_path(record), &csv_bytes)?;
        write_atomic(&path, &to_json(record))?;
        Ok(record.session_id.clone())
    }

    pub fn load_session(&self, id: &str) -> Result<SessionRecord> {
        check_id("session", id).map_err(|_| StoreError::NotFound { kind: "session", id: id.to_string() })?;
        read_json(&self.session_path(id))?.ok_or_else(|| StoreError::NotFound { kind: "session", id: id.to_string() })
    }

    /// Raw bytes of the stored session record.
    pub fn session_bytes(&self, id: &str) -> Result<Vec<u8>> {
        let path = self.session_path(id);
        fs::read(&path).map_err(|source| match source.kind() {
            std::io::ErrorKind::NotFound => StoreError::NotFound { kind: "session", id: id.to_string() },
            _ => StoreError::Io { path, source },
        })
    }

    pub fn load_samples(&self, record: &SessionRecord) -> Result<Vec<GazeSample>> {
        let path = self.samples_path(record);
        let f = fs::File::open(&path).map_err(io_err(&path))?;
        read_samples_csv(std::io::BufReader::new(f))
    }

    /// All sessions, optionally for one patient, ordered by start time then id.
    pub fn list_sessions(&self, patient_id: Option<&str>) -> Result<Vec<SessionRecord>> {
        let dir = self.root.join("sessions");
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if !name.ends_with(".json") || name.starts_with('.') {
                continue;
            }
            if let Some(rec) = read_json::<SessionRecord>(&path)? {
                if patient_id.is_none_or(|p| rec.patient_id == p) {
                    out.push(rec);
                }
            }
        }
        out.sort_by(|a, b| (&a.started_at, &a.session_id).cmp(&(&b.started_at, &b.session_id)));
        Ok(out)
    }

    /// Chronological series of one metric for a patient. Sessions that do not
    /// carry the metric are skipped.
    pub fn trend(&self, patient_id: &str, metric: &str) -> Result<Vec<TrendPoint>> {
        if !METRIC_NAMES.contains(&metric) {
            return Err(StoreError::UnknownMetric {
                name: metric.to_string(),
                valid: METRIC_NAMES.iter().map(|s| s.to_string()).collect(),
            });
        }
        self.patient(patient_id)?;
        Ok(self
            .list_sessions(Some(patient_id))?
            .into_iter()
            .filter_map(|s| {
                s.report.metric(metric).map(|value| TrendPoint {
                    session_id: s.session_id,
                    started_at: s.started_at,
                    value,
                })
            })
            .collect())
    }

    /// The stored curriculum, or the default one if none has been saved.
    pub fn load_graph(&self) -> Result<TopicGraph> {
        Ok(read_json(&self.graph_path())?.unwrap_or_else(TopicGraph::oculomotor_default))
    }

    pub fn save_graph(&mut self, graph: &TopicGraph) -> Result<()> {
        write_atomic(&self.graph_path(), &to_json(graph))
    }

    pub fn load_progress(&self, student: &str) -> Result<StudentProgress> {
        check_id("student", student)?;
        Ok(read_json(&self.progress_path(student))?.unwrap_or_else(|| StudentProgress::new(student)))
    }

    pub fn save_progress(&mut self, progress: &StudentProgress) -> Result<()> {
        check_id("student", &progress.student_id)?;
        write_atomic(&self.progress_path(&progress.student_id), &to_json(progress))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::direction_from_yaw;
    use crate::metrics::evaluate;
    use crate::protocol::{ExamConfig, TestKind};
    use crate::simulator::{run_closed_loop, Preset};

    fn session(store: &mut Store, patient: &str, started_at: &str, seed: u64) -> SessionRecord {
        let mut cfg = ExamConfig::new(TestKind::SmoothPursuit);
        cfg.duration_s = 3.0;
        cfg.seed = seed;
        let subject = Preset::Normal.params(seed);
        let raw = run_closed_loop(&cfg, &subject).unwrap();
        let thresholds = Thresholds::default();
        let report = evaluate(&raw, &thresholds).unwrap();
        let id = SessionRecord::new_id();
        let rec = SessionRecord {
            samples_file: SessionRecord::samples_file_for(&id),
            session_id: id,
            patient_id: patient.into(),
            started_at: started_at.into(),
            config: cfg,
            thresholds,
            subject: Some(subject),
            report,
            events: raw.events,
        };
        store.save_session(&rec, &raw.samples).unwrap();
        rec
    }

    #[test]
    fn timestamps_have_millis() {
        let t = DateTime::parse_from_rfc3339("2026-01-02T03:04:05.6789+01:00").unwrap().with_timezone(&Utc);
        assert_eq!(timestamp(t), "2026-01-02T02:04:05.678Z");
        assert_eq!(parse_timestamp("2026-01-02T03:04:05Z").unwrap(), "2026-01-02T03:04:05.000Z");
        assert!(parse_timestamp("yesterday").is_err());
    }

    #[test]
    fn patients_are_sequential() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        assert!(store.list_patients().unwrap().is_empty());
        let a = store.create_patient("Ada").unwrap();
        let b = store.create_patient("  Ben ").unwrap();
        assert_eq!((a.id.as_str(), b.id.as_str()), ("P1", "P2"));
        assert_eq!(b.display_name, "Ben");
        assert_eq!(store.list_patients().unwrap(), vec![a, b]);
        assert!(store.create_patient(" ").is_err());
    }

    #[test]
    fn session_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        let p = store.create_patient("Ada").unwrap();
        let rec = session(&mut store, &p.id, "2026-01-01T00:00:00.000Z", 3);
        let loaded = store.load_session(&rec.session_id).unwrap();
        assert_eq!(loaded, rec);
        let bytes = store.session_bytes(&rec.session_id).unwrap();
        assert_eq!(bytes, to_json(&loaded));

        let samples = store.load_samples(&loaded).unwrap();
        let raw = run_closed_loop(&rec.config, rec.subject.as_ref().unwrap()).unwrap();
        assert_eq!(samples, raw.samples);

        assert!(matches!(store.save_session(&rec, &raw.samples), Err(StoreError::AlreadyExists(_))));
        assert!(matches!(store.load_session("nope"), Err(StoreError::NotFound { .. })));
        assert!(matches!(store.load_session("../x"), Err(StoreError::NotFound { .. })));
    }

    #[test]
    fn session_requires_known_patient() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        store.create_patient("Ada").unwrap();
        let rec = session(&mut store, "P1", "2026-01-01T00:00:00.000Z", 1);
        let mut orphan = rec.clone();
        orphan.session_id = SessionRecord::new_id();
        orphan.samples_file = SessionRecord::samples_file_for(&orphan.session_id);
        orphan.patient_id = "P9".into();
        assert!(matches!(store.save_session(&orphan, &[]), Err(StoreError::NotFound { kind: "patient", .. })));
    }

    #[test]
    fn trend_is_chronological() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        let p = store.create_patient("Ada").unwrap();
        let other = store.create_patient("Ben").unwrap();
        let s3 = session(&mut store, &p.id, "2026-03-01T00:00:00.000Z", 3);
        let s1 = session(&mut store, &p.id, "2026-01-01T00:00:00.000Z", 1);
        let s2 = session(&mut store, &p.id, "2026-02-01T00:00:00.000Z", 2);
        session(&mut store, &other.id, "2026-01-15T00:00:00.000Z", 4);
        let tr = store.trend(&p.id, "precision_rms_deg").unwrap();
        let ids: Vec<_> = tr.iter().map(|t| t.session_id.clone()).collect();
        assert_eq!(ids, vec![s1.session_id, s2.session_id, s3.session_id.clone()]);
        assert_eq!(tr[2].value, s3.report.precision_rms_deg.unwrap());
        assert!(store.trend(&p.id, "latency_mean_s").unwrap().is_empty());
        match store.trend(&p.id, "speed") {
            Err(StoreError::UnknownMetric { valid, .. }) => assert!(valid.contains(&"pursuit_gain".to_string())),
            other => panic!("{other:?}"),
        }
        assert!(matches!(store.trend("P77", "pursuit_gain"), Err(StoreError::NotFound { .. })));
    }

    #[test]
    fn csv_header_and_order_checked() {
        let bad = "t,left_ox\n0,0\n";
        assert!(matches!(read_samples_csv(bad.as_bytes()), Err(StoreError::BadHeader { .. })));

        let ray = GazeRay::new(Vec3::ZERO, direction_from_yaw(5.0));
        let s = GazeSample {
            t: 0.5,
            left: ray,
            right: ray,
            pupil_diameter_left: 3.5,
            pupil_diameter_right: 3.5,
            eye_openness_left: 1.0,
            eye_openness_right: 1.0,
            head_yaw: 0.0,
        };
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &[s, s]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(&SAMPLES_HEADER.join(",")));
        match read_samples_csv(text.as_bytes()) {
            Err(StoreError::Samples { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn imported_directions_are_normalized() {
        let text = format!("{}\n0,0,0,0,0,0,2,0,0,0,0,0,3,3,3,1,1,0\n", SAMPLES_HEADER.join(","));
        let s = read_samples_csv(text.as_bytes()).unwrap();
        assert_eq!(s[0].left.dir, Direction3::FORWARD);
        let zero = format!("{}\n0,0,0,0,0,0,0,0,0,0,0,0,1,3,3,1,1,0\n", SAMPLES_HEADER.join(","));
        assert!(read_samples_csv(zero.as_bytes()).is_err());
    }

    #[test]
    fn graph_and_progress_persist() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        assert_eq!(store.load_graph().unwrap(), TopicGraph::oculomotor_default());
        let mut g = TopicGraph::new();
        g.add_node("a", "A").unwrap();
        store.save_graph(&g).unwrap();
        assert_eq!(store.load_graph().unwrap(), g);

        let mut p = store.load_progress("s1").unwrap();
        assert!(p.completed.is_empty());
        p.completed.insert("a".into());
        store.save_progress(&p).unwrap();
        assert_eq!(store.load_progress("s1").unwrap(), p);
        assert!(store.load_progress("../etc").is_err());
    }
}
