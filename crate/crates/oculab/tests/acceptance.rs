//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use oculab::api::{router, AppState};
use oculab_core::geometry::{
    acceptance_half_angle, angular_error, hit_test, Direction3, GazeRay, TargetSphere, Vec3,
};
use oculab_core::metrics::{detect_saccades, evaluate, head_speed, latency_stats, vor_frequency, ExamReport, Flag, Thresholds};
use oculab_core::pedagogy::{mark_complete, StudentProgress, TopicGraph};
use oculab_core::protocol::{pursuit_target_yaw, EventKind, ExamConfig, TestKind};
use oculab_core::simulator::{run_closed_loop, Preset, SubjectParams};
use oculab_core::store::{SessionRecord, Store};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn isi_contract() -> Outcome {
    let started = Instant::now();
    let mut isis = Vec::new();
    let mut worst = String::new();
    let mut bad = 0;
    let mut seed = 0;
    while isis.len() < 1000 {
        let cfg = ExamConfig { seed, duration_s: 600.0, ..ExamConfig::new(TestKind::SaccadeLatency) };
        let dt = cfg.sample_period_s();
        let out = run_closed_loop(&cfg, &Preset::Normal.params(seed)).map_err(|e| e.to_string())?;
        let mut fixated = None;
        for e in &out.events {
            match e.kind {
                EventKind::CenterFixated => fixated = Some(e.t),
                EventKind::StimulusOn => {
                    let f = fixated.take().ok_or("onset without fixation")?;
                    let isi = e.t - f;
                    if !(isi >= 2.0 - dt - 1e-9 && isi <= 5.0 + dt + 1e-9) {
                        bad += 1;
                        worst = format!("{isi:.4}");
                    }
                    isis.push(isi);
                }
                _ => {}
            }
        }
        seed += 1;
    }
    isis.truncate(1000);
    let mean = isis.iter().sum::<f64>() / isis.len() as f64;
    let secs = started.elapsed().as_secs_f64();
    check(
        bad == 0 && (mean - 3.5).abs() <= 0.1 && secs < 10.0,
        format!("1000 trials, out of range {bad} {worst}, mean {mean:.4} s, runtime {secs:.2} s"),
    )
}

fn latency_pipeline() -> Outcome {
    let subject = SubjectParams {
        saccade_latency_mean_s: 0.25,
        saccade_latency_sd_s: 0.02,
        saccade_speed_dps: 400.0,
        ..Preset::Normal.params(0)
    };
    let mut latencies = Vec::new();
    let mut seed = 0;
    while latencies.len() < 200 {
        let cfg = ExamConfig {
            seed,
            duration_s: 600.0,
            sample_rate_hz: 120.0,
            eccentricity_deg: 15.0,
            ..ExamConfig::new(TestKind::SaccadeLatency)
        };
        let out = run_closed_loop(&cfg, &SubjectParams { seed, ..subject.clone() }).map_err(|e| e.to_string())?;
        latencies.extend(latency_stats(&out.events).latencies_s);
        seed += 1;
    }
    latencies.truncate(200);
    let mean = latencies.iter().sum::<f64>() / 200.0;
    let expected = 0.25 + 15.0 / 400.0;
    let tol = 3.0 * 0.02 / 200f64.sqrt() + 1.0 / 120.0;
    check((mean - expected).abs() <= tol, format!("mean {mean:.5} s, expected {expected} +/- {tol:.5}"))
}

fn vor_metrics() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for fs in [60.0, 120.0] {
        let n = (20.0 * fs) as usize;
        let head: Vec<f64> = (0..n).map(|k| 20.0 * (2.0 * std::f64::consts::PI * 0.5 * k as f64 / fs).sin()).collect();
        let (cycles, hz) = vor_frequency(&head, 20.0, 5.0).map_err(|e| e.to_string())?;
        let (_, peak) = head_speed(&head, fs).map_err(|e| e.to_string())?;

        // Same head motion driven through the full simulated session.
        let cfg = ExamConfig { sample_rate_hz: fs, duration_s: 20.0, ..ExamConfig::new(TestKind::Vor) };
        let subject = SubjectParams { head_amp_deg: 20.0, head_freq_hz: 0.5, ..Preset::Normal.params(1) };
        let raw = run_closed_loop(&cfg, &subject).map_err(|e| e.to_string())?;
        let r = evaluate(&raw, &Thresholds::default()).map_err(|e| e.to_string())?;

        ok &= cycles == 10 && hz == 0.5 && (peak - 62.8).abs() <= 1.0;
        ok &= r.vor_cycles == Some(10) && r.vor_freq_hz == Some(0.5);
        ok &= r.head_speed_peak_dps.is_some_and(|p| (p - 62.8).abs() <= 1.0);
        details.push(format!(
            "{fs} Hz: {cycles} cycles {hz} Hz peak {peak:.2} dps; session {:?} cycles {:?} Hz peak {:.2}",
            r.vor_cycles,
            r.vor_freq_hz,
            r.head_speed_peak_dps.unwrap_or(f64::NAN)
        ));
    }
    check(ok, details.join("; "))
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn pursuit_shape() -> Outcome {
    let mut min_corr = f64::INFINITY;
    let mut worst_offset: f64 = 0.0;
    let mut reversals = 0;
    for seed in 0..5 {
        let cfg = ExamConfig { seed, ..ExamConfig::new(TestKind::SmoothPursuit) };
        let raw = run_closed_loop(&cfg, &Preset::Normal.params(seed)).map_err(|e| e.to_string())?;
        // Target speed by central difference of the commanded trajectory.
        let h = 1e-4;
        let speed: Vec<f64> = raw
            .records
            .iter()
            .map(|r| ((pursuit_target_yaw(r.t + h, &cfg) - pursuit_target_yaw(r.t - h, &cfg)) / (2.0 * h)).abs())
            .collect();
        let quarter = cfg.period_s / 4.0;
        for eye in [0, 1] {
            let err: Vec<f64> = raw.records.iter().map(|r| if eye == 0 { r.error_left } else { r.error_right }).collect();
            min_corr = min_corr.min(correlation(&err, &speed));
            // Reversals at quarter + k * period/2; the first is excluded as start-up.
            let mut k = 1;
            loop {
                let rev = quarter + k as f64 * cfg.period_s / 2.0;
                if rev + quarter > cfg.duration_s {
                    break;
                }
                let (at, _) = raw
                    .records
                    .iter()
                    .zip(&err)
                    .filter(|(r, _)| (r.t - rev).abs() <= quarter)
                    .fold((f64::NAN, f64::INFINITY), |best, (r, &e)| if e < best.1 { (r.t, e) } else { best });
                worst_offset = worst_offset.max((at - rev).abs());
                reversals += 1;
                k += 1;
            }
        }
    }
    check(
        min_corr > 0.5 && worst_offset <= 0.25,
        format!("5 sessions, min error/speed correlation {min_corr:.3}, worst minimum offset {worst_offset:.3} s over {reversals} reversals"),
    )
}

fn classifier_separation() -> Outcome {
    let mut wrong = Vec::new();
    let mut runs = 0;
    for kind in TestKind::ALL {
        for (preset, expect) in [(Preset::Normal, Flag::Normal), (Preset::Abnormal, Flag::Abnormal)] {
            for seed in 0..20 {
                let cfg = ExamConfig { seed, ..ExamConfig::new(kind) };
                let raw = run_closed_loop(&cfg, &preset.params(seed)).map_err(|e| e.to_string())?;
                let r = evaluate(&raw, &Thresholds::default()).map_err(|e| e.to_string())?;
                runs += 1;
                if r.overall != expect {
                    wrong.push(format!("{kind}/{preset:?}/{seed}"));
                }
            }
        }
    }
    check(wrong.is_empty(), format!("{} of {runs} runs correct {wrong:?}", runs - wrong.len()))
}

/// Per-sample scan over the median-filtered central-difference speed. Slow
/// samples wedged between two fast ones belong to the saccade.
fn saccade_oracle(yaw: &[f64], fs: f64, threshold: f64) -> Vec<(usize, usize)> {
    let n = yaw.len();
    if n < 3 {
        return Vec::new();
    }
    let f: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 || i == n - 1 {
                yaw[i]
            } else {
                let mut w = [yaw[i - 1], yaw[i], yaw[i + 1]];
                w.sort_by(|a, b| a.total_cmp(b));
                w[1]
            }
        })
        .collect();
    let fast: Vec<bool> = (0..n)
        .map(|i| {
            let v = match i {
                0 => (f[1] - f[0]) * fs,
                i if i == n - 1 => (f[n - 1] - f[n - 2]) * fs,
                i => (f[i + 1] - f[i - 1]) * 0.5 * fs,
            };
            v.abs() > threshold
        })
        .collect();
    let member: Vec<bool> = (0..n).map(|i| fast[i] || (i > 0 && i + 1 < n && fast[i - 1] && fast[i + 1])).collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < n {
        if member[i] {
            let s = i;
            while i + 1 < n && member[i + 1] {
                i += 1;
            }
            spans.push((s, i));
        }
        i += 1;
    }
    spans
}

fn random_trace(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut yaw = Vec::new();
    let mut level = 0.0;
    for _ in 0..rng.random_range(1..8) {
        let target = rng.random_range(-20.0..20.0);
        let ramp = rng.random_range(0..6);
        for k in 0..ramp {
            yaw.push(level + (target - level) * (k + 1) as f64 / (ramp + 1) as f64);
        }
        level = target;
        for _ in 0..rng.random_range(2..40) {
            yaw.push(level + rng.random_range(-0.3..0.3));
        }
    }
    for _ in 0..rng.random_range(0..4) {
        let i = rng.random_range(0..yaw.len());
        yaw[i] += 8.0;
    }
    yaw
}

fn all_orderings_by_walk(g: &TopicGraph, p: &StudentProgress, prefix: &mut Vec<String>, out: &mut BTreeSet<Vec<String>>) -> Result<(), String> {
    let frontier = g.frontier(&p.completed).map_err(|e| e.to_string())?;
    if frontier.is_empty() {
        if p.completed.len() != g.len() {
            return Err(format!("walk stuck at {prefix:?}"));
        }
        out.insert(prefix.clone());
        return Ok(());
    }
    for node in frontier {
        let next = mark_complete(p, g, &node.parse().map_err(|e: oculab_core::pedagogy::PedagogyError| e.to_string())?)
            .map_err(|e| e.to_string())?;
        prefix.push(node);
        all_orderings_by_walk(g, &next, prefix, out)?;
        prefix.pop();
    }
    Ok(())
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for _ in 0..100 {
        let yaw = random_trace(&mut rng);
        let fs = [60.0, 90.0, 120.0][rng.random_range(0..3)];
        let threshold = rng.random_range(10.0..80.0);
        let got: Vec<(usize, usize)> = detect_saccades(&yaw, fs, threshold).iter().map(|s| (s.start, s.end)).collect();
        if got != saccade_oracle(&yaw, fs, threshold) {
            mismatches += 1;
        }
    }

    let names = ["delta", "alpha", "echo", "charlie", "bravo"];
    let mut graphs = 0;
    let mut dag_mismatches = 0;
    for n in 0..=5usize {
        let pairs = n * n.saturating_sub(1) / 2;
        for mask in 0..(1u32 << pairs) {
            let mut g = TopicGraph::new();
            for name in &names[..n] {
                g.add_node(name, name).map_err(|e| e.to_string())?;
            }
            let mut bit = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if mask & (1 << bit) != 0 {
                        g.add_dependency(names[i], names[j]).map_err(|e| e.to_string())?;
                    }
                    bit += 1;
                }
            }
            let mut walks = BTreeSet::new();
            all_orderings_by_walk(&g, &StudentProgress::new("s"), &mut Vec::new(), &mut walks)?;
            let enumerated: BTreeSet<Vec<String>> = g.valid_orderings().map_err(|e| e.to_string())?.into_iter().collect();
            if walks != enumerated {
                dag_mismatches += 1;
            }
            graphs += 1;
        }
    }
    check(
        mismatches == 0 && dag_mismatches == 0,
        format!("saccade traces 100, mismatches {mismatches}; DAGs {graphs}, mismatches {dag_mismatches}"),
    )
}

async fn request(app: &axum::Router, method: &str, uri: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(if body.is_null() { Body::empty() } else { Body::from(body.to_string()) })
        .expect("request builds");
    let resp = app.clone().oneshot(req).await.expect("router is infallible");
    let status = resp.status();
    let bytes = resp.into_body().collect().await.expect("body reads").to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn determinism_and_persistence() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let state = AppState::open(dir.path()).map_err(|e| e.to_string())?;
    let app = router(state.clone());
    let mut details = Vec::new();
    let mut ok = true;

    rt.block_on(async {
        let (_, p) = request(&app, "POST", "/patients", json!({ "display_name": "Acceptance" })).await;
        let patient = p["id"].as_str().unwrap_or_default().to_string();
        for kind in ["SACCADE_LATENCY", "SMOOTH_PURSUIT", "VOR"] {
            let body = |mode: &str| {
                json!({
                    "patient_id": patient,
                    "test": { "test_kind": kind, "duration_s": 15.0 },
                    "subject": { "preset": "ABNORMAL" },
                    "seed": 17,
                    "mode": mode,
                    "started_at": "2026-06-01T12:00:00.000Z",
                })
            };
            let (s1, batch) = request(&app, "POST", "/runs", body("batch")).await;
            let (s2, live) = request(&app, "POST", "/runs", body("live")).await;
            let live_uri = format!("/sessions/{}", live["session_id"].as_str().unwrap_or(""));
            for _ in 0..1000 {
                if request(&app, "GET", &live_uri, Value::Null).await.0 != StatusCode::ACCEPTED {
                    break;
                }
                tokio::time::sleep(std::time::Duration::from_millis(10)).await;
            }
            let ids = (batch["session_id"].as_str().unwrap_or(""), live["session_id"].as_str().unwrap_or(""));
            let store = Store::open(dir.path()).expect("store opens");
            let (Ok(a), Ok(mut b)) = (store.load_session(ids.0), store.load_session(ids.1)) else {
                ok = false;
                details.push(format!("{kind}: runs returned {s1}/{s2}"));
                continue;
            };
            // Session ids are fresh per run; everything else must match byte for byte.
            b.session_id = a.session_id.clone();
            b.samples_file = a.samples_file.clone();
            let same_record = serde_json::to_vec_pretty(&a).ok() == serde_json::to_vec_pretty(&b).ok();
            let csv = |r: &SessionRecord| std::fs::read(store.samples_path(r)).ok();
            let same_samples = csv(&a).is_some() && csv(&a) == std::fs::read(dir.path().join("sessions").join(SessionRecord::samples_file_for(ids.1))).ok();
            let ids_differ = ids.0 != ids.1;
            ok &= same_record && same_samples && ids_differ;
            details.push(format!("{kind}: record identical {same_record}, samples identical {same_samples}"));
        }
        state.drain().await;
    });

    // Save/load round trip.
    let mut store = Store::open(dir.path().join("rt")).map_err(|e| e.to_string())?;
    store.create_patient("Round trip").map_err(|e| e.to_string())?;
    let mut lossless = true;
    for kind in TestKind::ALL {
        let cfg = ExamConfig { seed: 3, duration_s: 15.0, ..ExamConfig::new(kind) };
        let subject = Preset::Normal.params(3);
        let raw = run_closed_loop(&cfg, &subject).map_err(|e| e.to_string())?;
        let thresholds = Thresholds::default();
        let report = evaluate(&raw, &thresholds).map_err(|e| e.to_string())?;
        let id = SessionRecord::new_id();
        let rec = SessionRecord {
            samples_file: SessionRecord::samples_file_for(&id),
            session_id: id,
            patient_id: "P1".into(),
            started_at: "2026-06-01T12:00:00.000Z".into(),
            config: cfg,
            thresholds,
            subject: Some(subject),
            report,
            events: raw.events.clone(),
        };
        store.save_session(&rec, &raw.samples).map_err(|e| e.to_string())?;
        let back = store.load_session(&rec.session_id).map_err(|e| e.to_string())?;
        let samples = store.load_samples(&back).map_err(|e| e.to_string())?;
        lossless &= back == rec && samples == raw.samples;
    }
    ok &= lossless;
    details.push(format!("round trip lossless {lossless}"));

    // Trend over three constructed sessions saved out of order.
    store.create_patient("Trend").map_err(|e| e.to_string())?;
    let constructed = [("2026-01-01T00:00:00.000Z", 0.30), ("2026-02-01T00:00:00.000Z", 0.25), ("2026-03-01T00:00:00.000Z", 0.22)];
    for &(at, value) in constructed.iter().rev() {
        let mut report = ExamReport::empty(TestKind::SaccadeLatency);
        report.latency_mean_s = Some(value);
        let id = SessionRecord::new_id();
        let rec = SessionRecord {
            samples_file: SessionRecord::samples_file_for(&id),
            session_id: id,
            patient_id: "P2".into(),
            started_at: at.into(),
            config: ExamConfig::new(TestKind::SaccadeLatency),
            thresholds: Thresholds::default(),
            subject: None,
            report,
            events: Vec::new(),
        };
        store.save_session(&rec, &[]).map_err(|e| e.to_string())?;
    }
    let trend: Vec<(String, f64)> = store
        .trend("P2", "latency_mean_s")
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|p| (p.started_at, p.value))
        .collect();
    let want: Vec<(String, f64)> = constructed.iter().map(|&(a, v)| (a.to_string(), v)).collect();
    let trend_ok = trend == want;
    ok &= trend_ok;
    details.push(format!("trend {:?}", trend.iter().map(|p| p.1).collect::<Vec<_>>()));
    check(ok, details.join("; "))
}

fn geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let v = |r: &mut ChaCha8Rng| Vec3::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
    let (mut cases, mut disagree, mut boundary) = (0, 0, 0);
    while cases < 10_000 {
        let origin = v(&mut rng);
        let center = v(&mut rng);
        let Ok(dir) = Direction3::normalize(v(&mut rng)) else { continue };
        if (center - origin).norm() < 1e-6 {
            continue;
        }
        let target = TargetSphere::new(center, rng.random_range(0.01..1.5)).map_err(|e| e.to_string())?;
        let ray = GazeRay::new(origin, dir);
        let hit = hit_test(&ray, &target).map_err(|e| e.to_string())?;
        let err = angular_error(&ray, &target).map_err(|e| e.to_string())?;
        let half = acceptance_half_angle(origin, &target);
        if hit != (err <= half) {
            if (err - half).abs() <= 1e-9 {
                boundary += 1;
            } else {
                disagree += 1;
            }
        }
        cases += 1;
    }
    check(disagree == 0, format!("{cases} cases, disagreements {disagree}, within 1e-9 of the cone edge {boundary}"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("ISI contract", isi_contract),
        ("Latency pipeline", latency_pipeline),
        ("VOR metrics", vor_metrics),
        ("Pursuit error shape", pursuit_shape),
        ("Classifier separation", classifier_separation),
        ("Oracle equivalence", oracle_equivalence),
        ("Determinism and persistence", determinism_and_persistence),
        ("Geometry hit test", geometry),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS  {name}: {d} [{secs:.2}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d} [{secs:.2}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
