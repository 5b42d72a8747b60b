//! `oculab` command line.
//!
//! Exit status: 0 on success, 1 for domain errors (bad data, failed checks,
//! missing records), 2 for usage errors.

use std::fs;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use oculab_core::metrics::{classify, ExamReport, METRIC_NAMES};
use oculab_core::pedagogy::{mark_complete, student_frontier, NodeRef, TopicGraph};
use oculab_core::protocol::TestKind;
use oculab_core::simulator::Preset;
use oculab_core::store::{self, now_timestamp, parse_timestamp, SessionRecord, Store};
use serde::Serialize;
use serde_json::Value;

use crate::chart;
use crate::runs::{self, Outcome};
use crate::runspec::{parse_test_kind, Overrides, RunSpec, RunSpecFile};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

fn domain<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Domain(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChartKind {
    Precision,
}

fn kind_arg(s: &str) -> Result<TestKind, String> {
    parse_test_kind(s).map_err(|e| e.0)
}

fn preset_arg(s: &str) -> Result<Preset, String> {
    s.parse()
}

#[derive(Debug, Parser)]
#[command(name = "oculab", version, about = "Oculomotor examination simulator, analyzer and records tool")]
pub struct Cli {
    /// Records store directory.
    #[arg(long, global = true, env = "OCULAB_STORE", default_value = "oculab-store")]
    pub store: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Json)]
    pub out: OutFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// SACCADE_LATENCY, SMOOTH_PURSUIT or VOR (short forms: saccade, pursuit, vor).
    #[arg(long, value_parser = kind_arg)]
    pub test: Option<TestKind>,
    /// JSON file with optional "test", "subject" and "thresholds" sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub duration: Option<f64>,
}

impl RunArgs {
    fn spec(&self, preset: Option<Preset>) -> Result<RunSpec, CliError> {
        let file = match &self.config {
            Some(p) => RunSpecFile::load(p).map_err(|e| CliError::Usage(e.0))?,
            None => RunSpecFile::default(),
        };
        file.resolve(Overrides { test_kind: self.test, preset, seed: self.seed, duration_s: self.duration })
            .map_err(|e| CliError::Usage(e.0))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a synthetic subject through a test.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_parser = preset_arg)]
        preset: Option<Preset>,
        /// Save the session under this patient.
        #[arg(long)]
        patient: Option<String>,
        #[arg(long)]
        started_at: Option<String>,
        /// Also write the raw samples as CSV.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Score a samples CSV without saving it.
    Analyze {
        #[arg(long)]
        samples: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        chart: Option<ChartKind>,
        /// Chart files are written to PREFIX.csv and PREFIX.svg.
        #[arg(long, default_value = "precision", requires = "chart")]
        chart_out: PathBuf,
    },
    /// Re-apply thresholds to a saved report or session record.
    Classify {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Chronological series of one metric for a patient.
    Trend {
        #[arg(long)]
        patient: String,
        #[arg(long)]
        metric: String,
    },
    /// Score and save an externally recorded samples CSV.
    Import {
        #[arg(long)]
        patient: String,
        #[arg(long)]
        samples: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        started_at: Option<String>,
    },
    #[command(subcommand)]
    Patients(PatientsCmd),
    #[command(subcommand)]
    Sessions(SessionsCmd),
    #[command(subcommand)]
    Pedagogy(PedagogyCmd),
    /// Start the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

#[derive(Debug, Subcommand)]
pub enum PatientsCmd {
    List,
    Add { display_name: String },
}

#[derive(Debug, Subcommand)]
pub enum SessionsCmd {
    List {
        #[arg(long)]
        patient: Option<String>,
    },
    Show { session_id: String },
}

#[derive(Debug, Subcommand)]
pub enum PedagogyCmd {
    /// Print the stored course graph.
    Graph,
    /// Replace the course graph from a JSON file.
    SetGraph { file: PathBuf },
    /// What a student may take next.
    Frontier {
        #[arg(long)]
        student: String,
    },
    /// Mark a topic or `topic/component` complete.
    Complete {
        #[arg(long)]
        student: String,
        node: String,
    },
    /// Every valid order of the topics, or of one topic's components.
    Orderings {
        #[arg(long)]
        topic: Option<String>,
    },
}

/// Rows for CSV and table output.
struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

fn write_csv<W: std::io::Write>(w: W, t: &Table) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(&t.header)?;
    for r in &t.rows {
        wr.write_record(r)?;
    }
    wr.flush()?;
    Ok(())
}

fn emit<T: Serialize>(out: OutFormat, value: &T, table: impl FnOnce() -> Table) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    let res = match out {
        OutFormat::Json => writeln!(w, "{}", serde_json::to_string_pretty(value).expect("output serializes")),
        OutFormat::Csv => {
            let t = table();
            write_csv(&mut w, &t).map_err(std::io::Error::other)
        }
        OutFormat::Table => {
            let t = table();
            let mut widths: Vec<usize> = t.header.iter().map(|h| h.len()).collect();
            for r in &t.rows {
                for (i, c) in r.iter().enumerate() {
                    widths[i] = widths[i].max(c.chars().count());
                }
            }
            let line = |cells: Vec<String>| {
                cells
                    .iter()
                    .enumerate()
                    .map(|(i, c)| format!("{c:<w$}", w = widths[i]))
                    .collect::<Vec<_>>()
                    .join("  ")
                    .trim_end()
                    .to_string()
            };
            let mut s = line(t.header.iter().map(|h| h.to_string()).collect());
            s.push('\n');
            for r in t.rows {
                s.push_str(&line(r));
                s.push('\n');
            }
            write!(w, "{s}")
        }
    };
    res.map_err(domain)
}

fn report_table(r: &ExamReport) -> Table {
    let mut rows: Vec<Vec<String>> = vec![vec!["test_kind".into(), r.test_kind.to_string()]];
    for name in METRIC_NAMES {
        if let Some(v) = r.metric(name) {
            rows.push(vec![name.to_string(), v.to_string()]);
        }
    }
    for (name, flag) in &r.flags {
        rows.push(vec![format!("flag.{name}"), flag_str(*flag)]);
    }
    rows.push(vec!["overall".into(), flag_str(r.overall)]);
    Table { header: vec!["field", "value"], rows }
}

fn flag_str<T: Serialize>(f: T) -> String {
    match serde_json::to_value(f) {
        Ok(Value::String(s)) => s,
        Ok(v) => v.to_string(),
        Err(_) => String::new(),
    }
}

fn session_rows(sessions: &[SessionRecord]) -> Table {
    Table {
        header: vec!["session_id", "patient_id", "started_at", "test_kind", "overall"],
        rows: sessions
            .iter()
            .map(|s| {
                vec![
                    s.session_id.clone(),
                    s.patient_id.clone(),
                    s.started_at.clone(),
                    s.config.test_kind.to_string(),
                    flag_str(s.report.overall),
                ]
            })
            .collect(),
    }
}

fn open_store(path: &Path) -> Result<Store, CliError> {
    Store::open(path).map_err(domain)
}

fn read_samples(path: &Path) -> Result<Vec<oculab_core::geometry::GazeSample>, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    store::read_samples_csv(std::io::BufReader::new(f)).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn started_at(arg: &Option<String>) -> Result<String, CliError> {
    match arg {
        Some(s) => parse_timestamp(s).map_err(|e| CliError::Usage(e.to_string())),
        None => Ok(now_timestamp()),
    }
}

fn save(store: &mut Store, record: &SessionRecord, outcome: &Outcome) -> Result<(), CliError> {
    store.save_session(record, &outcome.raw.samples).map(|_| ()).map_err(domain)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let out = cli.out;
    match cli.command {
        Command::Simulate { run, preset, patient, started_at: at, samples } => {
            if run.test.is_none() && run.config.is_none() {
                return Err(CliError::Usage("--test or --config is required".into()));
            }
            let spec = run.spec(preset)?;
            let outcome = runs::simulate(&spec).map_err(domain)?;
            if let Some(path) = samples {
                let f = fs::File::create(&path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
                store::write_samples_csv(std::io::BufWriter::new(f), &outcome.raw.samples).map_err(domain)?;
            }
            match patient {
                Some(pid) => {
                    let mut store = open_store(&cli.store)?;
                    let record = runs::session_record(
                        SessionRecord::new_id(),
                        &pid,
                        &started_at(&at)?,
                        &spec.thresholds,
                        Some(&spec.subject),
                        &outcome,
                    );
                    save(&mut store, &record, &outcome)?;
                    emit(out, &record, || session_rows(std::slice::from_ref(&record)))
                }
                None => emit(out, &outcome.report, || report_table(&outcome.report)),
            }
        }
        Command::Analyze { samples, run, chart: chart_kind, chart_out } => {
            let spec = run.spec(None)?;
            let data = read_samples(&samples)?;
            let outcome = runs::analyze_samples(&spec.config, &spec.thresholds, &data).map_err(domain)?;
            if chart_kind == Some(ChartKind::Precision) {
                let csv_path = chart_out.with_extension("csv");
                let svg_path = chart_out.with_extension("svg");
                fs::write(&csv_path, chart::precision_csv(&outcome.raw.records)).map_err(domain)?;
                fs::write(&svg_path, chart::precision_svg(&outcome.raw.records)).map_err(domain)?;
                eprintln!("wrote {} and {}", csv_path.display(), svg_path.display());
            }
            emit(out, &outcome.report, || report_table(&outcome.report))
        }
        Command::Classify { report, config } => {
            let thresholds = match &config {
                Some(p) => RunSpecFile::load(p).and_then(|f| f.resolve_thresholds()).map_err(|e| CliError::Usage(e.0))?,
                None => Default::default(),
            };
            let text = fs::read_to_string(&report).map_err(|e| CliError::Domain(format!("{}: {e}", report.display())))?;
            let parsed: ExamReport = serde_json::from_str::<SessionRecord>(&text)
                .map(|s| s.report)
                .or_else(|_| serde_json::from_str::<ExamReport>(&text))
                .map_err(|e| CliError::Domain(format!("{}: not a report or session record: {e}", report.display())))?;
            let classified = classify(&parsed, &thresholds).map_err(domain)?;
            emit(out, &classified, || report_table(&classified))
        }
        Command::Trend { patient, metric } => {
            let store = open_store(&cli.store)?;
            let points = store.trend(&patient, &metric).map_err(domain)?;
            emit(out, &points, || Table {
                header: vec!["session_id", "started_at", "value"],
                rows: points.iter().map(|p| vec![p.session_id.clone(), p.started_at.clone(), p.value.to_string()]).collect(),
            })
        }
        Command::Import { patient, samples, run, started_at: at } => {
            let spec = run.spec(None)?;
            let data = read_samples(&samples)?;
            let mut store = open_store(&cli.store)?;
            store.patient(&patient).map_err(domain)?;
            let outcome = runs::analyze_samples(&spec.config, &spec.thresholds, &data).map_err(domain)?;
            let record = runs::session_record(SessionRecord::new_id(), &patient, &started_at(&at)?, &spec.thresholds, None, &outcome);
            save(&mut store, &record, &outcome)?;
            emit(out, &record, || session_rows(std::slice::from_ref(&record)))
        }
        Command::Patients(cmd) => {
            let mut store = open_store(&cli.store)?;
            let patients = match cmd {
                PatientsCmd::List => store.list_patients().map_err(domain)?,
                PatientsCmd::Add { display_name } => vec![store.create_patient(&display_name).map_err(domain)?],
            };
            emit(out, &patients, || Table {
                header: vec!["id", "display_name", "created_at"],
                rows: patients.iter().map(|p| vec![p.id.clone(), p.display_name.clone(), p.created_at.clone()]).collect(),
            })
        }
        Command::Sessions(cmd) => {
            let store = open_store(&cli.store)?;
            match cmd {
                SessionsCmd::List { patient } => {
                    let sessions = store.list_sessions(patient.as_deref()).map_err(domain)?;
                    emit(out, &sessions, || session_rows(&sessions))
                }
                SessionsCmd::Show { session_id } => {
                    let s = store.load_session(&session_id).map_err(domain)?;
                    emit(out, &s, || report_table(&s.report))
                }
            }
        }
        Command::Pedagogy(cmd) => pedagogy(&cli.store, out, cmd),
        Command::Serve { addr } => serve(&cli.store, addr),
    }
}

fn pedagogy(root: &Path, out: OutFormat, cmd: PedagogyCmd) -> Result<(), CliError> {
    let mut store = open_store(root)?;
    let list = |items: Vec<String>| Table { header: vec!["node"], rows: items.into_iter().map(|i| vec![i]).collect() };
    match cmd {
        PedagogyCmd::Graph => {
            let g = store.load_graph().map_err(domain)?;
            emit(out, &g, || list(g.node_ids().map(str::to_string).collect()))
        }
        PedagogyCmd::SetGraph { file } => {
            let text = fs::read_to_string(&file).map_err(|e| CliError::Domain(format!("{}: {e}", file.display())))?;
            let g: TopicGraph = serde_json::from_str(&text).map_err(|e| CliError::Domain(format!("{}: {e}", file.display())))?;
            store.save_graph(&g).map_err(domain)?;
            emit(out, &g, || list(g.node_ids().map(str::to_string).collect()))
        }
        PedagogyCmd::Frontier { student } => {
            let g = store.load_graph().map_err(domain)?;
            let p = store.load_progress(&student).map_err(domain)?;
            let f = student_frontier(&g, &p).map_err(domain)?;
            emit(out, &f, || list(f.refs()))
        }
        PedagogyCmd::Complete { student, node } => {
            let node: NodeRef = node.parse().map_err(|e: oculab_core::pedagogy::PedagogyError| CliError::Usage(e.to_string()))?;
            let g = store.load_graph().map_err(domain)?;
            let p = store.load_progress(&student).map_err(domain)?;
            let next = mark_complete(&p, &g, &node).map_err(domain)?;
            store.save_progress(&next).map_err(domain)?;
            let f = student_frontier(&g, &next).map_err(domain)?;
            emit(out, &next, || list(f.refs()))
        }
        PedagogyCmd::Orderings { topic } => {
            let g = store.load_graph().map_err(domain)?;
            let target = match &topic {
                None => &g,
                Some(t) => g
                    .node(t)
                    .ok_or_else(|| CliError::Domain(format!("unknown topic {t:?}")))?
                    .components
                    .as_ref()
                    .ok_or_else(|| CliError::Domain(format!("topic {t:?} has no components")))?,
            };
            let orders = target.valid_orderings().map_err(domain)?;
            emit(out, &orders, || list(orders.iter().map(|o| o.join(" ")).collect()))
        }
    }
}

fn serve(root: &Path, addr: SocketAddr) -> Result<(), CliError> {
    let rt = tokio::runtime::Runtime::new().map_err(domain)?;
    rt.block_on(async {
        let state = crate::api::AppState::open(root).map_err(domain)?;
        crate::api::serve(state, addr, shutdown_signal()).await.map_err(domain)
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
