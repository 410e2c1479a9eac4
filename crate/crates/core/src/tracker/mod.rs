//! Durable experiment-run tracking.
//!
//! Each run owns an append-only log at `<dir>/<run_id>/events.ndjson`; the
//! in-memory state is rebuilt from those logs on open. `<dir>/index.json`
//! mirrors the run records for external readers.

mod event;
mod series;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver, UnboundedSender};

use crate::fsutil::write_atomic;
use crate::ids::{is_valid_id, new_id, now_ms};

pub use event::{decode_line, Event, EventKind, RejectCode, Rejection, RunStatus, EVENT_TYPES};
pub use series::{downsample, MetricSeries, Point};

pub const LOG_FILE: &str = "events.ndjson";
pub const INDEX_FILE: &str = "index.json";
pub const DEFAULT_MAX_POINTS: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum TrackerError {
    #[error("unknown run `{0}`")]
    RunNotFound(String),
    #[error("run `{run}` has no metric `{name}`")]
    MetricNotFound { run: String, name: String },
    #[error("{0}")]
    Invalid(String),
    #[error("corrupt run log {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("run log i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub model: String,
    #[serde(default)]
    pub config: Map<String, Value>,
    pub status: RunStatus,
    pub started_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ended_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDetail {
    #[serde(flatten)]
    pub record: RunRecord,
    pub events: u64,
    /// Point count per metric name.
    pub metrics: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFilter {
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub status: Option<RunStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSeries {
    pub id: String,
    pub points: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub metric: String,
    pub runs: Vec<ChartSeries>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = TrackerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(TrackerError::Invalid(format!(
                "unknown export format `{other}` (expected csv or json)"
            ))),
        }
    }
}

/// Parameters of a synthetic run: `loss(step) = 4.0 * 0.99^step + 0.5`,
/// plus optional seeded uniform noise of amplitude `noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub model: String,
    pub steps: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub config: Map<String, Value>,
}

pub fn synth_loss(step: u64) -> f64 {
    4.0 * 0.99f64.powf(step as f64) + 0.5
}

/// A live feed of one run's accepted events, as wire lines.
pub struct Subscription {
    rx: UnboundedReceiver<Arc<str>>,
}

impl Subscription {
    /// Next event line; `None` once the run has ended.
    pub async fn recv(&mut self) -> Option<Arc<str>> {
        self.rx.recv().await
    }

    pub fn blocking_recv(&mut self) -> Option<Arc<str>> {
        self.rx.blocking_recv()
    }

    pub fn into_receiver(self) -> UnboundedReceiver<Arc<str>> {
        self.rx
    }
}

struct RunInner {
    record: RunRecord,
    log: File,
    events: u64,
    series: BTreeMap<String, Vec<Point>>,
    subscribers: Vec<UnboundedSender<Arc<str>>>,
}

impl RunInner {
    fn apply(&mut self, event: &Event) {
        self.events += 1;
        match &event.kind {
            EventKind::RunStart { .. } => {}
            EventKind::Metric { step, name, value } => series::insert_ordered(
                self.series.entry(name.clone()).or_default(),
                Point {
                    step: *step,
                    value: *value,
                },
            ),
            EventKind::RunEnd { status } => {
                self.record.status = *status;
                self.record.ended_at = Some(event.ts);
            }
            EventKind::LogLine { .. } | EventKind::Checkpoint { .. } => {}
        }
    }
}

pub struct Tracker {
    dir: PathBuf,
    runs: RwLock<BTreeMap<String, Arc<Mutex<RunInner>>>>,
    index_lock: Mutex<()>,
}

fn lock(run: &Mutex<RunInner>) -> MutexGuard<'_, RunInner> {
    run.lock().unwrap_or_else(|e| e.into_inner())
}

fn record_from_start(run_id: &str, event: &Event) -> Option<RunRecord> {
    match &event.kind {
        EventKind::RunStart { model, config } => Some(RunRecord {
            run_id: run_id.to_string(),
            model: model.clone(),
            config: config.clone(),
            status: RunStatus::Running,
            started_at: event.ts,
            ended_at: None,
        }),
        _ => None,
    }
}

impl Tracker {
    /// Opens the store at `dir`, replaying every run log.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, TrackerError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut runs = BTreeMap::new();
        for item in fs::read_dir(&dir)? {
            let item = item?;
            let id = item.file_name().to_string_lossy().into_owned();
            if !item.file_type()?.is_dir() || !is_valid_id(&id) {
                continue;
            }
            let path = item.path().join(LOG_FILE);
            if !path.exists() {
                log::warn!("skipping run directory {} without a log", item.path().display());
                continue;
            }
            runs.insert(id.clone(), Arc::new(Mutex::new(replay(&id, &path)?)));
        }
        let tracker = Self {
            dir,
            runs: RwLock::new(runs),
            index_lock: Mutex::new(()),
        };
        tracker.write_index()?;
        Ok(tracker)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn run(&self, id: &str) -> Result<Arc<Mutex<RunInner>>, TrackerError> {
        self.runs
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| TrackerError::RunNotFound(id.to_string()))
    }

    fn write_index(&self) -> Result<(), TrackerError> {
        let _guard = self.index_lock.lock().unwrap_or_else(|e| e.into_inner());
        let records = self.list_runs(&RunFilter::default());
        let bytes = serde_json::to_vec_pretty(&records).expect("records serialize");
        write_atomic(&self.dir.join(INDEX_FILE), &bytes)?;
        Ok(())
    }

    /// Creates a run whose log starts with `start` (a `run_start` event).
    fn create_with(&self, run_id: &str, start: &Event) -> Result<Arc<Mutex<RunInner>>, TrackerError> {
        let record = record_from_start(run_id, start)
            .ok_or_else(|| TrackerError::Invalid("a run must begin with run_start".into()))?;
        let mut runs = self.runs.write().unwrap_or_else(|e| e.into_inner());
        if runs.contains_key(run_id) {
            return Err(TrackerError::Invalid(format!("run `{run_id}` already exists")));
        }
        let run_dir = self.dir.join(run_id);
        fs::create_dir_all(&run_dir)?;
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(run_dir.join(LOG_FILE))?;
        log.write_all(format!("{}\n", start.to_line()).as_bytes())?;
        log.sync_data()?;
        let run = Arc::new(Mutex::new(RunInner {
            record,
            log,
            events: 1,
            series: BTreeMap::new(),
            subscribers: Vec::new(),
        }));
        runs.insert(run_id.to_string(), run.clone());
        Ok(run)
    }

    /// Starts a new run and returns its record.
    pub fn create_run(&self, model: &str, config: Map<String, Value>) -> Result<RunRecord, TrackerError> {
        if model.is_empty() {
            return Err(TrackerError::Invalid("model name is empty".into()));
        }
        let id = new_id();
        let start = Event::new(
            &id,
            now_ms(),
            EventKind::RunStart {
                model: model.to_string(),
                config,
            },
        );
        let run = self.create_with(&id, &start)?;
        let record = lock(&run).record.clone();
        self.write_index()?;
        Ok(record)
    }

    /// Appends the valid lines of an NDJSON payload. Accepted events are on
    /// disk before this returns; each rejected line is reported with its
    /// 1-based line number. An unknown run is created when the payload's
    /// first event is `run_start`.
    pub fn ingest_events(&self, run_id: &str, payload: &str) -> Result<IngestReport, TrackerError> {
        let now = now_ms();
        let lines: Vec<(usize, &str)> = payload
            .split('\n')
            .enumerate()
            .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
            .filter(|(_, l)| !l.trim().is_empty())
            .collect();
        let mut report = IngestReport::default();
        let mut rest = &lines[..];

        let run = match self.run(run_id) {
            Ok(run) => run,
            Err(not_found) => {
                let start = rest
                    .first()
                    .and_then(|(_, l)| decode_line(l, run_id, now).ok())
                    .filter(|e| matches!(e.kind, EventKind::RunStart { .. }));
                match start {
                    Some(start) if is_valid_id(run_id) => {
                        let run = self.create_with(run_id, &start)?;
                        report.accepted += 1;
                        rest = &rest[1..];
                        run
                    }
                    Some(_) => {
                        return Err(TrackerError::Invalid(format!(
                            "`{run_id}` is not a valid run id"
                        )))
                    }
                    None => return Err(not_found),
                }
            }
        };

        let created = rest.len() < lines.len();
        let status_changed = {
            let mut inner = lock(&run);
            let was_terminal = inner.record.status.is_terminal();
            let mut ended = was_terminal;
            let mut accepted = Vec::new();
            let mut buffer = String::new();
            for &(line_no, text) in rest {
                let result = decode_line(text, run_id, now).and_then(|event| {
                    if ended {
                        Err((RejectCode::E104, "event after run_end".to_string()))
                    } else if matches!(event.kind, EventKind::RunStart { .. }) {
                        Err((RejectCode::E104, "run already started".to_string()))
                    } else {
                        Ok(event)
                    }
                });
                match result {
                    Ok(event) => {
                        ended |= matches!(event.kind, EventKind::RunEnd { .. });
                        let line = event.to_line();
                        buffer.push_str(&line);
                        buffer.push('\n');
                        accepted.push((event, line));
                    }
                    Err((code, message)) => report.rejected.push(Rejection {
                        line: line_no,
                        code,
                        message,
                    }),
                }
            }
            if !buffer.is_empty() {
                inner.log.write_all(buffer.as_bytes())?;
                inner.log.sync_data()?;
            }
            report.accepted += accepted.len();
            for (event, line) in accepted {
                inner.apply(&event);
                let line: Arc<str> = line.into();
                inner.subscribers.retain(|tx| tx.send(line.clone()).is_ok());
            }
            if inner.record.status.is_terminal() {
                inner.subscribers.clear();
            }
            inner.record.status.is_terminal() != was_terminal
        };
        if status_changed || created {
            self.write_index()?;
        }
        Ok(report)
    }

    pub fn get_run(&self, run_id: &str) -> Result<RunRecord, TrackerError> {
        let run = self.run(run_id)?;
        let record = lock(&run).record.clone();
        Ok(record)
    }

    pub fn run_detail(&self, run_id: &str) -> Result<RunDetail, TrackerError> {
        let run = self.run(run_id)?;
        let inner = lock(&run);
        Ok(RunDetail {
            record: inner.record.clone(),
            events: inner.events,
            metrics: inner.series.iter().map(|(k, v)| (k.clone(), v.len())).collect(),
        })
    }

    /// Runs matching `filter`, newest first.
    pub fn list_runs(&self, filter: &RunFilter) -> Vec<RunRecord> {
        let runs: Vec<_> = self
            .runs
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .rev()
            .cloned()
            .collect();
        runs.iter()
            .map(|r| lock(r).record.clone())
            .filter(|r| filter.model.as_ref().is_none_or(|m| &r.model == m))
            .filter(|r| filter.status.is_none_or(|s| r.status == s))
            .collect()
    }

    pub fn get_series(&self, run_id: &str, name: &str, max_points: usize) -> Result<MetricSeries, TrackerError> {
        if max_points < 1 {
            return Err(TrackerError::Invalid("max_points must be at least 1".into()));
        }
        let run = self.run(run_id)?;
        let inner = lock(&run);
        let points = inner
            .series
            .get(name)
            .ok_or_else(|| TrackerError::MetricNotFound {
                run: run_id.to_string(),
                name: name.to_string(),
            })?;
        Ok(MetricSeries {
            run: run_id.to_string(),
            name: name.to_string(),
            points: downsample(points, max_points),
        })
    }

    /// One downsampled series per requested run, in request order.
    pub fn compare_runs(&self, run_ids: &[String], name: &str, max_points: usize) -> Result<Chart, TrackerError> {
        if run_ids.is_empty() {
            return Err(TrackerError::Invalid("at least one run id is required".into()));
        }
        if max_points < 1 {
            return Err(TrackerError::Invalid("max_points must be at least 1".into()));
        }
        let mut known = 0;
        let runs = run_ids
            .iter()
            .map(|id| match self.get_series(id, name, max_points) {
                Ok(series) => {
                    known += 1;
                    ChartSeries {
                        id: id.clone(),
                        points: series.points,
                        warning: None,
                    }
                }
                Err(e) => {
                    if !matches!(e, TrackerError::RunNotFound(_)) {
                        known += 1;
                    }
                    ChartSeries {
                        id: id.clone(),
                        points: Vec::new(),
                        warning: Some(e.to_string()),
                    }
                }
            })
            .collect();
        if known == 0 {
            return Err(TrackerError::RunNotFound(run_ids.join(",")));
        }
        Ok(Chart {
            metric: name.to_string(),
            runs,
        })
    }

    /// Live feed of events accepted after this call. A run that already
    /// ended yields a feed that closes immediately.
    pub fn subscribe(&self, run_id: &str) -> Result<Subscription, TrackerError> {
        let run = self.run(run_id)?;
        let mut inner = lock(&run);
        let (tx, rx) = unbounded_channel();
        if !inner.record.status.is_terminal() {
            inner.subscribers.push(tx);
        }
        Ok(Subscription { rx })
    }

    /// The run's log as stored: a JSON array of the event lines, or CSV
    /// rows `step,name,value,ts` for its metric events.
    pub fn export_run(&self, run_id: &str, format: ExportFormat) -> Result<String, TrackerError> {
        let run = self.run(run_id)?;
        let text = {
            let _inner = lock(&run);
            fs::read_to_string(self.dir.join(run_id).join(LOG_FILE))?
        };
        let lines = text.lines().filter(|l| !l.is_empty());
        match format {
            ExportFormat::Json => Ok(format!("[{}]", lines.collect::<Vec<_>>().join(","))),
            ExportFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["step", "name", "value", "ts"]).map_err(csv_err)?;
                for line in lines {
                    let event: Event = serde_json::from_str(line).map_err(|e| TrackerError::Corrupt {
                        path: self.dir.join(run_id).join(LOG_FILE),
                        message: e.to_string(),
                    })?;
                    if let EventKind::Metric { step, name, value } = event.kind {
                        w.write_record([step.to_string(), name, value.to_string(), event.ts.to_string()])
                            .map_err(csv_err)?;
                    }
                }
                let bytes = w.into_inner().map_err(|e| TrackerError::Io(e.into_error()))?;
                Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
            }
        }
    }

    /// Ingests a JSON export as a new run and returns its record.
    pub fn import_run(&self, export: &str) -> Result<RunRecord, TrackerError> {
        let events: Vec<Map<String, Value>> = serde_json::from_str(export)
            .map_err(|e| TrackerError::Invalid(format!("export is not a JSON array of events: {e}")))?;
        if events.first().and_then(|e| e.get("type")) != Some(&Value::from("run_start")) {
            return Err(TrackerError::Invalid("export must begin with run_start".into()));
        }
        let id = new_id();
        let payload: String = events
            .into_iter()
            .map(|mut e| {
                e.insert("run".into(), Value::from(id.as_str()));
                format!("{}\n", Value::Object(e))
            })
            .collect();
        self.ingest_events(&id, &payload)?;
        self.get_run(&id)
    }

    /// Records a deterministic synthetic training run.
    pub fn synth_run(&self, spec: &SynthSpec) -> Result<RunRecord, TrackerError> {
        if spec.steps < 1 {
            return Err(TrackerError::Invalid("steps must be at least 1".into()));
        }
        if !spec.noise.is_finite() || spec.noise < 0.0 {
            return Err(TrackerError::Invalid("noise must be a non-negative number".into()));
        }
        let mut config = spec.config.clone();
        config.insert("steps".into(), Value::from(spec.steps));
        config.insert("seed".into(), Value::from(spec.seed));
        let record = self.create_run(&spec.model, config)?;
        let id = record.run_id.as_str();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed);
        let mut payload = String::new();
        for step in 0..spec.steps {
            let mut value = synth_loss(step);
            if spec.noise > 0.0 {
                value += spec.noise * rng.gen_range(-1.0..=1.0);
            }
            let event = Event::new(
                id,
                now_ms(),
                EventKind::Metric {
                    step,
                    name: "loss".into(),
                    value,
                },
            );
            payload.push_str(&event.to_line());
            payload.push('\n');
            if payload.len() > 1 << 20 {
                self.ingest_events(id, &payload)?;
                payload.clear();
            }
        }
        let end = Event::new(
            id,
            now_ms(),
            EventKind::RunEnd {
                status: RunStatus::Completed,
            },
        );
        payload.push_str(&end.to_line());
        self.ingest_events(id, &payload)?;
        self.get_run(id)
    }
}

fn csv_err(e: csv::Error) -> TrackerError {
    TrackerError::Io(std::io::Error::other(e))
}

/// Rebuilds a run from its log. A torn final line is truncated away.
fn replay(run_id: &str, path: &Path) -> Result<RunInner, TrackerError> {
    let corrupt = |message: String| TrackerError::Corrupt {
        path: path.to_path_buf(),
        message,
    };
    let mut bytes = fs::read(path)?;
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if complete < bytes.len() {
        log::warn!("truncating torn tail of {}", path.display());
        bytes.truncate(complete);
        OpenOptions::new().write(true).open(path)?.set_len(complete as u64)?;
    }
    let text = String::from_utf8(bytes).map_err(|e| corrupt(e.to_string()))?;
    let mut lines = text.lines();
    let start = lines
        .next()
        .ok_or_else(|| corrupt("empty log".into()))
        .and_then(|l| decode_line(l, run_id, 0).map_err(|(_, m)| corrupt(m)))?;
    let record = record_from_start(run_id, &start).ok_or_else(|| corrupt("log does not begin with run_start".into()))?;
    let log = OpenOptions::new().append(true).open(path)?;
    let mut inner = RunInner {
        record,
        log,
        events: 1,
        series: BTreeMap::new(),
        subscribers: Vec::new(),
    };
    for (i, line) in lines.enumerate() {
        let event = decode_line(line, run_id, 0).map_err(|(_, m)| corrupt(format!("line {}: {m}", i + 2)))?;
        inner.apply(&event);
    }
    Ok(inner)
}
