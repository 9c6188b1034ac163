//! Event-sourced persistence. Each project owns a directory holding an
//! append-only log (one JSON event per line) and a periodic snapshot of the
//! state folded from that log. A write becomes visible only once its line
//! is complete; a torn trailing line is discarded on open.

pub mod experience;
pub mod formats;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catena::{
    execute, postmortem, CatenaError, DataSource, DeviationEvent, ExecutionResult, GroundTruthIncident, ParamValue,
    PostmortemReport, StatusChange, VisualizationCatena,
};
use crate::gqm::{compose_catena, match_components, ComponentRepository, ControlGoal, GoalMatches, GqmError, Question};
use crate::model::{
    validate_plan, ComponentId, DataSeries, EntityId, MeasurementPoint, MetricId, PlanViolation, Project, Risk, RoleId,
    Task, TraceEvent,
};

use experience::{package, ExperienceFile, ExperienceRecord, PackageInput, DEFAULT_TIGHTENING};
use formats::IngestReport;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("malformed header: expected `{expected}`, found `{found}`")]
    HeaderMismatch { expected: String, found: String },
    #[error("{0}")]
    Malformed(String),
    #[error("{what} `{id}` not found")]
    NotFound { what: &'static str, id: String },
    #[error("{what} `{id}` already exists")]
    AlreadyExists { what: &'static str, id: String },
    #[error("catena version {expected} is stale; current version is {current}")]
    StaleCatena { expected: u32, current: u32 },
    #[error("project has no composed catena")]
    NoCatena,
    #[error("project is still active; mark it complete before packaging")]
    ProjectActive,
    #[error("role `{0}` is not declared in the project")]
    UnknownRole(String),
    #[error("invalid plan: {}", .0.iter().map(|v| v.reason.as_str()).collect::<Vec<_>>().join("; "))]
    InvalidPlan(Vec<PlanViolation>),
    #[error("invalid project: {0}")]
    InvalidProject(String),
    #[error(transparent)]
    Gqm(#[from] GqmError),
    #[error(transparent)]
    Catena(#[from] CatenaError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Measurements and the other project inputs, in query-friendly form.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    /// metric -> entity -> series
    pub series: BTreeMap<MetricId, BTreeMap<EntityId, DataSeries>>,
    pub plan: Vec<Task>,
    pub risks: Vec<Risk>,
    pub traces: Vec<TraceEvent>,
    pub clustering: BTreeMap<ComponentId, String>,
}

impl Dataset {
    pub fn contains(&self, metric: &str, entity: &str, t: DateTime<Utc>) -> bool {
        self.series
            .get(metric)
            .and_then(|m| m.get(entity))
            .is_some_and(|s| s.points.binary_search_by(|p| p.timestamp.cmp(&t)).is_ok())
    }

    /// Inserts keeping timestamps strictly increasing; duplicates are
    /// dropped.
    pub fn insert(&mut self, point: MeasurementPoint) {
        let series = self
            .series
            .entry(point.metric.clone())
            .or_default()
            .entry(point.entity.clone())
            .or_insert_with(|| DataSeries::empty(point.metric.clone(), point.entity.clone()));
        if let Err(at) = series.points.binary_search_by(|p| p.timestamp.cmp(&point.timestamp)) {
            series.points.insert(at, point);
        }
    }

    pub fn point_count(&self) -> usize {
        self.series.values().flat_map(|m| m.values()).map(DataSeries::len).sum()
    }

    pub fn all_series(&self) -> impl Iterator<Item = &DataSeries> {
        self.series.values().flat_map(|m| m.values())
    }
}

impl DataSource for Dataset {
    fn series(&self, metric: &str, entity: &str) -> DataSeries {
        self.series
            .get(metric)
            .and_then(|m| m.get(entity))
            .cloned()
            .unwrap_or_else(|| DataSeries::empty(metric, entity))
    }

    fn entities(&self, metric: &str) -> Vec<EntityId> {
        self.series.get(metric).map(|m| m.keys().cloned().collect()).unwrap_or_default()
    }

    fn plan(&self) -> &[Task] {
        &self.plan
    }

    fn risks(&self) -> &[Risk] {
        &self.risks
    }

    fn traces(&self) -> &[TraceEvent] {
        &self.traces
    }

    fn clustering(&self) -> &BTreeMap<ComponentId, String> {
        &self.clustering
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatenaVersion {
    pub version: u32,
    pub digest: String,
    pub catena: VisualizationCatena,
    /// View id to goal id.
    pub traceability: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostmortemRecord {
    pub incidents: Vec<GroundTruthIncident>,
    pub report: PostmortemReport,
}

/// Log entries. Every state change is exactly one entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    ProjectDefined { project: Project },
    GoalAdded { goal: ControlGoal },
    QuestionAdded { question: Question },
    CatenaComposed { version: CatenaVersion },
    ParameterSet { node: String, name: String, value: ParamValue, version: u32, digest: String },
    MeasurementsIngested { source: String, points: Vec<MeasurementPoint> },
    PlanSet { plan: Vec<Task> },
    RisksSet { risks: Vec<Risk> },
    TracesIngested { source: String, events: Vec<TraceEvent> },
    ClusteringSet { clustering: BTreeMap<ComponentId, String> },
    Executed { result: ExecutionResult },
    DeviationAcknowledged { id: String, role: RoleId },
    PostmortemRecorded { record: PostmortemRecord },
    Completed,
    Packaged { records: Vec<ExperienceRecord> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LogLine {
    seq: u64,
    #[serde(flatten)]
    event: LogEvent,
}

/// A project folded from its log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectState {
    pub seq: u64,
    pub project: Project,
    pub goals: Vec<ControlGoal>,
    pub questions: Vec<Question>,
    pub catena: Option<CatenaVersion>,
    pub data: Dataset,
    pub executions: Vec<ExecutionResult>,
    pub deviations: Vec<DeviationEvent>,
    pub recoveries: Vec<StatusChange>,
    pub postmortem: Option<PostmortemRecord>,
    pub complete: bool,
    pub packaged: Vec<ExperienceRecord>,
}

impl ProjectState {
    fn new(project: Project) -> Self {
        Self {
            seq: 0,
            project,
            goals: Vec::new(),
            questions: Vec::new(),
            catena: None,
            data: Dataset::default(),
            executions: Vec::new(),
            deviations: Vec::new(),
            recoveries: Vec::new(),
            postmortem: None,
            complete: false,
            packaged: Vec::new(),
        }
    }

    fn apply(&mut self, seq: u64, event: LogEvent) {
        self.seq = seq;
        match event {
            LogEvent::ProjectDefined { project } => {
                self.project = project;
            }
            LogEvent::GoalAdded { goal } => self.goals.push(goal),
            LogEvent::QuestionAdded { question } => self.questions.push(question),
            LogEvent::CatenaComposed { version } => self.catena = Some(version),
            LogEvent::ParameterSet { node, name, value, version, digest } => {
                if let Some(c) = self.catena.as_mut() {
                    let _ = c.catena.set_parameter(&node, &name, value);
                    c.version = version;
                    c.digest = digest;
                }
            }
            LogEvent::MeasurementsIngested { points, .. } => {
                for p in points {
                    self.data.insert(p);
                }
            }
            LogEvent::PlanSet { plan } => self.data.plan = plan,
            LogEvent::RisksSet { risks } => self.data.risks = risks,
            LogEvent::TracesIngested { events, .. } => self.data.traces.extend(events),
            LogEvent::ClusteringSet { clustering } => self.data.clustering = clustering,
            LogEvent::Executed { result } => {
                self.deviations.extend(result.deviations.iter().cloned());
                self.recoveries.extend(result.recoveries.iter().cloned());
                self.executions.push(result);
            }
            LogEvent::DeviationAcknowledged { id, role } => {
                if let Some(d) = self.deviations.iter_mut().find(|d| d.id == id) {
                    d.acknowledged = true;
                    d.acknowledged_by = Some(role);
                }
            }
            LogEvent::PostmortemRecorded { record } => self.postmortem = Some(record),
            LogEvent::Completed => self.complete = true,
            LogEvent::Packaged { records } => self.packaged.extend(records),
        }
    }

    pub fn latest_execution(&self) -> Option<&ExecutionResult> {
        self.executions.last()
    }

    /// Most recent execution at exactly `as_of`.
    pub fn execution_at(&self, as_of: DateTime<Utc>) -> Option<&ExecutionResult> {
        self.executions.iter().rev().find(|e| e.as_of == as_of)
    }

    pub fn execution(&self, id: &str) -> Option<&ExecutionResult> {
        self.executions.iter().find(|e| e.id.as_deref() == Some(id))
    }

    pub fn deviations_since(&self, since: Option<DateTime<Utc>>) -> Vec<DeviationEvent> {
        self.deviations.iter().filter(|d| since.is_none_or(|s| d.timestamp > s)).cloned().collect()
    }

    pub fn catena_version(&self) -> Option<u32> {
        self.catena.as_ref().map(|c| c.version)
    }
}

/// Drops an incomplete trailing line left by an interrupted write.
pub(crate) fn repair_tail(path: &Path) -> Result<(), StoreError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(e.into()),
    };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|b| *b == b'\n').map(|i| i + 1).unwrap_or(0);
    let f = OpenOptions::new().write(true).open(path)?;
    f.set_len(keep as u64)?;
    f.sync_data()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoreConfig {
    /// Snapshot after this many log entries.
    pub snapshot_every: u64,
    pub tightening: f64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self { snapshot_every: 64, tightening: DEFAULT_TIGHTENING }
    }
}

const LOG_FILE: &str = "events.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Serialize, Deserialize)]
struct Snapshot {
    state: ProjectState,
}

/// Result of a parameter update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterUpdate {
    pub node: String,
    pub name: String,
    pub old: Option<ParamValue>,
    pub new: ParamValue,
    pub catena_version: u32,
    pub reexecution_required: bool,
}

/// One project: a single writer appending to the log and readers holding
/// immutable snapshots of the folded state.
pub struct ProjectHandle {
    dir: PathBuf,
    config: StoreConfig,
    writer: Mutex<()>,
    state: RwLock<Arc<ProjectState>>,
}

impl ProjectHandle {
    fn replay(dir: &Path, config: StoreConfig) -> Result<Self, StoreError> {
        let log = dir.join(LOG_FILE);
        repair_tail(&log)?;
        let mut state: Option<ProjectState> = match fs::read_to_string(dir.join(SNAPSHOT_FILE)) {
            Ok(text) => serde_json::from_str::<Snapshot>(&text).ok().map(|s| s.state),
            Err(_) => None,
        };
        let text = fs::read_to_string(&log)?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let entry: LogLine =
                serde_json::from_str(line).map_err(|e| StoreError::Malformed(format!("{}: {e}", log.display())))?;
            if state.as_ref().is_some_and(|s| entry.seq <= s.seq) {
                continue;
            }
            match (&mut state, entry.event) {
                (None, LogEvent::ProjectDefined { project }) => {
                    let mut s = ProjectState::new(project);
                    s.seq = entry.seq;
                    state = Some(s);
                }
                (None, _) => return Err(StoreError::Malformed("log does not start with a project".into())),
                (Some(s), event) => s.apply(entry.seq, event),
            }
        }
        let state = state.ok_or_else(|| StoreError::Malformed(format!("{} is empty", log.display())))?;
        Ok(Self { dir: dir.to_path_buf(), config, writer: Mutex::new(()), state: RwLock::new(Arc::new(state)) })
    }

    /// Latest committed state. Never waits for a writer.
    pub fn snapshot(&self) -> Arc<ProjectState> {
        self.state.read().clone()
    }

    pub fn id(&self) -> String {
        self.snapshot().project.id.clone()
    }

    fn append(&self, current: &ProjectState, events: Vec<LogEvent>) -> Result<Arc<ProjectState>, StoreError> {
        let mut next = current.clone();
        let mut buf = String::new();
        for event in events {
            let seq = next.seq + 1;
            let line = LogLine { seq, event };
            buf.push_str(&serde_json::to_string(&line).expect("log events serialize"));
            buf.push('\n');
            next.apply(seq, line.event);
        }
        let mut f = OpenOptions::new().create(true).append(true).open(self.dir.join(LOG_FILE))?;
        f.write_all(buf.as_bytes())?;
        f.sync_data()?;
        if next.seq / self.config.snapshot_every != current.seq / self.config.snapshot_every {
            self.write_snapshot(&next)?;
        }
        let next = Arc::new(next);
        *self.state.write() = next.clone();
        Ok(next)
    }

    fn write_snapshot(&self, state: &ProjectState) -> Result<(), StoreError> {
        let tmp = self.dir.join("snapshot.json.tmp");
        let mut f = File::create(&tmp)?;
        f.write_all(serde_json::to_string(&Snapshot { state: state.clone() }).expect("state serializes").as_bytes())?;
        f.sync_data()?;
        fs::rename(tmp, self.dir.join(SNAPSHOT_FILE))?;
        Ok(())
    }

    /// Runs `f` under the writer lock against the current state and commits
    /// the events it returns.
    fn write<T>(
        &self,
        f: impl FnOnce(&ProjectState) -> Result<(Vec<LogEvent>, T), StoreError>,
    ) -> Result<T, StoreError> {
        let _guard = self.writer.lock();
        let current = self.snapshot();
        let (events, out) = f(&current)?;
        if !events.is_empty() {
            self.append(&current, events)?;
        }
        Ok(out)
    }

    pub fn define(&self, project: Project) -> Result<(), StoreError> {
        self.write(|s| {
            if project.id != s.project.id {
                return Err(StoreError::InvalidProject("project id cannot change".into()));
            }
            Ok((vec![LogEvent::ProjectDefined { project }], ()))
        })
    }

    pub fn add_goal(&self, goal: ControlGoal) -> Result<(), StoreError> {
        self.write(|s| {
            goal.validate(&s.project)?;
            if s.goals.iter().any(|g| g.id == goal.id) {
                return Err(StoreError::AlreadyExists { what: "goal", id: goal.id.clone() });
            }
            Ok((vec![LogEvent::GoalAdded { goal }], ()))
        })
    }

    pub fn add_question(&self, question: Question) -> Result<(), StoreError> {
        self.write(|s| {
            question.validate(&s.goals)?;
            if s.questions.iter().any(|q| q.id == question.id) {
                return Err(StoreError::AlreadyExists { what: "question", id: question.id.clone() });
            }
            Ok((vec![LogEvent::QuestionAdded { question }], ()))
        })
    }

    /// Matches every goal against the repository and stores the composed
    /// catena as the next version.
    pub fn compose(
        &self,
        repo: &ComponentRepository,
        experience: &dyn crate::gqm::ExperienceLookup,
    ) -> Result<CatenaVersion, StoreError> {
        self.write(|s| {
            if repo.components.is_empty() {
                return Err(GqmError::EmptyRepository.into());
            }
            let mut goals = Vec::new();
            for g in &s.goals {
                let questions: Vec<Question> = s.questions.iter().filter(|q| q.goal == g.id).cloned().collect();
                let matches = match_components(g, &questions, &repo.components)?;
                goals.push(GoalMatches { goal: g.clone(), questions, matches });
            }
            let comp = compose_catena(&goals, &s.project, experience)?;
            let violations = comp.catena.validate();
            if !violations.is_empty() {
                return Err(CatenaError::Unvalidated(violations).into());
            }
            let version = CatenaVersion {
                version: s.catena_version().unwrap_or(0) + 1,
                digest: comp.catena.digest(),
                catena: comp.catena,
                traceability: comp.traceability,
            };
            Ok((vec![LogEvent::CatenaComposed { version: version.clone() }], version))
        })
    }

    /// Replaces the catena wholesale, e.g. with a hand-edited file.
    pub fn replace_catena(&self, catena: VisualizationCatena) -> Result<CatenaVersion, StoreError> {
        self.write(|s| {
            let violations = catena.validate();
            if !violations.is_empty() {
                return Err(CatenaError::Unvalidated(violations).into());
            }
            let traceability = catena
                .views
                .iter()
                .filter_map(|v| catena.goal_trace.get(&v.id).map(|g| (v.id.clone(), g.clone())))
                .collect();
            let version = CatenaVersion {
                version: s.catena_version().unwrap_or(0) + 1,
                digest: catena.digest(),
                catena,
                traceability,
            };
            Ok((vec![LogEvent::CatenaComposed { version: version.clone() }], version))
        })
    }

    pub fn set_parameter(&self, node: &str, name: &str, value: ParamValue) -> Result<ParameterUpdate, StoreError> {
        self.write(|s| {
            let current = s.catena.as_ref().ok_or(StoreError::NoCatena)?;
            let mut catena = current.catena.clone();
            let old = catena
                .set_parameter(node, name, value.clone())
                .map_err(|_| StoreError::NotFound { what: "node", id: node.to_string() })?;
            let version = current.version + 1;
            let event = LogEvent::ParameterSet {
                node: node.to_string(),
                name: name.to_string(),
                value: value.clone(),
                version,
                digest: catena.digest(),
            };
            let update = ParameterUpdate {
                node: node.to_string(),
                name: name.to_string(),
                old,
                new: value,
                catena_version: version,
                reexecution_required: true,
            };
            Ok((vec![event], update))
        })
    }

    pub fn ingest_measurements(&self, text: &str, source: &str) -> Result<IngestReport, StoreError> {
        self.write(|s| {
            let (report, points) = formats::parse_measurements(text, |m, e, t| s.data.contains(m, e, t))?;
            let events = if points.is_empty() {
                Vec::new()
            } else {
                vec![LogEvent::MeasurementsIngested { source: source.to_string(), points }]
            };
            Ok((events, report))
        })
    }

    pub fn set_plan(&self, plan: Vec<Task>) -> Result<(), StoreError> {
        self.write(|_| {
            let violations = validate_plan(&plan);
            if !violations.is_empty() {
                return Err(StoreError::InvalidPlan(violations));
            }
            Ok((vec![LogEvent::PlanSet { plan }], ()))
        })
    }

    pub fn set_risks(&self, text: &str) -> Result<IngestReport, StoreError> {
        self.write(|_| {
            let (report, risks) = formats::parse_risks(text)?;
            Ok((vec![LogEvent::RisksSet { risks }], report))
        })
    }

    pub fn ingest_traces(&self, text: &str, source: &str) -> Result<IngestReport, StoreError> {
        self.write(|_| {
            let (report, events) = formats::parse_traces(text, true)?;
            let out = if events.is_empty() {
                Vec::new()
            } else {
                vec![LogEvent::TracesIngested { source: source.to_string(), events }]
            };
            Ok((out, report))
        })
    }

    pub fn set_clustering(&self, text: &str) -> Result<IngestReport, StoreError> {
        self.write(|_| {
            let (report, clustering) = formats::parse_clustering(text)?;
            Ok((vec![LogEvent::ClusteringSet { clustering }], report))
        })
    }

    /// Executes the current catena at `as_of` and records the result. When
    /// `expected_version` is given it must equal the current version.
    pub fn execute(&self, as_of: DateTime<Utc>, expected_version: Option<u32>) -> Result<ExecutionResult, StoreError> {
        self.write(|s| {
            let c = s.catena.as_ref().ok_or(StoreError::NoCatena)?;
            if let Some(expected) = expected_version {
                if expected != c.version {
                    return Err(StoreError::StaleCatena { expected, current: c.version });
                }
            }
            let previous = s.latest_execution().map(|e| e.statuses()).unwrap_or_default();
            let mut result = execute(&c.catena, &s.data, as_of, &previous)?;
            let n = s.executions.len() + 1;
            result.id = Some(format!("{}-x{n:04}", s.project.id));
            result.catena_version = Some(c.version);
            for d in &mut result.deviations {
                let base = format!("{}:{}", s.project.id, d.id);
                let mut id = base.clone();
                let mut k = 1;
                while s.deviations.iter().any(|o| o.id == id) {
                    k += 1;
                    id = format!("{base}#{k}");
                }
                d.id = id;
            }
            Ok((vec![LogEvent::Executed { result: result.clone() }], result))
        })
    }

    /// Evaluates without recording anything.
    pub fn preview(&self, as_of: DateTime<Utc>) -> Result<ExecutionResult, StoreError> {
        let s = self.snapshot();
        let c = s.catena.as_ref().ok_or(StoreError::NoCatena)?;
        let previous = s
            .executions
            .iter()
            .rev()
            .find(|e| e.as_of < as_of)
            .map(|e| e.statuses())
            .unwrap_or_default();
        let mut result = execute(&c.catena, &s.data, as_of, &previous)?;
        result.catena_version = Some(c.version);
        Ok(result)
    }

    pub fn acknowledge(&self, id: &str, role: &str) -> Result<DeviationEvent, StoreError> {
        self.write(|s| {
            if !s.project.has_role(role) {
                return Err(StoreError::UnknownRole(role.to_string()));
            }
            let mut event = s
                .deviations
                .iter()
                .find(|d| d.id == id)
                .cloned()
                .ok_or_else(|| StoreError::NotFound { what: "deviation", id: id.to_string() })?;
            event.acknowledged = true;
            event.acknowledged_by = Some(role.to_string());
            Ok((vec![LogEvent::DeviationAcknowledged { id: id.to_string(), role: role.to_string() }], event))
        })
    }

    pub fn postmortem(&self, incidents: Vec<GroundTruthIncident>) -> Result<PostmortemReport, StoreError> {
        self.write(|s| {
            let report = postmortem(&s.deviations, &incidents);
            let record = PostmortemRecord { incidents, report: report.clone() };
            Ok((vec![LogEvent::PostmortemRecorded { record }], report))
        })
    }

    pub fn complete(&self) -> Result<(), StoreError> {
        self.write(|s| Ok((if s.complete { Vec::new() } else { vec![LogEvent::Completed] }, ())))
    }

    fn package_records(
        &self,
        feedback: &[(String, String)],
        created: DateTime<Utc>,
        experience: &ExperienceFile,
    ) -> Result<Vec<ExperienceRecord>, StoreError> {
        self.write(|s| {
            if !s.complete {
                return Err(StoreError::ProjectActive);
            }
            let empty = PostmortemReport::default();
            let records = package(&PackageInput {
                project: &s.project.id,
                context: &s.project.context,
                report: s.postmortem.as_ref().map(|p| &p.report).unwrap_or(&empty),
                catena: s.catena.as_ref().map(|c| &c.catena),
                series: s.data.all_series().collect(),
                feedback,
                created,
                tightening: self.config.tightening,
            });
            experience.append(&records)?;
            Ok((vec![LogEvent::Packaged { records: records.clone() }], records))
        })
    }
}

/// All projects under one data directory plus the installation-wide
/// experience base.
pub struct Store {
    root: PathBuf,
    config: StoreConfig,
    projects: RwLock<BTreeMap<String, Arc<ProjectHandle>>>,
    experience: ExperienceFile,
    experience_lock: Mutex<()>,
}

fn valid_project_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl Store {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open_with(root, StoreConfig::default())
    }

    pub fn open_with(root: impl AsRef<Path>, config: StoreConfig) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("projects"))?;
        let mut projects = BTreeMap::new();
        let mut dirs: Vec<_> = fs::read_dir(root.join("projects"))?.collect::<Result<_, _>>()?;
        dirs.sort_by_key(|d| d.file_name());
        for entry in dirs {
            let path = entry.path();
            if path.join(LOG_FILE).exists() {
                let handle = ProjectHandle::replay(&path, config)?;
                projects.insert(handle.id(), Arc::new(handle));
            }
        }
        let experience_path = root.join("experience.jsonl");
        repair_tail(&experience_path)?;
        Ok(Self {
            experience: ExperienceFile::new(experience_path),
            root,
            config,
            projects: RwLock::new(projects),
            experience_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn project_ids(&self) -> Vec<String> {
        self.projects.read().keys().cloned().collect()
    }

    pub fn project(&self, id: &str) -> Result<Arc<ProjectHandle>, StoreError> {
        self.projects
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound { what: "project", id: id.to_string() })
    }

    pub fn create_project(&self, project: Project) -> Result<Arc<ProjectHandle>, StoreError> {
        if !valid_project_id(&project.id) {
            return Err(StoreError::InvalidProject(format!(
                "id `{}` must be 1-64 characters of [A-Za-z0-9_-]",
                project.id
            )));
        }
        let mut projects = self.projects.write();
        if projects.contains_key(&project.id) {
            return Err(StoreError::AlreadyExists { what: "project", id: project.id });
        }
        let dir = self.root.join("projects").join(&project.id);
        fs::create_dir_all(&dir)?;
        let line = LogLine { seq: 1, event: LogEvent::ProjectDefined { project: project.clone() } };
        let mut f = OpenOptions::new().create(true).write(true).truncate(true).open(dir.join(LOG_FILE))?;
        f.write_all(format!("{}\n", serde_json::to_string(&line).expect("serializes")).as_bytes())?;
        f.sync_data()?;
        let handle = Arc::new(ProjectHandle::replay(&dir, self.config)?);
        projects.insert(project.id, handle.clone());
        Ok(handle)
    }

    pub fn experience(&self) -> Result<experience::ExperienceBase, StoreError> {
        self.experience.load()
    }

    pub fn experience_file(&self) -> &ExperienceFile {
        &self.experience
    }

    pub fn compose(&self, project: &str, repo: &ComponentRepository) -> Result<CatenaVersion, StoreError> {
        let base = self.experience()?;
        self.project(project)?.compose(repo, &base)
    }

    /// Finds a deviation by id in any project and acknowledges it.
    pub fn acknowledge(&self, id: &str, role: &str) -> Result<DeviationEvent, StoreError> {
        let handles: Vec<_> = self.projects.read().values().cloned().collect();
        for h in handles {
            if h.snapshot().deviations.iter().any(|d| d.id == id) {
                return h.acknowledge(id, role);
            }
        }
        Err(StoreError::NotFound { what: "deviation", id: id.to_string() })
    }

    pub fn package(
        &self,
        project: &str,
        feedback: &[(String, String)],
        created: DateTime<Utc>,
    ) -> Result<Vec<ExperienceRecord>, StoreError> {
        let _guard = self.experience_lock.lock();
        self.project(project)?.package_records(feedback, created, &self.experience)
    }
}
