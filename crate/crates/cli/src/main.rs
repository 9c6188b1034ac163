//! `spcc`: command-line driver for the project control center.

use std::collections::BTreeSet;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use spcc_core::catena::{role_view, ExecutionResult, ParamValue};
use spcc_core::gqm::{checklist_report, ComponentRepository, ControlGoal, Purpose, Question};
use spcc_core::layout::{render_svg, SceneKind, SceneMeta};
use spcc_core::model::{ContextVector, Project, Role, StatusColor};
use spcc_core::store::formats::{
    parse_incidents, parse_instant, parse_plan, IngestReport, CLUSTER_HEADER, MEASUREMENT_HEADER, RISK_HEADER,
    TRACE_HEADER,
};
use spcc_core::store::{ProjectHandle, Store};
use spcc_core::views::render_scene;

/// Writes a line to stdout; a closed pipe is not an error for a CLI.
macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

/// Exit code for any failure other than a deviation verdict.
const EXIT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "spcc", version, about = "Software project control center")]
struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "SPCC_DATA_DIR", default_value = ".spcc")]
    data_dir: PathBuf,
    /// Component repository file; the bundled repository when omitted.
    #[arg(long, global = true, env = "SPCC_REPO")]
    repo: Option<PathBuf>,
    /// Project id; optional when the store holds exactly one project.
    #[arg(long, global = true, env = "SPCC_PROJECT")]
    project: Option<String>,
    /// Role for role-filtered commands.
    #[arg(long, global = true, env = "SPCC_ROLE")]
    role: Option<String>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    #[value(alias = "structured")]
    Json,
    Svg,
}

#[derive(Subcommand)]
enum Command {
    /// Define a project and its context.
    Init(InitArgs),
    /// Manage control goals.
    #[command(subcommand)]
    Goal(GoalCommand),
    /// Manage questions.
    #[command(subcommand)]
    Question(QuestionCommand),
    /// Compose the visualization catena from the goals.
    Compose,
    /// Print the composed catena.
    Catena,
    /// Ingest measurements, a plan, risks, traces or a clustering.
    Ingest {
        file: PathBuf,
        #[arg(long, value_enum)]
        kind: Option<InputKind>,
    },
    /// Change catena parameters.
    #[command(subcommand)]
    Params(ParamsCommand),
    /// Execute the catena at an instant.
    Run {
        #[arg(long)]
        as_of: String,
        /// Refuse to run unless the catena is at this version.
        #[arg(long)]
        catena_version: Option<u32>,
    },
    /// List the views of a role, most severe first.
    Views {
        #[arg(long)]
        as_of: Option<String>,
    },
    /// Export the scene of a view.
    Scene {
        view: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        as_of: Option<String>,
    },
    /// List deviation events.
    Deviations {
        #[arg(long)]
        since: Option<String>,
    },
    /// Acknowledge a deviation event as `--role`.
    Ack { id: String },
    /// Classify detections against ground-truth incidents.
    Postmortem { incidents: PathBuf },
    /// Mark the project complete.
    Complete,
    /// Package experience from a completed project.
    Package {
        /// Lessons learned as key=text.
        #[arg(long = "feedback", value_parser = key_value)]
        feedback: Vec<(String, String)>,
        #[arg(long)]
        created: Option<String>,
    },
    /// Show the indicator checklist of every repository component.
    Checklist,
    /// Serve the HTTP interface.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

#[derive(Args)]
struct InitArgs {
    /// Project definition as JSON; the flags below are ignored when given.
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    name: Option<String>,
    /// Context attribute as key=value.
    #[arg(long = "context", value_parser = key_value)]
    context: Vec<(String, String)>,
    /// Role as id or id=name.
    #[arg(long = "add-role")]
    roles: Vec<String>,
    /// Metric binding as metric=entity.
    #[arg(long = "bind", value_parser = key_value)]
    bindings: Vec<(String, String)>,
}

#[derive(Subcommand)]
enum GoalCommand {
    Add {
        #[arg(long)]
        id: String,
        #[arg(long)]
        object: String,
        #[arg(long, value_parser = purpose)]
        purpose: Purpose,
        #[arg(long, value_delimiter = ',', required = true)]
        focus: Vec<String>,
        #[arg(long)]
        viewpoint: String,
        #[arg(long = "context", value_parser = key_value)]
        context: Vec<(String, String)>,
    },
}

#[derive(Subcommand)]
enum QuestionCommand {
    Add {
        #[arg(long)]
        id: String,
        #[arg(long)]
        goal: String,
        #[arg(long)]
        text: String,
        #[arg(long, value_delimiter = ',', required = true)]
        metrics: Vec<String>,
    },
}

#[derive(Subcommand)]
enum ParamsCommand {
    /// Set a function parameter or view option.
    Set { node: String, name: String, value: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum InputKind {
    Measurements,
    Plan,
    Risks,
    Traces,
    Clusters,
}

fn key_value(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| format!("expected key=value, got `{s}`"))
}

fn purpose(s: &str) -> Result<Purpose, String> {
    serde_json::from_value(Value::String(s.to_uppercase())).map_err(|_| format!("unknown purpose `{s}`"))
}

fn instant(s: &str) -> Result<DateTime<Utc>> {
    parse_instant(s).ok_or_else(|| anyhow!("`{s}` is not an RFC 3339 instant or a date"))
}

struct Ctx {
    cli: Cli,
    store: Arc<Store>,
}

impl Ctx {
    fn repo(&self) -> Result<ComponentRepository> {
        match &self.cli.repo {
            None => Ok(ComponentRepository::default_repository()),
            Some(p) => {
                let text = read(p)?;
                ComponentRepository::from_json(&text).with_context(|| format!("loading {}", p.display()))
            }
        }
    }

    fn project_id(&self) -> Result<String> {
        if let Some(p) = &self.cli.project {
            return Ok(p.clone());
        }
        let ids = self.store.project_ids();
        match ids.as_slice() {
            [one] => Ok(one.clone()),
            [] => bail!("no project in {}; run `spcc init` first", self.cli.data_dir.display()),
            _ => bail!("several projects in the store; pass --project"),
        }
    }

    fn project(&self) -> Result<Arc<ProjectHandle>> {
        Ok(self.store.project(&self.project_id()?)?)
    }

    fn role(&self) -> Result<&str> {
        self.cli.role.as_deref().ok_or_else(|| anyhow!("this command needs --role"))
    }

    fn json(&self) -> bool {
        self.cli.format == Format::Json
    }
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    outln!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    fs::create_dir_all(&cli.data_dir).with_context(|| format!("creating {}", cli.data_dir.display()))?;
    let store = Arc::new(Store::open(&cli.data_dir)?);
    let ctx = Ctx { cli, store };
    match &ctx.cli.command {
        Command::Init(args) => init(&ctx, args),
        Command::Goal(GoalCommand::Add { id, object, purpose, focus, viewpoint, context }) => {
            let goal = ControlGoal {
                id: id.clone(),
                object: object.clone(),
                purpose: *purpose,
                quality_focus: focus.iter().cloned().collect(),
                viewpoint: viewpoint.clone(),
                context: ContextVector(context.iter().cloned().collect()),
            };
            ctx.project()?.add_goal(goal)?;
            report(&ctx, json!({ "goal": id }), &format!("goal {id} added"))
        }
        Command::Question(QuestionCommand::Add { id, goal, text, metrics }) => {
            let q = Question {
                id: id.clone(),
                goal: goal.clone(),
                text: text.clone(),
                metrics: metrics.iter().cloned().collect(),
            };
            ctx.project()?.add_question(q)?;
            report(&ctx, json!({ "question": id }), &format!("question {id} added"))
        }
        Command::Compose => compose(&ctx),
        Command::Catena => {
            let snap = ctx.project()?.snapshot();
            let c = snap.catena.as_ref().ok_or_else(|| anyhow!("project has no composed catena"))?;
            print_json(c)?;
            Ok(0)
        }
        Command::Ingest { file, kind } => ingest(&ctx, file, *kind),
        Command::Params(ParamsCommand::Set { node, name, value }) => {
            let u = ctx.project()?.set_parameter(node, name, ParamValue::parse(value))?;
            let old = u.old.as_ref().map_or("unset".to_string(), |v| v.to_string());
            let text = format!(
                "{}.{}: {} -> {} (catena version {}, re-execution required)",
                u.node, u.name, old, u.new, u.catena_version
            );
            report(&ctx, json!(u), &text)
        }
        Command::Run { as_of, catena_version } => {
            let r = ctx.project()?.execute(instant(as_of)?, *catena_version)?;
            print_execution(&ctx, &r)?;
            Ok(match r.worst_status() {
                StatusColor::Red => 2,
                StatusColor::Yellow => 1,
                StatusColor::Green | StatusColor::NoData => 0,
            })
        }
        Command::Views { as_of } => views(&ctx, as_of.as_deref()),
        Command::Scene { view, out, as_of } => scene(&ctx, view, out.as_deref(), as_of.as_deref()),
        Command::Deviations { since } => {
            let since = since.as_deref().map(instant).transpose()?;
            let events = ctx.project()?.snapshot().deviations_since(since);
            if ctx.json() {
                print_json(&events)?;
            } else if events.is_empty() {
                outln!("no deviations");
            } else {
                for e in &events {
                    let ack = e.acknowledged_by.as_deref().map_or(String::new(), |r| format!(" [ack {r}]"));
                    outln!("{} {} {}{}", e.id, e.severity.as_str(), e.message, ack);
                }
            }
            Ok(0)
        }
        Command::Ack { id } => {
            let e = ctx.store.acknowledge(id, ctx.role()?)?;
            report(&ctx, json!(e), &format!("{} acknowledged by {}", e.id, ctx.role()?))
        }
        Command::Postmortem { incidents } => {
            let incidents = parse_incidents(&read(incidents)?)?;
            let r = ctx.project()?.postmortem(incidents)?;
            if ctx.json() {
                print_json(&r)?;
            } else {
                for o in &r.incidents {
                    let ev = o.first_event.as_deref().unwrap_or("-");
                    outln!("{} {} {} {}", o.incident, o.node, detection(o.detection), ev);
                }
                outln!("in_time {} too_late {} missed {}", r.in_time, r.too_late, r.missed);
                for f in &r.false_positives {
                    outln!("false positive {f}");
                }
            }
            Ok(0)
        }
        Command::Complete => {
            ctx.project()?.complete()?;
            report(&ctx, json!({ "complete": true }), "project marked complete")
        }
        Command::Package { feedback, created } => {
            let h = ctx.project()?;
            let created = match created {
                Some(c) => instant(c)?,
                None => h.snapshot().latest_execution().map(|e| e.as_of).unwrap_or_else(Utc::now),
            };
            let records = ctx.store.package(&h.id(), feedback, created)?;
            if ctx.json() {
                print_json(&records)?;
            } else {
                for r in &records {
                    outln!("{:?} {} = {}", r.kind, r.key, serde_json::to_string(&r.value)?);
                }
            }
            Ok(0)
        }
        Command::Checklist => {
            let repo = ctx.repo()?;
            let reports: Vec<_> = repo.components.iter().map(checklist_report).collect();
            if ctx.json() {
                print_json(&reports)?;
            } else {
                for r in &reports {
                    let failing: String = r.failing.iter().collect();
                    outln!("{} {}/5 {}", r.component, r.passed, if failing.is_empty() { "-" } else { &failing });
                }
            }
            Ok(0)
        }
        Command::Serve { addr } => {
            let state = spcc_server::AppState { store: ctx.store.clone(), repo: Arc::new(ctx.repo()?) };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(spcc_server::serve(state, *addr))?;
            Ok(0)
        }
    }
}

fn detection(d: spcc_core::catena::Detection) -> String {
    serde_json::to_value(d).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn report(ctx: &Ctx, value: Value, text: &str) -> Result<u8> {
    if ctx.json() {
        print_json(&value)?;
    } else {
        outln!("{text}");
    }
    Ok(0)
}

fn init(ctx: &Ctx, args: &InitArgs) -> Result<u8> {
    let project: Project = match &args.file {
        Some(f) => serde_json::from_str(&read(f)?).with_context(|| format!("parsing {}", f.display()))?,
        None => {
            let id = args.id.clone().ok_or_else(|| anyhow!("init needs --id or --file"))?;
            let mut p = Project::new(id.clone(), args.name.clone().unwrap_or(id));
            p.context = ContextVector(args.context.iter().cloned().collect());
            for r in &args.roles {
                let (rid, name) = r.split_once('=').unwrap_or((r, r));
                p.roles.push(Role::new(rid, name));
            }
            p.bindings = args.bindings.iter().cloned().collect();
            p
        }
    };
    let h = ctx.store.create_project(project)?;
    report(ctx, json!({ "project": h.id() }), &format!("project {} created", h.id()))
}

fn compose(ctx: &Ctx) -> Result<u8> {
    let repo = ctx.repo()?;
    let id = ctx.project_id()?;
    let v = ctx.store.compose(&id, &repo)?;
    if ctx.json() {
        print_json(&json!({
            "catena_version": v.version,
            "digest": v.digest,
            "bindings": v.catena.bindings.iter().map(|b| &b.id).collect::<Vec<_>>(),
            "functions": v.catena.functions.iter().map(|f| &f.id).collect::<Vec<_>>(),
            "views": v.catena.views.iter().map(|w| &w.id).collect::<Vec<_>>(),
            "role_assignments": v.catena.role_assignments,
            "traceability": v.traceability,
        }))?;
        return Ok(0);
    }
    outln!(
        "catena version {} ({} bindings, {} functions, {} views)",
        v.version,
        v.catena.bindings.len(),
        v.catena.functions.len(),
        v.catena.views.len()
    );
    for b in &v.catena.bindings {
        outln!("  binding  {} <- {}@{}", b.id, b.metric, b.entity);
    }
    for f in &v.catena.functions {
        outln!("  function {} [{}] <- {}", f.id, f.technique, f.inputs.join(", "));
    }
    for w in &v.catena.views {
        outln!("  view     {} [{}] <- {}", w.id, w.view, w.inputs.join(", "));
    }
    for (view, goal) in &v.traceability {
        let roles: BTreeSet<&str> = v
            .catena
            .role_assignments
            .iter()
            .filter(|(_, vs)| vs.contains(view))
            .map(|(r, _)| r.as_str())
            .collect();
        outln!("  trace    {view} -> goal {goal} (roles: {})", roles.into_iter().collect::<Vec<_>>().join(", "));
    }
    Ok(0)
}

fn sniff(path: &Path, text: &str) -> Result<InputKind> {
    let first = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    if first.starts_with('[') || first.starts_with('{') {
        return Ok(InputKind::Plan);
    }
    let cols: Vec<String> = first.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
    let is = |h: &[&str]| cols.len() == h.len() && cols.iter().zip(h).all(|(c, h)| c == h);
    if is(&MEASUREMENT_HEADER) {
        Ok(InputKind::Measurements)
    } else if is(&RISK_HEADER) {
        Ok(InputKind::Risks)
    } else if is(&TRACE_HEADER) {
        Ok(InputKind::Traces)
    } else if is(&CLUSTER_HEADER) {
        Ok(InputKind::Clusters)
    } else {
        bail!("cannot tell what {} holds from its header `{first}`; pass --kind", path.display())
    }
}

fn ingest(ctx: &Ctx, file: &Path, kind: Option<InputKind>) -> Result<u8> {
    let text = read(file)?;
    let kind = match kind {
        Some(k) => k,
        None => sniff(file, &text)?,
    };
    let h = ctx.project()?;
    let source = file.file_name().map_or("stdin".into(), |n| n.to_string_lossy().into_owned());
    let report: IngestReport = match kind {
        InputKind::Measurements => h.ingest_measurements(&text, &source)?,
        InputKind::Risks => h.set_risks(&text)?,
        InputKind::Traces => h.ingest_traces(&text, &source)?,
        InputKind::Clusters => h.set_clustering(&text)?,
        InputKind::Plan => {
            let plan = parse_plan(&text)?;
            let n = plan.len();
            h.set_plan(plan)?;
            IngestReport { accepted: n, rejected: Vec::new() }
        }
    };
    if ctx.json() {
        print_json(&report)?;
    } else {
        outln!("{}: {} accepted, {} rejected", file.display(), report.accepted, report.rejected.len());
        for r in &report.rejected {
            outln!("  line {}: {}", r.line, r.reason);
        }
    }
    Ok(0)
}

fn print_execution(ctx: &Ctx, r: &ExecutionResult) -> Result<()> {
    if ctx.json() {
        return print_json(&json!({
            "execution_id": r.id,
            "catena_version": r.catena_version,
            "as_of": r.as_of,
            "status": r.worst_status(),
            "indicators": r.indicators.iter().map(|i| json!({
                "node": i.node,
                "status": i.status,
                "latest": i.latest(),
                "explanation": i.explanation,
            })).collect::<Vec<_>>(),
            "deviations": r.deviations,
            "recoveries": r.recoveries,
        }));
    }
    outln!(
        "execution {} at {} (catena version {})",
        r.id.as_deref().unwrap_or("-"),
        r.as_of.to_rfc3339(),
        r.catena_version.map_or("-".into(), |v| v.to_string())
    );
    for i in &r.indicators {
        let latest = i.latest().map_or("-".into(), |v| format!("{v:.4}"));
        outln!("  {:<8} {} = {}  {}", i.status.as_str(), i.node, latest, i.explanation);
    }
    for e in &r.deviations {
        outln!("deviation {} {}: {}", e.severity.as_str(), e.id, e.message);
    }
    for c in &r.recoveries {
        outln!("recovery {} {} -> {}", c.node, c.from.as_str(), c.to.as_str());
    }
    Ok(())
}

/// The recorded execution for `as_of` (or the latest one) when it matches
/// the current catena, otherwise an unrecorded evaluation.
fn result_for(h: &ProjectHandle, as_of: Option<&str>) -> Result<ExecutionResult> {
    let as_of = as_of.map(instant).transpose()?;
    let snap = h.snapshot();
    let current = snap.catena_version();
    let recorded = match as_of {
        Some(t) => snap.execution_at(t),
        None => snap.latest_execution(),
    };
    match (recorded, as_of) {
        (Some(r), _) if r.catena_version == current => Ok(r.clone()),
        (_, Some(t)) => Ok(h.preview(t)?),
        (Some(r), None) => Ok(h.preview(r.as_of)?),
        (None, None) => bail!("no execution yet; pass --as-of or run first"),
    }
}

fn views(ctx: &Ctx, as_of: Option<&str>) -> Result<u8> {
    let role = ctx.role()?;
    let h = ctx.project()?;
    let snap = h.snapshot();
    if !snap.project.has_role(role) {
        bail!("role `{role}` is not declared in the project");
    }
    let c = snap.catena.as_ref().ok_or_else(|| anyhow!("project has no composed catena"))?;
    let r = result_for(&h, as_of)?;
    let states = role_view(&r, &c.catena, role);
    if ctx.json() {
        let out: Vec<Value> = states
            .iter()
            .map(|v| {
                json!({
                    "view": v.view,
                    "kind": v.kind,
                    "status": v.status,
                    "goal": c.traceability.get(&v.view),
                    "contributing": v.contributing,
                })
            })
            .collect();
        print_json(&out)?;
    } else {
        for v in &states {
            outln!("{:<8} {} ({:?})", v.status.as_str(), v.view, v.kind);
        }
    }
    Ok(0)
}

fn scene(ctx: &Ctx, view: &str, out: Option<&Path>, as_of: Option<&str>) -> Result<u8> {
    let h = ctx.project()?;
    let snap = h.snapshot();
    let c = snap.catena.as_ref().ok_or_else(|| anyhow!("project has no composed catena"))?;
    if c.catena.view(view).is_none() {
        bail!("view `{view}` not found");
    }
    let r = result_for(&h, as_of)?;
    let state = r.view_state(view).ok_or_else(|| anyhow!("view `{view}` not found"))?;
    let meta = SceneMeta {
        node: view.to_string(),
        as_of: Some(r.as_of),
        execution_id: r.id.clone(),
        catena_version: r.catena_version,
        origin: None,
        message: None,
    };
    let doc = render_scene(state, meta)?;
    let svg = ctx.cli.format == Format::Svg
        || (ctx.cli.format == Format::Text && out.is_some_and(|p| p.extension().is_some_and(|e| e == "svg")));
    let body = if svg {
        if matches!(doc.kind, SceneKind::Treemap3d | SceneKind::Graph3d) {
            bail!("{:?} scenes have no SVG export; use --format json", doc.kind);
        }
        render_svg(&doc)?
    } else {
        doc.to_json_pretty()
    };
    match out {
        Some(p) => {
            fs::write(p, body).with_context(|| format!("writing {}", p.display()))?;
            eprintln!("wrote {}", p.display());
        }
        None => outln!("{body}"),
    }
    Ok(0)
}
