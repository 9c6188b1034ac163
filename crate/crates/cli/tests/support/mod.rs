//! Scripted project fixtures driven through the `spcc` binary.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub const DAYS: u32 = 60;
pub const OVERRUN_DAY: u32 = 30;
pub const PLANNED_COST: f64 = 100.0;
pub const PLANNED_EFFORT: f64 = 40.0;
pub const TOL: f64 = 0.10;
pub const RED_FACTOR: f64 = 1.5;

pub fn spcc(data_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spcc"))
        .arg("--data-dir")
        .arg(data_dir)
        .args(args)
        .env_remove("SPCC_PROJECT")
        .env_remove("SPCC_REPO")
        .env_remove("SPCC_ROLE")
        .output()
        .expect("spcc runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Runs a command that must succeed and returns its stdout.
pub fn ok(data_dir: &Path, args: &[&str]) -> String {
    let o = spcc(data_dir, args);
    assert!(o.status.success(), "spcc {args:?} failed: {}{}", stdout(&o), stderr(&o));
    stdout(&o)
}

pub fn date(day: u32) -> String {
    let d = chrono::NaiveDate::from_ymd_opt(2024, 3, 1).unwrap() + chrono::Days::new(u64::from(day) - 1);
    d.format("%Y-%m-%d").to_string()
}

/// Instant at which day `day` is evaluated.
pub fn as_of(day: u32) -> String {
    format!("{}T12:00:00Z", date(day))
}

/// Daily actual cost: on plan with ±3 noise, 20% over plan from the overrun day.
pub fn daily_costs(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=DAYS)
        .map(|d| {
            let level = if d >= OVERRUN_DAY { PLANNED_COST * 1.2 } else { PLANNED_COST };
            (level + rng.random_range(-3.0..=3.0_f64)).round()
        })
        .collect()
}

pub fn daily_effort(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (1..=DAYS).map(|_| (PLANNED_EFFORT + rng.random_range(-1.0..=1.0_f64)).round()).collect()
}

pub fn measurements_csv(seed: u64) -> String {
    let costs = daily_costs(seed);
    let effort = daily_effort(seed);
    let mut s = String::from("metric,entity,timestamp,value\n");
    let mut ac = 0.0;
    for d in 1..=DAYS {
        let i = (d - 1) as usize;
        ac += costs[i];
        let t = format!("{}T00:00:00Z", date(d));
        let planned = PLANNED_COST * f64::from(d);
        for (metric, value) in [
            ("cost", costs[i]),
            ("planned_cost", PLANNED_COST),
            ("effort", effort[i]),
            ("planned_effort", PLANNED_EFFORT),
            ("pv", planned),
            ("ev", planned),
            ("ac", ac),
        ] {
            s.push_str(&format!("{metric},proj,{t},{value}\n"));
        }
    }
    s
}

pub fn plan_json() -> Value {
    json!([
        { "id": "proj", "name": "Release 1", "planned_start": date(1), "planned_end": date(60),
          "budget": 0.0, "percent_complete": 0.0 },
        { "id": "design", "parent": "proj", "name": "Design", "planned_start": date(1), "planned_end": date(20),
          "actual_start": date(1), "actual_end": date(20), "budget": 2000.0, "percent_complete": 1.0 },
        { "id": "build", "parent": "proj", "name": "Build", "planned_start": date(21), "planned_end": date(45),
          "actual_start": date(21), "budget": 2500.0, "percent_complete": 0.6 },
        { "id": "test", "parent": "proj", "name": "Test", "planned_start": date(46), "planned_end": date(60),
          "budget": 1500.0, "percent_complete": 0.0 },
    ])
}

pub fn project_json() -> Value {
    json!({
        "id": "acme",
        "name": "Acme release",
        "context": { "domain": "web", "process": "iterative", "size": "medium" },
        "roles": [
            { "id": "pm", "name": "Project manager" },
            { "id": "qa", "name": "Quality assurance" },
        ],
        "bindings": {
            "cost": "proj", "planned_cost": "proj",
            "effort": "proj", "planned_effort": "proj",
            "pv": "proj", "ev": "proj", "ac": "proj",
        },
    })
}

/// The bundled repository without its roll-up component, so each judged
/// quantity is reported by exactly one function.
pub fn scenario_repo() -> Value {
    let mut repo: Value =
        serde_json::from_str(spcc_core::gqm::ComponentRepository::default_repository_json()).unwrap();
    repo["components"].as_array_mut().unwrap().retain(|c| c["implements"] != "aggregate");
    repo
}

pub fn incidents_json() -> Value {
    json!([{
        "id": "cost-overrun",
        "node": "g-cost.cost-tolerance",
        "start": format!("{}T00:00:00Z", date(OVERRUN_DAY)),
        "detected_deadline": format!("{}T23:59:59Z", date(40)),
    }])
}

pub struct Workspace {
    pub dir: PathBuf,
    pub data: PathBuf,
}

impl Workspace {
    pub fn new(root: &Path) -> Self {
        let dir = root.to_path_buf();
        let data = dir.join("store");
        fs::write(dir.join("project.json"), project_json().to_string()).unwrap();
        fs::write(dir.join("plan.json"), plan_json().to_string()).unwrap();
        fs::write(dir.join("repo.json"), scenario_repo().to_string()).unwrap();
        fs::write(dir.join("measurements.csv"), measurements_csv(11)).unwrap();
        fs::write(dir.join("incidents.json"), incidents_json().to_string()).unwrap();
        Self { dir, data }
    }

    pub fn path(&self, name: &str) -> String {
        self.dir.join(name).to_string_lossy().into_owned()
    }

    /// Defines the project and its goals and composes the catena.
    pub fn setup(&self) -> Vec<String> {
        let repo = self.path("repo.json");
        let mut out = Vec::new();
        let mut step = |args: &[&str]| out.push(ok(&self.data, args));
        step(&["--format", "json", "init", "--file", &self.path("project.json")]);
        step(&[
            "--format", "json", "goal", "add", "--id", "g-cost", "--object", "project", "--purpose", "MONITOR",
            "--focus", "cost", "--viewpoint", "pm",
        ]);
        step(&[
            "--format", "json", "question", "add", "--id", "q-cost", "--goal", "g-cost", "--text",
            "Is spending on plan?", "--metrics", "cost,planned_cost,pv,ev,ac",
        ]);
        step(&[
            "--format", "json", "goal", "add", "--id", "g-effort", "--object", "project", "--purpose", "MONITOR",
            "--focus", "effort", "--viewpoint", "pm",
        ]);
        step(&[
            "--format", "json", "question", "add", "--id", "q-effort", "--goal", "g-effort", "--text",
            "Is effort on plan?", "--metrics", "effort,planned_effort",
        ]);
        step(&["--format", "json", "--repo", &repo, "compose"]);
        step(&["--format", "json", "params", "set", "g-cost.cost-tolerance", "red_factor", &RED_FACTOR.to_string()]);
        step(&["--format", "json", "ingest", &self.path("plan.json")]);
        step(&["--format", "json", "ingest", &self.path("measurements.csv")]);
        out
    }
}

/// Full scripted lifecycle. Returns the transcript of every structured
/// output with exit codes, and the per-day run outputs.
pub fn full_run(root: &Path) -> (String, Vec<(u32, i32, Value)>) {
    let ws = Workspace::new(root);
    let mut transcript = ws.setup().join("");
    let mut runs = Vec::new();
    for day in 1..=DAYS {
        let o = spcc(&ws.data, &["--format", "json", "run", "--as-of", &as_of(day)]);
        let code = o.status.code().unwrap_or(-1);
        assert!(code <= 2, "run day {day} failed: {}", stderr(&o));
        let text = stdout(&o);
        transcript.push_str(&format!("exit {code}\n{text}"));
        runs.push((day, code, serde_json::from_str(&text).unwrap()));
    }
    transcript.push_str(&ok(&ws.data, &["--format", "json", "deviations"]));
    transcript.push_str(&ok(&ws.data, &["--format", "json", "postmortem", &ws.path("incidents.json")]));
    transcript.push_str(&ok(&ws.data, &["--format", "json", "complete"]));
    transcript.push_str(&ok(&ws.data, &["--format", "json", "package", "--feedback", "lesson=baseline cost early"]));
    transcript.push_str(&ok(&ws.data, &["--format", "json", "scene", "g-cost.timeseries"]));
    transcript.push_str(&fs::read_to_string(ws.data.join("projects/acme/events.jsonl")).unwrap());
    transcript.push_str(&fs::read_to_string(ws.data.join("experience.jsonl")).unwrap());
    (transcript, runs)
}
