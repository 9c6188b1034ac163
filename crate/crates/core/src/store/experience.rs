//! The experience base: context-tagged baselines, thresholds, parameters
//! and feedback carried from finished projects into new ones.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::catena::{number, Detection, IndicatorPoint, ParamValue, PostmortemReport, VisualizationCatena};
use crate::gqm::{parameter_key, ExperienceLookup};
use crate::model::{ContextVector, DataSeries};

use super::StoreError;

/// Minimum context similarity for a non-exact match.
pub const SIMILARITY_CUTOFF: f64 = 0.75;
/// Multiplier applied to tolerances implicated in late or missed detections.
pub const DEFAULT_TIGHTENING: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExperienceKind {
    Baseline,
    Threshold,
    Parameter,
    Feedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExperienceValue {
    Scalar(f64),
    Text(String),
    Series(Vec<IndicatorPoint>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceRecord {
    pub context: ContextVector,
    pub kind: ExperienceKind,
    pub key: String,
    pub value: ExperienceValue,
    pub source_project: String,
    pub created: DateTime<Utc>,
}

impl ExperienceRecord {
    pub fn validate(&self) -> Result<(), StoreError> {
        if self.key.is_empty() {
            return Err(StoreError::Malformed("experience record key is empty".into()));
        }
        let ok = match self.kind {
            ExperienceKind::Baseline => !matches!(self.value, ExperienceValue::Text(_)),
            ExperienceKind::Threshold => matches!(self.value, ExperienceValue::Scalar(x) if x.is_finite()),
            ExperienceKind::Parameter => !matches!(self.value, ExperienceValue::Series(_)),
            ExperienceKind::Feedback => matches!(self.value, ExperienceValue::Text(_)),
        };
        if ok {
            Ok(())
        } else {
            Err(StoreError::Malformed(format!("value shape does not fit a {:?} record", self.kind)))
        }
    }
}

/// Records in insertion order. Later records count as more recent when
/// creation instants tie.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperienceBase {
    pub records: Vec<ExperienceRecord>,
}

impl ExperienceBase {
    /// Exact context match first, else the most similar context at or
    /// above the cutoff; ties go to the most recent record.
    pub fn retrieve(&self, context: &ContextVector, key: &str) -> Option<&ExperienceRecord> {
        let newest = |a: &(usize, &ExperienceRecord), b: &(usize, &ExperienceRecord)| {
            a.1.created.cmp(&b.1.created).then(a.0.cmp(&b.0))
        };
        let candidates: Vec<(usize, &ExperienceRecord)> =
            self.records.iter().enumerate().filter(|(_, r)| r.key == key).collect();
        if let Some(exact) = candidates.iter().filter(|(_, r)| &r.context == context).max_by(|a, b| newest(a, b)) {
            return Some(exact.1);
        }
        candidates
            .iter()
            .map(|c| (context.similarity(&c.1.context), c))
            .filter(|(s, _)| *s >= SIMILARITY_CUTOFF)
            .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| newest(a.1, b.1)))
            .map(|(_, c)| c.1)
    }

    pub fn push(&mut self, record: ExperienceRecord) {
        self.records.push(record);
    }
}

impl ExperienceLookup for ExperienceBase {
    fn lookup(&self, context: &ContextVector, key: &str) -> Option<ParamValue> {
        match &self.retrieve(context, key)?.value {
            ExperienceValue::Scalar(x) => Some(ParamValue::Number(*x)),
            ExperienceValue::Text(s) => Some(ParamValue::Text(s.clone())),
            ExperienceValue::Series(_) => None,
        }
    }
}

/// Newline-delimited JSON file holding one record per line.
#[derive(Debug, Clone)]
pub struct ExperienceFile {
    path: PathBuf,
}

impl ExperienceFile {
    pub fn new(path: impl AsRef<Path>) -> Self {
        Self { path: path.as_ref().to_path_buf() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn load(&self) -> Result<ExperienceBase, StoreError> {
        let text = match std::fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(ExperienceBase::default()),
            Err(e) => return Err(e.into()),
        };
        let mut base = ExperienceBase::default();
        for line in text.split_inclusive('\n').filter(|l| l.ends_with('\n')) {
            if line.trim().is_empty() {
                continue;
            }
            let record: ExperienceRecord =
                serde_json::from_str(line).map_err(|e| StoreError::Malformed(format!("experience base: {e}")))?;
            base.push(record);
        }
        Ok(base)
    }

    pub fn append(&self, records: &[ExperienceRecord]) -> Result<(), StoreError> {
        if records.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for r in records {
            r.validate()?;
            buf.push_str(&serde_json::to_string(r).expect("records serialize"));
            buf.push('\n');
        }
        super::repair_tail(&self.path)?;
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(buf.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }
}

/// Inputs to packaging a finished project.
pub struct PackageInput<'a> {
    pub project: &'a str,
    pub context: &'a ContextVector,
    pub report: &'a PostmortemReport,
    pub catena: Option<&'a VisualizationCatena>,
    pub series: Vec<&'a DataSeries>,
    pub feedback: &'a [(String, String)],
    pub created: DateTime<Utc>,
    pub tightening: f64,
}

/// BASELINE records carry the final actual of every series; THRESHOLD
/// records carry the tolerance of each function judged by the postmortem,
/// kept when all its incidents were detected in time and tightened
/// otherwise; FEEDBACK records carry stakeholder remarks.
pub fn package(input: &PackageInput<'_>) -> Vec<ExperienceRecord> {
    let record = |kind, key: String, value| ExperienceRecord {
        context: input.context.clone(),
        kind,
        key,
        value,
        source_project: input.project.to_string(),
        created: input.created,
    };
    let mut out = Vec::new();
    for s in &input.series {
        if let Some(last) = s.last() {
            out.push(record(
                ExperienceKind::Baseline,
                format!("{}@{}", s.metric, s.entity),
                ExperienceValue::Scalar(last.value),
            ));
        }
    }
    let mut judged: BTreeMap<&str, bool> = BTreeMap::new();
    for o in &input.report.incidents {
        let ok = judged.entry(o.node.as_str()).or_insert(true);
        *ok &= o.detection == Detection::InTime;
    }
    if let Some(catena) = input.catena {
        for (node, in_time) in judged {
            let Some(f) = catena.function(node) else { continue };
            let Ok(tol) = number(&f.parameters, "tol") else { continue };
            let value = if in_time { tol } else { tol * input.tightening };
            let component = if f.component.is_empty() { &f.id } else { &f.component };
            out.push(record(
                ExperienceKind::Threshold,
                parameter_key(component, "tol"),
                ExperienceValue::Scalar(value),
            ));
        }
    }
    for (key, text) in input.feedback {
        out.push(record(ExperienceKind::Feedback, key.clone(), ExperienceValue::Text(text.clone())));
    }
    out
}
