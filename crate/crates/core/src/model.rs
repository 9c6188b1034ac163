//! Shared domain vocabulary: projects, plans, measurements, roles, risks,
//! communication traces and status colors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type TaskId = String;
pub type MetricId = String;
pub type EntityId = String;
pub type RoleId = String;
pub type ComponentId = String;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown task `{0}`")]
    NotFound(TaskId),
    #[error("measurement value for `{metric}`/`{entity}` is not finite")]
    NonFiniteValue { metric: MetricId, entity: EntityId },
    #[error("series points must share metric and entity and be strictly increasing in time (index {0})")]
    InvalidSeries(usize),
    #[error("invalid risk `{id}`: {reason}")]
    InvalidRisk { id: String, reason: String },
    #[error("self-communication `{0}` -> `{0}` is not permitted")]
    SelfCommunication(ComponentId),
}

/// Assessment color with a fixed total severity order
/// `NoData < Green < Yellow < Red`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StatusColor {
    #[default]
    NoData,
    Green,
    Yellow,
    Red,
}

impl StatusColor {
    pub fn as_str(self) -> &'static str {
        match self {
            StatusColor::NoData => "NO_DATA",
            StatusColor::Green => "GREEN",
            StatusColor::Yellow => "YELLOW",
            StatusColor::Red => "RED",
        }
    }

    /// Yellow and red are the colors that count as a plan deviation.
    pub fn is_deviation(self) -> bool {
        matches!(self, StatusColor::Yellow | StatusColor::Red)
    }
}

impl fmt::Display for StatusColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ordered, named attributes characterizing a project environment
/// (domain, team size, process, criticality, ...).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextVector(pub BTreeMap<String, String>);

impl ContextVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.0.insert(name.into(), value.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    /// Fraction of attributes (over the union of both attribute sets) that
    /// carry equal values. Two empty contexts are identical.
    pub fn similarity(&self, other: &ContextVector) -> f64 {
        let names: BTreeSet<&String> = self.0.keys().chain(other.0.keys()).collect();
        if names.is_empty() {
            return 1.0;
        }
        let equal = names
            .iter()
            .filter(|n| matches!((self.0.get(**n), other.0.get(**n)), (Some(a), Some(b)) if a == b))
            .count();
        equal as f64 / names.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Role {
    pub id: RoleId,
    pub name: String,
}

impl Role {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self { id: id.into(), name: name.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scale {
    Nominal,
    Ordinal,
    Interval,
    Ratio,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricDef {
    pub id: MetricId,
    pub name: String,
    pub unit: String,
    pub scale: Scale,
}

/// A plan element. Plan dates have day resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    #[serde(default)]
    pub parent: Option<TaskId>,
    pub name: String,
    pub planned_start: NaiveDate,
    pub planned_end: NaiveDate,
    #[serde(default)]
    pub actual_start: Option<NaiveDate>,
    #[serde(default)]
    pub actual_end: Option<NaiveDate>,
    pub budget: f64,
    pub percent_complete: f64,
}

impl Task {
    pub fn new(
        id: impl Into<String>,
        planned_start: NaiveDate,
        planned_end: NaiveDate,
        budget: f64,
        percent_complete: f64,
    ) -> Self {
        let id = id.into();
        Self {
            name: id.clone(),
            id,
            parent: None,
            planned_start,
            planned_end,
            actual_start: None,
            actual_end: None,
            budget,
            percent_complete,
        }
    }

    pub fn child_of(mut self, parent: impl Into<String>) -> Self {
        self.parent = Some(parent.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ViolationKind {
    DuplicateId,
    DateInversion,
    ActualDateInversion,
    NegativeBudget,
    PercentOutOfRange,
    UnknownParent { parent: TaskId },
    ParentCycle { members: Vec<TaskId> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanViolation {
    pub task: TaskId,
    #[serde(flatten)]
    pub kind: ViolationKind,
    pub reason: String,
}

impl PlanViolation {
    fn new(task: &str, kind: ViolationKind) -> Self {
        let reason = match &kind {
            ViolationKind::DuplicateId => "duplicate task id".to_string(),
            ViolationKind::DateInversion => "date inversion".to_string(),
            ViolationKind::ActualDateInversion => "actual date inversion".to_string(),
            ViolationKind::NegativeBudget => "negative budget".to_string(),
            ViolationKind::PercentOutOfRange => "percent_complete outside [0,1]".to_string(),
            ViolationKind::UnknownParent { parent } => format!("unknown parent {parent}"),
            ViolationKind::ParentCycle { members } => {
                format!("parent cycle {{{}}}", members.join(","))
            }
        };
        Self { task: task.to_string(), kind, reason }
    }
}

/// Lists every invariant violation of a plan. An empty result means the
/// plan is valid.
pub fn validate_plan(plan: &[Task]) -> Vec<PlanViolation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for task in plan {
        if !seen.insert(task.id.as_str()) {
            out.push(PlanViolation::new(&task.id, ViolationKind::DuplicateId));
        }
        if task.planned_start > task.planned_end {
            out.push(PlanViolation::new(&task.id, ViolationKind::DateInversion));
        }
        if let (Some(s), Some(e)) = (task.actual_start, task.actual_end) {
            if s > e {
                out.push(PlanViolation::new(&task.id, ViolationKind::ActualDateInversion));
            }
        }
        if !(task.budget >= 0.0) || !task.budget.is_finite() {
            out.push(PlanViolation::new(&task.id, ViolationKind::NegativeBudget));
        }
        if !(0.0..=1.0).contains(&task.percent_complete) {
            out.push(PlanViolation::new(&task.id, ViolationKind::PercentOutOfRange));
        }
    }

    let parents: BTreeMap<&str, Option<&str>> = plan
        .iter()
        .map(|t| (t.id.as_str(), t.parent.as_deref()))
        .collect();
    for task in plan {
        if let Some(p) = task.parent.as_deref() {
            if !parents.contains_key(p) {
                out.push(PlanViolation::new(
                    &task.id,
                    ViolationKind::UnknownParent { parent: p.to_string() },
                ));
            }
        }
    }

    // Each task's parent chain either ends at a root, at an unknown parent,
    // or enters a cycle. Report each cycle once, keyed by its smallest member.
    let mut reported: BTreeSet<Vec<&str>> = BTreeSet::new();
    for start in parents.keys() {
        let mut path: Vec<&str> = Vec::new();
        let mut cursor = Some(*start);
        while let Some(id) = cursor {
            if let Some(pos) = path.iter().position(|p| *p == id) {
                let mut members: Vec<&str> = path[pos..].to_vec();
                members.sort_unstable();
                if reported.insert(members.clone()) {
                    out.push(PlanViolation::new(
                        members[0],
                        ViolationKind::ParentCycle {
                            members: members.iter().map(|m| m.to_string()).collect(),
                        },
                    ));
                }
                break;
            }
            path.push(id);
            cursor = parents.get(id).copied().flatten();
        }
    }
    out
}

/// Ids of `task`'s direct children in plan order.
pub fn children<'a>(plan: &'a [Task], task: &str) -> impl Iterator<Item = &'a Task> + 'a {
    let task = task.to_string();
    plan.iter().filter(move |t| t.parent.as_deref() == Some(task.as_str()))
}

fn descendants<'a>(plan: &'a [Task], root: &Task, out: &mut Vec<&'a Task>) {
    for child in children(plan, &root.id) {
        out.push(child);
        descendants(plan, child, out);
    }
}

fn leaves_under<'a>(plan: &'a [Task], root: &'a Task, out: &mut Vec<&'a Task>) {
    let mut any = false;
    for child in children(plan, &root.id) {
        any = true;
        leaves_under(plan, child, out);
    }
    if !any {
        out.push(root);
    }
}

/// Synthesizes the summary task for `task`: planned interval is the hull of
/// every task below it, budget is the sum of leaf budgets and completion is
/// the budget-weighted mean of leaf completion (unweighted when the leaves
/// carry no budget). A leaf rolls up to itself.
///
/// The plan must be valid; cycles would recurse forever.
pub fn rollup(plan: &[Task], task: &str) -> Result<Task, ModelError> {
    let root = plan
        .iter()
        .find(|t| t.id == task)
        .ok_or_else(|| ModelError::NotFound(task.to_string()))?;
    let mut leaves = Vec::new();
    leaves_under(plan, root, &mut leaves);
    if leaves.len() == 1 && std::ptr::eq(leaves[0], root) {
        return Ok(root.clone());
    }

    let mut below = Vec::new();
    descendants(plan, root, &mut below);
    let planned_start = below.iter().map(|t| t.planned_start).min().unwrap();
    let planned_end = below.iter().map(|t| t.planned_end).max().unwrap();
    let actual_start = leaves.iter().filter_map(|t| t.actual_start).min();
    let actual_end = if leaves.iter().all(|t| t.actual_end.is_some()) {
        leaves.iter().filter_map(|t| t.actual_end).max()
    } else {
        None
    };
    let budget: f64 = leaves.iter().map(|t| t.budget).sum();
    let percent_complete = if budget > 0.0 {
        leaves.iter().map(|t| t.budget * t.percent_complete).sum::<f64>() / budget
    } else {
        leaves.iter().map(|t| t.percent_complete).sum::<f64>() / leaves.len() as f64
    };

    Ok(Task {
        id: root.id.clone(),
        parent: root.parent.clone(),
        name: root.name.clone(),
        planned_start,
        planned_end,
        actual_start,
        actual_end,
        budget,
        percent_complete,
    })
}

/// Depth of every task in the hierarchy (roots are 0).
pub fn depths(plan: &[Task]) -> BTreeMap<TaskId, usize> {
    let parents: BTreeMap<&str, Option<&str>> = plan
        .iter()
        .map(|t| (t.id.as_str(), t.parent.as_deref()))
        .collect();
    plan.iter()
        .map(|t| {
            let mut depth = 0;
            let mut cursor = t.parent.as_deref();
            while let Some(p) = cursor {
                if depth > plan.len() {
                    break;
                }
                depth += 1;
                cursor = parents.get(p).copied().flatten();
            }
            (t.id.clone(), depth)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub context: ContextVector,
    #[serde(default)]
    pub plan: Vec<Task>,
    #[serde(default)]
    pub roles: Vec<Role>,
    /// Metric id to the entity whose series answers it.
    #[serde(default)]
    pub bindings: BTreeMap<MetricId, EntityId>,
}

impl Project {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            context: ContextVector::default(),
            plan: Vec::new(),
            roles: Vec::new(),
            bindings: BTreeMap::new(),
        }
    }

    pub fn has_role(&self, role: &str) -> bool {
        self.roles.iter().any(|r| r.id == role)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPoint {
    pub metric: MetricId,
    pub entity: EntityId,
    pub timestamp: DateTime<Utc>,
    pub value: f64,
}

impl MeasurementPoint {
    pub fn new(
        metric: impl Into<String>,
        entity: impl Into<String>,
        timestamp: DateTime<Utc>,
        value: f64,
    ) -> Result<Self, ModelError> {
        let (metric, entity) = (metric.into(), entity.into());
        if !value.is_finite() {
            return Err(ModelError::NonFiniteValue { metric, entity });
        }
        Ok(Self { metric, entity, timestamp, value })
    }
}

/// Time-ordered values of one metric for one entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSeries {
    pub metric: MetricId,
    pub entity: EntityId,
    pub points: Vec<MeasurementPoint>,
}

impl DataSeries {
    pub fn empty(metric: impl Into<String>, entity: impl Into<String>) -> Self {
        Self { metric: metric.into(), entity: entity.into(), points: Vec::new() }
    }

    pub fn new(
        metric: impl Into<String>,
        entity: impl Into<String>,
        points: Vec<MeasurementPoint>,
    ) -> Result<Self, ModelError> {
        let series = Self { metric: metric.into(), entity: entity.into(), points };
        for (i, p) in series.points.iter().enumerate() {
            if p.metric != series.metric || p.entity != series.entity {
                return Err(ModelError::InvalidSeries(i));
            }
            if i > 0 && series.points[i - 1].timestamp >= p.timestamp {
                return Err(ModelError::InvalidSeries(i));
            }
        }
        Ok(series)
    }

    /// Builds a series from `(timestamp, value)` pairs.
    pub fn from_values(
        metric: &str,
        entity: &str,
        values: impl IntoIterator<Item = (DateTime<Utc>, f64)>,
    ) -> Result<Self, ModelError> {
        let points = values
            .into_iter()
            .map(|(t, v)| MeasurementPoint::new(metric, entity, t, v))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(metric, entity, points)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn last(&self) -> Option<&MeasurementPoint> {
        self.points.last()
    }

    /// Points with `timestamp <= as_of`.
    pub fn truncated(&self, as_of: DateTime<Utc>) -> DataSeries {
        let end = self.points.partition_point(|p| p.timestamp <= as_of);
        DataSeries {
            metric: self.metric.clone(),
            entity: self.entity.clone(),
            points: self.points[..end].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Risk {
    pub id: String,
    pub name: String,
    pub probability: f64,
    pub importance: f64,
    pub damage: f64,
}

impl Risk {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: &str| ModelError::InvalidRisk { id: self.id.clone(), reason: reason.into() };
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(bad("probability outside [0,1]"));
        }
        if !(0.0..=1.0).contains(&self.importance) {
            return Err(bad("importance outside [0,1]"));
        }
        if !(self.damage >= 0.0) || !self.damage.is_finite() {
            return Err(bad("damage must be a finite nonnegative number"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Ok,
    Fault,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub timestamp: DateTime<Utc>,
    pub source: ComponentId,
    pub target: ComponentId,
    pub outcome: Outcome,
}

impl TraceEvent {
    pub fn validate(&self, allow_self: bool) -> Result<(), ModelError> {
        if !allow_self && self.source == self.target {
            return Err(ModelError::SelfCommunication(self.source.clone()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, day).unwrap()
    }

    #[test]
    fn date_inversion_is_reported() {
        let plan = vec![Task::new("A", d(5), d(1), 1.0, 0.0)];
        let v = validate_plan(&plan);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::DateInversion);
        assert_eq!(v[0].reason, "date inversion");
    }

    #[test]
    fn two_cycle_reported_once() {
        let plan = vec![
            Task::new("A", d(1), d(2), 1.0, 0.0).child_of("B"),
            Task::new("B", d(1), d(2), 1.0, 0.0).child_of("A"),
        ];
        let v = validate_plan(&plan);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].reason, "parent cycle {A,B}");
    }

    #[test]
    fn valid_tree_has_no_violations() {
        let plan = vec![
            Task::new("root", d(1), d(9), 0.0, 0.0),
            Task::new("a", d(1), d(5), 10.0, 1.0).child_of("root"),
            Task::new("b", d(3), d(9), 30.0, 0.0).child_of("root"),
        ];
        assert!(validate_plan(&plan).is_empty());
    }

    #[test]
    fn other_violations() {
        let mut t = Task::new("x", d(1), d(2), -1.0, 1.5);
        t.actual_start = Some(d(4));
        t.actual_end = Some(d(3));
        let plan = vec![t.clone(), t.child_of("ghost")];
        let kinds: Vec<_> = validate_plan(&plan).into_iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ViolationKind::DuplicateId));
        assert!(kinds.contains(&ViolationKind::ActualDateInversion));
        assert!(kinds.contains(&ViolationKind::NegativeBudget));
        assert!(kinds.contains(&ViolationKind::PercentOutOfRange));
        assert!(kinds.contains(&ViolationKind::UnknownParent { parent: "ghost".into() }));
    }

    #[test]
    fn rollup_single_child_identity() {
        let plan = vec![
            Task::new("p", d(1), d(5), 0.0, 0.0),
            Task::new("c", d(1), d(5), 10.0, 0.5).child_of("p"),
        ];
        let r = rollup(&plan, "p").unwrap();
        assert_eq!((r.planned_start, r.planned_end), (d(1), d(5)));
        assert_eq!(r.budget, 10.0);
        assert_eq!(r.percent_complete, 0.5);
    }

    #[test]
    fn rollup_weighted_mean() {
        let plan = vec![
            Task::new("p", d(1), d(1), 0.0, 0.0),
            Task::new("a", d(1), d(5), 10.0, 1.0).child_of("p"),
            Task::new("b", d(3), d(9), 30.0, 0.0).child_of("p"),
        ];
        let r = rollup(&plan, "p").unwrap();
        assert_eq!((r.planned_start, r.planned_end), (d(1), d(9)));
        assert_eq!(r.budget, 40.0);
        assert_eq!(r.percent_complete, 0.25);
    }

    #[test]
    fn rollup_zero_budget_falls_back_to_plain_mean() {
        let plan = vec![
            Task::new("p", d(1), d(1), 0.0, 0.0),
            Task::new("a", d(1), d(5), 0.0, 0.0).child_of("p"),
            Task::new("b", d(3), d(9), 0.0, 1.0).child_of("p"),
        ];
        assert_eq!(rollup(&plan, "p").unwrap().percent_complete, 0.5);
    }

    #[test]
    fn rollup_unknown_task() {
        assert_eq!(rollup(&[], "nope"), Err(ModelError::NotFound("nope".into())));
    }

    #[test]
    fn leaf_rollup_is_identity() {
        let plan = vec![Task::new("a", d(1), d(5), 3.0, 0.3)];
        assert_eq!(rollup(&plan, "a").unwrap(), plan[0]);
    }

    #[test]
    fn severity_order() {
        use StatusColor::*;
        let mut v = vec![Red, NoData, Yellow, Green];
        v.sort();
        assert_eq!(v, vec![NoData, Green, Yellow, Red]);
        assert_eq!(serde_json::to_string(&NoData).unwrap(), "\"NO_DATA\"");
    }

    #[test]
    fn measurement_rejects_non_finite() {
        let t = Utc::now();
        assert!(MeasurementPoint::new("m", "e", t, f64::NAN).is_err());
        assert!(MeasurementPoint::new("m", "e", t, f64::INFINITY).is_err());
        assert!(MeasurementPoint::new("m", "e", t, 1.0).is_ok());
    }

    #[test]
    fn series_must_be_strictly_increasing() {
        let t = Utc::now();
        let p = MeasurementPoint::new("m", "e", t, 1.0).unwrap();
        assert!(DataSeries::new("m", "e", vec![p.clone(), p.clone()]).is_err());
        let other = MeasurementPoint::new("x", "e", t, 1.0).unwrap();
        assert!(DataSeries::new("m", "e", vec![other]).is_err());
    }

    #[test]
    fn context_similarity() {
        let a = ContextVector::new().with("a", "1").with("b", "2").with("c", "3").with("d", "4");
        let b = a.clone().with("d", "x");
        assert_eq!(a.similarity(&b), 0.75);
        assert_eq!(a.similarity(&a), 1.0);
    }

    #[test]
    fn trace_self_communication() {
        let e = TraceEvent {
            timestamp: Utc::now(),
            source: "a".into(),
            target: "a".into(),
            outcome: Outcome::Ok,
        };
        assert!(e.validate(false).is_err());
        assert!(e.validate(true).is_ok());
    }
}
