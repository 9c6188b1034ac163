//! The visualization catena: a DAG from series bindings through control
//! functions to views, its validation, and its execution over a data source.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{ComponentId, DataSeries, EntityId, MetricId, RoleId, Risk, StatusColor, Task, TraceEvent};
use crate::techniques::{
    aggregate_status, evm, evm_indicator, tolerance_check, trend_indicator, AggregationMode, Baseline, Direction,
    EvmCuts, TechniqueError, ToleranceSpec, TrendSpec, WeightedCuts,
};
use crate::views::{view_state, ViewError, ViewState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Number(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Numbers, booleans and anything else as text.
    pub fn parse(text: &str) -> Self {
        if let Ok(x) = text.parse::<f64>() {
            ParamValue::Number(x)
        } else if let Ok(b) = text.parse::<bool>() {
            ParamValue::Bool(b)
        } else {
            ParamValue::Text(text.to_string())
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Number(x) => write!(f, "{x}"),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

pub type Parameters = BTreeMap<String, ParamValue>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("parameter `{name}` is missing")]
    Missing { name: String },
    #[error("parameter `{name}` has the wrong type: expected {expected}")]
    WrongType { name: String, expected: &'static str },
    #[error("parameter `{name}`: {reason}")]
    Invalid { name: String, reason: String },
}

pub fn opt_number(params: &Parameters, name: &str) -> Result<Option<f64>, ParamError> {
    match params.get(name) {
        None => Ok(None),
        Some(ParamValue::Number(x)) => Ok(Some(*x)),
        Some(_) => Err(ParamError::WrongType { name: name.into(), expected: "number" }),
    }
}

pub fn number_or(params: &Parameters, name: &str, default: f64) -> Result<f64, ParamError> {
    Ok(opt_number(params, name)?.unwrap_or(default))
}

pub fn number(params: &Parameters, name: &str) -> Result<f64, ParamError> {
    opt_number(params, name)?.ok_or_else(|| ParamError::Missing { name: name.into() })
}

pub fn text_or<'a>(params: &'a Parameters, name: &str, default: &'a str) -> Result<&'a str, ParamError> {
    match params.get(name) {
        None => Ok(default),
        Some(ParamValue::Text(s)) => Ok(s),
        Some(_) => Err(ParamError::WrongType { name: name.into(), expected: "text" }),
    }
}

/// Parses an upper- or lower-case enum keyword through its serde name.
pub fn keyword<T: serde::de::DeserializeOwned>(params: &Parameters, name: &str, default: T) -> Result<T, ParamError> {
    match params.get(name) {
        None => Ok(default),
        Some(ParamValue::Text(s)) => serde_json::from_value(serde_json::Value::String(s.to_uppercase()))
            .or_else(|_| serde_json::from_value(serde_json::Value::String(s.to_lowercase())))
            .map_err(|_| ParamError::Invalid { name: name.into(), reason: format!("unknown value `{s}`") }),
        Some(_) => Err(ParamError::WrongType { name: name.into(), expected: "text" }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesBinding {
    pub id: String,
    pub metric: MetricId,
    pub entity: EntityId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionInstance {
    pub id: String,
    /// Repository component this instance was created from.
    #[serde(default)]
    pub component: ComponentId,
    pub technique: String,
    #[serde(default)]
    pub parameters: Parameters,
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewInstance {
    pub id: String,
    #[serde(default)]
    pub component: ComponentId,
    pub view: String,
    pub inputs: Vec<String>,
    #[serde(default)]
    pub options: Parameters,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VisualizationCatena {
    #[serde(default)]
    pub bindings: Vec<SeriesBinding>,
    #[serde(default)]
    pub functions: Vec<FunctionInstance>,
    #[serde(default)]
    pub views: Vec<ViewInstance>,
    #[serde(default)]
    pub role_assignments: BTreeMap<RoleId, BTreeSet<String>>,
    #[serde(default)]
    pub goal_trace: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeKind {
    Binding,
    Function,
    View,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CatenaViolationKind {
    DuplicateId,
    DanglingReference { reference: String },
    ViewAsInput { reference: String },
    Cycle { members: Vec<String> },
    UnreachableView,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatenaViolation {
    pub node: String,
    #[serde(flatten)]
    pub kind: CatenaViolationKind,
    pub message: String,
}

impl CatenaViolation {
    fn new(node: &str, kind: CatenaViolationKind) -> Self {
        let message = match &kind {
            CatenaViolationKind::DuplicateId => format!("duplicate id {node}"),
            CatenaViolationKind::DanglingReference { reference } => format!("dangling reference {reference}"),
            CatenaViolationKind::ViewAsInput { reference } => format!("view {reference} used as an input"),
            CatenaViolationKind::Cycle { members } => format!("cycle {{{}}}", members.join(",")),
            CatenaViolationKind::UnreachableView => format!("view {node} is not reachable from any binding"),
        };
        Self { node: node.to_string(), kind, message }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatenaError {
    #[error("catena is not executable: {}", .0.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; "))]
    Unvalidated(Vec<CatenaViolation>),
    #[error("unknown component kind `{kind}` on node `{node}`")]
    UnknownComponent { node: String, kind: String },
    #[error("node `{node}`: {source}")]
    Parameter { node: String, source: ParamError },
    #[error("node `{node}`: {source}")]
    Technique { node: String, source: TechniqueError },
    #[error("node `{node}`: {reason}")]
    InvalidInput { node: String, reason: String },
    #[error("unknown node `{0}`")]
    NotFound(String),
}

impl VisualizationCatena {
    fn kinds(&self) -> BTreeMap<&str, NodeKind> {
        let mut m = BTreeMap::new();
        for b in &self.bindings {
            m.entry(b.id.as_str()).or_insert(NodeKind::Binding);
        }
        for f in &self.functions {
            m.entry(f.id.as_str()).or_insert(NodeKind::Function);
        }
        for v in &self.views {
            m.entry(v.id.as_str()).or_insert(NodeKind::View);
        }
        m
    }

    fn edges(&self) -> Vec<(&str, &[String])> {
        self.functions
            .iter()
            .map(|f| (f.id.as_str(), f.inputs.as_slice()))
            .chain(self.views.iter().map(|v| (v.id.as_str(), v.inputs.as_slice())))
            .collect()
    }

    pub fn node_count(&self) -> usize {
        self.bindings.len() + self.functions.len() + self.views.len()
    }

    pub fn function(&self, id: &str) -> Option<&FunctionInstance> {
        self.functions.iter().find(|f| f.id == id)
    }

    pub fn view(&self, id: &str) -> Option<&ViewInstance> {
        self.views.iter().find(|v| v.id == id)
    }

    /// Every violated invariant; empty iff the catena is executable.
    pub fn validate(&self) -> Vec<CatenaViolation> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        let ids = self
            .bindings
            .iter()
            .map(|b| &b.id)
            .chain(self.functions.iter().map(|f| &f.id))
            .chain(self.views.iter().map(|v| &v.id));
        for id in ids {
            if !seen.insert(id.as_str()) {
                out.push(CatenaViolation::new(id, CatenaViolationKind::DuplicateId));
            }
        }
        let kinds = self.kinds();
        for (node, inputs) in self.edges() {
            for input in inputs {
                match kinds.get(input.as_str()) {
                    None => out.push(CatenaViolation::new(
                        node,
                        CatenaViolationKind::DanglingReference { reference: input.clone() },
                    )),
                    Some(NodeKind::View) if input != node => out.push(CatenaViolation::new(
                        node,
                        CatenaViolationKind::ViewAsInput { reference: input.clone() },
                    )),
                    _ => {}
                }
            }
        }
        for views in self.role_assignments.values() {
            for v in views {
                if kinds.get(v.as_str()) != Some(&NodeKind::View) {
                    out.push(CatenaViolation::new(v, CatenaViolationKind::DanglingReference { reference: v.clone() }));
                }
            }
        }
        for members in self.cycles() {
            out.push(CatenaViolation::new(&members[0].clone(), CatenaViolationKind::Cycle { members }));
        }
        let reached = self.reachable_from_bindings();
        for v in &self.views {
            if !reached.contains(v.id.as_str()) {
                out.push(CatenaViolation::new(&v.id, CatenaViolationKind::UnreachableView));
            }
        }
        out
    }

    fn successors(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (node, inputs) in self.edges() {
            for i in inputs {
                succ.entry(i.as_str()).or_default().push(node);
            }
        }
        succ
    }

    fn reachable_from_bindings(&self) -> BTreeSet<&str> {
        let succ = self.successors();
        let mut seen: BTreeSet<&str> = self.bindings.iter().map(|b| b.id.as_str()).collect();
        let mut queue: VecDeque<&str> = seen.iter().copied().collect();
        while let Some(n) = queue.pop_front() {
            for s in succ.get(n).into_iter().flatten() {
                if seen.insert(s) {
                    queue.push_back(s);
                }
            }
        }
        seen
    }

    /// Strongly connected components that contain a cycle, each sorted.
    fn cycles(&self) -> Vec<Vec<String>> {
        let inputs: BTreeMap<&str, Vec<&str>> =
            self.edges().into_iter().map(|(n, i)| (n, i.iter().map(String::as_str).collect())).collect();
        let nodes: Vec<&str> = inputs.keys().copied().collect();
        // Tarjan over the input relation.
        struct State<'a> {
            index: BTreeMap<&'a str, usize>,
            low: BTreeMap<&'a str, usize>,
            stack: Vec<&'a str>,
            on_stack: BTreeSet<&'a str>,
            next: usize,
            out: Vec<Vec<String>>,
        }
        fn visit<'a>(v: &'a str, g: &BTreeMap<&'a str, Vec<&'a str>>, s: &mut State<'a>) {
            s.index.insert(v, s.next);
            s.low.insert(v, s.next);
            s.next += 1;
            s.stack.push(v);
            s.on_stack.insert(v);
            for &w in g.get(v).into_iter().flatten() {
                if !g.contains_key(w) {
                    continue;
                }
                if !s.index.contains_key(w) {
                    visit(w, g, s);
                    let lw = s.low[w];
                    let lv = s.low.get_mut(v).unwrap();
                    *lv = (*lv).min(lw);
                } else if s.on_stack.contains(w) {
                    let iw = s.index[w];
                    let lv = s.low.get_mut(v).unwrap();
                    *lv = (*lv).min(iw);
                }
            }
            if s.low[v] == s.index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = s.stack.pop().unwrap();
                    s.on_stack.remove(w);
                    comp.push(w.to_string());
                    if w == v {
                        break;
                    }
                }
                let self_loop = g.get(v).is_some_and(|i| i.contains(&v));
                if comp.len() > 1 || self_loop {
                    comp.sort();
                    s.out.push(comp);
                }
            }
        }
        let mut s = State {
            index: BTreeMap::new(),
            low: BTreeMap::new(),
            stack: Vec::new(),
            on_stack: BTreeSet::new(),
            next: 0,
            out: Vec::new(),
        };
        for n in nodes {
            if !s.index.contains_key(n) {
                visit(n, &inputs, &mut s);
            }
        }
        s.out.sort();
        s.out
    }

    /// Node ids in a topological order; ties broken by id. Requires an
    /// acyclic catena with resolved references.
    pub fn topological_order(&self) -> Vec<String> {
        let mut indegree: BTreeMap<&str, usize> = self.kinds().keys().map(|k| (*k, 0)).collect();
        for (node, inputs) in self.edges() {
            *indegree.get_mut(node).unwrap() += inputs.len();
        }
        let succ = self.successors();
        let mut ready: BTreeSet<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
        let mut order = Vec::with_capacity(indegree.len());
        while let Some(n) = ready.pop_first() {
            order.push(n.to_string());
            for s in succ.get(n).into_iter().flatten() {
                let d = indegree.get_mut(s).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.insert(s);
                }
            }
        }
        order
    }

    /// Function ids feeding `node`, directly or transitively.
    pub fn upstream_functions(&self, node: &str) -> BTreeSet<String> {
        let functions: BTreeMap<&str, &FunctionInstance> =
            self.functions.iter().map(|f| (f.id.as_str(), f)).collect();
        let start: Vec<&String> = match (self.view(node), functions.get(node)) {
            (Some(v), _) => v.inputs.iter().collect(),
            (None, Some(f)) => f.inputs.iter().collect(),
            _ => Vec::new(),
        };
        let mut out = BTreeSet::new();
        let mut stack = start;
        while let Some(id) = stack.pop() {
            if let Some(f) = functions.get(id.as_str()) {
                if out.insert(id.clone()) {
                    stack.extend(f.inputs.iter());
                }
            }
        }
        out
    }

    /// Sets a function parameter or view option, returning the old value.
    pub fn set_parameter(&mut self, node: &str, name: &str, value: ParamValue) -> Result<Option<ParamValue>, CatenaError> {
        if let Some(f) = self.functions.iter_mut().find(|f| f.id == node) {
            return Ok(f.parameters.insert(name.to_string(), value));
        }
        if let Some(v) = self.views.iter_mut().find(|v| v.id == node) {
            return Ok(v.options.insert(name.to_string(), value));
        }
        Err(CatenaError::NotFound(node.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("catenas always serialize")
    }

    /// SHA-256 over the canonical serialization.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorPoint {
    pub t: DateTime<Utc>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorValue {
    pub node: String,
    pub name: String,
    pub series: Vec<IndicatorPoint>,
    pub status: StatusColor,
    pub explanation: String,
}

impl IndicatorValue {
    pub fn no_data(node: &str, name: &str) -> Self {
        Self {
            node: node.to_string(),
            name: name.to_string(),
            series: Vec::new(),
            status: StatusColor::NoData,
            explanation: "no data".into(),
        }
    }

    pub fn latest(&self) -> Option<f64> {
        self.series.last().map(|p| p.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationEvent {
    pub id: String,
    pub node: String,
    pub timestamp: DateTime<Utc>,
    pub severity: StatusColor,
    pub previous: StatusColor,
    pub message: String,
    pub acknowledged: bool,
    pub acknowledged_by: Option<RoleId>,
}

/// A transition back to a less severe color. Informational only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusChange {
    pub node: String,
    pub timestamp: DateTime<Utc>,
    pub from: StatusColor,
    pub to: StatusColor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub id: Option<String>,
    pub catena_version: Option<u32>,
    pub as_of: DateTime<Utc>,
    /// Node ids in evaluation order.
    pub order: Vec<String>,
    pub indicators: Vec<IndicatorValue>,
    pub view_states: Vec<ViewState>,
    pub deviations: Vec<DeviationEvent>,
    pub recoveries: Vec<StatusChange>,
}

impl ExecutionResult {
    pub fn statuses(&self) -> BTreeMap<String, StatusColor> {
        self.indicators.iter().map(|i| (i.node.clone(), i.status)).collect()
    }

    pub fn worst_status(&self) -> StatusColor {
        self.indicators.iter().map(|i| i.status).max().unwrap_or_default()
    }

    pub fn indicator(&self, node: &str) -> Option<&IndicatorValue> {
        self.indicators.iter().find(|i| i.node == node)
    }

    pub fn view_state(&self, view: &str) -> Option<&ViewState> {
        self.view_states.iter().find(|v| v.view == view)
    }
}

/// Read access to a project's ingested data. Time-stamped data is returned
/// in full; the engine truncates it at `as_of`.
pub trait DataSource {
    fn series(&self, metric: &str, entity: &str) -> DataSeries;
    fn entities(&self, metric: &str) -> Vec<EntityId>;
    fn plan(&self) -> &[Task];
    fn risks(&self) -> &[Risk];
    fn traces(&self) -> &[TraceEvent];
    fn clustering(&self) -> &BTreeMap<ComponentId, String>;

    fn budget_at_completion(&self) -> Option<f64> {
        let plan = self.plan();
        let leaves: f64 = plan
            .iter()
            .filter(|t| !plan.iter().any(|c| c.parent.as_deref() == Some(t.id.as_str())))
            .map(|t| t.budget)
            .sum();
        (leaves > 0.0).then_some(leaves)
    }
}

pub const TECHNIQUES: &[&str] = &["evm", "tolerance", "trend", "aggregate"];

enum Output {
    Series(DataSeries),
    Indicator(IndicatorValue),
}

fn param<T>(node: &str, r: Result<T, ParamError>) -> Result<T, CatenaError> {
    r.map_err(|source| CatenaError::Parameter { node: node.to_string(), source })
}

fn technique<T>(node: &str, r: Result<T, TechniqueError>) -> Result<T, CatenaError> {
    r.map_err(|source| CatenaError::Technique { node: node.to_string(), source })
}

fn series_input<'a>(
    f: &FunctionInstance,
    outputs: &'a BTreeMap<String, Output>,
    i: usize,
) -> Result<&'a DataSeries, CatenaError> {
    let bad = |reason: String| CatenaError::InvalidInput { node: f.id.clone(), reason };
    let id = f.inputs.get(i).ok_or_else(|| bad(format!("{} expects input #{}", f.technique, i + 1)))?;
    match outputs.get(id) {
        Some(Output::Series(s)) => Ok(s),
        _ => Err(bad(format!("input `{id}` is not a series binding"))),
    }
}

fn run_function(
    f: &FunctionInstance,
    outputs: &BTreeMap<String, Output>,
    data: &dyn DataSource,
    as_of: DateTime<Utc>,
) -> Result<IndicatorValue, CatenaError> {
    let p = &f.parameters;
    let node = f.id.as_str();
    match f.technique.as_str() {
        "evm" => {
            let (pv, ev, ac) = (series_input(f, outputs, 0)?, series_input(f, outputs, 1)?, series_input(f, outputs, 2)?);
            let cuts = EvmCuts {
                green_cut: param(node, number_or(p, "green_cut", 0.95))?,
                yellow_cut: param(node, number_or(p, "yellow_cut", 0.80))?,
            };
            if pv.is_empty() || ev.is_empty() || ac.is_empty() {
                return Ok(IndicatorValue::no_data(node, "earned value"));
            }
            let bac = match param(node, opt_number(p, "bac"))? {
                Some(b) => b,
                None => data.budget_at_completion().ok_or_else(|| CatenaError::Parameter {
                    node: node.to_string(),
                    source: ParamError::Missing { name: "bac".into() },
                })?,
            };
            let snaps = technique(node, evm(pv, ev, ac, bac, &cuts))?;
            Ok(evm_indicator(node, &snaps, &cuts))
        }
        "tolerance" => {
            let actual = series_input(f, outputs, 0)?;
            let baseline = if f.inputs.len() > 1 {
                Baseline::Series(series_input(f, outputs, 1)?.clone())
            } else {
                Baseline::Fixed(param(node, number(p, "baseline"))?)
            };
            let spec = ToleranceSpec {
                baseline,
                tol: param(node, number(p, "tol"))?,
                red_factor: param(node, number_or(p, "red_factor", 2.0))?,
                abs_tol: param(node, opt_number(p, "abs_tol"))?,
            };
            technique(node, tolerance_check(node, actual, &spec))
        }
        "trend" => {
            let series = series_input(f, outputs, 0)?;
            let window = param(node, number_or(p, "window", 5.0))?;
            if !(window >= 2.0) || window.fract() != 0.0 {
                return Err(CatenaError::Parameter {
                    node: node.into(),
                    source: ParamError::Invalid { name: "window".into(), reason: "must be an integer >= 2".into() },
                });
            }
            let spec = TrendSpec {
                window: window as usize,
                threshold: param(node, number(p, "threshold"))?,
                direction: param(node, keyword(p, "direction", Direction::Above))?,
            };
            let horizon = param(node, number_or(p, "horizon", 14.0))?;
            if series.len() < spec.window {
                let mut v = IndicatorValue::no_data(node, "trend");
                v.explanation = format!("needs {} points, has {}", spec.window, series.len());
                return Ok(v);
            }
            technique(node, trend_indicator(node, series, &spec, horizon))
        }
        "aggregate" => {
            let mode = param(node, keyword(p, "mode", AggregationMode::Worst))?;
            let cuts = WeightedCuts {
                green_cut: param(node, number_or(p, "green_cut", 0.75))?,
                yellow_cut: param(node, number_or(p, "yellow_cut", 0.4))?,
            };
            let mut children = Vec::new();
            for id in &f.inputs {
                match outputs.get(id) {
                    Some(Output::Indicator(i)) => {
                        let w = param(node, number_or(p, &format!("weight.{id}"), 1.0))?;
                        children.push((i.status, w));
                    }
                    _ => {
                        return Err(CatenaError::InvalidInput {
                            node: node.into(),
                            reason: format!("input `{id}` is not a function"),
                        })
                    }
                }
            }
            let status = technique(node, aggregate_status(&children, mode, &cuts))?;
            if status == StatusColor::NoData {
                return Ok(IndicatorValue::no_data(node, "aggregate"));
            }
            let score = |c: StatusColor| match c {
                StatusColor::Green => 1.0,
                StatusColor::Yellow => 0.5,
                _ => 0.0,
            };
            let present: Vec<_> = children.iter().filter(|(c, _)| *c != StatusColor::NoData).collect();
            let value = match mode {
                AggregationMode::Worst => score(status),
                AggregationMode::Weighted => {
                    let total: f64 = present.iter().map(|(_, w)| w).sum();
                    if total > 0.0 {
                        present.iter().map(|(c, w)| score(*c) * w).sum::<f64>() / total
                    } else {
                        present.iter().map(|(c, _)| score(*c)).sum::<f64>() / present.len() as f64
                    }
                }
            };
            let counts = |c: StatusColor| present.iter().filter(|(s, _)| *s == c).count();
            Ok(IndicatorValue {
                node: node.to_string(),
                name: "aggregate".into(),
                series: vec![IndicatorPoint { t: as_of, value }],
                status,
                explanation: format!(
                    "{} of {} inputs: {} green, {} yellow, {} red",
                    match mode {
                        AggregationMode::Worst => "worst",
                        AggregationMode::Weighted => "weighted",
                    },
                    present.len(),
                    counts(StatusColor::Green),
                    counts(StatusColor::Yellow),
                    counts(StatusColor::Red),
                ),
            })
        }
        other => Err(CatenaError::UnknownComponent { node: node.to_string(), kind: other.to_string() }),
    }
}

pub fn deviation_id(node: &str, as_of: DateTime<Utc>) -> String {
    format!("{node}@{}", as_of.format("%Y%m%dT%H%M%SZ"))
}

/// Evaluates every node in topological order against data truncated at
/// `as_of`. `previous` holds each function's status from the prior
/// execution; a function that becomes strictly more severe and is now
/// YELLOW or RED yields a deviation event.
pub fn execute(
    catena: &VisualizationCatena,
    data: &dyn DataSource,
    as_of: DateTime<Utc>,
    previous: &BTreeMap<String, StatusColor>,
) -> Result<ExecutionResult, CatenaError> {
    let violations = catena.validate();
    if !violations.is_empty() {
        return Err(CatenaError::Unvalidated(violations));
    }
    let bindings: BTreeMap<&str, &SeriesBinding> = catena.bindings.iter().map(|b| (b.id.as_str(), b)).collect();
    let functions: BTreeMap<&str, &FunctionInstance> = catena.functions.iter().map(|f| (f.id.as_str(), f)).collect();
    let views: BTreeMap<&str, &ViewInstance> = catena.views.iter().map(|v| (v.id.as_str(), v)).collect();

    let order = catena.topological_order();
    let mut outputs: BTreeMap<String, Output> = BTreeMap::new();
    let mut view_states = Vec::new();
    for id in &order {
        if let Some(b) = bindings.get(id.as_str()) {
            let series = data.series(&b.metric, &b.entity).truncated(as_of);
            outputs.insert(id.clone(), Output::Series(series));
        } else if let Some(f) = functions.get(id.as_str()) {
            let value = run_function(f, &outputs, data, as_of)?;
            outputs.insert(id.clone(), Output::Indicator(value));
        } else if let Some(v) = views.get(id.as_str()) {
            let mut series = Vec::new();
            let mut direct = Vec::new();
            for input in &v.inputs {
                match outputs.get(input) {
                    Some(Output::Series(s)) => series.push(s.clone()),
                    Some(Output::Indicator(i)) => direct.push(i.clone()),
                    None => {}
                }
            }
            let contributing: Vec<(String, StatusColor)> = catena
                .upstream_functions(&v.id)
                .into_iter()
                .filter_map(|f| match outputs.get(&f) {
                    Some(Output::Indicator(i)) => Some((f, i.status)),
                    _ => None,
                })
                .collect();
            let state = view_state(v, series, direct, &contributing, data, as_of).map_err(|e| match e {
                ViewError::UnknownView(kind) => CatenaError::UnknownComponent { node: v.id.clone(), kind },
                ViewError::Parameter(source) => CatenaError::Parameter { node: v.id.clone(), source },
            })?;
            view_states.push(state);
        }
    }

    let mut indicators: Vec<IndicatorValue> = order
        .iter()
        .filter_map(|id| match outputs.remove(id) {
            Some(Output::Indicator(i)) => Some(i),
            _ => None,
        })
        .collect();
    indicators.sort_by(|a, b| a.node.cmp(&b.node));
    view_states.sort_by(|a, b| a.view.cmp(&b.view));

    let mut deviations = Vec::new();
    let mut recoveries = Vec::new();
    for ind in &indicators {
        let before = previous.get(&ind.node).copied().unwrap_or_default();
        let now = ind.status;
        if now > before && now.is_deviation() {
            deviations.push(DeviationEvent {
                id: deviation_id(&ind.node, as_of),
                node: ind.node.clone(),
                timestamp: as_of,
                severity: now,
                previous: before,
                message: format!("{} {} -> {}: {}", ind.node, before, now, ind.explanation),
                acknowledged: false,
                acknowledged_by: None,
            });
        } else if now < before && before.is_deviation() && now != StatusColor::NoData {
            recoveries.push(StatusChange { node: ind.node.clone(), timestamp: as_of, from: before, to: now });
        }
    }

    Ok(ExecutionResult {
        id: None,
        catena_version: None,
        as_of,
        order,
        indicators,
        view_states,
        deviations,
        recoveries,
    })
}

/// View states assigned to `role`, most severe first, then by view id.
pub fn role_view(result: &ExecutionResult, catena: &VisualizationCatena, role: &str) -> Vec<ViewState> {
    let Some(assigned) = catena.role_assignments.get(role) else {
        return Vec::new();
    };
    let mut out: Vec<ViewState> =
        result.view_states.iter().filter(|v| assigned.contains(&v.view)).cloned().collect();
    out.sort_by(|a, b| b.status.cmp(&a.status).then_with(|| a.view.cmp(&b.view)));
    out
}

/// A problem known after the fact, against which alerts are judged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthIncident {
    pub id: String,
    /// Function node expected to flag the problem.
    pub node: String,
    pub start: DateTime<Utc>,
    pub detected_deadline: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Detection {
    InTime,
    TooLate,
    Missed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentOutcome {
    pub incident: String,
    pub node: String,
    pub detection: Detection,
    pub first_event: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PostmortemReport {
    pub in_time: usize,
    pub too_late: usize,
    pub missed: usize,
    pub incidents: Vec<IncidentOutcome>,
    /// Ids of events that match no incident.
    pub false_positives: Vec<String>,
}

/// An event matches an incident when it comes from the incident's node at
/// or after the incident start.
pub fn postmortem(events: &[DeviationEvent], incidents: &[GroundTruthIncident]) -> PostmortemReport {
    let mut report = PostmortemReport::default();
    let mut matched = BTreeSet::new();
    for inc in incidents {
        let mut hits: Vec<&DeviationEvent> =
            events.iter().filter(|e| e.node == inc.node && e.timestamp >= inc.start).collect();
        hits.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
        matched.extend(hits.iter().map(|e| e.id.as_str()));
        let detection = match hits.first() {
            None => Detection::Missed,
            Some(first) if first.timestamp <= inc.detected_deadline => Detection::InTime,
            Some(_) => Detection::TooLate,
        };
        match detection {
            Detection::InTime => report.in_time += 1,
            Detection::TooLate => report.too_late += 1,
            Detection::Missed => report.missed += 1,
        }
        report.incidents.push(IncidentOutcome {
            incident: inc.id.clone(),
            node: inc.node.clone(),
            detection,
            first_event: hits.first().map(|e| e.id.clone()),
        });
    }
    report.false_positives =
        events.iter().filter(|e| !matched.contains(e.id.as_str())).map(|e| e.id.clone()).collect();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::views::ViewPayload;
    use chrono::{Duration, TimeZone};

    #[derive(Default)]
    pub(crate) struct Mem {
        series: BTreeMap<(String, String), DataSeries>,
        plan: Vec<Task>,
        risks: Vec<Risk>,
        traces: Vec<TraceEvent>,
        clustering: BTreeMap<String, String>,
    }

    impl Mem {
        fn with(mut self, metric: &str, entity: &str, values: &[(i64, f64)]) -> Self {
            let s = DataSeries::from_values(metric, entity, values.iter().map(|(d, v)| (t(*d), *v))).unwrap();
            self.series.insert((metric.into(), entity.into()), s);
            self
        }
    }

    impl DataSource for Mem {
        fn series(&self, metric: &str, entity: &str) -> DataSeries {
            self.series
                .get(&(metric.to_string(), entity.to_string()))
                .cloned()
                .unwrap_or_else(|| DataSeries::empty(metric, entity))
        }
        fn entities(&self, metric: &str) -> Vec<EntityId> {
            self.series.keys().filter(|(m, _)| m == metric).map(|(_, e)| e.clone()).collect()
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
        fn clustering(&self) -> &BTreeMap<String, String> {
            &self.clustering
        }
    }

    fn t(day: i64) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap() + Duration::days(day)
    }

    fn chain() -> VisualizationCatena {
        VisualizationCatena {
            bindings: vec![SeriesBinding { id: "b".into(), metric: "cost".into(), entity: "p".into() }],
            functions: vec![FunctionInstance {
                id: "f".into(),
                component: "tol".into(),
                technique: "tolerance".into(),
                parameters: Parameters::from([
                    ("baseline".to_string(), ParamValue::Number(100.0)),
                    ("tol".to_string(), ParamValue::Number(0.10)),
                ]),
                inputs: vec!["b".into()],
            }],
            views: vec![ViewInstance {
                id: "v".into(),
                component: "ts".into(),
                view: "timeseries".into(),
                inputs: vec!["f".into()],
                options: Parameters::new(),
            }],
            role_assignments: BTreeMap::from([("pm".to_string(), BTreeSet::from(["v".to_string()]))]),
            goal_trace: BTreeMap::new(),
        }
    }

    #[test]
    fn in_band_chain() {
        let data = Mem::default().with("cost", "p", &[(0, 98.0), (1, 102.0)]);
        let r = execute(&chain(), &data, t(5), &BTreeMap::new()).unwrap();
        assert_eq!(r.indicators.len(), 1);
        assert_eq!(r.indicators[0].status, StatusColor::Green);
        assert!(r.deviations.is_empty());
        assert_eq!(r.view_states.len(), 1);
        assert_eq!(r.order, ["b", "f", "v"]);
    }

    #[test]
    fn green_to_red_emits_once() {
        let data = Mem::default().with("cost", "p", &[(0, 98.0), (1, 102.0), (2, 125.0)]);
        let first = execute(&chain(), &data, t(1), &BTreeMap::new()).unwrap();
        let second = execute(&chain(), &data, t(2), &first.statuses()).unwrap();
        assert_eq!(second.deviations.len(), 1);
        assert_eq!(second.deviations[0].severity, StatusColor::Red);
        assert_eq!(second.deviations[0].previous, StatusColor::Green);
        let again = execute(&chain(), &data, t(2), &second.statuses()).unwrap();
        assert!(again.deviations.is_empty());
        let back = Mem::default().with("cost", "p", &[(0, 98.0), (1, 102.0), (2, 125.0), (3, 100.0)]);
        let rec = execute(&chain(), &back, t(3), &second.statuses()).unwrap();
        assert!(rec.deviations.is_empty());
        assert_eq!(rec.recoveries.len(), 1);
        assert_eq!(rec.recoveries[0].to, StatusColor::Green);
    }

    #[test]
    fn empty_store_gives_no_data() {
        let r = execute(&chain(), &Mem::default(), t(5), &BTreeMap::new()).unwrap();
        assert_eq!(r.indicators[0].status, StatusColor::NoData);
        assert!(r.indicators[0].series.is_empty());
        assert!(r.deviations.is_empty());
        assert_eq!(r.view_states[0].payload, ViewPayload::NoData);
        assert_eq!(r.view_states[0].status, StatusColor::NoData);
    }

    #[test]
    fn as_of_truncates() {
        let data = Mem::default().with("cost", "p", &[(0, 100.0), (3, 125.0)]);
        let r = execute(&chain(), &data, t(1), &BTreeMap::new()).unwrap();
        assert_eq!(r.indicators[0].status, StatusColor::Green);
        assert_eq!(r.indicators[0].series.len(), 1);
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let mut c = chain();
        c.functions[0].inputs.push("f".into());
        let v = c.validate();
        assert!(v.iter().any(|v| matches!(&v.kind, CatenaViolationKind::Cycle { members } if members == &["f"])));
        assert!(matches!(execute(&c, &Mem::default(), t(0), &BTreeMap::new()), Err(CatenaError::Unvalidated(_))));
    }

    #[test]
    fn dangling_reference() {
        let mut c = chain();
        c.views[0].inputs.push("f9".into());
        let v = c.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].message, "dangling reference f9");
    }

    #[test]
    fn unreachable_view_and_duplicates() {
        let mut c = chain();
        c.views.push(ViewInstance {
            id: "orphan".into(),
            component: String::new(),
            view: "table".into(),
            inputs: vec![],
            options: Parameters::new(),
        });
        c.bindings.push(c.bindings[0].clone());
        let kinds: Vec<_> = c.validate().into_iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&CatenaViolationKind::UnreachableView));
        assert!(kinds.contains(&CatenaViolationKind::DuplicateId));
    }

    #[test]
    fn unknown_technique() {
        let mut c = chain();
        c.functions[0].technique = "astrology".into();
        assert!(matches!(
            execute(&c, &Mem::default(), t(0), &BTreeMap::new()),
            Err(CatenaError::UnknownComponent { .. })
        ));
    }

    #[test]
    fn parameter_update_changes_band() {
        let mut c = chain();
        let data = Mem::default().with("cost", "p", &[(0, 107.0)]);
        let r = execute(&c, &data, t(0), &BTreeMap::new()).unwrap();
        assert_eq!(r.indicators[0].status, StatusColor::Green);
        assert_eq!(c.set_parameter("f", "tol", ParamValue::Number(0.05)).unwrap(), Some(ParamValue::Number(0.1)));
        let r = execute(&c, &data, t(0), &BTreeMap::new()).unwrap();
        assert_eq!(r.indicators[0].status, StatusColor::Yellow);
        assert!(r.indicators[0].explanation.contains("green <= 0.05"));
        assert!(c.set_parameter("nope", "tol", ParamValue::Number(0.05)).is_err());
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(chain().digest(), chain().digest());
        let mut c = chain();
        c.set_parameter("f", "tol", ParamValue::Number(0.2)).unwrap();
        assert_ne!(c.digest(), chain().digest());
        let round: VisualizationCatena = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(round.digest(), c.digest());
    }

    fn view_state_with(id: &str, status: StatusColor) -> ViewState {
        ViewState {
            view: id.into(),
            component: String::new(),
            kind: crate::layout::SceneKind::Table,
            status,
            contributing: Vec::new(),
            options: Parameters::new(),
            payload: ViewPayload::NoData,
        }
    }

    #[test]
    fn role_view_ordering() {
        let mut c = VisualizationCatena::default();
        c.role_assignments.insert(
            "manager".into(),
            BTreeSet::from(["gantt".to_string(), "evm-chart".to_string()]),
        );
        c.role_assignments.insert("idle".into(), BTreeSet::new());
        let mut r = execute(&VisualizationCatena::default(), &Mem::default(), t(0), &BTreeMap::new()).unwrap();
        r.view_states = vec![view_state_with("gantt", StatusColor::Green), view_state_with("evm-chart", StatusColor::Red)];
        let ids: Vec<_> = role_view(&r, &c, "manager").into_iter().map(|v| v.view).collect();
        assert_eq!(ids, ["evm-chart", "gantt"]);
        assert!(role_view(&r, &c, "idle").is_empty());
        assert!(role_view(&r, &c, "ghost").is_empty());
        r.view_states = vec![view_state_with("gantt", StatusColor::Green), view_state_with("evm-chart", StatusColor::Green)];
        let ids: Vec<_> = role_view(&r, &c, "manager").into_iter().map(|v| v.view).collect();
        assert_eq!(ids, ["evm-chart", "gantt"]);
    }

    fn event(id: &str, node: &str, day: i64) -> DeviationEvent {
        DeviationEvent {
            id: id.into(),
            node: node.into(),
            timestamp: t(day),
            severity: StatusColor::Red,
            previous: StatusColor::Green,
            message: String::new(),
            acknowledged: false,
            acknowledged_by: None,
        }
    }

    fn incident(id: &str, node: &str, start: i64, deadline: i64) -> GroundTruthIncident {
        GroundTruthIncident { id: id.into(), node: node.into(), start: t(start), detected_deadline: t(deadline) }
    }

    #[test]
    fn postmortem_classes() {
        let r = postmortem(&[event("e", "f", 2)], &[incident("i", "f", 0, 5)]);
        assert_eq!(r.incidents[0].detection, Detection::InTime);
        let r = postmortem(&[event("e", "f", 9)], &[incident("i", "f", 0, 5)]);
        assert_eq!(r.incidents[0].detection, Detection::TooLate);
        let r = postmortem(
            &[event("late", "f", 9), event("stray", "g", 1)],
            &[incident("i1", "f", 0, 5), incident("i2", "h", 0, 5)],
        );
        assert_eq!((r.in_time, r.too_late, r.missed), (0, 1, 1));
        assert_eq!(r.false_positives, ["stray"]);
    }

    #[test]
    fn events_before_start_do_not_match() {
        let r = postmortem(&[event("early", "f", 1)], &[incident("i", "f", 3, 5)]);
        assert_eq!(r.missed, 1);
        assert_eq!(r.false_positives, ["early"]);
    }

    #[test]
    fn aggregate_of_functions() {
        let mut c = chain();
        c.functions.push(FunctionInstance {
            id: "agg".into(),
            component: "rollup".into(),
            technique: "aggregate".into(),
            parameters: Parameters::new(),
            inputs: vec!["f".into()],
        });
        let data = Mem::default().with("cost", "p", &[(0, 125.0)]);
        let r = execute(&c, &data, t(0), &BTreeMap::new()).unwrap();
        assert_eq!(r.indicator("agg").unwrap().status, StatusColor::Red);
        assert_eq!(r.deviations.len(), 2);
        assert_eq!(c.upstream_functions("v"), BTreeSet::from(["f".to_string()]));
    }

    #[test]
    fn param_value_parsing() {
        assert_eq!(ParamValue::parse("0.05"), ParamValue::Number(0.05));
        assert_eq!(ParamValue::parse("true"), ParamValue::Bool(true));
        assert_eq!(ParamValue::parse("WORST"), ParamValue::Text("WORST".into()));
        let v: ParamValue = serde_json::from_str("2").unwrap();
        assert_eq!(v, ParamValue::Number(2.0));
    }
}
