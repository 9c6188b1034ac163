//! Goal-oriented composition: control goals and their questions select
//! reusable control components from a repository, and the selection is
//! wired into an executable catena.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catena::{FunctionInstance, ParamValue, Parameters, SeriesBinding, ViewInstance, VisualizationCatena};
use crate::model::{ContextVector, MetricId, Project, RoleId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GqmError {
    #[error("empty component repository")]
    EmptyRepository,
    #[error("metric `{metric}` required by goal `{goal}` has no data-series binding")]
    UnboundMetric { metric: MetricId, goal: String },
    #[error("parameter `{parameter}` of component `{component}` (goal `{goal}`) has no default and no experience value")]
    MissingParameter { component: String, parameter: String, goal: String },
    #[error("invalid goal `{goal}`: {reason}")]
    InvalidGoal { goal: String, reason: String },
    #[error("invalid question `{question}`: {reason}")]
    InvalidQuestion { question: String, reason: String },
    #[error("invalid component `{component}`: {reason}")]
    InvalidComponent { component: String, reason: String },
    #[error("component repository is malformed: {0}")]
    MalformedRepository(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Purpose {
    Characterize,
    Monitor,
    Control,
    Predict,
    Improve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGoal {
    pub id: String,
    pub object: String,
    pub purpose: Purpose,
    pub quality_focus: BTreeSet<String>,
    pub viewpoint: RoleId,
    #[serde(default)]
    pub context: ContextVector,
}

impl ControlGoal {
    pub fn validate(&self, project: &Project) -> Result<(), GqmError> {
        let bad = |reason: &str| GqmError::InvalidGoal { goal: self.id.clone(), reason: reason.into() };
        if self.id.is_empty() {
            return Err(bad("id is empty"));
        }
        if self.quality_focus.is_empty() {
            return Err(bad("quality focus is empty"));
        }
        if !project.has_role(&self.viewpoint) {
            return Err(bad(&format!("viewpoint `{}` is not a declared role", self.viewpoint)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub goal: String,
    pub text: String,
    pub metrics: BTreeSet<MetricId>,
}

impl Question {
    pub fn validate(&self, goals: &[ControlGoal]) -> Result<(), GqmError> {
        let bad = |reason: &str| GqmError::InvalidQuestion { question: self.id.clone(), reason: reason.into() };
        if self.metrics.is_empty() {
            return Err(bad("no metrics"));
        }
        if !goals.iter().any(|g| g.id == self.goal) {
            return Err(bad(&format!("unknown goal `{}`", self.goal)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ComponentKind {
    Technique,
    View,
}

/// Roles a component is meant for; serialized as `"ANY"` or a list of ids.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "RolesRepr", into = "RolesRepr")]
pub enum ApplicableRoles {
    #[default]
    Any,
    Only(BTreeSet<RoleId>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RolesRepr {
    Keyword(String),
    List(BTreeSet<RoleId>),
}

impl From<RolesRepr> for ApplicableRoles {
    fn from(r: RolesRepr) -> Self {
        match r {
            RolesRepr::Keyword(k) if k == "ANY" => ApplicableRoles::Any,
            RolesRepr::Keyword(k) => ApplicableRoles::Only(BTreeSet::from([k])),
            RolesRepr::List(l) => ApplicableRoles::Only(l),
        }
    }
}

impl From<ApplicableRoles> for RolesRepr {
    fn from(r: ApplicableRoles) -> Self {
        match r {
            ApplicableRoles::Any => RolesRepr::Keyword("ANY".into()),
            ApplicableRoles::Only(l) => RolesRepr::List(l),
        }
    }
}

impl ApplicableRoles {
    pub fn admits(&self, role: &str) -> bool {
        match self {
            ApplicableRoles::Any => true,
            ApplicableRoles::Only(roles) => roles.contains(role),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    #[serde(default)]
    pub default: Option<ParamValue>,
    /// Optional parameters may stay unset after composition.
    #[serde(default)]
    pub optional: bool,
}

/// Technique kinds whose inputs are other functions rather than metrics.
pub const FUNCTION_CONSUMERS: &[&str] = &["aggregate"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDescriptor {
    pub id: String,
    pub kind: ComponentKind,
    /// Technique or view implementation this component instantiates.
    pub implements: String,
    pub applicable_purposes: BTreeSet<Purpose>,
    pub applicable_focus: BTreeSet<String>,
    #[serde(default)]
    pub applicable_roles: ApplicableRoles,
    #[serde(default)]
    pub required_metrics: Vec<MetricId>,
    #[serde(default)]
    pub parameters: Vec<ParameterSpec>,
    /// Indicator criteria (a)–(e): supports the information need, supports
    /// the analysis type, right level of detail, indicates a management
    /// action, timely.
    pub indicator_checklist: [bool; 5],
}

impl ComponentDescriptor {
    pub fn validate(&self) -> Result<(), GqmError> {
        let bad = |reason: String| GqmError::InvalidComponent { component: self.id.clone(), reason };
        if self.id.is_empty() {
            return Err(bad("id is empty".into()));
        }
        if self.required_metrics.is_empty()
            && self.kind == ComponentKind::Technique
            && !FUNCTION_CONSUMERS.contains(&self.implements.as_str())
        {
            return Err(bad("techniques must require at least one metric".into()));
        }
        let unique: BTreeSet<&MetricId> = self.required_metrics.iter().collect();
        if unique.len() != self.required_metrics.len() {
            return Err(bad("duplicate required metric".into()));
        }
        let names: BTreeSet<&str> = self.parameters.iter().map(|p| p.name.as_str()).collect();
        if names.len() != self.parameters.len() {
            return Err(bad("duplicate parameter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComponentRepository {
    pub components: Vec<ComponentDescriptor>,
}

const DEFAULT_REPOSITORY: &str = include_str!("../assets/default_repository.json");

impl ComponentRepository {
    pub fn from_json(text: &str) -> Result<Self, GqmError> {
        let repo: ComponentRepository =
            serde_json::from_str(text).map_err(|e| GqmError::MalformedRepository(e.to_string()))?;
        let mut seen = BTreeSet::new();
        for c in &repo.components {
            c.validate()?;
            if !seen.insert(c.id.as_str()) {
                return Err(GqmError::MalformedRepository(format!("duplicate component id `{}`", c.id)));
            }
        }
        Ok(repo)
    }

    /// The repository shipped with the tool.
    pub fn default_repository() -> Self {
        Self::from_json(DEFAULT_REPOSITORY).expect("bundled repository is valid")
    }

    pub fn default_repository_json() -> &'static str {
        DEFAULT_REPOSITORY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMatch {
    pub descriptor: ComponentDescriptor,
    pub score: usize,
}

/// Every descriptor applicable to the goal: purpose admitted, focus
/// overlapping, viewpoint admitted and required metrics answered by the
/// goal's questions. Score is the focus overlap plus the number of checklist
/// criteria met; results are ordered by score descending, then id.
pub fn match_components(
    goal: &ControlGoal,
    questions: &[Question],
    repo: &[ComponentDescriptor],
) -> Result<Vec<ComponentMatch>, GqmError> {
    if repo.is_empty() {
        return Err(GqmError::EmptyRepository);
    }
    let answered: BTreeSet<&str> = questions
        .iter()
        .filter(|q| q.goal == goal.id)
        .flat_map(|q| q.metrics.iter().map(String::as_str))
        .collect();
    let mut matches: Vec<ComponentMatch> = repo
        .iter()
        .filter(|d| d.applicable_purposes.contains(&goal.purpose))
        .filter(|d| d.applicable_roles.admits(&goal.viewpoint))
        .filter(|d| d.required_metrics.iter().all(|m| answered.contains(m.as_str())))
        .filter_map(|d| {
            let overlap = d.applicable_focus.intersection(&goal.quality_focus).count();
            (overlap > 0).then(|| ComponentMatch {
                score: overlap + d.indicator_checklist.iter().filter(|c| **c).count(),
                descriptor: d.clone(),
            })
        })
        .collect();
    matches.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.descriptor.id.cmp(&b.descriptor.id)));
    Ok(matches)
}

/// Source of parameter values learned from earlier projects.
pub trait ExperienceLookup {
    fn lookup(&self, context: &ContextVector, key: &str) -> Option<ParamValue>;
}

/// No past experience: descriptor defaults only.
pub struct NoExperience;

impl ExperienceLookup for NoExperience {
    fn lookup(&self, _: &ContextVector, _: &str) -> Option<ParamValue> {
        None
    }
}

/// Key under which experience values for a component parameter are stored.
pub fn parameter_key(component: &str, parameter: &str) -> String {
    format!("{component}.{parameter}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalMatches {
    pub goal: ControlGoal,
    pub questions: Vec<Question>,
    pub matches: Vec<ComponentMatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub catena: VisualizationCatena,
    /// View id to the goal it serves.
    pub traceability: BTreeMap<String, String>,
}

fn resolve_parameters(
    descriptor: &ComponentDescriptor,
    goal: &ControlGoal,
    context: &ContextVector,
    experience: &dyn ExperienceLookup,
) -> Result<Parameters, GqmError> {
    let mut out = Parameters::new();
    for spec in &descriptor.parameters {
        let value = experience
            .lookup(context, &parameter_key(&descriptor.id, &spec.name))
            .or_else(|| spec.default.clone());
        match value {
            Some(v) => {
                out.insert(spec.name.clone(), v);
            }
            None if spec.optional => {}
            None => {
                return Err(GqmError::MissingParameter {
                    component: descriptor.id.clone(),
                    parameter: spec.name.clone(),
                    goal: goal.id.clone(),
                })
            }
        }
    }
    Ok(out)
}

pub fn binding_id(goal: &str, metric: &str) -> String {
    format!("{goal}/{metric}")
}

pub fn node_id(goal: &str, component: &str) -> String {
    format!("{goal}.{component}")
}

/// Wires matched components into a catena. Per goal: one binding per
/// required metric, one function per technique (fed by its metric
/// bindings, or by the goal's other functions for aggregating techniques),
/// one view per view component (fed by the goal's functions, or by its
/// bindings when there are none), and every view assigned to the goal's
/// viewpoint role.
pub fn compose_catena(
    goals: &[GoalMatches],
    project: &Project,
    experience: &dyn ExperienceLookup,
) -> Result<Composition, GqmError> {
    let mut ordered: Vec<&GoalMatches> = goals.iter().collect();
    ordered.sort_by(|a, b| a.goal.id.cmp(&b.goal.id));

    let mut catena = VisualizationCatena::default();
    let mut traceability = BTreeMap::new();
    for gm in ordered {
        let goal = &gm.goal;
        let mut context = project.context.clone();
        context.0.extend(goal.context.0.clone());

        let mut metrics: Vec<&MetricId> = Vec::new();
        for m in &gm.matches {
            for metric in &m.descriptor.required_metrics {
                if !metrics.contains(&metric) {
                    metrics.push(metric);
                }
            }
        }
        let has_views = gm.matches.iter().any(|m| m.descriptor.kind == ComponentKind::View);
        if metrics.is_empty() && has_views {
            let from_questions: BTreeSet<&MetricId> = gm
                .questions
                .iter()
                .filter(|q| q.goal == goal.id)
                .flat_map(|q| q.metrics.iter())
                .collect();
            metrics.extend(from_questions);
        }

        let mut goal_bindings = Vec::new();
        for metric in metrics {
            let entity = project.bindings.get(metric).ok_or_else(|| GqmError::UnboundMetric {
                metric: metric.clone(),
                goal: goal.id.clone(),
            })?;
            let id = binding_id(&goal.id, metric);
            catena.goal_trace.insert(id.clone(), goal.id.clone());
            catena.bindings.push(SeriesBinding { id: id.clone(), metric: metric.clone(), entity: entity.clone() });
            goal_bindings.push(id);
        }

        let mut plain = Vec::new();
        let mut consumers = Vec::new();
        for m in gm.matches.iter().filter(|m| m.descriptor.kind == ComponentKind::Technique) {
            if FUNCTION_CONSUMERS.contains(&m.descriptor.implements.as_str()) {
                consumers.push(m);
            } else {
                plain.push(m);
            }
        }
        let mut goal_functions = Vec::new();
        for m in plain {
            let d = &m.descriptor;
            let id = node_id(&goal.id, &d.id);
            catena.functions.push(FunctionInstance {
                id: id.clone(),
                component: d.id.clone(),
                technique: d.implements.clone(),
                parameters: resolve_parameters(d, goal, &context, experience)?,
                inputs: d.required_metrics.iter().map(|metric| binding_id(&goal.id, metric)).collect(),
            });
            catena.goal_trace.insert(id.clone(), goal.id.clone());
            goal_functions.push(id);
        }
        if !goal_functions.is_empty() {
            let base = goal_functions.clone();
            for m in consumers {
                let d = &m.descriptor;
                let id = node_id(&goal.id, &d.id);
                catena.functions.push(FunctionInstance {
                    id: id.clone(),
                    component: d.id.clone(),
                    technique: d.implements.clone(),
                    parameters: resolve_parameters(d, goal, &context, experience)?,
                    inputs: base.clone(),
                });
                catena.goal_trace.insert(id.clone(), goal.id.clone());
                goal_functions.push(id);
            }
        }

        let view_inputs = if goal_functions.is_empty() { goal_bindings.clone() } else { goal_functions.clone() };
        for m in gm.matches.iter().filter(|m| m.descriptor.kind == ComponentKind::View) {
            let d = &m.descriptor;
            let id = node_id(&goal.id, &d.id);
            catena.views.push(ViewInstance {
                id: id.clone(),
                component: d.id.clone(),
                view: d.implements.clone(),
                inputs: view_inputs.clone(),
                options: resolve_parameters(d, goal, &context, experience)?,
            });
            catena.goal_trace.insert(id.clone(), goal.id.clone());
            catena.role_assignments.entry(goal.viewpoint.clone()).or_default().insert(id.clone());
            traceability.insert(id, goal.id.clone());
        }
    }
    Ok(Composition { catena, traceability })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub criterion: char,
    pub description: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistReport {
    pub component: String,
    pub criteria: Vec<CriterionResult>,
    pub passed: usize,
    pub failing: Vec<char>,
}

pub const INDICATOR_CRITERIA: [(char, &str); 5] = [
    ('a', "supports analysis of the intended information need"),
    ('b', "supports the type of analysis needed"),
    ('c', "provides the appropriate level of detail"),
    ('d', "indicates a possible management action"),
    ('e', "provides timely information for decisions and action"),
];

pub fn checklist_report(descriptor: &ComponentDescriptor) -> ChecklistReport {
    let criteria: Vec<CriterionResult> = INDICATOR_CRITERIA
        .iter()
        .zip(descriptor.indicator_checklist)
        .map(|((c, text), passed)| CriterionResult { criterion: *c, description: text.to_string(), passed })
        .collect();
    ChecklistReport {
        component: descriptor.id.clone(),
        passed: criteria.iter().filter(|c| c.passed).count(),
        failing: criteria.iter().filter(|c| !c.passed).map(|c| c.criterion).collect(),
        criteria,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Role;

    fn goal(purpose: Purpose, focus: &[&str]) -> ControlGoal {
        ControlGoal {
            id: "g1".into(),
            object: "project".into(),
            purpose,
            quality_focus: focus.iter().map(|f| f.to_string()).collect(),
            viewpoint: "pm".into(),
            context: ContextVector::default(),
        }
    }

    fn question(metrics: &[&str]) -> Question {
        Question {
            id: "q1".into(),
            goal: "g1".into(),
            text: "how are we doing?".into(),
            metrics: metrics.iter().map(|m| m.to_string()).collect(),
        }
    }

    fn descriptor(id: &str, kind: ComponentKind, implements: &str, metrics: &[&str]) -> ComponentDescriptor {
        ComponentDescriptor {
            id: id.into(),
            kind,
            implements: implements.into(),
            applicable_purposes: [Purpose::Control, Purpose::Monitor].into(),
            applicable_focus: ["cost".to_string()].into(),
            applicable_roles: ApplicableRoles::Any,
            required_metrics: metrics.iter().map(|m| m.to_string()).collect(),
            parameters: Vec::new(),
            indicator_checklist: [true; 5],
        }
    }

    fn project() -> Project {
        let mut p = Project::new("p", "P");
        p.roles.push(Role::new("pm", "project manager"));
        for m in ["pv", "ev", "ac"] {
            p.bindings.insert(m.into(), "proj".into());
        }
        p
    }

    #[test]
    fn evm_matches_cost_control_goal() {
        let repo = [descriptor("evm", ComponentKind::Technique, "evm", &["pv", "ev", "ac"])];
        let m = match_components(&goal(Purpose::Control, &["cost"]), &[question(&["pv", "ev", "ac"])], &repo).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].descriptor.id, "evm");
        assert_eq!(m[0].score, 6);
    }

    #[test]
    fn unanswered_metrics_or_wrong_purpose_do_not_match() {
        let repo = [descriptor("evm", ComponentKind::Technique, "evm", &["pv", "ev", "ac"])];
        assert!(match_components(&goal(Purpose::Control, &["cost"]), &[question(&["pv"])], &repo)
            .unwrap()
            .is_empty());
        assert!(match_components(&goal(Purpose::Predict, &["cost"]), &[question(&["pv", "ev", "ac"])], &repo)
            .unwrap()
            .is_empty());
        let mut restricted = repo[0].clone();
        restricted.applicable_roles = ApplicableRoles::Only(["qa".to_string()].into());
        assert!(match_components(&goal(Purpose::Control, &["cost"]), &[question(&["pv", "ev", "ac"])], &[restricted])
            .unwrap()
            .is_empty());
    }

    #[test]
    fn empty_repository() {
        assert_eq!(
            match_components(&goal(Purpose::Control, &["cost"]), &[], &[]),
            Err(GqmError::EmptyRepository)
        );
    }

    #[test]
    fn equal_scores_ordered_by_id() {
        let repo = [
            descriptor("zeta", ComponentKind::View, "table", &[]),
            descriptor("alpha", ComponentKind::View, "table", &[]),
        ];
        let m = match_components(&goal(Purpose::Control, &["cost"]), &[], &repo).unwrap();
        let ids: Vec<_> = m.iter().map(|m| m.descriptor.id.as_str()).collect();
        assert_eq!(ids, ["alpha", "zeta"]);
    }

    #[test]
    fn compose_one_technique_one_view() {
        let g = goal(Purpose::Control, &["cost"]);
        let q = vec![question(&["pv", "ev", "ac"])];
        let repo = [
            descriptor("evm", ComponentKind::Technique, "evm", &["pv", "ev", "ac"]),
            descriptor("chart", ComponentKind::View, "timeseries", &[]),
        ];
        let matches = match_components(&g, &q, &repo).unwrap();
        let comp = compose_catena(&[GoalMatches { goal: g, questions: q, matches }], &project(), &NoExperience).unwrap();
        let c = &comp.catena;
        assert_eq!((c.bindings.len(), c.functions.len(), c.views.len()), (3, 1, 1));
        assert_eq!(c.role_assignments.len(), 1);
        assert_eq!(c.role_assignments["pm"].len(), 1);
        assert_eq!(c.functions[0].inputs, ["g1/pv", "g1/ev", "g1/ac"]);
        assert_eq!(c.views[0].inputs, ["g1.evm"]);
        assert_eq!(comp.traceability["g1.chart"], "g1");
        assert!(c.validate().is_empty());
    }

    #[test]
    fn compose_zero_goals() {
        let comp = compose_catena(&[], &project(), &NoExperience).unwrap();
        assert_eq!(comp.catena, VisualizationCatena::default());
    }

    #[test]
    fn unbound_metric() {
        let g = goal(Purpose::Control, &["cost"]);
        let q = vec![question(&["defect_density"])];
        let repo = [descriptor("dd", ComponentKind::Technique, "tolerance", &["defect_density"])];
        let matches = match_components(&g, &q, &repo).unwrap();
        assert_eq!(
            compose_catena(&[GoalMatches { goal: g, questions: q, matches }], &project(), &NoExperience),
            Err(GqmError::UnboundMetric { metric: "defect_density".into(), goal: "g1".into() })
        );
    }

    #[test]
    fn parameters_from_defaults_and_experience() {
        struct Fixed;
        impl ExperienceLookup for Fixed {
            fn lookup(&self, _: &ContextVector, key: &str) -> Option<ParamValue> {
                (key == "tol.tol").then_some(ParamValue::Number(0.08))
            }
        }
        let mut d = descriptor("tol", ComponentKind::Technique, "tolerance", &["ac"]);
        d.parameters = vec![
            ParameterSpec { name: "tol".into(), default: Some(ParamValue::Number(0.1)), optional: false },
            ParameterSpec { name: "red_factor".into(), default: Some(ParamValue::Number(2.0)), optional: false },
            ParameterSpec { name: "abs_tol".into(), default: None, optional: true },
        ];
        let g = goal(Purpose::Control, &["cost"]);
        let q = vec![question(&["ac"])];
        let matches = match_components(&g, &q, &[d.clone()]).unwrap();
        let gm = GoalMatches { goal: g.clone(), questions: q.clone(), matches };
        let comp = compose_catena(std::slice::from_ref(&gm), &project(), &Fixed).unwrap();
        let params = &comp.catena.functions[0].parameters;
        assert_eq!(params["tol"], ParamValue::Number(0.08));
        assert_eq!(params["red_factor"], ParamValue::Number(2.0));
        assert!(!params.contains_key("abs_tol"));

        d.parameters.push(ParameterSpec { name: "baseline".into(), default: None, optional: false });
        let matches = match_components(&g, &q, &[d]).unwrap();
        assert!(matches!(
            compose_catena(&[GoalMatches { goal: g, questions: q, matches }], &project(), &NoExperience),
            Err(GqmError::MissingParameter { .. })
        ));
    }

    #[test]
    fn checklist() {
        let mut d = descriptor("x", ComponentKind::View, "table", &[]);
        assert_eq!(checklist_report(&d).passed, 5);
        d.indicator_checklist = [false; 5];
        assert_eq!(checklist_report(&d).passed, 0);
        d.indicator_checklist = [true, false, true, false, true];
        let r = checklist_report(&d);
        assert_eq!(r.passed, 3);
        assert_eq!(r.failing, vec!['b', 'd']);
    }

    #[test]
    fn descriptor_validation() {
        let d = descriptor("t", ComponentKind::Technique, "tolerance", &[]);
        assert!(d.validate().is_err());
        let d = descriptor("t", ComponentKind::Technique, "aggregate", &[]);
        assert!(d.validate().is_ok());
        let bad = r#"{"components":[{"id":"x","kind":"VIEW","implements":"table","applicable_purposes":["MONITOR"],"applicable_focus":["cost"],"indicator_checklist":[true,true,true,true]}]}"#;
        assert!(ComponentRepository::from_json(bad).is_err());
    }

    #[test]
    fn default_repository_loads() {
        let repo = ComponentRepository::default_repository();
        assert!(repo.components.len() >= 7);
        assert!(repo.components.iter().any(|c| c.implements == "evm"));
        assert!(repo.components.iter().any(|c| c.implements == "faultgraph"));
    }

    #[test]
    fn goal_validation() {
        let p = project();
        assert!(goal(Purpose::Control, &["cost"]).validate(&p).is_ok());
        assert!(goal(Purpose::Control, &[]).validate(&p).is_err());
        let mut g = goal(Purpose::Control, &["cost"]);
        g.viewpoint = "nobody".into();
        assert!(g.validate(&p).is_err());
    }

    #[test]
    fn roles_serialization() {
        assert_eq!(serde_json::to_string(&ApplicableRoles::Any).unwrap(), "\"ANY\"");
        let only: ApplicableRoles = serde_json::from_str("[\"pm\"]").unwrap();
        assert!(only.admits("pm") && !only.admits("qa"));
    }
}
