//! View states: the inputs of one view collected at execution time, and
//! their rendering into scene documents.

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catena::{keyword, number_or, text_or, DataSource, IndicatorValue, ParamError, Parameters, ViewInstance};
use crate::fault::{component_stats, edge_stats, fault_scene, CommEdgeStats, ComponentStats, FaultSceneOptions};
use crate::layout::bubble::{bubble_portfolio, BubbleParams, Quadrant};
use crate::layout::color::{color_scale, Palette, Rgb, GRAY};
use crate::layout::gantt::gantt_layout;
use crate::layout::graph::ForceParams;
use crate::layout::scene::{Legend, LegendStop, SceneDocument, SceneItem, SceneKind, SceneMeta, SeriesLine, TableRow};
use crate::layout::treemap::{treemap3d, TreeNode, TreemapAlgorithm};
use crate::layout::LayoutError;
use crate::model::{DataSeries, Risk, StatusColor, Task, TraceEvent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ViewError {
    #[error("unknown view kind `{0}`")]
    UnknownView(String),
    #[error(transparent)]
    Parameter(#[from] ParamError),
}

pub fn scene_kind(view: &str) -> Option<SceneKind> {
    Some(match view {
        "gantt" => SceneKind::Gantt,
        "treemap3d" => SceneKind::Treemap3d,
        "bubble" => SceneKind::Bubble,
        "faultgraph" => SceneKind::Graph3d,
        "timeseries" => SceneKind::Timeseries,
        "table" => SceneKind::Table,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ViewPayload {
    NoData,
    Gantt { plan: Vec<Task>, today: NaiveDate },
    Treemap { tree: TreeNode },
    Bubble { risks: Vec<Risk> },
    FaultGraph { components: Vec<ComponentStats>, edges: Vec<CommEdgeStats> },
    Timeseries { series: Vec<DataSeries>, indicators: Vec<IndicatorValue> },
    Table { series: Vec<DataSeries>, indicators: Vec<IndicatorValue> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewState {
    pub view: String,
    pub component: String,
    pub kind: SceneKind,
    /// Most severe status among contributing indicators.
    pub status: StatusColor,
    /// Function ids upstream of the view.
    pub contributing: Vec<String>,
    pub options: Parameters,
    pub payload: ViewPayload,
}

fn latest(series: &DataSeries) -> Option<f64> {
    series.last().map(|p| p.value)
}

#[derive(Default)]
struct Trie {
    leaf: Option<(f64, f64, f64)>,
    children: BTreeMap<String, Trie>,
}

impl Trie {
    fn into_node(self, path: String) -> TreeNode {
        if self.children.is_empty() {
            let (s, h, c) = self.leaf.unwrap_or_default();
            return TreeNode::leaf(path, s, h, c);
        }
        let prefix = if path.is_empty() { String::new() } else { format!("{path}/") };
        let mut kids: Vec<TreeNode> =
            self.children.into_iter().map(|(name, t)| t.into_node(format!("{prefix}{name}"))).collect();
        if let Some((s, h, c)) = self.leaf {
            kids.insert(0, TreeNode::leaf(path.clone(), s, h, c));
        }
        TreeNode::branch(path, kids)
    }
}

/// Hierarchy from `/`-separated entity paths carrying each entity's latest
/// size, height and color metric values.
pub fn entity_tree(
    data: &dyn DataSource,
    as_of: DateTime<Utc>,
    size_metric: &str,
    height_metric: &str,
    color_metric: &str,
) -> Option<TreeNode> {
    let mut root = Trie::default();
    let mut any = false;
    for entity in data.entities(size_metric) {
        let Some(size) = latest(&data.series(size_metric, &entity).truncated(as_of)) else {
            continue;
        };
        let h = latest(&data.series(height_metric, &entity).truncated(as_of)).unwrap_or(0.0);
        let c = latest(&data.series(color_metric, &entity).truncated(as_of)).unwrap_or(0.0);
        let mut node = &mut root;
        for part in entity.split('/').filter(|p| !p.is_empty()) {
            node = node.children.entry(part.to_string()).or_default();
        }
        node.leaf = Some((size.max(0.0), h.max(0.0), c.max(0.0)));
        any = true;
    }
    any.then(|| root.into_node(String::new()))
}

fn traces_until(traces: &[TraceEvent], as_of: DateTime<Utc>) -> Vec<TraceEvent> {
    traces.iter().filter(|t| t.timestamp <= as_of).cloned().collect()
}

/// Collects the inputs of `view` at `as_of`. Views whose upstream functions
/// all report NO_DATA get an empty payload.
pub fn view_state(
    view: &ViewInstance,
    series: Vec<DataSeries>,
    indicators: Vec<IndicatorValue>,
    contributing: &[(String, StatusColor)],
    data: &dyn DataSource,
    as_of: DateTime<Utc>,
) -> Result<ViewState, ViewError> {
    let kind = scene_kind(&view.view).ok_or_else(|| ViewError::UnknownView(view.view.clone()))?;
    let starved = !contributing.is_empty() && contributing.iter().all(|(_, s)| *s == StatusColor::NoData);
    let o = &view.options;
    let payload = if starved {
        ViewPayload::NoData
    } else {
        match kind {
            SceneKind::Gantt if data.plan().is_empty() => ViewPayload::NoData,
            SceneKind::Gantt => ViewPayload::Gantt { plan: data.plan().to_vec(), today: as_of.date_naive() },
            SceneKind::Treemap3d => {
                let tree = entity_tree(
                    data,
                    as_of,
                    text_or(o, "size_metric", "loc")?,
                    text_or(o, "height_metric", "complexity")?,
                    text_or(o, "color_metric", "defects")?,
                );
                match tree {
                    Some(tree) if tree.total_size() > 0.0 => ViewPayload::Treemap { tree },
                    _ => ViewPayload::NoData,
                }
            }
            SceneKind::Bubble if data.risks().is_empty() => ViewPayload::NoData,
            SceneKind::Bubble => ViewPayload::Bubble { risks: data.risks().to_vec() },
            SceneKind::Graph3d => {
                let edges = edge_stats(&traces_until(data.traces(), as_of));
                let components = component_stats(&edges, data.clustering());
                if components.is_empty() {
                    ViewPayload::NoData
                } else {
                    ViewPayload::FaultGraph { components, edges }
                }
            }
            SceneKind::Timeseries | SceneKind::Table => {
                let empty = series.iter().all(|s| s.is_empty()) && indicators.iter().all(|i| i.series.is_empty());
                if empty {
                    ViewPayload::NoData
                } else if kind == SceneKind::Table {
                    ViewPayload::Table { series, indicators }
                } else {
                    ViewPayload::Timeseries { series, indicators }
                }
            }
        }
    };
    let status = match contributing.iter().map(|(_, s)| *s).max() {
        Some(s) => s,
        None if payload == ViewPayload::NoData => StatusColor::NoData,
        None => StatusColor::Green,
    };
    Ok(ViewState {
        view: view.id.clone(),
        component: view.component.clone(),
        kind,
        status,
        contributing: contributing.iter().map(|(id, _)| id.clone()).collect(),
        options: view.options.clone(),
        payload,
    })
}

pub fn status_rgb(status: StatusColor) -> Rgb {
    match status {
        StatusColor::Green => color_scale(0.0),
        StatusColor::Yellow => color_scale(0.5),
        StatusColor::Red => color_scale(1.0),
        StatusColor::NoData => GRAY,
    }
}

const SERIES_COLORS: [Rgb; 4] = [Rgb([31, 119, 180]), Rgb([255, 127, 14]), Rgb([148, 103, 189]), Rgb([140, 86, 75])];

fn param_err(e: ParamError) -> LayoutError {
    LayoutError::InvalidInput(e.to_string())
}

fn stop(label: &str, color: Rgb) -> LegendStop {
    LegendStop { label: label.to_string(), color }
}

fn ramp_legend(title: &str, palette: Palette) -> Legend {
    Legend {
        title: title.to_string(),
        stops: vec![stop("0", palette.color(0.0)), stop("0.5", palette.color(0.5)), stop("1", palette.color(1.0))],
    }
}

fn status_legend() -> Legend {
    Legend {
        title: "status".into(),
        stops: [StatusColor::Green, StatusColor::Yellow, StatusColor::Red, StatusColor::NoData]
            .into_iter()
            .map(|s| stop(s.as_str(), status_rgb(s)))
            .collect(),
    }
}

fn day_offset(origin: NaiveDate, t: DateTime<Utc>) -> f64 {
    (t - origin.and_hms_opt(0, 0, 0).unwrap().and_utc()).num_milliseconds() as f64 / 86_400_000.0
}

/// Lays out a view state as a scene document.
pub fn render_scene(state: &ViewState, meta: SceneMeta) -> Result<SceneDocument, LayoutError> {
    let o = &state.options;
    let mut meta = SceneMeta { node: state.view.clone(), ..meta };
    let (legend, items) = match &state.payload {
        ViewPayload::NoData => return Ok(SceneDocument::placeholder(state.kind, meta)),
        ViewPayload::Gantt { plan, today } => {
            let chart = gantt_layout(plan, *today)?;
            meta.origin = Some(chart.origin);
            let mut items: Vec<SceneItem> = chart.rows.into_iter().map(SceneItem::GanttRow).collect();
            items.push(SceneItem::Today { x: chart.today });
            let legend = Legend {
                title: "schedule".into(),
                stops: vec![
                    stop("on track", color_scale(0.0)),
                    stop("behind by up to 25%", color_scale(0.5)),
                    stop("behind by more than 25%", color_scale(1.0)),
                    stop("summary", GRAY),
                ],
            };
            (legend, items)
        }
        ViewPayload::Treemap { tree } => {
            let algorithm = keyword(o, "algorithm", TreemapAlgorithm::Squarified).map_err(param_err)?;
            let palette = keyword(o, "palette", Palette::Traffic).map_err(param_err)?;
            let cuboids = treemap3d(tree, algorithm, palette)?;
            let title = text_or(o, "color_metric", "defects").map_err(param_err)?;
            (ramp_legend(title, palette), cuboids.into_iter().map(SceneItem::Cuboid).collect())
        }
        ViewPayload::Bubble { risks } => {
            let d = BubbleParams::default();
            let params = BubbleParams {
                r_max: number_or(o, "r_max", d.r_max).map_err(param_err)?,
                probability_split: number_or(o, "probability_split", d.probability_split).map_err(param_err)?,
                importance_split: number_or(o, "importance_split", d.importance_split).map_err(param_err)?,
            };
            let items = bubble_portfolio(risks, &params)?;
            let legend = Legend {
                title: "risk strategy".into(),
                stops: [
                    ("accept", Quadrant::Accept),
                    ("watch", Quadrant::Watch),
                    ("prevent", Quadrant::Prevent),
                    ("mitigate", Quadrant::Mitigate),
                ]
                .into_iter()
                .map(|(l, q)| stop(l, q.color()))
                .collect(),
            };
            (legend, items.into_iter().map(SceneItem::Bubble).collect())
        }
        ViewPayload::FaultGraph { components, edges } => {
            let f = ForceParams::default();
            let iterations = number_or(o, "iterations", f.iterations as f64).map_err(param_err)?;
            let seed = number_or(o, "seed", f.seed as f64).map_err(param_err)?;
            if !(iterations >= 1.0) || !(seed >= 0.0) {
                return Err(LayoutError::InvalidInput("iterations and seed must be nonnegative integers".into()));
            }
            let options = FaultSceneOptions {
                opacity: number_or(o, "opacity", 0.25).map_err(param_err)?,
                palette: keyword(o, "palette", Palette::Traffic).map_err(param_err)?,
                force: ForceParams {
                    spring_len: number_or(o, "spring_len", f.spring_len).map_err(param_err)?,
                    iterations: iterations as usize,
                    cooling: number_or(o, "cooling", f.cooling).map_err(param_err)?,
                    cluster_gravity: number_or(o, "cluster_gravity", f.cluster_gravity).map_err(param_err)?,
                    seed: seed as u64,
                },
            };
            if !(0.0..=1.0).contains(&options.opacity) {
                return Err(LayoutError::InvalidInput("opacity must lie in [0, 1]".into()));
            }
            let scene = fault_scene(components, edges, &options)?;
            let items = scene
                .nodes
                .into_iter()
                .map(SceneItem::Node)
                .chain(scene.edges.into_iter().map(SceneItem::Edge))
                .chain(scene.clusters.into_iter().map(SceneItem::Cluster))
                .collect();
            (ramp_legend("fault ratio", options.palette), items)
        }
        ViewPayload::Timeseries { series, indicators } => {
            let first = series
                .iter()
                .filter_map(|s| s.points.first().map(|p| p.timestamp))
                .chain(indicators.iter().filter_map(|i| i.series.first().map(|p| p.t)))
                .min();
            let Some(first) = first else {
                return Ok(SceneDocument::placeholder(state.kind, meta));
            };
            let origin = first.date_naive();
            meta.origin = Some(origin);
            let mut items = Vec::new();
            for (i, s) in series.iter().enumerate() {
                let id = format!("{}/{}", s.metric, s.entity);
                items.push(SceneItem::Line(SeriesLine {
                    label: id.clone(),
                    id,
                    status: state.status,
                    color: SERIES_COLORS[i % SERIES_COLORS.len()],
                    points: s.points.iter().map(|p| [day_offset(origin, p.timestamp), p.value]).collect(),
                }));
            }
            for ind in indicators {
                items.push(SceneItem::Line(SeriesLine {
                    id: ind.node.clone(),
                    label: format!("{} ({})", ind.node, ind.name),
                    status: ind.status,
                    color: status_rgb(ind.status),
                    points: ind.series.iter().map(|p| [day_offset(origin, p.t), p.value]).collect(),
                }));
            }
            (status_legend(), items)
        }
        ViewPayload::Table { series, indicators } => {
            let mut items = Vec::new();
            for ind in indicators {
                items.push(SceneItem::Row(TableRow {
                    node: ind.node.clone(),
                    name: ind.name.clone(),
                    status: ind.status,
                    color: status_rgb(ind.status),
                    latest: ind.latest(),
                    explanation: ind.explanation.clone(),
                }));
            }
            for s in series {
                items.push(SceneItem::Row(TableRow {
                    node: format!("{}/{}", s.metric, s.entity),
                    name: s.metric.clone(),
                    status: state.status,
                    color: status_rgb(state.status),
                    latest: latest(s),
                    explanation: format!("{} points", s.len()),
                }));
            }
            (status_legend(), items)
        }
    };
    Ok(SceneDocument { kind: state.kind, status: state.status, meta, legend, items })
}
