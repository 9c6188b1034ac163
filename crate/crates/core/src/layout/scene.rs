//! The engine/UI wire format. Field order is fixed by declaration order, so
//! equal documents serialize to equal bytes.

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::bubble::BubbleItem;
use super::color::Rgb;
use super::gantt::GanttRow;
use super::graph::{ClusterHull, GraphEdge, GraphNode, GraphScene};
use super::treemap::Cuboid;
use crate::model::StatusColor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SceneKind {
    #[serde(rename = "GANTT")]
    Gantt,
    #[serde(rename = "TREEMAP3D")]
    Treemap3d,
    #[serde(rename = "BUBBLE")]
    Bubble,
    #[serde(rename = "GRAPH3D")]
    Graph3d,
    #[serde(rename = "TIMESERIES")]
    Timeseries,
    #[serde(rename = "TABLE")]
    Table,
}

impl SceneKind {
    pub fn is_3d(self) -> bool {
        matches!(self, SceneKind::Treemap3d | SceneKind::Graph3d)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SceneMeta {
    /// Id of the view node that produced the scene.
    pub node: String,
    pub as_of: Option<DateTime<Utc>>,
    pub execution_id: Option<String>,
    pub catena_version: Option<u32>,
    /// Day zero of the horizontal axis for time-based kinds.
    pub origin: Option<NaiveDate>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegendStop {
    pub label: String,
    pub color: Rgb,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Legend {
    pub title: String,
    pub stops: Vec<LegendStop>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesLine {
    pub id: String,
    pub label: String,
    pub status: StatusColor,
    pub color: Rgb,
    /// `[days since origin, value]`
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub node: String,
    pub name: String,
    pub status: StatusColor,
    pub color: Rgb,
    pub latest: Option<f64>,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SceneItem {
    GanttRow(GanttRow),
    Today { x: f64 },
    Cuboid(Cuboid),
    Bubble(BubbleItem),
    Node(GraphNode),
    Edge(GraphEdge),
    Cluster(ClusterHull),
    Line(SeriesLine),
    Row(TableRow),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDocument {
    pub kind: SceneKind,
    pub status: StatusColor,
    pub meta: SceneMeta,
    pub legend: Legend,
    pub items: Vec<SceneItem>,
}

impl SceneDocument {
    /// Empty scene shown while a view has no data.
    pub fn placeholder(kind: SceneKind, meta: SceneMeta) -> Self {
        Self {
            kind,
            status: StatusColor::NoData,
            meta: SceneMeta { message: Some("no data".into()), ..meta },
            legend: Legend::default(),
            items: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scene documents always serialize")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn graph(&self) -> GraphScene {
        let mut g = GraphScene::default();
        for item in &self.items {
            match item {
                SceneItem::Node(n) => g.nodes.push(n.clone()),
                SceneItem::Edge(e) => g.edges.push(e.clone()),
                SceneItem::Cluster(c) => g.clusters.push(c.clone()),
                _ => {}
            }
        }
        g
    }

    pub fn cuboids(&self) -> impl Iterator<Item = &Cuboid> {
        self.items.iter().filter_map(|i| match i {
            SceneItem::Cuboid(c) => Some(c),
            _ => None,
        })
    }
}
