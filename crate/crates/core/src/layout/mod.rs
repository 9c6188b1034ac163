//! Geometry producers for the view families. Everything here is a pure
//! function of its inputs.

pub mod bubble;
pub mod color;
pub mod gantt;
pub mod graph;
pub mod hull;
pub mod scene;
pub mod svg;
pub mod treemap;

use thiserror::Error;

pub use bubble::{bubble_portfolio, BubbleItem, BubbleParams, Quadrant};
pub use color::{color_scale, Palette, Rgb};
pub use gantt::{gantt_layout, Bar, GanttChart, GanttRow};
pub use graph::{force_layout, ClusterHull, ForceLayout, ForceParams, GraphEdge, GraphNode, GraphScene};
pub use scene::{Legend, LegendStop, SceneDocument, SceneItem, SceneKind, SceneMeta};
pub use svg::render_svg;
pub use treemap::{treemap3d, Cuboid, Rect, TreeNode, TreemapAlgorithm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("all sizes are zero")]
    DegenerateTree,
    #[error("layout diverged at iteration {iteration}")]
    LayoutDiverged { iteration: usize },
    #[error("invalid layout input: {0}")]
    InvalidInput(String),
    #[error("no SVG export for {0:?} scenes")]
    Unsupported(SceneKind),
}
