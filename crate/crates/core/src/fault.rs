//! Communication-fault statistics over component traces and the colored,
//! clustered graph built from them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::layout::color::{Palette, GRAY};
use crate::layout::graph::{cluster_hulls, force_layout, ForceParams, GraphEdge, GraphNode, GraphScene};
use crate::layout::LayoutError;
use crate::model::{ComponentId, Outcome, TraceEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommEdgeStats {
    pub source: ComponentId,
    pub target: ComponentId,
    pub total: u64,
    pub faults: u64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub id: ComponentId,
    pub total: u64,
    pub faults: u64,
    /// `None` for components without any communication.
    pub ratio: Option<f64>,
    pub cluster: String,
}

fn ratio(faults: u64, total: u64) -> Option<f64> {
    (total > 0).then(|| faults as f64 / total as f64)
}

/// Per directed edge `(total, faults)` counts. Counters merge associatively,
/// so traces can be folded in any order or in parallel chunks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultCounter {
    edges: BTreeMap<(ComponentId, ComponentId), (u64, u64)>,
}

impl FaultCounter {
    pub fn add(&mut self, event: &TraceEvent) {
        let slot = self.edges.entry((event.source.clone(), event.target.clone())).or_default();
        slot.0 += 1;
        if event.outcome == Outcome::Fault {
            slot.1 += 1;
        }
    }

    pub fn merge(&mut self, other: FaultCounter) {
        for (k, (t, f)) in other.edges {
            let slot = self.edges.entry(k).or_default();
            slot.0 += t;
            slot.1 += f;
        }
    }

    pub fn stats(&self) -> Vec<CommEdgeStats> {
        self.edges
            .iter()
            .map(|((s, t), (total, faults))| CommEdgeStats {
                source: s.clone(),
                target: t.clone(),
                total: *total,
                faults: *faults,
                ratio: ratio(*faults, *total),
            })
            .collect()
    }
}

/// One entry per observed ordered `(source, target)` pair, sorted by pair.
pub fn edge_stats(events: &[TraceEvent]) -> Vec<CommEdgeStats> {
    let mut counter = FaultCounter::default();
    for e in events {
        counter.add(e);
    }
    counter.stats()
}

/// Node totals are sums over incident edges in both directions. A
/// self-edge is counted once. Components absent from `clustering` form
/// singleton clusters named after themselves.
pub fn component_stats(
    edges: &[CommEdgeStats],
    clustering: &BTreeMap<ComponentId, String>,
) -> Vec<ComponentStats> {
    let mut acc: BTreeMap<&str, (u64, u64)> =
        clustering.keys().map(|c| (c.as_str(), (0, 0))).collect();
    for e in edges {
        let s = acc.entry(e.source.as_str()).or_default();
        s.0 += e.total;
        s.1 += e.faults;
        if e.target != e.source {
            let t = acc.entry(e.target.as_str()).or_default();
            t.0 += e.total;
            t.1 += e.faults;
        }
    }
    acc.into_iter()
        .map(|(id, (total, faults))| ComponentStats {
            id: id.to_string(),
            total,
            faults,
            ratio: ratio(faults, total),
            cluster: clustering.get(id).cloned().unwrap_or_else(|| id.to_string()),
        })
        .collect()
}

/// Directed edges merged into undirected pairs for drawing; the merged
/// ratio is taken over the combined counts.
pub fn merge_undirected(edges: &[CommEdgeStats]) -> Vec<CommEdgeStats> {
    let mut merged: BTreeMap<(&str, &str), (u64, u64)> = BTreeMap::new();
    for e in edges {
        let key = if e.source <= e.target {
            (e.source.as_str(), e.target.as_str())
        } else {
            (e.target.as_str(), e.source.as_str())
        };
        let slot = merged.entry(key).or_default();
        slot.0 += e.total;
        slot.1 += e.faults;
    }
    merged
        .into_iter()
        .map(|((s, t), (total, faults))| CommEdgeStats {
            source: s.to_string(),
            target: t.to_string(),
            total,
            faults,
            ratio: ratio(faults, total),
        })
        .collect()
}

pub fn edge_width(total: u64) -> f64 {
    (1.0 + total as f64).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSceneOptions {
    pub opacity: f64,
    pub palette: Palette,
    pub force: ForceParams,
}

impl Default for FaultSceneOptions {
    fn default() -> Self {
        Self { opacity: 0.25, palette: Palette::Traffic, force: ForceParams::default() }
    }
}

/// Colors nodes and edges by fault ratio, sizes edges by `ln(1 + total)`,
/// positions nodes with the clustered force layout and wraps each cluster
/// in a hull with the requested opacity.
pub fn fault_scene(
    components: &[ComponentStats],
    edges: &[CommEdgeStats],
    options: &FaultSceneOptions,
) -> Result<GraphScene, LayoutError> {
    if components.is_empty() {
        return Ok(GraphScene::default());
    }
    let index: BTreeMap<&str, usize> =
        components.iter().enumerate().map(|(i, c)| (c.id.as_str(), i)).collect();
    let mut cluster_ids: Vec<&str> = components.iter().map(|c| c.cluster.as_str()).collect();
    cluster_ids.sort_unstable();
    cluster_ids.dedup();
    let labels: Vec<usize> = components
        .iter()
        .map(|c| cluster_ids.binary_search(&c.cluster.as_str()).unwrap())
        .collect();

    let drawn = merge_undirected(edges);
    let mut pairs = Vec::with_capacity(drawn.len());
    for e in &drawn {
        let (Some(&s), Some(&t)) = (index.get(e.source.as_str()), index.get(e.target.as_str())) else {
            return Err(LayoutError::InvalidInput(format!(
                "edge {} -> {} references an unknown component",
                e.source, e.target
            )));
        };
        pairs.push((s, t));
    }
    let layout = force_layout(components.len(), &pairs, &labels, &options.force)?;

    let nodes: Vec<GraphNode> = components
        .iter()
        .zip(&layout.positions)
        .map(|(c, p)| GraphNode {
            id: c.id.clone(),
            position: *p,
            color: c.ratio.map(|r| options.palette.color(r)).unwrap_or(GRAY),
            cluster: c.cluster.clone(),
            total: c.total,
            faults: c.faults,
            ratio: c.ratio,
            actions: Vec::new(),
        })
        .collect();
    let edges = drawn
        .iter()
        .map(|e| {
            let r = e.ratio.unwrap_or(0.0);
            GraphEdge {
                source: e.source.clone(),
                target: e.target.clone(),
                color: options.palette.color(r),
                width: edge_width(e.total),
                total: e.total,
                faults: e.faults,
                ratio: r,
            }
        })
        .collect();
    let clusters = cluster_hulls(&nodes, options.opacity);
    Ok(GraphScene { nodes, edges, clusters })
}
