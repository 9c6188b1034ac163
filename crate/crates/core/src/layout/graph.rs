//! Spring-electrical layout of clustered graphs in 3D.
//!
//! Forces follow the classic Fruchterman–Reingold pair: repulsion `k²/d`
//! between every pair of nodes and attraction `d²/k` along edges, with
//! `k` equal to the spring length. Each node is additionally pulled toward
//! its cluster's centroid with strength `cluster_gravity · distance`.
//! These forces are the negative gradient of
//!
//! ```text
//! E = Σ_edges d³/(3k) − Σ_pairs k² ln d + Σ_nodes (g/2)·|p − centroid|²
//! ```
//!
//! Per-node displacement is capped by a temperature that follows a
//! geometric cooling schedule. A step that would raise `E` is rejected and
//! the temperature halved, so the energy trace never increases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::color::Rgb;
use super::hull::hull_vertices;
use super::LayoutError;

pub type Point3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceParams {
    pub spring_len: f64,
    pub iterations: usize,
    /// Temperature multiplier per accepted step, in (0, 1).
    pub cooling: f64,
    pub cluster_gravity: f64,
    pub seed: u64,
}

impl Default for ForceParams {
    fn default() -> Self {
        Self { spring_len: 1.0, iterations: 500, cooling: 0.98, cluster_gravity: 0.1, seed: 7 }
    }
}

impl ForceParams {
    fn validate(&self) -> Result<(), LayoutError> {
        let bad = |m: &str| Err(LayoutError::InvalidInput(m.to_string()));
        if !(self.spring_len > 0.0) || !self.spring_len.is_finite() {
            return bad("spring_len must be positive");
        }
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return bad("cooling must lie in (0, 1)");
        }
        if !(self.cluster_gravity >= 0.0) || !self.cluster_gravity.is_finite() {
            return bad("cluster_gravity must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceLayout {
    pub positions: Vec<Point3>,
    /// Energy after each iteration.
    pub energy: Vec<f64>,
}

fn dist(a: Point3, b: Point3) -> (Point3, f64) {
    let delta = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let d = (delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]).sqrt();
    (delta, d)
}

struct Model<'a> {
    edges: &'a [(usize, usize)],
    clusters: Vec<Vec<usize>>,
    k: f64,
    gravity: f64,
}

impl Model<'_> {
    fn min_dist(&self) -> f64 {
        1e-9 * self.k
    }

    fn centroids(&self, pos: &[Point3]) -> Vec<Point3> {
        self.clusters
            .iter()
            .map(|members| {
                let mut c = [0.0; 3];
                for m in members {
                    for a in 0..3 {
                        c[a] += pos[*m][a];
                    }
                }
                c.map(|v| v / members.len() as f64)
            })
            .collect()
    }

    fn energy(&self, pos: &[Point3]) -> f64 {
        let k = self.k;
        let mut e = 0.0;
        for i in 0..pos.len() {
            for j in i + 1..pos.len() {
                let (_, d) = dist(pos[i], pos[j]);
                e -= k * k * d.max(self.min_dist()).ln();
            }
        }
        for &(a, b) in self.edges {
            if a != b {
                let (_, d) = dist(pos[a], pos[b]);
                e += d * d * d / (3.0 * k);
            }
        }
        if self.gravity > 0.0 {
            for (members, c) in self.clusters.iter().zip(self.centroids(pos)) {
                for m in members {
                    let (_, d) = dist(pos[*m], c);
                    e += 0.5 * self.gravity * d * d;
                }
            }
        }
        e
    }

    fn forces(&self, pos: &[Point3]) -> Vec<Point3> {
        let k = self.k;
        let n = pos.len();
        let mut f = vec![[0.0; 3]; n];
        for i in 0..n {
            for j in i + 1..n {
                let (mut delta, d) = dist(pos[i], pos[j]);
                let d = if d < self.min_dist() {
                    delta = [1.0, 0.0, 0.0];
                    self.min_dist()
                } else {
                    d
                };
                let mag = k * k / d;
                for a in 0..3 {
                    let c = delta[a] / d.max(1e-300) * mag;
                    f[i][a] += c;
                    f[j][a] -= c;
                }
            }
        }
        for &(s, t) in self.edges {
            if s == t {
                continue;
            }
            let (delta, d) = dist(pos[s], pos[t]);
            let mag = d * d / k;
            if d > 0.0 {
                for a in 0..3 {
                    let c = delta[a] / d * mag;
                    f[s][a] -= c;
                    f[t][a] += c;
                }
            }
        }
        if self.gravity > 0.0 {
            for (members, c) in self.clusters.iter().zip(self.centroids(pos)) {
                for m in members {
                    for a in 0..3 {
                        f[*m][a] -= self.gravity * (pos[*m][a] - c[a]);
                    }
                }
            }
        }
        f
    }
}

/// Lays out `n` nodes in 3D. `cluster_of[i]` names the cluster of node `i`
/// (any integer label). The result is centered on the origin and depends
/// only on the inputs and `params.seed`.
pub fn force_layout(
    n: usize,
    edges: &[(usize, usize)],
    cluster_of: &[usize],
    params: &ForceParams,
) -> Result<ForceLayout, LayoutError> {
    if n == 0 {
        return Err(LayoutError::InvalidInput("graph has no nodes".into()));
    }
    params.validate()?;
    if cluster_of.len() != n {
        return Err(LayoutError::InvalidInput("one cluster label per node required".into()));
    }
    if let Some(&(a, b)) = edges.iter().find(|(a, b)| *a >= n || *b >= n) {
        return Err(LayoutError::InvalidInput(format!("edge ({a}, {b}) out of range")));
    }
    if n == 1 {
        return Ok(ForceLayout { positions: vec![[0.0; 3]], energy: vec![0.0; params.iterations] });
    }

    let mut labels: Vec<usize> = cluster_of.to_vec();
    labels.sort_unstable();
    labels.dedup();
    let clusters: Vec<Vec<usize>> = labels
        .iter()
        .map(|l| (0..n).filter(|i| cluster_of[*i] == *l).collect::<Vec<_>>())
        .filter(|m| m.len() > 1)
        .collect();
    let model = Model { edges, clusters, k: params.spring_len, gravity: params.cluster_gravity };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let side = params.spring_len * (n as f64).cbrt();
    let mut pos: Vec<Point3> = (0..n)
        .map(|_| {
            [
                (rng.random::<f64>() - 0.5) * side,
                (rng.random::<f64>() - 0.5) * side,
                (rng.random::<f64>() - 0.5) * side,
            ]
        })
        .collect();

    let mut temperature = params.spring_len;
    let mut energy = model.energy(&pos);
    let mut trace = Vec::with_capacity(params.iterations);
    for iteration in 0..params.iterations {
        let forces = model.forces(&pos);
        let proposal: Vec<Point3> = pos
            .iter()
            .zip(&forces)
            .map(|(p, f)| {
                let mag = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt();
                if mag == 0.0 {
                    return *p;
                }
                let step = mag.min(temperature) / mag;
                [p[0] + f[0] * step, p[1] + f[1] * step, p[2] + f[2] * step]
            })
            .collect();
        if proposal.iter().flatten().any(|c| !c.is_finite()) {
            return Err(LayoutError::LayoutDiverged { iteration });
        }
        let candidate = model.energy(&proposal);
        if !candidate.is_finite() {
            return Err(LayoutError::LayoutDiverged { iteration });
        }
        if candidate <= energy {
            pos = proposal;
            energy = candidate;
            temperature *= params.cooling;
        } else {
            temperature *= 0.5;
        }
        trace.push(energy);
    }

    let mut center = [0.0; 3];
    for p in &pos {
        for a in 0..3 {
            center[a] += p[a] / n as f64;
        }
    }
    for p in &mut pos {
        for a in 0..3 {
            p[a] -= center[a];
        }
    }
    Ok(ForceLayout { positions: pos, energy: trace })
}

/// Energy of a given placement under the layout model.
pub fn layout_energy(
    positions: &[Point3],
    edges: &[(usize, usize)],
    cluster_of: &[usize],
    params: &ForceParams,
) -> f64 {
    let mut labels: Vec<usize> = cluster_of.to_vec();
    labels.sort_unstable();
    labels.dedup();
    let clusters = labels
        .iter()
        .map(|l| (0..positions.len()).filter(|i| cluster_of[*i] == *l).collect::<Vec<_>>())
        .filter(|m| m.len() > 1)
        .collect();
    Model { edges, clusters, k: params.spring_len, gravity: params.cluster_gravity }.energy(positions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub position: Point3,
    pub color: Rgb,
    pub cluster: String,
    pub total: u64,
    pub faults: u64,
    /// `None` when the node has no communication.
    pub ratio: Option<f64>,
    #[serde(default)]
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub source: String,
    pub target: String,
    pub color: Rgb,
    pub width: f64,
    pub total: u64,
    pub faults: u64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterHull {
    pub id: String,
    pub hull: Vec<Point3>,
    pub opacity: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GraphScene {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    pub clusters: Vec<ClusterHull>,
}

/// Builds cluster envelopes from node positions, one per cluster id in
/// sorted order.
pub fn cluster_hulls(nodes: &[GraphNode], opacity: f64) -> Vec<ClusterHull> {
    let mut ids: Vec<&str> = nodes.iter().map(|n| n.cluster.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let pts: Vec<Point3> =
                nodes.iter().filter(|n| n.cluster == id).map(|n| n.position).collect();
            ClusterHull { id: id.to_string(), hull: hull_vertices(&pts), opacity: opacity.clamp(0.0, 1.0) }
        })
        .collect()
}
