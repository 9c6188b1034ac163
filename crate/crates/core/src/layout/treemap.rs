//! Planar treemap tilings (slice-and-dice and squarified) lifted to cuboids:
//! base area encodes size, height and color encode two further metrics.

use serde::{Deserialize, Serialize};

use super::color::{Palette, Rgb};
use super::LayoutError;

/// Axis-aligned rectangle in the ground plane. `w` extends along x, `d`
/// along y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub d: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect { x: 0.0, y: 0.0, w: 1.0, d: 1.0 };

    pub fn area(&self) -> f64 {
        self.w * self.d
    }

    /// max(w/d, d/w); infinite for degenerate rectangles.
    pub fn aspect(&self) -> f64 {
        if self.w <= 0.0 || self.d <= 0.0 {
            return f64::INFINITY;
        }
        (self.w / self.d).max(self.d / self.w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TreemapAlgorithm {
    SliceDice,
    #[default]
    Squarified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub entity: String,
    /// Ignored on internal nodes, whose size is the sum of their leaves.
    #[serde(default)]
    pub size: f64,
    #[serde(default)]
    pub height: f64,
    #[serde(default)]
    pub color: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn leaf(entity: impl Into<String>, size: f64, height: f64, color: f64) -> Self {
        Self { entity: entity.into(), size, height, color, children: Vec::new() }
    }

    pub fn branch(entity: impl Into<String>, children: Vec<TreeNode>) -> Self {
        Self { entity: entity.into(), size: 0.0, height: 0.0, color: 0.0, children }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn total_size(&self) -> f64 {
        if self.is_leaf() {
            self.size
        } else {
            self.children.iter().map(TreeNode::total_size).sum()
        }
    }

    fn leaves<'a>(&'a self, out: &mut Vec<&'a TreeNode>) {
        if self.is_leaf() {
            out.push(self);
        } else {
            for c in &self.children {
                c.leaves(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    pub entity: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub d: f64,
    pub h: f64,
    pub color: Rgb,
    pub size: f64,
    pub height_value: f64,
    pub color_value: f64,
    #[serde(default)]
    pub actions: Vec<String>,
}

impl Cuboid {
    pub fn base(&self) -> Rect {
        Rect { x: self.x, y: self.y, w: self.w, d: self.d }
    }
}

/// Splits `rect` into strips proportional to `sizes`, along x when
/// `along_x`, otherwise along y. Strip edges are computed from cumulative
/// fractions and the last edge is pinned to the rectangle border, so the
/// strips tile `rect` with shared edges.
pub fn slice(sizes: &[f64], rect: Rect, along_x: bool) -> Vec<Rect> {
    let total: f64 = sizes.iter().sum();
    let (start, extent) = if along_x { (rect.x, rect.w) } else { (rect.y, rect.d) };
    let mut edges = Vec::with_capacity(sizes.len() + 1);
    edges.push(start);
    let mut cum = 0.0;
    for (i, s) in sizes.iter().enumerate() {
        cum += s;
        edges.push(if i + 1 == sizes.len() {
            start + extent
        } else if total > 0.0 {
            start + extent * (cum / total)
        } else {
            start
        });
    }
    edges
        .windows(2)
        .map(|e| {
            if along_x {
                Rect { x: e[0], y: rect.y, w: e[1] - e[0], d: rect.d }
            } else {
                Rect { x: rect.x, y: e[0], w: rect.w, d: e[1] - e[0] }
            }
        })
        .collect()
}

fn worst(row: &[f64], side: f64) -> f64 {
    let sum: f64 = row.iter().sum();
    let (mut max, mut min) = (f64::MIN, f64::MAX);
    for a in row {
        max = max.max(*a);
        min = min.min(*a);
    }
    let s2 = side * side;
    let sum2 = sum * sum;
    (s2 * max / sum2).max(sum2 / (s2 * min))
}

/// Squarified tiling: items are taken in descending size and appended to
/// the current row along the shorter side while that does not worsen the
/// row's worst aspect ratio. Returns rectangles in input order. Zero sizes
/// get zero-area rectangles.
pub fn squarify(sizes: &[f64], rect: Rect) -> Vec<Rect> {
    let total: f64 = sizes.iter().sum();
    let mut out = vec![Rect { x: rect.x, y: rect.y, w: 0.0, d: 0.0 }; sizes.len()];
    if total <= 0.0 {
        return out;
    }
    let mut order: Vec<usize> = (0..sizes.len()).filter(|i| sizes[*i] > 0.0).collect();
    order.sort_by(|a, b| sizes[*b].total_cmp(&sizes[*a]).then(a.cmp(b)));
    let scale = rect.area() / total;
    let areas: Vec<f64> = order.iter().map(|i| sizes[*i] * scale).collect();

    let mut free = rect;
    let mut start = 0;
    while start < order.len() {
        let side = free.w.min(free.d);
        let mut end = start + 1;
        while end < order.len() && worst(&areas[start..=end], side) <= worst(&areas[start..end], side)
        {
            end += 1;
        }
        let row_area: f64 = areas[start..end].iter().sum();
        let last_row = end == order.len();
        // The row is a strip across the shorter side of the free rectangle.
        let (strip, rest) = if free.w >= free.d {
            let width = if last_row { free.w } else { (row_area / free.d).min(free.w) };
            let x_end = if last_row { free.x + free.w } else { free.x + width };
            (
                Rect { x: free.x, y: free.y, w: x_end - free.x, d: free.d },
                Rect { x: x_end, y: free.y, w: free.x + free.w - x_end, d: free.d },
            )
        } else {
            let depth = if last_row { free.d } else { (row_area / free.w).min(free.d) };
            let y_end = if last_row { free.y + free.d } else { free.y + depth };
            (
                Rect { x: free.x, y: free.y, w: free.w, d: y_end - free.y },
                Rect { x: free.x, y: y_end, w: free.w, d: free.y + free.d - y_end },
            )
        };
        let along_x = free.w < free.d;
        let cells = slice(&areas[start..end], strip, along_x);
        for (k, cell) in cells.into_iter().enumerate() {
            out[order[start + k]] = cell;
        }
        free = rest;
        start = end;
    }
    out
}

pub fn layout_children(
    sizes: &[f64],
    rect: Rect,
    algorithm: TreemapAlgorithm,
    depth: usize,
) -> Vec<Rect> {
    match algorithm {
        TreemapAlgorithm::SliceDice => slice(sizes, rect, depth.is_multiple_of(2)),
        TreemapAlgorithm::Squarified => squarify(sizes, rect),
    }
}

pub fn max_aspect(rects: &[Rect]) -> f64 {
    rects.iter().map(Rect::aspect).fold(0.0, f64::max)
}

/// Lays out the leaves of `tree` as cuboids over the unit square. Leaves
/// with zero size occupy no area and are omitted.
pub fn treemap3d(
    tree: &TreeNode,
    algorithm: TreemapAlgorithm,
    palette: Palette,
) -> Result<Vec<Cuboid>, LayoutError> {
    let mut leaves = Vec::new();
    tree.leaves(&mut leaves);
    for leaf in &leaves {
        if !(leaf.size >= 0.0) || !leaf.size.is_finite() {
            return Err(LayoutError::InvalidInput(format!(
                "size of `{}` must be finite and nonnegative",
                leaf.entity
            )));
        }
        if !leaf.height.is_finite() || !leaf.color.is_finite() {
            return Err(LayoutError::InvalidInput(format!(
                "metrics of `{}` must be finite",
                leaf.entity
            )));
        }
    }
    if !(tree.total_size() > 0.0) {
        return Err(LayoutError::DegenerateTree);
    }
    let max_height = leaves.iter().map(|l| l.height.max(0.0)).fold(0.0, f64::max);
    let max_color = leaves.iter().map(|l| l.color.max(0.0)).fold(0.0, f64::max);
    let norm = |v: f64, max: f64| if max > 0.0 { v.max(0.0) / max } else { 0.0 };

    let mut out = Vec::with_capacity(leaves.len());
    place(tree, Rect::UNIT, 0, algorithm, &mut |leaf, rect| {
        out.push(Cuboid {
            entity: leaf.entity.clone(),
            x: rect.x,
            y: rect.y,
            w: rect.w,
            d: rect.d,
            h: norm(leaf.height, max_height),
            color: palette.color(norm(leaf.color, max_color)),
            size: leaf.size,
            height_value: leaf.height,
            color_value: leaf.color,
            actions: Vec::new(),
        });
    });
    Ok(out)
}

fn place(
    node: &TreeNode,
    rect: Rect,
    depth: usize,
    algorithm: TreemapAlgorithm,
    emit: &mut impl FnMut(&TreeNode, Rect),
) {
    if node.is_leaf() {
        if node.size > 0.0 {
            emit(node, rect);
        }
        return;
    }
    let sizes: Vec<f64> = node.children.iter().map(TreeNode::total_size).collect();
    if sizes.iter().sum::<f64>() <= 0.0 {
        return;
    }
    let rects = layout_children(&sizes, rect, algorithm, depth);
    for (child, r) in node.children.iter().zip(rects) {
        if child.total_size() > 0.0 {
            place(child, r, depth + 1, algorithm, emit);
        }
    }
}
