use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::color::{color_scale, Rgb, GRAY};
use super::LayoutError;
use crate::model::{children, depths, rollup, validate_plan, Task};

/// Horizontal extent in days from the chart origin; `end` is exclusive so a
/// one-day task is one unit wide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanttRow {
    pub task: String,
    pub name: String,
    pub depth: usize,
    pub summary: bool,
    pub planned: Bar,
    pub actual: Option<Bar>,
    /// Right edge of the progress fill inside the planned bar.
    pub progress_end: f64,
    pub percent_complete: f64,
    pub color: Rgb,
    #[serde(default)]
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanttChart {
    pub origin: NaiveDate,
    pub today: f64,
    pub rows: Vec<GanttRow>,
}

fn offset(origin: NaiveDate, day: NaiveDate) -> f64 {
    (day - origin).num_days() as f64
}

/// Schedule color for a leaf: green when progress keeps up with elapsed
/// time, yellow when it trails by up to a quarter, red beyond that.
fn schedule_color(task: &Task, today: NaiveDate) -> Rgb {
    let span = offset(task.planned_start, task.planned_end) + 1.0;
    let elapsed = (offset(task.planned_start, today) + 1.0).clamp(0.0, span);
    let expected = elapsed / span;
    let lag = expected - task.percent_complete;
    if lag <= 0.0 {
        color_scale(0.0)
    } else if lag <= 0.25 {
        color_scale(0.5)
    } else {
        color_scale(1.0)
    }
}

/// One row per task in depth-first plan order. Summary rows show the
/// rolled-up hull of their leaves.
pub fn gantt_layout(plan: &[Task], today: NaiveDate) -> Result<GanttChart, LayoutError> {
    let violations = validate_plan(plan);
    if let Some(v) = violations.first() {
        return Err(LayoutError::InvalidInput(format!("task {}: {}", v.task, v.reason)));
    }
    let origin = plan
        .iter()
        .flat_map(|t| std::iter::once(t.planned_start).chain(t.actual_start))
        .min()
        .unwrap_or(today);
    let depth = depths(plan);

    let mut order: Vec<&Task> = Vec::with_capacity(plan.len());
    fn visit<'a>(plan: &'a [Task], task: &'a Task, order: &mut Vec<&'a Task>) {
        order.push(task);
        for c in children(plan, &task.id) {
            visit(plan, c, order);
        }
    }
    for root in plan.iter().filter(|t| t.parent.is_none()) {
        visit(plan, root, &mut order);
    }

    let mut rows = Vec::with_capacity(plan.len());
    for task in order {
        let summary = children(plan, &task.id).next().is_some();
        let view = if summary {
            rollup(plan, &task.id).map_err(|e| LayoutError::InvalidInput(e.to_string()))?
        } else {
            task.clone()
        };
        let planned = Bar {
            start: offset(origin, view.planned_start),
            end: offset(origin, view.planned_end) + 1.0,
        };
        let actual = view.actual_start.map(|s| {
            let end = match view.actual_end {
                Some(e) => e,
                None => today.max(s),
            };
            Bar { start: offset(origin, s), end: offset(origin, end) + 1.0 }
        });
        rows.push(GanttRow {
            task: view.id.clone(),
            name: view.name.clone(),
            depth: depth[&task.id],
            summary,
            planned,
            actual,
            progress_end: planned.start + (planned.end - planned.start) * view.percent_complete,
            percent_complete: view.percent_complete,
            color: if summary { GRAY } else { schedule_color(&view, today) },
            actions: Vec::new(),
        });
    }
    Ok(GanttChart { origin, today: offset(origin, today), rows })
}
