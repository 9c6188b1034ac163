//! Control techniques: earned value indicators, tolerance bands, trend
//! projection and status aggregation.
//!
//! All functions here are pure. Cut points and band widths are parameters so
//! that values learned from past projects can replace the defaults.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catena::{IndicatorPoint, IndicatorValue};
use crate::model::{DataSeries, StatusColor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TechniqueError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("baseline is zero and no absolute tolerance is configured")]
    BaselineZero,
    #[error("need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("negative or non-finite weight {0}")]
    InvalidWeight(f64),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> TechniqueError {
    TechniqueError::InvalidParameter { name, reason: reason.into() }
}

/// Formats band edges and ratios for explanations.
fn num(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_string() } else { s.to_string() }
}

fn day_start(day: NaiveDate) -> DateTime<Utc> {
    day.and_hms_opt(0, 0, 0).unwrap().and_utc()
}

/// Resamples a series to day granularity, keeping the last observation of
/// each day.
pub fn daily(series: &DataSeries) -> BTreeMap<NaiveDate, f64> {
    series
        .points
        .iter()
        .map(|p| (p.timestamp.date_naive(), p.value))
        .collect()
}

// ---------------------------------------------------------------------------
// Earned value

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvmCuts {
    pub green_cut: f64,
    pub yellow_cut: f64,
}

impl Default for EvmCuts {
    fn default() -> Self {
        Self { green_cut: 0.95, yellow_cut: 0.80 }
    }
}

impl EvmCuts {
    pub fn classify(&self, index: f64) -> StatusColor {
        if index >= self.green_cut {
            StatusColor::Green
        } else if index >= self.yellow_cut {
            StatusColor::Yellow
        } else {
            StatusColor::Red
        }
    }
}

/// One earned value reading. Ratios that are undefined at this point
/// (division by zero) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvmSnapshot {
    pub t: DateTime<Utc>,
    pub pv: f64,
    pub ev: f64,
    pub ac: f64,
    pub bac: f64,
    pub cpi: Option<f64>,
    pub spi: Option<f64>,
    pub cv: f64,
    pub sv: f64,
    pub eac: Option<f64>,
    #[serde(rename = "etc")]
    pub etc_: Option<f64>,
    pub vac: Option<f64>,
    pub tcpi: Option<f64>,
    pub status: StatusColor,
}

impl EvmSnapshot {
    pub fn compute(t: DateTime<Utc>, pv: f64, ev: f64, ac: f64, bac: f64, cuts: &EvmCuts) -> Self {
        let cpi = (ac > 0.0).then(|| ev / ac);
        let spi = (pv > 0.0).then(|| ev / pv);
        let eac = cpi.filter(|c| *c > 0.0).map(|c| bac / c);
        let etc_ = eac.map(|e| e - ac);
        let vac = eac.map(|e| bac - e);
        let tcpi = (bac > ac).then(|| (bac - ev) / (bac - ac));
        let status = match (cpi, spi) {
            (Some(c), Some(s)) => cuts.classify(c.min(s)),
            (Some(i), None) | (None, Some(i)) => cuts.classify(i),
            // Nothing planned and nothing spent yet.
            (None, None) => StatusColor::Green,
        };
        Self { t, pv, ev, ac, bac, cpi, spi, cv: ev - ac, sv: ev - pv, eac, etc_, vac, tcpi, status }
    }

    /// The index that drives the status: min(cpi, spi) over the defined ones.
    pub fn performance_index(&self) -> Option<f64> {
        match (self.cpi, self.spi) {
            (Some(c), Some(s)) => Some(c.min(s)),
            (a, b) => a.or(b),
        }
    }
}

/// Earned value snapshots, one per day present in all three series.
pub fn evm(
    pv: &DataSeries,
    ev: &DataSeries,
    ac: &DataSeries,
    bac: f64,
    cuts: &EvmCuts,
) -> Result<Vec<EvmSnapshot>, TechniqueError> {
    if !(bac > 0.0) || !bac.is_finite() {
        return Err(invalid("bac", "budget at completion must be positive"));
    }
    for (name, v) in [("pv", pv), ("ev", ev), ("ac", ac)] {
        if v.points.iter().any(|p| p.value < 0.0) {
            return Err(invalid(name, "earned value inputs must be nonnegative"));
        }
    }
    let (pv, ev, ac) = (daily(pv), daily(ev), daily(ac));
    Ok(pv
        .iter()
        .filter_map(|(day, p)| {
            let e = ev.get(day)?;
            let a = ac.get(day)?;
            Some(EvmSnapshot::compute(day_start(*day), *p, *e, *a, bac, cuts))
        })
        .collect())
}

pub fn evm_indicator(node: &str, snapshots: &[EvmSnapshot], cuts: &EvmCuts) -> IndicatorValue {
    let series: Vec<IndicatorPoint> = snapshots
        .iter()
        .filter_map(|s| s.performance_index().map(|v| IndicatorPoint { t: s.t, value: v }))
        .collect();
    let Some(last) = snapshots.last() else {
        return IndicatorValue::no_data(node, "earned value");
    };
    let opt = |x: Option<f64>| x.map(num).unwrap_or_else(|| "undefined".into());
    let explanation = format!(
        "cpi {}, spi {} (green >= {}, yellow >= {}); cv {}, sv {}, eac {}, vac {}, tcpi {}",
        opt(last.cpi),
        opt(last.spi),
        num(cuts.green_cut),
        num(cuts.yellow_cut),
        num(last.cv),
        num(last.sv),
        opt(last.eac),
        opt(last.vac),
        opt(last.tcpi),
    );
    let status = if series.is_empty() { StatusColor::NoData } else { last.status };
    IndicatorValue {
        node: node.to_string(),
        name: "earned value".into(),
        series,
        status,
        explanation,
    }
}

// ---------------------------------------------------------------------------
// Tolerance bands

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Fixed(f64),
    Series(DataSeries),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSpec {
    pub baseline: Baseline,
    pub tol: f64,
    pub red_factor: f64,
    /// Used instead of `tol` for points whose baseline is zero.
    pub abs_tol: Option<f64>,
}

impl ToleranceSpec {
    pub fn new(baseline: Baseline, tol: f64) -> Self {
        Self { baseline, tol, red_factor: 2.0, abs_tol: None }
    }

    pub fn validate(&self) -> Result<(), TechniqueError> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(invalid("tol", "must be > 0"));
        }
        if !(self.red_factor >= 1.0) || !self.red_factor.is_finite() {
            return Err(invalid("red_factor", "must be >= 1"));
        }
        if let Some(a) = self.abs_tol {
            if !(a > 0.0) {
                return Err(invalid("abs_tol", "must be > 0"));
            }
        }
        Ok(())
    }
}

/// GREEN inside the band, YELLOW up to `red_factor` times the band, RED beyond.
pub fn classify_deviation(d: f64, tol: f64, red_factor: f64) -> StatusColor {
    if d <= tol {
        StatusColor::Green
    } else if d <= red_factor * tol {
        StatusColor::Yellow
    } else {
        StatusColor::Red
    }
}

/// Compares actual values with their baseline and grades the latest point.
/// The indicator series holds the per-point deviation.
pub fn tolerance_check(
    node: &str,
    actual: &DataSeries,
    spec: &ToleranceSpec,
) -> Result<IndicatorValue, TechniqueError> {
    spec.validate()?;
    let pairs: Vec<(DateTime<Utc>, f64, f64)> = match &spec.baseline {
        Baseline::Fixed(b) => actual.points.iter().map(|p| (p.timestamp, p.value, *b)).collect(),
        Baseline::Series(reference) => {
            let reference = daily(reference);
            let actual = daily(actual);
            actual
                .iter()
                .filter_map(|(day, a)| reference.get(day).map(|b| (day_start(*day), *a, *b)))
                .collect()
        }
    };
    if pairs.is_empty() {
        return Ok(IndicatorValue::no_data(node, "tolerance"));
    }

    let mut series = Vec::with_capacity(pairs.len());
    let mut last = None;
    for (t, a, b) in pairs {
        let (d, band) = if b != 0.0 {
            ((a - b).abs() / b.abs(), spec.tol)
        } else {
            let abs_tol = spec.abs_tol.ok_or(TechniqueError::BaselineZero)?;
            ((a - b).abs(), abs_tol)
        };
        series.push(IndicatorPoint { t, value: d });
        last = Some((a, b, d, band, b == 0.0));
    }
    let (a, b, d, band, absolute) = last.unwrap();
    let status = classify_deviation(d, band, spec.red_factor);
    let kind = if absolute { "absolute deviation" } else { "deviation" };
    let explanation = format!(
        "{kind} {} of actual {} from baseline {} (green <= {}, yellow <= {}, red > {})",
        num(d),
        num(a),
        num(b),
        num(band),
        num(band * spec.red_factor),
        num(band * spec.red_factor),
    );
    Ok(IndicatorValue { node: node.to_string(), name: "tolerance".into(), series, status, explanation })
}

// ---------------------------------------------------------------------------
// Trend projection

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    Above,
    Below,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSpec {
    pub window: usize,
    pub threshold: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    /// Units per day.
    pub slope: f64,
    /// Fitted value at the first window point.
    pub intercept: f64,
    pub origin: DateTime<Utc>,
    /// Offset of the last window point from `origin`, in days.
    pub last_offset: f64,
    pub crossing: Option<DateTime<Utc>>,
    /// Offset of `crossing` from `origin`, in days.
    pub crossing_offset: Option<f64>,
}

const SLOPE_EPS: f64 = 1e-12;

fn days_between(from: DateTime<Utc>, to: DateTime<Utc>) -> f64 {
    (to - from).num_milliseconds() as f64 / 86_400_000.0
}

/// Least-squares line over the last `window` points and the earliest time
/// at or after the last point where it meets the threshold.
pub fn trend_project(series: &DataSeries, spec: &TrendSpec) -> Result<TrendResult, TechniqueError> {
    if spec.window < 2 {
        return Err(invalid("window", "must be >= 2"));
    }
    if !spec.threshold.is_finite() {
        return Err(invalid("threshold", "must be finite"));
    }
    if series.len() < spec.window {
        return Err(TechniqueError::InsufficientData { needed: spec.window, got: series.len() });
    }
    let window = &series.points[series.len() - spec.window..];
    let origin = window[0].timestamp;
    let xs: Vec<f64> = window.iter().map(|p| days_between(origin, p.timestamp)).collect();
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = window.iter().map(|p| p.value).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, p) in xs.iter().zip(window) {
        sxy += (x - mean_x) * (p.value - mean_y);
        sxx += (x - mean_x) * (x - mean_x);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let last_offset = *xs.last().unwrap();

    let toward = match spec.direction {
        Direction::Above => slope > SLOPE_EPS,
        Direction::Below => slope < -SLOPE_EPS,
    };
    let crossing_offset = toward.then(|| ((spec.threshold - intercept) / slope).max(last_offset));
    let crossing = crossing_offset
        .map(|days| origin + Duration::milliseconds((days * 86_400_000.0).round() as i64));
    Ok(TrendResult { slope, intercept, origin, last_offset, crossing, crossing_offset })
}

/// Grades a trend: RED when the latest value is already past the threshold,
/// YELLOW when the projected crossing lies within `horizon` days, GREEN
/// otherwise.
pub fn trend_indicator(
    node: &str,
    series: &DataSeries,
    spec: &TrendSpec,
    horizon: f64,
) -> Result<IndicatorValue, TechniqueError> {
    if series.is_empty() {
        return Ok(IndicatorValue::no_data(node, "trend"));
    }
    let result = trend_project(series, spec)?;
    let latest = series.last().unwrap().value;
    let past = match spec.direction {
        Direction::Above => latest >= spec.threshold,
        Direction::Below => latest <= spec.threshold,
    };
    let status = if past {
        StatusColor::Red
    } else {
        match result.crossing_offset {
            Some(c) if c - result.last_offset <= horizon => StatusColor::Yellow,
            _ => StatusColor::Green,
        }
    };
    let crossing = match result.crossing {
        Some(c) => format!("projected crossing {}", c.format("%Y-%m-%d")),
        None => "no projected crossing".to_string(),
    };
    let explanation = format!(
        "slope {} per day toward threshold {} ({}); {crossing}, horizon {} days",
        num(result.slope),
        num(spec.threshold),
        match spec.direction {
            Direction::Above => "above",
            Direction::Below => "below",
        },
        num(horizon),
    );
    let window = &series.points[series.len() - spec.window..];
    Ok(IndicatorValue {
        node: node.to_string(),
        name: "trend".into(),
        series: window.iter().map(|p| IndicatorPoint { t: p.timestamp, value: p.value }).collect(),
        status,
        explanation,
    })
}

// ---------------------------------------------------------------------------
// Aggregation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AggregationMode {
    Worst,
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedCuts {
    pub green_cut: f64,
    pub yellow_cut: f64,
}

impl Default for WeightedCuts {
    fn default() -> Self {
        Self { green_cut: 0.75, yellow_cut: 0.4 }
    }
}

fn color_score(c: StatusColor) -> f64 {
    match c {
        StatusColor::Green => 1.0,
        StatusColor::Yellow => 0.5,
        _ => 0.0,
    }
}

/// Combines child statuses. `NoData` children are ignored; if nothing is
/// left the result is `NoData`. A weighted aggregation whose weights are
/// all zero treats the children as equally weighted.
pub fn aggregate_status(
    children: &[(StatusColor, f64)],
    mode: AggregationMode,
    cuts: &WeightedCuts,
) -> Result<StatusColor, TechniqueError> {
    if let Some((_, w)) = children.iter().find(|(_, w)| !(*w >= 0.0) || !w.is_finite()) {
        return Err(TechniqueError::InvalidWeight(*w));
    }
    let present: Vec<(StatusColor, f64)> =
        children.iter().copied().filter(|(c, _)| *c != StatusColor::NoData).collect();
    if present.is_empty() {
        return Ok(StatusColor::NoData);
    }
    Ok(match mode {
        AggregationMode::Worst => present.iter().map(|(c, _)| *c).max().unwrap(),
        AggregationMode::Weighted => {
            let total: f64 = present.iter().map(|(_, w)| w).sum();
            let m = if total > 0.0 {
                present.iter().map(|(c, w)| color_score(*c) * w).sum::<f64>() / total
            } else {
                present.iter().map(|(c, _)| color_score(*c)).sum::<f64>() / present.len() as f64
            };
            if m >= cuts.green_cut {
                StatusColor::Green
            } else if m >= cuts.yellow_cut {
                StatusColor::Yellow
            } else {
                StatusColor::Red
            }
        }
    })
}
