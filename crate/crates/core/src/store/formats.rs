//! File formats accepted by the store: measurement, risk, trace and
//! cluster CSVs, plan and incident JSON.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::catena::GroundTruthIncident;
use crate::model::{ComponentId, MeasurementPoint, Outcome, Risk, Task, TraceEvent};

use super::StoreError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<RejectedRow>,
}

pub const MEASUREMENT_HEADER: [&str; 4] = ["metric", "entity", "timestamp", "value"];
pub const RISK_HEADER: [&str; 5] = ["id", "name", "probability", "importance", "damage"];
pub const TRACE_HEADER: [&str; 4] = ["timestamp", "source", "target", "outcome"];
pub const CLUSTER_HEADER: [&str; 2] = ["component", "cluster"];

/// RFC 3339 instants, or plain dates read as midnight UTC.
pub fn parse_instant(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc())
}

/// A CSV row's fields, or why it could not be read.
type Row = Result<Vec<String>, String>;

/// Rows of a headed CSV with their 1-based line numbers. A missing or
/// different header fails the whole file; an empty file has no rows.
fn rows(text: &str, header: &[&str]) -> Result<Vec<(u64, Row)>, StoreError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    let mut first = true;
    for rec in reader.records() {
        match rec {
            Ok(r) => {
                let line = r.position().map(|p| p.line()).unwrap_or(0);
                let fields: Vec<String> = r.iter().map(str::to_string).collect();
                if first {
                    first = false;
                    if fields.iter().map(String::as_str).ne(header.iter().copied()) {
                        return Err(StoreError::HeaderMismatch {
                            expected: header.join(","),
                            found: fields.join(","),
                        });
                    }
                    continue;
                }
                if fields.len() == 1 && fields[0].is_empty() {
                    continue;
                }
                if fields.len() != header.len() {
                    out.push((line, Err(format!("expected {} fields, found {}", header.len(), fields.len()))));
                } else {
                    out.push((line, Ok(fields)));
                }
            }
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                if first {
                    return Err(StoreError::HeaderMismatch { expected: header.join(","), found: e.to_string() });
                }
                out.push((line, Err(format!("malformed row: {e}"))));
            }
        }
    }
    Ok(out)
}

fn parse_value(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| "non-numeric value".to_string())?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err("non-finite value".into())
    }
}

/// Parses measurement rows. `exists` reports keys already stored; rows
/// colliding with those or with an earlier row of the same file are
/// rejected as duplicates.
pub fn parse_measurements(
    text: &str,
    exists: impl Fn(&str, &str, DateTime<Utc>) -> bool,
) -> Result<(IngestReport, Vec<MeasurementPoint>), StoreError> {
    let mut report = IngestReport::default();
    let mut points = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, row) in rows(text, &MEASUREMENT_HEADER)? {
        let parsed = row.and_then(|f| {
            if f[0].is_empty() {
                return Err("empty metric".into());
            }
            if f[1].is_empty() {
                return Err("empty entity".into());
            }
            let t = parse_instant(&f[2]).ok_or_else(|| "invalid timestamp".to_string())?;
            let v = parse_value(&f[3])?;
            if exists(&f[0], &f[1], t) || !seen.insert((f[0].clone(), f[1].clone(), t)) {
                return Err("duplicate".into());
            }
            MeasurementPoint::new(f[0].clone(), f[1].clone(), t, v).map_err(|e| e.to_string())
        });
        match parsed {
            Ok(p) => points.push(p),
            Err(reason) => report.rejected.push(RejectedRow { line, reason }),
        }
    }
    report.accepted = points.len();
    Ok((report, points))
}

pub fn parse_risks(text: &str) -> Result<(IngestReport, Vec<Risk>), StoreError> {
    let mut report = IngestReport::default();
    let mut risks: Vec<Risk> = Vec::new();
    for (line, row) in rows(text, &RISK_HEADER)? {
        let parsed = row.and_then(|f| {
            let r = Risk {
                id: f[0].clone(),
                name: f[1].clone(),
                probability: parse_value(&f[2])?,
                importance: parse_value(&f[3])?,
                damage: parse_value(&f[4])?,
            };
            if r.id.is_empty() {
                return Err("empty id".into());
            }
            if risks.iter().any(|o| o.id == r.id) {
                return Err("duplicate".into());
            }
            r.validate().map_err(|e| e.to_string())?;
            Ok(r)
        });
        match parsed {
            Ok(r) => risks.push(r),
            Err(reason) => report.rejected.push(RejectedRow { line, reason }),
        }
    }
    report.accepted = risks.len();
    Ok((report, risks))
}

pub fn parse_traces(text: &str, allow_self: bool) -> Result<(IngestReport, Vec<TraceEvent>), StoreError> {
    let mut report = IngestReport::default();
    let mut events = Vec::new();
    for (line, row) in rows(text, &TRACE_HEADER)? {
        let parsed = row.and_then(|f| {
            let timestamp = parse_instant(&f[0]).ok_or_else(|| "invalid timestamp".to_string())?;
            if f[1].is_empty() || f[2].is_empty() {
                return Err("empty component".into());
            }
            let outcome = match f[3].to_ascii_uppercase().as_str() {
                "OK" => Outcome::Ok,
                "FAULT" => Outcome::Fault,
                _ => return Err("outcome must be OK or FAULT".into()),
            };
            let e = TraceEvent { timestamp, source: f[1].clone(), target: f[2].clone(), outcome };
            e.validate(allow_self).map_err(|e| e.to_string())?;
            Ok(e)
        });
        match parsed {
            Ok(e) => events.push(e),
            Err(reason) => report.rejected.push(RejectedRow { line, reason }),
        }
    }
    report.accepted = events.len();
    Ok((report, events))
}

pub fn parse_clustering(text: &str) -> Result<(IngestReport, BTreeMap<ComponentId, String>), StoreError> {
    let mut report = IngestReport::default();
    let mut map = BTreeMap::new();
    for (line, row) in rows(text, &CLUSTER_HEADER)? {
        let parsed = row.and_then(|f| {
            if f[0].is_empty() || f[1].is_empty() {
                return Err("empty field".to_string());
            }
            if map.contains_key(&f[0]) {
                return Err("duplicate".into());
            }
            Ok((f[0].clone(), f[1].clone()))
        });
        match parsed {
            Ok((c, k)) => {
                map.insert(c, k);
            }
            Err(reason) => report.rejected.push(RejectedRow { line, reason }),
        }
    }
    report.accepted = map.len();
    Ok((report, map))
}

/// A JSON array of tasks, or an object with a `tasks` array.
pub fn parse_plan(text: &str) -> Result<Vec<Task>, StoreError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum PlanFile {
        Tasks(Vec<Task>),
        Wrapped { tasks: Vec<Task> },
    }
    match serde_json::from_str::<PlanFile>(text) {
        Ok(PlanFile::Tasks(t)) | Ok(PlanFile::Wrapped { tasks: t }) => Ok(t),
        Err(e) => Err(StoreError::Malformed(format!("plan: {e}"))),
    }
}

/// A JSON array of incidents, time-ordered by start.
pub fn parse_incidents(text: &str) -> Result<Vec<GroundTruthIncident>, StoreError> {
    let mut incidents: Vec<GroundTruthIncident> =
        serde_json::from_str(text).map_err(|e| StoreError::Malformed(format!("incidents: {e}")))?;
    incidents.sort_by(|a, b| a.start.cmp(&b.start).then_with(|| a.id.cmp(&b.id)));
    Ok(incidents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn none(_: &str, _: &str, _: DateTime<Utc>) -> bool {
        false
    }

    #[test]
    fn single_row() {
        let (r, p) = parse_measurements("metric,entity,timestamp,value\ncpi,proj1,2024-01-05T00:00:00Z,0.83\n", none)
            .unwrap();
        assert_eq!(r.accepted, 1);
        assert_eq!(p[0].metric, "cpi");
        assert_eq!(p[0].entity, "proj1");
        assert_eq!(p[0].timestamp, Utc.with_ymd_and_hms(2024, 1, 5, 0, 0, 0).unwrap());
        assert_eq!(p[0].value, 0.83);
    }

    #[test]
    fn bad_rows_reported_by_line() {
        let text = "metric,entity,timestamp,value\n\
                    a,e,2024-01-01T00:00:00Z,1\n\
                    a,e,2024-01-02T00:00:00Z,abc\n\
                    a,e,yesterday,1\n\
                    a,e,2024-01-01T00:00:00Z,2\n\
                    a,e,2024-01-03,3\n\
                    a,e\n";
        let (r, p) = parse_measurements(text, none).unwrap();
        assert_eq!(r.accepted, 2);
        assert_eq!(p.len(), 2);
        let lines: Vec<_> = r.rejected.iter().map(|x| (x.line, x.reason.as_str())).collect();
        assert_eq!(
            lines,
            [(3, "non-numeric value"), (4, "invalid timestamp"), (5, "duplicate"), (7, "expected 4 fields, found 2")]
        );
    }

    #[test]
    fn header_and_empty_file() {
        assert!(matches!(parse_measurements("a,b,c\n1,2,3\n", none), Err(StoreError::HeaderMismatch { .. })));
        let (r, p) = parse_measurements("", none).unwrap();
        assert_eq!((r.accepted, p.len()), (0, 0));
        let (r, _) = parse_measurements("metric,entity,timestamp,value\n", none).unwrap();
        assert_eq!(r.accepted, 0);
    }

    #[test]
    fn existing_keys_are_duplicates() {
        let (r, _) =
            parse_measurements("metric,entity,timestamp,value\na,e,2024-01-01T00:00:00Z,1\n", |_, _, _| true).unwrap();
        assert_eq!(r.accepted, 0);
        assert_eq!(r.rejected[0].reason, "duplicate");
    }

    #[test]
    fn risks_traces_clusters() {
        let (r, risks) =
            parse_risks("id,name,probability,importance,damage\nr1,Staff,0.5,0.5,10\nr2,Bad,1.5,0.2,1\n").unwrap();
        assert_eq!((r.accepted, risks.len(), r.rejected.len()), (1, 1, 1));
        let (r, ev) =
            parse_traces("timestamp,source,target,outcome\n2024-01-01T00:00:00Z,a,b,FAULT\n2024-01-01,a,a,OK\n", false)
                .unwrap();
        assert_eq!((r.accepted, ev[0].outcome), (1, Outcome::Fault));
        let (_, c) = parse_clustering("component,cluster\na,core\nb,ui\n").unwrap();
        assert_eq!(c["b"], "ui");
    }

    #[test]
    fn plan_shapes() {
        let one = r#"[{"id":"t","name":"T","planned_start":"2024-01-01","planned_end":"2024-01-05","budget":1,"percent_complete":0}]"#;
        assert_eq!(parse_plan(one).unwrap().len(), 1);
        assert_eq!(parse_plan(&format!("{{\"tasks\":{one}}}")).unwrap().len(), 1);
        assert!(parse_plan("{").is_err());
    }
}
