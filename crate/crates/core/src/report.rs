//! Report writers: atomic file output, JSON, CSV tables and the co-occurrence
//! heatmap. Every writer is a pure function of its input.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use crate::analytics::{CohortStats, CooccurrenceMatrix, CurveRow, PrevalenceReport, RegressionSet};
use crate::corpus::Metric;

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Pretty JSON with a trailing newline. Floats use the shortest
/// round-tripping representation.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

fn csv_string(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 fields")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn prevalence_csv(report: &PrevalenceReport) -> String {
    let mut rows = vec![vec![
        "subject".into(),
        "bot_flagged".into(),
        "bot_total".into(),
        "bot_proportion".into(),
        "human_flagged".into(),
        "human_total".into(),
        "human_proportion".into(),
        "z".into(),
        "p_value".into(),
    ]];
    let flagged = |c: &crate::analytics::CohortPrevalence, i: usize| {
        c.constructs.get(i).map(|p| p.flagged).unwrap_or(c.with_any_trigger)
    };
    for (i, t) in report.tests.iter().enumerate() {
        rows.push(vec![
            t.subject.clone(),
            flagged(&report.bot, i).to_string(),
            report.bot.total.to_string(),
            t.bot_proportion.to_string(),
            flagged(&report.human, i).to_string(),
            report.human.total.to_string(),
            t.human_proportion.to_string(),
            t.z.to_string(),
            t.p_value.to_string(),
        ]);
    }
    csv_string(rows)
}

pub fn cooccurrence_csv(matrices: &[CooccurrenceMatrix]) -> String {
    let mut rows = vec![vec!["cohort".into(), "construct".into()]];
    if let Some(m) = matrices.first() {
        rows[0].extend(m.constructs.iter().map(|c| c.name().to_string()));
    }
    for m in matrices {
        for (i, c) in m.constructs.iter().enumerate() {
            let mut row = vec![m.cohort.name().to_string(), c.name().to_string()];
            row.extend(m.counts[i].iter().map(u64::to_string));
            rows.push(row);
        }
    }
    csv_string(rows)
}

pub fn regression_csv(set: &RegressionSet) -> String {
    let mut rows = vec![[
        "cohort",
        "metric",
        "n",
        "term",
        "status",
        "estimate",
        "std_error",
        "t_value",
        "p_value",
        "percent_change",
        "practically_significant",
        "r_squared",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect::<Vec<String>>()];
    for m in &set.models {
        for c in &m.coefficients {
            rows.push(vec![
                m.cohort.name().into(),
                m.metric.name().into(),
                m.n.to_string(),
                c.name.clone(),
                serde_json::to_value(c.status).expect("status").as_str().unwrap_or_default().to_string(),
                opt(c.estimate),
                opt(c.std_error),
                opt(c.t_value),
                opt(c.p_value),
                opt(c.percent_change),
                c.practically_significant.map(|b| b.to_string()).unwrap_or_default(),
                opt(m.r_squared),
            ]);
        }
    }
    for a in &set.absent {
        let mut row = vec![a.cohort.name().to_string(), a.metric.name().to_string(), "0".into(), String::new(), "absent".into()];
        row.resize(12, String::new());
        rows.push(row);
    }
    csv_string(rows)
}

pub fn curve_csv(curves: &[(crate::corpus::AccountClass, Vec<CurveRow>)]) -> String {
    let mut rows = vec![vec!["cohort".to_string(), "trigger_count".into(), "n".into()]];
    for m in Metric::ALL {
        for s in ["mean", "q1", "median", "q3"] {
            rows[0].push(format!("{}_{s}", m.name()));
        }
    }
    for (cohort, curve) in curves {
        for r in curve {
            let mut row = vec![cohort.name().to_string(), r.trigger_count.to_string(), r.n.to_string()];
            for m in Metric::ALL {
                let s = &r.metrics[&m];
                row.extend([s.mean, s.q1, s.median, s.q3].iter().map(f64::to_string));
            }
            rows.push(row);
        }
    }
    csv_string(rows)
}

pub fn stats_csv(stats: &[CohortStats]) -> String {
    let mut rows = vec![["cohort", "variable", "n", "mean", "median", "sd"].iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    for c in stats {
        for r in &c.rows {
            rows.push(vec![
                c.cohort.name().into(),
                r.variable.into(),
                r.n.to_string(),
                r.mean.to_string(),
                r.median.to_string(),
                r.sd.to_string(),
            ]);
        }
    }
    csv_string(rows)
}

const CELL: usize = 56;
const LABEL: usize = 150;

/// Linear white-to-navy ramp: 0 maps to rgb(255,255,255) and the matrix
/// maximum to rgb(8,48,107). Cells show raw counts; the legend states the scale.
fn ramp(t: f64) -> (u8, u8, u8) {
    let t = t.clamp(0.0, 1.0);
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    (mix(255.0, 8.0), mix(255.0, 48.0), mix(255.0, 107.0))
}

/// Heatmap of one co-occurrence matrix.
pub fn cooccurrence_svg(m: &CooccurrenceMatrix) -> String {
    let n = m.constructs.len();
    let width = LABEL + n * CELL + 20;
    let height = LABEL + n * CELL + 60;
    let max = m.counts.iter().flatten().copied().max().unwrap_or(0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<title>Trigger co-occurrence, {} tweets (n={})</title>"#, m.cohort.name(), m.total);
    for (i, c) in m.constructs.iter().enumerate() {
        let y = LABEL + i * CELL + CELL / 2;
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end" dominant-baseline="middle">{}</text>"#, LABEL - 6, c.name());
        let x = LABEL + i * CELL + CELL / 2;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="start" transform="rotate(-45 {x} {})">{}</text>"#,
            LABEL - 6,
            LABEL - 6,
            c.name()
        );
    }
    for i in 0..n {
        for j in 0..n {
            let v = m.counts[i][j];
            let t = if max == 0 { 0.0 } else { v as f64 / max as f64 };
            let (r, g, b) = ramp(t);
            let (x, y) = (LABEL + j * CELL, LABEL + i * CELL);
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({r},{g},{b})" stroke="#999"/>"##
            );
            let fg = if t > 0.5 { "#fff" } else { "#000" };
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" dominant-baseline="middle" fill="{fg}">{v}</text>"#,
                x + CELL / 2,
                y + CELL / 2
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{LABEL}" y="{}">Scale: linear, white = 0, navy rgb(8,48,107) = {max}</text>"#,
        LABEL + n * CELL + 30
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AccountClass;
    use crate::triggers::Construct;

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn heatmap_scale_endpoints() {
        assert_eq!(ramp(0.0), (255, 255, 255));
        assert_eq!(ramp(1.0), (8, 48, 107));
        let mut counts = [[0u64; 7]; 7];
        counts[0][0] = 5;
        let m = CooccurrenceMatrix { cohort: AccountClass::Bot, total: 5, constructs: Construct::ALL.to_vec(), counts };
        let svg = cooccurrence_svg(&m);
        assert_eq!(svg.matches("<rect").count(), 49);
        assert!(svg.contains("rgb(8,48,107)"));
        assert_eq!(svg, cooccurrence_svg(&m));
    }
}
