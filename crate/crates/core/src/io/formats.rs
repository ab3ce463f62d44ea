//! Delimited-text reports and small input formats.
//!
//! Configured thresholds print as exact decimals; computed distances print
//! with 9 significant digits.

use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use rust_decimal::Decimal;
use thiserror::Error;

use crate::body_model::CompensationTable;
use crate::geometry::{AffineTransform, Point3};
use crate::policy::ThresholdMatrices;
use crate::simulation::ScenarioResult;

pub const DECISION_HEADER: [&str; 9] = [
    "time_s",
    "state",
    "speed_factor",
    "worst_human_kp",
    "worst_robot_kp",
    "distance_m",
    "stop_threshold_m",
    "reduced_threshold_m",
    "event",
];
pub const PAIR_HEADER: [&str; 4] = ["time_s", "human_kp", "robot_kp", "distance_m"];
pub const MATRIX_HEADER: [&str; 4] = ["human_kp", "robot_kp", "s_d_m", "s_d_reduced_m"];
pub const COMPENSATION_HEADER: [&str; 2] = ["keypoint", "coefficient_m"];

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {reason}")]
pub struct FormatError {
    pub line: u64,
    pub reason: String,
}

/// `x` rounded to 9 significant digits, without trailing zeros.
pub fn format_distance(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float");
    rounded.to_string()
}

pub fn format_decimal(d: Decimal) -> String {
    d.normalize().to_string()
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn decision_log_csv(result: &ScenarioResult) -> String {
    csv_string(
        &DECISION_HEADER,
        result.frames.iter().map(|f| {
            let d = &f.decision;
            let (hk, rk, dist, stop, reduced) = match &d.worst {
                Some(w) => (
                    w.human.clone(),
                    w.robot.clone(),
                    format_distance(w.distance),
                    format_decimal(w.stop_threshold),
                    format_decimal(w.reduced_threshold),
                ),
                None => Default::default(),
            };
            vec![
                format_distance(d.timestamp),
                d.state.as_str().to_string(),
                d.speed_factor.to_string(),
                hk,
                rk,
                dist,
                stop,
                reduced,
                f.event.as_str().to_string(),
            ]
        }),
    )
}

pub fn pair_trace_csv(result: &ScenarioResult) -> String {
    csv_string(
        &PAIR_HEADER,
        result.pair_trace.iter().map(|s| {
            vec![
                format_distance(s.time),
                s.human.clone(),
                s.robot.clone(),
                format_distance(s.distance),
            ]
        }),
    )
}

pub fn matrix_csv(m: &ThresholdMatrices) -> String {
    let mut rows = Vec::new();
    for (i, h) in m.humans().iter().enumerate() {
        for (j, r) in m.robots().iter().enumerate() {
            rows.push(vec![
                h.clone(),
                r.clone(),
                format_decimal(m.stop_at(i, j)),
                format_decimal(m.reduced_at(i, j)),
            ]);
        }
    }
    csv_string(&MATRIX_HEADER, rows)
}

pub fn compensation_csv(table: &CompensationTable) -> String {
    csv_string(
        &COMPENSATION_HEADER,
        table.iter().map(|(k, v)| vec![k.to_string(), format_decimal(v)]),
    )
}

pub fn parse_compensation_csv(text: &str) -> Result<CompensationTable, FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let to_err = |e: csv::Error| FormatError {
        line: e.position().map_or(1, |p| p.line()),
        reason: e.to_string(),
    };
    if reader.headers().map_err(to_err)?.iter().ne(COMPENSATION_HEADER) {
        return Err(FormatError {
            line: 1,
            reason: format!("expected header `{}`", COMPENSATION_HEADER.join(",")),
        });
    }
    let mut coefficients = IndexMap::new();
    for row in reader.records() {
        let row = row.map_err(to_err)?;
        let line = row.position().map_or(0, |p| p.line());
        let value: Decimal = row[1].parse().map_err(|_| FormatError {
            line,
            reason: format!("`{}` is not a decimal", &row[1]),
        })?;
        if coefficients.insert(row[0].to_string(), value).is_some() {
            return Err(FormatError {
                line,
                reason: format!("duplicate keypoint `{}`", &row[0]),
            });
        }
    }
    CompensationTable::new(coefficients).map_err(|e| FormatError {
        line: 0,
        reason: e.to_string(),
    })
}

/// A source point and the target point it should map to.
pub type Correspondence = (Point3<f64>, Point3<f64>);

/// Reads `sx,sy,sz,tx,ty,tz` rows; `#` starts a comment and blank lines are
/// skipped. A header row of those names is optional.
pub fn parse_correspondences(text: &str) -> Result<Vec<Correspondence>, FormatError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx as u64 + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let cells: Vec<&str> = content.split(',').map(str::trim).collect();
        if out.is_empty() && cells == ["sx", "sy", "sz", "tx", "ty", "tz"] {
            continue;
        }
        if cells.len() != 6 {
            return Err(FormatError {
                line,
                reason: format!("expected 6 columns, found {}", cells.len()),
            });
        }
        let mut v = [0.0; 6];
        for (slot, cell) in v.iter_mut().zip(&cells) {
            *slot = cell
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| FormatError {
                    line,
                    reason: format!("`{cell}` is not a finite number"),
                })?;
        }
        out.push((Point3::new(v[0], v[1], v[2]), Point3::new(v[3], v[4], v[5])));
    }
    Ok(out)
}

/// Human-readable transform plus residuals.
pub fn transform_report(t: &AffineTransform, max_residual: f64, rms_residual: f64) -> String {
    let l = t.linear();
    let tr = t.translation();
    let mut s = String::new();
    s.push_str(if t.is_rigid() { "kind,rigid\n" } else { "kind,affine\n" });
    for r in 0..3 {
        s.push_str(&format!(
            "linear_row{r},{},{},{}\n",
            format_distance(l[(r, 0)]),
            format_distance(l[(r, 1)]),
            format_distance(l[(r, 2)])
        ));
    }
    s.push_str(&format!(
        "translation,{},{},{}\n",
        format_distance(tr.x),
        format_distance(tr.y),
        format_distance(tr.z)
    ));
    s.push_str(&format!("max_residual_m,{}\n", format_distance(max_residual)));
    s.push_str(&format!("rms_residual_m,{}\n", format_distance(rms_residual)));
    s
}

/// Writes `contents` to a temporary file next to `path`, then renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{preset_matrices, PresetScenario};

    #[test]
    fn distance_formatting() {
        assert_eq!(format_distance(0.0), "0");
        assert_eq!(format_distance(0.25), "0.25");
        assert_eq!(format_distance(1.0 / 3.0), "0.333333333");
        assert_eq!(format_distance(2.0 / 3.0), "0.666666667");
        assert_eq!(format_distance(123.456789012), "123.456789");
        assert_eq!(format_distance(9.9999999999), "10");
        assert_eq!(format_distance(-0.5), "-0.5");
        assert_eq!(format_distance(1.0 / 30.0), "0.0333333333");
    }

    #[test]
    fn matrix_contains_table_row() {
        let csv = matrix_csv(&preset_matrices(PresetScenario::Basic));
        assert!(csv.starts_with("human_kp,robot_kp,s_d_m,s_d_reduced_m\n"));
        assert!(csv.lines().any(|l| l == "right_wrist,end_effector,0.26,0.41"));
        assert!(csv.lines().any(|l| l == "nose,end_effector,0.21,0.36"));
    }

    #[test]
    fn compensation_round_trip() {
        let table = CompensationTable::from_literals(&[("a", "0.1"), ("b", "0.000000001")]);
        let text = compensation_csv(&table);
        assert_eq!(text, "keypoint,coefficient_m\na,0.1\nb,0.000000001\n");
        let back = parse_compensation_csv(&text).unwrap();
        assert_eq!(back.get("b"), table.get("b"));
        assert!(parse_compensation_csv("keypoint,coefficient_m\na,-1\n").is_err());
        assert_eq!(
            parse_compensation_csv("keypoint,coefficient_m\na,x\n")
                .unwrap_err()
                .line,
            2
        );
    }

    #[test]
    fn correspondences_with_comments() {
        let text = "# calibration\nsx,sy,sz,tx,ty,tz\n0,0,0, 1,0,0\n\n1,2,3,4,5,6 # last\n";
        let c = parse_correspondences(text).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[1].1, Point3::new(4.0, 5.0, 6.0));
        assert_eq!(parse_correspondences("1,2,3\n").unwrap_err().line, 1);
        assert_eq!(parse_correspondences("0,0,0,0,0,0\n1,2,x,4,5,6\n").unwrap_err().line, 2);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
