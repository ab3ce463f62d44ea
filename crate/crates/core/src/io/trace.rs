//! Skeleton trace files: `time_s,agent,keypoint,x,y,z,confidence`.
//!
//! Empty `x,y,z` cells mark a missing detection. An empty confidence reads
//! as 1.0.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::geometry::Point3;

pub const TRACE_HEADER: [&str; 7] = ["time_s", "agent", "keypoint", "x", "y", "z", "confidence"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    ParseError { line: u64, reason: String },
    #[error("line {line}: time goes backwards")]
    NonMonotonicTime { line: u64 },
}

impl TraceError {
    pub fn line(&self) -> u64 {
        match self {
            TraceError::ParseError { line, .. } | TraceError::NonMonotonicTime { line } => *line,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceAgent {
    Human,
    Robot,
}

impl TraceAgent {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceAgent::Human => "human",
            TraceAgent::Robot => "robot",
        }
    }
}

impl fmt::Display for TraceAgent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTraceRecord {
    pub time: f64,
    pub agent: TraceAgent,
    pub keypoint: String,
    pub position: Option<Point3<f64>>,
    pub confidence: f64,
}

fn parse_f64(cell: &str, what: &str, line: u64) -> Result<f64, TraceError> {
    let v: f64 = cell.parse().map_err(|_| TraceError::ParseError {
        line,
        reason: format!("{what} `{cell}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(TraceError::ParseError {
            line,
            reason: format!("{what} must be finite"),
        });
    }
    Ok(v)
}

/// Parses a trace, keeping file order. Time must be non-decreasing per agent.
pub fn parse_trace(bytes: &[u8]) -> Result<Vec<SkeletonTraceRecord>, TraceError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let csv_error = |e: csv::Error| TraceError::ParseError {
        line: e.position().map_or(1, |p| p.line()),
        reason: e.to_string(),
    };
    let header = reader.headers().map_err(csv_error)?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(TraceError::ParseError {
            line: 1,
            reason: format!("expected header `{}`", TRACE_HEADER.join(",")),
        });
    }

    let mut last_time: HashMap<TraceAgent, f64> = HashMap::new();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let time = parse_f64(&row[0], "time_s", line)?;
        let agent = match &row[1] {
            "human" => TraceAgent::Human,
            "robot" => TraceAgent::Robot,
            other => {
                return Err(TraceError::ParseError {
                    line,
                    reason: format!("agent `{other}` is not `human` or `robot`"),
                })
            }
        };
        if row[2].is_empty() {
            return Err(TraceError::ParseError {
                line,
                reason: "empty keypoint name".into(),
            });
        }
        let position = match (&row[3], &row[4], &row[5]) {
            ("", "", "") => None,
            (x, y, z) => Some(Point3::new(
                parse_f64(x, "x", line)?,
                parse_f64(y, "y", line)?,
                parse_f64(z, "z", line)?,
            )),
        };
        let confidence = match &row[6] {
            "" => 1.0,
            c => parse_f64(c, "confidence", line)?,
        };
        if !(0.0..=1.0).contains(&confidence) {
            return Err(TraceError::ParseError {
                line,
                reason: format!("confidence {confidence} outside [0, 1]"),
            });
        }
        if let Some(prev) = last_time.insert(agent, time) {
            if time < prev {
                return Err(TraceError::NonMonotonicTime { line });
            }
        }
        records.push(SkeletonTraceRecord {
            time,
            agent,
            keypoint: row[2].to_string(),
            position,
            confidence,
        });
    }
    Ok(records)
}

/// Serializes records so that [`parse_trace`] returns them unchanged.
pub fn write_trace(records: &[SkeletonTraceRecord]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(TRACE_HEADER).expect("in-memory write");
    for r in records {
        let (x, y, z) = match r.position {
            Some(p) => (p.x.to_string(), p.y.to_string(), p.z.to_string()),
            None => Default::default(),
        };
        writer
            .write_record([
                r.time.to_string(),
                r.agent.to_string(),
                r.keypoint.clone(),
                x,
                y,
                z,
                r.confidence.to_string(),
            ])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "time_s,agent,keypoint,x,y,z,confidence\n";

    #[test]
    fn header_only_is_empty() {
        assert_eq!(parse_trace(HEADER.as_bytes()).unwrap(), vec![]);
    }

    #[test]
    fn single_line() {
        let text = format!("{HEADER}0.0,human,wrist,0.1,0.2,0.3,0.9\n");
        let records = parse_trace(text.as_bytes()).unwrap();
        assert_eq!(
            records,
            vec![SkeletonTraceRecord {
                time: 0.0,
                agent: TraceAgent::Human,
                keypoint: "wrist".into(),
                position: Some(Point3::new(0.1, 0.2, 0.3)),
                confidence: 0.9,
            }]
        );
        assert_eq!(parse_trace(write_trace(&records).as_bytes()).unwrap(), records);
    }

    #[test]
    fn backwards_time_reports_line() {
        let text = format!("{HEADER}0.0,human,nose,0,0,0,1\n0.1,human,nose,0,0,0,1\n0.05,human,nose,0,0,0,1\n");
        assert_eq!(
            parse_trace(text.as_bytes()),
            Err(TraceError::NonMonotonicTime { line: 4 })
        );
    }

    #[test]
    fn time_is_tracked_per_agent() {
        let text = format!("{HEADER}0.1,human,nose,0,0,0,1\n0.0,robot,elbow,0,0,0,1\n");
        assert_eq!(parse_trace(text.as_bytes()).unwrap().len(), 2);
    }

    #[test]
    fn missing_position_and_default_confidence() {
        let text = format!("{HEADER}0.0,human,nose,,,,\n");
        let r = &parse_trace(text.as_bytes()).unwrap()[0];
        assert_eq!(r.position, None);
        assert_eq!(r.confidence, 1.0);
    }

    #[test]
    fn malformed_lines() {
        let bad = [
            "0.0,human,nose,a,0,0,1\n",
            "0.0,alien,nose,0,0,0,1\n",
            "0.0,human,nose,0,,0,1\n",
            "0.0,human,nose,0,0,0,1.5\n",
            "0.0,human,nose,0,0\n",
            "0.0,human,,0,0,0,1\n",
        ];
        for line in bad {
            let text = format!("{HEADER}{line}");
            match parse_trace(text.as_bytes()) {
                Err(TraceError::ParseError { line, .. }) => assert_eq!(line, 2, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(
            parse_trace(b"t,agent,keypoint,x,y,z,confidence\n"),
            Err(TraceError::ParseError { line: 1, .. })
        ));
    }
}
