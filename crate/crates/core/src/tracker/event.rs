use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Running => "running",
            RunStatus::Completed => "completed",
            RunStatus::Failed => "failed",
        }
    }

    pub fn is_terminal(&self) -> bool {
        *self != RunStatus::Running
    }
}

impl std::str::FromStr for RunStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "running" => Ok(RunStatus::Running),
            "completed" => Ok(RunStatus::Completed),
            "failed" => Ok(RunStatus::Failed),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

/// Per-type payload of an event; `type` is the tag on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    RunStart {
        model: String,
        #[serde(default)]
        config: Map<String, Value>,
    },
    Metric {
        step: u64,
        name: String,
        value: f64,
    },
    LogLine {
        level: String,
        text: String,
    },
    Checkpoint {
        label: String,
    },
    RunEnd {
        status: RunStatus,
    },
}

impl EventKind {
    pub fn type_name(&self) -> &'static str {
        match self {
            EventKind::RunStart { .. } => "run_start",
            EventKind::Metric { .. } => "metric",
            EventKind::LogLine { .. } => "log_line",
            EventKind::Checkpoint { .. } => "checkpoint",
            EventKind::RunEnd { .. } => "run_end",
        }
    }
}

/// One line of the NDJSON event wire format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    #[serde(flatten)]
    pub kind: EventKind,
    pub run: String,
    pub ts: u64,
}

impl Event {
    pub fn new(run: &str, ts: u64, kind: EventKind) -> Self {
        Self {
            kind,
            run: run.to_string(),
            ts,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

pub const EVENT_TYPES: &[&str] = &["run_start", "metric", "log_line", "checkpoint", "run_end"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectCode {
    /// Unknown or absent `type`.
    E101,
    /// Missing, mistyped or out-of-range field, or a line that is not a JSON object.
    E102,
    /// `run` names a different run.
    E103,
    /// Lifecycle violation: event after `run_end`, or a second `run_start`.
    E104,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    pub code: RejectCode,
    pub message: String,
}

/// Decodes one wire line, filling `run` and `ts` when absent.
pub fn decode_line(text: &str, run_id: &str, now: u64) -> Result<Event, (RejectCode, String)> {
    let mut obj = match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(obj)) => obj,
        Ok(_) => return Err((RejectCode::E102, "line is not a JSON object".into())),
        Err(e) => return Err((RejectCode::E102, format!("malformed JSON: {e}"))),
    };
    match obj.get("type") {
        Some(Value::String(t)) if EVENT_TYPES.contains(&t.as_str()) => {}
        Some(other) => return Err((RejectCode::E101, format!("unknown event type {other}"))),
        None => return Err((RejectCode::E101, "missing event type".into())),
    }
    match obj.get("run") {
        None => {
            obj.insert("run".into(), Value::from(run_id));
        }
        Some(Value::String(r)) if r == run_id => {}
        Some(other) => {
            return Err((
                RejectCode::E103,
                format!("event for run {other} sent to run {run_id}"),
            ))
        }
    }
    if !obj.contains_key("ts") {
        obj.insert("ts".into(), Value::from(now));
    }
    let event: Event = serde_json::from_value(Value::Object(obj))
        .map_err(|e| (RejectCode::E102, e.to_string()))?;
    if let EventKind::Metric { value, name, .. } = &event.kind {
        if !value.is_finite() {
            return Err((RejectCode::E102, "metric value must be finite".into()));
        }
        if name.is_empty() {
            return Err((RejectCode::E102, "metric name is empty".into()));
        }
    }
    if let EventKind::RunEnd {
        status: RunStatus::Running,
    } = event.kind
    {
        return Err((RejectCode::E102, "run_end status must be terminal".into()));
    }
    Ok(event)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shape() {
        let e = Event::new(
            "R",
            7,
            EventKind::Metric {
                step: 3,
                name: "loss".into(),
                value: 0.5,
            },
        );
        assert_eq!(
            e.to_line(),
            r#"{"type":"metric","step":3,"name":"loss","value":0.5,"run":"R","ts":7}"#
        );
        assert_eq!(decode_line(&e.to_line(), "R", 0).unwrap(), e);
    }

    #[test]
    fn rejection_codes() {
        let code = |line: &str| decode_line(line, "R", 1).unwrap_err().0;
        assert_eq!(code(r#"{"type":"metric","name":"loss","value":1}"#), RejectCode::E102);
        assert_eq!(code(r#"{"type":"bogus"}"#), RejectCode::E101);
        assert_eq!(code(r#"{"step":1}"#), RejectCode::E101);
        assert_eq!(
            code(r#"{"type":"metric","step":1,"name":"loss","value":1,"run":"X"}"#),
            RejectCode::E103
        );
        assert_eq!(code(r#"{"type":"metric","step":-1,"name":"loss","value":1}"#), RejectCode::E102);
        assert_eq!(code(r#"{"type":"run_end","status":"running"}"#), RejectCode::E102);
        assert_eq!(code("not json"), RejectCode::E102);
        let ok = decode_line(r#"{"type":"log_line","level":"info","text":"hi"}"#, "R", 42).unwrap();
        assert_eq!((ok.run.as_str(), ok.ts), ("R", 42));
    }
}
