//! Wire envelope. Every frame is one JSON object:
//!
//! ```json
//! {"op":"call","id":"7","service":"propose","payload":{"session_id":"s1"},"schema_version":"1"}
//! ```
//!
//! Calls get exactly one `reply` or `error` with the same `id`. Session
//! notifications arrive as `event` frames on subscribed topics.

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Subscribe,
    Unsubscribe,
    Publish,
    Call,
    Reply,
    Event,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeMessage {
    pub op: Op,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default)]
    pub payload: Value,
    #[serde(default = "schema_version")]
    pub schema_version: String,
    /// Milliseconds since the Unix epoch, set on outbound frames.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stamp: Option<u64>,
}

fn schema_version() -> String {
    SCHEMA_VERSION.to_string()
}

impl BridgeMessage {
    fn new(op: Op, payload: Value) -> Self {
        BridgeMessage {
            op,
            id: None,
            service: None,
            topic: None,
            payload,
            schema_version: schema_version(),
            stamp: None,
        }
    }

    pub fn call(id: impl Into<String>, service: impl Into<String>, payload: Value) -> Self {
        BridgeMessage {
            id: Some(id.into()),
            service: Some(service.into()),
            ..Self::new(Op::Call, payload)
        }
    }

    pub fn subscribe(id: impl Into<String>, topic: impl Into<String>) -> Self {
        BridgeMessage {
            id: Some(id.into()),
            topic: Some(topic.into()),
            ..Self::new(Op::Subscribe, Value::Null)
        }
    }

    pub fn unsubscribe(id: impl Into<String>, topic: impl Into<String>) -> Self {
        BridgeMessage {
            op: Op::Unsubscribe,
            ..Self::subscribe(id, topic)
        }
    }

    pub fn reply(to: &BridgeMessage, payload: Value) -> Self {
        BridgeMessage {
            id: to.id.clone(),
            service: to.service.clone(),
            topic: to.topic.clone(),
            ..Self::new(Op::Reply, payload)
        }
    }

    pub fn error(id: Option<String>, err: &WireError) -> Self {
        BridgeMessage {
            id,
            ..Self::new(
                Op::Error,
                serde_json::json!({ "code": err.code, "message": err.message }),
            )
        }
    }

    pub fn event(topic: String, payload: Value) -> Self {
        BridgeMessage {
            topic: Some(topic),
            ..Self::new(Op::Event, payload)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }
}

/// A refused message: stable code plus a human-readable explanation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireError {
    pub code: &'static str,
    pub message: String,
}

impl WireError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        WireError {
            code,
            message: message.into(),
        }
    }
}

/// Parse one inbound frame. Never panics; the error names what was wrong.
pub fn decode(text: &str) -> Result<BridgeMessage, WireError> {
    let value: Value = serde_json::from_str(text).map_err(|e| WireError::new("malformed_message", e.to_string()))?;
    if !value.is_object() {
        return Err(WireError::new("malformed_message", "frame is not a JSON object"));
    }
    let msg: BridgeMessage =
        serde_json::from_value(value).map_err(|e| WireError::new("malformed_message", e.to_string()))?;
    if msg.schema_version != SCHEMA_VERSION {
        return Err(WireError::new(
            "unsupported_schema_version",
            format!("schema_version {:?} is not supported; use \"1\"", msg.schema_version),
        ));
    }
    Ok(msg)
}

/// The id from a frame that failed to decode, if it had a readable one.
pub fn salvage_id(text: &str) -> Option<String> {
    let value: Value = serde_json::from_str(text).ok()?;
    value.get("id")?.as_str().map(String::from)
}

/// Per-session topic families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TopicKind {
    State,
    Telemetry,
    Plan,
    Metrics,
}

impl TopicKind {
    pub const ALL: [TopicKind; 4] = [TopicKind::State, TopicKind::Telemetry, TopicKind::Plan, TopicKind::Metrics];

    fn suffix(self) -> &'static str {
        match self {
            TopicKind::State => "state",
            TopicKind::Telemetry => "telemetry",
            TopicKind::Plan => "plan",
            TopicKind::Metrics => "metrics",
        }
    }
}

pub fn topic_name(session: &str, kind: TopicKind) -> String {
    format!("/session/{session}/{}", kind.suffix())
}

/// Split `/session/{id}/{kind}`.
pub fn parse_topic(topic: &str) -> Option<(&str, TopicKind)> {
    let rest = topic.strip_prefix("/session/")?;
    let (id, kind) = rest.rsplit_once('/')?;
    if id.is_empty() || id.contains('/') {
        return None;
    }
    let kind = TopicKind::ALL.into_iter().find(|k| k.suffix() == kind)?;
    Some((id, kind))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_round_trip() {
        let m = BridgeMessage::call("1", "get_state", serde_json::json!({"session_id": "s1"}));
        assert_eq!(decode(&m.to_json()).unwrap(), m);
        let text = r#"{"op":"call","id":"2","service":"x"}"#;
        let m = decode(text).unwrap();
        assert_eq!(m.payload, Value::Null);
        assert_eq!(m.schema_version, "1");
    }

    #[test]
    fn decode_rejects() {
        assert_eq!(decode("[1]").unwrap_err().code, "malformed_message");
        assert_eq!(decode("{\"op\":\"shout\"}").unwrap_err().code, "malformed_message");
        assert_eq!(decode("{}").unwrap_err().code, "malformed_message");
        let v2 = r#"{"op":"call","id":"1","schema_version":"2"}"#;
        assert_eq!(decode(v2).unwrap_err().code, "unsupported_schema_version");
        assert_eq!(salvage_id(r#"{"op":7,"id":"9"}"#).as_deref(), Some("9"));
    }

    #[test]
    fn topics() {
        assert_eq!(topic_name("s1", TopicKind::Metrics), "/session/s1/metrics");
        assert_eq!(parse_topic("/session/s1/plan"), Some(("s1", TopicKind::Plan)));
        assert_eq!(parse_topic("/session//plan"), None);
        assert_eq!(parse_topic("/session/a/b/plan"), None);
        assert_eq!(parse_topic("/robot/s1/plan"), None);
        assert_eq!(parse_topic("/session/s1/odometry"), None);
    }
}
