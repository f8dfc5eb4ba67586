//! Stable JSON encoding of programs.
//!
//! The payload is wrapped in an envelope `{"schema": 1, "program": ...}` so
//! readers can reject files from an incompatible writer before looking at
//! the body. Object keys are emitted in sorted order, making the output
//! byte-stable for a given AST.

use crate::ast::Program;
use serde_json::Value;
use thiserror::Error;

/// Version stamp written into and required from the envelope.
pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum JsonError {
    #[error("invalid JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("missing or non-object envelope; expected {{\"schema\": ..., \"program\": ...}}")]
    Envelope,
    #[error("unsupported schema version {found}; this reader supports {SCHEMA_VERSION}")]
    SchemaVersion { found: Value },
    #[error("malformed program at `{path}`: {message}")]
    Shape { path: String, message: String },
}

/// Serialize a program with the schema envelope. Keys are sorted; output
/// ends with a newline.
pub fn to_json(program: &Program) -> String {
    let body = serde_json::to_value(program).expect("AST serialization cannot fail");
    let envelope = serde_json::json!({ "schema": SCHEMA_VERSION, "program": body });
    let mut text = serde_json::to_string_pretty(&envelope).expect("value printing cannot fail");
    text.push('\n');
    text
}

/// Parse a program from envelope JSON, reporting the JSON path of the first
/// offending value on shape errors.
pub fn from_json(text: &str) -> Result<Program, JsonError> {
    let value: Value = serde_json::from_str(text)?;
    let obj = value.as_object().ok_or(JsonError::Envelope)?;
    let schema = obj.get("schema").ok_or(JsonError::Envelope)?;
    if schema.as_u64() != Some(SCHEMA_VERSION) {
        return Err(JsonError::SchemaVersion { found: schema.clone() });
    }
    let body = obj.get("program").ok_or(JsonError::Envelope)?.clone();
    let mut track = serde_path_to_error::Track::new();
    let de = serde_path_to_error::Deserializer::new(&body, &mut track);
    Program::deserialize(de).map_err(|e| JsonError::Shape {
        path: track.path().to_string(),
        message: e.to_string(),
    })
}

use serde::Deserialize as _;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    const DEMO: &str = r#"
class Cell {
  int x;
}

choreography T(int n) {
  endpoint a = Cell();
  endpoint b = Cell();

  run {
    channel_invariant \msg >= 0;
    communicate a: a.x -> b: b.x;
  }
}
"#;

    #[test]
    fn round_trip_preserves_ast() {
        let p = parse(DEMO).unwrap();
        let text = to_json(&p);
        let back = from_json(&text).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn output_is_stable() {
        let p = parse(DEMO).unwrap();
        assert_eq!(to_json(&p), to_json(&p));
        // Envelope keys appear sorted: "program" before "schema".
        let text = to_json(&p);
        let prog_at = text.find("\"program\"").unwrap();
        let schema_at = text.find("\"schema\"").unwrap();
        assert!(prog_at < schema_at);
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let p = parse(DEMO).unwrap();
        let text = to_json(&p).replace("\"schema\": 1", "\"schema\": 99");
        match from_json(&text) {
            Err(JsonError::SchemaVersion { found }) => assert_eq!(found, serde_json::json!(99)),
            other => panic!("expected schema-version error, got {other:?}"),
        }
    }

    #[test]
    fn missing_envelope_is_rejected() {
        assert!(matches!(from_json("[1, 2]"), Err(JsonError::Envelope)));
        assert!(matches!(from_json("{\"程\": 1}"), Err(JsonError::Envelope)));
    }

    #[test]
    fn shape_errors_carry_a_path() {
        let p = parse(DEMO).unwrap();
        // Corrupt one discriminator deep in the tree.
        let text = to_json(&p).replace("\"Communicate\"", "\"Communicat\"");
        match from_json(&text) {
            Err(JsonError::Shape { path, .. }) => {
                assert!(path.contains("decls"), "path should reach into decls: {path}");
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_are_reported() {
        assert!(matches!(from_json("{not json"), Err(JsonError::Syntax(_))));
    }
}
