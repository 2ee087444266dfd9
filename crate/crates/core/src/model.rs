//! Shared domain vocabulary: API identities, call requests, wire envelopes,
//! documentation and verdicts.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Separates the segments of a canonical request key (ASCII unit separator).
pub const KEY_SEPARATOR: char = '\u{1F}';

/// Body of the envelope returned for an API that is down or yields nothing usable.
pub const UNAVAILABLE_RESPONSE: &str = "This API did not return any useful information...";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid api identifier: {0}")]
    InvalidIdentifier(String),
    #[error("invalid documentation for {api}: duplicate parameter `{name}`")]
    DuplicateParameter { api: String, name: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot derive cache key: tool_input is not a JSON object ({reason})")]
pub struct KeyDerivationError {
    pub reason: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed response envelope ({reason}): {raw}")]
pub struct WireFormatError {
    pub reason: String,
    pub raw: String,
}

/// The (category, tool, API) triple naming one callable endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ApiIdentifier {
    pub category: String,
    pub tool_name: String,
    pub api_name: String,
}

impl ApiIdentifier {
    pub fn new(
        category: impl Into<String>,
        tool_name: impl Into<String>,
        api_name: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let id = Self {
            category: category.into(),
            tool_name: tool_name.into(),
            api_name: api_name.into(),
        };
        id.validate()?;
        Ok(id)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (field, value) in [
            ("category", &self.category),
            ("tool_name", &self.tool_name),
            ("api_name", &self.api_name),
        ] {
            if value.trim().is_empty() {
                return Err(ModelError::InvalidIdentifier(format!("{field} is empty")));
            }
            if value.contains(KEY_SEPARATOR) {
                return Err(ModelError::InvalidIdentifier(format!(
                    "{field} contains the key separator"
                )));
            }
        }
        Ok(())
    }

    pub fn tool(&self) -> ToolRef {
        ToolRef {
            category: self.category.clone(),
            tool_name: self.tool_name.clone(),
        }
    }
}

impl fmt::Display for ApiIdentifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.category, self.tool_name, self.api_name)
    }
}

/// A tool: the (category, tool) pair that groups several APIs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ToolRef {
    pub category: String,
    pub tool_name: String,
}

impl ToolRef {
    pub fn new(category: impl Into<String>, tool_name: impl Into<String>) -> Self {
        Self {
            category: category.into(),
            tool_name: tool_name.into(),
        }
    }
}

impl fmt::Display for ToolRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.category, self.tool_name)
    }
}

/// One tool-API invocation as it travels on the wire:
/// `{category, tool_name, api_name, tool_input, strip}`.
///
/// `tool_input` holds the argument object serialized as text. On input it
/// may also be given as a bare JSON object, which is serialized on the way in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRequest {
    #[serde(flatten)]
    pub id: ApiIdentifier,
    #[serde(default, deserialize_with = "tool_input_from_wire")]
    pub tool_input: String,
    #[serde(default)]
    pub strip: Option<String>,
}

fn tool_input_from_wire<'de, D: Deserializer<'de>>(de: D) -> Result<String, D::Error> {
    Ok(match Value::deserialize(de)? {
        Value::Null => String::new(),
        Value::String(s) => s,
        other => other.to_string(),
    })
}

impl CallRequest {
    pub fn new(id: ApiIdentifier, tool_input: impl Into<String>) -> Self {
        Self {
            id,
            tool_input: tool_input.into(),
            strip: None,
        }
    }

    pub fn with_strip(mut self, strip: impl Into<String>) -> Self {
        self.strip = Some(strip.into());
        self
    }

    /// Parsed argument object; empty input counts as `{}`.
    pub fn arguments(&self) -> Result<serde_json::Map<String, Value>, KeyDerivationError> {
        if self.tool_input.trim().is_empty() {
            return Ok(serde_json::Map::new());
        }
        match serde_json::from_str::<Value>(&self.tool_input) {
            Ok(Value::Object(map)) => Ok(map),
            Ok(other) => Err(KeyDerivationError {
                reason: format!("expected an object, found {}", json_kind(&other)),
            }),
            Err(e) => Err(KeyDerivationError {
                reason: e.to_string(),
            }),
        }
    }

    /// The argument object re-serialized canonically.
    pub fn canonical_arguments(&self) -> Result<String, KeyDerivationError> {
        let args = Value::Object(self.arguments()?);
        Ok(canonical_json(&args))
    }

    /// Same request with `tool_input` replaced by its canonical form.
    pub fn canonicalized(&self) -> Result<Self, KeyDerivationError> {
        Ok(Self {
            id: self.id.clone(),
            tool_input: self.canonical_arguments()?,
            strip: self.strip.clone(),
        })
    }
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Serializes `value` with object keys sorted recursively and no
/// insignificant whitespace. Array order is preserved.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            out.push('{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(v, out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

/// Deterministic cache key: identifier fields and canonical arguments joined
/// by [`KEY_SEPARATOR`].
pub fn canonical_key(request: &CallRequest) -> Result<String, KeyDerivationError> {
    let args = request.canonical_arguments()?;
    let id = &request.id;
    Ok(format!(
        "{}{sep}{}{sep}{}{sep}{}",
        id.category,
        id.tool_name,
        id.api_name,
        args,
        sep = KEY_SEPARATOR
    ))
}

/// The uniform wire envelope `{"error": ..., "response": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ApiResponse {
    pub error: String,
    pub response: String,
}

impl ApiResponse {
    pub fn new(error: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            error: error.into(),
            response: response.into(),
        }
    }

    pub fn ok(response: impl Into<String>) -> Self {
        Self::new("", response)
    }

    /// The envelope served for a dead API.
    pub fn unavailable() -> Self {
        Self::ok(UNAVAILABLE_RESPONSE)
    }

    pub fn to_wire(&self) -> String {
        serde_json::to_string(self).expect("envelope serialization is infallible")
    }
}

/// Parses a wire envelope. Both fields must be present and be strings;
/// extra fields are ignored.
pub fn parse_wire_response(raw: &str) -> Result<ApiResponse, WireFormatError> {
    let fail = |reason: &str| WireFormatError {
        reason: reason.to_string(),
        raw: raw.to_string(),
    };
    let value: Value = serde_json::from_str(raw).map_err(|e| fail(&e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(fail("not an object"));
    };
    let field = |name: &str| match map.get(name) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(fail(&format!("field `{name}` is not a string"))),
        None => Err(fail(&format!("missing field `{name}`"))),
    };
    Ok(ApiResponse {
        error: field("error")?,
        response: field("response")?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiParameter {
    pub name: String,
    #[serde(rename = "type", default)]
    pub type_label: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub required: bool,
}

/// Documentation for one API: what the simulator and call-writer see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiDocumentation {
    #[serde(flatten)]
    pub id: ApiIdentifier,
    pub description: String,
    pub parameters: Vec<ApiParameter>,
    pub tool_description: String,
}

impl ApiDocumentation {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.id.validate()?;
        let mut seen = HashSet::new();
        for p in &self.parameters {
            if !seen.insert(p.name.as_str()) {
                return Err(ModelError::DuplicateParameter {
                    api: self.id.to_string(),
                    name: p.name.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("documentation serialization is infallible")
    }
}

/// Answer-level verdict from a judge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Judgment {
    Solved,
    Unsolved,
    Unsure,
}

impl Judgment {
    /// Contribution to the solvable pass rate.
    pub fn score(self) -> f64 {
        match self {
            Judgment::Solved => 1.0,
            Judgment::Unsure => 0.5,
            Judgment::Unsolved => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolvabilityVerdict {
    Solvable,
    Unsolvable,
}

/// Outcome of a multi-judge solvability vote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solvability {
    pub verdict: SolvabilityVerdict,
    pub per_judge: Vec<(String, SolvabilityVerdict)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(c: &str, t: &str, a: &str) -> ApiIdentifier {
        ApiIdentifier::new(c, t, a).unwrap()
    }

    #[test]
    fn key_for_empty_object_input() {
        let req = CallRequest::new(id("Logistics", "SQUAKE", "Checkhealth"), "{}");
        assert_eq!(
            canonical_key(&req).unwrap(),
            "Logistics\u{1F}SQUAKE\u{1F}Checkhealth\u{1F}{}"
        );
    }

    #[test]
    fn empty_input_keys_like_empty_object() {
        let a = CallRequest::new(id("Logistics", "SQUAKE", "Checkhealth"), "");
        let b = CallRequest::new(id("Logistics", "SQUAKE", "Checkhealth"), "{}");
        assert_eq!(canonical_key(&a).unwrap(), canonical_key(&b).unwrap());
    }

    #[test]
    fn key_ignores_key_order_and_whitespace() {
        let a = CallRequest::new(id("c", "t", "a"), r#"{"b":1,"a":2}"#);
        let b = CallRequest::new(id("c", "t", "a"), r#"{ "a": 2, "b": 1 }"#);
        assert_eq!(canonical_key(&a).unwrap(), canonical_key(&b).unwrap());
    }

    #[test]
    fn nested_objects_sorted_arrays_kept() {
        let req = CallRequest::new(id("c", "t", "a"), r#"{"z":{"y":1,"x":[3,1,2]},"a":null}"#);
        assert_eq!(
            req.canonical_arguments().unwrap(),
            r#"{"a":null,"z":{"x":[3,1,2],"y":1}}"#
        );
    }

    #[test]
    fn malformed_input_rejected() {
        let req = CallRequest::new(id("c", "t", "a"), "not json");
        assert!(canonical_key(&req).is_err());
        let req = CallRequest::new(id("c", "t", "a"), "[1,2]");
        assert!(canonical_key(&req).is_err());
    }

    #[test]
    fn identifier_rejects_blank_fields() {
        assert!(ApiIdentifier::new(" ", "t", "a").is_err());
        assert!(ApiIdentifier::new("c", "", "a").is_err());
        assert!(ApiIdentifier::new("c", "t", "a\u{1F}b").is_err());
    }

    #[test]
    fn identifiers_are_case_sensitive() {
        assert_ne!(id("c", "T", "a"), id("c", "t", "a"));
    }

    #[test]
    fn parse_envelope() {
        assert_eq!(
            parse_wire_response(r#"{"error": "", "response": "ok"}"#).unwrap(),
            ApiResponse::ok("ok")
        );
        assert_eq!(
            parse_wire_response(r#"{"error":"","response":"x","extra":1}"#).unwrap(),
            ApiResponse::ok("x")
        );
        assert!(parse_wire_response(r#"{"response": "ok"}"#).is_err());
        assert!(parse_wire_response(r#"{"error": "", "response": {"a":1}}"#).is_err());
        assert!(parse_wire_response(r#"["error","response"]"#).is_err());
        let err = parse_wire_response("prose").unwrap_err();
        assert_eq!(err.raw, "prose");
    }

    #[test]
    fn request_wire_accepts_object_or_string_input() {
        let a: CallRequest = serde_json::from_str(
            r#"{"category":"Logistics","tool_name":"SQUAKE","api_name":"Checkhealth","tool_input":"{}","strip":"filter"}"#,
        )
        .unwrap();
        assert_eq!(a.tool_input, "{}");
        assert_eq!(a.strip.as_deref(), Some("filter"));
        let b: CallRequest = serde_json::from_str(
            r#"{"category":"c","tool_name":"t","api_name":"a","tool_input":{"q":1}}"#,
        )
        .unwrap();
        assert_eq!(b.tool_input, r#"{"q":1}"#);
        assert_eq!(b.strip, None);
    }

    #[test]
    fn documentation_rejects_duplicate_parameters() {
        let p = ApiParameter {
            name: "q".into(),
            type_label: "STRING".into(),
            description: String::new(),
            required: true,
        };
        let doc = ApiDocumentation {
            id: id("c", "t", "a"),
            description: "d".into(),
            parameters: vec![p.clone(), p],
            tool_description: String::new(),
        };
        assert!(matches!(
            doc.validate(),
            Err(ModelError::DuplicateParameter { .. })
        ));
    }

    #[test]
    fn judgment_scores_are_monotone() {
        assert!(Judgment::Solved.score() > Judgment::Unsure.score());
        assert!(Judgment::Unsure.score() > Judgment::Unsolved.score());
    }
}
