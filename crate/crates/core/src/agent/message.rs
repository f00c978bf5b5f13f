use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    /// Decoded arguments; anything other than an object fails validation.
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    #[serde(default)]
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl Message {
    fn plain(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, content)
    }

    pub fn assistant_calls(content: impl Into<String>, calls: Vec<ToolCall>) -> Self {
        Self {
            tool_calls: calls,
            ..Self::plain(Role::Assistant, content)
        }
    }

    pub fn tool(result: &ToolResult) -> Self {
        Self {
            tool_call_id: Some(result.id.clone()),
            ..Self::plain(Role::Tool, result.to_content())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub id: String,
    pub ok: bool,
    /// Structured output when `ok`, otherwise `{"error": text}`.
    pub payload: Value,
}

impl ToolResult {
    pub fn success(id: &str, payload: Value) -> Self {
        Self {
            id: id.to_string(),
            ok: true,
            payload,
        }
    }

    pub fn failure(id: &str, error: impl Into<String>) -> Self {
        Self {
            id: id.to_string(),
            ok: false,
            payload: json!({ "error": error.into() }),
        }
    }

    pub fn error_text(&self) -> Option<&str> {
        if self.ok {
            None
        } else {
            self.payload.get("error").and_then(Value::as_str)
        }
    }

    /// Text sent back to the model as the tool message body.
    pub fn to_content(&self) -> String {
        let mut doc = Map::new();
        doc.insert("ok".into(), Value::Bool(self.ok));
        match &self.payload {
            Value::Object(m) => doc.extend(m.clone()),
            other => {
                doc.insert("result".into(), other.clone());
            }
        }
        Value::Object(doc).to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    String,
    Number,
    /// Non-negative whole number.
    Integer,
    /// Object of name → number.
    NumberMap,
    /// Object of name → [lower, upper].
    BoundsMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    pub required: bool,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub fields: Vec<FieldSpec>,
}

impl ToolSpec {
    pub fn new(name: &str, description: &str) -> Self {
        Self {
            name: name.to_string(),
            description: description.to_string(),
            fields: Vec::new(),
        }
    }

    pub fn field(mut self, name: &str, kind: FieldKind, required: bool, description: &str) -> Self {
        self.fields.push(FieldSpec {
            name: name.to_string(),
            kind,
            required,
            description: description.to_string(),
        });
        self
    }

    /// JSON Schema for the chat-completions `parameters` slot.
    pub fn json_schema(&self) -> Value {
        let mut props = Map::new();
        for f in &self.fields {
            let schema = match f.kind {
                FieldKind::String => json!({ "type": "string" }),
                FieldKind::Number => json!({ "type": "number" }),
                FieldKind::Integer => json!({ "type": "integer", "minimum": 0 }),
                FieldKind::NumberMap => json!({
                    "type": "object",
                    "additionalProperties": { "type": "number" }
                }),
                FieldKind::BoundsMap => json!({
                    "type": "object",
                    "additionalProperties": {
                        "type": "array",
                        "items": { "type": "number" },
                        "minItems": 2,
                        "maxItems": 2
                    }
                }),
            };
            let mut schema = schema;
            schema["description"] = Value::String(f.description.clone());
            props.insert(f.name.clone(), schema);
        }
        let required: Vec<&str> = self
            .fields
            .iter()
            .filter(|f| f.required)
            .map(|f| f.name.as_str())
            .collect();
        json!({
            "type": "object",
            "properties": props,
            "required": required,
            "additionalProperties": false,
        })
    }

    /// Checks `args` against the field list; unknown fields are rejected.
    pub fn validate(&self, args: &Value) -> Result<(), String> {
        let Value::Object(map) = args else {
            return Err("arguments must be a JSON object".into());
        };
        for key in map.keys() {
            if !self.fields.iter().any(|f| &f.name == key) {
                return Err(format!("unexpected argument '{key}'"));
            }
        }
        for f in &self.fields {
            match map.get(&f.name) {
                None | Some(Value::Null) if f.required => {
                    return Err(format!("missing required argument '{}'", f.name));
                }
                None | Some(Value::Null) => {}
                Some(v) => check_kind(&f.name, f.kind, v)?,
            }
        }
        Ok(())
    }
}

fn finite_number(v: &Value) -> Option<f64> {
    v.as_f64().filter(|x| x.is_finite())
}

fn check_kind(name: &str, kind: FieldKind, v: &Value) -> Result<(), String> {
    let bad = |what: &str| Err(format!("argument '{name}' must be {what}"));
    match kind {
        FieldKind::String if v.is_string() => Ok(()),
        FieldKind::String => bad("a string"),
        FieldKind::Number if finite_number(v).is_some() => Ok(()),
        FieldKind::Number => bad("a finite number"),
        FieldKind::Integer if v.as_u64().is_some() => Ok(()),
        FieldKind::Integer => bad("a non-negative integer"),
        FieldKind::NumberMap => match v.as_object() {
            Some(m) if m.values().all(|x| finite_number(x).is_some()) => Ok(()),
            _ => bad("an object of numbers"),
        },
        FieldKind::BoundsMap => match v.as_object() {
            Some(m)
                if m.values().all(|x| {
                    x.as_array().is_some_and(|a| {
                        a.len() == 2 && a.iter().all(|e| e.as_f64().is_some_and(|f| !f.is_nan()))
                    })
                }) =>
            {
                Ok(())
            }
            _ => bad("an object of [lower, upper] pairs"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ToolSpec {
        ToolSpec::new("t", "test")
            .field("formula", FieldKind::String, true, "")
            .field("density", FieldKind::Number, true, "")
            .field("k", FieldKind::Integer, false, "")
            .field("params", FieldKind::NumberMap, false, "")
            .field("bounds", FieldKind::BoundsMap, false, "")
    }

    #[test]
    fn accepts_valid_arguments() {
        let args = json!({
            "formula": "D2O", "density": 1.1, "k": 3,
            "params": {"radius": 50}, "bounds": {"radius": [10, 200]}
        });
        assert_eq!(spec().validate(&args), Ok(()));
        assert_eq!(
            spec().validate(&json!({"formula": "H2O", "density": 1, "k": null})),
            Ok(())
        );
    }

    #[test]
    fn rejects_invalid_arguments() {
        let s = spec();
        let cases = [
            (json!([1, 2]), "JSON object"),
            (json!({"density": 1}), "missing required argument 'formula'"),
            (
                json!({"formula": 1, "density": 1}),
                "'formula' must be a string",
            ),
            (
                json!({"formula": "x", "density": "1"}),
                "'density' must be a finite number",
            ),
            (
                json!({"formula": "x", "density": 1, "k": -1}),
                "'k' must be a non-negative integer",
            ),
            (
                json!({"formula": "x", "density": 1, "k": 1.5}),
                "non-negative integer",
            ),
            (
                json!({"formula": "x", "density": 1, "params": {"r": "a"}}),
                "object of numbers",
            ),
            (
                json!({"formula": "x", "density": 1, "bounds": {"r": [1]}}),
                "[lower, upper]",
            ),
            (
                json!({"formula": "x", "density": 1, "extra": 0}),
                "unexpected argument 'extra'",
            ),
        ];
        for (args, expect) in cases {
            let err = s.validate(&args).unwrap_err();
            assert!(err.contains(expect), "{args}: {err}");
        }
    }

    #[test]
    fn schema_lists_required_fields() {
        let schema = spec().json_schema();
        assert_eq!(schema["required"], json!(["formula", "density"]));
        assert_eq!(schema["properties"]["k"]["type"], "integer");
        assert_eq!(
            schema["properties"]["bounds"]["additionalProperties"]["maxItems"],
            2
        );
    }

    #[test]
    fn tool_message_content() {
        let ok = ToolResult::success("c1", json!({"sld_real": 6.36}));
        assert_eq!(ok.to_content(), r#"{"ok":true,"sld_real":6.36}"#);
        let err = ToolResult::failure("c2", "unknown element 'Xx'");
        assert_eq!(err.error_text(), Some("unknown element 'Xx'"));
        let m = Message::tool(&err);
        assert_eq!(m.tool_call_id.as_deref(), Some("c2"));
        assert!(m.content.contains(r#""ok":false"#));
    }
}
