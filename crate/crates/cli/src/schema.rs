//! Structural validation of emitted JSON against the published schemas in
//! `schemas/`. Supports the subset of JSON Schema those files use: `type`
//! (single or list), `required`, `properties`, `items`, `enum`, numeric
//! bounds, and array length bounds. Every metric file is validated before it
//! is written.

use serde_json::Value;

pub const METRICS_SCHEMA: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../schemas/metrics.schema.json"
));
pub const EXAMPLE_SCHEMA: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../schemas/example.schema.json"
));
pub const ACCURACY_SCHEMA: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../schemas/accuracy.schema.json"
));

/// Validate a document; returns every violation found (empty = valid).
pub fn validate(schema_text: &str, document: &Value) -> Vec<String> {
    let schema: Value = serde_json::from_str(schema_text).expect("shipped schema parses");
    let mut violations = Vec::new();
    check(&schema, document, "$", &mut violations);
    violations
}

pub fn validate_or_err(schema_text: &str, document: &Value, what: &str) -> anyhow::Result<()> {
    let violations = validate(schema_text, document);
    if violations.is_empty() {
        Ok(())
    } else {
        anyhow::bail!("{what} violates its schema: {}", violations.join("; "))
    }
}

fn type_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) => {
            if n.is_u64() || n.is_i64() {
                "integer"
            } else {
                "number"
            }
        }
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn type_matches(expected: &str, value: &Value) -> bool {
    match expected {
        // Every integer is also a number.
        "number" => matches!(value, Value::Number(_)),
        other => type_name(value) == other,
    }
}

fn check(schema: &Value, value: &Value, path: &str, out: &mut Vec<String>) {
    if let Some(expected) = schema.get("type") {
        let allowed: Vec<String> = match expected {
            Value::String(s) => vec![s.clone()],
            Value::Array(list) => list
                .iter()
                .filter_map(|v| v.as_str().map(String::from))
                .collect(),
            _ => Vec::new(),
        };
        if !allowed.is_empty() && !allowed.iter().any(|t| type_matches(t, value)) {
            out.push(format!(
                "{path}: expected type {}, got {}",
                allowed.join("|"),
                type_name(value)
            ));
            return;
        }
    }

    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(value) {
            out.push(format!("{path}: value {value} not in enum"));
        }
    }

    if let Some(n) = value.as_f64() {
        if let Some(min) = schema.get("minimum").and_then(Value::as_f64) {
            if n < min {
                out.push(format!("{path}: {n} below minimum {min}"));
            }
        }
        if let Some(max) = schema.get("maximum").and_then(Value::as_f64) {
            if n > max {
                out.push(format!("{path}: {n} above maximum {max}"));
            }
        }
    }

    if let Value::Object(map) = value {
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for key in required.iter().filter_map(Value::as_str) {
                if !map.contains_key(key) {
                    out.push(format!("{path}: missing required field {key:?}"));
                }
            }
        }
        if let Some(props) = schema.get("properties").and_then(Value::as_object) {
            for (key, subschema) in props {
                if let Some(subvalue) = map.get(key) {
                    check(subschema, subvalue, &format!("{path}.{key}"), out);
                }
            }
        }
    }

    if let Value::Array(items) = value {
        if let Some(min) = schema.get("minItems").and_then(Value::as_u64) {
            if (items.len() as u64) < min {
                out.push(format!("{path}: {} items, minItems {min}", items.len()));
            }
        }
        if let Some(max) = schema.get("maxItems").and_then(Value::as_u64) {
            if (items.len() as u64) > max {
                out.push(format!("{path}: {} items, maxItems {max}", items.len()));
            }
        }
        if let Some(item_schema) = schema.get("items") {
            for (i, item) in items.iter().enumerate() {
                check(item_schema, item, &format!("{path}[{i}]"), out);
            }
        }
    }
}
