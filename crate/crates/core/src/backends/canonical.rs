use serde_json::Value;
use sha2::{Digest, Sha256};

use super::Endpoint;

/// Compact JSON with object keys sorted by byte order at every depth.
///
/// String contents are left untouched; only insignificant whitespace and key
/// order are normalized.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Null | Value::Bool(_) | Value::Number(_) | Value::String(_) => {
            out.push_str(&value.to_string());
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(key.clone()).to_string());
                out.push(':');
                write_canonical(&map[key], out);
            }
            out.push('}');
        }
    }
}

/// Hex SHA-256 of `"<endpoint>\n<canonical request>"`.
pub fn request_hash(endpoint: Endpoint, request: &Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(endpoint.as_str().as_bytes());
    hasher.update(b"\n");
    hasher.update(canonical_json(request).as_bytes());
    hex::encode(hasher.finalize())
}

/// Hex SHA-256 of a prompt text; keys scripted chat fixtures.
pub fn prompt_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}
