//! Canonical byte encoding.
//!
//! Every signed or hashed structure in the crate goes through this module and
//! nothing else. The encoding is a strict subset of JSON:
//!
//! - UTF-8, no insignificant whitespace;
//! - map keys sorted by their UTF-8 byte value;
//! - integers in base 10 without leading zeros (no fractions, no exponents);
//! - byte arrays rendered as lowercase hex strings (see [`hex_array`]).
//!
//! Decoding is strict: input that parses but does not re-encode to the exact
//! same bytes is rejected, so every accepted byte string has exactly one
//! structural meaning.

use serde::{de::DeserializeOwned, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("unencodable value: {0}")]
    UnencodableValue(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("input is not in canonical form")]
    NonCanonical,
}

/// Encodes any serializable structure canonically.
pub fn canonical_encode<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, EncodingError> {
    let tree =
        serde_json::to_value(value).map_err(|e| EncodingError::UnencodableValue(e.to_string()))?;
    encode_value(&tree)
}

/// Encodes an already-built value tree.
pub fn encode_value(value: &Value) -> Result<Vec<u8>, EncodingError> {
    let mut out = Vec::with_capacity(128);
    write_value(value, &mut out)?;
    Ok(out)
}

/// Decodes canonical bytes into `T`, rejecting any non-canonical rendering.
pub fn canonical_decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, EncodingError> {
    let tree = decode_value(bytes)?;
    serde_json::from_value(tree).map_err(|e| EncodingError::Malformed(e.to_string()))
}

/// Parses canonical bytes into a value tree.
pub fn decode_value(bytes: &[u8]) -> Result<Value, EncodingError> {
    let tree: Value =
        serde_json::from_slice(bytes).map_err(|e| EncodingError::Malformed(e.to_string()))?;
    if encode_value(&tree)? != bytes {
        return Err(EncodingError::NonCanonical);
    }
    Ok(tree)
}

fn write_value(value: &Value, out: &mut Vec<u8>) -> Result<(), EncodingError> {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                out.extend_from_slice(u.to_string().as_bytes());
            } else if let Some(i) = n.as_i64() {
                out.extend_from_slice(i.to_string().as_bytes());
            } else {
                return Err(EncodingError::UnencodableValue(format!(
                    "non-integer number {n}"
                )));
            }
        }
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out)?;
            }
            out.push(b']');
        }
        Value::Object(map) => {
            // Sorted explicitly so the rule does not depend on serde_json's map feature flags.
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (key, item)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(key, out);
                out.push(b':');
                write_value(item, out)?;
            }
            out.push(b'}');
        }
    }
    Ok(())
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    // serde_json escapes only what JSON requires and leaves other UTF-8 as-is.
    let quoted = serde_json::to_string(s).expect("string serialization is infallible");
    out.extend_from_slice(quoted.as_bytes());
}

/// Serde helpers for fixed-size byte arrays rendered as lowercase hex.
pub mod hex_array {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(
        bytes: &[u8; N],
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(
        deserializer: D,
    ) -> Result<[u8; N], D::Error> {
        let s = String::deserialize(deserializer)?;
        parse::<N>(&s).map_err(D::Error::custom)
    }

    /// Strict parse: exactly `2 * N` lowercase hex characters.
    pub fn parse<const N: usize>(s: &str) -> Result<[u8; N], String> {
        if s.len() != 2 * N {
            return Err(format!("expected {} hex chars, got {}", 2 * N, s.len()));
        }
        if s.bytes().any(|c| c.is_ascii_uppercase()) {
            return Err("hex must be lowercase".into());
        }
        let mut out = [0u8; N];
        hex::decode_to_slice(s, &mut out).map_err(|e| e.to_string())?;
        Ok(out)
    }
}
