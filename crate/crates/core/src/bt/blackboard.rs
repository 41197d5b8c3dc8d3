use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::BtError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Text(_) => "text",
        }
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

/// Per-robot key/value store read by conditions and written by actions.
///
/// Keys are stable string identifiers. Ordered storage keeps snapshots and
/// serialized forms deterministic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Blackboard {
    entries: BTreeMap<String, Value>,
}

impl Blackboard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        let value = value.into();
        match self.entries.get_mut(key) {
            Some(slot) => *slot = value,
            None => {
                self.entries.insert(key.to_string(), value);
            }
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn remove(&mut self, key: &str) -> Option<Value> {
        self.entries.remove(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Result<&Value, BtError> {
        self.entries
            .get(key)
            .ok_or_else(|| BtError::MissingKey(key.to_string()))
    }

    fn mismatch(key: &str, expected: &'static str, found: &Value) -> BtError {
        BtError::TypeMismatch {
            key: key.to_string(),
            expected,
            found: found.type_name(),
        }
    }

    pub fn bool(&self, key: &str) -> Result<bool, BtError> {
        match self.get(key)? {
            Value::Bool(v) => Ok(*v),
            other => Err(Self::mismatch(key, "bool", other)),
        }
    }

    pub fn int(&self, key: &str) -> Result<i64, BtError> {
        match self.get(key)? {
            Value::Int(v) => Ok(*v),
            other => Err(Self::mismatch(key, "int", other)),
        }
    }

    /// Reads a number; integers are widened.
    pub fn float(&self, key: &str) -> Result<f64, BtError> {
        match self.get(key)? {
            Value::Float(v) => Ok(*v),
            Value::Int(v) => Ok(*v as f64),
            other => Err(Self::mismatch(key, "float", other)),
        }
    }

    pub fn text(&self, key: &str) -> Result<&str, BtError> {
        match self.get(key)? {
            Value::Text(v) => Ok(v),
            other => Err(Self::mismatch(key, "text", other)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn typed_reads() {
        let mut bb = Blackboard::new();
        bb.set("carrying", "green");
        bb.set("rays", 3i64);
        bb.set("x", 1.5);
        bb.set("waiting", false);
        assert_eq!(bb.text("carrying").unwrap(), "green");
        assert_eq!(bb.int("rays").unwrap(), 3);
        assert_eq!(bb.float("rays").unwrap(), 3.0);
        assert_eq!(bb.float("x").unwrap(), 1.5);
        assert!(!bb.bool("waiting").unwrap());
    }

    #[test]
    fn missing_and_mismatched_keys() {
        let mut bb = Blackboard::new();
        bb.set("zone", "none");
        assert_eq!(bb.bool("nope"), Err(BtError::MissingKey("nope".into())));
        assert!(matches!(
            bb.bool("zone"),
            Err(BtError::TypeMismatch { expected: "bool", found: "text", .. })
        ));
    }

    #[test]
    fn overwrite_keeps_one_entry() {
        let mut bb = Blackboard::new();
        bb.set("k", 1i64);
        bb.set("k", 2i64);
        assert_eq!(bb.len(), 1);
        assert_eq!(bb.int("k").unwrap(), 2);
    }
}
