//! Canonical JSON: object keys sorted at every level, two-space indent,
//! trailing newline. Independent of serde_json's map ordering features.

use serde::ser::{Serialize, SerializeMap, SerializeSeq, Serializer};
use serde_json::Value;

struct Sorted<'a>(&'a Value);

impl Serialize for Sorted<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Value::Object(map) => {
                let mut entries: Vec<_> = map.iter().collect();
                entries.sort_by(|a, b| a.0.cmp(b.0));
                let mut m = serializer.serialize_map(Some(entries.len()))?;
                for (k, v) in entries {
                    m.serialize_entry(k, &Sorted(v))?;
                }
                m.end()
            }
            Value::Array(items) => {
                let mut s = serializer.serialize_seq(Some(items.len()))?;
                for v in items {
                    s.serialize_element(&Sorted(v))?;
                }
                s.end()
            }
            other => other.serialize(serializer),
        }
    }
}

pub fn value_to_canonical_string(value: &Value) -> String {
    let mut out = serde_json::to_string_pretty(&Sorted(value)).expect("JSON values always serialize");
    out.push('\n');
    out
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("domain types serialize to JSON");
    value_to_canonical_string(&value)
}
