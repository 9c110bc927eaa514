//! Serde adapter for maps keyed by `(from, to)` pairs, written as a list of
//! `{"from", "to", "value"}` objects since JSON object keys must be strings.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize)]
struct EntryRef<'a, V> {
    from: &'a str,
    to: &'a str,
    value: &'a V,
}

#[derive(Deserialize)]
struct Entry<V> {
    from: String,
    to: String,
    value: V,
}

pub(crate) fn serialize<S, V>(map: &BTreeMap<(String, String), V>, serializer: S) -> Result<S::Ok, S::Error>
where
    S: Serializer,
    V: Serialize,
{
    serializer.collect_seq(map.iter().map(|((from, to), value)| EntryRef { from, to, value }))
}

pub(crate) fn deserialize<'de, D, V>(deserializer: D) -> Result<BTreeMap<(String, String), V>, D::Error>
where
    D: Deserializer<'de>,
    V: Deserialize<'de>,
{
    let entries: Vec<Entry<V>> = Vec::deserialize(deserializer)?;
    Ok(entries.into_iter().map(|e| ((e.from, e.to), e.value)).collect())
}
