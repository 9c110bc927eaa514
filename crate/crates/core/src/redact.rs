//! The deny index of raw values that must never leave the process, and the
//! substring matcher that enforces it.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use aho_corasick::AhoCorasick;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::chat::ChatMessage;

/// Case ids, raw resource names and raw attribute values of one log.
///
/// Activity labels and resource pseudonyms are aggregate vocabulary that
/// legitimately appears in KPI text, so values equal to one of them are left
/// out, as are blank values.
#[derive(Clone)]
pub struct DenyIndex {
    entries: Vec<String>,
    matcher: Option<AhoCorasick>,
}

impl Default for DenyIndex {
    fn default() -> Self {
        Self::from_entries(Vec::new())
    }
}

impl DenyIndex {
    pub fn new<'a>(
        sensitive: impl IntoIterator<Item = &'a str>,
        allowed: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        let allowed: BTreeSet<&str> = allowed.into_iter().collect();
        let entries: BTreeSet<&str> = sensitive
            .into_iter()
            .map(str::trim)
            .filter(|s| !s.is_empty() && !allowed.contains(s))
            .collect();
        Self::from_entries(entries.into_iter().map(String::from).collect())
    }

    fn from_entries(entries: Vec<String>) -> Self {
        let matcher = (!entries.is_empty())
            .then(|| AhoCorasick::new(&entries).expect("deny patterns are plain strings"));
        DenyIndex { entries, matcher }
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every entry occurring in `text` as an exact, case-sensitive substring.
    pub fn matches_in(&self, text: &str) -> BTreeSet<&str> {
        let Some(matcher) = &self.matcher else {
            return BTreeSet::new();
        };
        matcher
            .find_overlapping_iter(text)
            .map(|m| self.entries[m.pattern().as_usize()].as_str())
            .collect()
    }

    /// Passes iff no message contains any entry.
    pub fn check_messages(&self, messages: &[ChatMessage]) -> Result<(), RedactionReport> {
        let mut report = RedactionReport::default();
        for (i, message) in messages.iter().enumerate() {
            let found = self.matches_in(&message.content);
            if !found.is_empty() {
                report.message_indices.push(i);
                report.matches.extend(found.into_iter().map(String::from));
            }
        }
        if report.matches.is_empty() {
            Ok(())
        } else {
            Err(report)
        }
    }
}

impl fmt::Debug for DenyIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DenyIndex").field("entries", &self.entries.len()).finish()
    }
}

impl PartialEq for DenyIndex {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Serialize for DenyIndex {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.entries.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DenyIndex {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let entries: BTreeSet<String> = BTreeSet::deserialize(deserializer)?;
        Ok(Self::from_entries(entries.into_iter().collect()))
    }
}

/// A failed guard check. `Display` masks the matched values.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedactionReport {
    pub message_indices: Vec<usize>,
    pub matches: BTreeSet<String>,
}

impl RedactionReport {
    pub fn match_count(&self) -> usize {
        self.matches.len()
    }

    pub fn masked(&self) -> Vec<String> {
        self.matches.iter().map(|m| mask(m)).collect()
    }
}

/// Keeps the first character and replaces the rest with `*`.
pub fn mask(value: &str) -> String {
    let mut chars = value.chars();
    let mut out = String::new();
    if let Some(c) = chars.next() {
        out.push(c);
    }
    out.extend(chars.map(|_| '*'));
    out
}

impl fmt::Display for RedactionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} raw value(s) from the event log found in outgoing message(s) ", self.match_count())?;
        write!(f, "{:?}: {}", self.message_indices, self.masked().join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn l1_index() -> DenyIndex {
        DenyIndex::new(["c1", "c2", "c3", "alice", "bob", "carol", " "], ["A", "B", "C", "r1", "r2", "r3"])
    }

    #[test]
    fn case_id_in_follow_up_is_caught() {
        let err = l1_index()
            .check_messages(&[ChatMessage::user("why is c2 so slow?")])
            .unwrap_err();
        assert_eq!(err.match_count(), 1);
        assert!(err.matches.contains("c2"));
        assert_eq!(err.message_indices, vec![0]);
        assert!(!err.to_string().contains("c2"));
    }

    #[test]
    fn aggregate_vocabulary_passes() {
        let idx = l1_index();
        assert!(idx.check_messages(&[ChatMessage::user("Why does A precede C? r1 handles most of B.")]).is_ok());
        assert_eq!(idx.len(), 6);
    }

    #[test]
    fn allowed_values_are_not_indexed() {
        let idx = DenyIndex::new(["A", "r1", "secret"], ["A", "r1"]);
        assert_eq!(idx.entries(), ["secret"]);
    }

    #[test]
    fn overlapping_matches_are_all_reported() {
        let idx = DenyIndex::new(["bob", "bobby"], []);
        let found = idx.matches_in("ask bobby");
        assert_eq!(found.len(), 2);
        assert!(DenyIndex::new([], []).matches_in("anything").is_empty());
    }

    #[test]
    fn serde_round_trip() {
        let idx = l1_index();
        let json = serde_json::to_string(&idx).unwrap();
        let back: DenyIndex = serde_json::from_str(&json).unwrap();
        assert_eq!(back, idx);
        assert!(!back.matches_in("c3").is_empty());
    }

    #[test]
    fn masking() {
        assert_eq!(mask("alice"), "a****");
        assert_eq!(mask(""), "");
    }
}
