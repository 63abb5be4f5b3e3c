//! The generator-backend boundary: every request is validated against the
//! ground data and recorded before it may reach a backend.
//!
//! The guard scans request payloads for printed constants of the extensional
//! database. Matches are token-delimited: the constant `1` is found in
//! `at time 1,` but not inside `r1`, `t1`, or `124`, and `37.2` is not found
//! inside `137.25`.

use crate::error::BackendError;
use crate::model::{FactStore, Value};

use super::ExpandRequest;

/// Printed constants of the protected database.
#[derive(Clone, Debug, Default)]
pub struct GroundGuard {
    strings: Vec<String>,
    numbers: Vec<String>,
}

impl GroundGuard {
    pub fn from_store(store: &FactStore) -> GroundGuard {
        Self::from_values(store.ground_values())
    }

    pub fn from_values<'a>(values: impl IntoIterator<Item = &'a Value>) -> GroundGuard {
        let mut guard = GroundGuard::default();
        for value in values {
            match value {
                Value::Str(s) => {
                    if !s.is_empty() {
                        guard.strings.push(s.clone());
                    }
                }
                other => guard.numbers.push(other.display_text()),
            }
        }
        guard.strings.sort();
        guard.strings.dedup();
        guard.numbers.sort();
        guard.numbers.dedup();
        guard
    }

    /// Returns the first protected constant that occurs (token-delimited) in
    /// `text`.
    pub fn leaked<'g>(&'g self, text: &str) -> Option<&'g str> {
        let hit = self
            .strings
            .iter()
            .find(|s| occurs_delimited(text, s, false))
            .or_else(|| self.numbers.iter().find(|n| occurs_delimited(text, n, true)));
        hit.map(String::as_str)
    }
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Token-delimited occurrence check. With `numeric`, an adjacent decimal
/// point that continues a number also blocks the match, so `1` is not found
/// in `1.5` and `5` is not found in `1.5`.
pub fn occurs_delimited(haystack: &str, needle: &str, numeric: bool) -> bool {
    if needle.is_empty() {
        return false;
    }
    for (idx, _) in haystack.match_indices(needle) {
        let before: Option<char> = haystack[..idx].chars().next_back();
        let after: Option<char> = haystack[idx + needle.len()..].chars().next();
        if before.is_some_and(is_word) || after.is_some_and(is_word) {
            continue;
        }
        if numeric {
            if after == Some('.') {
                let mut rest = haystack[idx + needle.len()..].chars();
                rest.next();
                if rest.next().is_some_and(|c| c.is_ascii_digit()) {
                    continue;
                }
            }
            if before == Some('.') {
                let mut front = haystack[..idx].chars().rev();
                front.next();
                if front.next().is_some_and(|c| c.is_ascii_digit()) {
                    continue;
                }
            }
        }
        return true;
    }
    false
}

/// Wraps backend access: validates and transcribes every request.
#[derive(Debug, Default)]
pub struct BackendBoundary {
    guard: GroundGuard,
    transcript: Vec<String>,
}

impl BackendBoundary {
    pub fn new(guard: GroundGuard) -> BackendBoundary {
        BackendBoundary { guard, transcript: Vec::new() }
    }

    /// Serializes, validates, and records one request. Rejects the request
    /// if any protected constant would be disclosed.
    pub fn admit(&mut self, request: &ExpandRequest) -> Result<(), BackendError> {
        let payload = serde_json::to_string(request)
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        if let Some(value) = self.guard.leaked(&payload) {
            return Err(BackendError::GroundLeak {
                node: request.node.clone(),
                value: value.to_string(),
            });
        }
        self.transcript.push(payload);
        Ok(())
    }

    /// All admitted request payloads, in order.
    pub fn transcript(&self) -> &[String] {
        &self.transcript
    }

    /// Number of admitted requests: the generator call count.
    pub fn calls(&self) -> usize {
        self.transcript.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_facts;

    #[test]
    fn delimited_matching_skips_identifiers_and_decimals() {
        assert!(occurs_delimited("at time 1, the", "1", true));
        assert!(!occurs_delimited("node r1 fires", "1", true));
        assert!(!occurs_delimited("token \u{27e6}r1.t1\u{27e7} here", "1", true));
        assert!(!occurs_delimited("price 1.5 each", "1", true));
        assert!(!occurs_delimited("price 1.5 each", "5", true));
        assert!(occurs_delimited("profit of 6.9.", "6.9", true));
        assert!(!occurs_delimited("value 137.25 here", "37.2", true));
        assert!(occurs_delimited("trader EGTech opens", "EGTech", false));
        assert!(!occurs_delimited("trader EGTechX opens", "EGTech", false));
    }

    #[test]
    fn guard_catches_leaks_in_payloads() {
        let store = parse_facts("Open(\"EGTech\",0.3,1).\nMarketClosed(5).").unwrap();
        let guard = GroundGuard::from_store(&store);
        assert_eq!(guard.leaked("the trader EGTech sends"), Some("EGTech"));
        assert_eq!(guard.leaked("a position of size 0.3,"), Some("0.3"));
        assert!(guard.leaked("the trader \u{27e6}r1.x\u{27e7} at time \u{27e6}r1.t1\u{27e7}").is_none());
        assert!(guard.leaked("{\"node\":\"r1\",\"tokens\":[\"\u{27e6}r1.t1\u{27e7}\"]}").is_none());
    }
}
