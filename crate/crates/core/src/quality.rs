//! Quality scoring, filtering, paraphrasing, and postprocessing of the
//! mapped corpus.
//!
//! Subscores are heuristics for the named criteria: plausibility checks that
//! every constant in a response is grounded in the verbalized chase,
//! specificity that no prompt has two different responses, bias that no
//! denylist phrase occurs, and a residual-token check sinks any pair that
//! still carries `⟦...⟧` placeholders. The aggregate is the minimum of the
//! subscores; a pair whose aggregate is at or below the threshold is removed.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::boundary::occurs_delimited;
use crate::corpus::CorpusPair;

/// Outcome of scoring one pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "kept")]
    Kept,
    #[serde(rename = "filtered")]
    Filtered,
    #[serde(rename = "paraphrase-added")]
    ParaphraseAdded,
}

/// Per-pair subscores and the min-aggregate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub subscores: BTreeMap<String, f64>,
    pub aggregate: f64,
    pub verdict: Verdict,
}

/// Reference context for scoring: the verbalized chase sentences plus the
/// string constants worth scanning for. Token sets are precomputed so a pair
/// scores in time linear in its own length.
#[derive(Clone, Debug, Default)]
pub struct ScoreContext {
    reference_sentences: Vec<String>,
    denylist: Vec<String>,
    /// Standalone numbers occurring in any reference sentence.
    grounded_numbers: HashSet<String>,
    /// Words occurring in any reference sentence.
    reference_words: HashSet<String>,
    /// Known single-word string constants.
    word_strings: HashSet<String>,
    /// Known string constants that are not single words (substring-scanned).
    phrase_strings: Vec<String>,
}

fn words_of(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
}

impl ScoreContext {
    pub fn new(
        reference_sentences: Vec<String>,
        known_strings: Vec<String>,
        denylist: Vec<String>,
    ) -> ScoreContext {
        let mut grounded_numbers = HashSet::new();
        let mut reference_words = HashSet::new();
        for sentence in &reference_sentences {
            for number in extract_numbers(sentence) {
                grounded_numbers.insert(number.to_string());
            }
            for word in words_of(sentence) {
                reference_words.insert(word.to_string());
            }
        }
        let mut word_strings = HashSet::new();
        let mut phrase_strings = Vec::new();
        for s in known_strings {
            if !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_') {
                word_strings.insert(s);
            } else if !s.is_empty() {
                phrase_strings.push(s);
            }
        }
        ScoreContext {
            reference_sentences,
            denylist,
            grounded_numbers,
            reference_words,
            word_strings,
            phrase_strings,
        }
    }

    /// Whether every grounded constant found in `text` occurs in some
    /// reference sentence.
    fn plausible(&self, text: &str) -> bool {
        for number in extract_numbers(text) {
            if !self.grounded_numbers.contains(number) {
                return false;
            }
        }
        for word in words_of(text) {
            if self.word_strings.contains(word) && !self.reference_words.contains(word) {
                return false;
            }
        }
        for phrase in &self.phrase_strings {
            if occurs_delimited(text, phrase, false)
                && !self
                    .reference_sentences
                    .iter()
                    .any(|s| occurs_delimited(s, phrase, false))
            {
                return false;
            }
        }
        true
    }
}

/// Prompt index for the specificity pass: prompt text to the set of distinct
/// responses it maps to.
#[derive(Clone, Debug, Default)]
pub struct PromptIndex {
    responses: BTreeMap<String, BTreeSet<String>>,
}

impl PromptIndex {
    pub fn build(pairs: &[CorpusPair]) -> PromptIndex {
        let mut responses: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for pair in pairs {
            responses
                .entry(pair.prompt.clone())
                .or_default()
                .insert(pair.response.clone());
        }
        PromptIndex { responses }
    }

    fn is_specific(&self, prompt: &str) -> bool {
        self.responses.get(prompt).map(BTreeSet::len).unwrap_or(0) <= 1
    }
}

/// Maximal standalone number tokens of a text (`37.2` in `of 37.2,` but not
/// in `137.25`).
fn extract_numbers(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
        let before = text[..start].chars().next_back();
        let after = if i < bytes.len() { text[i..].chars().next() } else { None };
        let word_before = before.is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '.');
        let word_after = after.is_some_and(|c| c.is_alphanumeric() || c == '_');
        if !word_before && !word_after {
            out.push(&text[start..i]);
        }
    }
    out
}

/// Scores one pair against the reference context and prompt index.
pub fn check_quality(
    pair: &CorpusPair,
    index: &PromptIndex,
    context: &ScoreContext,
    threshold: f64,
) -> QualityReport {
    let mut subscores = BTreeMap::new();

    // Residual tokens sink the pair outright.
    let token_free = !pair.prompt.contains('\u{27e6}')
        && !pair.prompt.contains('\u{27e7}')
        && !pair.response.contains('\u{27e6}')
        && !pair.response.contains('\u{27e7}');
    subscores.insert("tokens".to_string(), if token_free { 1.0 } else { 0.0 });

    // Plausibility: every grounded constant in the response occurs in some
    // reference sentence.
    subscores.insert(
        "plausibility".to_string(),
        if context.plausible(&pair.response) { 1.0 } else { 0.0 },
    );

    // Specificity: the prompt has a single response corpus-wide.
    subscores.insert(
        "specificity".to_string(),
        if index.is_specific(&pair.prompt) { 1.0 } else { 0.0 },
    );

    // Bias: no denylist phrase, case-insensitive.
    let lower_prompt = pair.prompt.to_lowercase();
    let lower_response = pair.response.to_lowercase();
    let biased = context.denylist.iter().any(|phrase| {
        let phrase = phrase.to_lowercase();
        !phrase.is_empty()
            && (lower_prompt.contains(&phrase) || lower_response.contains(&phrase))
    });
    subscores.insert("bias".to_string(), if biased { 0.0 } else { 1.0 });

    let aggregate = subscores
        .values()
        .fold(1.0_f64, |acc, v| acc.min(*v));
    let verdict = if aggregate <= threshold { Verdict::Filtered } else { Verdict::Kept };
    QualityReport { subscores, aggregate, verdict }
}

/// Scores the whole corpus (two-phase: prompt index, then per-pair checks).
pub fn score_corpus(
    pairs: &[CorpusPair],
    context: &ScoreContext,
    threshold: f64,
) -> Vec<QualityReport> {
    let index = PromptIndex::build(pairs);
    pairs
        .iter()
        .map(|pair| check_quality(pair, &index, context, threshold))
        .collect()
}

/// A pair with its quality report.
pub type ScoredPair = (CorpusPair, QualityReport);

/// Splits scored pairs into kept and removed by the strict `<= threshold`
/// rule; removals are logged with the sunk subscores.
pub fn filter_scored(
    scored: Vec<ScoredPair>,
    threshold: f64,
) -> (Vec<ScoredPair>, Vec<ScoredPair>) {
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (pair, report) in scored {
        if report.aggregate <= threshold {
            let reasons: Vec<&str> = report
                .subscores
                .iter()
                .filter(|(_, v)| **v <= threshold)
                .map(|(k, _)| k.as_str())
                .collect();
            log::info!(
                "filtered pair (template {}) for: {}",
                pair.template,
                reasons.join(", ")
            );
            removed.push((pair, report));
        } else {
            kept.push((pair, report));
        }
    }
    (kept, removed)
}

// ---------------------------------------------------------------------------
// Paraphrasing
// ---------------------------------------------------------------------------

/// Fixed phrase table applied to both prompt and response.
const PHRASE_TABLE: &[(&str, &str)] = &[
    ("sends an order to open", "places an order to open"),
    ("places an order to open", "sends an order to open"),
    ("sends an order to close", "places an order to close"),
    ("it is not true that", "it does not hold that"),
    ("Why is", "For what reason is"),
    ("Is it true that", "Does it hold that"),
    ("together with", "in combination with"),
    ("What is known about", "What do the records say about"),
    ("Which query retrieves", "Which query returns"),
    ("How does it come about that", "In what way does it come about that"),
];

/// Up to `max_variants` deterministic paraphrases of a kept pair. The
/// `Since A, then B.` response inverts to `B, because A.`; phrase-table
/// rules rewrite prompt and response together. Originals are the caller's
/// to retain; variants inherit provenance and score.
pub fn paraphrase(pair: &CorpusPair, seed: u64, max_variants: usize) -> Vec<CorpusPair> {
    if max_variants == 0 {
        return Vec::new();
    }
    let mut candidates: Vec<CorpusPair> = Vec::new();

    if let Some(rest) = pair.response.strip_prefix("Since ") {
        if let Some(split) = rest.rfind(", then ") {
            let body = &rest[..split];
            let mut head = rest[split + ", then ".len()..].trim().to_string();
            if head.ends_with('.') {
                head.pop();
            }
            let mut variant = pair.clone();
            variant.response =
                format!("{}, because {}.", crate::corpus::capitalize_first(&head), body);
            candidates.push(variant);
        }
    }

    for (pattern, replacement) in PHRASE_TABLE {
        if pair.prompt.contains(pattern) || pair.response.contains(pattern) {
            let mut variant = pair.clone();
            variant.prompt = variant.prompt.replace(pattern, replacement);
            variant.response = variant.response.replace(pattern, replacement);
            if variant.prompt != pair.prompt || variant.response != pair.response {
                candidates.push(variant);
            }
        }
    }

    if candidates.len() > max_variants {
        // Seeded selection: shuffle indices, keep the first `max_variants`,
        // restore construction order.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        shuffle(&mut order, &mut rng);
        let mut chosen: Vec<usize> = order.into_iter().take(max_variants).collect();
        chosen.sort_unstable();
        candidates = chosen.into_iter().map(|i| candidates[i].clone()).collect();
    }
    candidates
}

/// Deterministic Fisher-Yates driven by the explicit RNG.
pub(crate) fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

// ---------------------------------------------------------------------------
// Postprocessing
// ---------------------------------------------------------------------------

/// Final corpus after normalization, deduplication, seeded shuffle, and the
/// train/validation split.
#[derive(Clone, Debug, Default)]
pub struct Postprocessed {
    pub train: Vec<CorpusPair>,
    pub val: Vec<CorpusPair>,
    pub duplicates_removed: usize,
}

/// Normalizes whitespace and punctuation spacing in place.
fn normalize_text(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut out = String::with_capacity(collapsed.len());
    for c in collapsed.chars() {
        if matches!(c, '.' | ',' | ';' | ':' | '!' | '?') && out.ends_with(' ') {
            out.pop();
        }
        out.push(c);
    }
    out
}

/// Exact-duplicate removal (first copy wins), seeded shuffle, and split.
pub fn postprocess(pairs: Vec<CorpusPair>, seed: u64, split: f64) -> Postprocessed {
    let mut seen: HashSet<(String, String, String)> = HashSet::new();
    let mut unique: Vec<CorpusPair> = Vec::new();
    let mut duplicates_removed = 0usize;
    for mut pair in pairs {
        pair.prompt = normalize_text(&pair.prompt);
        pair.response = normalize_text(&pair.response);
        let key = (pair.task.to_string(), pair.prompt.clone(), pair.response.clone());
        if seen.insert(key) {
            unique.push(pair);
        } else {
            duplicates_removed += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle(&mut unique, &mut rng);
    let take = ((unique.len() as f64) * split).floor() as usize;
    let val = unique.split_off(take.min(unique.len()));
    Postprocessed { train: unique, val, duplicates_removed }
}
