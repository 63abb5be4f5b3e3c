//! Corpus synthesis via lifted templates.
//!
//! Tokenized prompt-response templates are generated once per plan node per
//! task (the only place a generator backend is ever consulted), then mapped
//! over verbalized chase steps by pure token substitution. Extensional facts
//! get their own pairs straight from the glossary, with no backend at all,
//! so generator-call counts depend on the program, never on the data size.

pub mod backend;
pub mod boundary;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{BackendError, VerbalizeError};
use crate::model::{FactStore, Glossary, GlossaryEntry, Origin};
use crate::plan::VerbalizedPlan;
use crate::verbalize::{scan_tokens, substitute_tokens, VerbalizedStep};

pub use backend::{CountingBackend, DeterministicBackend, GeneratorBackend, RemoteBackend};
pub use boundary::{BackendBoundary, GroundGuard};

/// Rule id used for the whole-plan description request.
pub const PLAN_NODE: &str = "plan";

/// The supported fine-tuning tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NlpTask {
    #[serde(rename = "explanation")]
    Explanation,
    #[serde(rename = "description")]
    Description,
    #[serde(rename = "qa")]
    QuestionAnswering,
    #[serde(rename = "translation")]
    Translation,
}

impl NlpTask {
    pub const ALL: [NlpTask; 4] = [
        NlpTask::Explanation,
        NlpTask::Description,
        NlpTask::QuestionAnswering,
        NlpTask::Translation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NlpTask::Explanation => "explanation",
            NlpTask::Description => "description",
            NlpTask::QuestionAnswering => "qa",
            NlpTask::Translation => "translation",
        }
    }
}

impl fmt::Display for NlpTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NlpTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "explanation" => Ok(NlpTask::Explanation),
            "description" => Ok(NlpTask::Description),
            "qa" | "question_answering" | "question-answering" => Ok(NlpTask::QuestionAnswering),
            "translation" => Ok(NlpTask::Translation),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

/// One generation request sent through the boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpandRequest {
    pub node: String,
    pub task: NlpTask,
    pub text: String,
    pub tokens: Vec<String>,
}

/// A backend's raw template proposal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateDraft {
    pub prompt: String,
    pub response: String,
}

/// A validated tokenized template.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub template_id: String,
    pub rule_id: String,
    pub task: NlpTask,
    pub prompt: String,
    pub response: String,
    pub tokens: Vec<String>,
}

/// All templates of a run, in generation order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub templates: Vec<Template>,
}

impl TemplateSet {
    pub fn for_rule<'a>(&'a self, rule_id: &'a str) -> impl Iterator<Item = &'a Template> {
        self.templates.iter().filter(move |t| t.rule_id == rule_id)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

/// A mapped prompt-response pair with provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusPair {
    pub prompt: String,
    pub response: String,
    pub task: NlpTask,
    pub rule: String,
    pub steps: Vec<usize>,
    pub template: String,
    pub score: Option<f64>,
}

// ---------------------------------------------------------------------------
// Request preparation and template generation
// ---------------------------------------------------------------------------

/// Builds the generation requests for one task: one request per plan node,
/// plus one whole-plan request for the description task.
pub fn preprocess(plan: &VerbalizedPlan, task: NlpTask) -> Vec<ExpandRequest> {
    let mut requests: Vec<ExpandRequest> = plan
        .nodes
        .iter()
        .map(|node| ExpandRequest {
            node: node.rule_id.clone(),
            task,
            text: node.sentence.clone(),
            tokens: node.tokens.clone(),
        })
        .collect();
    if task == NlpTask::Description && !plan.nodes.is_empty() {
        let text = plan
            .nodes
            .iter()
            .map(|n| n.sentence.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        let mut tokens: Vec<String> = plan
            .nodes
            .iter()
            .flat_map(|n| n.tokens.iter().cloned())
            .collect();
        tokens.sort();
        tokens.dedup();
        requests.push(ExpandRequest { node: PLAN_NODE.into(), task, text, tokens });
    }
    requests
}

/// Runs every request through the boundary and the backend exactly once
/// (plus a single retry on transport failure), validating the returned
/// templates. Invalid drafts are dropped and logged; a request yielding zero
/// valid templates aborts.
pub fn generate_templates(
    requests: &[ExpandRequest],
    backend: &mut dyn GeneratorBackend,
    boundary: &mut BackendBoundary,
) -> Result<TemplateSet, BackendError> {
    let mut set = TemplateSet::default();
    for request in requests {
        boundary.admit(request)?;
        let drafts = match backend.expand(request) {
            Ok(drafts) => drafts,
            Err(BackendError::Transport(first)) => {
                log::warn!("backend transport failure, retrying once: {first}");
                backend.expand(request)?
            }
            Err(other) => return Err(other),
        };
        let mut valid = 0usize;
        for (index, draft) in drafts.into_iter().enumerate() {
            if draft.prompt.trim().is_empty() || draft.response.trim().is_empty() {
                log::warn!("dropping empty template for node {}", request.node);
                continue;
            }
            let mut used: Vec<String> = scan_tokens(&draft.prompt)
                .union(&scan_tokens(&draft.response))
                .cloned()
                .collect();
            used.sort();
            if used.iter().any(|t| !request.tokens.contains(t)) {
                log::warn!(
                    "dropping template with undeclared tokens for node {}",
                    request.node
                );
                continue;
            }
            valid += 1;
            set.templates.push(Template {
                template_id: format!("{}#{}#{}", request.node, request.task, index),
                rule_id: request.node.clone(),
                task: request.task,
                prompt: draft.prompt,
                response: draft.response,
                tokens: used,
            });
        }
        if valid == 0 {
            return Err(BackendError::EmptyExpansion {
                node: request.node.clone(),
                task: request.task.to_string(),
            });
        }
    }
    Ok(set)
}

// ---------------------------------------------------------------------------
// Chase mapping
// ---------------------------------------------------------------------------

/// Instantiates every template of the step's rule against the step's slot
/// bindings. Pure substitution; templates with unbindable tokens are dropped
/// with a warning. Performs no backend calls.
pub fn map_step(templates: &TemplateSet, step: &VerbalizedStep) -> Vec<CorpusPair> {
    let replacements: BTreeMap<String, String> = step
        .slot_bindings
        .iter()
        .map(|(var, text)| (crate::verbalize::token(&step.rule_id, var), text.clone()))
        .collect();
    let mut out = Vec::new();
    for template in templates.for_rule(&step.rule_id) {
        let prompt = substitute_tokens(&template.prompt, &replacements);
        let response = substitute_tokens(&template.response, &replacements);
        if !scan_tokens(&prompt).is_empty() || !scan_tokens(&response).is_empty() {
            log::warn!(
                "template {} has unbound tokens for step {}; skipped",
                template.template_id,
                step.step_id
            );
            continue;
        }
        out.push(CorpusPair {
            prompt,
            response,
            task: template.task,
            rule: template.rule_id.clone(),
            steps: vec![step.step_id],
            template: template.template_id.clone(),
            score: None,
        });
    }
    out
}

// ---------------------------------------------------------------------------
// Ground corpus (extensional facts only)
// ---------------------------------------------------------------------------

/// Builds the ablation-baseline pairs straight from extensional facts: QA
/// pairs per fact and one description pair per predicate. No chase, no
/// backend.
pub fn generate_ground_corpus(
    store: &FactStore,
    glossary: &Glossary,
    tasks: &[NlpTask],
) -> Result<Vec<CorpusPair>, VerbalizeError> {
    let mut out = Vec::new();
    let predicates = store.predicates();
    for predicate in predicates {
        let entry = glossary
            .entry(predicate)
            .ok_or_else(|| VerbalizeError::MissingEntry(predicate.to_string()))?;
        let facts: Vec<_> = store
            .facts()
            .iter()
            .filter(|f| f.origin == Origin::Extensional && f.atom.predicate == predicate)
            .collect();
        if facts.is_empty() {
            continue;
        }

        if tasks.contains(&NlpTask::QuestionAnswering) {
            for fact in &facts {
                if entry.slots.len() != fact.atom.args.len() {
                    return Err(VerbalizeError::SlotArityMismatch {
                        predicate: predicate.to_string(),
                        slots: entry.slots.len(),
                        arity: fact.atom.args.len(),
                    });
                }
                let bindings: BTreeMap<&str, String> = entry
                    .slots
                    .iter()
                    .map(String::as_str)
                    .zip(fact.atom.args.iter().map(|v| v.display_text()))
                    .collect();
                let clause = GlossaryEntry::fill(&entry.template, &bindings);
                out.push(CorpusPair {
                    prompt: yes_no_question(&clause),
                    response: sentence(&clause),
                    task: NlpTask::QuestionAnswering,
                    rule: format!("fact:{predicate}"),
                    steps: Vec::new(),
                    template: format!("fact:{predicate}#qa#yesno"),
                    score: None,
                });
                for (index, slot) in entry.slots.iter().enumerate() {
                    let question = match entry.wh.get(slot) {
                        Some(wh) => GlossaryEntry::fill(wh, &bindings),
                        None => {
                            let mut echo = bindings.clone();
                            echo.insert(slot.as_str(), format!("which {slot}"));
                            GlossaryEntry::fill(&entry.template, &echo)
                        }
                    };
                    let response = match entry.answers.get(slot) {
                        Some(answer) => GlossaryEntry::fill(answer, &bindings),
                        None => clause.clone(),
                    };
                    out.push(CorpusPair {
                        prompt: format!("{}?", capitalize_first(&question)),
                        response: sentence(&response),
                        task: NlpTask::QuestionAnswering,
                        rule: format!("fact:{predicate}"),
                        steps: Vec::new(),
                        template: format!("fact:{predicate}#qa#wh{index}"),
                        score: None,
                    });
                }
            }
        }

        if tasks.contains(&NlpTask::Description) {
            let clauses: Result<Vec<String>, VerbalizeError> = facts
                .iter()
                .map(|f| crate::verbalize::verbalize_fact(&f.atom, glossary))
                .collect();
            let body = clauses?.join("; ");
            out.push(CorpusPair {
                prompt: format!("What is known about {predicate} events?"),
                response: format!("The following is known: {body}."),
                task: NlpTask::Description,
                rule: format!("fact:{predicate}"),
                steps: Vec::new(),
                template: format!("fact:{predicate}#description#all"),
                score: None,
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Text helpers shared by template construction
// ---------------------------------------------------------------------------

/// Uppercases a leading lowercase ASCII letter.
pub fn capitalize_first(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {
            format!("{}{}", c.to_ascii_uppercase(), chars.as_str())
        }
        _ => text.to_string(),
    }
}

/// Turns a declarative clause into a yes/no question by fronting the first
/// `is`; clauses without one get the `Is it true that` wrapper.
pub fn yes_no_question(clause: &str) -> String {
    match clause.find(" is ") {
        Some(pos) => format!("Is {} {}?", &clause[..pos], &clause[pos + 4..]),
        None => format!("Is it true that {clause}?"),
    }
}

/// `Why`-question over a clause, reusing the `is`-fronting shape.
pub fn why_question(clause: &str) -> String {
    match clause.find(" is ") {
        Some(pos) => format!("Why is {} {}?", &clause[..pos], &clause[pos + 4..]),
        None => format!("Why is it the case that {clause}?"),
    }
}

/// Clause to standalone sentence.
pub fn sentence(clause: &str) -> String {
    format!("{}.", capitalize_first(clause))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_facts, parse_glossary};

    const GLOSS: &str = r#"
        Open(x, y, t): "the trader {x} at time {t} sends an order to open a position of size {y}"
          ? y "what is the size of the position that the trader {x} asks to open at time {t}"
          ! y "the trader {x} asks to open a position of size {y}"
        MarketClosed(t): "{t} is a time when the market is closed"
        Price(p, t): "the price of the asset at time {t} is {p}"
          ? p "what is the price of the asset at time {t}"
          ! p "at time {t} the price of the asset is {p}"
        Close(x, t): "the trader {x} at time {t} sends an order to close the position"
    "#;

    const FACTS: &str = "Open(\"EGTech\",0.3,1).\nOpen(\"IEComp\",0.5,1).\nPrice(124,1).\n\
        Price(147,9).\nClose(\"EGTech\",9).\nMarketClosed(5).";

    #[test]
    fn question_shapes_are_mechanical() {
        assert_eq!(
            yes_no_question("the order of size 0.3 by EGTech is accepted at time 1"),
            "Is the order of size 0.3 by EGTech accepted at time 1?"
        );
        assert_eq!(
            yes_no_question("the trader EGTech at time 9 sends an order to close the position"),
            "Is it true that the trader EGTech at time 9 sends an order to close the position?"
        );
        assert_eq!(
            why_question("the order of size 0.3 by EGTech is accepted at time 1"),
            "Why is the order of size 0.3 by EGTech accepted at time 1?"
        );
    }

    #[test]
    fn mapping_substitutes_every_token_with_zero_backend_calls() {
        use crate::verbalize::VerbalizedStep;
        let templates = TemplateSet {
            templates: vec![
                Template {
                    template_id: "r1#explanation#0".into(),
                    rule_id: "r1".into(),
                    task: NlpTask::Explanation,
                    prompt: "Why is the order of size ⟦r1.y⟧ by ⟦r1.x⟧ accepted at time ⟦r1.t1⟧?"
                        .into(),
                    response:
                        "Since the trader ⟦r1.x⟧ at time ⟦r1.t1⟧ sends an order to open a position \
                         of size ⟦r1.y⟧, and it is not true that ⟦r1.t1⟧ is a time when the market \
                         is closed, then the order of size ⟦r1.y⟧ by ⟦r1.x⟧ is accepted at time \
                         ⟦r1.t1⟧."
                            .into(),
                    tokens: vec!["⟦r1.t1⟧".into(), "⟦r1.x⟧".into(), "⟦r1.y⟧".into()],
                },
                Template {
                    template_id: "r1#qa#orphan".into(),
                    rule_id: "r1".into(),
                    task: NlpTask::QuestionAnswering,
                    prompt: "Is ⟦r1.missing⟧ fine?".into(),
                    response: "⟦r1.missing⟧ is fine.".into(),
                    tokens: vec!["⟦r1.missing⟧".into()],
                },
            ],
        };
        let step = VerbalizedStep {
            step_id: 0,
            rule_id: "r1".into(),
            sentence: String::new(),
            slot_bindings: [
                ("x".to_string(), "EGTech".to_string()),
                ("y".to_string(), "0.3".to_string()),
                ("t1".to_string(), "1".to_string()),
            ]
            .into(),
        };
        let pairs = map_step(&templates, &step);
        // The orphan template has no binding for its token and is dropped.
        assert_eq!(pairs.len(), 1);
        assert_eq!(
            pairs[0].prompt,
            "Why is the order of size 0.3 by EGTech accepted at time 1?"
        );
        assert_eq!(
            pairs[0].response,
            "Since the trader EGTech at time 1 sends an order to open a position of size 0.3, \
             and it is not true that 1 is a time when the market is closed, \
             then the order of size 0.3 by EGTech is accepted at time 1."
        );
        assert_eq!(pairs[0].steps, vec![0]);
        assert!(crate::verbalize::scan_tokens(&pairs[0].prompt).is_empty());
        assert!(crate::verbalize::scan_tokens(&pairs[0].response).is_empty());
    }

    #[test]
    fn ground_corpus_covers_facts_only() {
        let store = parse_facts(FACTS).unwrap();
        let glossary = parse_glossary(GLOSS).unwrap();
        let pairs = generate_ground_corpus(
            &store,
            &glossary,
            &[NlpTask::QuestionAnswering, NlpTask::Description],
        )
        .unwrap();
        assert!(pairs
            .iter()
            .any(|p| p.prompt.contains("what is the size of the position")
                || p.prompt.contains("What is the size of the position")));
        // No derived predicates anywhere.
        for pair in &pairs {
            for derived in ["Accepted", "Position", "Return"] {
                assert!(!pair.prompt.contains(derived));
                assert!(!pair.response.contains(derived));
            }
        }
        // The price QA pair links 124 to time 1.
        assert!(pairs.iter().any(|p| {
            p.task == NlpTask::QuestionAnswering
                && p.prompt == "What is the price of the asset at time 1?"
                && p.response == "At time 1 the price of the asset is 124."
        }));
    }

    #[test]
    fn empty_store_gives_an_empty_corpus() {
        let store = parse_facts("").unwrap();
        let glossary = parse_glossary(GLOSS).unwrap();
        let pairs = generate_ground_corpus(&store, &glossary, &[NlpTask::QuestionAnswering]).unwrap();
        assert!(pairs.is_empty());
    }

    #[test]
    fn price_only_store_restricts_the_corpus() {
        let store = parse_facts("Price(124,1).").unwrap();
        let glossary = parse_glossary(GLOSS).unwrap();
        let pairs = generate_ground_corpus(
            &store,
            &glossary,
            &[NlpTask::QuestionAnswering, NlpTask::Description],
        )
        .unwrap();
        assert!(!pairs.is_empty());
        assert!(pairs.iter().all(|p| p.rule == "fact:Price"));
    }
}
