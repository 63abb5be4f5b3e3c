//! Generator backends.
//!
//! The default backend is deterministic and local: templates come from
//! mechanical transformations of glossary clauses, so runs are reproducible
//! and no text ever leaves the process. The remote backend speaks the
//! minimal HTTP JSON protocol (`POST /expand`) and is post-validated like
//! any other backend.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{BackendError, VerbalizeError};
use crate::model::{Glossary, GlossaryEntry, Program, Term};
use crate::plan::build_logic_plan;
use crate::verbalize::{generalize_rule, token, Lexicon};

use super::{
    capitalize_first, sentence, why_question, yes_no_question, ExpandRequest, NlpTask,
    TemplateDraft, PLAN_NODE,
};

/// Expands one tokenized request into prompt-response template drafts.
pub trait GeneratorBackend {
    fn expand(&mut self, request: &ExpandRequest) -> Result<Vec<TemplateDraft>, BackendError>;

    /// Backend label for the run manifest.
    fn name(&self) -> String;
}

// ---------------------------------------------------------------------------
// Deterministic backend
// ---------------------------------------------------------------------------

struct SlotContext {
    /// Token text (or printed constant) standing in this head position.
    text: String,
    /// Glossary slot name for this position.
    name: String,
    /// Whether the head argument is a variable (constants get no wh
    /// template).
    is_var: bool,
    wh: Option<String>,
    answer: Option<String>,
}

struct NodeContext {
    head_clause: String,
    head_template: String,
    slots: Vec<SlotContext>,
    rule_text: String,
}

/// Local template generator driven by the program and glossary.
pub struct DeterministicBackend {
    nodes: BTreeMap<String, NodeContext>,
    overview: String,
    since_prefix: String,
}

impl DeterministicBackend {
    pub fn new(
        program: &Program,
        glossary: &Glossary,
        lexicon: &Lexicon,
    ) -> Result<DeterministicBackend, VerbalizeError> {
        let mut nodes = BTreeMap::new();
        for (position, rule) in program.rules.iter().enumerate() {
            let entry = glossary
                .entry(&rule.head.predicate)
                .ok_or_else(|| VerbalizeError::MissingEntry(rule.head.predicate.clone()))?;
            if entry.slots.len() != rule.head.args.len() {
                return Err(VerbalizeError::SlotArityMismatch {
                    predicate: rule.head.predicate.clone(),
                    slots: entry.slots.len(),
                    arity: rule.head.args.len(),
                });
            }
            let slots: Vec<SlotContext> = entry
                .slots
                .iter()
                .zip(&rule.head.args)
                .map(|(name, arg)| {
                    let (text, is_var) = match arg {
                        Term::Var(v) => (token(&rule.id, v), true),
                        other_term => (
                            match other_term {
                                Term::Val(v) => v.display_text(),
                                _ => other_term.print(),
                            },
                            false,
                        ),
                    };
                    SlotContext {
                        text,
                        name: name.clone(),
                        is_var,
                        wh: entry.wh.get(name).cloned(),
                        answer: entry.answers.get(name).cloned(),
                    }
                })
                .collect();
            let fills: BTreeMap<&str, String> = slots
                .iter()
                .map(|s| (s.name.as_str(), s.text.clone()))
                .collect();
            let head_clause = GlossaryEntry::fill(&entry.template, &fills);
            nodes.insert(
                rule.id.clone(),
                NodeContext {
                    head_clause,
                    head_template: entry.template.clone(),
                    slots,
                    rule_text: rule.print(position),
                },
            );
        }

        // Whole-plan behavior prose: generalized rule sentences plus the
        // dependency edges, all token- and constant-free.
        let mut overview = String::from("The system behaves as follows.");
        for rule in &program.rules {
            overview.push(' ');
            overview.push_str(&generalize_rule(rule, glossary, lexicon)?);
        }
        let plan = build_logic_plan(program);
        for &(producer, consumer) in &plan.edges {
            overview.push_str(&format!(
                " Rule {} builds on rule {}.",
                plan.nodes[consumer].rule_id, plan.nodes[producer].rule_id
            ));
        }

        Ok(DeterministicBackend {
            nodes,
            overview,
            since_prefix: format!("{} ", lexicon.since),
        })
    }

    fn node_drafts(&self, ctx: &NodeContext, request: &ExpandRequest) -> Vec<TemplateDraft> {
        let clause = &ctx.head_clause;
        match request.task {
            NlpTask::Explanation => vec![TemplateDraft {
                prompt: why_question(clause),
                response: request.text.clone(),
            }],
            NlpTask::Description => {
                let response = match request.text.strip_prefix(&self.since_prefix) {
                    Some(rest) => format!("Whenever {rest}"),
                    None => request.text.clone(),
                };
                vec![TemplateDraft {
                    prompt: format!("How does it come about that {clause}?"),
                    response,
                }]
            }
            NlpTask::QuestionAnswering => {
                let mut drafts = vec![TemplateDraft {
                    prompt: yes_no_question(clause),
                    response: sentence(clause),
                }];
                let fills: BTreeMap<&str, String> = ctx
                    .slots
                    .iter()
                    .map(|s| (s.name.as_str(), s.text.clone()))
                    .collect();
                for slot in &ctx.slots {
                    if !slot.is_var {
                        continue;
                    }
                    let question = match &slot.wh {
                        Some(wh) => GlossaryEntry::fill(wh, &fills),
                        None => {
                            let mut echo = fills.clone();
                            echo.insert(slot.name.as_str(), format!("which {}", slot.name));
                            GlossaryEntry::fill(&ctx.head_template, &echo)
                        }
                    };
                    let response = match &slot.answer {
                        Some(answer) => GlossaryEntry::fill(answer, &fills),
                        None => clause.clone(),
                    };
                    drafts.push(TemplateDraft {
                        prompt: format!("{}?", capitalize_first(&question)),
                        response: sentence(&response),
                    });
                }
                drafts
            }
            NlpTask::Translation => vec![TemplateDraft {
                prompt: format!("Which query retrieves the cases where {clause}?"),
                response: ctx.rule_text.clone(),
            }],
        }
    }
}

impl GeneratorBackend for DeterministicBackend {
    fn expand(&mut self, request: &ExpandRequest) -> Result<Vec<TemplateDraft>, BackendError> {
        if request.node == PLAN_NODE {
            return Ok(vec![TemplateDraft {
                prompt: "How does the system behave as a whole?".into(),
                response: self.overview.clone(),
            }]);
        }
        let ctx = self
            .nodes
            .get(&request.node)
            .ok_or_else(|| BackendError::Malformed(format!("unknown node {}", request.node)))?;
        Ok(self.node_drafts(ctx, request))
    }

    fn name(&self) -> String {
        "deterministic".into()
    }
}

// ---------------------------------------------------------------------------
// Counting wrapper
// ---------------------------------------------------------------------------

/// Wraps a backend and counts invocations; the lifting tests rely on it.
pub struct CountingBackend<B> {
    pub inner: B,
    pub calls: usize,
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend { inner, calls: 0 }
    }
}

impl<B: GeneratorBackend> GeneratorBackend for CountingBackend<B> {
    fn expand(&mut self, request: &ExpandRequest) -> Result<Vec<TemplateDraft>, BackendError> {
        self.calls += 1;
        self.inner.expand(request)
    }

    fn name(&self) -> String {
        format!("counting({})", self.inner.name())
    }
}

// ---------------------------------------------------------------------------
// Remote backend
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize, Serialize)]
struct ExpandResponse {
    templates: Vec<TemplateDraft>,
}

/// HTTP backend speaking `POST <endpoint>/expand`.
pub struct RemoteBackend {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>) -> RemoteBackend {
        RemoteBackend {
            endpoint: endpoint.into(),
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl GeneratorBackend for RemoteBackend {
    fn expand(&mut self, request: &ExpandRequest) -> Result<Vec<TemplateDraft>, BackendError> {
        let url = format!("{}/expand", self.endpoint.trim_end_matches('/'));
        let response = self
            .client
            .post(&url)
            .json(request)
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !response.status().is_success() {
            return Err(BackendError::Transport(format!(
                "{url} answered {}",
                response.status()
            )));
        }
        let parsed: ExpandResponse = response
            .json()
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        Ok(parsed.templates)
    }

    fn name(&self) -> String {
        format!("remote:{}", self.endpoint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_templates, preprocess, BackendBoundary, GroundGuard};
    use crate::parse::{parse_facts, parse_glossary, parse_program};
    use crate::plan::verbalize_plan;

    const RULES: &str = "Open(x,y,t1), not MarketClosed(t1) -> Accepted(x,y,t1).\n\
        Accepted(x,y,t1), Price(p1,t1), k = y * p1 -> Position(x,y,k,t1).\n\
        Close(x,t2), Price(p2,t2), Position(x,y,k,t1), t2 > t1, pl = y * p2 - k -> Return(x,pl).";

    const GLOSS: &str = r#"
        Open(x, y, t): "the trader {x} at time {t} sends an order to open a position of size {y}"
        MarketClosed(t): "{t} is a time when the market is closed"
        Price(p, t): "the price of the asset at time {t} is {p}"
        Close(x, t): "the trader {x} at time {t} sends an order to close the position"
        Accepted(x, y, t): "the order of size {y} by {x} is accepted at time {t}"
          ? y "what is the size of the order by {x} accepted at time {t}"
        Position(x, y, k, t): "the trader {x} holds a position of size {y} and notional {k} opened at time {t}"
        Return(x, pl): "the trader {x} gets returns of {pl}"
          ? pl "what returns does the trader {x} get"
    "#;

    fn setup() -> (crate::model::Program, Glossary, crate::plan::VerbalizedPlan) {
        let program = parse_program(RULES).unwrap();
        let glossary = parse_glossary(GLOSS).unwrap();
        let plan = build_logic_plan(&program);
        let verbalized = verbalize_plan(&plan, &program, &glossary, &Lexicon::default()).unwrap();
        (program, glossary, verbalized)
    }

    #[test]
    fn preprocess_shapes_follow_the_task() {
        let (_, _, plan) = setup();
        assert_eq!(preprocess(&plan, NlpTask::QuestionAnswering).len(), 3);
        let desc = preprocess(&plan, NlpTask::Description);
        assert_eq!(desc.len(), 4);
        assert_eq!(desc[3].node, PLAN_NODE);
        let empty = crate::plan::VerbalizedPlan { nodes: vec![], edges: vec![] };
        assert!(preprocess(&empty, NlpTask::Description).is_empty());
    }

    #[test]
    fn deterministic_templates_are_tokenized_questions() {
        let (program, glossary, plan) = setup();
        let mut backend =
            DeterministicBackend::new(&program, &glossary, &Lexicon::default()).unwrap();
        let mut boundary = BackendBoundary::new(GroundGuard::default());

        let qa = generate_templates(
            &preprocess(&plan, NlpTask::QuestionAnswering),
            &mut backend,
            &mut boundary,
        )
        .unwrap();
        let yesno: Vec<_> = qa.templates.iter().filter(|t| t.rule_id == "r1").collect();
        assert_eq!(
            yesno[0].prompt,
            "Is the order of size ⟦r1.y⟧ by ⟦r1.x⟧ accepted at time ⟦r1.t1⟧?"
        );
        assert_eq!(
            yesno[0].response,
            "The order of size ⟦r1.y⟧ by ⟦r1.x⟧ is accepted at time ⟦r1.t1⟧."
        );

        let expl = generate_templates(
            &preprocess(&plan, NlpTask::Explanation),
            &mut backend,
            &mut boundary,
        )
        .unwrap();
        let r3: Vec<_> = expl.templates.iter().filter(|t| t.rule_id == "r3").collect();
        assert_eq!(
            r3[0].prompt,
            "Why is it the case that the trader ⟦r3.x⟧ gets returns of ⟦r3.pl⟧?"
        );
        assert!(r3[0].response.starts_with("Since "));

        let tr = generate_templates(
            &preprocess(&plan, NlpTask::Translation),
            &mut backend,
            &mut boundary,
        )
        .unwrap();
        let r3: Vec<_> = tr.templates.iter().filter(|t| t.rule_id == "r3").collect();
        assert_eq!(
            r3[0].prompt,
            "Which query retrieves the cases where the trader ⟦r3.x⟧ gets returns of ⟦r3.pl⟧?"
        );
        assert!(r3[0].response.contains("-> Return(x, pl)."));
        assert!(crate::verbalize::scan_tokens(&r3[0].response).is_empty());
    }

    #[test]
    fn plan_overview_is_constant_free() {
        let (program, glossary, plan) = setup();
        let facts = parse_facts(
            "Open(\"EGTech\",0.3,1).\nOpen(\"IEComp\",0.5,1).\nPrice(124,1).\nPrice(147,9).\nClose(\"EGTech\",9).\nMarketClosed(5).",
        )
        .unwrap();
        let mut backend =
            DeterministicBackend::new(&program, &glossary, &Lexicon::default()).unwrap();
        let mut boundary = BackendBoundary::new(GroundGuard::from_store(&facts));
        let set = generate_templates(
            &preprocess(&plan, NlpTask::Description),
            &mut backend,
            &mut boundary,
        )
        .unwrap();
        let overview = set.templates.iter().find(|t| t.rule_id == PLAN_NODE).unwrap();
        assert!(overview.response.contains("Whenever the trader some x"));
        assert!(overview.response.contains("Rule r2 builds on rule r1."));
        assert!(overview.tokens.is_empty());
        for constant in ["EGTech", "IEComp", "124", "0.3"] {
            assert!(!overview.response.contains(constant));
        }
    }

    #[test]
    fn counting_backend_counts() {
        let (program, glossary, plan) = setup();
        let inner = DeterministicBackend::new(&program, &glossary, &Lexicon::default()).unwrap();
        let mut backend = CountingBackend::new(inner);
        let mut boundary = BackendBoundary::new(GroundGuard::default());
        generate_templates(
            &preprocess(&plan, NlpTask::QuestionAnswering),
            &mut backend,
            &mut boundary,
        )
        .unwrap();
        assert_eq!(backend.calls, 3);
        assert_eq!(boundary.calls(), 3);
    }
}
