//! Deterministic verbalization of facts, chase steps, and rules.
//!
//! Every sentence is assembled from glossary clauses and a fixed connective
//! lexicon: `Since <body>, then <head>.` with `and` between body clauses,
//! `it is not true that` before negated clauses, `where`/`with` phrases for
//! comparisons and assignments, and `together with` splicing aggregate
//! contributions. Rule sentences carry `⟦rule.var⟧` tokens where step
//! sentences carry constants; substituting a step's bindings into its rule's
//! tokenized sentence reproduces the step sentence exactly.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chase::{compose_back, evaluate, Chase, ChaseStep};
use crate::error::VerbalizeError;
use crate::model::{
    AggFunc, ArithOp, AssignSource, Atom, BodyLiteral, CmpOp, Glossary, GlossaryEntry,
    GroundAtom, Program, Rule, Term,
};

/// Connective lexicon. Fixed defaults, overridable wholesale.
#[derive(Clone, Debug)]
pub struct Lexicon {
    pub since: String,
    pub and_word: String,
    pub negation: String,
    pub then_word: String,
    pub together_with: String,
    pub where_word: String,
    pub with_word: String,
    pub computed_as: String,
    pub value_join: String,
    pub indefinite: String,
    pub lt: String,
    pub gt: String,
    pub le: String,
    pub ge: String,
    pub eq: String,
    pub ne: String,
    pub plus: String,
    pub minus: String,
    pub times: String,
    pub divided_by: String,
    pub msum: String,
    pub mcount: String,
    pub mmin: String,
    pub mmax: String,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon {
            since: "Since".into(),
            and_word: "and".into(),
            negation: "it is not true that".into(),
            then_word: "then".into(),
            together_with: "together with".into(),
            where_word: "where".into(),
            with_word: "with".into(),
            computed_as: "computed as".into(),
            value_join: "and".into(),
            indefinite: "some".into(),
            lt: "is earlier than".into(),
            gt: "is later than".into(),
            le: "is at most".into(),
            ge: "is at least".into(),
            eq: "equals".into(),
            ne: "differs from".into(),
            plus: "plus".into(),
            minus: "minus".into(),
            times: "times".into(),
            divided_by: "divided by".into(),
            msum: "monotonic sum".into(),
            mcount: "monotonic count".into(),
            mmin: "monotonic minimum".into(),
            mmax: "monotonic maximum".into(),
        }
    }
}

impl Lexicon {
    fn cmp_phrase(&self, op: CmpOp) -> &str {
        match op {
            CmpOp::Lt => &self.lt,
            CmpOp::Gt => &self.gt,
            CmpOp::Le => &self.le,
            CmpOp::Ge => &self.ge,
            CmpOp::Eq => &self.eq,
            CmpOp::Ne => &self.ne,
        }
    }

    fn arith_phrase(&self, op: ArithOp) -> &str {
        match op {
            ArithOp::Add => &self.plus,
            ArithOp::Sub => &self.minus,
            ArithOp::Mul => &self.times,
            ArithOp::Div => &self.divided_by,
        }
    }

    fn agg_phrase(&self, func: AggFunc) -> &str {
        match func {
            AggFunc::Sum => &self.msum,
            AggFunc::Count => &self.mcount,
            AggFunc::Min => &self.mmin,
            AggFunc::Max => &self.mmax,
        }
    }
}

/// The placeholder token for a rule variable.
pub fn token(rule_id: &str, var: &str) -> String {
    format!("\u{27e6}{rule_id}.{var}\u{27e7}")
}

/// Extracts all `⟦...⟧` tokens from a text.
pub fn scan_tokens(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut rest = text;
    while let Some(open) = rest.find('\u{27e6}') {
        rest = &rest[open..];
        match rest.find('\u{27e7}') {
            Some(close) => {
                let end = close + '\u{27e7}'.len_utf8();
                out.insert(rest[..end].to_string());
                rest = &rest[end..];
            }
            None => break,
        }
    }
    out
}

/// Replaces tokens by their replacement text; tokens absent from the map are
/// left in place.
pub fn substitute_tokens(text: &str, replacements: &BTreeMap<String, String>) -> String {
    let mut out = text.to_string();
    for (token, value) in replacements {
        out = out.replace(token, value);
    }
    out
}

/// How rule variables render inside a sentence.
#[derive(Clone, Copy)]
enum SlotRendering<'a> {
    /// `⟦rule.var⟧` placeholders.
    Tokens(&'a str),
    /// Printed constants from a step substitution.
    Ground(&'a BTreeMap<String, String>),
    /// `some var`, for generalized plan prose.
    Indefinite,
}

fn var_text(var: &str, mode: SlotRendering, lexicon: &Lexicon) -> Result<String, VerbalizeError> {
    match mode {
        SlotRendering::Tokens(rule_id) => Ok(token(rule_id, var)),
        SlotRendering::Ground(bindings) => bindings
            .get(var)
            .cloned()
            .ok_or_else(|| VerbalizeError::MissingBinding(var.to_string())),
        SlotRendering::Indefinite => Ok(format!("{} {var}", lexicon.indefinite)),
    }
}

fn term_text(term: &Term, mode: SlotRendering, lexicon: &Lexicon) -> Result<String, VerbalizeError> {
    match term {
        Term::Var(v) => var_text(v, mode, lexicon),
        Term::Val(v) => Ok(v.display_text()),
        Term::Expr(op, l, r) => Ok(format!(
            "{} {} {}",
            term_text(l, mode, lexicon)?,
            lexicon.arith_phrase(*op),
            term_text(r, mode, lexicon)?
        )),
    }
}

fn atom_clause(
    atom: &Atom,
    mode: SlotRendering,
    glossary: &Glossary,
    lexicon: &Lexicon,
) -> Result<String, VerbalizeError> {
    let entry = glossary
        .entry(&atom.predicate)
        .ok_or_else(|| VerbalizeError::MissingEntry(atom.predicate.clone()))?;
    if entry.slots.len() != atom.args.len() {
        return Err(VerbalizeError::SlotArityMismatch {
            predicate: atom.predicate.clone(),
            slots: entry.slots.len(),
            arity: atom.args.len(),
        });
    }
    let mut replacements: BTreeMap<&str, String> = BTreeMap::new();
    for (slot, arg) in entry.slots.iter().zip(&atom.args) {
        replacements.insert(slot.as_str(), term_text(arg, mode, lexicon)?);
    }
    Ok(GlossaryEntry::fill(&entry.template, &replacements))
}

/// Translates one ground fact through the glossary.
pub fn verbalize_fact(atom: &GroundAtom, glossary: &Glossary) -> Result<String, VerbalizeError> {
    let entry = glossary
        .entry(&atom.predicate)
        .ok_or_else(|| VerbalizeError::MissingEntry(atom.predicate.clone()))?;
    if entry.slots.len() != atom.args.len() {
        return Err(VerbalizeError::SlotArityMismatch {
            predicate: atom.predicate.clone(),
            slots: entry.slots.len(),
            arity: atom.args.len(),
        });
    }
    let mut replacements: BTreeMap<&str, String> = BTreeMap::new();
    for (slot, value) in entry.slots.iter().zip(&atom.args) {
        replacements.insert(slot.as_str(), value.display_text());
    }
    Ok(GlossaryEntry::fill(&entry.template, &replacements))
}

/// A body clause with its connective class.
enum Part {
    Clause(String),
    Negated(String),
    Where(String),
    With(String),
}

/// Renders body parts into the comma-joined body text (no `Since`, no head).
fn render_parts(parts: &[Part], lexicon: &Lexicon) -> String {
    let mut out = String::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        match part {
            Part::Clause(text) => {
                if i > 0 {
                    out.push_str(&lexicon.and_word);
                    out.push(' ');
                }
                out.push_str(text);
            }
            Part::Negated(text) => {
                if i > 0 {
                    out.push_str(&lexicon.and_word);
                    out.push(' ');
                }
                out.push_str(&lexicon.negation);
                out.push(' ');
                out.push_str(text);
            }
            Part::Where(text) => {
                out.push_str(&lexicon.where_word);
                out.push(' ');
                out.push_str(text);
            }
            Part::With(text) => {
                out.push_str(&lexicon.with_word);
                out.push(' ');
                out.push_str(text);
            }
        }
    }
    out
}

/// Builds the body parts of a rule. `skip_aggregate` leaves the aggregate
/// assignment out so callers can splice contributions instead.
fn body_parts(
    rule: &Rule,
    mode: SlotRendering,
    glossary: &Glossary,
    lexicon: &Lexicon,
    skip_aggregate: bool,
) -> Result<Vec<Part>, VerbalizeError> {
    let mut parts = Vec::new();
    for lit in &rule.body {
        match lit {
            BodyLiteral::Positive(atom) => {
                parts.push(Part::Clause(atom_clause(atom, mode, glossary, lexicon)?));
            }
            BodyLiteral::Negated(atom) => {
                parts.push(Part::Negated(atom_clause(atom, mode, glossary, lexicon)?));
            }
            BodyLiteral::Comparison(l, op, r) => {
                parts.push(Part::Where(format!(
                    "{} {} {}",
                    term_text(l, mode, lexicon)?,
                    lexicon.cmp_phrase(*op),
                    term_text(r, mode, lexicon)?
                )));
            }
            BodyLiteral::Assignment(target, AssignSource::Arith(expr)) => {
                parts.push(Part::With(format!(
                    "{} {} {}",
                    var_text(target, mode, lexicon)?,
                    lexicon.computed_as,
                    term_text(expr, mode, lexicon)?
                )));
            }
            BodyLiteral::Assignment(target, AssignSource::Aggregate(agg)) => {
                if !skip_aggregate {
                    parts.push(Part::With(format!(
                        "{} {} the {} of {}",
                        var_text(target, mode, lexicon)?,
                        lexicon.computed_as,
                        lexicon.agg_phrase(agg.func),
                        term_text(&agg.argument, mode, lexicon)?
                    )));
                }
            }
        }
    }
    Ok(parts)
}

fn head_clause(
    rule: &Rule,
    mode: SlotRendering,
    glossary: &Glossary,
    lexicon: &Lexicon,
) -> Result<String, VerbalizeError> {
    atom_clause(&rule.head, mode, glossary, lexicon)
}

fn close_sentence(body_text: &str, head: &str, lexicon: &Lexicon) -> String {
    format!(
        "{} {}, {} {}.",
        lexicon.since, body_text, lexicon.then_word, head
    )
}

/// A rule sentence with placeholder tokens instead of constants.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenizedSentence {
    pub rule_id: String,
    pub text: String,
    pub tokens: BTreeSet<String>,
}

/// Verbalizes a rule with `⟦rule.var⟧` tokens in every variable position.
pub fn verbalize_rule(
    rule: &Rule,
    glossary: &Glossary,
    lexicon: &Lexicon,
) -> Result<TokenizedSentence, VerbalizeError> {
    let mode = SlotRendering::Tokens(&rule.id);
    let parts = body_parts(rule, mode, glossary, lexicon, false)?;
    let head = head_clause(rule, mode, glossary, lexicon)?;
    let text = close_sentence(&render_parts(&parts, lexicon), &head, lexicon);
    let tokens = scan_tokens(&text);
    Ok(TokenizedSentence { rule_id: rule.id.clone(), text, tokens })
}

/// Generalized prose for a rule: variables read as `some x`, and the sentence
/// opens with `Whenever`. Used for plan-level descriptions; contains no
/// tokens and no constants of the data.
pub fn generalize_rule(
    rule: &Rule,
    glossary: &Glossary,
    lexicon: &Lexicon,
) -> Result<String, VerbalizeError> {
    let mode = SlotRendering::Indefinite;
    let parts = body_parts(rule, mode, glossary, lexicon, false)?;
    let head = head_clause(rule, mode, glossary, lexicon)?;
    Ok(format!(
        "Whenever {}, {} {}.",
        render_parts(&parts, lexicon),
        lexicon.then_word,
        head
    ))
}

/// A verbalized chase step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerbalizedStep {
    pub step_id: usize,
    pub rule_id: String,
    pub sentence: String,
    /// Rule variable to printed constant, covering the whole substitution.
    pub slot_bindings: BTreeMap<String, String>,
}

/// Verbalizes one chase step. `contributions` must be empty exactly when the
/// rule has no aggregate; for aggregate rules it is the `compose_back` list,
/// oldest first and ending with `step` itself.
pub fn verbalize_step(
    step: &ChaseStep,
    contributions: &[&ChaseStep],
    program: &Program,
    glossary: &Glossary,
    lexicon: &Lexicon,
) -> Result<VerbalizedStep, VerbalizeError> {
    let rule = program
        .rule_by_id(&step.rule_id)
        .ok_or_else(|| crate::error::ChaseError::UnknownRule(step.rule_id.clone()))?;

    let slot_bindings: BTreeMap<String, String> = step
        .substitution
        .iter()
        .map(|(k, v)| (k.clone(), v.display_text()))
        .collect();

    let sentence = match rule.aggregate() {
        None => {
            if !contributions.is_empty() {
                return Err(VerbalizeError::ContributionMismatch(format!(
                    "rule {} has no aggregate but {} contributions were passed",
                    rule.id,
                    contributions.len()
                )));
            }
            let tokenized = verbalize_rule(rule, glossary, lexicon)?;
            let replacements: BTreeMap<String, String> = slot_bindings
                .iter()
                .map(|(var, text)| (token(&rule.id, var), text.clone()))
                .collect();
            let sentence = substitute_tokens(&tokenized.text, &replacements);
            if let Some(leftover) = scan_tokens(&sentence).into_iter().next() {
                let var = leftover
                    .trim_start_matches('\u{27e6}')
                    .trim_end_matches('\u{27e7}');
                return Err(VerbalizeError::MissingBinding(var.to_string()));
            }
            sentence
        }
        Some((target, agg)) => {
            if contributions.is_empty()
                || contributions.last().map(|c| c.step_id) != Some(step.step_id)
                || contributions.iter().any(|c| c.rule_id != step.rule_id)
            {
                return Err(VerbalizeError::ContributionMismatch(format!(
                    "aggregate step {} needs its own contribution list, oldest first",
                    step.step_id
                )));
            }
            let mut groups = Vec::new();
            let mut argument_values = Vec::new();
            for contribution in contributions {
                let bindings: BTreeMap<String, String> = contribution
                    .substitution
                    .iter()
                    .map(|(k, v)| (k.clone(), v.display_text()))
                    .collect();
                let parts =
                    body_parts(rule, SlotRendering::Ground(&bindings), glossary, lexicon, true)?;
                groups.push(render_parts(&parts, lexicon));
                let value = evaluate(&agg.argument, &contribution.substitution)
                    .map_err(VerbalizeError::Chase)?;
                argument_values.push(value.display_text());
            }
            let running = slot_bindings
                .get(target)
                .cloned()
                .ok_or_else(|| VerbalizeError::MissingBinding(target.to_string()))?;
            let agg_part = format!(
                "{} {} the {} of {}",
                running,
                lexicon.computed_as,
                lexicon.agg_phrase(agg.func),
                join_values(&argument_values, &lexicon.value_join)
            );
            let head = head_clause(
                rule,
                SlotRendering::Ground(&slot_bindings),
                glossary,
                lexicon,
            )?;
            let body = groups.join(&format!(", {} ", lexicon.together_with));
            format!(
                "{} {}, {} {}, {} {}.",
                lexicon.since, body, lexicon.with_word, agg_part, lexicon.then_word, head
            )
        }
    };

    Ok(VerbalizedStep {
        step_id: step.step_id,
        rule_id: step.rule_id.clone(),
        sentence,
        slot_bindings,
    })
}

fn join_values(values: &[String], and_word: &str) -> String {
    match values {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!(
            "{} {} {}",
            init.join(", "),
            and_word,
            last
        ),
    }
}

/// Verbalizes every step of a chase in step order, resolving aggregate
/// contributions internally.
pub fn verbalize_chase(
    chase: &Chase,
    program: &Program,
    glossary: &Glossary,
    lexicon: &Lexicon,
) -> Result<Vec<VerbalizedStep>, VerbalizeError> {
    verbalize_steps(&chase.steps, program, glossary, lexicon)
}

/// [`verbalize_chase`] over a bare step list (for dump-driven callers).
pub fn verbalize_steps(
    steps: &[ChaseStep],
    program: &Program,
    glossary: &Glossary,
    lexicon: &Lexicon,
) -> Result<Vec<VerbalizedStep>, VerbalizeError> {
    let mut out = Vec::with_capacity(steps.len());
    for step in steps {
        let rule = program
            .rule_by_id(&step.rule_id)
            .ok_or_else(|| crate::error::ChaseError::UnknownRule(step.rule_id.clone()))?;
        let contributions = if rule.aggregate().is_some() {
            compose_back(step, steps, program).map_err(VerbalizeError::Chase)?
        } else {
            Vec::new()
        };
        out.push(verbalize_step(step, &contributions, program, glossary, lexicon)?);
    }
    Ok(out)
}

/// One line of the verbalized-chase dump.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerbalizedDumpLine {
    pub step: usize,
    pub rule: String,
    pub sentence: String,
    pub slots: BTreeMap<String, String>,
}

pub fn verbalized_to_jsonl(steps: &[VerbalizedStep]) -> String {
    let mut out = String::new();
    for step in steps {
        let line = VerbalizedDumpLine {
            step: step.step_id,
            rule: step.rule_id.clone(),
            sentence: step.sentence.clone(),
            slots: step.slot_bindings.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("dump line serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_verbalized_dump(text: &str) -> Result<Vec<VerbalizedStep>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line: VerbalizedDumpLine =
            serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        out.push(VerbalizedStep {
            step_id: line.step,
            rule_id: line.rule,
            sentence: line.sentence,
            slot_bindings: line.slots,
        });
    }
    Ok(out)
}
