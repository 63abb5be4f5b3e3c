//! Domain types: terms, rules, programs, facts, and glossaries.
//!
//! Ground values are canonical: a decimal with zero fractional part is stored
//! as an integer, so `0.5 * 124` and a literal `62` compare and hash equal.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::decimal::Decimal;
use crate::error::{ChaseError, ParseError, ParseErrorKind};

// ---------------------------------------------------------------------------
// Values and terms
// ---------------------------------------------------------------------------

/// A ground value: anything that may appear in a stored fact.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Str(String),
    Int(i64),
    Dec(Decimal),
    Bool(bool),
    /// Fresh placeholder invented for an existential head variable.
    Null(u64),
}

impl Value {
    /// Canonicalizing decimal constructor: integral decimals in `i64` range
    /// collapse to `Int`.
    pub fn decimal(d: Decimal) -> Value {
        if d.is_integral() {
            if let Ok(i) = i64::try_from(d.whole()) {
                return Value::Int(i);
            }
        }
        Value::Dec(d)
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Value::Int(_) | Value::Dec(_))
    }

    /// Numeric view in millionths, for mixed int/decimal comparison.
    pub fn as_micros(&self) -> Option<i128> {
        match self {
            Value::Int(i) => Some(*i as i128 * 1_000_000),
            Value::Dec(d) => Some(d.micros()),
            _ => None,
        }
    }

    /// How the value reads inside a sentence: strings bare, numbers minimal.
    pub fn display_text(&self) -> String {
        match self {
            Value::Str(s) => s.clone(),
            Value::Int(i) => i.to_string(),
            Value::Dec(d) => d.to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Null(id) => format!("_:{id}"),
        }
    }

    /// Source form: strings quoted and escaped, everything else as displayed.
    pub fn literal(&self) -> String {
        match self {
            Value::Str(s) => {
                let mut out = String::with_capacity(s.len() + 2);
                out.push('"');
                for c in s.chars() {
                    match c {
                        '"' => out.push_str("\\\""),
                        '\\' => out.push_str("\\\\"),
                        _ => out.push(c),
                    }
                }
                out.push('"');
                out
            }
            other => other.display_text(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_text())
    }
}

/// Binary arithmetic operators usable in expressions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

/// Comparison operators usable in body guards.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }
}

/// A term of the rule language.
#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Var(String),
    Val(Value),
    Expr(ArithOp, Box<Term>, Box<Term>),
}

impl Term {
    pub fn variables(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Term::Var(v) => {
                out.insert(v.as_str());
            }
            Term::Val(_) => {}
            Term::Expr(_, l, r) => {
                l.collect_variables(out);
                r.collect_variables(out);
            }
        }
    }

    /// Prints the term in source syntax, parenthesizing where precedence
    /// requires it.
    pub fn print(&self) -> String {
        self.print_prec(0)
    }

    fn print_prec(&self, min: u8) -> String {
        match self {
            Term::Var(v) => v.clone(),
            Term::Val(v) => v.literal(),
            Term::Expr(op, l, r) => {
                let prec = match op {
                    ArithOp::Add | ArithOp::Sub => 1,
                    ArithOp::Mul | ArithOp::Div => 2,
                };
                // Left-associative: the right child needs strictly higher
                // precedence to avoid parentheses.
                let text = format!(
                    "{} {} {}",
                    l.print_prec(prec),
                    op.symbol(),
                    r.print_prec(prec + 1)
                );
                if prec < min {
                    format!("({text})")
                } else {
                    text
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Atoms, literals, rules
// ---------------------------------------------------------------------------

/// A predicate applied to terms.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn variables(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for arg in &self.args {
            arg.collect_variables(&mut out);
        }
        out
    }

    pub fn print(&self) -> String {
        let args: Vec<String> = self.args.iter().map(Term::print).collect();
        format!("{}({})", self.predicate, args.join(", "))
    }
}

/// Monotonic aggregation functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggFunc {
    Sum,
    Count,
    Min,
    Max,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Sum => "msum",
            AggFunc::Count => "mcount",
            AggFunc::Min => "mmin",
            AggFunc::Max => "mmax",
        }
    }

    pub fn parse(name: &str) -> Option<AggFunc> {
        match name {
            "msum" => Some(AggFunc::Sum),
            "mcount" => Some(AggFunc::Count),
            "mmin" => Some(AggFunc::Min),
            "mmax" => Some(AggFunc::Max),
            _ => None,
        }
    }
}

/// A monotonic aggregate over an expression, grouped implicitly by the
/// non-aggregate head variables.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateExpr {
    pub func: AggFunc,
    pub argument: Term,
}

/// Right-hand side of an assignment literal.
#[derive(Clone, Debug, PartialEq)]
pub enum AssignSource {
    Arith(Term),
    Aggregate(AggregateExpr),
}

/// One literal of a rule body.
#[derive(Clone, Debug, PartialEq)]
pub enum BodyLiteral {
    Positive(Atom),
    Negated(Atom),
    Comparison(Term, CmpOp, Term),
    Assignment(String, AssignSource),
}

impl BodyLiteral {
    pub fn print(&self) -> String {
        match self {
            BodyLiteral::Positive(a) => a.print(),
            BodyLiteral::Negated(a) => format!("not {}", a.print()),
            BodyLiteral::Comparison(l, op, r) => {
                format!("{} {} {}", l.print(), op.symbol(), r.print())
            }
            BodyLiteral::Assignment(target, AssignSource::Arith(e)) => {
                format!("{} = {}", target, e.print())
            }
            BodyLiteral::Assignment(target, AssignSource::Aggregate(a)) => {
                format!("{} = {}({})", target, a.func.name(), a.argument.print())
            }
        }
    }
}

/// A single rule: ordered body literals and one head atom.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub id: String,
    pub body: Vec<BodyLiteral>,
    pub head: Atom,
    /// Head variables that instantiate fresh labeled nulls.
    pub existentials: BTreeSet<String>,
}

impl Rule {
    /// The positive body atoms, in body order.
    pub fn positive_atoms(&self) -> Vec<&Atom> {
        self.body
            .iter()
            .filter_map(|l| match l {
                BodyLiteral::Positive(a) => Some(a),
                _ => None,
            })
            .collect()
    }

    /// The rule's single aggregate assignment, if any.
    pub fn aggregate(&self) -> Option<(&str, &AggregateExpr)> {
        self.body.iter().find_map(|l| match l {
            BodyLiteral::Assignment(t, AssignSource::Aggregate(a)) => Some((t.as_str(), a)),
            _ => None,
        })
    }

    /// Head variables other than the aggregate target, in head-argument
    /// order without repeats: the implicit group-by key.
    pub fn group_variables(&self) -> Vec<&str> {
        let target = self.aggregate().map(|(t, _)| t);
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for arg in &self.head.args {
            if let Term::Var(v) = arg {
                if Some(v.as_str()) != target && seen.insert(v.as_str()) {
                    out.push(v.as_str());
                }
            }
        }
        out
    }

    /// Prints the rule in source syntax, omitting auto-assigned labels.
    pub fn print(&self, position: usize) -> String {
        let body: Vec<String> = self.body.iter().map(BodyLiteral::print).collect();
        let head_args: Vec<String> = self
            .head
            .args
            .iter()
            .map(|t| match t {
                Term::Var(v) if self.existentials.contains(v) => format!("?{v}"),
                other => other.print(),
            })
            .collect();
        let head = format!("{}({})", self.head.predicate, head_args.join(", "));
        let label = if self.id == format!("r{}", position + 1) {
            String::new()
        } else {
            format!("{}: ", self.id)
        };
        format!("{}{} -> {}.", label, body.join(", "), head)
    }
}

/// A parsed, stratified program.
#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub rules: Vec<Rule>,
    /// Predicate partition, lowest stratum first.
    pub strata: Vec<BTreeSet<String>>,
}

impl Program {
    pub fn rule_by_id(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// The stratum a predicate belongs to; predicates unknown to the program
    /// (pure data) sit in stratum 0.
    pub fn stratum_of(&self, predicate: &str) -> usize {
        self.strata
            .iter()
            .position(|s| s.contains(predicate))
            .unwrap_or(0)
    }

    /// Every predicate mentioned in a head or body atom.
    pub fn predicates(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for rule in &self.rules {
            out.insert(rule.head.predicate.as_str());
            for lit in &rule.body {
                match lit {
                    BodyLiteral::Positive(a) | BodyLiteral::Negated(a) => {
                        out.insert(a.predicate.as_str());
                    }
                    _ => {}
                }
            }
        }
        out
    }

    /// Declared arity of every predicate in the program.
    pub fn arities(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        for rule in &self.rules {
            out.insert(rule.head.predicate.as_str(), rule.head.args.len());
            for lit in &rule.body {
                if let BodyLiteral::Positive(a) | BodyLiteral::Negated(a) = lit {
                    out.insert(a.predicate.as_str(), a.args.len());
                }
            }
        }
        out
    }

    pub fn print(&self) -> String {
        let mut out = String::new();
        for (i, rule) in self.rules.iter().enumerate() {
            out.push_str(&rule.print(i));
            out.push('\n');
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Facts
// ---------------------------------------------------------------------------

/// A fully ground atom.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundAtom {
    pub predicate: String,
    pub args: Vec<Value>,
}

impl GroundAtom {
    pub fn print(&self) -> String {
        let args: Vec<String> = self.args.iter().map(Value::literal).collect();
        format!("{}({})", self.predicate, args.join(","))
    }
}

/// Where a fact came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Extensional,
    /// Derived by the chase step with this id.
    Derived(usize),
}

/// A stored fact with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Fact {
    pub id: usize,
    pub atom: GroundAtom,
    pub origin: Origin,
}

/// Deduplicating fact store with per-argument indexes for joins.
///
/// Fact ids are dense and assigned in insertion order, which makes them the
/// deterministic tie-breaker for the whole chase.
#[derive(Clone, Debug, Default)]
pub struct FactStore {
    facts: Vec<Fact>,
    by_atom: HashMap<GroundAtom, usize>,
    by_pred: HashMap<String, Vec<usize>>,
    by_pred_arg: HashMap<(String, usize, Value), Vec<usize>>,
    arities: HashMap<String, usize>,
}

impl FactStore {
    pub fn new() -> Self {
        FactStore::default()
    }

    /// Inserts a ground atom; returns `(id, true)` for a new fact or the
    /// existing id and `false` for a duplicate.
    pub fn insert(&mut self, atom: GroundAtom, origin: Origin) -> Result<(usize, bool), ChaseError> {
        if let Some(stored) = self.arities.get(&atom.predicate) {
            if *stored != atom.args.len() {
                return Err(ChaseError::ArityMismatch {
                    predicate: atom.predicate.clone(),
                    used: atom.args.len(),
                    stored: *stored,
                });
            }
        }
        if let Some(&id) = self.by_atom.get(&atom) {
            return Ok((id, false));
        }
        let id = self.facts.len();
        self.arities.insert(atom.predicate.clone(), atom.args.len());
        self.by_pred
            .entry(atom.predicate.clone())
            .or_default()
            .push(id);
        for (pos, value) in atom.args.iter().enumerate() {
            self.by_pred_arg
                .entry((atom.predicate.clone(), pos, value.clone()))
                .or_default()
                .push(id);
        }
        self.by_atom.insert(atom.clone(), id);
        self.facts.push(Fact { id, atom, origin });
        Ok((id, true))
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn get(&self, id: usize) -> Option<&Fact> {
        self.facts.get(id)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn contains(&self, atom: &GroundAtom) -> bool {
        self.by_atom.contains_key(atom)
    }

    pub fn lookup(&self, atom: &GroundAtom) -> Option<usize> {
        self.by_atom.get(atom).copied()
    }

    pub fn arity_of(&self, predicate: &str) -> Option<usize> {
        self.arities.get(predicate).copied()
    }

    /// Fact ids for a predicate in id order, optionally narrowed by one
    /// bound argument position.
    pub fn candidates(&self, predicate: &str, bound: Option<(usize, &Value)>) -> &[usize] {
        match bound {
            Some((pos, value)) => self
                .by_pred_arg
                .get(&(predicate.to_string(), pos, value.clone()))
                .map(Vec::as_slice)
                .unwrap_or(&[]),
            None => self
                .by_pred
                .get(predicate)
                .map(Vec::as_slice)
                .unwrap_or(&[]),
        }
    }

    /// Predicates present in the store, sorted.
    pub fn predicates(&self) -> BTreeSet<&str> {
        self.by_pred.keys().map(String::as_str).collect()
    }

    /// Every distinct value stored in any fact.
    pub fn ground_values(&self) -> BTreeSet<&Value> {
        self.facts
            .iter()
            .flat_map(|f| f.atom.args.iter())
            .collect()
    }

    pub fn print(&self) -> String {
        let mut out = String::new();
        for fact in &self.facts {
            out.push_str(&fact.atom.print());
            out.push_str(".\n");
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Glossary
// ---------------------------------------------------------------------------

/// Sentence template for one predicate, with optional per-slot question and
/// answer phrasings.
#[derive(Clone, Debug, PartialEq)]
pub struct GlossaryEntry {
    pub predicate: String,
    pub slots: Vec<String>,
    pub template: String,
    pub wh: BTreeMap<String, String>,
    pub answers: BTreeMap<String, String>,
}

impl GlossaryEntry {
    /// Fills `template`-style text with per-slot replacements.
    pub fn fill(template: &str, replacements: &BTreeMap<&str, String>) -> String {
        let mut out = String::with_capacity(template.len());
        let mut rest = template;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            rest = &rest[open + 1..];
            match rest.find('}') {
                Some(close) => {
                    let name = &rest[..close];
                    match replacements.get(name) {
                        Some(text) => out.push_str(text),
                        None => {
                            out.push('{');
                            out.push_str(name);
                            out.push('}');
                        }
                    }
                    rest = &rest[close + 1..];
                }
                None => {
                    out.push('{');
                    break;
                }
            }
        }
        out.push_str(rest);
        out
    }

    /// Slot names referenced by a template string.
    pub fn slots_in(template: &str) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        let mut rest = template;
        while let Some(open) = rest.find('{') {
            rest = &rest[open + 1..];
            match rest.find('}') {
                Some(close) => {
                    out.insert(&rest[..close]);
                    rest = &rest[close + 1..];
                }
                None => break,
            }
        }
        out
    }
}

/// Validated per-predicate sentence templates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Glossary {
    entries: BTreeMap<String, GlossaryEntry>,
}

impl Glossary {
    pub fn new() -> Self {
        Glossary::default()
    }

    /// Validates and stores an entry. Positions for error reporting are the
    /// caller's business; this reports kind and message only.
    pub fn insert(&mut self, entry: GlossaryEntry) -> Result<(), (ParseErrorKind, String)> {
        if self.entries.contains_key(&entry.predicate) {
            return Err((
                ParseErrorKind::DuplicateEntry,
                format!("predicate {} already has an entry", entry.predicate),
            ));
        }
        let declared: BTreeSet<&str> = entry.slots.iter().map(String::as_str).collect();
        if declared.len() != entry.slots.len() {
            return Err((
                ParseErrorKind::DuplicateEntry,
                format!("entry for {} repeats a slot name", entry.predicate),
            ));
        }
        let used = GlossaryEntry::slots_in(&entry.template);
        for slot in &used {
            if !declared.contains(slot) {
                return Err((
                    ParseErrorKind::UnknownSlot,
                    format!("template for {} uses undeclared slot {{{slot}}}", entry.predicate),
                ));
            }
        }
        for slot in &declared {
            if !used.contains(slot) {
                return Err((
                    ParseErrorKind::MissingSlot,
                    format!("template for {} never uses slot {{{slot}}}", entry.predicate),
                ));
            }
        }
        for (label, map) in [("question", &entry.wh), ("answer", &entry.answers)] {
            for (slot, text) in map {
                if !declared.contains(slot.as_str()) {
                    return Err((
                        ParseErrorKind::UnknownSlot,
                        format!("{label} phrase for {} names unknown slot {slot}", entry.predicate),
                    ));
                }
                for used in GlossaryEntry::slots_in(text) {
                    if !declared.contains(used) {
                        return Err((
                            ParseErrorKind::UnknownSlot,
                            format!(
                                "{label} phrase for {}.{slot} uses undeclared slot {{{used}}}",
                                entry.predicate
                            ),
                        ));
                    }
                }
            }
        }
        self.entries.insert(entry.predicate.clone(), entry);
        Ok(())
    }

    pub fn entry(&self, predicate: &str) -> Option<&GlossaryEntry> {
        self.entries.get(predicate)
    }

    pub fn entries(&self) -> impl Iterator<Item = &GlossaryEntry> {
        self.entries.values()
    }

    pub fn predicates(&self) -> BTreeSet<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    /// Checks that every predicate in `required` has an entry; returns the
    /// missing ones.
    pub fn missing_from<'a>(&self, required: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        required
            .into_iter()
            .filter(|p| !self.entries.contains_key(*p))
            .map(str::to_string)
            .collect()
    }

    pub fn print(&self) -> String {
        let mut out = String::new();
        for entry in self.entries.values() {
            out.push_str(&format!(
                "{}({}): \"{}\"\n",
                entry.predicate,
                entry.slots.join(", "),
                entry.template
            ));
            for (slot, text) in &entry.wh {
                out.push_str(&format!("  ? {slot} \"{text}\"\n"));
            }
            for (slot, text) in &entry.answers {
                out.push_str(&format!("  ! {slot} \"{text}\"\n"));
            }
        }
        out
    }
}

/// Convenience used by parsers to attach a location to glossary validation
/// failures.
pub(crate) fn located(err: (ParseErrorKind, String), line: u32, col: u32) -> ParseError {
    ParseError::new(line, col, err.0, err.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_decimals_collapse_to_ints() {
        let d = Decimal::parse("62.0").unwrap();
        assert_eq!(Value::decimal(d), Value::Int(62));
        let d = Decimal::parse("0.5").unwrap();
        assert!(matches!(Value::decimal(d), Value::Dec(_)));
    }

    #[test]
    fn value_literals_quote_strings() {
        assert_eq!(Value::Str("EGTech".into()).literal(), "\"EGTech\"");
        assert_eq!(Value::Str("a\"b".into()).literal(), "\"a\\\"b\"");
        assert_eq!(Value::Int(124).literal(), "124");
        assert_eq!(Value::Null(3).literal(), "_:3");
    }

    #[test]
    fn store_deduplicates_and_indexes() {
        let mut store = FactStore::new();
        let atom = GroundAtom {
            predicate: "Price".into(),
            args: vec![Value::Int(124), Value::Int(1)],
        };
        let (id, fresh) = store.insert(atom.clone(), Origin::Extensional).unwrap();
        assert!(fresh);
        let (again, fresh) = store.insert(atom.clone(), Origin::Extensional).unwrap();
        assert!(!fresh);
        assert_eq!(id, again);
        assert_eq!(store.candidates("Price", Some((1, &Value::Int(1)))), &[0]);
        assert_eq!(store.candidates("Price", Some((1, &Value::Int(9)))), &[] as &[usize]);
    }

    #[test]
    fn store_rejects_arity_conflicts() {
        let mut store = FactStore::new();
        store
            .insert(
                GroundAtom { predicate: "P".into(), args: vec![Value::Int(1)] },
                Origin::Extensional,
            )
            .unwrap();
        let err = store
            .insert(
                GroundAtom {
                    predicate: "P".into(),
                    args: vec![Value::Int(1), Value::Int(2)],
                },
                Origin::Extensional,
            )
            .unwrap_err();
        assert!(matches!(err, ChaseError::ArityMismatch { .. }));
    }

    #[test]
    fn glossary_rejects_bad_templates() {
        let mut g = Glossary::new();
        let entry = GlossaryEntry {
            predicate: "P".into(),
            slots: vec!["a".into(), "b".into()],
            template: "only {a} here".into(),
            wh: BTreeMap::new(),
            answers: BTreeMap::new(),
        };
        assert!(matches!(g.insert(entry), Err((ParseErrorKind::MissingSlot, _))));
        let entry = GlossaryEntry {
            predicate: "P".into(),
            slots: vec!["a".into()],
            template: "{a} and {c}".into(),
            wh: BTreeMap::new(),
            answers: BTreeMap::new(),
        };
        assert!(matches!(g.insert(entry), Err((ParseErrorKind::UnknownSlot, _))));
    }

    #[test]
    fn group_variables_skip_aggregate_target() {
        let rule = Rule {
            id: "r1".into(),
            body: vec![
                BodyLiteral::Positive(Atom {
                    predicate: "Position".into(),
                    args: vec![Term::Var("x".into()), Term::Var("k".into())],
                }),
                BodyLiteral::Assignment(
                    "s".into(),
                    AssignSource::Aggregate(AggregateExpr {
                        func: AggFunc::Sum,
                        argument: Term::Var("k".into()),
                    }),
                ),
            ],
            head: Atom {
                predicate: "Exposure".into(),
                args: vec![Term::Var("x".into()), Term::Var("s".into())],
            },
            existentials: BTreeSet::new(),
        };
        assert_eq!(rule.group_variables(), vec!["x"]);
    }
}
