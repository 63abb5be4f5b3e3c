//! Parsers for the three textual formats: `.vada` programs, `.facts`
//! databases, and `.gloss` glossaries.
//!
//! Rules read `body -> head.` with `not` for negation, `?v` marking an
//! existential head variable, and `v = expr` or `v = msum(expr)` assignments.
//! `#` starts a line comment in every format.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::decimal::Decimal;
use crate::error::{ParseError, ParseErrorKind};
use crate::model::{
    located, AggFunc, AggregateExpr, AssignSource, Atom, BodyLiteral, CmpOp, FactStore, Glossary,
    GlossaryEntry, GroundAtom, Origin, Program, Rule, Term, Value,
};
use crate::stratify::stratify_rules;

const RESERVED: &[&str] = &["not", "true", "false", "msum", "mcount", "mmin", "mmax"];

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    /// Lowercase-initial identifier: variable, rule label, or keyword.
    LIdent(String),
    /// Uppercase-initial identifier: predicate.
    UIdent(String),
    Int(i64),
    Dec(Decimal),
    Str(String),
    Sym(&'static str),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::LIdent(s) | Tok::UIdent(s) => format!("`{s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Dec(d) => format!("`{d}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Sym(s) => format!("`{s}`"),
        }
    }
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: u32,
    col: u32,
}

fn syntax(line: u32, col: u32, msg: impl Into<String>) -> ParseError {
    ParseError::new(line, col, ParseErrorKind::Syntax, msg)
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line: u32 = 1;
    let mut col: u32 = 1;

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        let (tl, tc) = (line, col);
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match chars.peek() {
                        None => return Err(syntax(tl, tc, "unterminated string literal")),
                        Some('"') => {
                            bump!();
                            break;
                        }
                        Some('\\') => {
                            bump!();
                            match bump!() {
                                Some('"') => s.push('"'),
                                Some('\\') => s.push('\\'),
                                Some(other) => {
                                    return Err(syntax(
                                        line,
                                        col,
                                        format!("unknown escape `\\{other}`"),
                                    ))
                                }
                                None => return Err(syntax(tl, tc, "unterminated string literal")),
                            }
                        }
                        Some('\n') => return Err(syntax(tl, tc, "unterminated string literal")),
                        Some(_) => s.push(bump!().unwrap()),
                    }
                }
                out.push(Spanned { tok: Tok::Str(s), line: tl, col: tc });
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        s.push(bump!().unwrap());
                    } else {
                        break;
                    }
                }
                let mut is_dec = false;
                if chars.peek() == Some(&'.') {
                    // A digit must follow for this to be a decimal point and
                    // not the end-of-statement dot.
                    let mut ahead = chars.clone();
                    ahead.next();
                    if ahead.peek().is_some_and(|c| c.is_ascii_digit()) {
                        is_dec = true;
                        s.push(bump!().unwrap());
                        while let Some(&c) = chars.peek() {
                            if c.is_ascii_digit() {
                                s.push(bump!().unwrap());
                            } else {
                                break;
                            }
                        }
                    }
                }
                let tok = if is_dec {
                    let d = Decimal::parse(&s).ok_or_else(|| {
                        syntax(tl, tc, format!("decimal `{s}` exceeds scale 6 or overflows"))
                    })?;
                    Tok::Dec(d)
                } else {
                    let i: i64 = s
                        .parse()
                        .map_err(|_| syntax(tl, tc, format!("integer `{s}` out of range")))?;
                    Tok::Int(i)
                };
                out.push(Spanned { tok, line: tl, col: tc });
            }
            c if c.is_ascii_alphabetic() => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(bump!().unwrap());
                    } else {
                        break;
                    }
                }
                let tok = if s.chars().next().unwrap().is_ascii_uppercase() {
                    Tok::UIdent(s)
                } else {
                    Tok::LIdent(s)
                };
                out.push(Spanned { tok, line: tl, col: tc });
            }
            _ => {
                bump!();
                let two = |next: char, chars: &mut std::iter::Peekable<std::str::Chars>| {
                    chars.peek() == Some(&next)
                };
                let sym: &'static str = match c {
                    '(' => "(",
                    ')' => ")",
                    ',' => ",",
                    '.' => ".",
                    '?' => "?",
                    ':' => ":",
                    '+' => "+",
                    '*' => "*",
                    '/' => "/",
                    '-' => {
                        if two('>', &mut chars) {
                            bump!();
                            "->"
                        } else {
                            "-"
                        }
                    }
                    '=' => {
                        if two('=', &mut chars) {
                            bump!();
                            "=="
                        } else {
                            "="
                        }
                    }
                    '!' => {
                        if two('=', &mut chars) {
                            bump!();
                            "!="
                        } else {
                            "!"
                        }
                    }
                    '<' => {
                        if two('=', &mut chars) {
                            bump!();
                            "<="
                        } else {
                            "<"
                        }
                    }
                    '>' => {
                        if two('=', &mut chars) {
                            bump!();
                            ">="
                        } else {
                            ">"
                        }
                    }
                    other => {
                        return Err(syntax(tl, tc, format!("unexpected character `{other}`")))
                    }
                };
                out.push(Spanned { tok: Tok::Sym(sym), line: tl, col: tc });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Token cursor
// ---------------------------------------------------------------------------

struct Cursor {
    toks: Vec<Spanned>,
    pos: usize,
    end_line: u32,
    end_col: u32,
}

impl Cursor {
    fn new(text: &str) -> Result<Cursor, ParseError> {
        let toks = lex(text)?;
        let (end_line, end_col) = toks
            .last()
            .map(|t| (t.line, t.col + 1))
            .unwrap_or((1, 1));
        Ok(Cursor { toks, pos: 0, end_line, end_col })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.toks.get(self.pos + offset).map(|s| &s.tok)
    }

    fn here(&self) -> (u32, u32) {
        self.toks
            .get(self.pos)
            .map(|t| (t.line, t.col))
            .unwrap_or((self.end_line, self.end_col))
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect_sym(&mut self, sym: &'static str) -> Result<(), ParseError> {
        let (l, c) = self.here();
        match self.next() {
            Some(Spanned { tok: Tok::Sym(s), .. }) if s == sym => Ok(()),
            Some(t) => Err(syntax(l, c, format!("expected `{sym}`, found {}", t.tok.describe()))),
            None => Err(syntax(l, c, format!("expected `{sym}`, found end of input"))),
        }
    }

    fn eat_sym(&mut self, sym: &'static str) -> bool {
        if self.peek() == Some(&Tok::Sym(sym)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn is_done(&self) -> bool {
        self.pos >= self.toks.len()
    }
}

// ---------------------------------------------------------------------------
// Program parser
// ---------------------------------------------------------------------------

/// Parses rule source text into a stratified [`Program`].
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut cur = Cursor::new(text)?;
    let mut rules = Vec::new();
    let mut positions = Vec::new();
    while !cur.is_done() {
        positions.push(cur.here());
        rules.push(parse_rule(&mut cur, rules.len())?);
    }

    let mut seen_ids = BTreeSet::new();
    for (rule, &(l, c)) in rules.iter().zip(&positions) {
        if !seen_ids.insert(rule.id.as_str()) {
            return Err(ParseError::new(
                l,
                c,
                ParseErrorKind::DuplicateRuleId,
                format!("rule id {} used twice", rule.id),
            ));
        }
    }

    // Predicate arities must agree across the whole program.
    let mut arities: HashMap<&str, usize> = HashMap::new();
    for (rule, &(l, c)) in rules.iter().zip(&positions) {
        let mut atoms: Vec<(&str, usize)> =
            vec![(rule.head.predicate.as_str(), rule.head.args.len())];
        for lit in &rule.body {
            if let BodyLiteral::Positive(a) | BodyLiteral::Negated(a) = lit {
                atoms.push((a.predicate.as_str(), a.args.len()));
            }
        }
        for (pred, arity) in atoms {
            match arities.insert(pred, arity) {
                Some(previous) if previous != arity => {
                    return Err(ParseError::new(
                        l,
                        c,
                        ParseErrorKind::ArityConflict,
                        format!("predicate {pred} used with arities {previous} and {arity}"),
                    ))
                }
                _ => {}
            }
        }
    }

    for (rule, &(l, c)) in rules.iter().zip(&positions) {
        check_rule_safety(rule, l, c)?;
    }

    let strata = stratify_rules(&rules).map_err(|msg| {
        ParseError::new(1, 1, ParseErrorKind::Unstratifiable, msg)
    })?;

    Ok(Program { rules, strata })
}

fn parse_rule(cur: &mut Cursor, index: usize) -> Result<Rule, ParseError> {
    // Optional `label:` prefix.
    let mut id = format!("r{}", index + 1);
    if let (Some(Tok::LIdent(name)), Some(Tok::Sym(":"))) = (cur.peek(), cur.peek_at(1)) {
        if !RESERVED.contains(&name.as_str()) {
            id = name.clone();
            cur.next();
            cur.next();
        }
    }

    let mut body = Vec::new();
    loop {
        body.push(parse_body_literal(cur)?);
        if cur.eat_sym(",") {
            continue;
        }
        cur.expect_sym("->")?;
        break;
    }

    let (head, existentials) = parse_head(cur)?;
    cur.expect_sym(".")?;
    Ok(Rule { id, body, head, existentials })
}

fn parse_body_literal(cur: &mut Cursor) -> Result<BodyLiteral, ParseError> {
    let (l, c) = cur.here();
    match cur.peek() {
        Some(Tok::LIdent(kw)) if kw == "not" => {
            cur.next();
            let atom = parse_atom(cur, false)?.0;
            Ok(BodyLiteral::Negated(atom))
        }
        Some(Tok::UIdent(_)) => Ok(BodyLiteral::Positive(parse_atom(cur, false)?.0)),
        Some(Tok::LIdent(_)) if cur.peek_at(1) == Some(&Tok::Sym("=")) => {
            let target = match cur.next().unwrap().tok {
                Tok::LIdent(v) => v,
                _ => unreachable!(),
            };
            if RESERVED.contains(&target.as_str()) {
                return Err(syntax(l, c, format!("`{target}` is reserved")));
            }
            cur.expect_sym("=")?;
            let source = if let Some(Tok::LIdent(name)) = cur.peek() {
                match (AggFunc::parse(name), cur.peek_at(1)) {
                    (Some(func), Some(Tok::Sym("("))) => {
                        cur.next();
                        cur.expect_sym("(")?;
                        let argument = parse_expr(cur)?;
                        cur.expect_sym(")")?;
                        AssignSource::Aggregate(AggregateExpr { func, argument })
                    }
                    _ => AssignSource::Arith(parse_expr(cur)?),
                }
            } else {
                AssignSource::Arith(parse_expr(cur)?)
            };
            Ok(BodyLiteral::Assignment(target, source))
        }
        Some(_) => {
            let left = parse_expr(cur)?;
            let (l, c) = cur.here();
            let op = match cur.next() {
                Some(Spanned { tok: Tok::Sym("<"), .. }) => CmpOp::Lt,
                Some(Spanned { tok: Tok::Sym(">"), .. }) => CmpOp::Gt,
                Some(Spanned { tok: Tok::Sym("<="), .. }) => CmpOp::Le,
                Some(Spanned { tok: Tok::Sym(">="), .. }) => CmpOp::Ge,
                Some(Spanned { tok: Tok::Sym("=="), .. }) => CmpOp::Eq,
                Some(Spanned { tok: Tok::Sym("!="), .. }) => CmpOp::Ne,
                Some(t) => {
                    return Err(syntax(
                        l,
                        c,
                        format!("expected comparison operator, found {}", t.tok.describe()),
                    ))
                }
                None => return Err(syntax(l, c, "expected comparison operator")),
            };
            let right = parse_expr(cur)?;
            Ok(BodyLiteral::Comparison(left, op, right))
        }
        None => Err(syntax(l, c, "expected a body literal")),
    }
}

/// Parses `Pred(term, ...)`. With `allow_existential`, `?v` terms are
/// collected into the returned set.
fn parse_atom(cur: &mut Cursor, allow_existential: bool) -> Result<(Atom, BTreeSet<String>), ParseError> {
    let (l, c) = cur.here();
    let predicate = match cur.next() {
        Some(Spanned { tok: Tok::UIdent(p), .. }) => p,
        Some(t) => {
            return Err(syntax(l, c, format!("expected predicate, found {}", t.tok.describe())))
        }
        None => return Err(syntax(l, c, "expected predicate")),
    };
    cur.expect_sym("(")?;
    let mut args = Vec::new();
    let mut existentials = BTreeSet::new();
    if !cur.eat_sym(")") {
        loop {
            let (l, c) = cur.here();
            if cur.eat_sym("?") {
                if !allow_existential {
                    return Err(syntax(l, c, "existential marker `?` is only allowed in rule heads"));
                }
                match cur.next() {
                    Some(Spanned { tok: Tok::LIdent(v), .. }) => {
                        if RESERVED.contains(&v.as_str()) {
                            return Err(syntax(l, c, format!("`{v}` is reserved")));
                        }
                        existentials.insert(v.clone());
                        args.push(Term::Var(v));
                    }
                    _ => return Err(syntax(l, c, "expected variable after `?`")),
                }
            } else {
                args.push(parse_simple_term(cur)?);
            }
            if cur.eat_sym(",") {
                continue;
            }
            cur.expect_sym(")")?;
            break;
        }
    }
    Ok((Atom { predicate, args }, existentials))
}

fn parse_head(cur: &mut Cursor) -> Result<(Atom, BTreeSet<String>), ParseError> {
    parse_atom(cur, true)
}

/// A variable or constant; no expressions inside atoms.
fn parse_simple_term(cur: &mut Cursor) -> Result<Term, ParseError> {
    let (l, c) = cur.here();
    match cur.next() {
        Some(Spanned { tok: Tok::LIdent(v), .. }) => match v.as_str() {
            "true" => Ok(Term::Val(Value::Bool(true))),
            "false" => Ok(Term::Val(Value::Bool(false))),
            _ if RESERVED.contains(&v.as_str()) => {
                Err(syntax(l, c, format!("`{v}` is reserved")))
            }
            _ => Ok(Term::Var(v)),
        },
        Some(Spanned { tok: Tok::Int(i), .. }) => Ok(Term::Val(Value::Int(i))),
        Some(Spanned { tok: Tok::Dec(d), .. }) => Ok(Term::Val(Value::decimal(d))),
        Some(Spanned { tok: Tok::Str(s), .. }) => Ok(Term::Val(Value::Str(s))),
        Some(Spanned { tok: Tok::Sym("-"), .. }) => match cur.next() {
            Some(Spanned { tok: Tok::Int(i), .. }) => Ok(Term::Val(Value::Int(-i))),
            Some(Spanned { tok: Tok::Dec(d), .. }) => {
                Ok(Term::Val(Value::decimal(Decimal::from_micros(-d.micros()))))
            }
            _ => Err(syntax(l, c, "expected a number after `-`")),
        },
        Some(t) => Err(syntax(l, c, format!("expected term, found {}", t.tok.describe()))),
        None => Err(syntax(l, c, "expected term")),
    }
}

fn parse_expr(cur: &mut Cursor) -> Result<Term, ParseError> {
    let mut left = parse_mul(cur)?;
    loop {
        if cur.eat_sym("+") {
            let right = parse_mul(cur)?;
            left = Term::Expr(crate::model::ArithOp::Add, Box::new(left), Box::new(right));
        } else if cur.eat_sym("-") {
            let right = parse_mul(cur)?;
            left = Term::Expr(crate::model::ArithOp::Sub, Box::new(left), Box::new(right));
        } else {
            return Ok(left);
        }
    }
}

fn parse_mul(cur: &mut Cursor) -> Result<Term, ParseError> {
    let mut left = parse_primary(cur)?;
    loop {
        if cur.eat_sym("*") {
            let right = parse_primary(cur)?;
            left = Term::Expr(crate::model::ArithOp::Mul, Box::new(left), Box::new(right));
        } else if cur.eat_sym("/") {
            let right = parse_primary(cur)?;
            left = Term::Expr(crate::model::ArithOp::Div, Box::new(left), Box::new(right));
        } else {
            return Ok(left);
        }
    }
}

fn parse_primary(cur: &mut Cursor) -> Result<Term, ParseError> {
    if cur.eat_sym("(") {
        let inner = parse_expr(cur)?;
        cur.expect_sym(")")?;
        return Ok(inner);
    }
    parse_simple_term(cur)
}

// ---------------------------------------------------------------------------
// Rule safety
// ---------------------------------------------------------------------------

fn check_rule_safety(rule: &Rule, line: u32, col: u32) -> Result<(), ParseError> {
    let err = |kind, msg: String| Err(ParseError::new(line, col, kind, msg));

    let mut positive_vars: BTreeSet<&str> = BTreeSet::new();
    for atom in rule.positive_atoms() {
        positive_vars.extend(atom.variables());
    }

    let mut aggregates = 0usize;
    let mut assigned: BTreeSet<&str> = BTreeSet::new();
    let mut seen_vars: BTreeSet<&str> = BTreeSet::new();

    for lit in &rule.body {
        match lit {
            BodyLiteral::Positive(atom) => {
                seen_vars.extend(atom.variables());
            }
            BodyLiteral::Negated(atom) => {
                for v in atom.variables() {
                    if !positive_vars.contains(v) && !assigned.contains(v) {
                        return err(
                            ParseErrorKind::UnsafeNegation,
                            format!(
                                "variable {v} of a negated atom in rule {} is not bound by a positive atom",
                                rule.id
                            ),
                        );
                    }
                }
                seen_vars.extend(atom.variables());
            }
            BodyLiteral::Comparison(l, _, r) => {
                for v in l.variables().union(&r.variables()) {
                    if !positive_vars.contains(v) && !assigned.contains(v) {
                        return err(
                            ParseErrorKind::UnboundVariable,
                            format!("variable {v} in a comparison of rule {} is unbound", rule.id),
                        );
                    }
                }
                seen_vars.extend(l.variables());
                seen_vars.extend(r.variables());
            }
            BodyLiteral::Assignment(target, source) => {
                if seen_vars.contains(target.as_str()) {
                    return err(
                        ParseErrorKind::UnboundVariable,
                        format!(
                            "assignment target {target} already occurs earlier in the body of rule {}",
                            rule.id
                        ),
                    );
                }
                match source {
                    AssignSource::Arith(expr) => {
                        for v in expr.variables() {
                            if !positive_vars.contains(v) && !assigned.contains(v) {
                                return err(
                                    ParseErrorKind::UnboundVariable,
                                    format!(
                                        "variable {v} in assignment of rule {} is unbound",
                                        rule.id
                                    ),
                                );
                            }
                        }
                        seen_vars.extend(expr.variables());
                    }
                    AssignSource::Aggregate(agg) => {
                        aggregates += 1;
                        if aggregates > 1 {
                            return err(
                                ParseErrorKind::Aggregate,
                                format!("rule {} has more than one aggregate", rule.id),
                            );
                        }
                        for v in agg.argument.variables() {
                            if !positive_vars.contains(v) {
                                return err(
                                    ParseErrorKind::Aggregate,
                                    format!(
                                        "aggregate argument variable {v} in rule {} is not bound by a positive atom",
                                        rule.id
                                    ),
                                );
                            }
                        }
                        seen_vars.extend(agg.argument.variables());
                    }
                }
                let target_ref: &str = target;
                assigned.insert(target_ref);
                seen_vars.insert(target_ref);
            }
        }
    }

    // Aggregate targets may only flow into the head.
    if let Some((target, _)) = rule.aggregate() {
        for lit in &rule.body {
            let uses = match lit {
                BodyLiteral::Comparison(l, _, r) => {
                    l.variables().contains(target) || r.variables().contains(target)
                }
                BodyLiteral::Assignment(_, AssignSource::Arith(e)) => {
                    e.variables().contains(target)
                }
                _ => false,
            };
            if uses {
                return err(
                    ParseErrorKind::Aggregate,
                    format!(
                        "aggregate target {target} of rule {} may only appear in the head",
                        rule.id
                    ),
                );
            }
        }
        if !rule.existentials.is_empty() {
            return err(
                ParseErrorKind::Aggregate,
                format!("rule {} mixes an aggregate with existential head variables", rule.id),
            );
        }
    }

    for v in rule.head.variables() {
        if rule.existentials.contains(v) {
            if positive_vars.contains(v) || assigned.contains(v) {
                return err(
                    ParseErrorKind::UnboundHeadVariable,
                    format!(
                        "existential variable {v} of rule {} also occurs in the body",
                        rule.id
                    ),
                );
            }
            continue;
        }
        if !positive_vars.contains(v) && !assigned.contains(v) {
            return err(
                ParseErrorKind::UnboundHeadVariable,
                format!("head variable {v} of rule {} is unbound", rule.id),
            );
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Facts parser
// ---------------------------------------------------------------------------

/// Parses fact source text into an extensional [`FactStore`]. Duplicates
/// collapse; insertion order is retained.
pub fn parse_facts(text: &str) -> Result<FactStore, ParseError> {
    let mut cur = Cursor::new(text)?;
    let mut store = FactStore::new();
    while !cur.is_done() {
        let (l, c) = cur.here();
        let atom = parse_ground_atom_inner(&mut cur)?;
        cur.expect_sym(".")?;
        store.insert(atom, Origin::Extensional).map_err(|e| {
            ParseError::new(l, c, ParseErrorKind::ArityConflict, e.to_string())
        })?;
    }
    Ok(store)
}

fn parse_ground_atom_inner(cur: &mut Cursor) -> Result<GroundAtom, ParseError> {
    let (l, c) = cur.here();
    let predicate = match cur.next() {
        Some(Spanned { tok: Tok::UIdent(p), .. }) => p,
        Some(t) => {
            return Err(syntax(l, c, format!("expected predicate, found {}", t.tok.describe())))
        }
        None => return Err(syntax(l, c, "expected predicate")),
    };
    cur.expect_sym("(")?;
    let mut args = Vec::new();
    if !cur.eat_sym(")") {
        loop {
            args.push(parse_value(cur)?);
            if cur.eat_sym(",") {
                continue;
            }
            cur.expect_sym(")")?;
            break;
        }
    }
    Ok(GroundAtom { predicate, args })
}

fn parse_value(cur: &mut Cursor) -> Result<Value, ParseError> {
    let (l, c) = cur.here();
    match cur.next() {
        Some(Spanned { tok: Tok::Int(i), .. }) => Ok(Value::Int(i)),
        Some(Spanned { tok: Tok::Dec(d), .. }) => Ok(Value::decimal(d)),
        Some(Spanned { tok: Tok::Str(s), .. }) => Ok(Value::Str(s)),
        Some(Spanned { tok: Tok::LIdent(v), .. }) => match v.as_str() {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(syntax(l, c, format!("expected constant, found `{v}`"))),
        },
        Some(Spanned { tok: Tok::Sym("-"), .. }) => match cur.next() {
            Some(Spanned { tok: Tok::Int(i), .. }) => Ok(Value::Int(-i)),
            Some(Spanned { tok: Tok::Dec(d), .. }) => {
                Ok(Value::decimal(Decimal::from_micros(-d.micros())))
            }
            _ => Err(syntax(l, c, "expected a number after `-`")),
        },
        Some(t) => Err(syntax(l, c, format!("expected constant, found {}", t.tok.describe()))),
        None => Err(syntax(l, c, "expected constant")),
    }
}

/// Parses one ground atom in literal syntax, accepting `_:N` labeled nulls.
/// Used when reading chase dumps back.
pub fn parse_ground_atom(text: &str) -> Result<GroundAtom, ParseError> {
    let text = text.trim();
    // Null syntax `_:N` is not produced by the main lexer; substitute it
    // with a sentinel string pass.
    let pieces = split_null_aware(text)?;
    let mut cur = Cursor::new(&pieces.rewritten)?;
    let mut atom = parse_ground_atom_inner(&mut cur)?;
    if !cur.is_done() {
        let (l, c) = cur.here();
        return Err(syntax(l, c, "trailing input after atom"));
    }
    for arg in &mut atom.args {
        if let Value::Str(s) = arg {
            if let Some(rest) = s.strip_prefix(NULL_SENTINEL) {
                let id: u64 = rest.parse().map_err(|_| {
                    syntax(1, 1, format!("bad labeled null `{s}`"))
                })?;
                *arg = Value::Null(id);
            }
        }
    }
    Ok(atom)
}

/// Parses one value in literal syntax, accepting `_:N` labeled nulls.
pub fn parse_value_literal(text: &str) -> Result<Value, ParseError> {
    let text = text.trim();
    if let Some(rest) = text.strip_prefix("_:") {
        let id: u64 = rest
            .parse()
            .map_err(|_| syntax(1, 1, format!("bad labeled null `{text}`")))?;
        return Ok(Value::Null(id));
    }
    let mut cur = Cursor::new(text)?;
    let value = parse_value(&mut cur)?;
    if !cur.is_done() {
        let (l, c) = cur.here();
        return Err(syntax(l, c, "trailing input after value"));
    }
    Ok(value)
}

const NULL_SENTINEL: &str = "\u{1}null:";

struct NullRewrite {
    rewritten: String,
}

/// Replaces `_:N` occurrences outside string literals with quoted sentinel
/// strings so the ordinary lexer can handle them.
fn split_null_aware(text: &str) -> Result<NullRewrite, ParseError> {
    let mut out = String::with_capacity(text.len());
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut in_str = false;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if in_str {
            out.push(c);
            if c == '\\' && i + 1 < bytes.len() {
                out.push(bytes[i + 1] as char);
                i += 2;
                continue;
            }
            if c == '"' {
                in_str = false;
            }
            i += 1;
            continue;
        }
        if c == '"' {
            in_str = true;
            out.push(c);
            i += 1;
            continue;
        }
        if c == '_' && i + 1 < bytes.len() && bytes[i + 1] == b':' {
            let mut j = i + 2;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            if j == i + 2 {
                return Err(syntax(1, 1, "bad labeled null"));
            }
            out.push('"');
            out.push_str(NULL_SENTINEL);
            out.push_str(&text[i + 2..j]);
            out.push('"');
            i = j;
            continue;
        }
        out.push(c);
        i += 1;
    }
    Ok(NullRewrite { rewritten: out })
}

// ---------------------------------------------------------------------------
// Glossary parser
// ---------------------------------------------------------------------------

/// Parses glossary source text. Entries read
/// `Pred(a, b): "template {a} ... {b}"` followed by optional
/// `? slot "question"` and `! slot "answer"` clauses.
pub fn parse_glossary(text: &str) -> Result<Glossary, ParseError> {
    let mut cur = Cursor::new(text)?;
    let mut glossary = Glossary::new();
    while !cur.is_done() {
        let (l, c) = cur.here();
        let predicate = match cur.next() {
            Some(Spanned { tok: Tok::UIdent(p), .. }) => p,
            Some(t) => {
                return Err(syntax(l, c, format!("expected predicate, found {}", t.tok.describe())))
            }
            None => break,
        };
        cur.expect_sym("(")?;
        let mut slots = Vec::new();
        if !cur.eat_sym(")") {
            loop {
                let (sl, sc) = cur.here();
                match cur.next() {
                    Some(Spanned { tok: Tok::LIdent(s), .. }) => slots.push(s),
                    Some(t) => {
                        return Err(syntax(
                            sl,
                            sc,
                            format!("expected slot name, found {}", t.tok.describe()),
                        ))
                    }
                    None => return Err(syntax(sl, sc, "expected slot name")),
                }
                if cur.eat_sym(",") {
                    continue;
                }
                cur.expect_sym(")")?;
                break;
            }
        }
        cur.expect_sym(":")?;
        let (tl, tc) = cur.here();
        let template = match cur.next() {
            Some(Spanned { tok: Tok::Str(s), .. }) => s,
            Some(t) => {
                return Err(syntax(tl, tc, format!("expected template string, found {}", t.tok.describe())))
            }
            None => return Err(syntax(tl, tc, "expected template string")),
        };

        let mut wh = BTreeMap::new();
        let mut answers = BTreeMap::new();
        loop {
            let is_wh = match cur.peek() {
                Some(Tok::Sym("?")) => true,
                Some(Tok::Sym("!")) => false,
                _ => break,
            };
            cur.next();
            let (sl, sc) = cur.here();
            let slot = match cur.next() {
                Some(Spanned { tok: Tok::LIdent(s), .. }) => s,
                Some(t) => {
                    return Err(syntax(sl, sc, format!("expected slot name, found {}", t.tok.describe())))
                }
                None => return Err(syntax(sl, sc, "expected slot name")),
            };
            let (pl, pc) = cur.here();
            let phrase = match cur.next() {
                Some(Spanned { tok: Tok::Str(s), .. }) => s,
                Some(t) => {
                    return Err(syntax(pl, pc, format!("expected phrase string, found {}", t.tok.describe())))
                }
                None => return Err(syntax(pl, pc, "expected phrase string")),
            };
            let map = if is_wh { &mut wh } else { &mut answers };
            if map.insert(slot.clone(), phrase).is_some() {
                return Err(ParseError::new(
                    sl,
                    sc,
                    ParseErrorKind::DuplicateEntry,
                    format!("slot {slot} of {predicate} has two {} phrases", if is_wh { "question" } else { "answer" }),
                ));
            }
        }

        glossary
            .insert(GlossaryEntry { predicate, slots, template, wh, answers })
            .map_err(|e| located(e, l, c))?;
    }
    Ok(glossary)
}
