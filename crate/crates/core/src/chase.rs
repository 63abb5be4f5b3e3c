//! The chase: fixpoint evaluation with full per-step provenance.
//!
//! Evaluation is deterministic by contract: strata in order, semi-naive
//! rounds within a stratum, rules in program order within a round, and
//! matches in lexicographic fact-id order of the body binding. Every derived
//! fact keeps exactly one producing step (first derivation wins), so steps
//! and derived facts are in bijection and a dump can be replayed.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::ChaseError;
use crate::model::{
    AggFunc, AssignSource, Atom, BodyLiteral, CmpOp, FactStore, GroundAtom, Origin, Program,
    Rule, Term, Value,
};

/// Default ceiling on recorded steps; guards against existential or
/// arithmetic runaway.
pub const DEFAULT_STEP_BOUND: usize = 10_000;

/// Tunables for a reasoning session.
#[derive(Clone, Copy, Debug)]
pub struct ReasonOptions {
    pub step_bound: usize,
}

impl Default for ReasonOptions {
    fn default() -> Self {
        ReasonOptions { step_bound: DEFAULT_STEP_BOUND }
    }
}

/// One rule activation: which rule fired, under which substitution, on which
/// body facts, producing which fact.
#[derive(Clone, Debug, PartialEq)]
pub struct ChaseStep {
    pub step_id: usize,
    pub rule_id: String,
    /// Bindings for every body variable, assignment target, and existential
    /// head variable.
    pub substitution: BTreeMap<String, Value>,
    /// One fact id per positive body atom, in body order.
    pub body_fact_ids: Vec<usize>,
    pub derived_fact_id: usize,
}

/// The chase result: ordered steps plus the saturated store.
#[derive(Clone, Debug)]
pub struct Chase {
    pub steps: Vec<ChaseStep>,
    pub store: FactStore,
}

/// Mutable session state threaded through rule applications: labeled-null
/// allocation and per-group running aggregate values.
#[derive(Clone, Debug, Default)]
pub struct SessionState {
    next_null: u64,
    aggregates: HashMap<(String, Vec<Value>), Value>,
}

impl SessionState {
    fn fresh_null(&mut self) -> Value {
        let id = self.next_null;
        self.next_null += 1;
        Value::Null(id)
    }

    fn update(
        &mut self,
        rule_id: &str,
        key: Vec<Value>,
        func: AggFunc,
        arg: &Value,
    ) -> Result<Value, ChaseError> {
        if func != AggFunc::Count && !arg.is_numeric() {
            return Err(ChaseError::Aggregate(format!(
                "{} needs a numeric argument, got {}",
                func.name(),
                arg.display_text()
            )));
        }
        let slot = self.aggregates.entry((rule_id.to_string(), key));
        let next = match slot {
            std::collections::hash_map::Entry::Vacant(v) => {
                let initial = match func {
                    AggFunc::Count => Value::Int(1),
                    _ => arg.clone(),
                };
                v.insert(initial.clone());
                initial
            }
            std::collections::hash_map::Entry::Occupied(mut o) => {
                let current = o.get().clone();
                let next = match func {
                    AggFunc::Sum => arith(crate::model::ArithOp::Add, &current, arg)?,
                    AggFunc::Count => arith(
                        crate::model::ArithOp::Add,
                        &current,
                        &Value::Int(1),
                    )?,
                    AggFunc::Min => {
                        if compare(arg, CmpOp::Lt, &current)? {
                            arg.clone()
                        } else {
                            current
                        }
                    }
                    AggFunc::Max => {
                        if compare(arg, CmpOp::Gt, &current)? {
                            arg.clone()
                        } else {
                            current
                        }
                    }
                };
                o.insert(next.clone());
                next
            }
        };
        Ok(next)
    }
}

// ---------------------------------------------------------------------------
// Expression evaluation and comparison
// ---------------------------------------------------------------------------

/// Evaluates an arithmetic term under a substitution. Exact scale-6
/// fixed-point arithmetic; integral results stay integers.
pub fn evaluate(term: &Term, subst: &BTreeMap<String, Value>) -> Result<Value, ChaseError> {
    match term {
        Term::Var(v) => subst
            .get(v)
            .cloned()
            .ok_or_else(|| ChaseError::UnboundVariable(v.clone())),
        Term::Val(v) => Ok(v.clone()),
        Term::Expr(op, l, r) => {
            let a = evaluate(l, subst)?;
            let b = evaluate(r, subst)?;
            arith(*op, &a, &b)
        }
    }
}

fn arith(op: crate::model::ArithOp, a: &Value, b: &Value) -> Result<Value, ChaseError> {
    use crate::decimal::Decimal;
    use crate::model::ArithOp;
    if matches!(a, Value::Null(_)) || matches!(b, Value::Null(_)) {
        return Err(ChaseError::NullOperand);
    }
    if !a.is_numeric() || !b.is_numeric() {
        return Err(ChaseError::NonNumericOperand);
    }
    // Pure integer add/sub/mul stays in i64; anything else goes through the
    // fixed-point path.
    if let (Value::Int(x), Value::Int(y)) = (a, b) {
        let r = match op {
            ArithOp::Add => x.checked_add(*y),
            ArithOp::Sub => x.checked_sub(*y),
            ArithOp::Mul => x.checked_mul(*y),
            ArithOp::Div => None,
        };
        if let Some(r) = r {
            return Ok(Value::Int(r));
        }
        if op != ArithOp::Div {
            return Err(ChaseError::Overflow);
        }
    }
    let to_dec = |v: &Value| match v {
        Value::Int(i) => Decimal::from_int(*i),
        Value::Dec(d) => *d,
        _ => unreachable!(),
    };
    let (x, y) = (to_dec(a), to_dec(b));
    let r = match op {
        ArithOp::Add => x.checked_add(y).ok_or(ChaseError::Overflow)?,
        ArithOp::Sub => x.checked_sub(y).ok_or(ChaseError::Overflow)?,
        ArithOp::Mul => x.checked_mul(y).ok_or(ChaseError::Overflow)?,
        ArithOp::Div => {
            if y.micros() == 0 {
                return Err(ChaseError::DivisionByZero);
            }
            x.checked_div(y).ok_or(ChaseError::Overflow)?
        }
    };
    Ok(Value::decimal(r))
}

/// Compares two ground values. Numerics compare across int/decimal; equality
/// works within any one kind; everything else is a type error.
pub fn compare(left: &Value, op: CmpOp, right: &Value) -> Result<bool, ChaseError> {
    use std::cmp::Ordering;
    let ord = match (left, right) {
        (a, b) if a.is_numeric() && b.is_numeric() => {
            a.as_micros().unwrap().cmp(&b.as_micros().unwrap())
        }
        (Value::Str(a), Value::Str(b)) => {
            return eq_only(op, a == b, "strings support only == and !=")
        }
        (Value::Bool(a), Value::Bool(b)) => {
            return eq_only(op, a == b, "booleans support only == and !=")
        }
        (Value::Null(a), Value::Null(b)) => {
            return eq_only(op, a == b, "labeled nulls support only == and !=")
        }
        (a, b) => {
            return Err(ChaseError::ComparisonType(format!(
                "cannot compare {} with {}",
                a.display_text(),
                b.display_text()
            )))
        }
    };
    Ok(match op {
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
    })
}

fn eq_only(op: CmpOp, eq: bool, msg: &str) -> Result<bool, ChaseError> {
    match op {
        CmpOp::Eq => Ok(eq),
        CmpOp::Ne => Ok(!eq),
        _ => Err(ChaseError::ComparisonType(msg.into())),
    }
}

// ---------------------------------------------------------------------------
// Rule compilation
// ---------------------------------------------------------------------------

enum Guard<'r> {
    Negated(&'r Atom),
    Comparison(&'r Term, CmpOp, &'r Term),
    Assignment(&'r str, &'r Term),
}

struct CompiledRule<'r> {
    rule: &'r Rule,
    atoms: Vec<&'r Atom>,
    /// Guard indices runnable once the first `level` atoms are bound.
    schedule: Vec<Vec<usize>>,
    guards: Vec<Guard<'r>>,
    aggregate: Option<(&'r str, &'r crate::model::AggregateExpr)>,
    group_vars: Vec<&'r str>,
}

fn compile(rule: &Rule) -> CompiledRule<'_> {
    let atoms = rule.positive_atoms();
    let mut guards = Vec::new();
    for lit in &rule.body {
        match lit {
            BodyLiteral::Negated(a) => guards.push(Guard::Negated(a)),
            BodyLiteral::Comparison(l, op, r) => guards.push(Guard::Comparison(l, *op, r)),
            BodyLiteral::Assignment(t, AssignSource::Arith(e)) => {
                guards.push(Guard::Assignment(t, e))
            }
            _ => {}
        }
    }

    let mut schedule: Vec<Vec<usize>> = vec![Vec::new(); atoms.len() + 1];
    let mut bound: BTreeSet<&str> = BTreeSet::new();
    let mut placed = vec![false; guards.len()];
    for level in 0..=atoms.len() {
        if level > 0 {
            bound.extend(atoms[level - 1].variables());
        }
        loop {
            let mut progress = false;
            for (gi, guard) in guards.iter().enumerate() {
                if placed[gi] {
                    continue;
                }
                let ready = match guard {
                    Guard::Negated(a) => a.variables().iter().all(|v| bound.contains(v)),
                    Guard::Comparison(l, _, r) => l
                        .variables()
                        .iter()
                        .chain(r.variables().iter())
                        .all(|v| bound.contains(v)),
                    Guard::Assignment(_, e) => {
                        e.variables().iter().all(|v| bound.contains(v))
                    }
                };
                if ready {
                    placed[gi] = true;
                    schedule[level].push(gi);
                    if let Guard::Assignment(t, _) = guard {
                        bound.insert(t);
                    }
                    progress = true;
                }
            }
            if !progress {
                break;
            }
        }
    }

    CompiledRule {
        atoms,
        schedule,
        guards,
        aggregate: rule.aggregate(),
        group_vars: rule.group_variables(),
        rule,
    }
}

// ---------------------------------------------------------------------------
// Rule application
// ---------------------------------------------------------------------------

enum DeltaTest<'a> {
    /// Facts with id at or above this threshold count as new.
    FromId(usize),
    /// Explicit set of new fact ids.
    Set(&'a BTreeSet<usize>),
}

impl DeltaTest<'_> {
    fn admits(&self, body_ids: &[usize]) -> bool {
        match self {
            DeltaTest::FromId(start) => body_ids.iter().any(|id| id >= start),
            DeltaTest::Set(set) => body_ids.iter().any(|id| set.contains(id)),
        }
    }
}

struct RuleRun<'a, 'r> {
    compiled: &'a CompiledRule<'r>,
    visible: usize,
    delta: DeltaTest<'a>,
    /// Whether a rule with no positive atoms may fire in this pass.
    allow_empty_body: bool,
    step_bound: usize,
}

fn run_guards(
    compiled: &CompiledRule,
    level: usize,
    subst: &mut BTreeMap<String, Value>,
    store: &FactStore,
) -> Result<bool, ChaseError> {
    for &gi in &compiled.schedule[level] {
        match &compiled.guards[gi] {
            Guard::Negated(atom) => {
                let ground = ground_atom(atom, subst, None)?;
                if store.contains(&ground) {
                    return Ok(false);
                }
            }
            Guard::Comparison(l, op, r) => {
                let a = evaluate(l, subst)?;
                let b = evaluate(r, subst)?;
                if !compare(&a, *op, &b)? {
                    return Ok(false);
                }
            }
            Guard::Assignment(target, expr) => {
                let v = evaluate(expr, subst)?;
                subst.insert(target.to_string(), v);
            }
        }
    }
    Ok(true)
}

/// Grounds an atom under a substitution. `existentials` supplies fresh nulls
/// for marked head variables.
fn ground_atom(
    atom: &Atom,
    subst: &BTreeMap<String, Value>,
    existentials: Option<(&BTreeSet<String>, &mut BTreeMap<String, Value>)>,
) -> Result<GroundAtom, ChaseError> {
    let mut args = Vec::with_capacity(atom.args.len());
    let mut fresh = existentials;
    for term in &atom.args {
        match term {
            Term::Val(v) => args.push(v.clone()),
            Term::Var(v) => {
                if let Some(value) = subst.get(v) {
                    args.push(value.clone());
                } else if let Some((exist, extra)) = fresh.as_mut() {
                    if exist.contains(v) {
                        if let Some(value) = extra.get(v) {
                            args.push(value.clone());
                        } else {
                            return Err(ChaseError::UnboundVariable(v.clone()));
                        }
                    } else {
                        return Err(ChaseError::UnboundVariable(v.clone()));
                    }
                } else {
                    return Err(ChaseError::UnboundVariable(v.clone()));
                }
            }
            Term::Expr(..) => return Err(ChaseError::NonNumericOperand),
        }
    }
    Ok(GroundAtom { predicate: atom.predicate.clone(), args })
}

fn join_level(
    run: &RuleRun,
    level: usize,
    subst: BTreeMap<String, Value>,
    body_ids: &mut Vec<usize>,
    store: &mut FactStore,
    session: &mut SessionState,
    steps: &mut Vec<ChaseStep>,
) -> Result<(), ChaseError> {
    let compiled = run.compiled;
    if level == compiled.atoms.len() {
        return complete_match(run, subst, body_ids, store, session, steps);
    }
    let atom = compiled.atoms[level];
    // Probe the most convenient index: the first argument position whose
    // value is already known.
    let mut probe: Option<(usize, Value)> = None;
    for (pos, term) in atom.args.iter().enumerate() {
        match term {
            Term::Val(v) => {
                probe = Some((pos, v.clone()));
                break;
            }
            Term::Var(v) => {
                if let Some(value) = subst.get(v) {
                    probe = Some((pos, value.clone()));
                    break;
                }
            }
            Term::Expr(..) => {}
        }
    }
    let candidates: Vec<usize> = store
        .candidates(&atom.predicate, probe.as_ref().map(|(p, v)| (*p, v)))
        .iter()
        .copied()
        .filter(|id| *id < run.visible)
        .collect();
    for id in candidates {
        let fact_args = &store.get(id).expect("candidate id in range").atom.args;
        if fact_args.len() != atom.args.len() {
            continue;
        }
        let mut extended = subst.clone();
        let mut ok = true;
        for (term, value) in atom.args.iter().zip(fact_args.iter()) {
            match term {
                Term::Val(v) => {
                    if v != value {
                        ok = false;
                        break;
                    }
                }
                Term::Var(v) => match extended.get(v) {
                    Some(bound) => {
                        if bound != value {
                            ok = false;
                            break;
                        }
                    }
                    None => {
                        extended.insert(v.clone(), value.clone());
                    }
                },
                Term::Expr(..) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        body_ids.push(id);
        let mut guarded = extended;
        if run_guards(compiled, level + 1, &mut guarded, store)? {
            join_level(run, level + 1, guarded, body_ids, store, session, steps)?;
        }
        body_ids.pop();
    }
    Ok(())
}

fn complete_match(
    run: &RuleRun,
    mut subst: BTreeMap<String, Value>,
    body_ids: &[usize],
    store: &mut FactStore,
    session: &mut SessionState,
    steps: &mut Vec<ChaseStep>,
) -> Result<(), ChaseError> {
    let compiled = run.compiled;
    if compiled.atoms.is_empty() && !run.allow_empty_body {
        return Ok(());
    }
    if !compiled.atoms.is_empty() && !run.delta.admits(body_ids) {
        return Ok(());
    }

    if let Some((target, agg)) = compiled.aggregate {
        let key: Vec<Value> = compiled
            .group_vars
            .iter()
            .map(|v| {
                subst
                    .get(*v)
                    .cloned()
                    .ok_or_else(|| ChaseError::UnboundVariable(v.to_string()))
            })
            .collect::<Result<_, _>>()?;
        let arg = evaluate(&agg.argument, &subst)?;
        let running = session.update(&compiled.rule.id, key, agg.func, &arg)?;
        subst.insert(target.to_string(), running);
    }

    let mut fresh: BTreeMap<String, Value> = BTreeMap::new();
    for v in &compiled.rule.existentials {
        fresh.insert(v.clone(), session.fresh_null());
    }
    let head = ground_atom(
        &compiled.rule.head,
        &subst,
        Some((&compiled.rule.existentials, &mut fresh)),
    )?;
    for (v, value) in fresh {
        subst.insert(v, value);
    }

    let step_id = steps.len();
    let (fact_id, new) = store.insert(head, Origin::Derived(step_id))?;
    if !new {
        return Ok(());
    }
    if step_id >= run.step_bound {
        return Err(ChaseError::StepBoundExceeded(run.step_bound));
    }
    steps.push(ChaseStep {
        step_id,
        rule_id: compiled.rule.id.clone(),
        substitution: subst,
        body_fact_ids: body_ids.to_vec(),
        derived_fact_id: fact_id,
    });
    Ok(())
}

/// Applies one rule semi-naively: returns every new step whose body uses at
/// least one fact from `delta` (ids into `store`). Steps are numbered from
/// zero within the returned batch and duplicate head facts are skipped.
pub fn apply_rule(
    rule: &Rule,
    store: &FactStore,
    delta: &BTreeSet<usize>,
    session: &mut SessionState,
) -> Result<Vec<ChaseStep>, ChaseError> {
    let compiled = compile(rule);
    let mut scratch = store.clone();
    let mut steps = Vec::new();
    let run = RuleRun {
        visible: scratch.len(),
        compiled: &compiled,
        delta: DeltaTest::Set(delta),
        allow_empty_body: true,
        step_bound: DEFAULT_STEP_BOUND,
    };
    let mut subst = BTreeMap::new();
    if run_guards(&compiled, 0, &mut subst, &scratch)? {
        let mut body_ids = Vec::new();
        join_level(&run, 0, subst, &mut body_ids, &mut scratch, session, &mut steps)?;
    }
    Ok(steps)
}

// ---------------------------------------------------------------------------
// The chase itself
// ---------------------------------------------------------------------------

/// Computes the chase of `program` over `data` to fixpoint.
pub fn reason(data: &FactStore, program: &Program) -> Result<Chase, ChaseError> {
    reason_with(data, program, ReasonOptions::default())
}

/// [`reason`] with explicit options.
pub fn reason_with(
    data: &FactStore,
    program: &Program,
    options: ReasonOptions,
) -> Result<Chase, ChaseError> {
    for (pred, arity) in program.arities() {
        if let Some(stored) = data.arity_of(pred) {
            if stored != arity {
                return Err(ChaseError::ArityMismatch {
                    predicate: pred.to_string(),
                    used: arity,
                    stored,
                });
            }
        }
    }

    let mut store = data.clone();
    let mut steps: Vec<ChaseStep> = Vec::new();
    let mut session = SessionState::default();
    let compiled: Vec<CompiledRule> = program.rules.iter().map(compile).collect();

    for stratum in 0..program.strata.len() {
        let in_stratum: Vec<&CompiledRule> = compiled
            .iter()
            .filter(|c| program.stratum_of(&c.rule.head.predicate) == stratum)
            .collect();
        if in_stratum.is_empty() {
            continue;
        }
        let mut delta_start = 0usize;
        let mut first_round = true;
        loop {
            let visible = store.len();
            for compiled_rule in &in_stratum {
                let run = RuleRun {
                    compiled: compiled_rule,
                    visible,
                    delta: DeltaTest::FromId(delta_start),
                    allow_empty_body: first_round,
                    step_bound: options.step_bound,
                };
                let mut subst = BTreeMap::new();
                if run_guards(compiled_rule, 0, &mut subst, &store)? {
                    let mut body_ids = Vec::new();
                    join_level(
                        &run,
                        0,
                        subst,
                        &mut body_ids,
                        &mut store,
                        &mut session,
                        &mut steps,
                    )?;
                }
            }
            if store.len() == visible {
                break;
            }
            delta_start = visible;
            first_round = false;
        }
    }

    Ok(Chase { steps, store })
}

/// Returns every step of the same rule and group that contributed to the
/// running aggregate value at `step`, oldest first and including `step`.
pub fn compose_back<'a>(
    step: &ChaseStep,
    chase_steps: &'a [ChaseStep],
    program: &Program,
) -> Result<Vec<&'a ChaseStep>, ChaseError> {
    let rule = program
        .rule_by_id(&step.rule_id)
        .ok_or_else(|| ChaseError::UnknownRule(step.rule_id.clone()))?;
    if rule.aggregate().is_none() {
        return Err(ChaseError::NotAggregateStep(step.step_id));
    }
    let group_vars = rule.group_variables();
    let key_of = |s: &ChaseStep| -> Result<Vec<Value>, ChaseError> {
        group_vars
            .iter()
            .map(|v| {
                s.substitution
                    .get(*v)
                    .cloned()
                    .ok_or_else(|| ChaseError::UnboundVariable(v.to_string()))
            })
            .collect()
    };
    let key = key_of(step)?;
    let mut out = Vec::new();
    for candidate in chase_steps {
        if candidate.step_id > step.step_id || candidate.rule_id != step.rule_id {
            continue;
        }
        if key_of(candidate)? == key {
            out.push(candidate);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Dump format and replay validation
// ---------------------------------------------------------------------------

/// One line of the chase dump.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChaseDumpLine {
    pub step: usize,
    pub rule: String,
    pub derived: String,
    pub body: Vec<usize>,
    pub subst: BTreeMap<String, String>,
}

/// Serializes a chase to one JSON object per line.
pub fn chase_to_jsonl(chase: &Chase) -> String {
    let mut out = String::new();
    for step in &chase.steps {
        let derived = chase
            .store
            .get(step.derived_fact_id)
            .map(|f| f.atom.print())
            .unwrap_or_default();
        let line = ChaseDumpLine {
            step: step.step_id,
            rule: step.rule_id.clone(),
            derived,
            body: step.body_fact_ids.clone(),
            subst: step
                .substitution
                .iter()
                .map(|(k, v)| (k.clone(), v.literal()))
                .collect(),
        };
        out.push_str(&serde_json::to_string(&line).expect("dump line serializes"));
        out.push('\n');
    }
    out
}

/// A dump line with its atom and values parsed back.
#[derive(Clone, Debug)]
pub struct ParsedDumpStep {
    pub step_id: usize,
    pub rule_id: String,
    pub derived: GroundAtom,
    pub body_fact_ids: Vec<usize>,
    pub substitution: BTreeMap<String, Value>,
}

/// Parses a chase dump produced by [`chase_to_jsonl`].
pub fn parse_chase_dump(text: &str) -> Result<Vec<ParsedDumpStep>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line: ChaseDumpLine = serde_json::from_str(line)
            .map_err(|e| format!("line {}: {e}", i + 1))?;
        let derived = crate::parse::parse_ground_atom(&line.derived)
            .map_err(|e| format!("line {}: bad derived atom: {e}", i + 1))?;
        let mut substitution = BTreeMap::new();
        for (var, literal) in line.subst {
            let value = crate::parse::parse_value_literal(&literal)
                .map_err(|e| format!("line {}: bad binding for {var}: {e}", i + 1))?;
            substitution.insert(var, value);
        }
        out.push(ParsedDumpStep {
            step_id: line.step,
            rule_id: line.rule,
            derived,
            body_fact_ids: line.body,
            substitution,
        });
    }
    Ok(out)
}

/// Replay result: either every step checks out or the first violation.
#[derive(Clone, Debug, Serialize)]
pub struct ReplayReport {
    pub valid: bool,
    pub steps_checked: usize,
    pub violation: Option<ReplayViolation>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplayViolation {
    pub step: usize,
    pub message: String,
}

/// Replays a parsed dump against the program and extensional facts,
/// re-deriving every step: body facts must match, guards must hold, negated
/// atoms must be absent, and the head must reproduce the recorded fact.
pub fn replay(
    dump: &[ParsedDumpStep],
    program: &Program,
    extensional: &FactStore,
) -> ReplayReport {
    let fail = |step: usize, message: String| ReplayReport {
        valid: false,
        steps_checked: step,
        violation: Some(ReplayViolation { step, message }),
    };

    // Final store for stratum-closed negation checks: negated predicates sit
    // strictly below the rule, so their final extension is what the chase saw.
    let mut final_store = extensional.clone();
    for line in dump {
        if let Err(e) = final_store.insert(line.derived.clone(), Origin::Derived(line.step_id)) {
            return fail(line.step_id, format!("derived fact rejected: {e}"));
        }
    }

    let mut store = extensional.clone();
    let mut session = SessionState::default();

    for (index, line) in dump.iter().enumerate() {
        let step = line.step_id;
        if step != index {
            return fail(step, format!("step ids must be dense, expected {index}"));
        }
        let rule = match program.rule_by_id(&line.rule_id) {
            Some(r) => r,
            None => return fail(step, format!("unknown rule {}", line.rule_id)),
        };
        let atoms = rule.positive_atoms();
        if atoms.len() != line.body_fact_ids.len() {
            return fail(
                step,
                format!(
                    "rule {} has {} positive atoms but {} body facts are recorded",
                    rule.id,
                    atoms.len(),
                    line.body_fact_ids.len()
                ),
            );
        }
        for (atom, &fid) in atoms.iter().zip(&line.body_fact_ids) {
            let fact = match store.get(fid) {
                Some(f) => f,
                None => return fail(step, format!("body fact {fid} not yet derived")),
            };
            let ground = match ground_atom(atom, &line.substitution, None) {
                Ok(g) => g,
                Err(e) => return fail(step, format!("cannot ground body atom: {e}")),
            };
            if ground != fact.atom {
                return fail(
                    step,
                    format!(
                        "body atom {} grounds to {} but fact {fid} is {}",
                        atom.print(),
                        ground.print(),
                        fact.atom.print()
                    ),
                );
            }
        }
        for lit in &rule.body {
            match lit {
                BodyLiteral::Negated(atom) => {
                    let ground = match ground_atom(atom, &line.substitution, None) {
                        Ok(g) => g,
                        Err(e) => return fail(step, format!("cannot ground negated atom: {e}")),
                    };
                    if final_store.contains(&ground) {
                        return fail(
                            step,
                            format!("negated atom {} is present in the store", ground.print()),
                        );
                    }
                }
                BodyLiteral::Comparison(l, op, r) => {
                    let holds = evaluate(l, &line.substitution)
                        .and_then(|a| Ok((a, evaluate(r, &line.substitution)?)))
                        .and_then(|(a, b)| compare(&a, *op, &b));
                    match holds {
                        Ok(true) => {}
                        Ok(false) => {
                            return fail(
                                step,
                                format!("comparison {} fails under the substitution", lit.print()),
                            )
                        }
                        Err(e) => return fail(step, format!("comparison error: {e}")),
                    }
                }
                BodyLiteral::Assignment(target, AssignSource::Arith(expr)) => {
                    let value = match evaluate(expr, &line.substitution) {
                        Ok(v) => v,
                        Err(e) => return fail(step, format!("assignment error: {e}")),
                    };
                    if line.substitution.get(target) != Some(&value) {
                        return fail(
                            step,
                            format!(
                                "assignment {target} recomputes to {} but {} was recorded",
                                value.display_text(),
                                line.substitution
                                    .get(target)
                                    .map(Value::display_text)
                                    .unwrap_or_else(|| "nothing".into())
                            ),
                        );
                    }
                }
                BodyLiteral::Assignment(target, AssignSource::Aggregate(agg)) => {
                    let key: Result<Vec<Value>, _> = rule
                        .group_variables()
                        .iter()
                        .map(|v| {
                            line.substitution
                                .get(*v)
                                .cloned()
                                .ok_or_else(|| ChaseError::UnboundVariable(v.to_string()))
                        })
                        .collect();
                    let running = key
                        .and_then(|key| {
                            let arg = evaluate(&agg.argument, &line.substitution)?;
                            session.update(&rule.id, key, agg.func, &arg)
                        });
                    match running {
                        Ok(v) => {
                            if line.substitution.get(target) != Some(&v) {
                                return fail(
                                    step,
                                    format!(
                                        "aggregate {target} recomputes to {} but {} was recorded",
                                        v.display_text(),
                                        line.substitution
                                            .get(target)
                                            .map(Value::display_text)
                                            .unwrap_or_else(|| "nothing".into())
                                    ),
                                );
                            }
                        }
                        Err(e) => return fail(step, format!("aggregate error: {e}")),
                    }
                }
                BodyLiteral::Positive(_) => {}
            }
        }
        let head = match ground_atom(&rule.head, &line.substitution, None) {
            Ok(h) => h,
            Err(e) => return fail(step, format!("cannot ground head: {e}")),
        };
        if head != line.derived {
            return fail(
                step,
                format!(
                    "head grounds to {} but {} was recorded",
                    head.print(),
                    line.derived.print()
                ),
            );
        }
        if store.contains(&line.derived) {
            return fail(
                step,
                format!("fact {} was already derived earlier", line.derived.print()),
            );
        }
        match store.insert(line.derived.clone(), Origin::Derived(step)) {
            Ok(_) => {}
            Err(e) => return fail(step, format!("cannot store derived fact: {e}")),
        }
    }

    ReplayReport { valid: true, steps_checked: dump.len(), violation: None }
}
