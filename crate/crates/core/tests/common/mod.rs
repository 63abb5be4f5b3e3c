//! Shared test support: a generator for random valid positive programs and
//! the naive brute-force fixpoint oracle the chase is checked against.
//!
//! Not every test target uses every helper.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chaseforge_core::chase::{compare, evaluate};
use chaseforge_core::model::{
    AssignSource, BodyLiteral, FactStore, GroundAtom, Program, Term, Value,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn pick(rng: &mut ChaCha8Rng, bound: usize) -> usize {
    (rng.next_u64() % bound as u64) as usize
}

/// Generates the text of a random positive stratified program: at most 5
/// rules over at most 4 predicates, no negation, no existentials, pure
/// positive recursion allowed, comparisons and arithmetic assignments only
/// in non-recursive rules (so every program terminates).
pub fn random_program_text(rng: &mut ChaCha8Rng) -> String {
    let pred_count = 2 + pick(rng, 3); // 2..=4
    let arities: Vec<usize> = (0..pred_count).map(|_| 1 + pick(rng, 3)).collect();
    let rule_count = 1 + pick(rng, 5); // 1..=5

    let mut out = String::new();
    for _ in 0..rule_count {
        // Heads never target predicate 0: it stays extensional.
        let head_pred = 1 + pick(rng, pred_count - 1);
        let recursive = pick(rng, 4) == 0;
        let atom_count = 1 + pick(rng, 2);

        let mut var_counter = 0usize;
        let mut bound_vars: Vec<String> = Vec::new();
        let mut body: Vec<String> = Vec::new();
        for _ in 0..atom_count {
            let pred = if recursive {
                pick(rng, head_pred + 1)
            } else {
                pick(rng, head_pred)
            };
            let mut args = Vec::new();
            for _ in 0..arities[pred] {
                // Mostly fresh variables, sometimes a join on a bound one,
                // sometimes a constant.
                let roll = pick(rng, 6);
                if roll == 0 {
                    args.push(pick(rng, 6).to_string());
                } else if roll == 1 && !bound_vars.is_empty() {
                    args.push(bound_vars[pick(rng, bound_vars.len())].clone());
                } else {
                    let v = format!("v{var_counter}");
                    var_counter += 1;
                    bound_vars.push(v.clone());
                    args.push(v);
                }
            }
            body.push(format!("P{pred}({})", args.join(",")));
        }

        let mut assigned: Vec<String> = Vec::new();
        if !recursive && !bound_vars.is_empty() {
            if pick(rng, 2) == 0 {
                let l = &bound_vars[pick(rng, bound_vars.len())];
                let r = &bound_vars[pick(rng, bound_vars.len())];
                let op = ["<", "<=", ">", ">=", "==", "!="][pick(rng, 6)];
                body.push(format!("{l} {op} {r}"));
            }
            if pick(rng, 2) == 0 {
                let a = &bound_vars[pick(rng, bound_vars.len())];
                let b = &bound_vars[pick(rng, bound_vars.len())];
                let op = ["+", "-", "*"][pick(rng, 3)];
                let target = format!("w{var_counter}");
                body.push(format!("{target} = {a} {op} {b}"));
                assigned.push(target);
            }
        }

        let mut head_args = Vec::new();
        for _ in 0..arities[head_pred] {
            let roll = pick(rng, 8);
            if roll == 0 {
                head_args.push(pick(rng, 6).to_string());
            } else if roll == 1 && !assigned.is_empty() {
                head_args.push(assigned[pick(rng, assigned.len())].clone());
            } else if !bound_vars.is_empty() {
                head_args.push(bound_vars[pick(rng, bound_vars.len())].clone());
            } else {
                head_args.push(pick(rng, 6).to_string());
            }
        }
        out.push_str(&format!(
            "{} -> P{head_pred}({}).\n",
            body.join(", "),
            head_args.join(",")
        ));
    }
    out
}

/// Random extensional facts (small integers) for the program's predicates.
pub fn random_facts_text(rng: &mut ChaCha8Rng, program: &Program) -> String {
    let mut arities: BTreeMap<&str, usize> = program.arities();
    arities.entry("P0").or_insert(1 + pick(rng, 3));
    let preds: Vec<(&str, usize)> = arities.into_iter().collect();
    let fact_count = 1 + pick(rng, 30);
    let mut out = String::new();
    for _ in 0..fact_count {
        let (pred, arity) = preds[pick(rng, preds.len())];
        let args: Vec<String> = (0..arity).map(|_| pick(rng, 6).to_string()).collect();
        out.push_str(&format!("{pred}({}).\n", args.join(",")));
    }
    out
}

/// Naive brute-force fixpoint: iterate all rules over all fact combinations
/// until nothing changes. Deliberately index-free and round-free; shares
/// only the term evaluation primitives with the engine under test.
pub fn naive_fixpoint(program: &Program, data: &FactStore) -> BTreeSet<GroundAtom> {
    let mut facts: BTreeSet<GroundAtom> = data.facts().iter().map(|f| f.atom.clone()).collect();
    loop {
        let snapshot: Vec<GroundAtom> = facts.iter().cloned().collect();
        let mut derived: Vec<GroundAtom> = Vec::new();
        for rule in &program.rules {
            let atoms = rule.positive_atoms();
            let mut stack: Vec<(usize, BTreeMap<String, Value>)> =
                vec![(0, BTreeMap::new())];
            while let Some((level, subst)) = stack.pop() {
                if level == atoms.len() {
                    if let Some(head) = finish_match(rule, subst) {
                        derived.push(head);
                    }
                    continue;
                }
                for fact in &snapshot {
                    if fact.predicate != atoms[level].predicate
                        || fact.args.len() != atoms[level].args.len()
                    {
                        continue;
                    }
                    if let Some(extended) = unify(atoms[level], fact, &subst) {
                        stack.push((level + 1, extended));
                    }
                }
            }
        }
        let before = facts.len();
        facts.extend(derived);
        if facts.len() == before {
            return facts;
        }
    }
}

fn unify(
    atom: &chaseforge_core::model::Atom,
    fact: &GroundAtom,
    subst: &BTreeMap<String, Value>,
) -> Option<BTreeMap<String, Value>> {
    let mut extended = subst.clone();
    for (term, value) in atom.args.iter().zip(&fact.args) {
        match term {
            Term::Val(v) => {
                if v != value {
                    return None;
                }
            }
            Term::Var(v) => match extended.get(v) {
                Some(bound) if bound != value => return None,
                Some(_) => {}
                None => {
                    extended.insert(v.clone(), value.clone());
                }
            },
            Term::Expr(..) => return None,
        }
    }
    Some(extended)
}

fn finish_match(
    rule: &chaseforge_core::model::Rule,
    mut subst: BTreeMap<String, Value>,
) -> Option<GroundAtom> {
    for lit in &rule.body {
        match lit {
            BodyLiteral::Positive(_) => {}
            BodyLiteral::Negated(_) => unreachable!("oracle handles positive programs only"),
            BodyLiteral::Comparison(l, op, r) => {
                let a = evaluate(l, &subst).ok()?;
                let b = evaluate(r, &subst).ok()?;
                if !compare(&a, *op, &b).ok()? {
                    return None;
                }
            }
            BodyLiteral::Assignment(target, AssignSource::Arith(expr)) => {
                let value = evaluate(expr, &subst).ok()?;
                subst.insert(target.clone(), value);
            }
            BodyLiteral::Assignment(_, AssignSource::Aggregate(_)) => {
                unreachable!("oracle handles aggregate-free programs only")
            }
        }
    }
    let mut args = Vec::new();
    for term in &rule.head.args {
        match term {
            Term::Val(v) => args.push(v.clone()),
            Term::Var(v) => args.push(subst.get(v)?.clone()),
            Term::Expr(..) => return None,
        }
    }
    Some(GroundAtom { predicate: rule.head.predicate.clone(), args })
}
