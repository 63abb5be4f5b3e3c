//! Predicate stratification.
//!
//! Negated and aggregated dependencies must cross strata strictly downward;
//! positive recursion stays inside a stratum. The classic iterative
//! level-assignment detects cycles through negation or aggregation when a
//! level exceeds the predicate count.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{ParseError, ParseErrorKind};
use crate::model::{BodyLiteral, Program, Rule};

/// Computes the strata of a parsed program.
pub fn stratify(program: &Program) -> Result<Vec<BTreeSet<String>>, ParseError> {
    stratify_rules(&program.rules)
        .map_err(|msg| ParseError::new(1, 1, ParseErrorKind::Unstratifiable, msg))
}

/// Stratifies a bare rule list; returns a human-readable message on cycles
/// through negation or aggregation.
pub(crate) fn stratify_rules(rules: &[Rule]) -> Result<Vec<BTreeSet<String>>, String> {
    let mut level: BTreeMap<&str, usize> = BTreeMap::new();
    for rule in rules {
        level.insert(&rule.head.predicate, 0);
        for lit in &rule.body {
            if let BodyLiteral::Positive(a) | BodyLiteral::Negated(a) = lit {
                level.insert(&a.predicate, 0);
            }
        }
    }
    let count = level.len();
    if count == 0 {
        return Ok(Vec::new());
    }

    // (body predicate, head predicate, strict) dependencies. An aggregate
    // rule makes every body dependency strict: the aggregated input must be
    // complete before the aggregate value is final.
    let mut edges: Vec<(&str, &str, bool)> = Vec::new();
    for rule in rules {
        let strict_all = rule.aggregate().is_some();
        for lit in &rule.body {
            match lit {
                BodyLiteral::Positive(a) => {
                    edges.push((&a.predicate, &rule.head.predicate, strict_all));
                }
                BodyLiteral::Negated(a) => {
                    edges.push((&a.predicate, &rule.head.predicate, true));
                }
                _ => {}
            }
        }
    }

    loop {
        let mut changed = false;
        for &(body, head, strict) in &edges {
            let need = level[body] + usize::from(strict);
            if level[head] < need {
                if need > count {
                    return Err(format!(
                        "cycle through negation or aggregation involving predicate {head}"
                    ));
                }
                level.insert(head, need);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    // Dense strata in level order.
    let mut used: Vec<usize> = level.values().copied().collect::<BTreeSet<_>>().into_iter().collect();
    used.sort_unstable();
    let mut strata: Vec<BTreeSet<String>> = vec![BTreeSet::new(); used.len()];
    for (pred, lvl) in &level {
        let idx = used.binary_search(lvl).unwrap();
        strata[idx].insert(pred.to_string());
    }
    Ok(strata)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_program;

    #[test]
    fn reference_program_splits_in_two_strata() {
        let program = parse_program(
            "Open(x,y,t1), not MarketClosed(t1) -> Accepted(x,y,t1).\n\
             Accepted(x,y,t1), Price(p1,t1), k = y * p1 -> Position(x,y,k,t1).\n\
             Close(x,t2), Price(p2,t2), Position(x,y,k,t1), t2 > t1, pl = y * p2 - k -> Return(x,pl).",
        )
        .unwrap();
        let names: Vec<Vec<&str>> = program
            .strata
            .iter()
            .map(|s| s.iter().map(String::as_str).collect())
            .collect();
        assert_eq!(names[0], vec!["Close", "MarketClosed", "Open", "Price"]);
        assert!(names[1..].concat().contains(&"Accepted"));
        assert!(names[1..].concat().contains(&"Position"));
        assert!(names[1..].concat().contains(&"Return"));
        assert!(program.stratum_of("Accepted") > program.stratum_of("MarketClosed"));
    }

    #[test]
    fn positive_recursion_shares_a_stratum() {
        let program =
            parse_program("E(x,y) -> T(x,y). T(x,z), E(z,y) -> T(x,y).").unwrap();
        assert_eq!(program.strata.len(), 1);
        assert!(program.strata[0].contains("T"));
        assert!(program.strata[0].contains("E"));
    }

    #[test]
    fn negation_cycle_is_unstratifiable() {
        let err = parse_program("P(x), not Q(x) -> Q(x).").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Unstratifiable);
    }

    #[test]
    fn aggregate_dependencies_are_strict() {
        let program = parse_program(
            "Position(x,k) -> Holding(x,k).\n\
             Holding(x,k), s = msum(k) -> Exposure(x,s).",
        )
        .unwrap();
        assert!(program.stratum_of("Exposure") > program.stratum_of("Holding"));
        let err = parse_program("Exposure(x,k), s = msum(k) -> Exposure(x,s).").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Unstratifiable);
    }
}
