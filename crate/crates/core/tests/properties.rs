//! Property tests: parse/print round trips, rule safety, and paraphrase
//! safety.

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use chaseforge_core::corpus::{CorpusPair, NlpTask};
use chaseforge_core::model::{AssignSource, BodyLiteral};
use chaseforge_core::quality::{paraphrase, score_corpus, ScoreContext};
use chaseforge_core::{parse_facts, parse_glossary, parse_program};

const PROGRAM: &str = include_str!("../../../data/trading.vada");
const FACTS: &str = include_str!("../../../data/trading.facts");
const GLOSSARY: &str = include_str!("../../../data/trading.gloss");

proptest! {
    /// parse(print(P)) is structurally P for generated valid programs.
    #[test]
    fn program_print_round_trips(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let text = common::random_program_text(&mut rng);
        let program = parse_program(&text).unwrap();
        let printed = program.print();
        let reparsed = parse_program(&printed).unwrap();
        prop_assert_eq!(program, reparsed);
    }

    /// Facts survive print/parse with order and values intact.
    #[test]
    fn facts_print_round_trips(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let program = parse_program(&common::random_program_text(&mut rng)).unwrap();
        let store = parse_facts(&common::random_facts_text(&mut rng, &program)).unwrap();
        let reparsed = parse_facts(&store.print()).unwrap();
        let original: Vec<_> = store.facts().iter().map(|f| f.atom.clone()).collect();
        let round: Vec<_> = reparsed.facts().iter().map(|f| f.atom.clone()).collect();
        prop_assert_eq!(original, round);
    }

    /// Safety: negated-atom and comparison variables are bound by positive
    /// atoms plus prior assignments in every parsed rule.
    #[test]
    fn parsed_rules_are_safe(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let program = parse_program(&common::random_program_text(&mut rng)).unwrap();
        for rule in &program.rules {
            let mut bound: BTreeSet<&str> = BTreeSet::new();
            for atom in rule.positive_atoms() {
                bound.extend(atom.variables());
            }
            for lit in &rule.body {
                match lit {
                    BodyLiteral::Negated(a) => {
                        prop_assert!(a.variables().iter().all(|v| bound.contains(v)));
                    }
                    BodyLiteral::Comparison(l, _, r) => {
                        prop_assert!(l.variables().iter().all(|v| bound.contains(v)));
                        prop_assert!(r.variables().iter().all(|v| bound.contains(v)));
                    }
                    BodyLiteral::Assignment(target, AssignSource::Arith(e)) => {
                        prop_assert!(e.variables().iter().all(|v| bound.contains(v)));
                        bound.insert(target);
                    }
                    _ => {}
                }
            }
        }
    }
}

#[test]
fn reference_artifacts_round_trip() {
    let program = parse_program(PROGRAM).unwrap();
    assert_eq!(program, parse_program(&program.print()).unwrap());

    let store = parse_facts(FACTS).unwrap();
    let reparsed = parse_facts(&store.print()).unwrap();
    assert_eq!(store.facts().len(), reparsed.facts().len());

    let glossary = parse_glossary(GLOSSARY).unwrap();
    assert_eq!(glossary, parse_glossary(&glossary.print()).unwrap());
}

#[test]
fn labeled_features_round_trip() {
    let text = "accept: Open(x,y,t), not MarketClosed(t) -> Accepted(x,y,t).\n\
        Accepted(x,y,t) -> Ticket(x, ?ref).\n\
        Position(x,k) , s = msum(k) -> Exposure(x,s).\n\
        Price(p,t), p >= 100, d = p / 2 -> Discounted(d,t).";
    let program = parse_program(text).unwrap();
    let reparsed = parse_program(&program.print()).unwrap();
    assert_eq!(program, reparsed);
}

/// Paraphrase safety: variants keep the pointwise subscores of their
/// original (specificity is corpus-relative, so each pair is scored in a
/// singleton corpus here).
#[test]
fn paraphrase_variants_preserve_pointwise_scores() {
    let context = ScoreContext::new(
        vec![
            "Since the trader EGTech at time 1 sends an order to open a position of size 0.3, \
             and it is not true that 1 is a time when the market is closed, \
             then the order of size 0.3 by EGTech is accepted at time 1."
                .into(),
        ],
        vec!["EGTech".into(), "IEComp".into()],
        Vec::new(),
    );
    let original = CorpusPair {
        prompt: "Why is the order of size 0.3 by EGTech accepted at time 1?".into(),
        response: "Since the trader EGTech at time 1 sends an order to open a position of size 0.3, \
                   and it is not true that 1 is a time when the market is closed, \
                   then the order of size 0.3 by EGTech is accepted at time 1."
            .into(),
        task: NlpTask::Explanation,
        rule: "r1".into(),
        steps: vec![0],
        template: "r1#explanation#0".into(),
        score: None,
    };
    for seed in 0..16 {
        let variants = paraphrase(&original, seed, 4);
        assert!(!variants.is_empty());
        let base = score_corpus(std::slice::from_ref(&original), &context, 0.5);
        for variant in &variants {
            let scored = score_corpus(std::slice::from_ref(variant), &context, 0.5);
            assert_eq!(scored[0].subscores["plausibility"], base[0].subscores["plausibility"]);
            assert_eq!(scored[0].subscores["bias"], base[0].subscores["bias"]);
            assert_eq!(scored[0].subscores["tokens"], base[0].subscores["tokens"]);
            assert_eq!(scored[0].aggregate, base[0].aggregate);
        }
    }
}
