//! The logic plan: rule dependency graph used for lifted template generation.
//!
//! Nodes are rules; an edge runs from producer to consumer whenever the
//! producer's head predicate occurs in the consumer's body. Edges are
//! computed at predicate granularity.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::VerbalizeError;
use crate::model::{BodyLiteral, Glossary, Program};
use crate::verbalize::{verbalize_rule, Lexicon};

/// One plan node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub rule_id: String,
    pub head_predicate: String,
    pub body_predicates: Vec<String>,
}

/// The rule dependency graph; edges are node indices (producer, consumer).
#[derive(Clone, Debug, PartialEq)]
pub struct LogicPlan {
    pub nodes: Vec<PlanNode>,
    pub edges: Vec<(usize, usize)>,
}

/// Builds the dependency graph of a program; node order is program order.
pub fn build_logic_plan(program: &Program) -> LogicPlan {
    let nodes: Vec<PlanNode> = program
        .rules
        .iter()
        .map(|rule| {
            let mut seen = BTreeSet::new();
            let mut body_predicates = Vec::new();
            for lit in &rule.body {
                if let BodyLiteral::Positive(a) | BodyLiteral::Negated(a) = lit {
                    if seen.insert(a.predicate.as_str()) {
                        body_predicates.push(a.predicate.clone());
                    }
                }
            }
            PlanNode {
                rule_id: rule.id.clone(),
                head_predicate: rule.head.predicate.clone(),
                body_predicates,
            }
        })
        .collect();

    let mut edges = Vec::new();
    for (producer, p) in nodes.iter().enumerate() {
        for (consumer, c) in nodes.iter().enumerate() {
            if c.body_predicates.contains(&p.head_predicate) {
                edges.push((producer, consumer));
            }
        }
    }
    LogicPlan { nodes, edges }
}

/// A plan node with its tokenized sentence attached.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerbalizedNode {
    pub rule_id: String,
    pub sentence: String,
    pub tokens: Vec<String>,
    pub head_predicate: String,
    pub body_predicates: Vec<String>,
}

/// The verbalized plan: tokenized node sentences plus the edge list by rule
/// id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerbalizedPlan {
    pub nodes: Vec<VerbalizedNode>,
    pub edges: Vec<(String, String)>,
}

/// Attaches a tokenized sentence (see [`verbalize_rule`]) to every node.
pub fn verbalize_plan(
    plan: &LogicPlan,
    program: &Program,
    glossary: &Glossary,
    lexicon: &Lexicon,
) -> Result<VerbalizedPlan, VerbalizeError> {
    let mut nodes = Vec::with_capacity(plan.nodes.len());
    for node in &plan.nodes {
        let rule = program
            .rule_by_id(&node.rule_id)
            .ok_or_else(|| crate::error::ChaseError::UnknownRule(node.rule_id.clone()))?;
        let tokenized = verbalize_rule(rule, glossary, lexicon)?;
        nodes.push(VerbalizedNode {
            rule_id: node.rule_id.clone(),
            sentence: tokenized.text,
            tokens: tokenized.tokens.into_iter().collect(),
            head_predicate: node.head_predicate.clone(),
            body_predicates: node.body_predicates.clone(),
        });
    }
    let edges = plan
        .edges
        .iter()
        .map(|&(p, c)| (plan.nodes[p].rule_id.clone(), plan.nodes[c].rule_id.clone()))
        .collect();
    Ok(VerbalizedPlan { nodes, edges })
}

/// DOT rendering for inspection.
pub fn to_dot(plan: &LogicPlan) -> String {
    let mut out = String::from("digraph logic_plan {\n");
    for node in &plan.nodes {
        out.push_str(&format!(
            "  \"{}\" [label=\"{}: {}\"];\n",
            node.rule_id, node.rule_id, node.head_predicate
        ));
    }
    for &(p, c) in &plan.edges {
        out.push_str(&format!(
            "  \"{}\" -> \"{}\";\n",
            plan.nodes[p].rule_id, plan.nodes[c].rule_id
        ));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_glossary, parse_program};

    const RULES: &str = "Open(x,y,t1), not MarketClosed(t1) -> Accepted(x,y,t1).\n\
        Accepted(x,y,t1), Price(p1,t1), k = y * p1 -> Position(x,y,k,t1).\n\
        Close(x,t2), Price(p2,t2), Position(x,y,k,t1), t2 > t1, pl = y * p2 - k -> Return(x,pl).";

    #[test]
    fn reference_plan_has_three_nodes_and_two_edges() {
        let program = parse_program(RULES).unwrap();
        let plan = build_logic_plan(&program);
        assert_eq!(plan.nodes.len(), 3);
        assert_eq!(plan.edges, vec![(0, 1), (1, 2)]);
        assert_eq!(plan.nodes[0].head_predicate, "Accepted");
        assert_eq!(plan.nodes[0].body_predicates, vec!["Open", "MarketClosed"]);
    }

    #[test]
    fn isolated_rule_has_no_edges() {
        let program = parse_program("Price(p,t) -> Quoted(p,t).").unwrap();
        let plan = build_logic_plan(&program);
        assert_eq!(plan.nodes.len(), 1);
        assert!(plan.edges.is_empty());
    }

    #[test]
    fn mutual_recursion_yields_a_cycle() {
        let program = parse_program("A(x) -> B(x). B(x) -> A(x).").unwrap();
        let plan = build_logic_plan(&program);
        assert_eq!(plan.nodes.len(), 2);
        assert_eq!(plan.edges, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn verbalized_plan_is_token_only() {
        let program = parse_program(RULES).unwrap();
        let glossary = parse_glossary(
            r#"
            Open(x, y, t): "the trader {x} at time {t} sends an order to open a position of size {y}"
            MarketClosed(t): "{t} is a time when the market is closed"
            Price(p, t): "the price of the asset at time {t} is {p}"
            Close(x, t): "the trader {x} at time {t} sends an order to close the position"
            Accepted(x, y, t): "the order of size {y} by {x} is accepted at time {t}"
            Position(x, y, k, t): "the trader {x} holds a position of size {y} and notional {k} opened at time {t}"
            Return(x, pl): "the trader {x} gets returns of {pl}"
            "#,
        )
        .unwrap();
        let plan = build_logic_plan(&program);
        let verbalized =
            verbalize_plan(&plan, &program, &glossary, &Lexicon::default()).unwrap();
        assert_eq!(verbalized.nodes.len(), 3);
        for constant in ["EGTech", "IEComp", "124", "147", "0.3", "0.5", "37.2", "6.9"] {
            for node in &verbalized.nodes {
                assert!(
                    !node.sentence.contains(constant),
                    "plan sentence leaks {constant}"
                );
            }
        }
        assert_eq!(
            verbalized.edges,
            vec![("r1".to_string(), "r2".to_string()), ("r2".to_string(), "r3".to_string())]
        );
    }

    #[test]
    fn aggregate_rule_nodes_carry_the_aggregate_phrase() {
        let program = parse_program("Position(x,k), s = msum(k) -> Exposure(x,s).").unwrap();
        let glossary = parse_glossary(
            "Position(x, k): \"the trader {x} holds a position of notional {k}\"\n\
             Exposure(x, s): \"the exposure of {x} is {s}\"",
        )
        .unwrap();
        let plan = build_logic_plan(&program);
        let verbalized =
            verbalize_plan(&plan, &program, &glossary, &Lexicon::default()).unwrap();
        assert!(verbalized.nodes[0]
            .sentence
            .contains("computed as the monotonic sum of"));
    }

    #[test]
    fn every_chase_step_names_a_plan_node() {
        let program = parse_program(RULES).unwrap();
        let data = crate::parse::parse_facts(
            "Open(\"EGTech\",0.3,1).\nPrice(124,1).\nPrice(147,9).\nClose(\"EGTech\",9).",
        )
        .unwrap();
        let chase = crate::chase::reason(&data, &program).unwrap();
        let plan = build_logic_plan(&program);
        let node_ids: std::collections::BTreeSet<&str> =
            plan.nodes.iter().map(|n| n.rule_id.as_str()).collect();
        for step in &chase.steps {
            assert!(node_ids.contains(step.rule_id.as_str()));
        }
    }

    #[test]
    fn empty_program_verbalizes_to_an_empty_plan() {
        let program = parse_program("").unwrap();
        let plan = build_logic_plan(&program);
        let verbalized = verbalize_plan(
            &plan,
            &program,
            &crate::model::Glossary::new(),
            &Lexicon::default(),
        )
        .unwrap();
        assert!(verbalized.nodes.is_empty());
        assert!(verbalized.edges.is_empty());
    }

    #[test]
    fn dot_output_lists_nodes_and_edges() {
        let program = parse_program(RULES).unwrap();
        let plan = build_logic_plan(&program);
        let dot = to_dot(&plan);
        assert!(dot.contains("\"r1\" -> \"r2\""));
        assert!(dot.contains("\"r2\" -> \"r3\""));
        assert!(dot.contains("label=\"r3: Return\""));
    }
}
