use std::collections::BTreeSet;

use trajkg::graph::build_graph;
use trajkg::mapping::{jaccard, lexical_match, tokenize, Question};
use trajkg::provider::{RawNode, RawRelation};
use trajkg::taxonomy::{EdgeKind, NodeKind};

fn set(words: &[&str]) -> BTreeSet<String> {
    words.iter().map(|w| w.to_string()).collect()
}

#[test]
fn identical_token_sets_score_one() {
    let a = tokenize("Water boils at 100 degrees");
    assert!((jaccard(&a, &a) - 1.0).abs() < 1e-12);
}

#[test]
fn two_of_six_tokens_shared() {
    let a = set(&["water", "boils", "heat", "fast"]);
    let b = set(&["water", "boils", "cold", "ice"]);
    assert!((jaccard(&a, &b) - 2.0 / 6.0).abs() < 1e-12);
    assert!((jaccard(&b, &a) - jaccard(&a, &b)).abs() < 1e-12);
}

#[test]
fn threshold_excludes_weak_edges() {
    let node = |l: &str| RawNode {
        label: l.into(),
        kind: NodeKind::OBJECT,
        source_stmt_ids: vec!["d:s1:0".into()],
    };
    let rel = |a: &str, r: &str, b: &str| RawRelation {
        src_label: a.into(),
        dst_label: b.into(),
        relation_label: r.into(),
        kind: EdgeKind::Semantic,
        source_stmt_ids: vec!["d:s1:0".into()],
    };
    let (graph, _) = build_graph(
        &[node("water"), node("steam"), node("ice")],
        &[
            rel("water", "becomes", "steam"),
            rel("water", "freezes into", "ice"),
        ],
    );
    let question = Question {
        question_id: "q1".into(),
        stem: "What does water become".into(),
        options: vec!["steam".into(), "ice".into()],
        correct_index: 0,
    };
    // {what, does, water, become, steam} vs {water, becomes, steam}: 2/6
    let weak = lexical_match(&question, &graph, 0.5).unwrap();
    assert!(weak.edges.is_empty());
    let loose = lexical_match(&question, &graph, 0.3).unwrap();
    assert_eq!(loose.edges.len(), 1);
    assert!((loose.confidence - 2.0 / 6.0).abs() < 1e-12);
}
