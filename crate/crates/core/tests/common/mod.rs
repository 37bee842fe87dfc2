#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajkg::graph::{build_graph, EdgeId, KnowledgeGraph};
use trajkg::mapping::{Assessment, EdgeMapping, MappingMethod, Phase, Question};
use trajkg::provider::{RawNode, RawRelation};
use trajkg::taxonomy::{EdgeKind, NodeKind};
use trajkg::trajectory::{Course, ResponseRecord};

pub struct Instance {
    pub graph: KnowledgeGraph,
    pub course: Course,
    pub responses: Vec<ResponseRecord>,
    pub roster: Vec<String>,
}

/// A small random course: up to 50 nodes, 5 assessments and 20 students.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=50);
    let nodes: Vec<RawNode> = (0..n)
        .map(|i| RawNode {
            label: format!("k{i}"),
            kind: NodeKind::OBJECT,
            source_stmt_ids: vec![format!("d:s1:{i}")],
        })
        .collect();
    let relations: Vec<RawRelation> = (0..rng.random_range(1..=2 * n))
        .map(|_| {
            let a = rng.random_range(0..n);
            let b = (a + rng.random_range(1..n)) % n;
            RawRelation {
                src_label: format!("k{a}"),
                dst_label: format!("k{b}"),
                relation_label: format!("r{}", rng.random_range(0..3)),
                kind: EdgeKind::Semantic,
                source_stmt_ids: vec!["d:s1:0".into()],
            }
        })
        .collect();
    let (graph, _) = build_graph(&nodes, &relations);
    let edge_ids: Vec<EdgeId> = graph.edges().map(|e| e.id).collect();

    let mut assessments = Vec::new();
    let mut mappings = BTreeMap::new();
    for a in 0..rng.random_range(1..=5) {
        let assessment_id = format!("a{a}");
        let mut questions = Vec::new();
        let mut mapped = Vec::new();
        for q in 0..rng.random_range(1..=6) {
            let question_id = format!("q{q}");
            questions.push(Question {
                question_id: question_id.clone(),
                stem: format!("question {q}"),
                options: vec!["yes".into(), "no".into()],
                correct_index: 0,
            });
            let unmapped = rng.random_bool(0.1);
            let edges: BTreeSet<EdgeId> = if unmapped {
                BTreeSet::new()
            } else {
                let k = rng.random_range(1..=3);
                edge_ids.choose_multiple(&mut rng, k).copied().collect()
            };
            mapped.push(EdgeMapping {
                assessment_id: assessment_id.clone(),
                question_id,
                edge_ids: edges,
                method: MappingMethod::Lexical,
                confidence: 1.0,
                rationale: String::new(),
                unmapped,
            });
        }
        assessments.push(Assessment {
            assessment_id: assessment_id.clone(),
            phase: Phase::Quiz(a),
            order_index: i64::from(a),
            questions,
        });
        mappings.insert(assessment_id, mapped);
    }
    let course = Course::new(assessments, mappings).expect("generated course is valid");

    let roster: Vec<String> = (0..rng.random_range(1..=20))
        .map(|s| format!("s{s:02}"))
        .collect();
    let mut responses = Vec::new();
    for student in &roster {
        for assessment in &course.assessments {
            for question in &assessment.questions {
                if rng.random_bool(0.85) {
                    let chosen_index = usize::from(rng.random_bool(0.4));
                    responses.push(ResponseRecord {
                        student_id: student.clone(),
                        assessment_id: assessment.assessment_id.clone(),
                        question_id: question.question_id.clone(),
                        chosen_index,
                        is_correct: chosen_index == question.correct_index,
                    });
                }
            }
        }
    }
    responses.shuffle(&mut rng);
    Instance {
        graph,
        course,
        responses,
        roster,
    }
}
