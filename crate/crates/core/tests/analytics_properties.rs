mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trajkg::analytics::{
    all_overlaps, assessment_coverage, bias_warning, bottlenecks, class_profile,
    student_comparison, CoverageReport,
};
use trajkg::trajectory::{build_cohort, Cohort};

use common::random_instance;

fn cohort(inst: &common::Instance) -> Cohort {
    build_cohort(&inst.graph, &inst.course, &inst.responses, &inst.roster).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cumulative_sets_never_shrink(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let c = cohort(&inst);
        for timeline in c.timelines.values() {
            for pair in timeline.entries.windows(2) {
                prop_assert!(pair[0].cumulative_nodes.is_subset(&pair[1].cumulative_nodes));
                prop_assert!(pair[0].cumulative_edges.is_subset(&pair[1].cumulative_edges));
                prop_assert!(pair[0].coverage <= pair[1].coverage);
            }
        }
    }

    #[test]
    fn response_order_is_irrelevant(seed in any::<u64>()) {
        let mut inst = random_instance(seed);
        let before = cohort(&inst);
        inst.responses.reverse();
        let mut roster = inst.roster.clone();
        roster.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let after: Cohort = build_cohort(&inst.graph, &inst.course, &inst.responses, &inst.roster).unwrap();
        prop_assert_eq!(&before.timelines, &after.timelines);
        prop_assert_eq!(&before.snapshots, &after.snapshots);

        let min_support = 2;
        let a = bottlenecks(&inst.graph, &inst.course, &before.timelines, &inst.responses, min_support);
        let shuffled: Cohort = build_cohort(&inst.graph, &inst.course, &inst.responses, &roster).unwrap();
        let b = bottlenecks(&inst.graph, &inst.course, &shuffled.timelines, &inst.responses, min_support);
        prop_assert_eq!(&a, &b);
        for e in &a.entries {
            if let Some(score) = e.score {
                prop_assert!((-1.0..=1.0).contains(&score));
            }
        }
    }

    #[test]
    fn comparison_partitions_every_node(seed in any::<u64>(), theta in 0.05f64..=1.0) {
        let inst = random_instance(seed);
        let c = cohort(&inst);
        for assessment in &inst.course.assessments {
            let id = &assessment.assessment_id;
            let coverage: CoverageReport = assessment_coverage(&inst.graph, id, inst.course.mappings_for(id));
            let profile = class_profile(&inst.graph, &coverage, &c.snapshots_for(id), &inst.roster).unwrap();
            for student in &inst.roster {
                let Ok(cmp) = student_comparison(&inst.graph, c.snapshot(student, id).unwrap(), &profile, &coverage, theta) else {
                    prop_assert_eq!(coverage.covered_count, 0);
                    continue;
                };
                prop_assert!(cmp.mastered.is_disjoint(&cmp.lagging));
                prop_assert!(cmp.mastered.is_disjoint(&cmp.remaining));
                prop_assert!(cmp.lagging.is_disjoint(&cmp.remaining));
                prop_assert_eq!(cmp.mastered.len() + cmp.lagging.len() + cmp.remaining.len(), inst.graph.node_count());
            }
        }
    }

    #[test]
    fn raising_containment_keeps_a_warning(seed in any::<u64>(), bump in 0.0f64..0.5) {
        let inst = random_instance(seed);
        let coverages: Vec<CoverageReport> = inst
            .course
            .assessments
            .iter()
            .map(|a| assessment_coverage(&inst.graph, &a.assessment_id, inst.course.mappings_for(&a.assessment_id)))
            .collect();
        prop_assume!(coverages.len() >= 2);
        let overlaps = all_overlaps(&coverages).unwrap();
        let base = bias_warning(&coverages, &overlaps, 0.6, 0.5).unwrap();
        let raised: Vec<_> = overlaps
            .iter()
            .cloned()
            .map(|mut o| {
                o.containment_a_in_b = (o.containment_a_in_b + bump).min(1.0);
                o.containment_b_in_a = (o.containment_b_in_a + bump).min(1.0);
                o
            })
            .collect();
        let after = bias_warning(&coverages, &raised, 0.6, 0.5).unwrap();
        prop_assert!(!base.triggered || after.triggered);
        prop_assert!(after.evidence.len() >= base.evidence.len());
    }
}

#[test]
fn roster_members_without_responses_are_absent() {
    let inst = random_instance(7);
    let mut roster = inst.roster.clone();
    roster.push("zz-absent".into());
    let c: Cohort = build_cohort(&inst.graph, &inst.course, &inst.responses, &roster).unwrap();
    let timeline = &c.timelines["zz-absent"];
    assert!(timeline
        .entries
        .iter()
        .all(|e| e.cumulative_nodes.is_empty()));
    let absences: BTreeMap<&str, usize> = c
        .diagnostics
        .iter()
        .filter(|d| d.message.contains("zz-absent"))
        .map(|d| (d.code, 1))
        .collect();
    assert_eq!(absences.get("absent"), Some(&1));
}
