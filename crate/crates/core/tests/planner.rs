mod common;

use common::{plan_reply, scripted};
use tabplan::kb::{load_kb, select_examples, KnowledgeBase};
use tabplan::llm::{Fixture, LlmError};
use tabplan::plan::{
    canonicalize, plan_to_wire, AnalysisPlan, Comparator, Condition, Operand, Predicate, Step,
};
use tabplan::planner::{plan_query, PlannerConfig, PlannerError};
use tabplan::synth::{self, GeneratorConfig};

fn kb() -> KnowledgeBase {
    synth::knowledge_base(&GeneratorConfig::default())
}

fn cond(col: &str, value: &str) -> Predicate {
    Condition::new(col, Comparator::Eq, Operand::Scalar(value.into())).into()
}

fn failed_on(rc: &str, reversed: bool) -> AnalysisPlan {
    let mut parts = vec![cond("release_candidate", rc), cond("test_status", "failed")];
    if reversed {
        parts.reverse();
    }
    AnalysisPlan::new(vec![Step::filter(Predicate::And(parts)), Step::limit(10)])
}

fn plan(replies: &[String], n: usize) -> Result<tabplan::planner::PlanDecision, PlannerError> {
    let config = PlannerConfig {
        k_shot: 1,
        n_samples: n,
        parallelism: n.max(1),
        ..PlannerConfig::default()
    };
    let gw = scripted(replies.iter().cloned().map(Fixture::any).collect());
    plan_query("failures on a release candidate", &kb(), &config, &gw)
}

#[test]
fn equivalent_plans_pool_their_votes() {
    let a = failed_on("RC3", false);
    let a_reordered = failed_on("RC3", true);
    let b = failed_on("RC4", false);
    let d = plan(&[plan_reply(&b), plan_reply(&a), plan_reply(&a_reordered)], 3).unwrap();
    assert_eq!(d.chosen_canonical, canonicalize(&a, &kb().schema));
    assert_eq!(d.chosen_votes, 2);
    assert_eq!(d.tally.len(), 2);
    assert_eq!(d.chosen, a);
}

#[test]
fn ties_go_to_the_earliest_sample() {
    let a = failed_on("RC3", false);
    let b = failed_on("RC4", false);
    let d = plan(&[plan_reply(&b), plan_reply(&a)], 2).unwrap();
    assert_eq!(d.chosen, b);
    let d = plan(
        &[plan_reply(&a), plan_reply(&b), plan_reply(&b), plan_reply(&a)],
        4,
    )
    .unwrap();
    assert_eq!(d.chosen, a);
}

#[test]
fn invalid_samples_do_not_vote() {
    let a = failed_on("RC3", false);
    let b = failed_on("RC4", false);
    let unknown = plan_to_wire(&AnalysisPlan::new(vec![Step::select(["nope"])]));
    let d = plan(
        &[
            unknown.clone(),
            unknown,
            plan_reply(&b),
            plan_reply(&a),
            plan_reply(&b),
        ],
        5,
    )
    .unwrap();
    assert_eq!(d.chosen, b);
    assert_eq!(d.chosen_votes, 2);
    assert_eq!(d.n_samples, 5);
    assert_eq!(d.candidates.iter().filter(|c| c.error.is_some()).count(), 2);
    assert!(d.candidates[0].error.as_deref().unwrap().contains("nope"));
}

#[test]
fn a_failed_sample_fails_the_batch() {
    let config = PlannerConfig {
        k_shot: 0,
        n_samples: 2,
        parallelism: 2,
        ..PlannerConfig::default()
    };
    let reply = plan_reply(&failed_on("RC1", false));
    let gw = scripted(vec![
        Fixture::any(reply),
        Fixture::server_error(),
        Fixture::server_error(),
        Fixture::server_error(),
        Fixture::server_error(),
    ]);
    match plan_query("q", &kb(), &config, &gw) {
        Err(PlannerError::Llm(LlmError::Sample { index: 1, .. })) => {}
        other => panic!("{other:?}"),
    }
    let none = PlannerConfig {
        n_samples: 0,
        ..config
    };
    assert!(matches!(
        plan_query("q", &kb(), &none, &gw),
        Err(PlannerError::NoSamples)
    ));
}

#[test]
fn synthetic_kb_is_self_consistent() {
    let kb = kb();
    assert_eq!(kb.schema.fields().len(), 40);
    assert!(kb.examples.len() >= 3);
    assert!(select_examples(&kb.examples, kb.examples.len() + 1).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kb.json");
    std::fs::write(&path, kb.to_json()).unwrap();
    assert_eq!(load_kb(&path).unwrap(), kb);

    let data = synth::generate(GeneratorConfig::default()).unwrap();
    for ex in &kb.examples {
        let (out, _) = tabplan::exec::execute_plan(&ex.plan, &data.table);
        assert!(out.row_count() > 0, "example {:?} returns nothing", ex.query);
    }
}
