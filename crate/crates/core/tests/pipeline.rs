mod common;

use common::{plan_reply, scripted};
use tabplan::actor::{ActorError, Mode};
use tabplan::bench::{
    default_suite, format_report, generate_cases, load_suite, oracle_fixtures, run_suite, BenchError,
    SuiteConfig,
};
use tabplan::exec::execute_plan;
use tabplan::llm::Fixture;
use tabplan::pipeline::{answer_query, QueryConfig, QueryError};
use tabplan::plan::{step_to_wire, AnalysisPlan, Comparator, Condition, Operand, Step};
use tabplan::planner::PlannerError;
use tabplan::synth::{self, GeneratorConfig, SyntheticDataset};

fn dataset() -> SyntheticDataset {
    synth::generate(GeneratorConfig {
        n_rows: 600,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

fn failing_tests_plan() -> AnalysisPlan {
    AnalysisPlan::new(vec![
        Step::filter(Condition::new(
            "test_status",
            Comparator::Eq,
            Operand::Scalar("failed".into()),
        )),
        Step::aggregate(tabplan::plan::AggFunc::Count, None, ["test_case_function"]),
        Step::limit(5),
    ])
}

fn question_fixtures(question: &str, reply: &str, n: usize) -> Vec<Fixture> {
    (0..n)
        .map(|_| Fixture {
            match_regex: Some(format!("^{}$", regex::escape(question))),
            response: Some(reply.into()),
            ..Fixture::default()
        })
        .collect()
}

#[test]
fn safe_mode_executes_the_voted_plan() {
    let data = dataset();
    let plan = failing_tests_plan();
    let q = "which test functions fail";
    let gw = scripted(question_fixtures(q, &plan_reply(&plan), 3));
    let mut seen = Vec::new();
    let outcome = answer_query(
        q,
        &data.table,
        &data.kb,
        &gw,
        &QueryConfig::default(),
        &mut |d, steps| {
            seen.push((d.chosen_votes, steps.len()));
        },
    )
    .unwrap();
    assert_eq!(seen, [(3, 3)]);
    let (expected, _) = execute_plan(&plan, &data.table);
    assert_eq!(outcome.run.final_table, expected);
    assert_eq!(outcome.run.reflection_attempts_total, 0);
    assert!(outcome.timings.total_ms >= outcome.timings.planning_ms);
}

#[test]
fn natural_language_mode_realizes_each_step_with_reflection() {
    let data = dataset();
    let plan = failing_tests_plan();
    let q = "which test functions fail";
    let mut fixtures = question_fixtures(q, &plan_reply(&plan), 3);
    fixtures.push(Fixture::any(step_to_wire(&plan.steps[0])));
    fixtures.push(Fixture::any(step_to_wire(&Step::aggregate(
        tabplan::plan::AggFunc::Count,
        None,
        ["no_such_column"],
    ))));
    fixtures.push(Fixture::any(format!(
        "```json\n{}\n```",
        step_to_wire(&plan.steps[1])
    )));
    fixtures.push(Fixture::any(step_to_wire(&plan.steps[2])));
    let gw = scripted(fixtures);
    let config = QueryConfig {
        mode: Mode::NaturalLanguage,
        ..QueryConfig::default()
    };
    let outcome = answer_query(q, &data.table, &data.kb, &gw, &config, &mut |_, _| {}).unwrap();
    let (expected, _) = execute_plan(&plan, &data.table);
    assert_eq!(outcome.run.final_table, expected);
    assert_eq!(outcome.run.reflection_attempts_total, 1);
    assert_eq!(outcome.run.memory.len(), 4);
    let failed = &outcome.run.memory[1];
    assert_eq!((failed.step_index, failed.attempt_index), (1, 0));
    assert!(failed.error.as_deref().unwrap().contains("no_such_column"));
    assert!(outcome.run.memory[2].execution_excerpt.is_some());
    assert!(outcome.run.memory[2].task_context.contains("Step 1 (done)"));
    assert_eq!(outcome.run.plan_executed, plan);
}

#[test]
fn realization_failure_keeps_the_decision() {
    let data = dataset();
    let plan = failing_tests_plan();
    let q = "which test functions fail";
    let mut fixtures = question_fixtures(q, &plan_reply(&plan), 3);
    fixtures.extend((0..2).map(|_| Fixture::any("{\"kind\": \"teleport\"}")));
    let gw = scripted(fixtures);
    let config = QueryConfig {
        mode: Mode::NaturalLanguage,
        max_retries: 1,
        ..QueryConfig::default()
    };
    let err = answer_query(q, &data.table, &data.kb, &gw, &config, &mut |_, _| {}).unwrap_err();
    assert!(!err.is_planning_failure());
    assert_eq!(err.memory().len(), 2);
    match err {
        QueryError::Realization { decision, source, .. } => {
            assert_eq!(decision.chosen, plan);
            assert!(matches!(source, ActorError::Realization { step_index: 0, .. }));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn backend_outage_is_not_a_planning_failure() {
    let data = dataset();
    let gw = scripted(vec![Fixture::server_error(); 8]);
    let err = answer_query(
        "q",
        &data.table,
        &data.kb,
        &gw,
        &QueryConfig::default(),
        &mut |_, _| {},
    )
    .unwrap_err();
    assert!(!err.is_planning_failure());
    assert!(matches!(
        err,
        QueryError::Planning {
            source: PlannerError::Llm(_),
            ..
        }
    ));
}

#[test]
fn outage_mid_sweep_aborts_with_a_partial_report() {
    let suite = default_suite();
    let data = synth::generate(suite.dataset).unwrap();
    let cases = generate_cases(&suite.seeds, &data.table).unwrap();
    let mut fixtures = oracle_fixtures(&cases[..5], &[0], 1);
    fixtures.extend(vec![Fixture::server_error(); 8]);
    let config = SuiteConfig {
        k_shots: vec![0],
        planner: tabplan::planner::PlannerConfig {
            n_samples: 1,
            parallelism: 1,
            ..Default::default()
        },
        ..SuiteConfig::default()
    };
    match run_suite(
        "default",
        &cases,
        &data.table,
        &data.kb,
        &config,
        &scripted(fixtures),
    ) {
        Err(BenchError::Aborted { report, .. }) => {
            assert!(report.incomplete);
            assert_eq!(report.outcomes.len(), 5);
            assert!(report.outcomes.iter().all(|o| o.success));
            let (text, doc) = format_report(&report);
            assert!(text.starts_with("INCOMPLETE"));
            assert_eq!(doc["incomplete"], true);
        }
        other => panic!("{:?}", other.map(|r| r.rows)),
    }
}

#[test]
fn k_above_the_stored_examples_is_a_precondition_error() {
    let suite = default_suite();
    let data = synth::generate(GeneratorConfig {
        n_rows: 300,
        ..suite.dataset
    })
    .unwrap();
    let cases = generate_cases(&suite.seeds, &data.table).unwrap();
    let config = SuiteConfig {
        k_shots: vec![data.kb.examples.len() + 1],
        ..SuiteConfig::default()
    };
    let err = run_suite(
        "default",
        &cases,
        &data.table,
        &data.kb,
        &config,
        &scripted(vec![]),
    )
    .unwrap_err();
    assert!(matches!(err, BenchError::Precondition(_)));
}

#[test]
fn suites_load_by_name_or_file() {
    assert_eq!(load_suite("default").unwrap(), default_suite());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("suite.json");
    std::fs::write(&path, serde_json::to_string(&default_suite()).unwrap()).unwrap();
    assert_eq!(load_suite(path.to_str().unwrap()).unwrap(), default_suite());
    std::fs::write(&path, "{\"name\": 1}").unwrap();
    assert!(matches!(
        load_suite(path.to_str().unwrap()),
        Err(BenchError::Precondition(_))
    ));
    assert!(load_suite("/no/such/suite.json").is_err());
}
