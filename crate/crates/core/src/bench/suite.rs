//! The built-in 50-case suite: 16 ablation seeds over the seed-7 synthetic
//! dataset.

use super::{AblationSeed, BenchSuite};
use crate::plan::{
    AggFunc, AnalysisPlan, Comparator, Condition, Operand, Predicate, Selection, SortKey, Step,
};
use crate::synth::GeneratorConfig;
use crate::table::Value;

/// Cumulative case counts for bands 1, 1-2, 1-3, 1-4.
pub const SHIPPED_BAND_SIZES: [usize; 4] = [16, 32, 44, 50];

fn eq(col: &str, v: impl Into<Value>) -> Predicate {
    Condition::eq(col, v).into()
}

fn cmp(col: &str, op: Comparator, v: impl Into<Value>) -> Predicate {
    Condition::new(col, op, Operand::Scalar(v.into())).into()
}

fn and(parts: Vec<Predicate>) -> Predicate {
    Predicate::And(parts)
}

fn seed(id: &str, steps: Vec<Step>, queries: &[&str]) -> AblationSeed {
    AblationSeed {
        id: id.into(),
        plan: AnalysisPlan::new(steps),
        queries: queries.iter().map(|q| q.to_string()).collect(),
    }
}

fn count_by(col: &str) -> Step {
    Step::aggregate(AggFunc::Count, None, [col])
}

fn no_group() -> Vec<String> {
    Vec::new()
}

pub fn default_suite() -> BenchSuite {
    let seeds = vec![
        // slice, grouped aggregate, sort, limit
        seed(
            "S01",
            vec![
                Step::filter(and(vec![eq("release_candidate", "RC12"), eq("test_status", "failed")])),
                count_by("test_case_function"),
                Step::sort(vec![SortKey::desc("count")]),
                Step::limit(5),
            ],
            &[
                "Show all failed test executions on RC12.",
                "How many failed executions does each test case function have on RC12?",
                "List the failure counts per test case function on RC12, most failures first.",
                "Which five test case functions failed most often on RC12?",
            ],
        ),
        seed(
            "S02",
            vec![
                Step::filter(eq("test_status", "blocked")),
                count_by("vehicle_model"),
                Step::sort(vec![SortKey::desc("count")]),
                Step::limit(1),
            ],
            &[
                "Show all blocked test executions.",
                "How many blocked executions are there per vehicle model?",
                "Rank the vehicle models by number of blocked executions, highest first.",
                "Which vehicle model has the most blocked executions?",
            ],
        ),
        seed(
            "S03",
            vec![
                Step::filter(and(vec![
                    eq("integration_level", "HiL"),
                    Condition::new(
                        "test_status",
                        Comparator::In,
                        Operand::List(vec!["failed".into(), "blocked".into()]),
                    )
                    .into(),
                ])),
                Step::aggregate(AggFunc::Mean, Some("duration_s"), ["software_component"]),
                Step::sort(vec![SortKey::desc("mean_duration_s")]),
                Step::limit(3),
            ],
            &[
                "Show HiL executions that failed or were blocked.",
                "What is the mean duration of failed or blocked HiL executions per software component?",
                "Sort software components by mean duration of their failed or blocked HiL executions, longest first.",
                "Which three software components have the longest mean duration for failed or blocked HiL executions?",
            ],
        ),
        seed(
            "S04",
            vec![
                Step::filter(and(vec![eq("test_status", "failed"), eq("severity", "critical")])),
                count_by("release_candidate"),
                Step::sort(vec![SortKey::desc("count"), SortKey::asc("release_candidate")]),
                Step::limit(3),
            ],
            &[
                "Show failed executions with a critical defect.",
                "How many critical failures does each release candidate have?",
                "Order the release candidates by number of critical failures, most first, breaking ties by name.",
                "Which three release candidates have the most critical failures?",
            ],
        ),
        // three basic steps, then an advanced one
        seed(
            "S05",
            vec![
                Step::filter(eq("release_candidate", "RC5")),
                Step::filter(eq("test_status", "N/A")),
                Step::select(["software_component", "duration_s"]),
                Step::aggregate(AggFunc::Mean, Some("duration_s"), ["software_component"]),
            ],
            &[
                "Show all executions on RC5.",
                "Show executions on RC5 whose status is N/A.",
                "List software component and duration for N/A executions on RC5.",
                "What is the mean duration of N/A executions on RC5 per software component?",
            ],
        ),
        seed(
            "S06",
            vec![
                Step::filter(eq("market", "EU")),
                Step::filter(eq("integration_level", "vehicle")),
                Step::select(["vehicle_model", "vehicle_speed_kph"]),
                Step::aggregate(AggFunc::Median, Some("vehicle_speed_kph"), no_group()),
            ],
            &[
                "Show executions for the EU market.",
                "Show in-vehicle executions for the EU market.",
                "List vehicle model and peak speed for in-vehicle EU executions.",
                "What is the median peak vehicle speed of in-vehicle EU executions?",
            ],
        ),
        // two basic steps, then an advanced one
        seed(
            "S07",
            vec![
                Step::filter(eq("test_case_function", "emergency_braking")),
                Step::filter(eq("test_status", "failed")),
                Step::aggregate(AggFunc::DistinctCount, Some("release_candidate"), no_group()),
            ],
            &[
                "Show all emergency braking executions.",
                "Show failed emergency braking executions.",
                "In how many different release candidates did emergency braking fail?",
            ],
        ),
        seed(
            "S08",
            vec![
                Step::filter(and(vec![eq("release_candidate", "RC12"), eq("test_status", "passed")])),
                Step::filter(eq("integration_level", "SiL")),
                Step::aggregate(AggFunc::Sum, Some("duration_s"), no_group()),
            ],
            &[
                "Show passed executions on RC12.",
                "Show passed SiL executions on RC12.",
                "What is the total duration of passed SiL executions on RC12?",
            ],
        ),
        // four basic steps
        seed(
            "S09",
            vec![
                Step::filter(eq("test_status", "failed")),
                Step::filter(cmp("retry_count", Comparator::Ge, 2i64)),
                Step::sort(vec![SortKey::desc("executed_at")]),
                Step::limit(10),
            ],
            &[
                "Show all failed executions.",
                "Show failed executions that were retried at least twice.",
                "Show failed executions retried at least twice, newest first.",
                "What are the ten most recent failed executions that were retried at least twice?",
            ],
        ),
        // basic then advanced
        seed(
            "S10",
            vec![
                Step::filter(eq("test_status", "failed")),
                count_by("release_candidate"),
            ],
            &[
                "Show every failed execution.",
                "How many failed executions does each release candidate have?",
            ],
        ),
        // three basic steps
        seed(
            "S11",
            vec![
                Step::filter(eq("severity", "high")),
                Step::select(["defect_id", "test_case_function", "executed_at"]),
                Step::sort(vec![SortKey::asc("executed_at")]),
            ],
            &[
                "Show executions linked to a high-severity defect.",
                "List defect id, test case function and execution time for high-severity defects.",
                "List high-severity defects with their test case function in order of execution time, oldest first.",
            ],
        ),
        seed(
            "S12",
            vec![
                Step::filter(eq("test_track", "winter_lake")),
                Step::sort(vec![SortKey::asc("ambient_temp_c"), SortKey::asc("record_id")]),
                Step::limit(5),
            ],
            &[
                "Show executions on the winter lake track.",
                "Sort winter lake executions from coldest to warmest, then by record id.",
                "Which five winter lake executions ran at the lowest ambient temperature?",
            ],
        ),
        // two basic steps
        seed(
            "S13",
            vec![
                Step::slice(
                    Selection::Columns(vec!["test_case_function".into()]),
                    Some(and(vec![eq("release_candidate", "RC7"), eq("test_status", "failed")])),
                ),
                Step::distinct(["test_case_function"]),
            ],
            &[
                "List the test case function of every failed execution on RC7.",
                "Which test case functions failed on RC7?",
            ],
        ),
        seed(
            "S14",
            vec![
                Step::filter(eq("test_status", "N/A")),
                Step::sort(vec![SortKey::desc("duration_s"), SortKey::asc("record_id")]),
            ],
            &[
                "Show executions whose status is N/A.",
                "Show N/A executions from longest to shortest duration, then by record id.",
            ],
        ),
        seed(
            "S15",
            vec![
                Step::filter(and(vec![eq("ecu", "ECU-C3"), eq("is_automated", false)])),
                Step::limit(20),
            ],
            &[
                "Show manual executions on ECU-C3.",
                "Show the first 20 manual executions on ECU-C3.",
            ],
        ),
        seed(
            "S16",
            vec![
                Step::filter(cmp("cpu_load_pct", Comparator::Gt, 95.0)),
                Step::select(["ecu", "cpu_load_pct", "release_candidate"]),
            ],
            &[
                "Show executions with a CPU load above 95 percent.",
                "List ECU, CPU load and release candidate for executions above 95 percent CPU load.",
            ],
        ),
    ];
    BenchSuite {
        name: "default".into(),
        dataset: GeneratorConfig::with_seed(7),
        seeds,
    }
}
