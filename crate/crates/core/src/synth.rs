//! Seeded generator for a synthetic table of vehicle software test results.
//!
//! Field names, value ranges and distributions are invented. The generator
//! uses ChaCha8 with integer-only sampling so a seed produces the same bytes
//! on every platform.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{ConstraintSet, FewShotExample, FieldNote, KnowledgeBase, TermEntry};
use crate::plan::{classify_difficulty, AggFunc, AnalysisPlan, Condition, Selection, SortKey, Step};
use crate::table::{write_csv, ColumnType, FieldSpec, Schema, Table, TableError, Timestamp, Value};

pub const TEST_STATUSES: [&str; 4] = ["passed", "failed", "N/A", "blocked"];

const FUNCTIONS: [&str; 30] = [
    "emergency_braking",
    "lane_keeping",
    "adaptive_cruise",
    "park_assist",
    "traffic_sign_recognition",
    "blind_spot_detection",
    "rear_cross_traffic",
    "driver_monitoring",
    "night_vision",
    "hill_start_assist",
    "battery_management",
    "charging_control",
    "thermal_management",
    "infotainment_boot",
    "navigation_routing",
    "voice_control",
    "ota_update",
    "keyless_entry",
    "seat_memory",
    "climate_control",
    "headlight_leveling",
    "wiper_control",
    "tire_pressure_monitoring",
    "steering_torque",
    "torque_vectoring",
    "regenerative_braking",
    "trailer_assist",
    "surround_view",
    "ecall",
    "diagnostics_logging",
];

const COMPONENTS: [&str; 10] = [
    "adas_core",
    "brake_controller",
    "powertrain",
    "body_control",
    "infotainment",
    "gateway",
    "battery_system",
    "chassis",
    "telematics",
    "hmi",
];

const VEHICLE_MODELS: [&str; 6] = ["Aurora", "Borealis", "Cirrus", "Delta", "Equinox", "Fjord"];
const INTEGRATION_LEVELS: [&str; 4] = ["unit", "SiL", "HiL", "vehicle"];
const TRACKS: [&str; 5] = [
    "north_loop",
    "high_speed_oval",
    "city_course",
    "winter_lake",
    "lab",
];
const SUITES: [&str; 8] = [
    "smoke",
    "regression",
    "nightly",
    "release",
    "endurance",
    "safety",
    "performance",
    "compat",
];
const ECUS: [&str; 8] = [
    "ECU-A1", "ECU-A2", "ECU-B1", "ECU-C3", "ECU-D1", "ECU-E2", "ECU-F1", "ECU-G4",
];
const SUPPLIERS: [&str; 5] = ["Alvus", "Bremco", "Corvane", "Dynatek", "Elmira"];
const SEVERITIES: [&str; 4] = ["low", "medium", "high", "critical"];
const BRANCHES: [&str; 4] = ["main", "release", "hotfix", "feature"];
const MARKETS: [&str; 4] = ["EU", "US", "CN", "JP"];
const DRIVE_MODES: [&str; 4] = ["eco", "comfort", "sport", "off_road"];
const WEATHER: [&str; 5] = ["clear", "rain", "snow", "fog", "overcast"];
const SURFACES: [&str; 4] = ["asphalt", "gravel", "ice", "wet_asphalt"];
const BENCHES: [&str; 6] = [
    "bench_01", "bench_02", "bench_03", "bench_04", "bench_05", "bench_06",
];
const ERROR_CODES: [&str; 6] = ["E101", "E204", "E317", "E422", "E530", "E615"];
const COMMENTS: [&str; 5] = [
    "rerun requested",
    "flaky signal",
    "waiting for hardware",
    "log attached",
    "known issue",
];

/// 2024-01-01T00:00:00Z
const EPOCH: i64 = 1_704_067_200;
const FORTNIGHT: i64 = 14 * 24 * 3600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_rows: usize,
    pub n_release_candidates: usize,
    pub n_test_functions: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 7,
            n_rows: 55_000,
            n_release_candidates: 12,
            n_test_functions: 30,
        }
    }
}

impl GeneratorConfig {
    pub fn with_seed(seed: u64) -> Self {
        GeneratorConfig {
            seed,
            ..GeneratorConfig::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub table: Table,
    pub schema: Schema,
    pub kb: KnowledgeBase,
}

pub fn release_candidates(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("RC{i}")).collect()
}

pub fn test_functions(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match i / FUNCTIONS.len() {
            0 => FUNCTIONS[i].to_string(),
            round => format!("{}_{}", FUNCTIONS[i % FUNCTIONS.len()], round + 1),
        })
        .collect()
}

fn text(name: &str, description: &str) -> FieldSpec {
    FieldSpec::new(name, ColumnType::Text).describe(description)
}

fn typed(name: &str, ty: ColumnType, description: &str) -> FieldSpec {
    FieldSpec::new(name, ty).describe(description)
}

/// The 40-field schema for `config`.
pub fn schema(config: &GeneratorConfig) -> Schema {
    use ColumnType::*;
    let fields = vec![
        text(
            "release_candidate",
            "Release candidate build the test ran against, RC1 being the oldest.",
        )
        .with_states(release_candidates(config.n_release_candidates)),
        text(
            "software_component",
            "Software component that owns the tested function.",
        )
        .with_states(COMPONENTS),
        text(
            "test_case_function",
            "Vehicle function exercised by the test case.",
        ),
        text("test_status", "Outcome of the test execution.").with_states(TEST_STATUSES),
        text("vehicle_model", "Vehicle model or platform the test ran on.").with_states(VEHICLE_MODELS),
        text(
            "integration_level",
            "Integration level: unit, software-in-the-loop, hardware-in-the-loop or full vehicle.",
        )
        .with_states(INTEGRATION_LEVELS),
        text("test_track", "Track or facility where the test was executed."),
        typed("executed_at", Timestamp, "UTC time the execution started."),
        typed("duration_s", Float, "Execution time in seconds."),
        text("tester_id", "Identifier of the responsible tester."),
        typed("record_id", Integer, "Unique row number."),
        text("test_case_id", "Identifier of the test case specification."),
        text("test_suite", "Suite the test case belongs to."),
        text("ecu", "Electronic control unit under test."),
        text("software_version", "Software version string of the component."),
        text(
            "hardware_revision",
            "Hardware revision of the test bench or vehicle.",
        ),
        text("supplier", "Supplier of the component."),
        text("requirement_id", "Requirement covered by the test case."),
        text(
            "defect_id",
            "Linked defect ticket; present only for failed tests.",
        ),
        text(
            "severity",
            "Severity of the linked defect; present only for failed tests.",
        )
        .with_states(SEVERITIES),
        typed("priority", Integer, "Test priority from 1 (highest) to 5."),
        typed(
            "retry_count",
            Integer,
            "Number of automatic reruns before the final status.",
        ),
        typed(
            "is_regression",
            Boolean,
            "Whether the test belongs to the regression set.",
        ),
        typed(
            "is_automated",
            Boolean,
            "Whether the test ran without manual steps.",
        ),
        typed("ambient_temp_c", Float, "Ambient temperature in degrees Celsius."),
        typed(
            "vehicle_speed_kph",
            Float,
            "Peak vehicle speed during the test in km/h.",
        ),
        typed("battery_voltage_v", Float, "Supply voltage at test start."),
        typed("cpu_load_pct", Float, "Peak CPU load of the ECU in percent."),
        typed("memory_usage_mb", Float, "Peak memory use of the ECU in MB."),
        typed("log_size_kb", Integer, "Size of the captured log in KB."),
        typed("signal_count", Integer, "Number of bus signals recorded."),
        text("error_code", "Diagnostic error code raised, if any."),
        typed(
            "build_number",
            Integer,
            "CI build number of the software under test.",
        ),
        text("branch", "Source branch of the build."),
        text("market", "Target market variant.").with_states(MARKETS),
        text("drive_mode", "Drive mode selected during the test."),
        text("weather", "Weather during on-road tests."),
        text("road_surface", "Road surface during on-road tests."),
        text("test_bench", "Bench used for lab tests."),
        text("comment", "Free-text tester remark."),
    ];
    Schema::new(fields).expect("static schema is valid")
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &'a [&'a str]) -> &'a str {
    items[rng.gen_range(0..items.len() as u32) as usize]
}

fn percent(rng: &mut ChaCha8Rng) -> u32 {
    rng.gen_range(0..100u32)
}

/// Fixed-point float in `[lo, hi]` with `scale` steps per unit.
fn fixed(rng: &mut ChaCha8Rng, lo: i64, hi: i64, scale: u32) -> f64 {
    let steps = ((hi - lo) as u64) * scale as u64;
    let k = rng.gen_range(0..=steps);
    lo as f64 + k as f64 / scale as f64
}

/// Generates the table, its schema and a matching knowledge base.
pub fn generate(config: GeneratorConfig) -> Result<SyntheticDataset, SynthError> {
    if config.n_rows == 0 || config.n_release_candidates == 0 || config.n_test_functions == 0 {
        return Err(SynthError::Config("all counts must be positive".into()));
    }
    let schema = schema(&config);
    let rcs = release_candidates(config.n_release_candidates);
    let functions = test_functions(config.n_test_functions);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut columns: Vec<Vec<Value>> = (0..schema.len())
        .map(|_| Vec::with_capacity(config.n_rows))
        .collect();

    for row in 0..config.n_rows {
        let rc = rng.gen_range(0..rcs.len() as u32) as usize;
        let f = rng.gen_range(0..functions.len() as u32) as usize;
        // later candidates fail less
        let fail_pct = 24u32.saturating_sub((12 * rc / rcs.len().max(1)) as u32);
        let roll = percent(&mut rng);
        let status = if roll < fail_pct {
            "failed"
        } else if roll < fail_pct + 9 {
            "N/A"
        } else if roll < fail_pct + 14 {
            "blocked"
        } else {
            "passed"
        };
        let failed = status == "failed";
        let executed = EPOCH + rc as i64 * FORTNIGHT + rng.gen_range(0..FORTNIGHT as u64) as i64;
        let level = pick(&mut rng, &INTEGRATION_LEVELS);
        let on_road = level == "vehicle";

        let values: Vec<Value> = vec![
            rcs[rc].as_str().into(),
            COMPONENTS[f % COMPONENTS.len()].into(),
            functions[f].as_str().into(),
            status.into(),
            pick(&mut rng, &VEHICLE_MODELS).into(),
            level.into(),
            if on_road {
                pick(&mut rng, &TRACKS[..4])
            } else {
                "lab"
            }
            .into(),
            Value::Timestamp(Timestamp(executed)),
            Value::Float(fixed(&mut rng, 5, 6000, 100)),
            format!("T{:03}", rng.gen_range(1..=60u32)).into(),
            Value::Integer(row as i64 + 1),
            format!("TC-{:03}-{:02}", f + 1, rng.gen_range(1..=25u32)).into(),
            pick(&mut rng, &SUITES).into(),
            pick(&mut rng, &ECUS).into(),
            format!("{}.{}.{}", 1 + rc / 4, rc % 4, rng.gen_range(0..10u32)).into(),
            format!("rev_{}", (b'A' + rng.gen_range(0..5u8)) as char).into(),
            pick(&mut rng, &SUPPLIERS).into(),
            format!("REQ-{:04}", rng.gen_range(1..=2500u32)).into(),
            if failed {
                format!("DEF-{:05}", rng.gen_range(1..=99_999u32)).into()
            } else {
                Value::Null
            },
            if failed {
                pick(&mut rng, &SEVERITIES).into()
            } else {
                Value::Null
            },
            Value::Integer(rng.gen_range(1..=5u32) as i64),
            Value::Integer(if failed {
                rng.gen_range(0..=3u32)
            } else {
                rng.gen_range(0..=1u32)
            } as i64),
            Value::Boolean(percent(&mut rng) < 40),
            Value::Boolean(percent(&mut rng) < 75),
            Value::Float(fixed(&mut rng, -25, 45, 10)),
            Value::Float(if on_road { fixed(&mut rng, 0, 250, 10) } else { 0.0 }),
            Value::Float(fixed(&mut rng, 11, 15, 100)),
            Value::Float(fixed(&mut rng, 5, 100, 10)),
            Value::Float(fixed(&mut rng, 64, 2048, 10)),
            Value::Integer(rng.gen_range(1..=50_000u32) as i64),
            Value::Integer(rng.gen_range(10..=4000u32) as i64),
            if failed || percent(&mut rng) < 3 {
                pick(&mut rng, &ERROR_CODES).into()
            } else {
                Value::Null
            },
            Value::Integer(1000 + 40 * rc as i64 + rng.gen_range(0..40u32) as i64),
            pick(&mut rng, &BRANCHES).into(),
            pick(&mut rng, &MARKETS).into(),
            pick(&mut rng, &DRIVE_MODES).into(),
            if on_road {
                pick(&mut rng, &WEATHER).into()
            } else {
                Value::Null
            },
            if on_road {
                pick(&mut rng, &SURFACES).into()
            } else {
                Value::Null
            },
            if on_road {
                Value::Null
            } else {
                pick(&mut rng, &BENCHES).into()
            },
            if percent(&mut rng) < 10 {
                pick(&mut rng, &COMMENTS).into()
            } else {
                Value::Null
            },
        ];
        for (col, v) in columns.iter_mut().zip(values) {
            col.push(v);
        }
    }
    let table = Table::new(schema.clone(), columns)?;
    let kb = build_kb(&schema, &config);
    Ok(SyntheticDataset { table, schema, kb })
}

/// The knowledge base describing datasets generated with `config`.
pub fn knowledge_base(config: &GeneratorConfig) -> KnowledgeBase {
    build_kb(&schema(config), config)
}

fn build_kb(schema: &Schema, config: &GeneratorConfig) -> KnowledgeBase {
    let field_notes = schema
        .fields()
        .iter()
        .map(|f| FieldNote {
            field: f.name.clone(),
            note: match f.name.as_str() {
                "test_status" => format!(
                    "{} Four states exist: 'passed', 'failed', 'N/A' (not applicable to this \
configuration) and 'blocked' (could not run). Not failed does not mean passed.",
                    f.description
                ),
                "release_candidate" => format!(
                    "{} Values RC1 to RC{}; a higher number is a newer build.",
                    f.description, config.n_release_candidates
                ),
                _ => f.description.clone(),
            },
            states: f.states.clone(),
        })
        .collect();
    let terminology = vec![
        TermEntry {
            term: "release candidate".into(),
            definition: "A software build proposed for release; each one is tested before the go/no-go decision.".into(),
        },
        TermEntry {
            term: "test case function".into(),
            definition: "The vehicle function a test case verifies, such as emergency braking.".into(),
        },
        TermEntry {
            term: "integration level".into(),
            definition: "How much of the real system is present: unit, SiL (software in the loop), HiL (hardware in the loop) or vehicle.".into(),
        },
    ];
    KnowledgeBase::new(
        schema.clone(),
        field_notes,
        "Each row is one execution of a test case against a release candidate of the vehicle \
software. Rows record where and how the test ran, its final status and, for failures, the \
linked defect. The data is synthetic.",
        terminology,
        ConstraintSet::default(),
        examples(),
    )
    .expect("generated KB is consistent")
}

fn example(query: &str, reasoning: &[&str], steps: Vec<Step>) -> FewShotExample {
    let plan = AnalysisPlan::new(steps);
    FewShotExample {
        query: query.into(),
        reasoning: reasoning.iter().map(|s| s.to_string()).collect(),
        difficulty: classify_difficulty(&plan),
        plan,
    }
}

/// Curated few-shot store, in selection order.
fn examples() -> Vec<FewShotExample> {
    use crate::plan::Predicate;
    vec![
        example(
            "Which test case functions failed on RC3?",
            &[
                "Slicing: keep rows where release_candidate = 'RC3' and test_status = 'failed', selecting test_case_function.",
                "Operation: keep one row per distinct test_case_function.",
            ],
            vec![
                Step::slice(
                    Selection::Columns(vec!["test_case_function".into()]),
                    Some(Predicate::And(vec![
                        Condition::eq("release_candidate", "RC3").into(),
                        Condition::eq("test_status", "failed").into(),
                    ])),
                ),
                Step::distinct(["test_case_function"]),
            ],
        ),
        example(
            "How many tests were blocked on HiL benches per vehicle model?",
            &[
                "Slicing: keep rows where test_status = 'blocked' and integration_level = 'HiL'.",
                "Operation: count rows per vehicle_model.",
                "Operation: sort by count descending.",
            ],
            vec![
                Step::filter(Predicate::And(vec![
                    Condition::eq("test_status", "blocked").into(),
                    Condition::eq("integration_level", "HiL").into(),
                ])),
                Step::aggregate(AggFunc::Count, None, ["vehicle_model"]),
                Step::sort(vec![SortKey::desc("count")]),
            ],
        ),
        example(
            "What is the mean duration of passed emergency braking tests?",
            &[
                "Slicing: keep rows where test_case_function = 'emergency_braking' and test_status = 'passed'.",
                "Operation: compute the mean of duration_s.",
            ],
            vec![
                Step::filter(Predicate::And(vec![
                    Condition::eq("test_case_function", "emergency_braking").into(),
                    Condition::eq("test_status", "passed").into(),
                ])),
                Step::aggregate(AggFunc::Mean, Some("duration_s"), Vec::<String>::new()),
            ],
        ),
        example(
            "Which three software components had the most failed tests on RC2?",
            &[
                "Slicing: keep rows where release_candidate = 'RC2' and test_status = 'failed'.",
                "Operation: count rows per software_component.",
                "Operation: sort by count descending.",
                "Operation: keep the first 3 rows.",
            ],
            vec![
                Step::filter(Predicate::And(vec![
                    Condition::eq("release_candidate", "RC2").into(),
                    Condition::eq("test_status", "failed").into(),
                ])),
                Step::aggregate(AggFunc::Count, None, ["software_component"]),
                Step::sort(vec![SortKey::desc("count")]),
                Step::limit(3),
            ],
        ),
    ]
}

/// Writes `table` as CSV; empty tables produce a header-only file.
pub fn export_csv(table: &Table, path: &Path) -> Result<(), TableError> {
    let file = File::create(path)?;
    write_csv(table, BufWriter::new(file))
}
