//! C ABI over the tabplan core.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `tp_*` constructor and released by the matching `tp_*_free`. Functions
//! return a [`TpStatus`]; on failure the message is available from
//! [`tp_last_error`] on the same thread. Strings returned through `char**`
//! out-parameters are owned by the caller and released with
//! [`tp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use tabplan::bench::strict_match;
use tabplan::exec::execute_plan;
use tabplan::kb::KnowledgeBase;
use tabplan::llm::{BackendConfig, Fixture, Gateway, ScriptedBackend};
use tabplan::pipeline::{answer_query, QueryConfig, QueryError};
use tabplan::plan::{
    classify_difficulty, parse_plan, plan_to_wire, render_steps, validate_plan, AnalysisPlan,
};
use tabplan::synth::{generate, GeneratorConfig};
use tabplan::table::{load_csv, write_csv, Table};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    /// Malformed input document (CSV, JSON, plan).
    Parse = 4,
    /// Well-formed input that breaks a schema or plan rule.
    Invalid = 5,
    PlanningFailed = 6,
    RealizationFailed = 7,
    Llm = 8,
    Panic = 9,
}

/// A typed in-memory table.
pub struct TpTable(Table);

/// A knowledge base: schema, field notes, constraints and examples.
pub struct TpKb(KnowledgeBase);

/// A plan bound to the schema it was parsed against.
pub struct TpPlan(AnalysisPlan);

/// A language-model gateway.
pub struct TpGateway(Gateway);

struct Error {
    status: TpStatus,
    message: String,
}

impl Error {
    fn new(status: TpStatus, message: impl Into<String>) -> Self {
        Error {
            status,
            message: message.into(),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

/// Runs `f`, converting errors and panics into a status and a stored
/// message.
fn guard(f: impl FnOnce() -> Result<(), Error>) -> TpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TpStatus::Ok
        }
        Ok(Err(e)) => {
            set_last_error(&e.message);
            e.status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {message}"));
            TpStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, name: &str) -> Result<&'a T, Error> {
    p.as_ref()
        .ok_or_else(|| Error::new(TpStatus::NullArgument, format!("{name} is null")))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Error> {
    if p.is_null() {
        return Err(Error::new(TpStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::new(TpStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn out<T>(slot: *mut *mut T, name: &str) -> Result<&'static mut *mut T, Error> {
    slot.as_mut()
        .ok_or_else(|| Error::new(TpStatus::NullArgument, format!("{name} is null")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("no interior nul")
        .into_raw()
}

/// The message of the last failed call on this thread, or null. Valid until
/// the next `tp_*` call on the same thread.
#[no_mangle]
pub extern "C" fn tp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from a `tp_*` out-parameter and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates the seeded synthetic dataset and its knowledge base. Either
/// out-parameter may be null when not wanted.
///
/// # Safety
/// Non-null out-parameters must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tp_synthetic_generate(
    seed: u64,
    rows: usize,
    out_table: *mut *mut TpTable,
    out_kb: *mut *mut TpKb,
) -> TpStatus {
    guard(|| {
        let config = GeneratorConfig {
            n_rows: rows,
            ..GeneratorConfig::with_seed(seed)
        };
        let d = generate(config).map_err(|e| Error::new(TpStatus::Invalid, e.to_string()))?;
        if let Some(slot) = out_table.as_mut() {
            *slot = Box::into_raw(Box::new(TpTable(d.table)));
        }
        if let Some(slot) = out_kb.as_mut() {
            *slot = Box::into_raw(Box::new(TpKb(d.kb)));
        }
        Ok(())
    })
}

/// Parses and validates a knowledge-base JSON document.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tp_kb_from_json(json: *const c_char, out_kb: *mut *mut TpKb) -> TpStatus {
    guard(|| {
        let slot = out(out_kb, "out_kb")?;
        let kb = KnowledgeBase::from_json(text(json, "json")?)
            .map_err(|e| Error::new(TpStatus::Parse, e.to_string()))?;
        *slot = Box::into_raw(Box::new(TpKb(kb)));
        Ok(())
    })
}

/// Serializes a knowledge base to JSON.
///
/// # Safety
/// `kb` must be a live handle; `out_json` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tp_kb_to_json(kb: *const TpKb, out_json: *mut *mut c_char) -> TpStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        *slot = into_c_string(borrow(kb, "kb")?.0.to_json());
        Ok(())
    })
}

/// # Safety
/// `kb` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tp_kb_free(kb: *mut TpKb) {
    if !kb.is_null() {
        drop(Box::from_raw(kb));
    }
}

/// Loads CSV bytes against the knowledge base's schema.
///
/// # Safety
/// `data` must point to `len` readable bytes; `kb` must be live; `out_table`
/// must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tp_table_load_csv(
    data: *const u8,
    len: usize,
    kb: *const TpKb,
    out_table: *mut *mut TpTable,
) -> TpStatus {
    guard(|| {
        let slot = out(out_table, "out_table")?;
        if data.is_null() && len > 0 {
            return Err(Error::new(TpStatus::NullArgument, "data is null"));
        }
        let bytes: &[u8] = if len == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(data, len)
        };
        let kb = borrow(kb, "kb")?;
        let table = load_csv(bytes, &kb.0.schema).map_err(|e| Error::new(TpStatus::Parse, e.to_string()))?;
        *slot = Box::into_raw(Box::new(TpTable(table)));
        Ok(())
    })
}

/// # Safety
/// `table` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tp_table_row_count(table: *const TpTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.row_count())
}

/// # Safety
/// `table` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tp_table_column_count(table: *const TpTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.schema().fields().len())
}

/// Writes the table as CSV text.
///
/// # Safety
/// `table` must be live; `out_csv` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tp_table_to_csv(table: *const TpTable, out_csv: *mut *mut c_char) -> TpStatus {
    guard(|| {
        let slot = out(out_csv, "out_csv")?;
        let mut buf = Vec::new();
        write_csv(&borrow(table, "table")?.0, &mut buf)
            .map_err(|e| Error::new(TpStatus::Io, e.to_string()))?;
        let s = String::from_utf8(buf).map_err(|e| Error::new(TpStatus::InvalidUtf8, e.to_string()))?;
        *slot = into_c_string(s);
        Ok(())
    })
}

/// Writes the table as a JSON document with typed column headers and rows.
///
/// # Safety
/// `table` must be live; `out_json` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tp_table_to_json(table: *const TpTable, out_json: *mut *mut c_char) -> TpStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        let doc = borrow(table, "table")?.0.to_document();
        *slot = into_c_string(serde_json::to_string(&doc).expect("document serializes"));
        Ok(())
    })
}

/// # Safety
/// `table` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tp_table_free(table: *mut TpTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Parses a plan document and binds it to `table`'s schema. Fails with
/// `Parse` on a malformed document and `Invalid` on rule violations.
///
/// # Safety
/// `document` must be nul-terminated; `table` live; `out_plan` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_plan_parse(
    document: *const c_char,
    table: *const TpTable,
    out_plan: *mut *mut TpPlan,
) -> TpStatus {
    guard(|| {
        let slot = out(out_plan, "out_plan")?;
        let schema = borrow(table, "table")?.0.schema();
        let plan = parse_plan(text(document, "document")?, schema).map_err(|e| {
            let status = if e.violations().is_empty() {
                TpStatus::Parse
            } else {
                TpStatus::Invalid
            };
            Error::new(status, e.to_string())
        })?;
        *slot = Box::into_raw(Box::new(TpPlan(plan)));
        Ok(())
    })
}

/// Difficulty level 1-4, or 0 for a null plan.
///
/// # Safety
/// `plan` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn tp_plan_difficulty(plan: *const TpPlan) -> u8 {
    plan.as_ref().map_or(0, |p| classify_difficulty(&p.0).level())
}

/// The plan's steps as plain sentences, one per line.
///
/// # Safety
/// `plan` must be live; `out_text` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_plan_render_steps(plan: *const TpPlan, out_text: *mut *mut c_char) -> TpStatus {
    guard(|| {
        let slot = out(out_text, "out_text")?;
        *slot = into_c_string(render_steps(&borrow(plan, "plan")?.0).join("\n"));
        Ok(())
    })
}

/// The plan as a wire document.
///
/// # Safety
/// `plan` must be live; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_plan_to_json(plan: *const TpPlan, out_json: *mut *mut c_char) -> TpStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        *slot = into_c_string(plan_to_wire(&borrow(plan, "plan")?.0));
        Ok(())
    })
}

/// # Safety
/// `plan` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tp_plan_free(plan: *mut TpPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Executes `plan` over `table`. The plan is revalidated against the
/// table's schema first, so a plan parsed for another schema fails with
/// `Invalid` rather than executing.
///
/// # Safety
/// `plan` and `table` must be live; `out_table` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_execute(
    plan: *const TpPlan,
    table: *const TpTable,
    out_table: *mut *mut TpTable,
) -> TpStatus {
    guard(|| {
        let slot = out(out_table, "out_table")?;
        let plan = &borrow(plan, "plan")?.0;
        let table = &borrow(table, "table")?.0;
        let violations = validate_plan(plan, table.schema());
        if let Some(v) = violations.first() {
            return Err(Error::new(TpStatus::Invalid, v.to_string()));
        }
        let (result, _) = execute_plan(plan, table);
        *slot = Box::into_raw(Box::new(TpTable(result)));
        Ok(())
    })
}

/// Strict match of `actual` against `expected`. On a mismatch `out_diff`
/// (when non-null) receives a description; on a match it is set to null.
///
/// # Safety
/// Tables must be live; `out_matched` writable; `out_diff` null or writable.
#[no_mangle]
pub unsafe extern "C" fn tp_strict_match(
    actual: *const TpTable,
    expected: *const TpTable,
    ordered: bool,
    out_matched: *mut bool,
    out_diff: *mut *mut c_char,
) -> TpStatus {
    guard(|| {
        let matched = out_matched
            .as_mut()
            .ok_or_else(|| Error::new(TpStatus::NullArgument, "out_matched is null"))?;
        let verdict = strict_match(
            &borrow(actual, "actual")?.0,
            &borrow(expected, "expected")?.0,
            ordered,
        );
        *matched = verdict.matched;
        if let Some(slot) = out_diff.as_mut() {
            *slot = verdict
                .diff
                .map_or(ptr::null_mut(), |d| into_c_string(d.to_string()));
        }
        Ok(())
    })
}

/// A gateway replaying a JSON array of scripted fixtures.
///
/// # Safety
/// `fixtures_json` must be nul-terminated; `out_gateway` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_gateway_scripted(
    fixtures_json: *const c_char,
    out_gateway: *mut *mut TpGateway,
) -> TpStatus {
    guard(|| {
        let slot = out(out_gateway, "out_gateway")?;
        let fixtures: Vec<Fixture> = serde_json::from_str(text(fixtures_json, "fixtures_json")?)
            .map_err(|e| Error::new(TpStatus::Parse, e.to_string()))?;
        let backend =
            ScriptedBackend::try_new(fixtures).map_err(|e| Error::new(TpStatus::Parse, e.to_string()))?;
        let gateway = Gateway::new(Arc::new(backend), BackendConfig::default());
        *slot = Box::into_raw(Box::new(TpGateway(gateway)));
        Ok(())
    })
}

/// # Safety
/// `gateway` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tp_gateway_free(gateway: *mut TpGateway) {
    if !gateway.is_null() {
        drop(Box::from_raw(gateway));
    }
}

/// Plans `question` with `n_samples` votes and `k_shot` examples, then
/// executes the chosen plan in safe mode. `out_plan_json` may be null.
///
/// # Safety
/// Handles must be live; `question` nul-terminated; `out_table` writable;
/// `out_plan_json` null or writable.
#[no_mangle]
pub unsafe extern "C" fn tp_answer_query(
    question: *const c_char,
    table: *const TpTable,
    kb: *const TpKb,
    gateway: *const TpGateway,
    k_shot: usize,
    n_samples: usize,
    out_table: *mut *mut TpTable,
    out_plan_json: *mut *mut c_char,
) -> TpStatus {
    guard(|| {
        let slot = out(out_table, "out_table")?;
        let config = QueryConfig {
            k_shot,
            n_samples,
            parallelism: n_samples.max(1),
            ..QueryConfig::default()
        };
        let done = answer_query(
            text(question, "question")?,
            &borrow(table, "table")?.0,
            &borrow(kb, "kb")?.0,
            &borrow(gateway, "gateway")?.0,
            &config,
            &mut |_, _| {},
        )
        .map_err(|e| {
            let status = match &e {
                QueryError::Planning { .. } if e.is_planning_failure() => TpStatus::PlanningFailed,
                QueryError::Planning {
                    source: tabplan::planner::PlannerError::Llm(_),
                    ..
                } => TpStatus::Llm,
                QueryError::Planning { .. } => TpStatus::Invalid,
                QueryError::Realization { .. } => TpStatus::RealizationFailed,
            };
            Error::new(status, e.to_string())
        })?;
        if let Some(plan_slot) = out_plan_json.as_mut() {
            *plan_slot = into_c_string(plan_to_wire(&done.decision.chosen));
        }
        *slot = Box::into_raw(Box::new(TpTable(done.run.final_table)));
        Ok(())
    })
}
