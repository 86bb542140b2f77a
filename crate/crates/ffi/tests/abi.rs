use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use tabplan::kb::{ConstraintSet, FieldNote, KnowledgeBase};
use tabplan::table::{ColumnType, FieldSpec, Schema};
use tabplan_ffi::*;

fn last_error() -> String {
    let p = tp_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = CStr::from_ptr(s).to_string_lossy().into_owned();
    tp_string_free(s);
    out
}

struct Synthetic {
    table: *mut TpTable,
    kb: *mut TpKb,
}

impl Synthetic {
    fn new(seed: u64, rows: usize) -> Synthetic {
        let mut table = ptr::null_mut();
        let mut kb = ptr::null_mut();
        let status = unsafe { tp_synthetic_generate(seed, rows, &mut table, &mut kb) };
        assert_eq!(status, TpStatus::Ok);
        Synthetic { table, kb }
    }
}

impl Drop for Synthetic {
    fn drop(&mut self) {
        unsafe {
            tp_table_free(self.table);
            tp_kb_free(self.kb);
        }
    }
}

const PLAN: &str = r#"{"steps": [
  {"kind": "slice", "select": "all", "where": {"col": "test_status", "op": "eq", "value": "failed"}},
  {"kind": "aggregate", "func": "count", "group_by": ["release_candidate"]},
  {"kind": "sort", "keys": [{"col": "count", "order": "desc"}]}
]}"#;

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(tp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn csv_and_kb_round_trip() {
    let data = Synthetic::new(7, 250);
    unsafe {
        assert_eq!(tp_table_row_count(data.table), 250);
        assert_eq!(tp_table_column_count(data.table), 40);

        let mut csv = ptr::null_mut();
        assert_eq!(tp_table_to_csv(data.table, &mut csv), TpStatus::Ok);
        let csv = take(csv);
        let mut kb_json = ptr::null_mut();
        assert_eq!(tp_kb_to_json(data.kb, &mut kb_json), TpStatus::Ok);
        let kb_json = CString::new(take(kb_json)).unwrap();
        let mut kb = ptr::null_mut();
        assert_eq!(tp_kb_from_json(kb_json.as_ptr(), &mut kb), TpStatus::Ok);

        let mut back = ptr::null_mut();
        assert_eq!(
            tp_table_load_csv(csv.as_ptr(), csv.len(), kb, &mut back),
            TpStatus::Ok
        );
        let mut matched = false;
        let mut diff = ptr::null_mut();
        assert_eq!(
            tp_strict_match(back, data.table, true, &mut matched, &mut diff),
            TpStatus::Ok
        );
        assert!(matched);
        assert!(diff.is_null());

        let mut json = ptr::null_mut();
        assert_eq!(tp_table_to_json(back, &mut json), TpStatus::Ok);
        assert!(take(json).contains("\"rows\""));
        tp_table_free(back);
        tp_kb_free(kb);
    }
}

#[test]
fn parse_render_and_execute() {
    let data = Synthetic::new(7, 2000);
    let doc = CString::new(PLAN).unwrap();
    unsafe {
        let mut plan = ptr::null_mut();
        assert_eq!(tp_plan_parse(doc.as_ptr(), data.table, &mut plan), TpStatus::Ok);
        assert_eq!(tp_plan_difficulty(plan), 3);
        let mut steps = ptr::null_mut();
        assert_eq!(tp_plan_render_steps(plan, &mut steps), TpStatus::Ok);
        assert_eq!(take(steps).lines().count(), 3);

        let mut result = ptr::null_mut();
        assert_eq!(tp_execute(plan, data.table, &mut result), TpStatus::Ok);
        assert_eq!(tp_table_column_count(result), 2);
        assert!(tp_table_row_count(result) >= 1);

        let mut matched = true;
        let mut diff = ptr::null_mut();
        assert_eq!(
            tp_strict_match(result, data.table, false, &mut matched, &mut diff),
            TpStatus::Ok
        );
        assert!(!matched);
        assert!(!take(diff).is_empty());
        tp_table_free(result);

        let mut json = ptr::null_mut();
        assert_eq!(tp_plan_to_json(plan, &mut json), TpStatus::Ok);
        assert!(take(json).contains("release_candidate"));
        tp_plan_free(plan);
    }
}

#[test]
fn bad_inputs_report_status_and_message() {
    let data = Synthetic::new(7, 50);
    unsafe {
        let mut plan = ptr::null_mut();
        let broken = CString::new("{\"steps\": [").unwrap();
        assert_eq!(
            tp_plan_parse(broken.as_ptr(), data.table, &mut plan),
            TpStatus::Parse
        );
        assert!(plan.is_null());
        assert!(!last_error().is_empty());

        let unknown = CString::new(r#"{"steps": [{"kind": "limit", "n": 1}, {"kind": "sort", "keys": [{"col": "nope", "order": "asc"}]}]}"#).unwrap();
        assert_eq!(
            tp_plan_parse(unknown.as_ptr(), data.table, &mut plan),
            TpStatus::Invalid
        );
        assert!(last_error().contains("nope"));

        assert_eq!(
            tp_plan_parse(ptr::null(), data.table, &mut plan),
            TpStatus::NullArgument
        );
        assert_eq!(
            tp_execute(ptr::null(), data.table, ptr::null_mut()),
            TpStatus::NullArgument
        );
        assert_eq!(tp_table_row_count(ptr::null()), 0);

        let csv = b"release_candidate\nRC1\n";
        let mut table = ptr::null_mut();
        assert_ne!(
            tp_table_load_csv(csv.as_ptr(), csv.len(), data.kb, &mut table),
            TpStatus::Ok
        );
        assert!(table.is_null());

        let bad_utf8 = [0xffu8, 0xfe, 0];
        let mut kb = ptr::null_mut();
        assert_eq!(
            tp_kb_from_json(bad_utf8.as_ptr().cast(), &mut kb),
            TpStatus::InvalidUtf8
        );

        tp_table_free(ptr::null_mut());
        tp_plan_free(ptr::null_mut());
        tp_string_free(ptr::null_mut());
    }
}

#[test]
fn plan_from_another_schema_is_refused_at_execution() {
    let full = Synthetic::new(7, 30);
    let doc = CString::new(PLAN).unwrap();
    let narrow_csv = b"value\n1\n";
    let schema = Schema::new(vec![FieldSpec::new("value", ColumnType::Integer)]).unwrap();
    let note = FieldNote {
        field: "value".into(),
        note: "a number".into(),
        states: None,
    };
    let narrow = KnowledgeBase::new(
        schema,
        vec![note],
        "numbers",
        vec![],
        ConstraintSet::default(),
        vec![],
    )
    .unwrap();
    let narrow_kb = CString::new(narrow.to_json()).unwrap();
    unsafe {
        let mut plan = ptr::null_mut();
        assert_eq!(tp_plan_parse(doc.as_ptr(), full.table, &mut plan), TpStatus::Ok);
        let mut kb = ptr::null_mut();
        assert_eq!(
            tp_kb_from_json(narrow_kb.as_ptr(), &mut kb),
            TpStatus::Ok,
            "{}",
            last_error()
        );
        let mut table = ptr::null_mut();
        assert_eq!(
            tp_table_load_csv(narrow_csv.as_ptr(), narrow_csv.len(), kb, &mut table),
            TpStatus::Ok
        );
        let mut out = ptr::null_mut();
        assert_eq!(tp_execute(plan, table, &mut out), TpStatus::Invalid);
        assert!(out.is_null());
        tp_table_free(table);
        tp_kb_free(kb);
        tp_plan_free(plan);
    }
}

#[test]
fn scripted_query_end_to_end() {
    let data = Synthetic::new(7, 1000);
    let reply = serde_json::to_string(&format!("```json\n{PLAN}\n```")).unwrap();
    let fixtures = CString::new(format!("[{{\"response\": {reply}}}, {{\"response\": {reply}}}]")).unwrap();
    let question = CString::new("Which release candidate has the most failures?").unwrap();
    unsafe {
        let mut gw = ptr::null_mut();
        assert_eq!(tp_gateway_scripted(fixtures.as_ptr(), &mut gw), TpStatus::Ok);
        let mut result = ptr::null_mut();
        let mut plan_json = ptr::null_mut();
        let status = tp_answer_query(
            question.as_ptr(),
            data.table,
            data.kb,
            gw,
            2,
            2,
            &mut result,
            &mut plan_json,
        );
        assert_eq!(status, TpStatus::Ok, "{}", last_error());
        assert!(take(plan_json).contains("aggregate"));
        assert_eq!(tp_table_column_count(result), 2);
        tp_table_free(result);

        // fixtures are used up, so the next call is a backend failure
        let status = tp_answer_query(
            question.as_ptr(),
            data.table,
            data.kb,
            gw,
            2,
            2,
            &mut result,
            ptr::null_mut(),
        );
        assert_eq!(status, TpStatus::Llm);
        tp_gateway_free(gw);

        let junk = CString::new(r#"[{"response": "no"}, {"response": "still no"}]"#).unwrap();
        assert_eq!(tp_gateway_scripted(junk.as_ptr(), &mut gw), TpStatus::Ok);
        let status = tp_answer_query(
            question.as_ptr(),
            data.table,
            data.kb,
            gw,
            2,
            2,
            &mut result,
            ptr::null_mut(),
        );
        assert_eq!(status, TpStatus::PlanningFailed);
        tp_gateway_free(gw);
    }
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "tabplan.h"

int main(void) {
    tp_table *table = NULL;
    tp_kb *kb = NULL;
    if (tp_synthetic_generate(7, 100, &table, &kb) != TP_STATUS_OK) return 1;
    tp_plan *plan = NULL;
    const char *doc = "{\"steps\": [{\"kind\": \"limit\", \"n\": 4}]}";
    if (tp_plan_parse(doc, table, &plan) != TP_STATUS_OK) return 2;
    tp_table *out = NULL;
    if (tp_execute(plan, table, &out) != TP_STATUS_OK) return 3;
    printf("%zu\n", tp_table_row_count(out));
    if (tp_plan_parse("{", table, &plan) != TP_STATUS_PARSE) return 4;
    if (tp_last_error() == NULL || strlen(tp_last_error()) == 0) return 5;
    tp_table_free(out);
    tp_plan_free(plan);
    tp_table_free(table);
    tp_kb_free(kb);
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    let lib = target_dir().join("libtabplan_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let dir = tempfile_dir();
    let src = dir.join("main.c");
    let bin = dir.join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(header())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{out:?}");
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "4");
    let _ = std::fs::remove_dir_all(dir);
}

fn tempfile_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tabplan-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
