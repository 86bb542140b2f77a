use super::BenchReport;

/// Difficulty band labels, cumulative from level 1.
pub const BANDS: [&str; 4] = ["1", "1-2", "1-3", "1-4"];

const HEADERS: [&str; 6] = [
    "# Examples",
    "Task Difficulty",
    "# Total Tasks",
    "# Success",
    "# Failed",
    "Performance",
];

/// Aligned text table (one row per k and band, ordered by k then band)
/// and the structured document served to the UI.
pub fn format_report(report: &BenchReport) -> (String, serde_json::Value) {
    let mut rows: Vec<[String; 6]> = Vec::new();
    let mut ordered: Vec<_> = report.rows.iter().collect();
    ordered.sort_by_key(|r| (r.k_shot, r.max_level));
    let mut last_k = None;
    for r in ordered {
        let k_label = if last_k == Some(r.k_shot) {
            String::new()
        } else {
            format!("{}-shot", r.k_shot)
        };
        last_k = Some(r.k_shot);
        rows.push([
            k_label,
            r.band.clone(),
            r.total.to_string(),
            r.success.to_string(),
            r.failed.to_string(),
            r.rate.to_string(),
        ]);
    }
    let mut widths = HEADERS.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut text = String::new();
    if report.incomplete {
        text.push_str("INCOMPLETE: the sweep was aborted; rows cover finished cases only\n");
    }
    text.push_str(&line(&HEADERS.map(String::from)));
    text.push('\n');
    text.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    text.push('\n');
    for row in &rows {
        text.push_str(&line(row));
        text.push('\n');
    }
    let doc = serde_json::to_value(report).expect("report serializes");
    (text, doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{BenchReport, CaseOutcome};
    use crate::plan::Difficulty;

    fn outcome(k: usize, id: &str, level: u8, success: bool) -> CaseOutcome {
        CaseOutcome {
            k_shot: k,
            case_id: id.into(),
            query: String::new(),
            difficulty: Difficulty::new(level).unwrap(),
            success,
            failure: None,
            elapsed_ms: 0,
        }
    }

    #[test]
    fn rows_are_ordered_and_documents_round_trip() {
        let report = BenchReport::from_outcomes(
            "t",
            vec![
                outcome(1, "b", 2, false),
                outcome(0, "a", 1, true),
                outcome(1, "a", 1, true),
                outcome(0, "b", 2, true),
            ],
            false,
        );
        let (text, doc) = format_report(&report);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# Examples  Task Difficulty"));
        assert!(lines[2].starts_with("0-shot"));
        assert_eq!(lines.len(), 10);
        assert!(lines[6].starts_with("1-shot"));
        assert!(lines[7].ends_with("50%"));
        let back: BenchReport = serde_json::from_value(doc).unwrap();
        assert_eq!(back, report);
    }
}
