use super::{BenchError, EvalResult};

/// Frozen column order of the comparison table.
pub const REPORT_COLUMNS: [&str; 7] = [
    "Model",
    "F1",
    "Precision",
    "Recall",
    "Inference Time (s)",
    "Precision (Change)",
    "Recall (Change)",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?} (expected markdown or csv)")),
        }
    }
}

fn row(r: &EvalResult) -> [String; 7] {
    [
        r.model_label.clone(),
        format!("{:.2}", r.macro_f1),
        format!("{:.2}", r.macro_precision),
        format!("{:.2}", r.macro_recall),
        format!("{:.2}", r.mean_inference_seconds),
        format!("{:.2}", r.change_precision),
        format!("{:.2}", r.change_recall),
    ]
}

pub fn render_report(results: &[EvalResult], format: ReportFormat) -> Result<String, BenchError> {
    if results.is_empty() {
        return Err(BenchError::NoResults);
    }
    match format {
        ReportFormat::Markdown => {
            let mut out = format!("| {} |\n", REPORT_COLUMNS.join(" | "));
            out.push('|');
            for _ in REPORT_COLUMNS {
                out.push_str("---|");
            }
            out.push('\n');
            for r in results {
                let cells = row(r).map(|c| c.replace('|', "\\|"));
                out.push_str(&format!("| {} |\n", cells.join(" | ")));
            }
            Ok(out)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(REPORT_COLUMNS).expect("in-memory write");
            for r in results {
                w.write_record(row(r)).expect("in-memory write");
            }
            Ok(String::from_utf8(w.into_inner().expect("flush")).expect("utf-8"))
        }
    }
}
