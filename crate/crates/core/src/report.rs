//! Report serialization.
//!
//! JSON keeps full `f64` precision (shortest round-trip form) so a report
//! reads back equal. CSV is for plotting and spreadsheets and uses fixed
//! six-decimal numbers.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::types::EvalReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

fn fixed(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

const METRIC_COLUMNS: [&str; 16] = [
    "schema_version",
    "dataset_name",
    "model_name",
    "mode",
    "prompt_style",
    "template_id",
    "n_questions",
    "accuracy",
    "full_vocab_accuracy",
    "ftvr",
    "cd",
    "ace",
    "brier_x100",
    "log_loss",
    "degenerate_count",
    "unparsed_replies",
];

fn to_csv(report: &EvalReport) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    let row = [
        report.schema_version.to_string(),
        report.dataset_name.clone(),
        report.model_name.clone(),
        report.mode.clone(),
        report.prompt_style.clone().unwrap_or_default(),
        report.template_id.clone().unwrap_or_default(),
        report.n_questions.to_string(),
        fixed(report.accuracy),
        fixed(report.full_vocab_accuracy),
        fixed(report.ftvr),
        fixed(report.cd),
        fixed(report.ace),
        fixed(report.brier_x100),
        fixed(report.log_loss),
        report.degenerate_count.map(|c| c.to_string()).unwrap_or_default(),
        report.unparsed_replies.map(|c| c.to_string()).unwrap_or_default(),
    ];
    let write = |w: &mut csv::Writer<Vec<u8>>, rec: &[String]| w.write_record(rec).expect("write to memory");
    let strings = |cols: &[&str]| cols.iter().map(|s| (*s).to_owned()).collect::<Vec<_>>();

    write(&mut w, &strings(&METRIC_COLUMNS));
    write(&mut w, &row);

    if let Some(bins) = &report.calibration_bins {
        write(&mut w, &[String::new()]);
        write(
            &mut w,
            &strings(&["bin_lo", "bin_hi", "mean_conf", "accuracy", "count"]),
        );
        for b in bins {
            write(
                &mut w,
                &[
                    format!("{:.6}", b.bin_lo),
                    format!("{:.6}", b.bin_hi),
                    fixed(b.mean_conf),
                    fixed(b.accuracy),
                    b.count.to_string(),
                ],
            );
        }
    }

    if let Some(sweep) = &report.template_sweep {
        write(&mut w, &[String::new()]);
        write(
            &mut w,
            &strings(&["template_id", "accuracy", "full_vocab_accuracy", "ftvr"]),
        );
        for t in &sweep.per_template {
            write(
                &mut w,
                &[
                    t.template_id.clone(),
                    format!("{:.6}", t.accuracy),
                    fixed(t.full_vocab_accuracy),
                    fixed(t.ftvr),
                ],
            );
        }
        write(
            &mut w,
            &[
                "mean".to_owned(),
                format!("{:.6}", sweep.mean_accuracy),
                String::new(),
                String::new(),
            ],
        );
        write(
            &mut w,
            &[
                "std".to_owned(),
                format!("{:.6}", sweep.std_accuracy),
                String::new(),
                String::new(),
            ],
        );
    }
    w.into_inner().expect("flush to memory")
}

/// Serialize a report. Output is a pure function of the report value.
pub fn emit_report(report: &EvalReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("report serializes");
            out.push(b'\n');
            out
        }
        ReportFormat::Csv => to_csv(report),
    }
}

/// Calibration bins as a standalone CSV table for reliability plots.
pub fn calibration_csv(report: &EvalReport) -> Option<Vec<u8>> {
    let bins = report.calibration_bins.as_ref()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin_lo", "bin_hi", "mean_conf", "accuracy", "count"])
        .ok()?;
    for b in bins {
        w.write_record([
            format!("{:.6}", b.bin_lo),
            format!("{:.6}", b.bin_hi),
            fixed(b.mean_conf),
            fixed(b.accuracy),
            b.count.to_string(),
        ])
        .ok()?;
    }
    w.into_inner().ok()
}
