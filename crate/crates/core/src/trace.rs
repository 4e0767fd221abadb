//! Per-iteration experiment records and their CSV serialization.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// One observed iteration. `None` means the metric was undefined that round
/// (for example a gap against a consistent reference, or a withheld output).
#[derive(Debug, Clone, Default)]
pub struct TraceRow {
    pub iter: usize,
    pub gap_r: Option<f64>,
    pub gap_q: Option<f64>,
    pub gap_rtilde_inv: Option<f64>,
    pub gap_qtilde_inv: Option<f64>,
    pub fallback_count: Option<usize>,
    /// Semicolon-separated tokens; kept comma-free for the CSV.
    pub notes: String,
}

/// The recorded rows of one run.
#[derive(Debug, Clone)]
pub struct ExperimentTrace {
    pub run_id: u64,
    pub rows: Vec<TraceRow>,
}

pub const CSV_HEADER: &str =
    "run_id,iter,gap_R,gap_Q,gap_Rtilde_inv,gap_Qtilde_inv,fallback_count,notes";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl ExperimentTrace {
    pub fn new(run_id: u64) -> Self {
        Self {
            run_id,
            rows: Vec::new(),
        }
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                self.run_id,
                row.iter,
                fmt_opt(row.gap_r),
                fmt_opt(row.gap_q),
                fmt_opt(row.gap_rtilde_inv),
                fmt_opt(row.gap_qtilde_inv),
                row.fallback_count
                    .map(|c| c.to_string())
                    .unwrap_or_default(),
                row.notes
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_leaves_undefined_fields_empty() {
        let mut trace = ExperimentTrace::new(3);
        trace.rows.push(TraceRow {
            iter: 0,
            gap_r: Some(0.5),
            gap_q: None,
            gap_rtilde_inv: None,
            gap_qtilde_inv: None,
            fallback_count: Some(2),
            notes: "q-withheld".into(),
        });
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "3,0,0.5,,,,2,q-withheld");
    }
}
