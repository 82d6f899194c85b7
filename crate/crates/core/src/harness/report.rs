//! Per-condition, per-SNR error-rate reports in CSV and table form.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub condition: String,
    pub snr_db: f64,
    pub n_utts: usize,
    pub wer: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

pub const CSV_HEADER: &str = "condition,snr_db,n_utts,wer";

impl EvalReport {
    /// Condition labels in first-appearance order.
    pub fn conditions(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.condition.as_str()) {
                out.push(&r.condition);
            }
        }
        out
    }

    /// SNR values in ascending order.
    pub fn snrs(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.snr_db) {
                out.push(r.snr_db);
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }

    pub fn wer(&self, condition: &str, snr_db: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.condition == condition && r.snr_db == snr_db).map(|r| r.wer)
    }

    /// Unweighted mean of the condition's per-SNR error rates.
    pub fn average(&self, condition: &str) -> Option<f64> {
        let w: Vec<f64> = self.rows.iter().filter(|r| r.condition == condition).map(|r| r.wer).collect();
        if w.is_empty() {
            None
        } else {
            Some(w.iter().sum::<f64>() / w.len() as f64)
        }
    }

    pub fn merge(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(s, "{},{},{},{}", r.condition, r.snr_db, r.n_utts, r.wer).unwrap();
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(Error::Malformed { what: "report", detail: format!("expected header {CSV_HEADER:?}") });
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let bad = |d: &str| Error::Malformed { what: "report", detail: format!("line {}: {d}", n + 2) };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            rows.push(EvalRow {
                condition: f[0].to_string(),
                snr_db: f[1].parse().map_err(|_| bad("snr_db"))?,
                n_utts: f[2].parse().map_err(|_| bad("n_utts"))?,
                wer: f[3].parse().map_err(|_| bad("wer"))?,
            });
        }
        Ok(Self { rows })
    }

    /// Percent error rates, one row per condition, SNR columns ascending, then `Avg.`.
    pub fn to_table(&self) -> String {
        let snrs = self.snrs();
        let conds = self.conditions();
        let width = conds.iter().map(|c| c.len()).max().unwrap_or(0).max("condition".len());
        let mut s = format!("{:<width$}", "condition");
        for snr in &snrs {
            write!(s, " {:>7}", format!("{snr}dB")).unwrap();
        }
        s.push_str("    Avg.\n");
        for c in conds {
            write!(s, "{c:<width$}").unwrap();
            for &snr in &snrs {
                match self.wer(c, snr) {
                    Some(w) => write!(s, " {:>7.2}", 100.0 * w).unwrap(),
                    None => write!(s, " {:>7}", "-").unwrap(),
                }
            }
            writeln!(s, " {:>7.2}", 100.0 * self.average(c).unwrap()).unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn write_table(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_table()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }
}
