use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Setting;
use crate::error::Result;
use crate::eval::stats::welch_t_test;
use crate::models::ModelKind;

/// p-value at or above which an entry counts as indistinguishable from the best.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// AUROCs of one model on one anomaly class across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AurocColumn {
    /// One entry per run; `None` when the run failed or had no such anomalies.
    pub per_run: Vec<Option<f64>>,
    pub mean: Option<f64>,
    /// Population standard deviation (zero for a single run).
    pub std: Option<f64>,
    /// Highest mean in this column.
    pub best: bool,
    /// Best, or not significantly worse than the best.
    pub marked: bool,
    /// Welch p-value against the best entry, when both have two or more runs.
    pub p_vs_best: Option<f64>,
}

impl AurocColumn {
    pub fn from_runs(per_run: Vec<Option<f64>>) -> Self {
        let values: Vec<f64> = per_run.iter().flatten().copied().collect();
        let (mean, std) = if values.is_empty() {
            (None, None)
        } else {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            (Some(mean), Some(var.sqrt()))
        };
        Self { per_run, mean, std, best: false, marked: false, p_vs_best: None }
    }

    pub fn values(&self) -> Vec<f64> {
        self.per_run.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run: usize,
    pub kind: ModelKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub kind: ModelKind,
    pub known: AurocColumn,
    pub unknown: AurocColumn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub setting: Setting,
    pub known_cap: Option<usize>,
    pub runs: usize,
    pub base_seed: u64,
    pub rows: Vec<ModelRow>,
    pub failures: Vec<RunFailure>,
}

impl EvalReport {
    /// Builds the report and marks each column's best entry plus every entry
    /// a Welch test cannot tell apart from it.
    pub fn new(
        dataset: String,
        setting: Setting,
        known_cap: Option<usize>,
        runs: usize,
        base_seed: u64,
        mut rows: Vec<ModelRow>,
        failures: Vec<RunFailure>,
    ) -> Result<Self> {
        mark_column(rows.iter_mut().map(|r| &mut r.known).collect())?;
        mark_column(rows.iter_mut().map(|r| &mut r.unknown).collect())?;
        Ok(Self { dataset, setting, known_cap, runs, base_seed, rows, failures })
    }

    pub fn row(&self, kind: ModelKind) -> Option<&ModelRow> {
        self.rows.iter().find(|r| r.kind == kind)
    }

    /// True when every (run, model) pair failed.
    pub fn all_failed(&self) -> bool {
        !self.rows.is_empty() && self.failures.len() >= self.rows.len() * self.runs
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Aligned text table: `mean(std)` to three decimals with the std digits
    /// after the decimal point, `*` marking entries not significantly worse
    /// than the best.
    pub fn to_table(&self) -> String {
        let cap = self.known_cap.map(|c| format!(", {c} known anomalies")).unwrap_or_default();
        let mut out = format!(
            "{}: setting {}{}, {} run{}\n",
            self.dataset,
            u8::from(self.setting),
            cap,
            self.runs,
            if self.runs == 1 { "" } else { "s" }
        );
        let name_width = self
            .rows
            .iter()
            .map(|r| r.kind.display_name().len())
            .chain(std::iter::once("Model".len()))
            .max()
            .unwrap_or(5);
        let _ = writeln!(out, "{:<name_width$}  {:<11}  {:<11}", "Model", "A", "U");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:<name_width$}  {:<11}  {:<11}",
                row.kind.display_name(),
                cell(&row.known),
                cell(&row.unknown)
            );
        }
        for f in &self.failures {
            let _ = writeln!(out, "failed: {} run {}: {}", f.kind.display_name(), f.run, f.message);
        }
        out.trim_end_matches(' ').to_string()
    }
}

fn cell(col: &AurocColumn) -> String {
    match (col.mean, col.std) {
        (Some(mean), Some(std)) => {
            let digits = (std * 1000.0).round() as u64;
            format!("{mean:.3}({digits:03}){}", if col.marked { "*" } else { "" })
        }
        _ => "-".to_string(),
    }
}

fn mark_column(mut col: Vec<&mut AurocColumn>) -> Result<()> {
    let best = col
        .iter()
        .filter_map(|c| c.mean)
        .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.max(m))));
    let Some(best_mean) = best else { return Ok(()) };
    // Ties for the top mean all count as best; the first one is the reference.
    let reference = col
        .iter()
        .position(|c| c.mean == Some(best_mean))
        .map(|i| col[i].values())
        .unwrap_or_default();
    for c in col.iter_mut() {
        let Some(mean) = c.mean else { continue };
        c.best = mean == best_mean;
        let values = c.values();
        c.p_vs_best = if reference.len() >= 2 && values.len() >= 2 {
            Some(welch_t_test(&values, &reference)?)
        } else {
            None
        };
        c.marked = c.best || c.p_vs_best.is_some_and(|p| p >= SIGNIFICANCE_LEVEL);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(kind: ModelKind, known: &[f64], unknown: &[f64]) -> ModelRow {
        ModelRow {
            kind,
            known: AurocColumn::from_runs(known.iter().map(|&v| Some(v)).collect()),
            unknown: AurocColumn::from_runs(unknown.iter().map(|&v| Some(v)).collect()),
        }
    }

    #[test]
    fn mean_and_population_std() {
        let c = AurocColumn::from_runs(vec![Some(0.9), Some(1.0), None, Some(0.95)]);
        assert!((c.mean.unwrap() - 0.95).abs() < 1e-12);
        let expect = ((0.05f64.powi(2) * 2.0) / 3.0).sqrt();
        assert!((c.std.unwrap() - expect).abs() < 1e-12);
        let single = AurocColumn::from_runs(vec![Some(0.7)]);
        assert_eq!(single.std, Some(0.0));
        assert_eq!(AurocColumn::from_runs(vec![None]).mean, None);
    }

    #[test]
    fn marks_best_and_ties_under_the_test() {
        let rows = vec![
            row(ModelKind::AbcAe, &[0.96, 0.97, 0.965, 0.962, 0.968], &[1.0; 5]),
            row(ModelKind::Ae, &[0.85, 0.86, 0.855, 0.858, 0.861], &[1.0; 5]),
            row(ModelKind::Dnn, &[0.94, 0.98, 0.96, 0.95, 0.97], &[0.0, 0.001, 0.0, 0.002, 0.0]),
        ];
        let r = EvalReport::new("toy".into(), Setting::One, None, 5, 0, rows, vec![]).unwrap();
        let abc = r.row(ModelKind::AbcAe).unwrap();
        let ae = r.row(ModelKind::Ae).unwrap();
        let dnn = r.row(ModelKind::Dnn).unwrap();
        assert!(abc.known.best && abc.known.marked);
        assert!(!ae.known.marked);
        assert!(dnn.known.marked && !dnn.known.best);
        assert!(abc.unknown.best && ae.unknown.best);
        assert_eq!(abc.unknown.p_vs_best, Some(1.0));
        assert!(!dnn.unknown.marked);
    }

    #[test]
    fn table_layout() {
        let rows = vec![
            row(ModelKind::AbcAe, &[0.961, 0.969], &[1.0, 1.0]),
            row(ModelKind::Dnn, &[0.5, 0.52], &[0.0, 0.0]),
        ];
        let r = EvalReport::new("2D-Toy".into(), Setting::One, None, 2, 0, rows, vec![]).unwrap();
        let t = r.to_table();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "2D-Toy: setting 1, 2 runs");
        assert!(lines[1].starts_with("Model"));
        assert!(lines[2].starts_with("ABC(AE)  0.965(004)*  1.000(000)*"), "{}", lines[2]);
        assert!(lines[3].contains("0.510(010) "), "{}", lines[3]);
    }

    #[test]
    fn all_failed_counts_pairs() {
        let mut rows = vec![row(ModelKind::Ae, &[], &[])];
        rows[0].known.per_run = vec![None];
        let fail = RunFailure { run: 0, kind: ModelKind::Ae, message: "x".into() };
        let r = EvalReport::new("d".into(), Setting::One, None, 1, 0, rows, vec![fail]).unwrap();
        assert!(r.all_failed());
        assert!(r.to_table().contains("failed: AE run 0: x"));
    }
}
