//! Result rows and their rendering as a pivot table or as CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no report rows to emit")]
    EmptyReport,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Delimited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Method label, e.g. `scratch` or `transfer-dynamic-mus`.
    pub setting: String,
    pub target_sinr_db: f64,
    /// Unlabeled target instances given to self-imitation, when relevant.
    pub additional_samples: Option<usize>,
    pub instances: usize,
    pub gap_percent: f64,
    pub speedup_nodes: f64,
    pub speedup_wallclock: f64,
    /// (labeling + scratch training time) / transfer time.
    pub train_speedup: Option<f64>,
    pub exact_nodes_mean: f64,
    pub policy_nodes_mean: f64,
    /// Test instances where the policy found nothing and the exact search
    /// was rerun.
    pub fallbacks: usize,
    pub train_seconds: f64,
    pub seed: u64,
}

impl ReportRow {
    /// Row label in the pivot table.
    pub fn label(&self) -> String {
        match self.additional_samples {
            Some(n) => format!("{} ({n} samples)", self.setting),
            None => self.setting.clone(),
        }
    }

    /// Copy with every wall-clock dependent column zeroed.
    pub fn without_timing(&self) -> ReportRow {
        ReportRow {
            speedup_wallclock: 0.0,
            train_speedup: None,
            train_seconds: 0.0,
            ..self.clone()
        }
    }
}

/// Rows grouped by label (first-appearance order), then by ascending SINR.
fn ordered(rows: &[ReportRow]) -> Vec<&ReportRow> {
    let mut first_seen: Vec<String> = Vec::new();
    for r in rows {
        let l = r.label();
        if !first_seen.contains(&l) {
            first_seen.push(l);
        }
    }
    let mut out: Vec<&ReportRow> = rows.iter().collect();
    out.sort_by(|a, b| {
        let ia = first_seen.iter().position(|l| *l == a.label());
        let ib = first_seen.iter().position(|l| *l == b.label());
        ia.cmp(&ib).then(a.target_sinr_db.total_cmp(&b.target_sinr_db))
    });
    out
}

fn sinr_header(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

fn render_table(rows: &[&ReportRow]) -> String {
    let mut sinrs: Vec<f64> = rows.iter().map(|r| r.target_sinr_db).collect();
    sinrs.sort_by(f64::total_cmp);
    sinrs.dedup();
    let mut labels: Vec<String> = Vec::new();
    for r in rows {
        if !labels.contains(&r.label()) {
            labels.push(r.label());
        }
    }
    type Cell = fn(&ReportRow) -> String;
    let sections: [(&str, Cell); 3] = [
        ("Optimality gap", |r| format!("{:.2}%", r.gap_percent)),
        ("Node speedup over exact search", |r| format!("{:.1}x", r.speedup_nodes)),
        ("Training speedup over scratch", |r| match r.train_speedup {
            Some(s) => format!("{s:.1}x"),
            None => "-".into(),
        }),
    ];

    let mut out = String::new();
    for (title, cell) in sections {
        let mut grid: BTreeMap<(usize, usize), String> = BTreeMap::new();
        for r in rows {
            let li = labels.iter().position(|l| *l == r.label()).expect("label listed");
            let si = sinrs.iter().position(|s| *s == r.target_sinr_db).expect("sinr listed");
            grid.insert((li, si), cell(r));
        }
        let mut header = vec!["Target SINR".to_string()];
        header.extend(sinrs.iter().map(|&s| sinr_header(s)));
        let body: Vec<Vec<String>> = labels
            .iter()
            .enumerate()
            .map(|(li, l)| {
                let mut line = vec![l.clone()];
                line.extend((0..sinrs.len()).map(|si| grid.get(&(li, si)).cloned().unwrap_or_else(|| "-".into())));
                line
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| {
                std::iter::once(&header)
                    .chain(&body)
                    .map(|line| line[c].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let fmt_line = |line: &[String]| {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(
                    |(c, (v, &w))| {
                        if c == 0 {
                            format!("{v:<w$}")
                        } else {
                            format!("{v:>w$}")
                        }
                    },
                )
                .collect();
            cells.join(" | ")
        };
        let rule = "-".repeat(widths.iter().sum::<usize>() + 3 * (widths.len() - 1));
        writeln!(out, "{title}").unwrap();
        writeln!(out, "{}", fmt_line(&header)).unwrap();
        writeln!(out, "{rule}").unwrap();
        for line in &body {
            writeln!(out, "{}", fmt_line(line)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn report_emit(rows: &[ReportRow], format: ReportFormat) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::EmptyReport);
    }
    let rows = ordered(rows);
    match format {
        ReportFormat::Table => Ok(render_table(&rows)),
        ReportFormat::Delimited => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r)?;
            }
            let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
    }
}

pub fn parse_delimited(text: &str) -> Result<Vec<ReportRow>, ReportError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let rows = r.deserialize().collect::<Result<Vec<ReportRow>, _>>()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn row(setting: &str, sinr: f64) -> ReportRow {
        ReportRow {
            setting: setting.into(),
            target_sinr_db: sinr,
            additional_samples: None,
            instances: 10,
            gap_percent: 0.57,
            speedup_nodes: 10.0,
            speedup_wallclock: 8.25,
            train_speedup: Some(12.5),
            exact_nodes_mean: 1000.0,
            policy_nodes_mean: 100.0,
            fallbacks: 0,
            train_seconds: 1.5,
            seed: 3,
        }
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(
            report_emit(&[], ReportFormat::Table),
            Err(ReportError::EmptyReport)
        ));
    }

    #[test]
    fn columns_follow_sinr_order() {
        let rows: Vec<_> = [3.0, 0.0, 4.0, 1.0, 2.0].iter().map(|&s| row("transfer", s)).collect();
        let t = report_emit(&rows, ReportFormat::Table).unwrap();
        let header = t.lines().nth(1).unwrap();
        let cols: Vec<&str> = header.split('|').map(str::trim).collect();
        assert_eq!(cols, ["Target SINR", "0", "1", "2", "3", "4"]);
    }

    #[test]
    fn single_row_table_is_aligned() {
        let t = report_emit(&[row("scratch", 0.0)], ReportFormat::Table).unwrap();
        let lines: Vec<&str> = t.lines().take(4).collect();
        assert_eq!(lines[1].len(), lines[2].len());
        assert_eq!(lines[1].len(), lines[3].len());
        assert!(lines[3].ends_with("0.57%"));
    }

    #[test]
    fn missing_cells_and_options() {
        let mut a = row("scratch", 0.0);
        a.train_speedup = None;
        a.additional_samples = Some(2);
        let b = row("transfer", 1.0);
        let csv = report_emit(&[a.clone(), b.clone()], ReportFormat::Delimited).unwrap();
        assert_eq!(parse_delimited(&csv).unwrap(), vec![a, b]);
    }
}
