use serde::{Deserialize, Serialize};

use super::EvalReport;
use crate::error::{Error, Result};

/// Dataset label of the per-method average rows.
pub const AVERAGE: &str = "Average";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub dataset: String,
    pub sd_mean: f64,
    pub epe_mean: f64,
    pub sd_weighted: f64,
    pub epe_weighted: f64,
    pub n_valid: usize,
}

/// Methods × datasets comparison of SD/EPE.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompareTable {
    pub rows: Vec<TableRow>,
}

impl CompareTable {
    pub fn push(&mut self, method: &str, dataset: &str, r: &EvalReport) {
        self.rows.push(TableRow {
            method: method.to_string(),
            dataset: dataset.to_string(),
            sd_mean: r.sd_mean,
            epe_mean: r.epe_mean,
            sd_weighted: r.sd_weighted,
            epe_weighted: r.epe_weighted,
            n_valid: r.n_valid,
        });
    }

    fn ordered<'a>(&'a self, key: impl Fn(&'a TableRow) -> &'a str) -> Vec<&'a str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&key(r)) {
                out.push(key(r));
            }
        }
        out
    }

    pub fn methods(&self) -> Vec<&str> {
        self.ordered(|r| &r.method)
    }

    pub fn datasets(&self) -> Vec<&str> {
        self.ordered(|r| &r.dataset)
    }

    /// One row per method holding the arithmetic mean over its datasets.
    pub fn averages(&self) -> Vec<TableRow> {
        self.methods()
            .into_iter()
            .map(|m| {
                let rows: Vec<&TableRow> = self.rows.iter().filter(|r| r.method == m).collect();
                let n = rows.len() as f64;
                let mean = |f: fn(&TableRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
                TableRow {
                    method: m.to_string(),
                    dataset: AVERAGE.to_string(),
                    sd_mean: mean(|r| r.sd_mean),
                    epe_mean: mean(|r| r.epe_mean),
                    sd_weighted: mean(|r| r.sd_weighted),
                    epe_weighted: mean(|r| r.epe_weighted),
                    n_valid: rows.iter().map(|r| r.n_valid).sum(),
                }
            })
            .collect()
    }

    /// CSV with the data rows followed by the average rows.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in self.rows.iter().chain(&self.averages()) {
            w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    /// Parses [`CompareTable::to_csv`] output; average rows are recomputed
    /// rather than read back.
    pub fn from_csv(text: &str) -> Result<CompareTable> {
        let mut rows = Vec::new();
        for rec in csv::Reader::from_reader(text.as_bytes()).deserialize() {
            let row: TableRow = rec.map_err(|e| Error::Format(e.to_string()))?;
            if row.dataset != AVERAGE {
                rows.push(row);
            }
        }
        Ok(CompareTable { rows })
    }

    /// Aligned text: one line per method, one `SD/EPE` cell per dataset
    /// plus the average.
    pub fn to_text(&self) -> String {
        let datasets = self.datasets();
        let averages = self.averages();
        let mut header = vec!["method".to_string()];
        header.extend(datasets.iter().map(|d| d.to_string()));
        header.push(AVERAGE.to_string());
        let mut lines = vec![header];
        for (m, avg) in self.methods().into_iter().zip(&averages) {
            let mut line = vec![m.to_string()];
            for d in &datasets {
                line.push(
                    self.rows
                        .iter()
                        .find(|r| r.method == m && r.dataset == *d)
                        .map_or("-".to_string(), |r| {
                            format!("{:.2}/{:.2}", r.sd_mean, r.epe_mean)
                        }),
                );
            }
            line.push(format!("{:.2}/{:.2}", avg.sd_mean, avg.epe_mean));
            lines.push(line);
        }
        let cols = lines[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    if c == 0 {
                        format!("{s:<w$}", w = widths[c])
                    } else {
                        format!("{s:>w$}", w = widths[c])
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, dataset: &str, sd: f64, epe: f64) -> TableRow {
        TableRow {
            method: method.into(),
            dataset: dataset.into(),
            sd_mean: sd,
            epe_mean: epe,
            sd_weighted: sd * 0.9,
            epe_weighted: epe * 0.9,
            n_valid: 100,
        }
    }

    fn sample() -> CompareTable {
        CompareTable {
            rows: vec![
                row("E", "city", 1.0 / 3.0, 2.5),
                row("E", "eft", 2.0, 4.1),
                row("E+C", "city", 0.7, 1.9),
                row("E+C", "eft", 1.5, 3.3),
            ],
        }
    }

    #[test]
    fn one_report_one_row() {
        let t = CompareTable {
            rows: vec![row("E", "city", 1.0, 2.0)],
        };
        assert_eq!(t.to_text().lines().count(), 2);
        assert_eq!(t.to_csv().unwrap().lines().count(), 3);
    }

    #[test]
    fn averages_are_arithmetic_means() {
        let avg = sample().averages();
        assert_eq!(avg.len(), 2);
        assert_eq!(avg[0].sd_mean, (1.0 / 3.0 + 2.0) / 2.0);
        assert_eq!(avg[1].epe_mean, (1.9 + 3.3) / 2.0);
        assert_eq!(avg[1].n_valid, 200);
    }

    #[test]
    fn csv_round_trip() {
        let t = sample();
        let csv = t.to_csv().unwrap();
        assert!(
            csv.starts_with("method,dataset,sd_mean,epe_mean,sd_weighted,epe_weighted,n_valid\n")
        );
        assert_eq!(CompareTable::from_csv(&csv).unwrap(), t);
    }

    #[test]
    fn text_has_sd_over_epe_cells() {
        let text = sample().to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("method"));
        assert!(lines[1].contains("0.33/2.50"));
        assert!(lines[2].ends_with("1.10/2.60"));
    }
}
