//! Method x dataset grids: an aligned text table for reading and one JSON
//! record per cell for machines. Rendering is a pure function of the grid, so
//! identical results give byte-identical files.

use serde_json::{json, Value};

use crate::eval::EvalEntry;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Scored { entry: EvalEntry, reference: Option<f64> },
    Failed(String),
}

impl Cell {
    pub fn is_failed(&self) -> bool {
        matches!(self, Cell::Failed(_))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Grid {
    pub datasets: Vec<String>,
    /// Row label and one cell per dataset.
    pub rows: Vec<(String, Vec<Cell>)>,
    /// Show reference scores and deltas.
    pub with_reference: bool,
}

impl Grid {
    pub fn failures(&self) -> usize {
        self.rows.iter().flat_map(|(_, c)| c).filter(|c| c.is_failed()).count()
    }

    fn cell_text(&self, cell: &Cell) -> String {
        match cell {
            Cell::Failed(_) => "ERR".into(),
            Cell::Scored { entry, reference } => {
                if !self.with_reference {
                    return format!("{:.2}", entry.rho_scaled);
                }
                match reference {
                    Some(r) => format!("{:.2} ({:+.2})", entry.rho_scaled, entry.rho_scaled - r),
                    None => format!("{:.2} (n/a)", entry.rho_scaled),
                }
            }
        }
    }

    /// Aligned text table followed by a list of failed cells.
    pub fn render_text(&self) -> String {
        let mut header = vec!["method".to_string()];
        header.extend(self.datasets.iter().cloned());
        let mut lines: Vec<Vec<String>> = vec![header];
        for (label, cells) in &self.rows {
            let mut line = vec![label.clone()];
            line.extend(cells.iter().map(|c| self.cell_text(c)));
            lines.push(line);
        }
        let cols = self.datasets.len() + 1;
        let widths: Vec<usize> = (0..cols)
            .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in &lines {
            let mut text = format!("{:<w$}", line[0], w = widths[0]);
            for c in 1..cols {
                text.push_str(&format!("  {:>w$}", line[c], w = widths[c]));
            }
            out.push_str(text.trim_end());
            out.push('\n');
        }
        if self.with_reference {
            out.push_str("\ncells: ours (ours - reference); n/a = no published reference\n");
        }
        let failed: Vec<String> = self
            .rows
            .iter()
            .flat_map(|(label, cells)| {
                cells.iter().zip(&self.datasets).filter_map(move |(c, d)| match c {
                    Cell::Failed(msg) => Some(format!("  {label} / {d}: {msg}")),
                    Cell::Scored { .. } => None,
                })
            })
            .collect();
        if !failed.is_empty() {
            out.push_str("\nfailed cells:\n");
            for f in failed {
                out.push_str(&f);
                out.push('\n');
            }
        }
        out
    }

    /// One JSON object per line, row-major.
    pub fn render_jsonl(&self) -> String {
        let mut out = String::new();
        for (label, cells) in &self.rows {
            for (cell, dataset) in cells.iter().zip(&self.datasets) {
                let record: Value = match cell {
                    Cell::Scored { entry, reference } => {
                        let mut v = json!({
                            "method": label,
                            "dataset": dataset,
                            "rho_scaled": entry.rho_scaled,
                            "pairs_total": entry.pairs_total,
                            "pairs_scored": entry.pairs_scored,
                        });
                        if self.with_reference {
                            v["reference"] = json!(reference);
                            v["delta"] = json!(reference.map(|r| entry.rho_scaled - r));
                        }
                        v
                    }
                    Cell::Failed(msg) => json!({
                        "method": label,
                        "dataset": dataset,
                        "error": msg,
                    }),
                };
                out.push_str(&record.to_string());
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(rho: f64) -> EvalEntry {
        EvalEntry {
            dataset: "d".into(),
            rho_scaled: rho,
            pairs_total: 10,
            pairs_scored: 9,
        }
    }

    #[test]
    fn renders_an_aligned_grid() {
        let grid = Grid {
            datasets: vec!["simlex".into(), "rg".into()],
            rows: vec![
                (
                    "conc".into(),
                    vec![
                        Cell::Scored { entry: entry(42.567), reference: None },
                        Cell::Scored { entry: entry(-3.0), reference: None },
                    ],
                ),
                (
                    "caeme-scp".into(),
                    vec![
                        Cell::Failed("coverage".into()),
                        Cell::Scored { entry: entry(85.0), reference: None },
                    ],
                ),
            ],
            with_reference: false,
        };
        let text = grid.render_text();
        assert!(text.starts_with("method     simlex     rg\nconc        42.57  -3.00\ncaeme-scp     ERR  85.00\n"));
        assert!(text.contains("caeme-scp / simlex: coverage"));
        assert_eq!(grid.failures(), 1);
        let jsonl = grid.render_jsonl();
        assert_eq!(jsonl.lines().count(), 4);
        assert!(jsonl.lines().nth(2).unwrap().contains("\"error\":\"coverage\""));
    }

    #[test]
    fn shows_reference_deltas() {
        let grid = Grid {
            datasets: vec!["rg".into()],
            rows: vec![(
                "caeme-scp".into(),
                vec![Cell::Scored { entry: entry(80.0), reference: Some(85.41) }],
            )],
            with_reference: true,
        };
        assert!(grid.render_text().contains("80.00 (-5.41)"));
        let rec: Value = serde_json::from_str(grid.render_jsonl().trim()).unwrap();
        assert_eq!(rec["reference"], json!(85.41));
        assert!((rec["delta"].as_f64().unwrap() + 5.41).abs() < 1e-9);
    }
}
