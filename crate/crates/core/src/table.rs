//! Small text-table and CSV rendering shared by the reports.

use std::fmt::Write as _;

/// Rows of pre-formatted cells under a header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<I, S>(header: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.rows.push(row.into_iter().map(Into::into).collect());
    }

    /// Aligned plain text: first column left-aligned, the rest right-aligned.
    pub fn to_text(&self) -> String {
        let cols = self.header.len();
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate().take(cols) {
                widths[i] = widths[i].max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &[String]| {
            for (i, cell) in cells.iter().enumerate().take(cols) {
                if i > 0 {
                    out.push_str("  ");
                }
                if i == 0 {
                    let _ = write!(out, "{:<w$}", cell, w = widths[i]);
                } else {
                    let _ = write!(out, "{:>w$}", cell, w = widths[i]);
                }
            }
            let trimmed = out.trim_end().len();
            out.truncate(trimmed);
            out.push('\n');
        };
        line(&mut out, &self.header);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&mut out, &rule);
        for row in &self.rows {
            line(&mut out, row);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }
}

/// Human-readable parameter count: `1.0B`, `124M`, `52K`, `0`.
pub fn fmt_params(n: u64) -> String {
    if n >= 1_000_000_000 {
        format!("{:.1}B", n as f64 / 1e9)
    } else if n >= 1_000_000 {
        format!("{}M", (n + 500_000) / 1_000_000)
    } else if n >= 1_000 {
        format!("{}K", (n + 500) / 1_000)
    } else {
        n.to_string()
    }
}

/// Seconds with two decimals, or `--` when unavailable.
pub fn fmt_secs(t: Option<f64>) -> String {
    match t {
        Some(t) => format!("{t:.2}"),
        None => "--".to_owned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_render_like_the_tables() {
        assert_eq!(fmt_params(1_000_000_000), "1.0B");
        assert_eq!(fmt_params(630_000_000), "630M");
        assert_eq!(fmt_params(124_001_000), "124M");
        assert_eq!(fmt_params(543_053_000), "543M");
        assert_eq!(fmt_params(52_000), "52K");
        assert_eq!(fmt_params(1_000), "1K");
        assert_eq!(fmt_params(0), "0");
    }

    #[test]
    fn text_and_csv() {
        let mut t = Table::new(["model", "params"]);
        t.push(["clip, big", "124M"]);
        t.push(["x", "1K"]);
        let text = t.to_text();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(2).unwrap().ends_with("124M"));
        assert_eq!(t.to_csv(), "model,params\n\"clip, big\",124M\nx,1K\n");
    }
}
