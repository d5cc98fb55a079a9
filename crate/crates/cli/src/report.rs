//! Plain-text reports: a `key=value` header block, one blank line, then a
//! tab-separated table whose first line names the columns.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub header: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Report {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            header: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_header(mut self, header: &[(String, String)]) -> Self {
        self.header.extend_from_slice(header);
        self
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.header.push((key.to_string(), value.to_string()));
    }

    pub fn row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.columns.len(), "row width must match the columns");
        self.rows.push(cells);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Values of one column, in row order.
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.header {
            let _ = writeln!(out, "{k}={v}");
        }
        out.push('\n');
        out.push_str(&self.columns.join("\t"));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = |msg: &str| CliError::Usage(format!("malformed report: {msg}"));
        let (head, table) = match text.strip_prefix('\n') {
            Some(table) => ("", table),
            None => text.split_once("\n\n").ok_or_else(|| bad("no blank line after header"))?,
        };
        let header = head
            .lines()
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| bad("header line without `=`"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut lines = table.lines();
        let columns: Vec<String> = lines
            .next()
            .ok_or_else(|| bad("missing column line"))?
            .split('\t')
            .map(str::to_string)
            .collect();
        let rows = lines
            .map(|l| {
                let r: Vec<String> = l.split('\t').map(str::to_string).collect();
                if r.len() == columns.len() {
                    Ok(r)
                } else {
                    Err(bad("ragged row"))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { header, columns, rows })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.render()).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }
}

/// Shortest string that parses back to the same `f64`.
pub fn num(v: impl Into<f64>) -> String {
    format!("{}", v.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parse_roundtrip() {
        let mut r = Report::new(&["a", "b"]);
        r.meta("seed", 3);
        r.meta("config", "{\"x\":1}");
        r.row(vec!["1".into(), num(0.1f64)]);
        r.row(vec!["2".into(), num(1e-9f64)]);
        let back = Report::parse(&r.render()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.get("seed"), Some("3"));
        assert_eq!(back.column("b").unwrap(), vec!["0.1", "0.000000001"]);
    }

    #[test]
    fn numbers_roundtrip_exactly() {
        for v in [0.1f64, 1.0 / 3.0, 12345.678e-20, f64::from(0.7f32)] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
