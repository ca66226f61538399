//! Minimal typed layer over the CSV dialect shared by every file this crate
//! reads or writes: comma separator, `.` decimal point, LF newlines, UTF-8,
//! mandatory header row.

use std::fmt::Write as _;

use thiserror::Error;

/// A malformed CSV. `line` is 1-based and counts the header as line 1.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct SchemaError {
    pub line: Option<usize>,
    pub message: String,
}

impl SchemaError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { line: None, message: message.into() }
    }

    pub fn at(line: usize, message: impl Into<String>) -> Self {
        Self { line: Some(line), message: message.into() }
    }
}

/// A parsed CSV: trimmed header names and trimmed string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    /// 1-based source line number.
    pub line: usize,
    pub cells: Vec<String>,
}

impl Table {
    /// Parses `text`. Ragged rows are rejected with their line number; blank
    /// lines are skipped.
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut records = reader.records();
        let header: Vec<String> = match records.next() {
            Some(Ok(rec)) => rec.iter().map(str::to_owned).collect(),
            Some(Err(e)) => return Err(SchemaError::at(1, e.to_string())),
            None => return Err(SchemaError::new("missing header row")),
        };
        if header.iter().all(String::is_empty) {
            return Err(SchemaError::at(1, "empty header row"));
        }
        // The reader's own line counter ignores skipped blank lines, so lines
        // are recounted from byte offsets, incrementally since records arrive
        // in order.
        let bytes = text.as_bytes();
        let mut seen = (0usize, 1usize);
        let mut line_at = |p: Option<&csv::Position>| {
            p.map(|p| {
                let mut end = (p.byte() as usize).min(bytes.len());
                while end < bytes.len() && matches!(bytes[end], b'\n' | b'\r') {
                    end += 1;
                }
                let (from, base) = if end >= seen.0 { seen } else { (0, 1) };
                let line = base + bytes[from..end].iter().filter(|&&b| b == b'\n').count();
                seen = (end, line);
                line
            })
            .unwrap_or(0)
        };
        let mut rows = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| SchemaError::at(line_at(e.position()), e.to_string()))?;
            let line = line_at(rec.position());
            if rec.len() == 1 && rec.get(0) == Some("") {
                continue;
            }
            if rec.len() != header.len() {
                return Err(SchemaError::at(
                    line,
                    format!("expected {} column(s), found {}", header.len(), rec.len()),
                ));
            }
            rows.push(Row { line, cells: rec.iter().map(str::to_owned).collect() });
        }
        Ok(Self { header, rows })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h.eq_ignore_ascii_case(name))
    }

    /// Resolves a column given by name or by zero-based index.
    pub fn resolve_column(&self, spec: &str) -> Result<usize, SchemaError> {
        if let Some(i) = self.column_index(spec.trim()) {
            return Ok(i);
        }
        match spec.trim().parse::<usize>() {
            Ok(i) if i < self.header.len() => Ok(i),
            _ => Err(SchemaError::at(1, format!("no column named or numbered `{spec}`"))),
        }
    }

    /// Numeric column; empty cells become NaN (gaps).
    pub fn numeric_column(&self, index: usize) -> Result<Vec<f64>, SchemaError> {
        self.rows
            .iter()
            .map(|r| parse_cell(&r.cells[index], r.line, &self.header[index]).map(|v| v.unwrap_or(f64::NAN)))
            .collect()
    }
}

/// Empty cell → `None`; anything else must parse as a finite number.
pub fn parse_cell(cell: &str, line: usize, column: &str) -> Result<Option<f64>, SchemaError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(v) if v.is_nan() => Ok(None),
        _ => Err(SchemaError::at(line, format!("column `{column}`: `{cell}` is not a finite number"))),
    }
}

/// Rounds to 9 significant digits and prints the shortest representation.
pub fn fmt_sig9(v: f64) -> String {
    if !v.is_finite() {
        return String::new();
    }
    let rounded: f64 = format!("{v:.8e}").parse().unwrap_or(v);
    format!("{rounded}")
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_exact(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// Fixed number of decimals; non-finite values become empty cells.
pub fn fmt_fixed(v: f64, decimals: usize) -> String {
    if v.is_finite() {
        format!("{v:.decimals$}")
    } else {
        String::new()
    }
}

/// Incremental CSV text builder (LF newlines, no quoting needed for the
/// numeric/label content this crate emits).
#[derive(Debug, Default)]
pub struct CsvWriter {
    out: String,
}

impl CsvWriter {
    pub fn with_header<S: AsRef<str>>(header: &[S]) -> Self {
        let mut w = Self::default();
        w.row(header);
        w
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.out.push(',');
            }
            let c = c.as_ref();
            if c.contains([',', '"', '\n']) {
                let _ = write!(self.out, "\"{}\"", c.replace('"', "\"\""));
            } else {
                self.out.push_str(c);
            }
        }
        self.out.push('\n');
    }

    pub fn finish(self) -> String {
        self.out
    }
}
