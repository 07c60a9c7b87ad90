//! In-memory CSV tables with shortest round-trip number formatting.

use std::io::Write;

/// Shortest decimal that parses back to exactly `x`.
///
/// Plain notation for magnitudes in `[1e-4, 1e15)`, scientific otherwise;
/// both are the shortest digit string that round-trips.
pub fn num(x: f64) -> String {
    if x == 0.0 || x.is_nan() || x.is_infinite() {
        return format!("{x}");
    }
    let a = x.abs();
    if (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// A CSV table held as strings, so that two runs can be compared byte for byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.to_string(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header of {}", self.name);
        self.rows.push(row);
    }

    /// Index of a column by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Rows whose `column` equals `value`.
    pub fn rows_where<'a>(&'a self, column: &str, value: &'a str) -> impl Iterator<Item = &'a Vec<String>> + 'a {
        let c = self.column(column);
        self.rows.iter().filter(move |r| c.is_some_and(|c| r[c] == value))
    }

    /// Parses a numeric cell; empty or missing cells give `None`.
    pub fn value(&self, row: &[String], column: &str) -> Option<f64> {
        self.column(column).and_then(|c| row[c].parse().ok())
    }

    /// RFC 4180 CSV bytes.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&self.header).expect("writing to memory");
        for r in &self.rows {
            w.write_record(r).expect("writing to memory");
        }
        w.flush().expect("writing to memory");
        w.into_inner().expect("writing to memory")
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        out.write_all(&self.to_csv())
    }
}

/// Formats an optional number, leaving the cell empty for `None`.
pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
