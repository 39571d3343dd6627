use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::CliError;

/// Column selector: a header name or a 0-based position.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Name(String),
    Index(usize),
}

impl std::str::FromStr for Column {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().parse::<usize>() {
            Ok(i) => Column::Index(i),
            Err(_) => Column::Name(s.trim().to_string()),
        })
    }
}

/// Reads one numeric column from comma-separated text. A first row whose
/// selected field is not a number is treated as a header; blank lines are
/// skipped.
pub fn read_column(path: &Path, column: &Column) -> Result<Vec<f64>, CliError> {
    let mut text = String::new();
    let open = |e: std::io::Error| CliError::Input(format!("{}: {e}", path.display()));
    File::open(path)
        .map_err(open)?
        .read_to_string(&mut text)
        .map_err(open)?;
    parse_column(&text, column).map_err(|e| match e {
        CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_column(text: &str, column: &Column) -> Result<Vec<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = reader
        .records()
        .filter(|r| !matches!(r, Ok(rec) if rec.iter().all(str::is_empty)));

    let first = match rows.next() {
        None => return Err(CliError::Input("no data rows".into())),
        Some(r) => r.map_err(|e| CliError::Input(e.to_string()))?,
    };
    let is_header = first.iter().any(|f| f.parse::<f64>().is_err());
    let index = match (column, is_header) {
        (Column::Index(i), _) => *i,
        (Column::Name(name), true) => first
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| CliError::Input(format!("no column named {name:?}")))?,
        (Column::Name(name), false) => {
            return Err(CliError::Input(format!(
                "column {name:?} requested but the file has no header row"
            )))
        }
    };

    let mut values = Vec::new();
    let mut line = 1;
    if !is_header {
        values.push(field(&first, index, line)?);
    }
    for rec in rows {
        line += 1;
        let rec = rec.map_err(|e| CliError::Input(e.to_string()))?;
        values.push(field(&rec, index, line)?);
    }
    if values.is_empty() {
        return Err(CliError::Input("no data rows".into()));
    }
    Ok(values)
}

fn field(rec: &csv::StringRecord, index: usize, line: usize) -> Result<f64, CliError> {
    let raw = rec
        .get(index)
        .ok_or_else(|| CliError::Input(format!("row {line} has no column {index}")))?;
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::Input(format!(
            "row {line}: {raw:?} is not a finite number"
        ))),
    }
}
