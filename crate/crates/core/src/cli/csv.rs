//! CSV artifacts: a header row, `.` decimals, 17 significant digits, LF endings.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Float(f64),
    Int(i64),
    Text(String),
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Float(v) if v.is_finite() => format!("{v:.16e}"),
            Field::Float(v) => format!("{v}"),
            Field::Int(v) => v.to_string(),
            Field::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Float(v)
    }
}

impl From<usize> for Field {
    fn from(v: usize) -> Self {
        Field::Int(v as i64)
    }
}

impl From<u64> for Field {
    fn from(v: u64) -> Self {
        Field::Int(v as i64)
    }
}

impl From<&str> for Field {
    fn from(v: &str) -> Self {
        Field::Text(v.to_string())
    }
}

impl From<String> for Field {
    fn from(v: String) -> Self {
        Field::Text(v)
    }
}

impl From<bool> for Field {
    fn from(v: bool) -> Self {
        Field::Int(v as i64)
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Csv(format!("{}: {e}", path.display()))
}

/// Writes `records` under the column names in `schema`.
pub fn emit_csv(records: &[Vec<Field>], schema: &[&str], path: &Path) -> Result<()> {
    if let Some((i, r)) = records.iter().enumerate().find(|(_, r)| r.len() != schema.len()) {
        return Err(Error::Contract(format!(
            "record {i} has {} fields, schema has {}",
            r.len(),
            schema.len()
        )));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(std::io::BufWriter::new(file));
    w.write_record(schema).map_err(|e| csv_err(path, e))?;
    for r in records {
        w.write_record(r.iter().map(Field::render))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A CSV file read back as text.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv(format!("no column `{name}`")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let k = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[k].as_str()).collect())
    }

    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        self.column(name)?
            .into_iter()
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Csv(format!("`{s}` in `{name}` is not a number")))
            })
            .collect()
    }
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| csv_err(path, e))?;
    Ok(CsvTable { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_record_set_gives_a_header_only_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        emit_csv(&[], &["x0", "value"], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "x0,value\n");
        let t = read_csv(&path).unwrap();
        assert_eq!(t.header, vec!["x0", "value"]);
        assert!(t.rows.is_empty());
    }

    #[test]
    fn one_record_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let rec = vec![
            Field::from(0.1),
            Field::from(7usize),
            Field::from("extended, lifted"),
            Field::from(-3.5e-300),
        ];
        emit_csv(&[rec], &["a", "b", "c", "d"], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("1.0000000000000001e-1"));
        assert!(!text.contains('\r'));
        let t = read_csv(&path).unwrap();
        assert_eq!(t.floats("a").unwrap()[0].to_bits(), 0.1f64.to_bits());
        assert_eq!(t.column("b").unwrap(), vec!["7"]);
        assert_eq!(t.column("c").unwrap(), vec!["extended, lifted"]);
        assert_eq!(t.floats("d").unwrap()[0], -3.5e-300);
    }

    #[test]
    fn mismatched_records_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        assert!(emit_csv(&[vec![Field::from(1.0)]], &["a", "b"], &path).is_err());
        assert!(emit_csv(&[], &["a"], &dir.path().join("missing/m.csv")).is_err());
    }

    proptest! {
        #[test]
        fn floats_round_trip_bit_exactly(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            let s = Field::Float(v).render();
            prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
