//! Column-oriented CSV tables of floats.
//!
//! Numbers are written in the shortest form that parses back to the same
//! `f64`, so reading a table and writing it again reproduces the bytes.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Plain decimal for moderate magnitudes, scientific otherwise.
pub fn fmt_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 {
        "0".to_string()
    } else if (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str], columns: Vec<Vec<f64>>) -> Result<Table> {
        if header.len() != columns.len() {
            return Err(Error::InvalidParameter(format!(
                "{} column names for {} columns",
                header.len(),
                columns.len()
            )));
        }
        let len = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidParameter("table columns differ in length".into()));
        }
        Ok(Table { header: header.iter().map(|s| s.to_string()).collect(), columns })
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.header.iter().position(|h| h == name).map(|i| &self.columns[i][..])
    }

    pub fn require(&self, name: &str) -> Result<&[f64]> {
        self.column(name)
            .ok_or_else(|| Error::Config(format!("table has no '{name}' column (found {})", self.header.join(","))))
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for i in 0..self.rows() {
            w.write_record(self.columns.iter().map(|c| fmt_float(c[i])))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))
    }

    pub fn read<R: Read>(input: R) -> Result<Table> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut columns = vec![Vec::new(); header.len()];
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            for (i, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Config(format!("row {}: '{field}' in column '{}' is not a number", line + 2, header[i]))
                })?;
                columns[i].push(v);
            }
        }
        Ok(Table { header, columns })
    }

    pub fn load(path: &Path) -> Result<Table> {
        Table::read(std::fs::File::open(path)?)
    }
}
