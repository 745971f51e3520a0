use std::path::Path;

use nalgebra::DMatrix;

use super::{fmt_f64, write_atomic};
use crate::error::{Error, Result};

/// A header row and numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|x| fmt_f64(*x)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, head) = lines
            .next()
            .ok_or_else(|| Error::Parse {
                line: 1,
                column: 1,
                message: "empty table".into(),
            })?;
        let header: Vec<String> = head.split(',').map(|h| h.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut row = Vec::with_capacity(header.len());
            let mut column = 1;
            for cell in line.split(',') {
                let v = cell.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    column,
                    message: format!("`{cell}`: {e}"),
                })?;
                row.push(v);
                column += cell.len() + 1;
            }
            if row.len() != header.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    column: 1,
                    message: format!("expected {} values, got {}", header.len(), row.len()),
                });
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }
}

pub fn write_table_csv(path: &Path, table: &Table) -> Result<()> {
    write_atomic(path, table.to_csv().as_bytes())
}

pub fn read_table_csv(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Table::parse(&text).map_err(|e| e.context(path.display().to_string()))
}

/// Row-major matrix with header `c0,c1,...`.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut t = Table::new((0..m.ncols()).map(|j| format!("c{j}")));
    for i in 0..m.nrows() {
        t.push(m.row(i).iter().copied().collect());
    }
    write_table_csv(path, &t)
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let t = read_table_csv(path)?;
    let flat: Vec<f64> = t.rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(t.rows.len(), t.header.len(), &flat))
}
