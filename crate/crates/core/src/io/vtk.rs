//! Legacy ASCII VTK, `STRUCTURED_POINTS` with point data.

use std::path::Path;

use super::{fmt_f64, write_atomic};
use crate::error::{Error, Result};
use crate::fvgrid::NodeGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct VtkField {
    pub title: String,
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    /// Named scalar arrays, `x` fastest.
    pub arrays: Vec<(String, Vec<f64>)>,
}

impl VtkField {
    pub fn on_grid(title: &str, grid: &NodeGrid) -> Self {
        let mut spacing = [1.0; 3];
        for (a, s) in spacing.iter_mut().enumerate().take(grid.dim()) {
            *s = grid.h(a);
        }
        Self {
            title: title.to_string(),
            dims: grid.nodes_per_axis(),
            origin: grid.origin(),
            spacing,
            arrays: Vec::new(),
        }
    }

    pub fn with(mut self, name: &str, values: Vec<f64>) -> Self {
        self.arrays.push((name.to_string(), values));
        self
    }

    pub fn array(&self, name: &str) -> Option<&[f64]> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn to_text(&self) -> Result<String> {
        let n: usize = self.dims.iter().product();
        let mut s = String::new();
        s.push_str("# vtk DataFile Version 3.0\n");
        s.push_str(self.title.lines().next().unwrap_or(""));
        s.push_str("\nASCII\nDATASET STRUCTURED_POINTS\n");
        s.push_str(&format!("DIMENSIONS {} {} {}\n", self.dims[0], self.dims[1], self.dims[2]));
        let triple = |v: &[f64; 3]| format!("{} {} {}", fmt_f64(v[0]), fmt_f64(v[1]), fmt_f64(v[2]));
        s.push_str(&format!("ORIGIN {}\n", triple(&self.origin)));
        s.push_str(&format!("SPACING {}\n", triple(&self.spacing)));
        s.push_str(&format!("POINT_DATA {n}\n"));
        for (name, values) in &self.arrays {
            if values.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "array `{name}` has {} values for {n} points",
                    values.len()
                )));
            }
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!("invalid array name `{name}`")));
            }
            s.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
            for v in values {
                s.push_str(&fmt_f64(*v));
                s.push('\n');
            }
        }
        Ok(s)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, &str)> {
            lines.next().ok_or_else(|| Error::Parse {
                line: text.lines().count() + 1,
                column: 1,
                message: format!("unexpected end of file, expected {what}"),
            })
        };
        let bad = |line: usize, message: String| Error::Parse {
            line: line + 1,
            column: 1,
            message,
        };
        let (l, head) = next("header")?;
        if !head.starts_with("# vtk DataFile") {
            return Err(bad(l, "not a legacy VTK file".into()));
        }
        let title = next("title")?.1.to_string();
        let (l, fmt) = next("format")?;
        if fmt.trim() != "ASCII" {
            return Err(bad(l, format!("unsupported format `{fmt}`")));
        }
        let (l, ds) = next("dataset")?;
        if ds.trim() != "DATASET STRUCTURED_POINTS" {
            return Err(bad(l, format!("unsupported dataset `{ds}`")));
        }
        let mut keyed = |key: &str| -> Result<(usize, Vec<String>)> {
            let (l, line) = next(key)?;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(l, format!("expected {key}")));
            }
            Ok((l, it.map(str::to_string).collect()))
        };
        let num = |l: usize, s: &str| s.parse::<f64>().map_err(|e| bad(l, format!("`{s}`: {e}")));
        let (l, d) = keyed("DIMENSIONS")?;
        if d.len() != 3 {
            return Err(bad(l, "DIMENSIONS needs three values".into()));
        }
        let mut dims = [0usize; 3];
        for (k, v) in d.iter().enumerate() {
            dims[k] = v.parse().map_err(|e| bad(l, format!("`{v}`: {e}")))?;
        }
        let mut origin = [0.0; 3];
        let mut spacing = [0.0; 3];
        for (key, out) in [("ORIGIN", &mut origin), ("SPACING", &mut spacing)] {
            let (l, v) = keyed(key)?;
            if v.len() != 3 {
                return Err(bad(l, format!("{key} needs three values")));
            }
            for k in 0..3 {
                out[k] = num(l, &v[k])?;
            }
        }
        let n: usize = dims.iter().product();
        let (l, p) = keyed("POINT_DATA")?;
        if p.first().and_then(|s| s.parse::<usize>().ok()) != Some(n) {
            return Err(bad(l, format!("POINT_DATA does not match {n} points")));
        }
        let mut arrays = Vec::new();
        loop {
            let Ok((l, line)) = next("SCALARS") else { break };
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() < 3 || parts[0] != "SCALARS" {
                return Err(bad(l, format!("expected SCALARS, got `{line}`")));
            }
            let name = parts[1].to_string();
            let (l2, lt) = next("LOOKUP_TABLE")?;
            if !lt.starts_with("LOOKUP_TABLE") {
                return Err(bad(l2, "expected LOOKUP_TABLE".into()));
            }
            let mut values = Vec::with_capacity(n);
            while values.len() < n {
                let (l, line) = next("values")?;
                for tok in line.split_whitespace() {
                    values.push(num(l, tok)?);
                }
            }
            if values.len() != n {
                return Err(bad(l, format!("array `{name}` has {} values", values.len())));
            }
            arrays.push((name, values));
        }
        Ok(Self {
            title,
            dims,
            origin,
            spacing,
            arrays,
        })
    }
}

pub fn write_vtk(path: &Path, field: &VtkField) -> Result<()> {
    write_atomic(path, field.to_text()?.as_bytes())
}

pub fn read_vtk(path: &Path) -> Result<VtkField> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    VtkField::parse(&text).map_err(|e| e.context(path.display().to_string()))
}
