//! Complete discrete datasets bound to a network.
//!
//! The CSV form has a header row of variable names (any column order) and
//! one integer cell per variable in `0..arity`. Loading is strict: unknown
//! or missing columns and out-of-range cells are errors.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Network;

/// Rows of complete assignments, each stored in the network's node order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    columns: Vec<String>,
    rows: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(net: &Network, rows: Vec<Vec<usize>>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            net.check_assignment(row)
                .map_err(|e| Error::SchemaMismatch(format!("row {i}: {e}")))?;
        }
        Ok(Self {
            columns: net.vars().iter().map(|v| v.name.clone()).collect(),
            rows,
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Checks that this dataset was built for a network with the same
    /// variables.
    pub fn check_schema(&self, net: &Network) -> Result<()> {
        let same = self.columns.len() == net.num_nodes()
            && self.columns.iter().zip(net.vars()).all(|(c, v)| *c == v.name);
        if !same {
            return Err(Error::SchemaMismatch(
                "dataset columns do not match the network variables".into(),
            ));
        }
        for (i, row) in self.rows.iter().enumerate() {
            net.check_assignment(row)
                .map_err(|e| Error::SchemaMismatch(format!("row {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            columns: self.columns.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn read_csv(net: &Network, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        Self::from_reader(net, &mut reader, path)
    }

    pub fn from_csv_str(net: &Network, text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        Self::from_reader(net, &mut reader, Path::new("<memory>"))
    }

    fn from_reader<R: std::io::Read>(net: &Network, reader: &mut csv::Reader<R>, path: &Path) -> Result<Self> {
        let header = reader.headers()?.clone();
        let mut column_of = vec![usize::MAX; net.num_nodes()];
        for (c, name) in header.iter().enumerate() {
            let j = net.index_of(name).ok_or_else(|| {
                Error::SchemaMismatch(format!("column `{name}` is not a network variable"))
            })?;
            if column_of[j] != usize::MAX {
                return Err(Error::SchemaMismatch(format!("column `{name}` appears twice")));
            }
            column_of[j] = c;
        }
        if let Some(j) = column_of.iter().position(|&c| c == usize::MAX) {
            return Err(Error::SchemaMismatch(format!(
                "missing column `{}`",
                net.name(j)
            )));
        }
        let mut rows = Vec::new();
        for (r, record) in reader.records().enumerate() {
            let record = record?;
            let line = r + 2;
            let mut row = Vec::with_capacity(net.num_nodes());
            for (j, &c) in column_of.iter().enumerate() {
                let cell = record.get(c).unwrap_or("");
                let v: usize = cell.parse().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("bad cell `{cell}` for `{}`", net.name(j)),
                })?;
                if v >= net.arity(j) {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        msg: format!(
                            "value {v} out of range for `{}` (arity {})",
                            net.name(j),
                            net.arity(j)
                        ),
                    });
                }
                row.push(v);
            }
            rows.push(row);
        }
        Self::new(net, rows)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}
