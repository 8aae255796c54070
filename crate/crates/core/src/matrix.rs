use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major feature matrix with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    columns: Vec<String>,
    n_rows: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(columns: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let p = columns.len();
        if p == 0 {
            if !data.is_empty() {
                return Err(Error::Alignment("data without columns".into()));
            }
            return Ok(Matrix { columns, n_rows: 0, data });
        }
        if data.len() % p != 0 {
            return Err(Error::Alignment(format!("{} values do not fill rows of {} columns", data.len(), p)));
        }
        Ok(Matrix { n_rows: data.len() / p, columns, data })
    }

    pub fn from_rows(columns: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = columns.len();
        let mut data = Vec::with_capacity(rows.len() * p);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::Alignment(format!("row {i} has {} values, expected {p}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { columns, n_rows: rows.len(), data })
    }

    /// Columns named `x0`, `x1`, ...
    pub fn with_anonymous_columns(p: usize, rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_rows((0..p).map(|j| format!("x{j}")).collect(), rows)
    }

    pub fn empty(columns: Vec<String>) -> Self {
        Matrix { columns, n_rows: 0, data: Vec::new() }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.columns.len();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let p = self.columns.len().max(1);
        self.data.chunks_exact(p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.columns.len() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let p = self.columns.len();
        self.data[i * p + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.data.extend_from_slice(row);
        self.n_rows += 1;
    }

    /// New matrix holding the given rows (repeats allowed) in order.
    pub fn take_rows(&self, indices: &[usize]) -> Matrix {
        let p = self.columns.len();
        let mut data = Vec::with_capacity(indices.len() * p);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix { columns: self.columns.clone(), n_rows: indices.len(), data }
    }

    /// Reorder/subset columns by name.
    pub fn select(&self, names: &[String]) -> Result<Matrix> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::Alignment(format!("column {n:?} not present")))
            })
            .collect::<Result<_>>()?;
        let mut data = Vec::with_capacity(self.n_rows * idx.len());
        for r in self.rows().take(self.n_rows) {
            data.extend(idx.iter().map(|&j| r[j]));
        }
        Ok(Matrix { columns: names.to_vec(), n_rows: self.n_rows, data })
    }

    pub fn has_missing(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }

    /// Error unless the column names match `expected` exactly.
    pub fn check_columns(&self, expected: &[String]) -> Result<()> {
        if self.columns != expected {
            return Err(Error::Alignment(format!(
                "matrix columns {:?} do not match expected {:?}",
                self.columns, expected
            )));
        }
        Ok(())
    }
}
