//! Row-compressed sparse matrices and Matrix Market / plain-vector IO.
//!
//! The assembled system keeps its structural pattern (including stored
//! zeros) because the pattern is geometry-derived and sign information in
//! tiny entries matters for the diagnostics.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from per-row (columns, values) pairs; columns must be sorted
    /// and in range.
    pub fn from_rows(n_cols: usize, rows: Vec<(Vec<usize>, Vec<f64>)>) -> Result<Self> {
        let n_rows = rows.len();
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for (i, (cols, vals)) in rows.into_iter().enumerate() {
            if cols.len() != vals.len() {
                return Err(Error::Internal(format!("row {i}: {} cols vs {} vals", cols.len(), vals.len())));
            }
            for w in cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Internal(format!("row {i}: unsorted columns")));
                }
            }
            if let Some(&last) = cols.last() {
                if last >= n_cols {
                    return Err(Error::Internal(format!("row {i}: column {last} out of range")));
                }
            }
            col_indices.extend_from_slice(&cols);
            values.extend_from_slice(&vals);
            row_offsets.push(col_indices.len());
        }
        Ok(CsrMatrix { n_rows, n_cols, row_offsets, col_indices, values })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[r.clone()], &self.values[r])
    }

    pub fn row_mut(&mut self, i: usize) -> (&[usize], &mut [f64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[r.clone()], &mut self.values[r])
    }

    /// Stored value at (i, j), or 0 when outside the pattern.
    pub fn value_at(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(out.len(), self.n_rows);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            out[i] = acc;
        }
    }

    /// Max absolute row sum.
    pub fn infinity_norm(&self) -> f64 {
        (0..self.n_rows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                m[(i, *c)] = *v;
            }
        }
        m
    }

    /// Same pattern, values transformed entrywise with the column index.
    pub fn map_with_cols(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.n_rows {
            let start = self.row_offsets[i];
            let end = self.row_offsets[i + 1];
            for k in start..end {
                out.values[k] = f(i, self.col_indices[k], self.values[k]);
            }
        }
        out
    }

    /// Write in Matrix Market coordinate real general format (1-based),
    /// keeping structural zeros. The float formatting is lossless.
    pub fn write_matrix_market<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.16e}", i + 1, c + 1, v)?;
            }
        }
        Ok(())
    }

    pub fn read_matrix_market<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let h = header.to_lowercase();
        if !h.starts_with("%%matrixmarket matrix coordinate real general") {
            return Err(Error::Parse(format!("unsupported Matrix Market header: {}", header.trim())));
        }
        let mut dims = String::new();
        loop {
            dims.clear();
            if r.read_line(&mut dims)? == 0 {
                return Err(Error::Parse("missing size line".into()));
            }
            if !dims.trim_start().starts_with('%') && !dims.trim().is_empty() {
                break;
            }
        }
        let mut it = dims.split_whitespace();
        let n_rows: usize = parse_tok(it.next(), "rows")?;
        let n_cols: usize = parse_tok(it.next(), "cols")?;
        let nnz: usize = parse_tok(it.next(), "nnz")?;

        let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(nnz);
        let mut line = String::new();
        while triplets.len() < nnz {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(Error::Parse(format!("expected {nnz} entries, got {}", triplets.len())));
            }
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            let mut it = t.split_whitespace();
            let i: usize = parse_tok(it.next(), "row index")?;
            let j: usize = parse_tok(it.next(), "col index")?;
            let v: f64 = it
                .next()
                .ok_or_else(|| Error::Parse("missing value".into()))?
                .parse()
                .map_err(|e| Error::Parse(format!("bad value: {e}")))?;
            if i == 0 || j == 0 || i > n_rows || j > n_cols {
                return Err(Error::Parse(format!("entry ({i}, {j}) out of bounds")));
            }
            triplets.push((i - 1, j - 1, v));
        }
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut rows: Vec<(Vec<usize>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); n_rows];
        for (i, j, v) in triplets {
            rows[i].0.push(j);
            rows[i].1.push(v);
        }
        CsrMatrix::from_rows(n_cols, rows)
    }
}

fn parse_tok<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.ok_or_else(|| Error::Parse(format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::Parse(format!("bad {what}")))
}

/// Plain-text vector: one lossless float per line.
pub fn write_vector<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    for x in v {
        writeln!(w, "{:.16e}", x)?;
    }
    Ok(())
}

pub fn read_vector<R: BufRead>(r: &mut R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(t.parse().map_err(|e| Error::Parse(format!("bad vector entry: {e}")))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_rows(
            3,
            vec![
                (vec![0, 1], vec![1.0, -0.25]),
                (vec![1], vec![1.0]),
                (vec![0, 2], vec![0.0, 1.0]), // keeps a structural zero
            ],
        )
        .unwrap()
    }

    #[test]
    fn matvec_and_norm() {
        let m = sample();
        let mut y = vec![0.0; 3];
        m.matvec(&[1.0, 2.0, 3.0], &mut y);
        assert_eq!(y, vec![0.5, 2.0, 3.0]);
        assert_eq!(m.infinity_norm(), 1.25);
    }

    #[test]
    fn matrix_market_round_trip_preserves_pattern_and_bits() {
        let m = sample();
        let mut buf = Vec::new();
        m.write_matrix_market(&mut buf).unwrap();
        let back = CsrMatrix::read_matrix_market(&mut buf.as_slice()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn vector_round_trip() {
        let v = vec![1.0, -2.5e-17, 3.14159265358979, 0.1 + 0.2];
        let mut buf = Vec::new();
        write_vector(&mut buf, &v).unwrap();
        let back = read_vector(&mut buf.as_slice()).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn rejects_malformed() {
        assert!(CsrMatrix::from_rows(2, vec![(vec![1, 0], vec![1.0, 2.0])]).is_err());
        assert!(CsrMatrix::from_rows(2, vec![(vec![5], vec![1.0])]).is_err());
        let bad = b"%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 0 0\n";
        assert!(CsrMatrix::read_matrix_market(&mut &bad[..]).is_err());
    }
}
