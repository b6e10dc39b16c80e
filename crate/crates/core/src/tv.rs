//! Total-variation seminorm of a 2-D grid.
//!
//! [`tv_norm`] takes one square root over the sum of all squared forward
//! differences. [`tv_norm_isotropic`] is the usual sum of per-pixel gradient
//! magnitudes, kept for comparison. Differences that would step outside the
//! grid are dropped.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Image2D {
    /// `values` are row-major.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParams(format!("image must be at least 1x1, got {rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(Error::Dimension { expected: rows * cols, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("image values must be finite".into()));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    /// Squared forward differences `(down, right)` at `(i, j)`, zero where
    /// the neighbor is outside the grid.
    fn diffs(&self, i: usize, j: usize) -> (f64, f64) {
        let here = self.get(i, j);
        let down = if i + 1 < self.rows { self.get(i + 1, j) - here } else { 0.0 };
        let right = if j + 1 < self.cols { self.get(i, j + 1) - here } else { 0.0 };
        (down * down, right * right)
    }
}

impl FromStr for Image2D {
    type Err = Error;

    /// `rows cols` on the first line, then `rows·cols` values in row-major
    /// order separated by any whitespace.
    fn from_str(s: &str) -> Result<Self> {
        let mut tokens = s.split_whitespace();
        let mut dim = || -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| Error::Parse("missing image dimensions".into()))?
                .parse()
                .map_err(|_| Error::Parse("bad image dimension".into()))
        };
        let (rows, cols) = (dim()?, dim()?);
        let values = tokens
            .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad pixel value {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, cols, values)
    }
}

impl fmt::Display for Image2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.rows, self.cols)?;
        for row in self.values.chunks(self.cols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// `√(Σ_{i,j} (x_{i+1,j} − x_{i,j})² + (x_{i,j+1} − x_{i,j})²)`.
pub fn tv_norm(img: &Image2D) -> f64 {
    let mut total = 0.0;
    for i in 0..img.rows {
        for j in 0..img.cols {
            let (a, b) = img.diffs(i, j);
            total += a + b;
        }
    }
    total.sqrt()
}

/// `Σ_{i,j} √((x_{i+1,j} − x_{i,j})² + (x_{i,j+1} − x_{i,j})²)`.
pub fn tv_norm_isotropic(img: &Image2D) -> f64 {
    let mut total = 0.0;
    for i in 0..img.rows {
        for j in 0..img.cols {
            let (a, b) = img.diffs(i, j);
            total += (a + b).sqrt();
        }
    }
    total
}
