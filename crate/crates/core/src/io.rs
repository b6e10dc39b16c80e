//! Plain-text vector files: one ASCII decimal value per line.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub fn parse_reals(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            let v: f64 = l
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: not a number: {l:?}", i + 1)))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse(format!("line {}: non-finite value", i + 1)))
            }
        })
        .collect()
}

pub fn parse_counts(text: &str) -> Result<Vec<u64>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.parse::<u64>().map_err(|_| {
                Error::Parse(format!("line {}: not a nonnegative integer: {l:?}", i + 1))
            })
        })
        .collect()
}

/// Formats with Rust's shortest round-trip representation.
pub fn format_values<T: std::fmt::Display>(values: &[T]) -> String {
    let mut out = String::with_capacity(values.len() * 8);
    for v in values {
        let _ = writeln!(out, "{v}");
    }
    out
}

pub fn read_reals(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    parse_reals(&std::fs::read_to_string(path)?)
}

pub fn read_counts(path: impl AsRef<Path>) -> Result<Vec<u64>> {
    parse_counts(&std::fs::read_to_string(path)?)
}

pub fn write_values<T: std::fmt::Display>(path: impl AsRef<Path>, values: &[T]) -> Result<()> {
    std::fs::write(path, format_values(values))?;
    Ok(())
}
