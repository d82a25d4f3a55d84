//! File formats: a plain-text float matrix, 16-bit binary PGM, flat
//! `key=value` metadata and point lists.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

/// `rows cols` header followed by row-major values with 17 significant digits.
pub fn write_matrix(mut out: impl Write, x: &ImageGrid) -> Result<()> {
    writeln!(out, "{} {}", x.rows(), x.cols())?;
    for r in 0..x.rows() {
        let line: Vec<String> = (0..x.cols()).map(|c| format!("{:.16e}", x.get(r, c))).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn parse_matrix(text: &str) -> Result<ImageGrid> {
    let mut tokens = text.split_ascii_whitespace();
    let mut dim = |what: &str| -> Result<usize> {
        match tokens.next().map(str::parse::<usize>) {
            Some(Ok(v)) if v > 0 => Ok(v),
            _ => format_err(format!("matrix header: bad {what}")),
        }
    };
    let rows = dim("row count")?;
    let cols = dim("column count")?;
    let values = tokens
        .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad matrix entry '{t}'"))))
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != rows * cols {
        return format_err(format!("expected {} entries, found {}", rows * cols, values.len()));
    }
    ImageGrid::new(rows, cols, values)
}

pub fn write_matrix_file(path: &Path, x: &ImageGrid) -> Result<()> {
    let mut buf = Vec::new();
    write_matrix(&mut buf, x)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_matrix_file(path: &Path) -> Result<ImageGrid> {
    parse_matrix(&fs::read_to_string(path)?)
}

/// Binary 16-bit PGM with min-max scaling to `0..=65535`.
pub fn encode_pgm16(x: &ImageGrid) -> Vec<u8> {
    let (lo, hi) = (x.min(), x.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{} {}\n65535\n", x.cols(), x.rows()).into_bytes();
    for &v in x.data() {
        let q = (((v - lo) / span) * 65535.0).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

/// Decodes a 16-bit binary PGM to raw sample values.
pub fn decode_pgm16(bytes: &[u8]) -> Result<ImageGrid> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return format_err("truncated PGM header");
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return format_err("not a binary PGM");
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM field '{s}'")));
    let (cols, rows, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval < 256 || maxval > 65535 {
        return format_err("only 16-bit PGM is supported");
    }
    let body = bytes.get(pos..).unwrap_or(&[]);
    if body.len() != 2 * rows * cols {
        return format_err("PGM payload has the wrong length");
    }
    let data = body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect();
    ImageGrid::new(rows, cols, data)
}

/// Ordered flat `key=value` record.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metadata {
    entries: BTreeMap<String, String>,
}

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Format(format!("metadata lacks '{key}'")))
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| Error::Format(format!("metadata '{key}' has bad value '{raw}'")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut meta = Self::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let Some((k, v)) = line.split_once('=') else {
                return format_err(format!("metadata line without '=': '{line}'"));
            };
            meta.set(k.trim(), v.trim());
        }
        Ok(meta)
    }
}

/// CSV `row,col,intensity`.
pub fn write_points(mut out: impl Write, points: &[(usize, usize, f64)]) -> Result<()> {
    writeln!(out, "row,col,intensity")?;
    for (r, c, v) in points {
        writeln!(out, "{r},{c},{v:.16e}")?;
    }
    Ok(())
}

pub fn parse_points(text: &str) -> Result<Vec<(usize, usize, f64)>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("row,col,intensity") {
        return format_err("points file must start with 'row,col,intensity'");
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let parts: Vec<&str> = l.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return format_err(format!("bad point line '{l}'"));
            }
            let bad = || Error::Format(format!("bad point line '{l}'"));
            Ok((
                parts[0].parse().map_err(|_| bad())?,
                parts[1].parse().map_err(|_| bad())?,
                parts[2].parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}
