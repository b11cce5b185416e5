//! Field files and result serialization.
//!
//! Field file layout:
//!
//! ```text
//! FIBRATE-FIELD v1
//! <kind> <extent>... <count>...
//! <value>
//! ...
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{FibrateError, Result};
use crate::grid::{Field, Grid};

pub const FIELD_HEADER: &str = "FIBRATE-FIELD v1";

/// Decimal rendering with 17 significant digits; round-trips every `f64`.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn grid_line(grid: &Grid) -> String {
    let mut parts = vec![grid.kind().as_str().to_string()];
    parts.extend(grid.extents().iter().map(|&e| format_f64(e)));
    parts.extend(grid.counts().iter().map(|c| c.to_string()));
    parts.join(" ")
}

pub fn persist_field(grid: &Grid, field: &[f64], path: &Path) -> Result<()> {
    grid.check_field(field)?;
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{FIELD_HEADER}")?;
    writeln!(out, "{}", grid_line(grid))?;
    for &v in field {
        writeln!(out, "{}", format_f64(v))?;
    }
    out.flush()?;
    Ok(())
}

/// Loads a field persisted on a grid compatible with `grid`.
pub fn load_field(path: &Path, grid: &Grid) -> Result<Field> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(FIELD_HEADER) {
        return Err(FibrateError::FormatError(format!("{}: missing '{FIELD_HEADER}' header", path.display())));
    }
    let desc = lines
        .next()
        .ok_or_else(|| FibrateError::FormatError("missing grid line".into()))?;
    let mut tokens = desc.split_whitespace();
    let kind = tokens.next().unwrap_or_default();
    if kind != grid.kind().as_str() {
        return Err(FibrateError::GridMismatch(format!(
            "field is on a {kind} grid, target is {}",
            grid.kind().as_str()
        )));
    }
    let dims = grid.extents().len();
    let rest: Vec<&str> = tokens.collect();
    if rest.len() != 2 * dims {
        return Err(FibrateError::FormatError(format!("malformed grid line '{desc}'")));
    }
    let counts = rest[dims..]
        .iter()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| FibrateError::FormatError(format!("bad node count: {e}")))?;
    let extents = rest[..dims]
        .iter()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| FibrateError::FormatError(format!("bad extent: {e}")))?;
    if counts != grid.counts() {
        return Err(FibrateError::GridMismatch(format!(
            "field has node counts {counts:?}, target grid has {:?}",
            grid.counts()
        )));
    }
    if extents.iter().zip(grid.extents()).any(|(a, b)| (a - b).abs() > 1e-12 * b.abs()) {
        return Err(FibrateError::GridMismatch(format!(
            "field has extents {extents:?}, target grid has {:?}",
            grid.extents()
        )));
    }
    let values = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| FibrateError::FormatError(format!("bad node value: {e}")))?;
    if values.len() != grid.len() {
        return Err(FibrateError::GridMismatch(format!(
            "field has {} values, grid has {} nodes",
            values.len(),
            grid.len()
        )));
    }
    Ok(Field::new(values))
}

/// `serde_json` formatter that writes floats with 17 significant digits.
#[derive(Debug, Default, Clone, Copy)]
pub struct PreciseFormatter;

impl serde_json::ser::Formatter for PreciseFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(format!("{value:.16e}").as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Pretty-ish JSON with 17-significant-digit floats. Non-finite floats
/// become `null`.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| FibrateError::Config(format!("serialization failed: {e}")))?;
    String::from_utf8(buf).map_err(|e| FibrateError::Config(e.to_string()))
}

pub fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    fs::write(path, text)?;
    Ok(path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::rectangle(1.0, 2.0, 4, 5).unwrap();
        let u = g.sample(|x| (x[0] * 3.1).sin() * (x[1] * 0.7).exp() / 3.0);
        let p = dir.path().join("u.field");
        persist_field(&g, &u, &p).unwrap();
        let back = load_field(&p, &g).unwrap();
        assert_eq!(back.values(), u.values());
    }

    #[test]
    fn header_mismatch_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.field");
        fs::write(&p, "FIELD v2\ninterval 1 3\n0\n0\n0\n").unwrap();
        let g = Grid::interval(1.0, 3).unwrap();
        assert!(matches!(load_field(&p, &g), Err(FibrateError::FormatError(_))));
    }

    #[test]
    fn count_mismatch_is_grid_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.field");
        let g = Grid::interval(1.0, 4).unwrap();
        persist_field(&g, &g.sample(|x| x[0]), &p).unwrap();
        let other = Grid::interval(1.0, 5).unwrap();
        assert!(matches!(load_field(&p, &other), Err(FibrateError::GridMismatch(_))));
    }

    #[test]
    fn json_floats_roundtrip() {
        let xs = vec![0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0];
        let s = to_json_string(&xs).unwrap();
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, xs);
    }
}
