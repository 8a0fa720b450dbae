//! 8-bit grayscale rendering of exposure grids as plain (P2) PGM.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::ExposureGrid;

/// Pixel for value `v`: `round(255 * v / scale)` clamped to 0..=255.
pub fn pixel(v: f64, scale: f64) -> u8 {
    (255.0 * v / scale).round().clamp(0.0, 255.0) as u8
}

/// Renders with a fixed `scale`, or with the grid maximum when `None`.
/// An all-zero grid with no fixed scale renders black.
pub fn to_pgm(grid: &ExposureGrid, scale: Option<f64>) -> Result<String> {
    let scale = match scale {
        Some(s) if !(s.is_finite() && s > 0.0) => {
            return Err(Error::validation(format!("render scale must be positive, got {s}")))
        }
        Some(s) => s,
        None => match grid.max() {
            m if m > 0.0 => m,
            _ => 1.0,
        },
    };
    let dims = grid.dims();
    let mut out = String::with_capacity(dims.len() * 4 + 32);
    let _ = write!(out, "P2\n{} {}\n255\n", dims.cols, dims.rows);
    for row in grid.values().chunks(dims.cols) {
        let line: Vec<String> = row.iter().map(|&v| pixel(v, scale).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_pgm(grid: &ExposureGrid, scale: Option<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_pgm(grid, scale)?).map_err(|e| Error::io(path, e))
}
