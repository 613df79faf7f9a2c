//! Grid geometry and ESRI ASCII grid I/O.
//!
//! Row 0 is the northernmost row, matching the order rows appear in an ESRI
//! ASCII file. Cell centers are at
//! `(xll + (col + 0.5)·cellsize, yll + (nrows − row − 0.5)·cellsize)`.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::semap::{ArrayError, SemanticArray};
use crate::units::Unit;

pub const DEFAULT_NODATA: f64 = -9999.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub nrows: usize,
    pub ncols: usize,
    pub cellsize: f64,
    pub xllcorner: f64,
    pub yllcorner: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum RasterError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing header field {0}")]
    MissingHeader(&'static str),
    #[error("expected {expected} values but found {actual}")]
    ValueCount { expected: usize, actual: usize },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("grids are not congruent: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl GridGeometry {
    pub fn new(nrows: usize, ncols: usize, cellsize: f64) -> Result<Self, RasterError> {
        Self { nrows, ncols, cellsize, xllcorner: 0.0, yllcorner: 0.0 }.validated()
    }

    pub fn validated(self) -> Result<Self, RasterError> {
        if self.nrows == 0 || self.ncols == 0 {
            return Err(RasterError::Geometry("nrows and ncols must be positive".into()));
        }
        if !(self.cellsize > 0.0 && self.cellsize.is_finite()) {
            return Err(RasterError::Geometry(format!("cellsize must be > 0, got {}", self.cellsize)));
        }
        if !self.xllcorner.is_finite() || !self.yllcorner.is_finite() {
            return Err(RasterError::Geometry("corner coordinates must be finite".into()));
        }
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.nrows * self.ncols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.ncols + cell.col
    }

    pub fn cell(&self, index: usize) -> Cell {
        Cell::new(index / self.ncols, index % self.ncols)
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.nrows && cell.col < self.ncols
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len()).map(|i| self.cell(i))
    }

    pub fn center(&self, cell: Cell) -> (f64, f64) {
        (
            self.xllcorner + (cell.col as f64 + 0.5) * self.cellsize,
            self.yllcorner + (self.nrows as f64 - cell.row as f64 - 0.5) * self.cellsize,
        )
    }

    /// Cell containing map point `(x, y)`, if inside the extent.
    pub fn locate(&self, x: f64, y: f64) -> Option<Cell> {
        let col = ((x - self.xllcorner) / self.cellsize).floor();
        let from_bottom = ((y - self.yllcorner) / self.cellsize).floor();
        if col < 0.0 || from_bottom < 0.0 || col >= self.ncols as f64 || from_bottom >= self.nrows as f64 {
            return None;
        }
        Some(Cell::new(self.nrows - 1 - from_bottom as usize, col as usize))
    }

    pub fn cell_area_ha(&self) -> f64 {
        self.cellsize * self.cellsize / 1e4
    }

    pub fn ensure_same(&self, other: &GridGeometry) -> Result<(), RasterError> {
        if self == other {
            Ok(())
        } else {
            Err(RasterError::Mismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// A georeferenced raster layer: geometry plus a `[row, col]` semantic array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterGrid {
    pub geometry: GridGeometry,
    pub values: SemanticArray,
}

impl RasterGrid {
    pub fn new(geometry: GridGeometry, units: Unit, values: Vec<f64>) -> Result<Self, RasterError> {
        let geometry = geometry.validated()?;
        let values = SemanticArray::grid(geometry.nrows, geometry.ncols, units, values)?;
        Ok(Self { geometry, values })
    }

    pub fn filled(geometry: GridGeometry, units: Unit, value: f64) -> Result<Self, RasterError> {
        Self::new(geometry, units, vec![value; geometry.len()])
    }

    pub fn with_nodata(mut self, nodata: f64) -> Result<Self, RasterError> {
        self.values = self.values.with_nodata(nodata)?;
        Ok(self)
    }

    pub fn get(&self, cell: Cell) -> f64 {
        self.values.values()[self.geometry.index(cell)]
    }

    pub fn data(&self) -> &[f64] {
        self.values.values()
    }

    pub fn parse_esri_ascii(text: &str, units: Unit) -> Result<Self, RasterError> {
        let mut ncols = None;
        let mut nrows = None;
        let mut x = None;
        let mut y = None;
        let mut x_center = false;
        let mut y_center = false;
        let mut cellsize = None;
        let mut nodata = None;

        let mut lines = text.lines().enumerate().peekable();
        while let Some(&(i, line)) = lines.peek() {
            let mut parts = line.split_whitespace();
            let Some(key) = parts.next() else {
                lines.next();
                continue;
            };
            let key = key.to_ascii_lowercase();
            let known = matches!(
                key.as_str(),
                "ncols" | "nrows" | "xllcorner" | "yllcorner" | "xllcenter" | "yllcenter" | "cellsize" | "nodata_value"
            );
            if !known {
                break;
            }
            let raw = parts.next().ok_or_else(|| RasterError::Parse { line: i + 1, message: format!("{key} has no value") })?;
            let num: f64 = raw
                .parse()
                .map_err(|_| RasterError::Parse { line: i + 1, message: format!("{key} value {raw:?} is not a number") })?;
            let count = |v: f64| -> Result<usize, RasterError> {
                if v.fract() == 0.0 && v > 0.0 {
                    Ok(v as usize)
                } else {
                    Err(RasterError::Parse { line: i + 1, message: format!("{key} must be a positive integer") })
                }
            };
            match key.as_str() {
                "ncols" => ncols = Some(count(num)?),
                "nrows" => nrows = Some(count(num)?),
                "xllcorner" => x = Some(num),
                "yllcorner" => y = Some(num),
                "xllcenter" => {
                    x = Some(num);
                    x_center = true;
                }
                "yllcenter" => {
                    y = Some(num);
                    y_center = true;
                }
                "cellsize" => cellsize = Some(num),
                _ => nodata = Some(num),
            }
            lines.next();
        }

        let ncols = ncols.ok_or(RasterError::MissingHeader("ncols"))?;
        let nrows = nrows.ok_or(RasterError::MissingHeader("nrows"))?;
        let cellsize = cellsize.ok_or(RasterError::MissingHeader("cellsize"))?;
        let mut xll = x.ok_or(RasterError::MissingHeader("xllcorner"))?;
        let mut yll = y.ok_or(RasterError::MissingHeader("yllcorner"))?;
        if x_center {
            xll -= cellsize / 2.0;
        }
        if y_center {
            yll -= cellsize / 2.0;
        }

        let expected = nrows * ncols;
        let mut values = Vec::with_capacity(expected);
        for (i, line) in lines {
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| RasterError::Parse { line: i + 1, message: format!("value {tok:?} is not a number") })?;
                values.push(v);
            }
        }
        if values.len() != expected {
            return Err(RasterError::ValueCount { expected, actual: values.len() });
        }
        let geometry = GridGeometry { nrows, ncols, cellsize, xllcorner: xll, yllcorner: yll };
        let grid = Self::new(geometry, units, values)?;
        match nodata {
            Some(nd) => grid.with_nodata(nd),
            None => Ok(grid),
        }
    }

    pub fn to_esri_ascii(&self) -> String {
        let g = &self.geometry;
        let mut out = String::new();
        let _ = writeln!(out, "ncols {}", g.ncols);
        let _ = writeln!(out, "nrows {}", g.nrows);
        let _ = writeln!(out, "xllcorner {}", g.xllcorner);
        let _ = writeln!(out, "yllcorner {}", g.yllcorner);
        let _ = writeln!(out, "cellsize {}", g.cellsize);
        let _ = writeln!(out, "NODATA_value {}", self.values.nodata().unwrap_or(DEFAULT_NODATA));
        for row in self.data().chunks(g.ncols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn read(path: &Path, units: Unit) -> Result<Self, RasterError> {
        let text = std::fs::read_to_string(path).map_err(|source| RasterError::Io { path: path.display().to_string(), source })?;
        Self::parse_esri_ascii(&text, units)
    }

    pub fn write(&self, path: &Path) -> Result<(), RasterError> {
        std::fs::write(path, self.to_esri_ascii()).map_err(|source| RasterError::Io { path: path.display().to_string(), source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "ncols 3\nnrows 2\nxllcorner 100\nyllcorner 200\ncellsize 10\nNODATA_value -9999\n1 2 3\n4 -9999 6\n";

    #[test]
    fn parse_and_write_are_bit_exact() {
        let g = RasterGrid::parse_esri_ascii(SAMPLE, Unit::Dimensionless).unwrap();
        assert_eq!(g.geometry.nrows, 2);
        assert_eq!(g.get(Cell::new(1, 2)), 6.0);
        assert_eq!(g.values.data().count(), 5);
        assert_eq!(g.to_esri_ascii(), SAMPLE);
    }

    #[test]
    fn header_is_case_insensitive_and_center_is_converted() {
        let text = "NCOLS 1\nNROWS 1\nXLLCENTER 5\nYLLCENTER 5\nCELLSIZE 10\n7\n";
        let g = RasterGrid::parse_esri_ascii(text, Unit::Meter).unwrap();
        assert_eq!(g.geometry.xllcorner, 0.0);
        assert_eq!(g.geometry.yllcorner, 0.0);
        assert_eq!(g.values.nodata(), None);
    }

    #[test]
    fn wrong_value_count() {
        let text = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n";
        assert!(matches!(
            RasterGrid::parse_esri_ascii(text, Unit::Meter),
            Err(RasterError::ValueCount { expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn missing_header_and_bad_cellsize() {
        let text = "ncols 1\nnrows 1\nxllcorner 0\ncellsize 1\n1\n";
        assert!(matches!(RasterGrid::parse_esri_ascii(text, Unit::Meter), Err(RasterError::MissingHeader("yllcorner"))));
        let text = "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 0\n1\n";
        assert!(matches!(RasterGrid::parse_esri_ascii(text, Unit::Meter), Err(RasterError::Geometry(_))));
    }

    #[test]
    fn centers_and_locate_agree() {
        let g = GridGeometry { nrows: 4, ncols: 3, cellsize: 10.0, xllcorner: 100.0, yllcorner: 50.0 };
        for cell in g.cells() {
            let (x, y) = g.center(cell);
            assert_eq!(g.locate(x, y), Some(cell));
        }
        // Row 0 is the top of the grid.
        assert_eq!(g.center(Cell::new(0, 0)), (105.0, 85.0));
        assert_eq!(g.locate(99.0, 60.0), None);
    }
}
