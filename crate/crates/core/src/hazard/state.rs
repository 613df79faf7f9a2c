use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::control::SuppressionZone;
use super::HazardError;
use crate::digest::Hasher;
use crate::raster::{Cell, GridGeometry, RasterGrid};
use crate::units::Unit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CellState {
    Unburnable = 0,
    Fuel = 1,
    Burning = 2,
    Burned = 3,
}

impl CellState {
    pub const LABELS: [&'static str; 4] = ["UNBURNABLE", "FUEL", "BURNING", "BURNED"];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: f64) -> Option<Self> {
        match code {
            0.0 => Some(CellState::Unburnable),
            1.0 => Some(CellState::Fuel),
            2.0 => Some(CellState::Burning),
            3.0 => Some(CellState::Burned),
            _ => None,
        }
    }

    /// Ever ignited: counts toward the burned area.
    pub fn is_affected(self) -> bool {
        matches!(self, CellState::Burning | CellState::Burned)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpreadRuleVariant {
    StochasticMoore,
    DeterministicThreshold,
    VonNeumannStochastic,
}

impl SpreadRuleVariant {
    pub const ALL: [SpreadRuleVariant; 3] = [
        SpreadRuleVariant::StochasticMoore,
        SpreadRuleVariant::DeterministicThreshold,
        SpreadRuleVariant::VonNeumannStochastic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SpreadRuleVariant::StochasticMoore => "STOCHASTIC_MOORE",
            SpreadRuleVariant::DeterministicThreshold => "DETERMINISTIC_THRESHOLD",
            SpreadRuleVariant::VonNeumannStochastic => "VON_NEUMANN_STOCHASTIC",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }

    pub fn neighbours(self) -> &'static [(isize, isize)] {
        const MOORE: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
        const VON_NEUMANN: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        match self {
            SpreadRuleVariant::VonNeumannStochastic => &VON_NEUMANN,
            _ => &MOORE,
        }
    }

    pub fn is_stochastic(self) -> bool {
        !matches!(self, SpreadRuleVariant::DeterministicThreshold)
    }
}

/// Wind for one step, `u` eastward and `v` northward, in m/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindField {
    Uniform { u: f64, v: f64 },
    Grid { u: Vec<f64>, v: Vec<f64> },
}

impl WindField {
    pub fn calm() -> Self {
        WindField::Uniform { u: 0.0, v: 0.0 }
    }

    #[inline]
    pub fn at(&self, index: usize) -> (f64, f64) {
        match self {
            WindField::Uniform { u, v } => (*u, *v),
            WindField::Grid { u, v } => (u[index], v[index]),
        }
    }

    pub fn check(&self, geometry: &GridGeometry) -> Result<(), HazardError> {
        match self {
            WindField::Uniform { u, v } => {
                if !u.is_finite() || !v.is_finite() {
                    return Err(HazardError::InvalidParameter("wind components must be finite".into()));
                }
            }
            WindField::Grid { u, v } => {
                if u.len() != geometry.len() || v.len() != geometry.len() {
                    return Err(HazardError::GridMismatch(format!(
                        "wind field has {}/{} cells, grid has {}",
                        u.len(),
                        v.len(),
                        geometry.len()
                    )));
                }
                if u.iter().chain(v).any(|x| !x.is_finite()) {
                    return Err(HazardError::InvalidParameter("wind components must be finite".into()));
                }
            }
        }
        Ok(())
    }
}

/// One forecast member: a wind field per step, indexed by absolute step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSeries {
    pub steps: Vec<WindField>,
}

impl ForcingSeries {
    pub fn uniform(u: f64, v: f64, len: usize) -> Self {
        Self { steps: vec![WindField::Uniform { u, v }; len] }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn validate(&self, geometry: &GridGeometry) -> Result<(), HazardError> {
        self.steps.iter().try_for_each(|w| w.check(geometry))
    }
}

/// Static parametrisation of the spread rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub p0: f64,
    pub cw: f64,
    pub tau_burn: u32,
    pub fuel: Arc<RasterGrid>,
}

impl ParameterVector {
    pub fn uniform_fuel(geometry: GridGeometry, p0: f64, cw: f64, tau_burn: u32) -> Result<Self, HazardError> {
        Ok(Self { p0, cw, tau_burn, fuel: Arc::new(RasterGrid::filled(geometry, Unit::Dimensionless, 1.0)?) })
    }

    pub fn validate(&self) -> Result<(), HazardError> {
        if !(0.0..=1.0).contains(&self.p0) {
            return Err(HazardError::InvalidParameter(format!("p0 = {} outside [0, 1]", self.p0)));
        }
        if !(self.cw >= 0.0 && self.cw.is_finite()) {
            return Err(HazardError::InvalidParameter(format!("cw = {} must be finite and >= 0", self.cw)));
        }
        if self.tau_burn < 1 {
            return Err(HazardError::InvalidParameter("tau_burn must be >= 1".into()));
        }
        if let Some(v) = self.fuel.values.data().find(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(HazardError::InvalidParameter(format!("fuel factor {v} must be finite and >= 0")));
        }
        Ok(())
    }

    /// Fuel factor with nodata treated as zero.
    #[inline]
    pub fn fuel_at(&self, index: usize) -> f64 {
        let v = self.fuel.data()[index];
        if self.fuel.values.is_nodata(v) {
            0.0
        } else {
            v
        }
    }
}

/// Per-cell hazard state at step `t`, plus the active suppression overlay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FireState {
    geometry: GridGeometry,
    cells: Vec<CellState>,
    remaining: Vec<u32>,
    t: u32,
    suppression: Vec<SuppressionZone>,
}

impl FireState {
    pub fn new(geometry: GridGeometry, cells: Vec<CellState>, remaining: Vec<u32>, t: u32) -> Result<Self, HazardError> {
        let s = Self { geometry: geometry.validated()?, cells, remaining, t, suppression: Vec::new() };
        s.check_invariants()?;
        Ok(s)
    }

    /// All cells with a positive fuel factor are FUEL, the rest UNBURNABLE.
    pub fn from_fuel(fuel: &RasterGrid) -> Self {
        let cells = fuel
            .data()
            .iter()
            .map(|&v| if !fuel.values.is_nodata(v) && v > 0.0 { CellState::Fuel } else { CellState::Unburnable })
            .collect();
        Self {
            geometry: fuel.geometry,
            cells,
            remaining: vec![0; fuel.geometry.len()],
            t: 0,
            suppression: Vec::new(),
        }
    }

    /// Decode a state raster (UNBURNABLE=0, FUEL=1, BURNING=2, BURNED=3);
    /// burning cells get `tau_burn` steps remaining.
    pub fn from_raster(raster: &RasterGrid, tau_burn: u32, t: u32) -> Result<Self, HazardError> {
        let cells = raster
            .data()
            .iter()
            .map(|&v| CellState::from_code(v).ok_or_else(|| HazardError::InvalidState(format!("state code {v}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let remaining = cells.iter().map(|c| if *c == CellState::Burning { tau_burn } else { 0 }).collect();
        Self::new(raster.geometry, cells, remaining, t)
    }

    pub fn to_raster(&self) -> RasterGrid {
        let values = self.cells.iter().map(|c| c.code() as f64).collect();
        RasterGrid::new(self.geometry, Unit::Dimensionless, values).expect("state geometry is valid")
    }

    pub fn check_invariants(&self) -> Result<(), HazardError> {
        let n = self.geometry.len();
        if self.cells.len() != n || self.remaining.len() != n {
            return Err(HazardError::GridMismatch(format!(
                "state has {}/{} cells, grid has {n}",
                self.cells.len(),
                self.remaining.len()
            )));
        }
        for (i, (c, r)) in self.cells.iter().zip(&self.remaining).enumerate() {
            let ok = match c {
                CellState::Burning => *r >= 1,
                _ => *r == 0,
            };
            if !ok {
                return Err(HazardError::InvalidState(format!(
                    "cell {:?} is {c:?} with remaining duration {r}",
                    self.geometry.cell(i)
                )));
            }
        }
        Ok(())
    }

    /// Set the given FUEL cells burning; other cells are left as they are.
    pub fn ignite(&mut self, cells: &[Cell], tau_burn: u32) -> Result<(), HazardError> {
        for &c in cells {
            if !self.geometry.contains(c) {
                return Err(HazardError::OutOfGrid(c));
            }
            let i = self.geometry.index(c);
            if self.cells[i] == CellState::Fuel {
                self.cells[i] = CellState::Burning;
                self.remaining[i] = tau_burn.max(1);
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn remaining(&self) -> &[u32] {
        &self.remaining
    }

    pub fn get(&self, cell: Cell) -> CellState {
        self.cells[self.geometry.index(cell)]
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn suppression(&self) -> &[SuppressionZone] {
        &self.suppression
    }

    pub fn burned_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_affected()).count()
    }

    pub fn burning_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == CellState::Burning).count()
    }

    /// Bounding box `(min_row, min_col, max_row, max_col)` of affected cells.
    pub fn fire_bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for (i, c) in self.cells.iter().enumerate() {
            if c.is_affected() {
                let cell = self.geometry.cell(i);
                bbox = Some(match bbox {
                    None => (cell.row, cell.col, cell.row, cell.col),
                    Some((r0, c0, r1, c1)) => (r0.min(cell.row), c0.min(cell.col), r1.max(cell.row), c1.max(cell.col)),
                });
            }
        }
        bbox
    }

    pub fn digest(&self) -> String {
        let mut h = Hasher::new();
        h.u64(self.t as u64).u64(self.geometry.nrows as u64).u64(self.geometry.ncols as u64);
        let codes: Vec<u8> = self.cells.iter().map(|c| c.code()).collect();
        h.bytes(&codes);
        for r in &self.remaining {
            h.u64(*r as u64);
        }
        for z in &self.suppression {
            h.f64(z.x).f64(z.y).f64(z.radius_m).f64(z.factor).u64(z.from_step as u64).u64(z.until_step as u64);
        }
        h.finish()
    }

    pub(super) fn parts_mut(&mut self) -> (&mut Vec<CellState>, &mut Vec<u32>, &mut Vec<SuppressionZone>) {
        (&mut self.cells, &mut self.remaining, &mut self.suppression)
    }

    pub(super) fn set_t(&mut self, t: u32) {
        self.t = t;
    }
}
