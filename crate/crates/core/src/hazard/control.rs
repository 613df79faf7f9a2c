use serde::{Deserialize, Serialize};

use super::state::{CellState, FireState};
use super::HazardError;
use crate::raster::{Cell, GridGeometry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionKind {
    /// Convert the listed FUEL cells to UNBURNABLE.
    Firebreak { cells: Vec<Cell> },
    /// Multiply the effective base ignition probability by `factor` for
    /// cells whose centre lies within `radius_m` of `(x, y)`, for
    /// `duration` steps.
    Suppression { x: f64, y: f64, radius_m: f64, factor: f64, duration: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlAction {
    #[serde(flatten)]
    pub kind: ActionKind,
    pub start_step: u32,
    /// EUR.
    pub resource_cost: f64,
}

impl ControlAction {
    pub fn validate(&self, geometry: &GridGeometry) -> Result<(), HazardError> {
        if !(self.resource_cost >= 0.0 && self.resource_cost.is_finite()) {
            return Err(HazardError::InvalidAction(format!("resource cost {} must be >= 0", self.resource_cost)));
        }
        match &self.kind {
            ActionKind::Firebreak { cells } => {
                if let Some(c) = cells.iter().find(|c| !geometry.contains(**c)) {
                    return Err(HazardError::OutOfGrid(*c));
                }
            }
            ActionKind::Suppression { x, y, radius_m, factor, duration } => {
                if !(0.0..1.0).contains(factor) {
                    return Err(HazardError::InvalidAction(format!("suppression factor {factor} outside [0, 1)")));
                }
                if !(*radius_m >= 0.0 && radius_m.is_finite()) {
                    return Err(HazardError::InvalidAction(format!("radius {radius_m} must be >= 0")));
                }
                if *duration == 0 {
                    return Err(HazardError::InvalidAction("suppression duration must be >= 1".into()));
                }
                if geometry.locate(*x, *y).is_none() {
                    return Err(HazardError::InvalidAction(format!("suppression centre ({x}, {y}) is outside the grid")));
                }
            }
        }
        Ok(())
    }
}

/// Active suppression overlay entry, valid for steps `[from_step, until_step)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuppressionZone {
    pub x: f64,
    pub y: f64,
    pub radius_m: f64,
    pub factor: f64,
    pub from_step: u32,
    pub until_step: u32,
}

impl SuppressionZone {
    pub fn active(&self, t: u32) -> bool {
        self.from_step <= t && t < self.until_step
    }

    pub fn covers(&self, geometry: &GridGeometry, cell: Cell) -> bool {
        let (cx, cy) = geometry.center(cell);
        let (dx, dy) = (cx - self.x, cy - self.y);
        dx * dx + dy * dy <= self.radius_m * self.radius_m
    }
}

/// Apply `action` to `state` at its current step. BURNING and BURNED cells
/// are never modified; the action is rejected as a whole if any part of it
/// is invalid.
pub fn apply_control(state: &FireState, action: &ControlAction) -> Result<FireState, HazardError> {
    let geometry = *state.geometry();
    action.validate(&geometry)?;
    let mut next = state.clone();
    let t = state.t();
    let (cells, _, zones) = next.parts_mut();
    match &action.kind {
        ActionKind::Firebreak { cells: targets } => {
            for c in targets {
                let i = geometry.index(*c);
                if cells[i] == CellState::Fuel {
                    cells[i] = CellState::Unburnable;
                }
            }
        }
        ActionKind::Suppression { x, y, radius_m, factor, duration } => zones.push(SuppressionZone {
            x: *x,
            y: *y,
            radius_m: *radius_m,
            factor: *factor,
            from_step: t,
            until_step: t + duration,
        }),
    }
    Ok(next)
}
