use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use super::{ControlStrategy, PolfcError, StrategyId};
use crate::fusion::{extract_ignitions, ExtractionPolicy, IgnitionBelief};
use crate::hazard::{ActionKind, CellState, ControlAction, FireState};
use crate::raster::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Side {
    North,
    South,
    East,
    West,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::North, Side::South, Side::East, Side::West];

    fn letter(self) -> char {
        match self {
            Side::North => 'N',
            Side::South => 'S',
            Side::East => 'E',
            Side::West => 'W',
        }
    }
}

fn all_sides() -> Vec<Side> {
    Side::ALL.to_vec()
}

fn default_radius() -> f64 {
    100.0
}

fn default_factor() -> f64 {
    0.5
}

fn default_duration() -> u32 {
    3
}

fn default_kappa() -> f64 {
    1.0
}

/// Template configuration for candidate generation.
///
/// Firebreak segments run along the row or column `offset` cells outside
/// the fire bounding box (the belief mode stands in when no fire is
/// observed) and span the box widened by the same offset. A ring is the
/// union of the four sides at one offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTemplates {
    #[serde(default)]
    pub firebreak_offsets: Vec<usize>,
    #[serde(default = "all_sides")]
    pub firebreak_sides: Vec<Side>,
    #[serde(default)]
    pub ring_offsets: Vec<usize>,
    #[serde(default)]
    pub suppression_top_k: usize,
    #[serde(default = "default_radius")]
    pub suppression_radius_m: f64,
    #[serde(default = "default_factor")]
    pub suppression_factor: f64,
    #[serde(default = "default_duration")]
    pub suppression_duration: u32,
    /// EUR per firebreak cell.
    #[serde(default = "default_kappa")]
    pub kappa_fb: f64,
    /// EUR per suppression step.
    #[serde(default = "default_kappa")]
    pub kappa_sup: f64,
}

impl Default for CandidateTemplates {
    fn default() -> Self {
        Self {
            firebreak_offsets: vec![1, 2, 3],
            firebreak_sides: all_sides(),
            ring_offsets: vec![2],
            suppression_top_k: 2,
            suppression_radius_m: default_radius(),
            suppression_factor: default_factor(),
            suppression_duration: default_duration(),
            kappa_fb: default_kappa(),
            kappa_sup: default_kappa(),
        }
    }
}

impl CandidateTemplates {
    pub fn validate(&self) -> Result<(), PolfcError> {
        let segments = !self.firebreak_offsets.is_empty() && !self.firebreak_sides.is_empty();
        if !segments && self.ring_offsets.is_empty() && self.suppression_top_k == 0 {
            return Err(PolfcError::EmptyTemplates);
        }
        if !(self.kappa_fb >= 0.0 && self.kappa_fb.is_finite() && self.kappa_sup >= 0.0 && self.kappa_sup.is_finite()) {
            return Err(PolfcError::InvalidCandidates("unit costs must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.suppression_factor) {
            return Err(PolfcError::InvalidCandidates("suppression factor must lie in [0, 1)".into()));
        }
        if self.suppression_top_k > 0 && self.suppression_duration == 0 {
            return Err(PolfcError::InvalidCandidates("suppression duration must be >= 1".into()));
        }
        Ok(())
    }
}

fn segment(state: &FireState, bbox: (usize, usize, usize, usize), side: Side, offset: usize) -> Vec<Cell> {
    let g = state.geometry();
    let (r0, c0, r1, c1) = bbox;
    let (r0, c0, r1, c1) = (r0 as isize, c0 as isize, r1 as isize, c1 as isize);
    let k = offset as isize;
    let line: Vec<(isize, isize)> = match side {
        Side::North => (c0 - k..=c1 + k).map(|c| (r0 - k, c)).collect(),
        Side::South => (c0 - k..=c1 + k).map(|c| (r1 + k, c)).collect(),
        Side::West => (r0 - k..=r1 + k).map(|r| (r, c0 - k)).collect(),
        Side::East => (r0 - k..=r1 + k).map(|r| (r, c1 + k)).collect(),
    };
    line.into_iter()
        .filter(|&(r, c)| r >= 0 && c >= 0 && (r as usize) < g.nrows && (c as usize) < g.ncols)
        .map(|(r, c)| Cell::new(r as usize, c as usize))
        .filter(|&cell| state.get(cell) == CellState::Fuel)
        .collect()
}

/// Deterministic template enumeration.
///
/// Ids are assigned in enumeration order before the budget cut, so a given
/// template keeps its id across calls: the null strategy is 0, then side
/// segments (sides outer, offsets inner), rings, and suppression disks.
/// Templates that would touch no fuel cell are skipped. All actions start
/// at the state's current step.
pub fn generate_candidates(
    state: &FireState,
    belief: &IgnitionBelief,
    budget: f64,
    templates: &CandidateTemplates,
) -> Result<Vec<ControlStrategy>, PolfcError> {
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(PolfcError::NegativeBudget(budget));
    }
    templates.validate()?;
    let t = state.t();
    let g = *state.geometry();
    let bbox = state.fire_bbox().unwrap_or_else(|| {
        let m = belief.mode();
        (m.row, m.col, m.row, m.col)
    });

    let mut next_id = 1;
    let mut fresh = || {
        let id = StrategyId(next_id);
        next_id += 1;
        id
    };
    let firebreak = |cells: Vec<Cell>| ControlAction {
        resource_cost: templates.kappa_fb * cells.len() as f64,
        kind: ActionKind::Firebreak { cells },
        start_step: t,
    };

    let mut out = vec![ControlStrategy::null()];
    let mut push = |id: StrategyId, label: String, actions: Vec<ControlAction>| {
        out.push(ControlStrategy::new(id, label, actions));
    };
    for &side in &templates.firebreak_sides {
        for &offset in &templates.firebreak_offsets {
            let id = fresh();
            let cells = segment(state, bbox, side, offset);
            if !cells.is_empty() {
                push(id, format!("firebreak {}+{offset}", side.letter()), vec![firebreak(cells)]);
            }
        }
    }
    for &offset in &templates.ring_offsets {
        let id = fresh();
        let cells: BTreeSet<Cell> = Side::ALL.iter().flat_map(|&s| segment(state, bbox, s, offset)).collect();
        if !cells.is_empty() {
            push(id, format!("ring +{offset}"), vec![firebreak(cells.into_iter().collect())]);
        }
    }
    let targets = suppression_targets(state, belief, templates.suppression_top_k);
    for i in 0..templates.suppression_top_k {
        let id = fresh();
        let Some(&(cell, _)) = targets.get(i) else { continue };
        let (x, y) = g.center(cell);
        let action = ControlAction {
            kind: ActionKind::Suppression {
                x,
                y,
                radius_m: templates.suppression_radius_m,
                factor: templates.suppression_factor,
                duration: templates.suppression_duration,
            },
            start_step: t,
            resource_cost: templates.kappa_sup * templates.suppression_duration as f64,
        };
        push(id, format!("suppression ({}, {})", cell.row, cell.col), vec![action]);
    }
    out.retain(|s| s.total_resource_cost <= budget);
    Ok(out)
}

/// Burning cells ranked by belief, or the belief's top cells while no fire
/// has been observed.
fn suppression_targets(state: &FireState, belief: &IgnitionBelief, k: usize) -> Vec<(Cell, f64)> {
    let g = *state.geometry();
    let mut burning: Vec<(Cell, f64)> = (0..g.len())
        .filter(|&i| state.cells()[i] == CellState::Burning)
        .map(|i| (g.cell(i), belief.posterior()[i]))
        .collect();
    if burning.is_empty() {
        return extract_ignitions(belief, ExtractionPolicy::TopK { k });
    }
    burning.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    burning.truncate(k);
    burning
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GridGeometry;

    fn row_fixture() -> (FireState, IgnitionBelief, CandidateTemplates) {
        // Fire along the bottom row of a 3×10 grid; the northern segment at
        // offset 1 covers the 10 cells of row 1.
        let g = GridGeometry::new(3, 10, 10.0).unwrap();
        let mut s = FireState::new(g, vec![CellState::Fuel; 30], vec![0; 30], 0).unwrap();
        s.ignite(&(0..10).map(|c| Cell::new(2, c)).collect::<Vec<_>>(), 2).unwrap();
        let b = IgnitionBelief::from_state(&s).unwrap();
        let t = CandidateTemplates {
            firebreak_offsets: vec![1],
            firebreak_sides: vec![Side::North],
            ring_offsets: vec![],
            suppression_top_k: 0,
            kappa_fb: 1.0,
            ..CandidateTemplates::default()
        };
        (s, b, t)
    }

    #[test]
    fn budget_zero_keeps_only_null() {
        let (s, b, t) = row_fixture();
        let c = generate_candidates(&s, &b, 0.0, &t).unwrap();
        assert_eq!(c, vec![ControlStrategy::null()]);
    }

    #[test]
    fn feasibility_cut_on_cost() {
        let (s, b, t) = row_fixture();
        let c = generate_candidates(&s, &b, 10.0, &t).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[1].total_resource_cost, 10.0);
        assert_eq!(c[1].id, StrategyId(1));
        assert_eq!(generate_candidates(&s, &b, 9.0, &t).unwrap().len(), 1);
    }

    #[test]
    fn empty_templates_rejected() {
        let (s, b, mut t) = row_fixture();
        t.firebreak_offsets.clear();
        assert!(matches!(generate_candidates(&s, &b, 10.0, &t), Err(PolfcError::EmptyTemplates)));
    }

    #[test]
    fn ids_are_stable_under_budget_changes() {
        let g = GridGeometry::new(9, 9, 10.0).unwrap();
        let mut s = FireState::new(g, vec![CellState::Fuel; 81], vec![0; 81], 0).unwrap();
        s.ignite(&[Cell::new(4, 4)], 2).unwrap();
        let b = IgnitionBelief::from_state(&s).unwrap();
        let t = CandidateTemplates::default();
        let all = generate_candidates(&s, &b, 1e9, &t).unwrap();
        let some = generate_candidates(&s, &b, 5.0, &t).unwrap();
        for c in &some {
            assert_eq!(all.iter().find(|a| a.id == c.id), Some(c));
        }
        assert_eq!(all, generate_candidates(&s, &b, 1e9, &t).unwrap());
        // 4 sides × 3 offsets + 1 ring + a disk on the one burning cell, plus null.
        assert_eq!(all.len(), 15);
        assert_eq!(all[14].label, "suppression (4, 4)");
    }
}
