use serde::{Deserialize, Serialize};

use super::control::{apply_control, ControlAction};
use super::rules::step_fire;
use super::state::{FireState, ForcingSeries, ParameterVector, SpreadRuleVariant};
use super::HazardError;

/// Snapshots `t0..=t0 + horizon` and the burned-cell count of each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<FireState>,
    pub burned: Vec<usize>,
}

impl Trajectory {
    pub fn last(&self) -> &FireState {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalState {
    pub state: FireState,
    pub burned: Vec<usize>,
}

/// Run the automaton for `horizon` steps from `state0`.
///
/// The forcing series is indexed by absolute step, so it must cover
/// `state0.t() + horizon` steps. Controls scheduled at step `t` are applied,
/// in list order, before the spread from `t` to `t + 1`; every control must
/// be scheduled within `[state0.t(), state0.t() + horizon)`.
pub fn simulate(
    state0: &FireState,
    forcing: &ForcingSeries,
    params: &ParameterVector,
    variant: SpreadRuleVariant,
    horizon: u32,
    controls: &[ControlAction],
    seed: u64,
) -> Result<Trajectory, HazardError> {
    let mut states = vec![state0.clone()];
    let last = run(state0, forcing, params, variant, horizon, controls, seed, |s| states.push(s.clone()))?;
    debug_assert_eq!(states.last(), Some(&last.state));
    Ok(Trajectory { states, burned: last.burned })
}

/// Same as [`simulate`] but keeps only the final state.
pub fn simulate_final(
    state0: &FireState,
    forcing: &ForcingSeries,
    params: &ParameterVector,
    variant: SpreadRuleVariant,
    horizon: u32,
    controls: &[ControlAction],
    seed: u64,
) -> Result<FinalState, HazardError> {
    run(state0, forcing, params, variant, horizon, controls, seed, |_| {})
}

#[allow(clippy::too_many_arguments)]
fn run(
    state0: &FireState,
    forcing: &ForcingSeries,
    params: &ParameterVector,
    variant: SpreadRuleVariant,
    horizon: u32,
    controls: &[ControlAction],
    seed: u64,
    mut on_step: impl FnMut(&FireState),
) -> Result<FinalState, HazardError> {
    let first = state0.t();
    let end = first + horizon;
    let needed = end as usize;
    if forcing.len() < needed {
        return Err(HazardError::ForcingTooShort { needed, available: forcing.len() });
    }
    for a in controls {
        if a.start_step < first || a.start_step >= end {
            return Err(HazardError::ScheduleOutOfHorizon { start: a.start_step, first, end });
        }
        a.validate(state0.geometry())?;
    }
    params.validate()?;

    let mut state = state0.clone();
    let mut burned = Vec::with_capacity(horizon as usize + 1);
    burned.push(state.burned_count());
    for t in first..end {
        for a in controls.iter().filter(|a| a.start_step == t) {
            state = apply_control(&state, a)?;
        }
        state = step_fire(&state, &forcing.steps[t as usize], params, variant, seed)?;
        burned.push(state.burned_count());
        on_step(&state);
    }
    Ok(FinalState { state, burned })
}

#[cfg(test)]
mod tests {
    use super::super::control::ActionKind;
    use super::super::state::CellState;
    use super::*;
    use crate::raster::{Cell, GridGeometry};

    fn centre_fire() -> (FireState, ParameterVector) {
        let g = GridGeometry::new(5, 5, 10.0).unwrap();
        let params = ParameterVector::uniform_fuel(g, 1.0, 0.0, 1).unwrap();
        let mut s = FireState::from_fuel(&params.fuel);
        s.ignite(&[Cell::new(2, 2)], 1).unwrap();
        (s, params)
    }

    #[test]
    fn zero_horizon_returns_initial_state() {
        let (s, params) = centre_fire();
        let tr = simulate(&s, &ForcingSeries::uniform(0.0, 0.0, 0), &params, SpreadRuleVariant::StochasticMoore, 0, &[], 1)
            .unwrap();
        assert_eq!(tr.states, vec![s]);
        assert_eq!(tr.burned, vec![1]);
    }

    #[test]
    fn wavefront_reaches_whole_grid_by_step_two() {
        // Hand enumeration: t=1 ignites the 8 cells at Chebyshev distance 1,
        // t=2 the remaining 16 at distance 2.
        let (s, params) = centre_fire();
        let tr = simulate(&s, &ForcingSeries::uniform(0.0, 0.0, 2), &params, SpreadRuleVariant::StochasticMoore, 2, &[], 42)
            .unwrap();
        assert_eq!(tr.burned, vec![1, 9, 25]);
        assert!(tr.last().cells().iter().all(|c| c.is_affected()));
    }

    #[test]
    fn firebreak_ring_confines_fire() {
        let (s, params) = centre_fire();
        let ring: Vec<Cell> = (0..5)
            .flat_map(|r| (0..5).map(move |c| Cell::new(r, c)))
            .filter(|c| c.row == 0 || c.row == 4 || c.col == 0 || c.col == 4)
            .collect();
        assert_eq!(ring.len(), 16);
        let action = ControlAction { kind: ActionKind::Firebreak { cells: ring }, start_step: 0, resource_cost: 16.0 };
        let tr = simulate(&s, &ForcingSeries::uniform(0.0, 0.0, 4), &params, SpreadRuleVariant::StochasticMoore, 4, &[action], 42)
            .unwrap();
        assert_eq!(*tr.burned.last().unwrap(), 9);
        let last = tr.last();
        assert_eq!(last.cells().iter().filter(|c| **c == CellState::Unburnable).count(), 16);
    }

    #[test]
    fn forcing_must_cover_horizon() {
        let (s, params) = centre_fire();
        let err = simulate(&s, &ForcingSeries::uniform(0.0, 0.0, 2), &params, SpreadRuleVariant::StochasticMoore, 3, &[], 1)
            .unwrap_err();
        assert!(matches!(err, HazardError::ForcingTooShort { needed: 3, available: 2 }));
    }

    #[test]
    fn controls_outside_horizon_rejected() {
        let (s, params) = centre_fire();
        let action = ControlAction { kind: ActionKind::Firebreak { cells: vec![] }, start_step: 3, resource_cost: 0.0 };
        let err = simulate(&s, &ForcingSeries::uniform(0.0, 0.0, 3), &params, SpreadRuleVariant::StochasticMoore, 3, &[action], 1)
            .unwrap_err();
        assert!(matches!(err, HazardError::ScheduleOutOfHorizon { start: 3, .. }));
    }

    #[test]
    fn final_matches_full_trajectory() {
        let (s, mut params) = centre_fire();
        params.p0 = 0.4;
        let f = ForcingSeries::uniform(1.0, -0.5, 6);
        let tr = simulate(&s, &f, &params, SpreadRuleVariant::VonNeumannStochastic, 6, &[], 99).unwrap();
        let fin = simulate_final(&s, &f, &params, SpreadRuleVariant::VonNeumannStochastic, 6, &[], 99).unwrap();
        assert_eq!(&fin.state, tr.last());
        assert_eq!(fin.burned, tr.burned);
    }
}
