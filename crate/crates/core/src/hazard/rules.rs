use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::state::{CellState, FireState, ParameterVector, SpreadRuleVariant, WindField};
use super::HazardError;

/// Counter-based uniform draw in `[0, 1)` for one cell at one step.
///
/// The value depends only on `(seed, t, index)`, never on the order in
/// which cells are visited.
pub fn uniform_draw(seed: u64, t: u32, index: usize) -> f64 {
    let mut rng = step_stream(seed, t);
    draw(&mut rng, index)
}

fn step_stream(seed: u64, t: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

#[inline]
fn draw(rng: &mut ChaCha8Rng, index: usize) -> f64 {
    rng.set_word_pos(2 * index as u128);
    rng.random::<f64>()
}

/// Combined ignition probability `P(c)` from a set of burning-neighbour
/// offsets `(dr, dc)` (neighbour position minus receiving cell position).
///
/// `base` is the effective base probability `p0 · s(c) · F(c)` at the
/// receiving cell and `wind` the wind vector there.
pub fn ignition_probability(base: f64, cw: f64, wind: (f64, f64), burning_offsets: &[(isize, isize)]) -> f64 {
    let mut none = 1.0;
    for &(dr, dc) in burning_offsets {
        none *= 1.0 - pair_probability(base, cw, wind, dr, dc);
    }
    1.0 - none
}

#[inline]
fn pair_probability(base: f64, cw: f64, (u, v): (f64, f64), dr: isize, dc: isize) -> f64 {
    // Direction from neighbour b to receiving cell c in map axes (x east, y
    // north); rows grow southward.
    let dx = -dc as f64;
    let dy = dr as f64;
    let along = (u * dx + v * dy) / (dx * dx + dy * dy).sqrt();
    (base * (1.0 + cw * along.max(0.0))).clamp(0.0, 1.0)
}

/// Advance `state` by one step.
pub fn step_fire(
    state: &FireState,
    wind: &WindField,
    params: &ParameterVector,
    variant: SpreadRuleVariant,
    seed: u64,
) -> Result<FireState, HazardError> {
    let g = *state.geometry();
    wind.check(&g)?;
    params.validate()?;
    if params.fuel.geometry != g {
        return Err(HazardError::GridMismatch("fuel map geometry differs from the state grid".into()));
    }

    let t = state.t();
    let active: Vec<_> = state.suppression().iter().filter(|z| z.active(t)).collect();
    let damping: Option<Vec<f64>> = (!active.is_empty()).then(|| {
        g.cells()
            .map(|c| active.iter().filter(|z| z.covers(&g, c)).map(|z| z.factor).product())
            .collect()
    });

    let cells = state.cells();
    let mut rng = variant.is_stochastic().then(|| step_stream(seed, t));
    let mut next = state.clone();
    let (next_cells, next_remaining, zones) = next.parts_mut();

    for (i, cell) in g.cells().enumerate() {
        match cells[i] {
            CellState::Burning => {
                next_remaining[i] -= 1;
                if next_remaining[i] == 0 {
                    next_cells[i] = CellState::Burned;
                }
            }
            CellState::Fuel => {
                let mut none = 1.0;
                let mut exposed = false;
                let base = params.p0 * damping.as_ref().map_or(1.0, |d| d[i]) * params.fuel_at(i);
                let w = wind.at(i);
                for &(dr, dc) in variant.neighbours() {
                    let r = cell.row as isize + dr;
                    let c = cell.col as isize + dc;
                    if r < 0 || c < 0 || r >= g.nrows as isize || c >= g.ncols as isize {
                        continue;
                    }
                    if cells[r as usize * g.ncols + c as usize] == CellState::Burning {
                        exposed = true;
                        none *= 1.0 - pair_probability(base, params.cw, w, dr, dc);
                    }
                }
                if !exposed {
                    continue;
                }
                let p = 1.0 - none;
                let ignites = match rng.as_mut() {
                    Some(rng) => draw(rng, i) < p,
                    None => p >= 0.5,
                };
                if ignites {
                    next_cells[i] = CellState::Burning;
                    next_remaining[i] = params.tau_burn;
                }
            }
            CellState::Unburnable | CellState::Burned => {}
        }
    }
    zones.retain(|z| z.until_step > t + 1);
    next.set_t(t + 1);
    Ok(next)
}
