//! The fire automaton packaged as data-transformation modules.
//!
//! [`fire_module`] declares a module whose inputs are the initial state
//! raster, the fuel map, scalar rule parameters and a uniform wind; its
//! contract rejects out-of-range parameters before the transform runs and
//! checks that the burned series it produces is monotone.

use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::sync::Arc;

use super::state::{CellState, FireState, ForcingSeries, ParameterVector, SpreadRuleVariant};
use super::simulate::simulate_final;
use crate::raster::{GridGeometry, RasterGrid};
use crate::semap::{
    Axis, Check, Contract, DtmModule, ElementKind, Registry, SemanticArray, Signature, TransformInput, TransformOutput,
};
use crate::units::Unit;

pub const SIMULATE_TRANSFORM: &str = "fire.simulate";

pub fn register(registry: &mut Registry) {
    registry.register_transform(SIMULATE_TRANSFORM, simulate_transform);
}

/// Registry with the built-ins and the fire transforms.
pub fn registry() -> Registry {
    let mut r = Registry::builtin();
    register(&mut r);
    r
}

pub fn state_signature() -> Signature {
    Signature::new(&["row", "col"], ElementKind::Categorical, Unit::Dimensionless)
}

pub fn state_array(state: &FireState) -> SemanticArray {
    let g = state.geometry();
    SemanticArray::categorical(
        vec![Axis::new("row", g.nrows), Axis::new("col", g.ncols)],
        Unit::Dimensionless,
        CellState::LABELS,
        state.cells().iter().map(|c| c.code() as f64).collect(),
    )
    .expect("state codes index the label set")
}

pub fn fire_module(id: &str, variant: SpreadRuleVariant, horizon: u32, seed: u64) -> DtmModule {
    let scalar = |units| Signature::real(&[], units);
    let inputs = BTreeMap::from([
        ("state0".to_string(), state_signature()),
        ("fuel".to_string(), Signature::real(&["row", "col"], Unit::Dimensionless)),
        ("p0".to_string(), scalar(Unit::Dimensionless)),
        ("cw".to_string(), scalar(Unit::Dimensionless)),
        ("tau_burn".to_string(), scalar(Unit::Dimensionless)),
        ("wind_u".to_string(), scalar(Unit::MeterPerSecond)),
        ("wind_v".to_string(), scalar(Unit::MeterPerSecond)),
    ]);
    let outputs = BTreeMap::from([
        ("final_state".to_string(), state_signature()),
        ("burned_cells".to_string(), Signature::new(&["t"], ElementKind::Integer, Unit::Cell)),
    ]);
    let contract = Contract {
        preconditions: vec![
            Check::new("p0-range", "in_range", &["p0"]).args(json!({"lo": 0.0, "hi": 1.0})),
            Check::new("cw-non-negative", "non_negative", &["cw"]),
            Check::new("tau-burn-min", "in_range", &["tau_burn"]).args(json!({"lo": 1.0})),
            Check::new("fuel-non-negative", "non_negative", &["fuel"]),
            Check::new("fuel-finite", "finite", &["fuel"]),
            Check::new("wind-finite", "finite", &["wind_u", "wind_v"]),
            Check::new("grid-congruent", "same_axes", &["state0", "fuel"]),
        ],
        postconditions: vec![
            Check::new("burned-monotone", "non_decreasing", &["burned_cells"]),
            Check::new("burned-non-negative", "non_negative", &["burned_cells"]),
        ],
        invariants: vec![Check::new("state-grid-preserved", "same_axes", &["state0", "final_state"])],
    };
    DtmModule {
        id: id.to_string(),
        variant_tag: variant.as_str().to_string(),
        inputs,
        outputs,
        contract,
        transform: SIMULATE_TRANSFORM.to_string(),
        params: json!({"variant": variant.as_str(), "horizon": horizon, "seed": seed}),
    }
}

/// Converts a burned-cell series to hectares.
pub fn burned_area_module(id: &str, cellsize: f64) -> DtmModule {
    DtmModule {
        id: id.to_string(),
        variant_tag: String::new(),
        inputs: BTreeMap::from([("cells".to_string(), Signature::new(&["t"], ElementKind::Integer, Unit::Cell))]),
        outputs: BTreeMap::from([("area".to_string(), Signature::real(&["t"], Unit::Hectare))]),
        contract: Contract {
            postconditions: vec![Check::new("area-non-negative", "non_negative", &["area"])],
            ..Default::default()
        },
        transform: "cells_to_hectares".to_string(),
        params: json!({"cellsize": cellsize}),
    }
}

fn scalar(inputs: &BTreeMap<String, SemanticArray>, slot: &str) -> Result<f64, String> {
    inputs
        .get(slot)
        .and_then(|a| a.values().first().copied())
        .ok_or_else(|| format!("missing scalar input {slot}"))
}

fn simulate_transform(input: &TransformInput<'_>) -> TransformOutput {
    let p = input.params;
    let variant = p
        .get("variant")
        .and_then(Value::as_str)
        .and_then(SpreadRuleVariant::parse)
        .ok_or("params.variant must name a spread rule variant")?;
    let horizon = p.get("horizon").and_then(Value::as_u64).ok_or("params.horizon must be a non-negative integer")? as u32;
    let seed = p.get("seed").and_then(Value::as_u64).unwrap_or(0);
    let cellsize = p.get("cellsize").and_then(Value::as_f64).unwrap_or(1.0);

    let state0 = &input.inputs["state0"];
    let fuel = &input.inputs["fuel"];
    let (nrows, ncols) = (state0.axes()[0].size, state0.axes()[1].size);
    let geometry = GridGeometry { nrows, ncols, cellsize, xllcorner: 0.0, yllcorner: 0.0 }
        .validated()
        .map_err(|e| e.to_string())?;
    let tau = scalar(input.inputs, "tau_burn")?;
    let params = ParameterVector {
        p0: scalar(input.inputs, "p0")?,
        cw: scalar(input.inputs, "cw")?,
        tau_burn: tau as u32,
        fuel: Arc::new(RasterGrid { geometry, values: fuel.clone() }),
    };
    let raster = RasterGrid { geometry, values: state0.clone() };
    let state = FireState::from_raster(&raster, params.tau_burn, 0).map_err(|e| e.to_string())?;
    let forcing = ForcingSeries::uniform(scalar(input.inputs, "wind_u")?, scalar(input.inputs, "wind_v")?, horizon as usize);
    let fin = simulate_final(&state, &forcing, &params, variant, horizon, &[], seed).map_err(|e| e.to_string())?;

    let burned = SemanticArray::new(
        vec![Axis::new("t", fin.burned.len())],
        ElementKind::Integer,
        Unit::Cell,
        fin.burned.iter().map(|&b| b as f64).collect(),
    )
    .map_err(|e| e.to_string())?;
    Ok(BTreeMap::from([
        ("final_state".to_string(), state_array(&fin.state)),
        ("burned_cells".to_string(), burned),
    ]))
}
