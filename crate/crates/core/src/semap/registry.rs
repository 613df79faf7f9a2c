//! Named predicates and transforms.
//!
//! Contracts and pipeline documents refer to behaviour by name only; the
//! registry resolves those names at composition time.

use serde_json::Value;
use std::collections::BTreeMap;
use std::sync::Arc;

use super::array::{Axis, ElementKind, SemanticArray};
use super::signature::Signature;
use crate::units::Unit;

pub type PredicateFn = dyn Fn(&[&SemanticArray], &Value) -> Result<(), String> + Send + Sync;

pub struct TransformInput<'a> {
    pub module_id: &'a str,
    pub inputs: &'a BTreeMap<String, SemanticArray>,
    pub outputs: &'a BTreeMap<String, Signature>,
    pub params: &'a Value,
}

pub type TransformOutput = Result<BTreeMap<String, SemanticArray>, String>;
pub type TransformFn = dyn Fn(&TransformInput<'_>) -> TransformOutput + Send + Sync;

#[derive(Clone, Default)]
pub struct Registry {
    predicates: BTreeMap<String, Arc<PredicateFn>>,
    transforms: BTreeMap<String, Arc<TransformFn>>,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry")
            .field("predicates", &self.predicates.keys().collect::<Vec<_>>())
            .field("transforms", &self.transforms.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry pre-loaded with the generic predicates and transforms.
    pub fn builtin() -> Self {
        let mut r = Self::default();
        r.register_predicate("units_eq", units_eq);
        r.register_predicate("kind_eq", kind_eq);
        r.register_predicate("axes_eq", axes_eq);
        r.register_predicate("same_axes", same_axes);
        r.register_predicate("finite", finite);
        r.register_predicate("non_negative", non_negative);
        r.register_predicate("in_range", in_range);
        r.register_predicate("non_decreasing", non_decreasing);
        r.register_predicate("sum_to", sum_to);

        r.register_transform("identity", identity);
        r.register_transform("scale", scale);
        r.register_transform("offset", offset);
        r.register_transform("clamp", clamp);
        r.register_transform("sum", sum);
        r.register_transform("cells_to_hectares", cells_to_hectares);
        r
    }

    pub fn register_predicate<F>(&mut self, name: &str, f: F)
    where
        F: Fn(&[&SemanticArray], &Value) -> Result<(), String> + Send + Sync + 'static,
    {
        self.predicates.insert(name.to_string(), Arc::new(f));
    }

    pub fn register_transform<F>(&mut self, name: &str, f: F)
    where
        F: Fn(&TransformInput<'_>) -> TransformOutput + Send + Sync + 'static,
    {
        self.transforms.insert(name.to_string(), Arc::new(f));
    }

    pub fn predicate(&self, name: &str) -> Option<Arc<PredicateFn>> {
        self.predicates.get(name).cloned()
    }

    pub fn transform(&self, name: &str) -> Option<Arc<TransformFn>> {
        self.transforms.get(name).cloned()
    }
}

fn arg_f64(args: &Value, key: &str) -> Result<f64, String> {
    args.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| format!("missing numeric argument {key:?}"))
}

fn arg_str<'a>(args: &'a Value, key: &str) -> Result<&'a str, String> {
    args.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| format!("missing string argument {key:?}"))
}

fn units_eq(arrays: &[&SemanticArray], args: &Value) -> Result<(), String> {
    let want: Unit = arg_str(args, "units")?.parse().map_err(|e| format!("{e}"))?;
    for a in arrays {
        if a.units() != want {
            return Err(format!("units {} != {}", a.units(), want));
        }
    }
    Ok(())
}

fn kind_eq(arrays: &[&SemanticArray], args: &Value) -> Result<(), String> {
    let want: ElementKind =
        serde_json::from_value(args.get("kind").cloned().unwrap_or(Value::Null)).map_err(|e| e.to_string())?;
    for a in arrays {
        if a.kind() != want {
            return Err(format!("kind {} != {}", a.kind(), want));
        }
    }
    Ok(())
}

fn axes_eq(arrays: &[&SemanticArray], args: &Value) -> Result<(), String> {
    let want: Vec<String> =
        serde_json::from_value(args.get("axes").cloned().unwrap_or(Value::Null)).map_err(|e| e.to_string())?;
    for a in arrays {
        let names: Vec<&str> = a.axes().iter().map(|x| x.name.as_str()).collect();
        if names != want {
            return Err(format!("axes {names:?} != {want:?}"));
        }
    }
    Ok(())
}

fn same_axes(arrays: &[&SemanticArray], _: &Value) -> Result<(), String> {
    match arrays.split_first() {
        Some((first, rest)) => {
            for a in rest {
                if a.axes() != first.axes() {
                    return Err(format!("axes {:?} differ from {:?}", a.axes(), first.axes()));
                }
            }
            Ok(())
        }
        None => Ok(()),
    }
}

fn each_value(arrays: &[&SemanticArray], ok: impl Fn(f64) -> bool, what: &str) -> Result<(), String> {
    for a in arrays {
        if let Some((i, v)) = a.values().iter().enumerate().find(|(_, v)| !a.is_nodata(**v) && !ok(**v)) {
            return Err(format!("value {v} at index {i} is not {what}"));
        }
    }
    Ok(())
}

fn finite(arrays: &[&SemanticArray], _: &Value) -> Result<(), String> {
    each_value(arrays, f64::is_finite, "finite")
}

fn non_negative(arrays: &[&SemanticArray], _: &Value) -> Result<(), String> {
    each_value(arrays, |v| v >= 0.0, "non-negative")
}

fn in_range(arrays: &[&SemanticArray], args: &Value) -> Result<(), String> {
    let lo = args.get("lo").and_then(Value::as_f64).unwrap_or(f64::NEG_INFINITY);
    let hi = args.get("hi").and_then(Value::as_f64).unwrap_or(f64::INFINITY);
    each_value(arrays, |v| v >= lo && v <= hi, &format!("within [{lo}, {hi}]"))
}

fn non_decreasing(arrays: &[&SemanticArray], _: &Value) -> Result<(), String> {
    for a in arrays {
        let data: Vec<f64> = a.data().collect();
        if let Some(i) = data.windows(2).position(|w| w[1] < w[0]) {
            return Err(format!("series decreases at position {}: {} -> {}", i + 1, data[i], data[i + 1]));
        }
    }
    Ok(())
}

fn sum_to(arrays: &[&SemanticArray], args: &Value) -> Result<(), String> {
    let target = arg_f64(args, "value")?;
    let tol = args.get("tol").and_then(Value::as_f64).unwrap_or(1e-9);
    for a in arrays {
        let s: f64 = a.data().sum();
        if (s - target).abs() > tol {
            return Err(format!("sum {s} differs from {target} by more than {tol}"));
        }
    }
    Ok(())
}

fn single_io<'a>(input: &'a TransformInput<'_>) -> Result<(&'a SemanticArray, &'a str), String> {
    if input.inputs.len() != 1 || input.outputs.len() != 1 {
        return Err(format!(
            "module {} needs exactly one input and one output slot",
            input.module_id
        ));
    }
    let a = input.inputs.values().next().expect("one input");
    let out = input.outputs.keys().next().expect("one output");
    Ok((a, out.as_str()))
}

fn map_values(input: &TransformInput<'_>, f: impl Fn(f64) -> f64, units: Option<Unit>) -> TransformOutput {
    let (a, out) = single_io(input)?;
    let values = a.values().iter().map(|&v| if a.is_nodata(v) { v } else { f(v) }).collect();
    let mut result = SemanticArray::new(a.axes().to_vec(), ElementKind::Real, units.unwrap_or(a.units()), values)
        .map_err(|e| e.to_string())?;
    if let Some(nd) = a.nodata() {
        result = result.with_nodata(nd).map_err(|e| e.to_string())?;
    }
    Ok(BTreeMap::from([(out.to_string(), result)]))
}

fn units_param(params: &Value) -> Result<Option<Unit>, String> {
    match params.get("units").and_then(Value::as_str) {
        Some(u) => u.parse().map(Some).map_err(|e| format!("{e}")),
        None => Ok(None),
    }
}

fn identity(input: &TransformInput<'_>) -> TransformOutput {
    let (a, out) = single_io(input)?;
    Ok(BTreeMap::from([(out.to_string(), a.clone())]))
}

fn scale(input: &TransformInput<'_>) -> TransformOutput {
    let factor = arg_f64(input.params, "factor")?;
    map_values(input, |v| v * factor, units_param(input.params)?)
}

fn offset(input: &TransformInput<'_>) -> TransformOutput {
    let value = arg_f64(input.params, "value")?;
    map_values(input, |v| v + value, units_param(input.params)?)
}

fn clamp(input: &TransformInput<'_>) -> TransformOutput {
    let lo = arg_f64(input.params, "lo")?;
    let hi = arg_f64(input.params, "hi")?;
    map_values(input, |v| v.clamp(lo, hi), None)
}

fn sum(input: &TransformInput<'_>) -> TransformOutput {
    let (a, out) = single_io(input)?;
    let s: f64 = a.data().sum();
    let arr = SemanticArray::new(Vec::<Axis>::new(), ElementKind::Real, a.units(), vec![s]).map_err(|e| e.to_string())?;
    Ok(BTreeMap::from([(out.to_string(), arr)]))
}

fn cells_to_hectares(input: &TransformInput<'_>) -> TransformOutput {
    let cellsize = arg_f64(input.params, "cellsize")?;
    let factor = cellsize * cellsize / 1e4;
    map_values(input, |v| v * factor, Some(Unit::Hectare))
}
