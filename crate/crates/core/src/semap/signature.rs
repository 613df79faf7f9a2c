use serde::{Deserialize, Serialize};
use std::fmt;

use super::array::{ElementKind, SemanticArray};
use crate::units::Unit;

/// One entry of an axes pattern; `size: None` accepts any length.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisSpec {
    Any(String),
    Sized { name: String, size: usize },
}

impl AxisSpec {
    pub fn name(&self) -> &str {
        match self {
            AxisSpec::Any(n) | AxisSpec::Sized { name: n, .. } => n,
        }
    }

    pub fn size(&self) -> Option<usize> {
        match self {
            AxisSpec::Any(_) => None,
            AxisSpec::Sized { size, .. } => Some(*size),
        }
    }
}

/// Semantic signature of a module slot: axes pattern, element kind, units.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub axes: Vec<AxisSpec>,
    pub kind: ElementKind,
    pub units: Unit,
}

impl Signature {
    pub fn new(axes: &[&str], kind: ElementKind, units: Unit) -> Self {
        Self {
            axes: axes.iter().map(|a| AxisSpec::Any(a.to_string())).collect(),
            kind,
            units,
        }
    }

    pub fn real(axes: &[&str], units: Unit) -> Self {
        Self::new(axes, ElementKind::Real, units)
    }

    /// Connected slots must carry identical signatures.
    pub fn compatible_with(&self, other: &Signature) -> bool {
        self == other
    }

    /// Why `array` does not satisfy this signature, if it does not.
    pub fn mismatch(&self, array: &SemanticArray) -> Option<String> {
        if array.units() != self.units {
            return Some(format!("units {} but expected {}", array.units(), self.units));
        }
        if array.kind() != self.kind {
            return Some(format!("kind {} but expected {}", array.kind(), self.kind));
        }
        let names: Vec<&str> = array.axes().iter().map(|a| a.name.as_str()).collect();
        let want: Vec<&str> = self.axes.iter().map(AxisSpec::name).collect();
        if names != want {
            return Some(format!("axes {names:?} but expected {want:?}"));
        }
        for (spec, axis) in self.axes.iter().zip(array.axes()) {
            if let Some(size) = spec.size() {
                if size != axis.size {
                    return Some(format!("axis {} has size {} but expected {}", axis.name, axis.size, size));
                }
            }
        }
        None
    }

    pub fn accepts(&self, array: &SemanticArray) -> bool {
        self.mismatch(array).is_none()
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, a) in self.axes.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match a.size() {
                Some(s) => write!(f, "{}={}", a.name(), s)?,
                None => f.write_str(a.name())?,
            }
        }
        write!(f, "] {} {}", self.kind, self.units)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semap::array::Axis;

    #[test]
    fn accepts_matching_array() {
        let sig = Signature::real(&["row", "col"], Unit::MeterPerSecond);
        let a = SemanticArray::grid(2, 2, Unit::MeterPerSecond, vec![0.0; 4]).unwrap();
        assert!(sig.accepts(&a));
        assert!(sig.mismatch(&a.with_units(Unit::Meter)).unwrap().contains("units m"));
    }

    #[test]
    fn sized_axes_are_enforced() {
        let sig: Signature =
            serde_json::from_str(r#"{"axes":[{"name":"t","size":3}],"kind":"real","units":"1"}"#).unwrap();
        let a = SemanticArray::new(vec![Axis::new("t", 2)], ElementKind::Real, Unit::Dimensionless, vec![0.0; 2])
            .unwrap();
        assert!(!sig.accepts(&a));
        assert_eq!(sig.to_string(), "[t=3] real 1");
    }

    #[test]
    fn axis_order_matters() {
        let sig = Signature::real(&["col", "row"], Unit::Meter);
        let a = SemanticArray::grid(2, 2, Unit::Meter, vec![0.0; 4]).unwrap();
        assert!(sig.mismatch(&a).unwrap().contains("axes"));
    }
}
