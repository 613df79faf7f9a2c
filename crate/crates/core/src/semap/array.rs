use serde::{Deserialize, Serialize};
use std::fmt;

use crate::digest::Hasher;
use crate::units::Unit;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub size: usize,
}

impl Axis {
    pub fn new(name: impl Into<String>, size: usize) -> Self {
        Self { name: name.into(), size }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Real,
    Integer,
    Categorical,
    Boolean,
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElementKind::Real => "real",
            ElementKind::Integer => "integer",
            ElementKind::Categorical => "categorical",
            ElementKind::Boolean => "boolean",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ArrayError {
    #[error("axis sizes multiply to {expected} but {actual} values were given")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("duplicate axis name {0:?}")]
    DuplicateAxis(String),
    #[error("range [{lo}, {hi}] is empty or not finite")]
    BadRange { lo: f64, hi: f64 },
    #[error("value {value} at flat index {index} lies outside [{lo}, {hi}]")]
    OutOfRange { index: usize, value: f64, lo: f64, hi: f64 },
    #[error("value {value} at flat index {index} is not a valid {kind} element")]
    BadElement { index: usize, value: f64, kind: ElementKind },
    #[error("categorical arrays need a non-empty, duplicate-free label set")]
    BadLabels,
    #[error("a range is only meaningful for real or integer arrays")]
    RangeOnNonNumeric,
}

/// Dense row-major array carrying its axes, element kind, units and value
/// domain. Instances are validated on construction and immutable afterwards.
///
/// Categorical elements are stored as indices into `labels`; booleans as 0/1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawArray", into = "RawArray")]
pub struct SemanticArray {
    axes: Vec<Axis>,
    kind: ElementKind,
    units: Unit,
    range: Option<(f64, f64)>,
    nodata: Option<f64>,
    labels: Vec<String>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawArray {
    axes: Vec<Axis>,
    kind: ElementKind,
    units: Unit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    range: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nodata: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    labels: Vec<String>,
    values: Vec<f64>,
}

impl TryFrom<RawArray> for SemanticArray {
    type Error = ArrayError;
    fn try_from(r: RawArray) -> Result<Self, ArrayError> {
        let a = SemanticArray {
            axes: r.axes,
            kind: r.kind,
            units: r.units,
            range: r.range,
            nodata: r.nodata,
            labels: r.labels,
            values: r.values,
        };
        a.validate()?;
        Ok(a)
    }
}

impl From<SemanticArray> for RawArray {
    fn from(a: SemanticArray) -> Self {
        RawArray {
            axes: a.axes,
            kind: a.kind,
            units: a.units,
            range: a.range,
            nodata: a.nodata,
            labels: a.labels,
            values: a.values,
        }
    }
}

impl SemanticArray {
    pub fn new(
        axes: Vec<Axis>,
        kind: ElementKind,
        units: Unit,
        values: Vec<f64>,
    ) -> Result<Self, ArrayError> {
        let a = SemanticArray {
            axes,
            kind,
            units,
            range: None,
            nodata: None,
            labels: Vec::new(),
            values,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn categorical<S: Into<String>>(
        axes: Vec<Axis>,
        units: Unit,
        labels: impl IntoIterator<Item = S>,
        values: Vec<f64>,
    ) -> Result<Self, ArrayError> {
        let a = SemanticArray {
            axes,
            kind: ElementKind::Categorical,
            units,
            range: None,
            nodata: None,
            labels: labels.into_iter().map(Into::into).collect(),
            values,
        };
        a.validate()?;
        Ok(a)
    }

    /// Zero-dimensional real array.
    pub fn scalar(value: f64, units: Unit) -> Result<Self, ArrayError> {
        Self::new(Vec::new(), ElementKind::Real, units, vec![value])
    }

    /// Real grid with axes `[row, col]`.
    pub fn grid(nrows: usize, ncols: usize, units: Unit, values: Vec<f64>) -> Result<Self, ArrayError> {
        Self::new(
            vec![Axis::new("row", nrows), Axis::new("col", ncols)],
            ElementKind::Real,
            units,
            values,
        )
    }

    pub fn with_range(mut self, lo: f64, hi: f64) -> Result<Self, ArrayError> {
        self.range = Some((lo, hi));
        self.validate()?;
        Ok(self)
    }

    pub fn with_nodata(mut self, nodata: f64) -> Result<Self, ArrayError> {
        self.nodata = Some(nodata);
        self.validate()?;
        Ok(self)
    }

    pub fn with_labels<S: Into<String>>(mut self, labels: impl IntoIterator<Item = S>) -> Result<Self, ArrayError> {
        self.labels = labels.into_iter().map(Into::into).collect();
        self.validate()?;
        Ok(self)
    }

    /// Same metadata, new values; re-validated.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, ArrayError> {
        let a = SemanticArray { values, ..self.clone() };
        a.validate()?;
        Ok(a)
    }

    /// Same values and domain, different units.
    pub fn with_units(&self, units: Unit) -> Self {
        SemanticArray { units, ..self.clone() }
    }

    fn validate(&self) -> Result<(), ArrayError> {
        let expected: usize = self.axes.iter().map(|a| a.size).product();
        if expected != self.values.len() {
            return Err(ArrayError::ShapeMismatch { expected, actual: self.values.len() });
        }
        for (i, a) in self.axes.iter().enumerate() {
            if self.axes[..i].iter().any(|b| b.name == a.name) {
                return Err(ArrayError::DuplicateAxis(a.name.clone()));
            }
        }
        if let Some((lo, hi)) = self.range {
            if !matches!(self.kind, ElementKind::Real | ElementKind::Integer) {
                return Err(ArrayError::RangeOnNonNumeric);
            }
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(ArrayError::BadRange { lo, hi });
            }
        }
        if self.kind == ElementKind::Categorical {
            let dup = self.labels.iter().enumerate().any(|(i, l)| self.labels[..i].contains(l));
            if self.labels.is_empty() || dup {
                return Err(ArrayError::BadLabels);
            }
        }
        for (index, &value) in self.values.iter().enumerate() {
            if self.is_nodata(value) {
                continue;
            }
            let ok = match self.kind {
                ElementKind::Real => true,
                ElementKind::Integer => value.fract() == 0.0,
                ElementKind::Boolean => value == 0.0 || value == 1.0,
                ElementKind::Categorical => {
                    value.fract() == 0.0 && value >= 0.0 && (value as usize) < self.labels.len()
                }
            };
            if !ok {
                return Err(ArrayError::BadElement { index, value, kind: self.kind });
            }
            if let Some((lo, hi)) = self.range {
                if !(value >= lo && value <= hi) {
                    return Err(ArrayError::OutOfRange { index, value, lo, hi });
                }
            }
        }
        Ok(())
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        match self.nodata {
            Some(nd) if nd.is_nan() => v.is_nan(),
            Some(nd) => v == nd,
            None => false,
        }
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn units(&self) -> Unit {
        self.units
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        self.range
    }

    pub fn nodata(&self) -> Option<f64> {
        self.nodata
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Iterator over values that are not the nodata sentinel.
    pub fn data(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(move |v| !self.is_nodata(*v))
    }

    pub fn digest(&self) -> String {
        let mut h = Hasher::new();
        h.u64(self.axes.len() as u64);
        for a in &self.axes {
            h.str(&a.name).u64(a.size as u64);
        }
        h.str(&self.kind.to_string()).str(self.units.as_str());
        match self.range {
            Some((lo, hi)) => h.u64(1).f64(lo).f64(hi),
            None => h.u64(0),
        };
        match self.nodata {
            Some(nd) => h.u64(1).f64(nd),
            None => h.u64(0),
        };
        h.u64(self.labels.len() as u64);
        for l in &self.labels {
            h.str(l);
        }
        h.f64s(&self.values);
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_value_count() {
        let err = SemanticArray::grid(2, 3, Unit::Meter, vec![0.0; 5]).unwrap_err();
        assert_eq!(err, ArrayError::ShapeMismatch { expected: 6, actual: 5 });
    }

    #[test]
    fn range_ignores_nodata() {
        let a = SemanticArray::grid(1, 3, Unit::Dimensionless, vec![0.5, -9999.0, 1.0])
            .unwrap()
            .with_nodata(-9999.0)
            .unwrap()
            .with_range(0.0, 1.0)
            .unwrap();
        assert_eq!(a.data().count(), 2);
        let bad = a.with_values(vec![0.5, 2.0, 1.0]);
        assert!(matches!(bad, Err(ArrayError::OutOfRange { index: 1, .. })));
    }

    #[test]
    fn categorical_values_must_index_labels() {
        let axes = vec![Axis::new("cell", 3)];
        let base = SemanticArray {
            axes,
            kind: ElementKind::Categorical,
            units: Unit::Dimensionless,
            range: None,
            nodata: None,
            labels: vec!["a".into(), "b".into()],
            values: vec![0.0, 1.0, 1.0],
        };
        assert!(base.validate().is_ok());
        assert!(base.with_values(vec![0.0, 2.0, 1.0]).is_err());
        assert!(base.with_values(vec![0.0, 0.5, 1.0]).is_err());
    }

    #[test]
    fn deserialization_validates() {
        let ok = r#"{"axes":[{"name":"t","size":2}],"kind":"integer","units":"cell","values":[1,2]}"#;
        let a: SemanticArray = serde_json::from_str(ok).unwrap();
        assert_eq!(a.units(), Unit::Cell);
        let bad = r#"{"axes":[{"name":"t","size":2}],"kind":"integer","units":"cell","values":[1.5,2]}"#;
        assert!(serde_json::from_str::<SemanticArray>(bad).is_err());
    }

    #[test]
    fn digest_depends_on_metadata() {
        let a = SemanticArray::grid(1, 2, Unit::Meter, vec![1.0, 2.0]).unwrap();
        let b = a.with_units(Unit::MeterPerSecond);
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), a.clone().digest());
    }
}
