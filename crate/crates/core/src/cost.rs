//! Multi-criteria cost vectors.
//!
//! Impacts and costs share one representation: each criterion in the
//! registry declares the unit its value is expressed in, and a
//! [`CostVector`] holds one value per registered criterion, in registry order.

use serde::{Deserialize, Serialize};

use crate::units::Unit;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criterion {
    pub key: String,
    pub units: Unit,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriteriaRegistry {
    criteria: Vec<Criterion>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CostError {
    #[error("cost vector has {actual} entries but the registry declares {expected} criteria")]
    Arity { expected: usize, actual: usize },
    #[error("criterion {key} has non-finite value {value}")]
    NonFinite { key: String, value: f64 },
    #[error("duplicate criterion key {0:?}")]
    DuplicateKey(String),
}

impl CriteriaRegistry {
    pub fn new(criteria: Vec<Criterion>) -> Result<Self, CostError> {
        for (i, c) in criteria.iter().enumerate() {
            if criteria[..i].iter().any(|d| d.key == c.key) {
                return Err(CostError::DuplicateKey(c.key.clone()));
            }
        }
        Ok(Self { criteria })
    }

    /// Expected burned area (ha), expected asset cells burned (cell) and
    /// resource cost (EUR).
    pub fn standard() -> Self {
        let c = |key: &str, units, description: &str| Criterion {
            key: key.to_string(),
            units,
            description: description.to_string(),
        };
        Self {
            criteria: vec![
                c("burned_area", Unit::Hectare, "expected burned area at the end of the horizon"),
                c("asset_cells", Unit::Cell, "expected asset cells burned at the end of the horizon"),
                c("resource_cost", Unit::Euro, "resources committed by the strategy"),
            ],
        }
    }

    pub fn criteria(&self) -> &[Criterion] {
        &self.criteria
    }

    pub fn len(&self) -> usize {
        self.criteria.len()
    }

    pub fn is_empty(&self) -> bool {
        self.criteria.is_empty()
    }

    pub fn position(&self, key: &str) -> Option<usize> {
        self.criteria.iter().position(|c| c.key == key)
    }

    pub fn validate(&self, v: &CostVector) -> Result<(), CostError> {
        if v.len() != self.len() {
            return Err(CostError::Arity { expected: self.len(), actual: v.len() });
        }
        for (c, &value) in self.criteria.iter().zip(v.values()) {
            if !value.is_finite() {
                return Err(CostError::NonFinite { key: c.key.clone(), value });
            }
        }
        Ok(())
    }
}

impl Default for CriteriaRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

/// One value per criterion; all criteria are minimized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostVector(Vec<f64>);

impl CostVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `self` is no worse everywhere and strictly better somewhere.
    pub fn dominates(&self, other: &CostVector) -> bool {
        debug_assert_eq!(self.len(), other.len());
        let mut strictly = false;
        for (a, b) in self.0.iter().zip(&other.0) {
            if a > b {
                return false;
            }
            if a < b {
                strictly = true;
            }
        }
        strictly
    }

    pub fn weighted_sum(&self, weights: &[f64]) -> f64 {
        self.0.iter().zip(weights).map(|(v, w)| v * w).sum()
    }
}

impl From<Vec<f64>> for CostVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}
