//! Fixed unit table.
//!
//! Units are compared as exact normalized strings; there is no dimensional
//! algebra.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Unit {
    Meter,
    MeterPerSecond,
    Hectare,
    KilogramPerSquareMeter,
    Dimensionless,
    Cell,
    Euro,
    Person,
}

impl Unit {
    pub const ALL: [Unit; 8] = [
        Unit::Meter,
        Unit::MeterPerSecond,
        Unit::Hectare,
        Unit::KilogramPerSquareMeter,
        Unit::Dimensionless,
        Unit::Cell,
        Unit::Euro,
        Unit::Person,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Meter => "m",
            Unit::MeterPerSecond => "m/s",
            Unit::Hectare => "ha",
            Unit::KilogramPerSquareMeter => "kg/m2",
            Unit::Dimensionless => "1",
            Unit::Cell => "cell",
            Unit::Euro => "EUR",
            Unit::Person => "person",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown unit {0:?} (known: m, m/s, ha, kg/m2, 1, cell, EUR, person)")]
pub struct UnknownUnit(pub String);

impl FromStr for Unit {
    type Err = UnknownUnit;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let normalized: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        Unit::ALL
            .into_iter()
            .find(|u| u.as_str() == normalized)
            .ok_or_else(|| UnknownUnit(s.to_string()))
    }
}

impl TryFrom<String> for Unit {
    type Error = UnknownUnit;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Unit> for String {
    fn from(u: Unit) -> Self {
        u.as_str().to_string()
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
