use std::fmt;

use serde::{Deserialize, Serialize};

/// A metric value, or an explicit reason why it is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Value(f64),
    Absent(String),
}

impl Measure {
    pub fn absent(reason: impl Into<String>) -> Measure {
        Measure::Absent(reason.into())
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Measure::Value(v) => Some(*v),
            Measure::Absent(_) => None,
        }
    }

    pub fn is_absent(&self) -> bool {
        matches!(self, Measure::Absent(_))
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::Value(v) => match f.precision() {
                Some(p) => write!(f, "{v:.p$}"),
                None => write!(f, "{v}"),
            },
            Measure::Absent(_) => f.write_str("--"),
        }
    }
}
