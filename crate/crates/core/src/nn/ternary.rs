use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-width vector over {-1, 0, +1}. The discrete currency of every
/// quantized interface: a code of width `e` addresses one of `3^e` cells.
///
/// Codes are ordered and hashable so they can index automaton states.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TernaryCode {
    values: Vec<i8>,
}

impl TernaryCode {
    pub fn new(values: Vec<i8>) -> Result<Self> {
        if values.iter().any(|v| !matches!(v, -1 | 0 | 1)) {
            return Err(Error::DataIntegrity(format!(
                "ternary code contains a level outside {{-1,0,1}}: {values:?}"
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros(width: usize) -> Self {
        Self {
            values: vec![0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    /// Code as a float vector, the form consumed by decoder networks.
    pub fn to_f64(&self) -> Array1<f64> {
        Array1::from_iter(self.values.iter().map(|&v| f64::from(v)))
    }

    /// Compact text form, e.g. `+0-` for `[1, 0, -1]`.
    pub fn compact(&self) -> String {
        self.values
            .iter()
            .map(|v| match v {
                1 => '+',
                0 => '0',
                _ => '-',
            })
            .collect()
    }
}

impl std::fmt::Display for TernaryCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.compact())
    }
}

/// Nearest-level ternary quantization with decision boundaries at +-0.5.
/// Values with |x| exactly 0.5 map to 0.
pub fn ternary_level(x: f64) -> i8 {
    if x > 0.5 {
        1
    } else if x < -0.5 {
        -1
    } else {
        0
    }
}

pub fn ternary_quantize_slice(xs: &[f64]) -> TernaryCode {
    TernaryCode {
        values: xs.iter().map(|&x| ternary_level(x)).collect(),
    }
}

pub fn ternary_quantize(xs: &Array1<f64>) -> TernaryCode {
    TernaryCode {
        values: xs.iter().map(|&x| ternary_level(x)).collect(),
    }
}
