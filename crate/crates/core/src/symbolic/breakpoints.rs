use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

const MAX_BITS: usize = 16;
pub const MAX_CARDINALITY: u32 = 1 << MAX_BITS;

/// Standard-normal quantiles splitting the real line into `cardinality`
/// equiprobable cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakpoints {
    pub cardinality: u32,
    pub thresholds: Vec<f64>,
}

impl Breakpoints {
    fn compute(cardinality: u32) -> Self {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let c = cardinality as usize;
        let mut thresholds = vec![0.0; c - 1];
        // Lower half from the quantile function, upper half mirrored so the
        // table is exactly antisymmetric.
        for i in 0..(c - 1) / 2 {
            let q = normal.inverse_cdf((i + 1) as f64 / c as f64);
            thresholds[i] = q;
            thresholds[c - 2 - i] = -q;
        }
        Self {
            cardinality,
            thresholds,
        }
    }

    /// Lower and upper edge of the cell for `symbol`; the outer cells are
    /// unbounded.
    pub fn cell(&self, symbol: u32) -> (f64, f64) {
        let s = symbol as usize;
        let lo = if s == 0 {
            f64::NEG_INFINITY
        } else {
            self.thresholds[s - 1]
        };
        let hi = self.thresholds.get(s).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    /// Symbol for `value`. Values sitting exactly on a threshold go to the
    /// upper cell.
    pub fn symbol(&self, value: f64) -> u32 {
        self.thresholds.partition_point(|t| *t <= value) as u32
    }
}

fn cardinality_bits(cardinality: u32) -> Result<usize> {
    if cardinality < 2 || !cardinality.is_power_of_two() || cardinality > MAX_CARDINALITY {
        return Err(Error::config(format!(
            "cardinality {cardinality} is not a power of two in 2..={MAX_CARDINALITY}"
        )));
    }
    Ok(cardinality.trailing_zeros() as usize)
}

/// Cached breakpoint table for a power-of-two cardinality.
pub fn breakpoints(cardinality: u32) -> Result<&'static Breakpoints> {
    static TABLES: [OnceLock<Breakpoints>; MAX_BITS + 1] =
        [const { OnceLock::new() }; MAX_BITS + 1];
    let bits = cardinality_bits(cardinality)?;
    Ok(TABLES[bits].get_or_init(|| Breakpoints::compute(cardinality)))
}
