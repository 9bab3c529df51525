use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaaVector {
    pub coefficients: Vec<f64>,
    pub source_length: usize,
}

impl PaaVector {
    pub fn word_size(&self) -> usize {
        self.coefficients.len()
    }
}

/// Piecewise aggregate approximation with `word_size` equal segments of
/// `len / word_size` samples each. When the division is not exact, a sample
/// straddling a segment boundary is split between both segments in
/// proportion to its overlap.
pub fn paa(values: &[f64], word_size: usize) -> Result<PaaVector> {
    let n = values.len();
    if n == 0 || word_size == 0 {
        return Err(Error::invalid(
            "paa needs a non-empty input and word_size >= 1",
        ));
    }
    if word_size > n {
        return Err(Error::invalid(format!(
            "word size {word_size} exceeds input length {n}"
        )));
    }
    // Work in units of 1/word_size samples: sample j spans [j*w, (j+1)*w) and
    // segment i spans [i*n, (i+1)*n), so every overlap is an integer.
    let w = word_size;
    let coefficients = (0..w)
        .map(|i| {
            let (seg_lo, seg_hi) = (i * n, (i + 1) * n);
            let first = seg_lo / w;
            let last = (seg_hi - 1) / w;
            let mut acc = 0.0;
            for (j, v) in values.iter().enumerate().take(last + 1).skip(first) {
                let lo = seg_lo.max(j * w);
                let hi = seg_hi.min((j + 1) * w);
                acc += (hi - lo) as f64 * v;
            }
            acc / n as f64
        })
        .collect();
    Ok(PaaVector {
        coefficients,
        source_length: n,
    })
}
