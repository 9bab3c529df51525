//! Per-window conditioning ahead of symbolic compression: linear detrend,
//! moving-average smoothing, z-normalization. Always applied in that order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub detrend: bool,
    pub smooth: bool,
    pub smooth_width: usize,
    pub normalize: bool,
    pub std_floor: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            detrend: true,
            smooth: true,
            smooth_width: 31,
            normalize: true,
            std_floor: 1e-8,
        }
    }
}

impl PreprocessConfig {
    /// All steps off.
    pub fn identity() -> Self {
        Self {
            detrend: false,
            smooth: false,
            normalize: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.smooth_width == 0 || self.smooth_width.is_multiple_of(2) {
            return Err(Error::config(format!(
                "preprocess.smooth_width must be odd and >= 1, got {}",
                self.smooth_width
            )));
        }
        if self.std_floor.is_nan() || self.std_floor <= 0.0 {
            return Err(Error::config("preprocess.std_floor must be > 0"));
        }
        Ok(())
    }
}

/// Which steps ran on a window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Steps {
    pub detrended: bool,
    pub smoothed: bool,
    pub normalized: bool,
    /// Set when normalization met a window whose spread was under the floor.
    pub flat: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessed {
    pub values: Vec<f64>,
    pub steps: Steps,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Least-squares line through `(index, value)`, as `(intercept, slope)`.
pub fn linear_fit(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let y_mean = mean(values);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in values.iter().enumerate() {
        let dt = i as f64 - t_mean;
        sxy += dt * (y - y_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    (y_mean - slope * t_mean, slope)
}

pub fn detrend(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::invalid("detrend needs at least two samples"));
    }
    let (intercept, slope) = linear_fit(values);
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, y)| y - (intercept + slope * i as f64))
        .collect())
}

/// Centered moving average. Near the ends the averaging span is cut off at
/// the boundary, so sample `i` averages `max(0, i-h)..=min(n-1, i+h)`.
pub fn smooth(values: &[f64], width: usize) -> Result<Vec<f64>> {
    if width.is_multiple_of(2) || width == 0 {
        return Err(Error::config(format!("smoothing width {width} is not odd")));
    }
    if width > values.len() {
        return Err(Error::config(format!(
            "smoothing width {width} exceeds window length {}",
            values.len()
        )));
    }
    let half = width / 2;
    let mut prefix = Vec::with_capacity(values.len() + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    let n = values.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            if lo == hi {
                values[i]
            } else {
                (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64
            }
        })
        .collect())
}

/// Zero mean, unit population standard deviation. Windows with spread at or
/// below `std_floor` map to all zeros; the bool reports that case.
pub fn znormalize_flagged(values: &[f64], std_floor: f64) -> (Vec<f64>, bool) {
    if values.is_empty() {
        return (Vec::new(), true);
    }
    let mu = mean(values);
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / values.len() as f64;
    let sd = var.sqrt();
    if sd <= std_floor {
        return (vec![0.0; values.len()], true);
    }
    (values.iter().map(|v| (v - mu) / sd).collect(), false)
}

pub fn znormalize(values: &[f64], std_floor: f64) -> Vec<f64> {
    znormalize_flagged(values, std_floor).0
}

/// Runs the enabled steps on a gap-free window.
pub fn preprocess(values: &[f64], config: &PreprocessConfig) -> Result<Preprocessed> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(
            "preprocess input contains non-finite samples",
        ));
    }
    let mut steps = Steps::default();
    let mut out = values.to_vec();
    if config.detrend {
        out = detrend(&out)?;
        steps.detrended = true;
    }
    if config.smooth {
        out = smooth(&out, config.smooth_width)?;
        steps.smoothed = true;
    }
    if config.normalize {
        let (normalized, flat) = znormalize_flagged(&out, config.std_floor);
        out = normalized;
        steps.normalized = true;
        steps.flat = flat;
    }
    Ok(Preprocessed { values: out, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    fn population_var(v: &[f64]) -> f64 {
        let m = mean(v);
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
    }

    #[test]
    fn detrend_examples() {
        assert!(close(
            &detrend(&[1.0, 2.0, 3.0, 4.0]).unwrap(),
            &[0.0; 4],
            1e-12
        ));
        assert!(close(&detrend(&[7.0; 3]).unwrap(), &[0.0; 3], 1e-12));
        // closed form: slope = sum((t-1.5)(y-0.5)) / sum((t-1.5)^2) = 1/5,
        // intercept = 0.5 - 0.2 * 1.5 = 0.2
        let oracle: Vec<f64> = [0.0, 1.0, 0.0, 1.0]
            .iter()
            .enumerate()
            .map(|(t, y)| y - (0.2 + 0.2 * t as f64))
            .collect();
        assert!(close(
            &detrend(&[0.0, 1.0, 0.0, 1.0]).unwrap(),
            &oracle,
            1e-12
        ));
        assert!(detrend(&[1.0]).is_err());
    }

    #[test]
    fn smooth_examples() {
        let v = [3.0, -1.0, 4.0, 1.5];
        assert_eq!(smooth(&v, 1).unwrap(), v.to_vec());
        assert!(close(
            &smooth(&[0.0, 3.0, 0.0], 3).unwrap(),
            &[1.5, 1.0, 1.5],
            1e-12
        ));
        assert!(close(&smooth(&[2.5; 9], 5).unwrap(), &[2.5; 9], 1e-12));
        assert!(matches!(smooth(&v, 2), Err(Error::Config(_))));
        assert!(matches!(smooth(&v, 5), Err(Error::Config(_))));
    }

    #[test]
    fn znormalize_examples() {
        assert!(close(&znormalize(&[2.0, 4.0], 1e-8), &[-1.0, 1.0], 1e-12));
        let (z, flat) = znormalize_flagged(&[7.0, 7.0, 7.0], 1e-8);
        assert_eq!(z, vec![0.0; 3]);
        assert!(flat);
        let s2 = 2f64.sqrt();
        let oracle = [-s2, -s2 / 2.0, 0.0, s2 / 2.0, s2];
        assert!(close(
            &znormalize(&[1.0, 2.0, 3.0, 4.0, 5.0], 1e-8),
            &oracle,
            1e-12
        ));
    }

    #[test]
    fn identity_pipeline() {
        let v = [5.0, 1.0, 3.0];
        let out = preprocess(&v, &PreprocessConfig::identity()).unwrap();
        assert_eq!(out.values, v.to_vec());
        assert_eq!(out.steps, Steps::default());
    }

    #[test]
    fn smoothed_and_detrended_path_records_steps() {
        let v: Vec<f64> = (0..200)
            .map(|i| (i as f64 * 0.1).sin() * 3.0 + i as f64)
            .collect();
        let cfg = PreprocessConfig {
            smooth_width: 5,
            ..PreprocessConfig::default()
        };
        let out = preprocess(&v, &cfg).unwrap();
        assert!(out.steps.detrended && out.steps.smoothed && out.steps.normalized);
        assert!(!out.steps.flat);
        assert!(mean(&out.values).abs() < 1e-9);
    }

    #[test]
    fn noise_free_ramp_goes_flat() {
        let v: Vec<f64> = (0..50).map(|i| 4.0 + 0.5 * i as f64).collect();
        let cfg = PreprocessConfig {
            smooth_width: 7,
            ..PreprocessConfig::default()
        };
        let out = preprocess(&v, &cfg).unwrap();
        assert!(out.values.iter().all(|x| x.abs() < 1e-9));
        assert!(out.steps.flat);
    }

    #[test]
    fn step_order_is_detrend_smooth_normalize() {
        let v: Vec<f64> = (0..40)
            .map(|i| 0.3 * i as f64 + if i >= 25 { 6.0 } else { 0.0 })
            .collect();
        let cfg = PreprocessConfig {
            smooth_width: 9,
            ..PreprocessConfig::default()
        };
        let got = preprocess(&v, &cfg).unwrap().values;
        let expected = znormalize(&smooth(&detrend(&v).unwrap(), 9).unwrap(), 1e-8);
        let swapped = znormalize(&detrend(&smooth(&v, 9).unwrap()).unwrap(), 1e-8);
        assert!(close(&got, &expected, 1e-12));
        assert!(!close(&got, &swapped, 1e-6));
    }

    #[test]
    fn config_validation() {
        assert!(PreprocessConfig::default().validate().is_ok());
        let even = PreprocessConfig {
            smooth_width: 4,
            ..PreprocessConfig::default()
        };
        assert!(even.validate().is_err());
        let floor = PreprocessConfig {
            std_floor: 0.0,
            ..PreprocessConfig::default()
        };
        assert!(floor.validate().is_err());
    }

    proptest! {
        #[test]
        fn znormalize_idempotent(v in prop::collection::vec(-1e3f64..1e3, 2..200)) {
            let once = znormalize(&v, 1e-8);
            let twice = znormalize(&once, 1e-8);
            prop_assert!(close(&once, &twice, 1e-9));
            prop_assert!(mean(&once).abs() < 1e-9);
        }

        #[test]
        fn detrend_uncorrelated_with_index(v in prop::collection::vec(-1e3f64..1e3, 3..200)) {
            let r = detrend(&v).unwrap();
            let (intercept, slope) = linear_fit(&r);
            let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            prop_assert!(slope.abs() < 1e-9 * scale);
            prop_assert!(intercept.abs() < 1e-9 * scale * v.len() as f64);
        }

        #[test]
        fn smooth_constant_exact_and_variance_non_increasing(
            v in prop::collection::vec(-1e3f64..1e3, 1..200),
            half in 0usize..20,
            c in -1e3f64..1e3,
        ) {
            let width = (2 * half + 1).min(if v.len() % 2 == 1 { v.len() } else { v.len() - 1 });
            let s = smooth(&v, width).unwrap();
            prop_assert_eq!(s.len(), v.len());
            prop_assert!(population_var(&s) <= population_var(&v) * (1.0 + 1e-9) + 1e-9);
            let flat = vec![c; v.len()];
            prop_assert!(close(&smooth(&flat, width).unwrap(), &flat, 1e-9));
        }
    }
}
