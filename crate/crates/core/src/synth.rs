//! Synthetic two-channel solar-wind record with labelled events, used for
//! end-to-end checks. Each window-aligned block of samples carries one
//! event: either a CME-like density ramp-and-decay or an SIR-like speed
//! ramp, on Gaussian noise around quiet-wind baselines.

use std::fmt;
use std::io::Write;

use chrono::{DateTime, TimeDelta, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::WindowId;

pub const FILL_VALUE: f64 = 9999.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Cme,
    Sir,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Cme => "CME",
            Family::Sir => "SIR",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub events_per_family: usize,
    /// Samples per event block; equals the window length used to cluster.
    pub chunk_samples: usize,
    pub cadence_secs: u32,
    pub start: DateTime<Utc>,
    /// Noise standard deviation as a fraction of each event's amplitude.
    pub noise: f64,
    /// Probability that a sample is written as the fill sentinel.
    pub fill_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            events_per_family: 60,
            chunk_samples: 128,
            cadence_secs: 60,
            start: Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap(),
            noise: 0.08,
            fill_rate: 0.002,
            seed: 2021,
        }
    }
}

/// Generated table plus the family behind each window-aligned block.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub start: DateTime<Utc>,
    pub cadence_secs: u32,
    /// `(density, speed)` per sample; `None` marks a fill sentinel.
    pub samples: Vec<(Option<f64>, Option<f64>)>,
    pub truth: Vec<(WindowId, Family)>,
}

const DENSITY_BASE: f64 = 5.0;
const SPEED_BASE: f64 = 380.0;

fn cme_profile(t: f64, onset: f64, rise: f64, decay: f64) -> f64 {
    if t < onset {
        0.0
    } else if t < onset + rise {
        (t - onset) / rise
    } else {
        (-(t - onset - rise) / decay).exp()
    }
}

fn sir_profile(t: f64, onset: f64, rise: f64) -> f64 {
    ((t - onset) / rise).clamp(0.0, 1.0)
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    if config.chunk_samples < 16 || config.events_per_family == 0 {
        return Err(Error::config(
            "synthetic fixture needs chunk_samples >= 16 and at least one event",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<Family> = std::iter::repeat_n(Family::Cme, config.events_per_family)
        .chain(std::iter::repeat_n(Family::Sir, config.events_per_family))
        .collect();
    order.shuffle(&mut rng);

    let n = config.chunk_samples as f64;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut samples = Vec::with_capacity(order.len() * config.chunk_samples);
    let mut truth = Vec::with_capacity(order.len());
    for (k, family) in order.iter().enumerate() {
        truth.push((WindowId(k as u64), *family));
        let onset = n * rng.gen_range(0.22..0.30);
        let rise = n * rng.gen_range(0.08..0.14);
        let density_amp = rng.gen_range(12.0..20.0);
        let speed_amp = rng.gen_range(150.0..250.0);
        let decay = n * rng.gen_range(0.15..0.22);
        let sir_rise = n * rng.gen_range(0.30..0.40);
        for i in 0..config.chunk_samples {
            let t = i as f64;
            let (dens_shape, speed_shape) = match family {
                Family::Cme => (cme_profile(t, onset, rise, decay), 0.0),
                Family::Sir => (0.0, sir_profile(t, onset, sir_rise)),
            };
            let density = DENSITY_BASE
                + density_amp * dens_shape
                + config.noise * density_amp * unit.sample(&mut rng);
            let speed = SPEED_BASE
                + speed_amp * speed_shape
                + config.noise * speed_amp * unit.sample(&mut rng);
            let keep =
                |rng: &mut ChaCha8Rng, v: f64| (rng.gen::<f64>() >= config.fill_rate).then_some(v);
            let density = keep(&mut rng, density.max(0.1));
            let speed = keep(&mut rng, speed);
            samples.push((density, speed));
        }
    }
    Ok(SynthData {
        start: config.start,
        cadence_secs: config.cadence_secs,
        samples,
        truth,
    })
}

impl SynthData {
    /// Writes the table in the comma-separated ISO layout: timestamp,
    /// density, speed. Fill samples carry [`FILL_VALUE`].
    pub fn write_table<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "time,density,speed")?;
        for (i, (d, v)) in self.samples.iter().enumerate() {
            let t = self.start + TimeDelta::seconds(i as i64 * self.cadence_secs as i64);
            writeln!(
                out,
                "{},{:.3},{:.2}",
                t.format("%Y-%m-%dT%H:%M:%SZ"),
                d.unwrap_or(FILL_VALUE),
                v.unwrap_or(FILL_VALUE)
            )?;
        }
        Ok(())
    }

    /// Writes `window_id,family` rows.
    pub fn write_truth<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["window_id", "family"])?;
        for (id, family) in &self.truth {
            w.write_record([id.to_string(), family.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
