//! The pipeline configuration file (TOML). Every section except `dataset`
//! and `annotate.seed` has defaults; unknown keys are rejected.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterParams, Metric};
use crate::error::{Error, Result};
use crate::ingest::ChannelSpec;
use crate::preprocess::PreprocessConfig;
use crate::symbolic::IndexParams;

/// Durations written the way people write them: `"35h"`, `"1m"`, `"2h 8m"`.
mod duration_text {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    /// Whole hours, minutes or seconds in the largest unit that divides the
    /// duration exactly, so `35h` stays `35h` rather than `1day 11h`.
    pub fn format(d: &Duration) -> String {
        let secs = d.as_secs();
        if d.subsec_nanos() != 0 {
            humantime::format_duration(*d).to_string()
        } else if secs != 0 && secs.is_multiple_of(3600) {
            format!("{}h", secs / 3600)
        } else if secs != 0 && secs.is_multiple_of(60) {
            format!("{}m", secs / 60)
        } else {
            format!("{secs}s")
        }
    }

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let text = String::deserialize(d)?;
        humantime::parse_duration(&text).map_err(serde::de::Error::custom)
    }

    pub mod option {
        use std::time::Duration;

        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
            match d {
                Some(d) => super::serialize(d, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
            Option::<String>::deserialize(d)?
                .map(|t| humantime::parse_duration(&t).map_err(serde::de::Error::custom))
                .transpose()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Input tables, read in order as one continuous record. Relative paths
    /// resolve against the config file's directory.
    pub paths: Vec<PathBuf>,
    #[serde(with = "duration_text", default = "default_cadence")]
    pub cadence: Duration,
    pub channels: Vec<ChannelSpec>,
}

fn default_cadence() -> Duration {
    Duration::from_secs(60)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    #[serde(with = "duration_text")]
    pub chunk: Duration,
    /// Defaults to `chunk` (non-overlapping windows).
    #[serde(
        with = "duration_text::option",
        skip_serializing_if = "Option::is_none"
    )]
    pub stride: Option<Duration>,
    pub max_missing: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            chunk: Duration::from_secs(35 * 3600),
            stride: None,
            max_missing: 0.1,
        }
    }
}

impl WindowConfig {
    pub fn stride(&self) -> Duration {
        self.stride.unwrap_or(self.chunk)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    /// Index level whose words are clustered (0 = base-cardinality words).
    pub level: usize,
    /// Channels whose words form the clustering input; empty means all.
    pub channels: Vec<String>,
    pub min_cluster_size: usize,
    pub min_samples: usize,
    pub metric: Metric,
    pub recluster_noise: bool,
    pub relax_factor: f64,
    /// Half-width added beyond the outermost breakpoints when embedding
    /// words as cell midpoints.
    pub edge_margin: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        let p = ClusterParams::default();
        Self {
            level: 0,
            channels: Vec::new(),
            min_cluster_size: p.min_cluster_size,
            min_samples: p.min_samples,
            metric: p.metric,
            recluster_noise: p.recluster_noise,
            relax_factor: p.relax_factor,
            edge_margin: crate::symbolic::DEFAULT_EDGE_MARGIN,
        }
    }
}

impl ClusterConfig {
    pub fn params(&self) -> ClusterParams {
        ClusterParams {
            min_cluster_size: self.min_cluster_size,
            min_samples: self.min_samples,
            metric: self.metric,
            recluster_noise: self.recluster_noise,
            relax_factor: self.relax_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotateConfig {
    #[serde(default = "default_representatives")]
    pub representatives: usize,
    /// Seed for representative sampling. Required so sessions replay.
    pub seed: u64,
    #[serde(default = "default_taxonomy")]
    pub taxonomy: Vec<String>,
}

fn default_representatives() -> usize {
    5
}

pub fn default_taxonomy() -> Vec<String> {
    ["CME", "SIR", "quiet", "ambiguous", "other"]
        .map(String::from)
        .to_vec()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    /// Directory of built UI assets served at `/`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub symbolic: IndexParams,
    #[serde(default)]
    pub cluster: ClusterConfig,
    pub annotate: AnnotateConfig,
    #[serde(default)]
    pub service: ServiceConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)
            .map_err(|e| Error::Config(format!("{}{}", e.message(), span_hint(&e))))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads, validates and makes dataset paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in &mut config.dataset.paths {
            if p.is_relative() {
                *p = base.join(&p);
            }
            if let Ok(abs) = p.canonicalize() {
                *p = abs;
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn cadence_secs(&self) -> Result<u32> {
        let c = self.dataset.cadence;
        if c.subsec_nanos() != 0 || c.as_secs() == 0 || c.as_secs() > u32::MAX as u64 {
            return Err(Error::config(
                "dataset.cadence must be a positive whole number of seconds",
            ));
        }
        Ok(c.as_secs() as u32)
    }

    /// Channels whose words are clustered, in dataset order.
    pub fn cluster_channels(&self) -> Vec<&ChannelSpec> {
        self.dataset
            .channels
            .iter()
            .filter(|c| self.cluster.channels.is_empty() || self.cluster.channels.contains(&c.name))
            .collect()
    }

    /// Name recorded for clustered windows: the clustering channels joined
    /// with `+`.
    pub fn cluster_label(&self) -> String {
        self.cluster_channels()
            .iter()
            .map(|c| c.name.as_str())
            .collect::<Vec<_>>()
            .join("+")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.channels.is_empty() {
            return Err(Error::config(
                "dataset.channels must list at least one channel",
            ));
        }
        let cadence = self.cadence_secs()? as u64;
        let mut names = std::collections::BTreeSet::new();
        for c in &self.dataset.channels {
            if c.name.is_empty() || c.name.contains('+') {
                return Err(Error::config(format!(
                    "dataset.channels: invalid channel name {:?}",
                    c.name
                )));
            }
            if !names.insert(c.name.as_str()) {
                return Err(Error::config(format!(
                    "dataset.channels: duplicate name {:?}",
                    c.name
                )));
            }
        }
        for name in &self.cluster.channels {
            if !names.contains(name.as_str()) {
                return Err(Error::config(format!(
                    "cluster.channels: unknown channel {name:?}"
                )));
            }
        }
        let chunk = self.window.chunk;
        if chunk.is_zero() || chunk.subsec_nanos() != 0 || !chunk.as_secs().is_multiple_of(cadence)
        {
            return Err(Error::config(
                "window.chunk must be a positive multiple of dataset.cadence",
            ));
        }
        let stride = self.window.stride();
        if stride.is_zero()
            || stride.subsec_nanos() != 0
            || !stride.as_secs().is_multiple_of(cadence)
        {
            return Err(Error::config(
                "window.stride must be a positive multiple of dataset.cadence",
            ));
        }
        if !(0.0..=1.0).contains(&self.window.max_missing) {
            return Err(Error::config("window.max_missing must lie in [0, 1]"));
        }
        self.preprocess.validate()?;
        self.symbolic.validate()?;
        self.cluster.params().validate()?;
        if self.cluster.edge_margin.is_nan() || self.cluster.edge_margin <= 0.0 {
            return Err(Error::config("cluster.edge_margin must be > 0"));
        }
        if self.annotate.representatives == 0 {
            return Err(Error::config("annotate.representatives must be >= 1"));
        }
        Ok(())
    }
}

fn span_hint(e: &toml::de::Error) -> String {
    e.span()
        .map(|s| format!(" (at byte {})", s.start))
        .unwrap_or_default()
}
