//! Density clustering of symbolic words, with an optional second pass that
//! re-clusters the first pass's noise under relaxed parameters.

mod distance;
mod hdbscan;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use distance::{euclidean, Distances, Euclidean, MultiWordMindist, Subset, WordMindist};
pub use hdbscan::{
    condense, core_distances, extract, lambda_of, mst, mutual_reachability, CondensedRecord,
    CondensedTree, Edge, Extraction, DISTANCE_FLOOR,
};

use crate::error::{Error, Result};
use crate::ingest::WindowId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Euclidean distance between word cell midpoints.
    Euclidean,
    /// Symbolic lower-bound distance between words.
    Mindist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterParams {
    pub min_cluster_size: usize,
    pub min_samples: usize,
    pub metric: Metric,
    pub recluster_noise: bool,
    pub relax_factor: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            min_cluster_size: 5,
            min_samples: 5,
            metric: Metric::Euclidean,
            recluster_noise: true,
            relax_factor: 0.5,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 {
            return Err(Error::config("cluster.min_cluster_size must be >= 2"));
        }
        if self.min_samples < 1 {
            return Err(Error::config("cluster.min_samples must be >= 1"));
        }
        if !(self.relax_factor > 0.0 && self.relax_factor <= 1.0) {
            return Err(Error::config("cluster.relax_factor must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Parameters of the noise re-clustering pass.
    pub fn relaxed(&self) -> Self {
        let scale = |v: usize| (self.relax_factor * v as f64).floor() as usize;
        Self {
            min_cluster_size: scale(self.min_cluster_size).max(2),
            min_samples: scale(self.min_samples).max(1),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pass {
    Primary,
    Relaxed,
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pass::Primary => "primary",
            Pass::Relaxed => "relaxed",
        })
    }
}

impl FromStr for Pass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "primary" => Ok(Pass::Primary),
            "relaxed" => Ok(Pass::Relaxed),
            _ => Err(Error::invalid(format!("unknown pass {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub window_id: WindowId,
    /// `None` is noise.
    pub cluster: Option<u32>,
    pub pass: Pass,
    pub membership_strength: f64,
}

/// Result of one HDBSCAN run over `len()` items.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub extraction: Extraction,
    pub tree: CondensedTree,
}

impl Clustering {
    pub fn n_clusters(&self) -> usize {
        self.extraction.selected.len()
    }

    pub fn noise(&self) -> Vec<usize> {
        (0..self.extraction.labels.len())
            .filter(|&i| self.extraction.labels[i].is_none())
            .collect()
    }
}

/// Full HDBSCAN run. Inputs too small to hold a single cluster, or fewer
/// items than `min_samples`, come back as all noise.
pub fn hdbscan<D: Distances + ?Sized>(points: &D, params: &ClusterParams) -> Result<Clustering> {
    params.validate()?;
    let n = points.len();
    if n < params.min_cluster_size || n < params.min_samples {
        let tree = condense(&[], 0, params.min_cluster_size);
        return Ok(Clustering {
            extraction: Extraction {
                labels: vec![None; n],
                strengths: vec![0.0; n],
                selected: Vec::new(),
            },
            tree: CondensedTree {
                n_points: n,
                ..tree
            },
        });
    }
    let core = core_distances(points, params.min_samples)?;
    let edges = mst(points, &core);
    let tree = condense(&edges, n, params.min_cluster_size);
    let extraction = extract(&tree);
    Ok(Clustering { extraction, tree })
}

/// Re-runs HDBSCAN on `noise` (indices into `points`) with
/// [`ClusterParams::relaxed`] parameters. Returned ids start at `first_id`;
/// entries are `(point index, cluster, strength)` for every noise point.
pub fn recluster_noise<D: Distances + ?Sized>(
    points: &D,
    noise: &[usize],
    params: &ClusterParams,
    first_id: u32,
) -> Result<Vec<(usize, Option<u32>, f64)>> {
    let relaxed = params.relaxed();
    let subset = Subset {
        inner: points,
        indices: noise,
    };
    let run = hdbscan(&subset, &relaxed)?;
    Ok(noise
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let label = run.extraction.labels[k].map(|c| c + first_id);
            (p, label, run.extraction.strengths[k])
        })
        .collect())
}

/// Output of [`cluster_windows`].
#[derive(Debug, Clone)]
pub struct ClusterOutcome {
    pub assignments: Vec<ClusterAssignment>,
    pub primary: Clustering,
    pub primary_clusters: usize,
    pub relaxed_clusters: usize,
}

/// Primary pass plus, when enabled, the relaxed pass over its noise.
pub fn cluster_windows<D: Distances + ?Sized>(
    ids: &[WindowId],
    points: &D,
    params: &ClusterParams,
) -> Result<ClusterOutcome> {
    if ids.len() != points.len() {
        return Err(Error::invalid("window ids and points differ in length"));
    }
    let primary = hdbscan(points, params)?;
    let primary_clusters = primary.n_clusters();
    let mut assignments: Vec<ClusterAssignment> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| ClusterAssignment {
            window_id: *id,
            cluster: primary.extraction.labels[i],
            pass: Pass::Primary,
            membership_strength: primary.extraction.strengths[i],
        })
        .collect();
    let mut relaxed_clusters = 0;
    if params.recluster_noise {
        let noise = primary.noise();
        let relaxed = recluster_noise(points, &noise, params, primary_clusters as u32)?;
        let mut seen = std::collections::BTreeSet::new();
        for (p, label, strength) in relaxed {
            if let Some(c) = label {
                seen.insert(c);
                let a = &mut assignments[p];
                a.cluster = Some(c);
                a.pass = Pass::Relaxed;
                a.membership_strength = strength;
            }
        }
        relaxed_clusters = seen.len();
    }
    Ok(ClusterOutcome {
        assignments,
        primary,
        primary_clusters,
        relaxed_clusters,
    })
}
