//! Cluster summaries, representative selection, the expert label journal and
//! propagation of cluster labels onto member windows.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cluster::{euclidean, ClusterAssignment};
use crate::error::{Error, Result};
use crate::ingest::{Window, WindowId};

pub const LOW_PERCENTILE: f64 = 5.0;
pub const HIGH_PERCENTILE: f64 = 95.0;

/// Either a flat cluster id or the noise pseudo-cluster. Serializes as the
/// bare id, or the string `"noise"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClusterKey {
    Cluster(u32),
    Noise,
}

impl ClusterKey {
    pub fn of(cluster: Option<u32>) -> Self {
        cluster.map_or(ClusterKey::Noise, ClusterKey::Cluster)
    }
}

impl fmt::Display for ClusterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterKey::Cluster(id) => id.fmt(f),
            ClusterKey::Noise => f.write_str("noise"),
        }
    }
}

impl FromStr for ClusterKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "noise" {
            return Ok(ClusterKey::Noise);
        }
        s.parse().map(ClusterKey::Cluster).map_err(|_| {
            Error::invalid(format!(
                "cluster id {s:?} is neither a number nor \"noise\""
            ))
        })
    }
}

impl Serialize for ClusterKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ClusterKey::Cluster(id) => s.serialize_u32(*id),
            ClusterKey::Noise => s.serialize_str("noise"),
        }
    }
}

impl<'de> Deserialize<'de> for ClusterKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Id(u32),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Id(id) => Ok(ClusterKey::Cluster(id)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Pointwise mean and 5th/95th percentile curves of a set of equal-length
/// member vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Percentile `q` (0–100) of ascending `sorted`, interpolating linearly
/// between the order statistics at ranks `floor(h)` and `ceil(h)` where
/// `h = (n - 1) q / 100`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q / 100.0;
    let lower = h.floor() as usize;
    let upper = (lower + 1).min(sorted.len() - 1);
    sorted[lower] + (h - lower as f64) * (sorted[upper] - sorted[lower])
}

pub fn summarize<V: AsRef<[f64]>>(members: &[V]) -> Result<Envelope> {
    let Some(first) = members.first() else {
        return Err(Error::invalid("cannot summarize an empty cluster"));
    };
    let len = first.as_ref().len();
    if members.iter().any(|m| m.as_ref().len() != len) {
        return Err(Error::invalid("cluster members differ in length"));
    }
    let n = members.len() as f64;
    let mut env = Envelope {
        mean: Vec::with_capacity(len),
        lo: Vec::with_capacity(len),
        hi: Vec::with_capacity(len),
    };
    let mut column = Vec::with_capacity(members.len());
    for t in 0..len {
        column.clear();
        column.extend(members.iter().map(|m| m.as_ref()[t]));
        env.mean.push(column.iter().sum::<f64>() / n);
        column.sort_by(f64::total_cmp);
        env.lo.push(percentile(&column, LOW_PERCENTILE));
        env.hi.push(percentile(&column, HIGH_PERCENTILE));
    }
    Ok(env)
}

/// Summary of one cluster across every channel of a project.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: ClusterKey,
    pub size: usize,
    /// Envelopes of the preprocessed member windows, per channel.
    pub curves: BTreeMap<String, Envelope>,
    /// Member count per iSAX word (rendered as text), per clustering
    /// channel.
    pub word_histogram: BTreeMap<String, BTreeMap<String, usize>>,
}

/// A cluster member as seen by representative selection.
#[derive(Debug, Clone, Copy)]
pub struct Member<'a> {
    pub id: WindowId,
    pub strength: f64,
    pub vector: &'a [f64],
}

/// Index of the member with the least summed Euclidean distance to all
/// others; ties go to the lowest window id.
pub fn medoid(members: &[Member<'_>]) -> Option<usize> {
    let mut best: Option<(f64, WindowId, usize)> = None;
    for (i, a) in members.iter().enumerate() {
        let total: f64 = members.iter().map(|b| euclidean(a.vector, b.vector)).sum();
        let better = match best {
            None => true,
            Some((t, id, _)) => total < t || (total == t && a.id < id),
        };
        if better {
            best = Some((total, a.id, i));
        }
    }
    best.map(|(_, _, i)| i)
}

/// The medoid, followed by `n - 1` members drawn without replacement, one
/// from each of `n - 1` equal-count strata of the members ranked by
/// membership strength. Asking for at least as many as exist returns every
/// member (medoid first, then by id).
pub fn representatives(members: &[Member<'_>], n: usize, seed: u64) -> Result<Vec<WindowId>> {
    if n == 0 {
        return Err(Error::invalid("representative count must be >= 1"));
    }
    let Some(m) = medoid(members) else {
        return Ok(Vec::new());
    };
    let medoid_id = members[m].id;
    let mut rest: Vec<&Member<'_>> = members.iter().filter(|x| x.id != medoid_id).collect();
    let mut out = vec![medoid_id];
    if n > rest.len() {
        rest.sort_by_key(|x| x.id);
        out.extend(rest.iter().map(|x| x.id));
        return Ok(out);
    }
    rest.sort_by(|a, b| a.strength.total_cmp(&b.strength).then(a.id.cmp(&b.id)));
    let strata = n - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..strata {
        let lo = k * rest.len() / strata;
        let hi = (k + 1) * rest.len() / strata;
        out.push(rest[rng.gen_range(lo..hi)].id);
    }
    Ok(out)
}

/// Label fields supplied by an annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelDraft {
    pub label: String,
    pub annotator: String,
    pub reviewed: Vec<WindowId>,
    #[serde(default)]
    pub note: String,
}

/// One journaled label. `revision` counts the records for this cluster,
/// starting at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub cluster: u32,
    pub label: String,
    pub annotator: String,
    pub reviewed: Vec<WindowId>,
    pub timestamp: DateTime<Utc>,
    pub note: String,
    pub revision: u64,
}

/// Append-only label history backed by a JSON-lines file.
#[derive(Debug)]
pub struct LabelJournal {
    path: Option<PathBuf>,
    records: Vec<LabelRecord>,
}

impl LabelJournal {
    /// A journal that lives only in memory.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            records: Vec::new(),
        }
    }

    /// Opens (replaying) the journal at `path`; a missing file is empty.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let records = match File::open(&path) {
            Ok(f) => Self::replay(BufReader::new(f), &path)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        Ok(Self {
            path: Some(path),
            records,
        })
    }

    fn replay<R: Read>(reader: BufReader<R>, path: &Path) -> Result<Vec<LabelRecord>> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(&line).map_err(|e| Error::Store {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })?;
            records.push(record);
        }
        Ok(records)
    }

    pub fn records(&self) -> &[LabelRecord] {
        &self.records
    }

    /// Number of records journaled for `cluster`.
    pub fn revision(&self, cluster: u32) -> u64 {
        self.records.iter().filter(|r| r.cluster == cluster).count() as u64
    }

    /// Latest record per cluster.
    pub fn effective(&self) -> BTreeMap<u32, LabelRecord> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            out.insert(r.cluster, r.clone());
        }
        out
    }

    /// Validates `draft` against the cluster membership and taxonomy, then
    /// appends it. With `expected_revision`, the append only happens when the
    /// cluster's current revision matches.
    pub fn assign(
        &mut self,
        cluster: u32,
        draft: LabelDraft,
        members: &BTreeMap<u32, BTreeSet<WindowId>>,
        taxonomy: &[String],
        expected_revision: Option<u64>,
        timestamp: DateTime<Utc>,
    ) -> Result<LabelRecord> {
        let Some(cluster_members) = members.get(&cluster) else {
            return Err(Error::UnknownCluster(cluster));
        };
        if draft.label.trim().is_empty() {
            return Err(Error::invalid("label must not be empty"));
        }
        if !taxonomy.is_empty() && !taxonomy.contains(&draft.label) {
            return Err(Error::invalid(format!(
                "label {:?} is not in the taxonomy {taxonomy:?}",
                draft.label
            )));
        }
        if draft.annotator.trim().is_empty() {
            return Err(Error::invalid("annotator must not be empty"));
        }
        if draft.reviewed.is_empty() {
            return Err(Error::invalid("reviewed must list at least one window"));
        }
        if let Some(foreign) = draft.reviewed.iter().find(|w| !cluster_members.contains(w)) {
            return Err(Error::invalid(format!(
                "reviewed window {foreign} is not a member of cluster {cluster}"
            )));
        }
        let found = self.revision(cluster);
        if let Some(expected) = expected_revision {
            if expected != found {
                return Err(Error::Conflict { expected, found });
            }
        }
        let record = LabelRecord {
            cluster,
            label: draft.label,
            annotator: draft.annotator,
            reviewed: draft.reviewed,
            timestamp,
            note: draft.note,
            revision: found + 1,
        };
        self.append(record.clone())?;
        Ok(record)
    }

    fn append(&mut self, record: LabelRecord) -> Result<()> {
        if let Some(path) = &self.path {
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            f.write_all(line.as_bytes())?;
            f.sync_data()?;
        }
        self.records.push(record);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagatedLabel {
    pub window_id: WindowId,
    pub label: String,
    pub source: u32,
    pub confidence: f64,
}

/// Gives every member of a labeled cluster that cluster's effective label,
/// with its membership strength as confidence. Noise and unlabeled clusters
/// contribute nothing.
pub fn propagate(
    assignments: &[ClusterAssignment],
    effective: &BTreeMap<u32, LabelRecord>,
) -> Vec<PropagatedLabel> {
    assignments
        .iter()
        .filter_map(|a| {
            let cluster = a.cluster?;
            let record = effective.get(&cluster)?;
            Some(PropagatedLabel {
                window_id: a.window_id,
                label: record.label.clone(),
                source: cluster,
                confidence: a.membership_strength,
            })
        })
        .collect()
}

/// One event-catalog row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogRow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub channel: String,
    pub label: String,
    pub cluster: u32,
    pub confidence: f64,
}

/// Catalog rows for `propagated`, sorted by start time (then cluster and
/// channel). Labels for windows not in `windows` are skipped.
pub fn catalog_rows(
    propagated: &[PropagatedLabel],
    windows: &[Window],
    cadence_secs: u32,
) -> Vec<CatalogRow> {
    let by_id: BTreeMap<WindowId, &Window> = windows.iter().map(|w| (w.id, w)).collect();
    let mut rows: Vec<CatalogRow> = propagated
        .iter()
        .filter_map(|p| {
            let w = by_id.get(&p.window_id)?;
            Some(CatalogRow {
                start: w.start,
                end: w.end(cadence_secs),
                channel: w.channel.clone(),
                label: p.label.clone(),
                cluster: p.source,
                confidence: p.confidence,
            })
        })
        .collect();
    rows.sort_by(|a, b| {
        a.start
            .cmp(&b.start)
            .then(a.cluster.cmp(&b.cluster))
            .then(a.channel.cmp(&b.channel))
    });
    rows
}

/// Writes the catalog as CSV with a header row, even when empty.
pub fn export_catalog<W: Write>(
    propagated: &[PropagatedLabel],
    windows: &[Window],
    cadence_secs: u32,
    out: W,
) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    writer.write_record(["start", "end", "channel", "label", "cluster", "confidence"])?;
    for row in catalog_rows(propagated, windows, cadence_secs) {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn parse_catalog<R: Read>(input: R) -> Result<Vec<CatalogRow>> {
    let mut reader = csv::Reader::from_reader(input);
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}
