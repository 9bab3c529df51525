//! A project directory holds the effective configuration and the output of
//! every pipeline stage. Each stage reads the artifacts of the stage before
//! it and overwrites its own, so re-running a stage on unchanged inputs
//! reproduces identical files.
//!
//! | stage        | writes                                                |
//! |--------------|-------------------------------------------------------|
//! | `ingest`     | `series.json`                                         |
//! | `window`     | `windows.json`                                        |
//! | `preprocess` | `preprocessed.json`                                   |
//! | `index`      | `index/<channel>.bin`                                 |
//! | `cluster`    | `assignments.csv`, `words.json`, `condensed_tree.json`|
//! | `summarize`  | `summaries.json`                                      |
//! | `export`     | `catalog.csv` (from `labels.jsonl`)                   |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::annotate::{self, ClusterKey, ClusterSummary, LabelJournal, Member, PropagatedLabel};
use crate::cluster::{
    cluster_windows, ClusterAssignment, CondensedTree, Euclidean, Metric, MultiWordMindist, Pass,
};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::ingest::{self, ChannelSpec, TimeSeries, Window, WindowId};
use crate::preprocess::{self, Preprocessed};
use crate::symbolic::{paa, word_midpoints, IsaxIndex, IsaxWord};

/// Version stamped into every JSON store and API payload.
pub const SCHEMA_VERSION: u32 = 1;

pub const CONFIG_FILE: &str = "config.toml";
pub const SERIES_FILE: &str = "series.json";
pub const WINDOWS_FILE: &str = "windows.json";
pub const PREPROCESSED_FILE: &str = "preprocessed.json";
pub const INDEX_DIR: &str = "index";
pub const ASSIGNMENTS_FILE: &str = "assignments.csv";
pub const WORDS_FILE: &str = "words.json";
pub const CONDENSED_FILE: &str = "condensed_tree.json";
pub const SUMMARIES_FILE: &str = "summaries.json";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const CATALOG_FILE: &str = "catalog.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Window,
    Preprocess,
    Index,
    Cluster,
    Summarize,
    Export,
}

impl Stage {
    /// The stages `run` executes, in order.
    pub const PIPELINE: [Stage; 6] = [
        Stage::Ingest,
        Stage::Window,
        Stage::Preprocess,
        Stage::Index,
        Stage::Cluster,
        Stage::Summarize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Window => "window",
            Stage::Preprocess => "preprocess",
            Stage::Index => "index",
            Stage::Cluster => "cluster",
            Stage::Summarize => "summarize",
            Stage::Export => "export",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::PIPELINE
            .into_iter()
            .chain([Stage::Export])
            .find(|stage| stage.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stage {s:?}")))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a stage did, reported by the CLI as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub artifacts: Vec<String>,
    pub counts: BTreeMap<String, usize>,
}

impl StageReport {
    fn new(stage: Stage, artifacts: &[&str]) -> Self {
        Self {
            stage: stage.name().to_string(),
            artifacts: artifacts.iter().map(|a| a.to_string()).collect(),
            counts: BTreeMap::new(),
        }
    }

    fn count(mut self, key: &str, value: usize) -> Self {
        self.counts.insert(key.to_string(), value);
        self
    }
}

/// A channel as stored on disk; `None` marks a missing sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSeries {
    pub channel: ChannelSpec,
    pub start: DateTime<Utc>,
    pub cadence_secs: u32,
    pub values: Vec<Option<f64>>,
}

impl From<&TimeSeries> for StoredSeries {
    fn from(s: &TimeSeries) -> Self {
        Self {
            channel: s.channel.clone(),
            start: s.start,
            cadence_secs: s.cadence_secs,
            values: s
                .values
                .iter()
                .zip(&s.missing)
                .map(|(v, m)| (!m).then_some(*v))
                .collect(),
        }
    }
}

impl StoredSeries {
    pub fn to_series(&self) -> TimeSeries {
        TimeSeries {
            channel: self.channel.clone(),
            start: self.start,
            cadence_secs: self.cadence_secs,
            values: self.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
            missing: self.values.iter().map(Option::is_none).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStore {
    pub schema_version: u32,
    pub series: Vec<StoredSeries>,
}

/// Windows kept for clustering. Every window spans all channels; its
/// `channel` names the clustering channels and `missing_fraction` is the
/// worst over all channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStore {
    pub schema_version: u32,
    pub cadence_secs: u32,
    pub windows: Vec<Window>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessedWindow {
    pub id: WindowId,
    pub channels: BTreeMap<String, Preprocessed>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessedStore {
    pub schema_version: u32,
    pub windows: Vec<PreprocessedWindow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordRow {
    pub window_id: WindowId,
    pub words: BTreeMap<String, IsaxWord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordStore {
    pub schema_version: u32,
    pub level: usize,
    pub words: Vec<WordRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedStore {
    pub schema_version: u32,
    /// Condensed-tree node of each flat primary cluster, by cluster id.
    pub selected: Vec<usize>,
    pub tree: CondensedTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStore {
    pub schema_version: u32,
    pub summaries: Vec<ClusterSummary>,
}

/// Handle on a project directory.
#[derive(Debug, Clone)]
pub struct Project {
    root: PathBuf,
}

impl Project {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn index_path(&self, channel: &str) -> PathBuf {
        self.root.join(INDEX_DIR).join(format!("{channel}.bin"))
    }

    /// Writes the effective configuration (defaults filled in).
    pub fn write_config(&self, config: &PipelineConfig) -> Result<()> {
        fs::create_dir_all(&self.root)?;
        write_atomic(&self.path(CONFIG_FILE), config.to_toml()?.as_bytes())
    }

    pub fn read_config(&self) -> Result<PipelineConfig> {
        let path = self.path(CONFIG_FILE);
        if !path.exists() {
            return Err(Error::Config(format!(
                "no --config given and {} does not exist",
                path.display()
            )));
        }
        PipelineConfig::load(&path)
    }

    fn require(&self, name: &str, stage: Stage) -> Result<PathBuf> {
        let path = self.path(name);
        if path.exists() {
            Ok(path)
        } else {
            Err(Error::MissingArtifact {
                stage: stage.name(),
                path,
            })
        }
    }

    fn read_json<T: DeserializeOwned>(&self, name: &str, stage: Stage) -> Result<T> {
        let path = self.require(name, stage)?;
        let file = BufReader::new(File::open(&path)?);
        serde_json::from_reader(file).map_err(|e| Error::Store {
            path,
            message: e.to_string(),
        })
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec(value)?;
        bytes.push(b'\n');
        write_atomic(&self.path(name), &bytes)
    }

    pub fn series(&self) -> Result<SeriesStore> {
        self.read_json(SERIES_FILE, Stage::Ingest)
    }

    pub fn windows(&self) -> Result<WindowStore> {
        self.read_json(WINDOWS_FILE, Stage::Window)
    }

    pub fn preprocessed(&self) -> Result<PreprocessedStore> {
        self.read_json(PREPROCESSED_FILE, Stage::Preprocess)
    }

    pub fn words(&self) -> Result<WordStore> {
        self.read_json(WORDS_FILE, Stage::Cluster)
    }

    pub fn condensed(&self) -> Result<CondensedStore> {
        self.read_json(CONDENSED_FILE, Stage::Cluster)
    }

    pub fn summaries(&self) -> Result<SummaryStore> {
        self.read_json(SUMMARIES_FILE, Stage::Summarize)
    }

    pub fn index(&self, channel: &str) -> Result<IsaxIndex> {
        let path = self.index_path(channel);
        if !path.exists() {
            return Err(Error::MissingArtifact {
                stage: Stage::Index.name(),
                path,
            });
        }
        IsaxIndex::read_from(BufReader::new(File::open(&path)?)).map_err(|e| match e {
            Error::Store { message, .. } | Error::Invalid(message) => {
                Error::Store { path, message }
            }
            other => other,
        })
    }

    pub fn assignments(&self) -> Result<Vec<ClusterAssignment>> {
        let path = self.require(ASSIGNMENTS_FILE, Stage::Cluster)?;
        read_assignments(File::open(path)?)
    }

    pub fn journal(&self) -> Result<LabelJournal> {
        LabelJournal::open(self.path(LABELS_FILE))
    }

    /// Runs one stage against `config`, which is first written to the
    /// project as its effective configuration.
    pub fn run_stage(&self, stage: Stage, config: &PipelineConfig) -> Result<StageReport> {
        config.validate()?;
        self.write_config(config)?;
        match stage {
            Stage::Ingest => self.ingest(config),
            Stage::Window => self.window(config),
            Stage::Preprocess => self.preprocess(config),
            Stage::Index => self.build_index(config),
            Stage::Cluster => self.cluster(config),
            Stage::Summarize => self.summarize(config),
            Stage::Export => self.export(config),
        }
    }

    /// Every stage from ingest through summarize.
    pub fn run(&self, config: &PipelineConfig) -> Result<Vec<StageReport>> {
        Stage::PIPELINE
            .iter()
            .map(|s| self.run_stage(*s, config))
            .collect()
    }

    fn ingest(&self, config: &PipelineConfig) -> Result<StageReport> {
        let mut readers = Vec::new();
        for p in &config.dataset.paths {
            let f = File::open(p).map_err(|e| {
                Error::Config(format!("dataset.paths: cannot open {}: {e}", p.display()))
            })?;
            readers.push(BufReader::new(f));
        }
        let series =
            ingest::parse_sources(readers, &config.dataset.channels, config.cadence_secs()?)?;
        let samples = series.first().map_or(0, TimeSeries::len);
        let missing = series
            .iter()
            .map(|s| s.missing.iter().filter(|m| **m).count())
            .sum();
        self.write_json(
            SERIES_FILE,
            &SeriesStore {
                schema_version: SCHEMA_VERSION,
                series: series.iter().map(StoredSeries::from).collect(),
            },
        )?;
        Ok(StageReport::new(Stage::Ingest, &[SERIES_FILE])
            .count("channels", series.len())
            .count("samples", samples)
            .count("missing", missing))
    }

    fn window(&self, config: &PipelineConfig) -> Result<StageReport> {
        let store = self.series()?;
        let label = config.cluster_label();
        let mut kept: Option<BTreeMap<WindowId, Window>> = None;
        for stored in &store.series {
            let series = stored.to_series();
            let windows =
                ingest::segment(&series, config.window.chunk, config.window.stride(), 1.0)?;
            let acceptable: BTreeMap<WindowId, Window> = windows
                .into_iter()
                .filter(|w| {
                    w.missing_fraction <= config.window.max_missing && w.missing_fraction < 1.0
                })
                .map(|w| (w.id, w))
                .collect();
            kept = Some(match kept {
                None => acceptable,
                Some(prev) => prev
                    .into_iter()
                    .filter_map(|(id, mut w)| {
                        let other = acceptable.get(&id)?;
                        w.missing_fraction = w.missing_fraction.max(other.missing_fraction);
                        Some((id, w))
                    })
                    .collect(),
            });
        }
        let windows: Vec<Window> = kept
            .unwrap_or_default()
            .into_values()
            .map(|w| Window {
                channel: label.clone(),
                ..w
            })
            .collect();
        let count = windows.len();
        self.write_json(
            WINDOWS_FILE,
            &WindowStore {
                schema_version: SCHEMA_VERSION,
                cadence_secs: config.cadence_secs()?,
                windows,
            },
        )?;
        Ok(StageReport::new(Stage::Window, &[WINDOWS_FILE]).count("windows", count))
    }

    fn preprocess(&self, config: &PipelineConfig) -> Result<StageReport> {
        let series: Vec<TimeSeries> = self
            .series()?
            .series
            .iter()
            .map(StoredSeries::to_series)
            .collect();
        let windows = self.windows()?.windows;
        let mut out = Vec::with_capacity(windows.len());
        let mut flat = 0;
        for w in &windows {
            let mut channels = BTreeMap::new();
            for s in &series {
                let values = w.filled(s)?;
                let p = preprocess::preprocess(&values, &config.preprocess)?;
                flat += p.steps.flat as usize;
                channels.insert(s.channel.name.clone(), p);
            }
            out.push(PreprocessedWindow { id: w.id, channels });
        }
        self.write_json(
            PREPROCESSED_FILE,
            &PreprocessedStore {
                schema_version: SCHEMA_VERSION,
                windows: out,
            },
        )?;
        Ok(StageReport::new(Stage::Preprocess, &[PREPROCESSED_FILE])
            .count("windows", windows.len())
            .count("flat", flat))
    }

    fn build_index(&self, config: &PipelineConfig) -> Result<StageReport> {
        let store = self.preprocessed()?;
        let dir = self.path(INDEX_DIR);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        let mut report = StageReport {
            stage: Stage::Index.name().to_string(),
            artifacts: Vec::new(),
            counts: BTreeMap::new(),
        };
        for channel in config.cluster_channels() {
            let mut index = IsaxIndex::new(config.symbolic)?;
            for w in &store.windows {
                let values = &channel_values(w, &channel.name)?.values;
                index.insert(w.id, paa(values, config.symbolic.word_size)?)?;
            }
            let path = self.index_path(&channel.name);
            let mut buf = Vec::new();
            index.write_to(&mut buf)?;
            write_atomic(&path, &buf)?;
            report
                .artifacts
                .push(format!("{INDEX_DIR}/{}.bin", channel.name));
            report
                .counts
                .insert(format!("nodes.{}", channel.name), index.node_count());
        }
        Ok(report.count("entries", store.windows.len()))
    }

    fn cluster(&self, config: &PipelineConfig) -> Result<StageReport> {
        let channels = config.cluster_channels();
        let indexes = channels
            .iter()
            .map(|c| self.index(&c.name))
            .collect::<Result<Vec<_>>>()?;
        let windows = self.windows()?.windows;
        let mut per_channel: Vec<Vec<IsaxWord>> = Vec::with_capacity(channels.len());
        for (channel, index) in channels.iter().zip(&indexes) {
            let words: BTreeMap<WindowId, IsaxWord> = index
                .level_words(config.cluster.level)?
                .into_iter()
                .collect();
            let ordered = windows
                .iter()
                .map(|w| {
                    words.get(&w.id).cloned().ok_or_else(|| Error::Store {
                        path: self.index_path(&channel.name),
                        message: format!("window {} is not indexed", w.id),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            per_channel.push(ordered);
        }
        let ids: Vec<WindowId> = windows.iter().map(|w| w.id).collect();
        let params = config.cluster.params();
        let outcome = match config.cluster.metric {
            Metric::Euclidean => {
                let embedding: Vec<Vec<f64>> = (0..ids.len())
                    .map(|i| {
                        per_channel
                            .iter()
                            .flat_map(|words| word_midpoints(&words[i], config.cluster.edge_margin))
                            .collect()
                    })
                    .collect();
                cluster_windows(&ids, &Euclidean(&embedding), &params)?
            }
            Metric::Mindist => {
                let length = windows.first().map_or(1, |w| w.length);
                let d = MultiWordMindist {
                    channels: &per_channel,
                    original_length: length,
                };
                cluster_windows(&ids, &d, &params)?
            }
        };

        let mut csv_bytes = Vec::new();
        write_assignments(&outcome.assignments, &mut csv_bytes)?;
        write_atomic(&self.path(ASSIGNMENTS_FILE), &csv_bytes)?;
        let rows = ids
            .iter()
            .enumerate()
            .map(|(i, id)| WordRow {
                window_id: *id,
                words: channels
                    .iter()
                    .zip(&per_channel)
                    .map(|(c, words)| (c.name.clone(), words[i].clone()))
                    .collect(),
            })
            .collect();
        self.write_json(
            WORDS_FILE,
            &WordStore {
                schema_version: SCHEMA_VERSION,
                level: config.cluster.level,
                words: rows,
            },
        )?;
        self.write_json(
            CONDENSED_FILE,
            &CondensedStore {
                schema_version: SCHEMA_VERSION,
                selected: outcome.primary.extraction.selected.clone(),
                tree: outcome.primary.tree.clone(),
            },
        )?;
        let noise = outcome
            .assignments
            .iter()
            .filter(|a| a.cluster.is_none())
            .count();
        Ok(StageReport::new(
            Stage::Cluster,
            &[ASSIGNMENTS_FILE, WORDS_FILE, CONDENSED_FILE],
        )
        .count("windows", ids.len())
        .count("primary_clusters", outcome.primary_clusters)
        .count("relaxed_clusters", outcome.relaxed_clusters)
        .count("noise", noise))
    }

    fn summarize(&self, _config: &PipelineConfig) -> Result<StageReport> {
        let assignments = self.assignments()?;
        let pre = self.preprocessed()?;
        let words = self.words()?;
        let summaries = build_summaries(&assignments, &pre, &words)?;
        let count = summaries.len();
        self.write_json(
            SUMMARIES_FILE,
            &SummaryStore {
                schema_version: SCHEMA_VERSION,
                summaries,
            },
        )?;
        Ok(StageReport::new(Stage::Summarize, &[SUMMARIES_FILE]).count("summaries", count))
    }

    fn export(&self, _config: &PipelineConfig) -> Result<StageReport> {
        let store = self.windows()?;
        let assignments = self.assignments()?;
        let journal = self.journal()?;
        let propagated = annotate::propagate(&assignments, &journal.effective());
        let mut buf = Vec::new();
        annotate::export_catalog(&propagated, &store.windows, store.cadence_secs, &mut buf)?;
        write_atomic(&self.path(CATALOG_FILE), &buf)?;
        Ok(StageReport::new(Stage::Export, &[CATALOG_FILE]).count("rows", propagated.len()))
    }
}

fn channel_values<'a>(w: &'a PreprocessedWindow, channel: &str) -> Result<&'a Preprocessed> {
    w.channels.get(channel).ok_or_else(|| {
        Error::invalid(format!(
            "window {} has no preprocessed {channel:?} channel",
            w.id
        ))
    })
}

/// One summary per cluster, plus one for noise when there is any.
pub fn build_summaries(
    assignments: &[ClusterAssignment],
    pre: &PreprocessedStore,
    words: &WordStore,
) -> Result<Vec<ClusterSummary>> {
    let by_id: BTreeMap<WindowId, &PreprocessedWindow> =
        pre.windows.iter().map(|w| (w.id, w)).collect();
    let words_by_id: BTreeMap<WindowId, &WordRow> =
        words.words.iter().map(|r| (r.window_id, r)).collect();
    let mut groups: BTreeMap<ClusterKey, Vec<WindowId>> = BTreeMap::new();
    for a in assignments {
        groups
            .entry(ClusterKey::of(a.cluster))
            .or_default()
            .push(a.window_id);
    }
    let channel_names: Vec<String> = pre
        .windows
        .first()
        .map(|w| w.channels.keys().cloned().collect())
        .unwrap_or_default();
    let mut out = Vec::with_capacity(groups.len());
    for (key, members) in groups {
        let mut curves = BTreeMap::new();
        for name in &channel_names {
            let vectors = members
                .iter()
                .map(|id| {
                    let w = by_id.get(id).ok_or_else(|| {
                        Error::invalid(format!("window {id} missing from the preprocessed store"))
                    })?;
                    Ok(channel_values(w, name)?.values.as_slice())
                })
                .collect::<Result<Vec<&[f64]>>>()?;
            curves.insert(name.clone(), annotate::summarize(&vectors)?);
        }
        let mut word_histogram: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for id in &members {
            if let Some(row) = words_by_id.get(id) {
                for (channel, word) in &row.words {
                    *word_histogram
                        .entry(channel.clone())
                        .or_default()
                        .entry(word.to_string())
                        .or_default() += 1;
                }
            }
        }
        out.push(ClusterSummary {
            cluster: key,
            size: members.len(),
            curves,
            word_histogram,
        });
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct AssignmentRow {
    window_id: u64,
    cluster: Option<u32>,
    pass: Pass,
    membership_strength: f64,
}

pub fn write_assignments<W: Write>(assignments: &[ClusterAssignment], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for a in assignments {
        w.serialize(AssignmentRow {
            window_id: a.window_id.0,
            cluster: a.cluster,
            pass: a.pass,
            membership_strength: a.membership_strength,
        })?;
    }
    if assignments.is_empty() {
        w.write_record(["window_id", "cluster", "pass", "membership_strength"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_assignments<R: std::io::Read>(input: R) -> Result<Vec<ClusterAssignment>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize()
        .map(|row| {
            let row: AssignmentRow = row?;
            Ok(ClusterAssignment {
                window_id: WindowId(row.window_id),
                cluster: row.cluster,
                pass: row.pass,
                membership_strength: row.membership_strength,
            })
        })
        .collect()
}

/// Writes through a sibling temporary file so readers never see a partial
/// artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = BufWriter::new(File::create(&tmp)?);
        f.write_all(bytes)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One channel of a representative window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelView {
    pub name: String,
    pub unit: String,
    /// Samples as ingested; `null` where missing.
    pub raw: Vec<Option<f64>>,
    pub preprocessed: Vec<f64>,
}

/// A window with everything an expert needs to cross-check it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeView {
    pub window_id: WindowId,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub cluster: ClusterKey,
    pub pass: Pass,
    pub membership_strength: f64,
    /// iSAX word per clustering channel.
    pub words: BTreeMap<String, String>,
    pub channels: Vec<ChannelView>,
}

/// Entry of the cluster listing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    pub id: ClusterKey,
    pub size: usize,
    /// Pass that produced the cluster; absent for noise.
    pub pass: Option<Pass>,
    pub label: Option<String>,
    /// Journal revision for the cluster (0 when never labeled).
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub clusters_total: usize,
    pub clusters_labeled: usize,
    pub windows_total: usize,
    pub windows_labeled: usize,
}

/// Read-only view of a finished project, as served over HTTP.
#[derive(Debug, Clone)]
pub struct ProjectData {
    pub config: PipelineConfig,
    pub series: Vec<StoredSeries>,
    pub windows: WindowStore,
    pub preprocessed: BTreeMap<WindowId, PreprocessedWindow>,
    pub assignments: Vec<ClusterAssignment>,
    pub words: BTreeMap<WindowId, WordRow>,
    pub summaries: BTreeMap<ClusterKey, ClusterSummary>,
}

impl ProjectData {
    pub fn load(project: &Project) -> Result<Self> {
        let config = project.read_config()?;
        let series = project.series()?.series;
        let windows = project.windows()?;
        let preprocessed = project
            .preprocessed()?
            .windows
            .into_iter()
            .map(|w| (w.id, w))
            .collect();
        let assignments = project.assignments()?;
        let words = project
            .words()?
            .words
            .into_iter()
            .map(|r| (r.window_id, r))
            .collect();
        let summaries = project
            .summaries()?
            .summaries
            .into_iter()
            .map(|s| (s.cluster, s))
            .collect();
        Ok(Self {
            config,
            series,
            windows,
            preprocessed,
            assignments,
            words,
            summaries,
        })
    }

    /// Window ids of each flat cluster (noise excluded).
    pub fn membership(&self) -> BTreeMap<u32, BTreeSet<WindowId>> {
        let mut out: BTreeMap<u32, BTreeSet<WindowId>> = BTreeMap::new();
        for a in &self.assignments {
            if let Some(c) = a.cluster {
                out.entry(c).or_default().insert(a.window_id);
            }
        }
        out
    }

    pub fn has_cluster(&self, key: ClusterKey) -> bool {
        self.assignments
            .iter()
            .any(|a| ClusterKey::of(a.cluster) == key)
    }

    pub fn clusters(&self, journal: &LabelJournal) -> Vec<ClusterEntry> {
        let effective = journal.effective();
        let mut sizes: BTreeMap<ClusterKey, (usize, Pass)> = BTreeMap::new();
        for a in &self.assignments {
            sizes
                .entry(ClusterKey::of(a.cluster))
                .or_insert((0, a.pass))
                .0 += 1;
        }
        sizes
            .into_iter()
            .map(|(id, (size, pass))| match id {
                ClusterKey::Cluster(c) => ClusterEntry {
                    id,
                    size,
                    pass: Some(pass),
                    label: effective.get(&c).map(|r| r.label.clone()),
                    revision: journal.revision(c),
                },
                ClusterKey::Noise => ClusterEntry {
                    id,
                    size,
                    pass: None,
                    label: None,
                    revision: 0,
                },
            })
            .collect()
    }

    pub fn summary(&self, key: ClusterKey) -> Option<&ClusterSummary> {
        self.summaries.get(&key)
    }

    pub fn propagated(&self, journal: &LabelJournal) -> Vec<PropagatedLabel> {
        annotate::propagate(&self.assignments, &journal.effective())
    }

    pub fn progress(&self, journal: &LabelJournal) -> Progress {
        let membership = self.membership();
        let effective = journal.effective();
        Progress {
            clusters_total: membership.len(),
            clusters_labeled: effective
                .keys()
                .filter(|c| membership.contains_key(c))
                .count(),
            windows_total: self.assignments.len(),
            windows_labeled: self.propagated(journal).len(),
        }
    }

    /// Representative windows of `key`: the medoid (in the preprocessed
    /// space of the clustering channels) first, then a strength-stratified
    /// sample drawn with `seed`.
    pub fn representatives(
        &self,
        key: ClusterKey,
        n: usize,
        seed: u64,
    ) -> Result<Vec<RepresentativeView>> {
        let channels: Vec<String> = self
            .config
            .cluster_channels()
            .iter()
            .map(|c| c.name.clone())
            .collect();
        let members: Vec<&ClusterAssignment> = self
            .assignments
            .iter()
            .filter(|a| ClusterKey::of(a.cluster) == key)
            .collect();
        let vectors = members
            .iter()
            .map(|a| {
                let w = self.preprocessed.get(&a.window_id).ok_or_else(|| {
                    Error::invalid(format!(
                        "window {} missing from the preprocessed store",
                        a.window_id
                    ))
                })?;
                let mut v = Vec::new();
                for c in &channels {
                    v.extend_from_slice(&channel_values(w, c)?.values);
                }
                Ok(v)
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let view: Vec<Member<'_>> = members
            .iter()
            .zip(&vectors)
            .map(|(a, v)| Member {
                id: a.window_id,
                strength: a.membership_strength,
                vector: v,
            })
            .collect();
        let chosen = annotate::representatives(&view, n, seed)?;
        let by_id: BTreeMap<WindowId, &ClusterAssignment> =
            members.iter().map(|a| (a.window_id, *a)).collect();
        chosen
            .into_iter()
            .map(|id| self.window_view(by_id[&id]))
            .collect()
    }

    fn window_view(&self, a: &ClusterAssignment) -> Result<RepresentativeView> {
        let w = self
            .windows
            .windows
            .iter()
            .find(|w| w.id == a.window_id)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "window {} missing from the window store",
                    a.window_id
                ))
            })?;
        let pre = self.preprocessed.get(&a.window_id).ok_or_else(|| {
            Error::invalid(format!(
                "window {} missing from the preprocessed store",
                a.window_id
            ))
        })?;
        let channels = self
            .series
            .iter()
            .map(|s| {
                Ok(ChannelView {
                    name: s.channel.name.clone(),
                    unit: s.channel.unit.clone(),
                    raw: s.values[w.range()].to_vec(),
                    preprocessed: channel_values(pre, &s.channel.name)?.values.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let words = self
            .words
            .get(&a.window_id)
            .map(|r| {
                r.words
                    .iter()
                    .map(|(c, w)| (c.clone(), w.to_string()))
                    .collect()
            })
            .unwrap_or_default();
        Ok(RepresentativeView {
            window_id: a.window_id,
            start: w.start,
            end: w.end(self.windows.cadence_secs),
            cluster: ClusterKey::of(a.cluster),
            pass: a.pass,
            membership_strength: a.membership_strength,
            words,
            channels,
        })
    }
}
