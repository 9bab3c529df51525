//! Reading OMNI-style ASCII tables into uniform-grid channels, and cutting
//! those channels into fixed-length windows.
//!
//! Rows carry either a `year day-of-year hour minute` prefix (the OMNI
//! high-resolution layout) or a single ISO-8601 timestamp field. Fields are
//! comma separated when the line contains a comma, whitespace separated
//! otherwise. Channel columns are zero-based indices into the full row,
//! timestamp fields included.

use std::collections::HashSet;
use std::io::BufRead;
use std::time::Duration;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CADENCE_SECS: u32 = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub name: String,
    #[serde(default)]
    pub unit: String,
    pub column: usize,
    #[serde(default)]
    pub fill_values: Vec<f64>,
}

impl ChannelSpec {
    pub fn new(name: impl Into<String>, column: usize) -> Self {
        Self {
            name: name.into(),
            unit: String::new(),
            column,
            fill_values: Vec::new(),
        }
    }

    pub fn with_fill(mut self, fill: &[f64]) -> Self {
        self.fill_values = fill.to_vec();
        self
    }

    fn is_fill(&self, value: f64) -> bool {
        value.is_nan() || self.fill_values.contains(&value)
    }
}

/// A uniformly sampled channel. Gaps are samples flagged in `missing`, never
/// absent entries, so sample `i` always sits at `start + i * cadence`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub channel: ChannelSpec,
    pub start: DateTime<Utc>,
    pub cadence_secs: u32,
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + TimeDelta::seconds(index as i64 * self.cadence_secs as i64)
    }

    pub fn last_timestamp(&self) -> Option<DateTime<Utc>> {
        (!self.is_empty()).then(|| self.timestamp(self.len() - 1))
    }

    /// Builds a gap-free series from dense values.
    pub fn from_values(
        channel: ChannelSpec,
        start: DateTime<Utc>,
        cadence_secs: u32,
        values: Vec<f64>,
    ) -> Self {
        let missing = values.iter().map(|v| channel.is_fill(*v)).collect();
        Self {
            channel,
            start,
            cadence_secs,
            values,
            missing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WindowId(pub u64);

impl std::fmt::Display for WindowId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// A chunk of a channel. Other channels of the same dataset share the grid,
/// so `offset..offset + length` addresses them too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub id: WindowId,
    pub channel: String,
    pub start: DateTime<Utc>,
    pub offset: usize,
    pub length: usize,
    pub missing_fraction: f64,
}

impl Window {
    pub fn end(&self, cadence_secs: u32) -> DateTime<Utc> {
        self.start + TimeDelta::seconds(self.length as i64 * cadence_secs as i64)
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.length
    }

    /// Dense values for this window taken from `series`, gaps interpolated.
    pub fn filled(&self, series: &TimeSeries) -> Result<Vec<f64>> {
        let range = self.range();
        if range.end > series.len() {
            return Err(Error::invalid(format!(
                "window {} exceeds series length {}",
                self.id,
                series.len()
            )));
        }
        fill_gaps(&series.values[range.clone()], &series.missing[range]).map_err(|e| match e {
            Error::AllMissing(_) => Error::AllMissing(self.id.0),
            e => e,
        })
    }
}

struct Row {
    line: usize,
    time: DateTime<Utc>,
    fields: Vec<String>,
}

fn split_fields(line: &str) -> Vec<String> {
    if line.contains(',') {
        line.split(',').map(|s| s.trim().to_owned()).collect()
    } else {
        line.split_whitespace().map(str::to_owned).collect()
    }
}

fn parse_iso(field: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(field) {
        return Some(t.with_timezone(&Utc));
    }
    let field = field.trim_end_matches('Z');
    [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
    ]
    .iter()
    .find_map(|fmt| NaiveDateTime::parse_from_str(field, fmt).ok())
    .map(|t| t.and_utc())
}

fn parse_doy(fields: &[String]) -> Option<std::result::Result<DateTime<Utc>, String>> {
    if fields.len() < 4 {
        return None;
    }
    let nums: Vec<i64> = fields[..4]
        .iter()
        .map(|f| f.parse::<i64>().ok())
        .collect::<Option<_>>()?;
    let (year, doy, hour, minute) = (nums[0], nums[1], nums[2], nums[3]);
    let bad = || format!("invalid timestamp {year} {doy} {hour} {minute}");
    let Some(date) = NaiveDate::from_yo_opt(year as i32, doy as u32) else {
        return Some(Err(bad()));
    };
    Some(
        date.and_hms_opt(hour as u32, minute as u32, 0)
            .map(|t| t.and_utc())
            .ok_or_else(bad),
    )
}

fn read_rows<R: BufRead>(source: R, rows: &mut Vec<Row>) -> Result<()> {
    let mut seen_data = false;
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields = split_fields(trimmed);
        let time = if let Some(t) = parse_iso(&fields[0]) {
            t
        } else if let Some(parsed) = parse_doy(&fields) {
            parsed.map_err(|message| Error::Parse {
                line: line_no,
                message,
            })?
        } else if !seen_data {
            // CSV header
            seen_data = true;
            continue;
        } else {
            return Err(Error::Parse {
                line: line_no,
                message: format!("no timestamp in row starting with {:?}", fields[0]),
            });
        };
        seen_data = true;
        rows.push(Row {
            line: line_no,
            time,
            fields,
        });
    }
    Ok(())
}

/// Parses one table. See [`parse_sources`].
pub fn parse_table<R: BufRead>(
    source: R,
    specs: &[ChannelSpec],
    cadence_secs: u32,
) -> Result<Vec<TimeSeries>> {
    parse_sources(std::iter::once(source), specs, cadence_secs)
}

/// Parses consecutive tables (e.g. one file per year) into one series per
/// channel. Rows must be strictly increasing in time and sit on the cadence
/// grid anchored at the first row; rows absent from the input become missing
/// samples. An input with no data rows yields no series.
pub fn parse_sources<R, I>(
    sources: I,
    specs: &[ChannelSpec],
    cadence_secs: u32,
) -> Result<Vec<TimeSeries>>
where
    R: BufRead,
    I: IntoIterator<Item = R>,
{
    if cadence_secs == 0 {
        return Err(Error::config("cadence must be positive"));
    }
    let mut names = HashSet::new();
    for spec in specs {
        if !names.insert(spec.name.as_str()) {
            return Err(Error::config(format!(
                "duplicate channel name {:?}",
                spec.name
            )));
        }
    }

    let mut rows = Vec::new();
    for source in sources {
        read_rows(source, &mut rows)?;
    }
    let Some(first) = rows.first() else {
        return Ok(Vec::new());
    };
    let start = first.time;
    let cadence = cadence_secs as i64;

    let mut series: Vec<TimeSeries> = specs
        .iter()
        .map(|spec| TimeSeries {
            channel: spec.clone(),
            start,
            cadence_secs,
            values: Vec::with_capacity(rows.len()),
            missing: Vec::with_capacity(rows.len()),
        })
        .collect();

    let mut next_index: i64 = 0;
    for row in &rows {
        let elapsed = (row.time - start).num_seconds();
        if elapsed % cadence != 0 {
            return Err(Error::Structure {
                line: row.line,
                message: format!("timestamp {} is off the {cadence_secs} s grid", row.time),
            });
        }
        let index = elapsed / cadence;
        if index < next_index {
            return Err(Error::Structure {
                line: row.line,
                message: format!("timestamp {} is not after the previous row", row.time),
            });
        }
        let mut values = Vec::with_capacity(specs.len());
        for spec in specs {
            let field = row.fields.get(spec.column).ok_or_else(|| Error::Parse {
                line: row.line,
                message: format!("column {} ({}) missing", spec.column, spec.name),
            })?;
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                line: row.line,
                message: format!(
                    "column {} ({}): {field:?} is not a number",
                    spec.column, spec.name
                ),
            })?;
            values.push(value);
        }
        let gap = (index - next_index) as usize;
        for (ts, value) in series.iter_mut().zip(values) {
            ts.values.extend(std::iter::repeat_n(f64::NAN, gap));
            ts.missing.extend(std::iter::repeat_n(true, gap));
            let missing = ts.channel.is_fill(value);
            ts.values.push(value);
            ts.missing.push(missing);
        }
        next_index = index + 1;
    }
    Ok(series)
}

fn samples_for(duration: Duration, cadence_secs: u32, what: &str) -> Result<usize> {
    let secs = duration.as_secs();
    if duration.subsec_nanos() != 0 || secs == 0 || !secs.is_multiple_of(cadence_secs as u64) {
        return Err(Error::config(format!(
            "{what} {} is not a positive multiple of the {cadence_secs} s cadence",
            humantime::format_duration(duration)
        )));
    }
    Ok((secs / cadence_secs as u64) as usize)
}

/// Cuts `series` into windows of `chunk` starting every `stride`. Windows
/// whose missing fraction exceeds `max_missing` are dropped; the ids of the
/// survivors are their ordinal in the full tiling, so they do not shift when
/// the threshold changes.
pub fn segment(
    series: &TimeSeries,
    chunk: Duration,
    stride: Duration,
    max_missing: f64,
) -> Result<Vec<Window>> {
    let length = samples_for(chunk, series.cadence_secs, "chunk")?;
    let step = samples_for(stride, series.cadence_secs, "stride")?;
    if !(0.0..=1.0).contains(&max_missing) {
        return Err(Error::config(format!(
            "max_missing {max_missing} outside [0, 1]"
        )));
    }
    let mut windows = Vec::new();
    if length > series.len() {
        return Ok(windows);
    }
    for (ordinal, offset) in (0..=series.len() - length).step_by(step).enumerate() {
        let gaps = series.missing[offset..offset + length]
            .iter()
            .filter(|m| **m)
            .count();
        let missing_fraction = gaps as f64 / length as f64;
        if missing_fraction > max_missing {
            continue;
        }
        windows.push(Window {
            id: WindowId(ordinal as u64),
            channel: series.channel.name.clone(),
            start: series.timestamp(offset),
            offset,
            length,
            missing_fraction,
        });
    }
    Ok(windows)
}

/// Replaces missing samples by linear interpolation between the nearest
/// present neighbours; leading and trailing gaps take the nearest present
/// value.
pub fn fill_gaps(values: &[f64], missing: &[bool]) -> Result<Vec<f64>> {
    if values.len() != missing.len() {
        return Err(Error::invalid("values and mask differ in length"));
    }
    let present: Vec<usize> = (0..values.len()).filter(|&i| !missing[i]).collect();
    let (Some(&first), Some(&last)) = (present.first(), present.last()) else {
        return Err(Error::AllMissing(0));
    };
    let mut out = values.to_vec();
    out[..first].fill(values[first]);
    out[last + 1..].fill(values[last]);
    for pair in present.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a < 2 {
            continue;
        }
        let (va, vb) = (values[a], values[b]);
        let span = (b - a) as f64;
        for (k, slot) in out[a + 1..b].iter_mut().enumerate() {
            let t = (k + 1) as f64 / span;
            *slot = va + (vb - va) * t;
        }
    }
    Ok(out)
}
