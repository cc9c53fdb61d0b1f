//! Recordings, cohorts, and segment timelines.
//!
//! Input files carry millisecond timestamps; once ingested a [`Recording`]
//! is a uniform grid described by its sample rate and the offset of its
//! first sample from the cohort clock zero.

mod manifest;

pub use manifest::{
    AnalysisSpec, CohortEntry, KeyframeSpec, ManifestError, RecordingEntry, StatsSpec, StudyManifest, SCHEMA_VERSION,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("recording file contains no samples")]
    EmptyFile,
    #[error("malformed row {index}: {reason}")]
    MalformedRow { index: usize, reason: String },
    #[error("sample rate mismatch: expected {expected_hz} Hz, median interval implies {observed_hz:.4} Hz")]
    RateMismatch { expected_hz: f64, observed_hz: f64 },
    #[error("segment [{start_s}, {end_s}) outside recording of {duration_s} s")]
    OutOfRange { start_s: f64, end_s: f64, duration_s: f64 },
    #[error("invalid segment specification: {0}")]
    InvalidSegments(String),
    #[error("invalid recording: {0}")]
    InvalidRecording(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Eda,
    Bvp,
}

impl ChannelKind {
    /// Nominal sensor rate (EDA 10 Hz, BVP 200 Hz).
    pub fn nominal_rate_hz(self) -> f64 {
        match self {
            ChannelKind::Eda => 10.0,
            ChannelKind::Bvp => 200.0,
        }
    }
}

/// One subject's single-channel signal on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording<T> {
    pub subject_id: String,
    pub channel: ChannelKind,
    pub sample_rate_hz: f64,
    pub samples: Vec<T>,
    /// Offset of the first sample from the cohort clock zero, in seconds.
    pub t0_offset_s: f64,
}

impl<T: Real> Recording<T> {
    pub fn new(
        subject_id: impl Into<String>,
        channel: ChannelKind,
        sample_rate_hz: f64,
        samples: Vec<T>,
    ) -> Result<Self, DatasetError> {
        if samples.is_empty() {
            return Err(DatasetError::InvalidRecording("no samples".into()));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(DatasetError::InvalidRecording(format!("sample rate {sample_rate_hz} Hz")));
        }
        Ok(Self { subject_id: subject_id.into(), channel, sample_rate_hz, samples, t0_offset_s: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Covered time: `len / rate`.
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn with_samples(&self, samples: Vec<T>) -> Self {
        Self { samples, ..self.clone() }
    }
}

/// Parse the `timestamp_ms,value` CSV format.
///
/// The header line is optional. Timestamps must be strictly increasing;
/// values must be finite. The median inter-sample interval must lie within
/// 5% of `1 / expected_rate_hz`.
pub fn parse_recording<T: Real>(
    subject_id: &str,
    bytes: &[u8],
    channel: ChannelKind,
    expected_rate_hz: f64,
) -> Result<Recording<T>, DatasetError> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(bytes);

    let mut timestamps: Vec<f64> = Vec::new();
    let mut samples: Vec<T> = Vec::new();
    let mut index = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DatasetError::MalformedRow { index, reason: e.to_string() })?;
        if line == 0 && record.get(0) == Some("timestamp_ms") {
            continue;
        }
        if record.len() == 1 && record.get(0).is_some_and(str::is_empty) {
            continue;
        }
        if record.len() != 2 {
            return Err(DatasetError::MalformedRow {
                index,
                reason: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let ts: f64 = parse_field(&record[0], index, "timestamp")?;
        let value: f64 = parse_field(&record[1], index, "value")?;
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(DatasetError::MalformedRow { index, reason: "timestamp not increasing".into() });
            }
        }
        timestamps.push(ts);
        samples.push(T::from_f64_lossy(value));
        index += 1;
    }

    if samples.is_empty() {
        return Err(DatasetError::EmptyFile);
    }
    if timestamps.len() >= 2 {
        let mut intervals: Vec<f64> = timestamps.windows(2).map(|w| (w[1] - w[0]) / 1000.0).collect();
        let median = median_in_place(&mut intervals);
        let expected = 1.0 / expected_rate_hz;
        if ((median - expected) / expected).abs() > 0.05 {
            return Err(DatasetError::RateMismatch { expected_hz: expected_rate_hz, observed_hz: 1.0 / median });
        }
    }

    let mut rec = Recording::new(subject_id, channel, expected_rate_hz, samples)?;
    rec.t0_offset_s = timestamps[0] / 1000.0;
    Ok(rec)
}

fn parse_field(raw: &str, index: usize, what: &str) -> Result<f64, DatasetError> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DatasetError::MalformedRow { index, reason: format!("unparseable {what} {raw:?}") }),
    }
}

fn median_in_place(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

// Tolerance for turning second-valued boundaries into sample indices.
const INDEX_EPS: f64 = 1e-9;

/// Sample index range covered by `[start_s, end_s)` at `rate_hz`, relative to
/// the first sample.
pub fn segment_indices(rate_hz: f64, start_s: f64, end_s: f64) -> (usize, usize) {
    let first = (start_s * rate_hz - INDEX_EPS).ceil().max(0.0) as usize;
    let len = ((end_s - start_s) * rate_hz + INDEX_EPS).floor().max(0.0) as usize;
    (first, first + len)
}

/// Samples whose local time `i / rate` lies in `[start_s, end_s)`.
///
/// Times are relative to the recording's first sample; the returned
/// recording has its `t0_offset_s` advanced by `start_s`.
pub fn slice_segment<T: Real>(rec: &Recording<T>, start_s: f64, end_s: f64) -> Result<Recording<T>, DatasetError> {
    let duration_s = rec.duration_s();
    let out_of_range = || DatasetError::OutOfRange { start_s, end_s, duration_s };
    if !(start_s >= 0.0 && start_s < end_s && end_s <= duration_s + INDEX_EPS) {
        return Err(out_of_range());
    }
    let (first, last) = segment_indices(rec.sample_rate_hz, start_s, end_s);
    if last > rec.len() || first >= last {
        return Err(out_of_range());
    }
    let mut out = rec.with_samples(rec.samples[first..last].to_vec());
    out.t0_offset_s = rec.t0_offset_s + start_s;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub label: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl Segment {
    pub fn new(label: impl Into<String>, start_s: f64, end_s: f64) -> Self {
        Self { label: label.into(), start_s, end_s }
    }
}

pub const OVERALL_LABEL: &str = "overall";

/// Ordered, non-overlapping segment list. The whole-timeline "overall"
/// segment is implicit and produced by [`SegmentSpec::with_overall`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentSpec {
    pub segments: Vec<Segment>,
}

impl Default for SegmentSpec {
    fn default() -> Self {
        Self {
            segments: vec![
                Segment::new("0-100s", 0.0, 100.0),
                Segment::new("100-160s", 100.0, 160.0),
                Segment::new("160-260s", 160.0, 260.0),
            ],
        }
    }
}

impl SegmentSpec {
    pub fn validate(&self, duration_s: f64) -> Result<(), DatasetError> {
        let mut prev_end = 0.0;
        for seg in &self.segments {
            if seg.label == OVERALL_LABEL {
                return Err(DatasetError::InvalidSegments(format!("label {OVERALL_LABEL:?} is reserved")));
            }
            if !(seg.start_s >= prev_end && seg.start_s < seg.end_s && seg.end_s <= duration_s) {
                return Err(DatasetError::InvalidSegments(format!(
                    "segment {:?} [{}, {}) is not ascending, non-overlapping, and within [0, {duration_s}]",
                    seg.label, seg.start_s, seg.end_s
                )));
            }
            prev_end = seg.end_s;
        }
        Ok(())
    }

    /// The declared segments followed by `overall` spanning `[0, duration_s)`.
    pub fn with_overall(&self, duration_s: f64) -> Vec<Segment> {
        let mut all = self.segments.clone();
        all.push(Segment::new(OVERALL_LABEL, 0.0, duration_s));
        all
    }
}

/// A labeled set of recordings sharing one timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort<T> {
    pub label: String,
    pub recordings: Vec<Recording<T>>,
    pub duration_s: f64,
    pub segments: SegmentSpec,
}

pub const FLAT_LINE_VARIANCE: f64 = 1e-9;
pub const LENGTH_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingFlags {
    pub subject_id: String,
    pub duration_s: f64,
    pub length_mismatch: bool,
    pub flat_line: bool,
    pub non_finite: bool,
}

impl RecordingFlags {
    pub fn is_flagged(&self) -> bool {
        self.length_mismatch || self.flat_line || self.non_finite
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub cohort: String,
    pub recordings: Vec<RecordingFlags>,
}

impl ValidationReport {
    pub fn flagged_count(&self) -> usize {
        self.recordings.iter().filter(|r| r.is_flagged()).count()
    }

    pub fn is_flagged(&self, subject_id: &str) -> bool {
        self.recordings.iter().any(|r| r.subject_id == subject_id && r.is_flagged())
    }
}

/// Screen every recording: duration off by more than 1%, variance below
/// [`FLAT_LINE_VARIANCE`], or non-finite samples.
pub fn validate_cohort<T: Real>(cohort: &Cohort<T>) -> ValidationReport {
    let recordings = cohort
        .recordings
        .iter()
        .map(|rec| {
            let duration_s = rec.duration_s();
            let non_finite = rec.samples.iter().any(|v| !v.is_finite());
            let finite: Vec<f64> = rec.samples.iter().map(|v| v.as_f64()).filter(|v| v.is_finite()).collect();
            let flat_line = finite.len() < 2 || variance(&finite) < FLAT_LINE_VARIANCE;
            let length_mismatch = ((duration_s - cohort.duration_s) / cohort.duration_s).abs() > LENGTH_TOLERANCE;
            RecordingFlags { subject_id: rec.subject_id.clone(), duration_s, length_mismatch, flat_line, non_finite }
        })
        .collect();
    ValidationReport { cohort: cohort.label.clone(), recordings }
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Place a recording on the cohort timeline `[0, duration_s)` at its own
/// rate: samples before clock zero are dropped, gaps at either end are
/// filled by holding the nearest sample.
pub fn align_to_timeline<T: Real>(rec: &Recording<T>, duration_s: f64) -> Recording<T> {
    let rate = rec.sample_rate_hz;
    let target = (duration_s * rate + INDEX_EPS).floor() as usize;
    let shift = (rec.t0_offset_s * rate).round() as i64;
    let last = rec.samples.len() as i64 - 1;
    let samples = (0..target as i64).map(|i| rec.samples[(i - shift).clamp(0, last) as usize]).collect();
    let mut out = rec.with_samples(samples);
    out.t0_offset_s = 0.0;
    out
}
