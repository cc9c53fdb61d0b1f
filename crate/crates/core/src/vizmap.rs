//! Keyframe tracks for animating physiology: EDA drives height, BVP drives
//! scale.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ChannelKind, Cohort};
use crate::preprocess::{minmax_normalize, resample, PreprocessError};
use crate::scalar::Real;

pub const DEFAULT_FPS: u32 = 30;

#[derive(Debug, Error)]
pub enum VizError {
    #[error("input value {value} at index {index} is outside [0, 1]")]
    InputOutOfUnitRange { index: usize, value: f64 },
    #[error("signal has zero range")]
    DegenerateRange,
    #[error("empty input signal")]
    EmptyInput,
    #[error("cohort has no recordings")]
    EmptyCohort,
    #[error("invalid keyframe settings: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<PreprocessError> for VizError {
    fn from(e: PreprocessError) -> Self {
        match e {
            PreprocessError::DegenerateRange => VizError::DegenerateRange,
            other => VizError::InvalidConfig(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackChannel {
    Scale,
    Height,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeTrack<T> {
    #[serde(rename = "subject")]
    pub subject_id: String,
    pub channel: TrackChannel,
    pub fps: u32,
    pub bounds: (f64, f64),
    pub values: Vec<T>,
}

fn check_settings(rate_hz: f64, fps: u32, bounds: (f64, f64)) -> Result<(), VizError> {
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(VizError::InvalidConfig(format!("rate {rate_hz} Hz")));
    }
    if fps == 0 {
        return Err(VizError::InvalidConfig("fps must be positive".into()));
    }
    let (lo, hi) = bounds;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(VizError::InvalidConfig(format!("bounds ({lo}, {hi}) must be finite and ascending")));
    }
    Ok(())
}

/// Resample unit-range values to `fps` and map them linearly onto `bounds`.
fn map_unit<T: Real>(unit: &[T], rate_hz: f64, fps: u32, bounds: (f64, f64)) -> Result<Vec<T>, VizError> {
    let (lo, hi) = bounds;
    Ok(resample(unit, rate_hz, f64::from(fps))?
        .into_iter()
        .map(|v| {
            let v = v.as_f64();
            // clamp guards the last-ulp overshoot of the affine map
            T::from_f64_lossy((lo * (1.0 - v) + hi * v).clamp(lo, hi))
        })
        .collect())
}

/// Height track from an EDA signal already normalized to `[0, 1]`.
pub fn eda_to_height<T: Real>(
    subject_id: &str,
    eda_normalized: &[T],
    rate_hz: f64,
    fps: u32,
    bounds: (f64, f64),
) -> Result<KeyframeTrack<T>, VizError> {
    check_settings(rate_hz, fps, bounds)?;
    if eda_normalized.is_empty() {
        return Err(VizError::EmptyInput);
    }
    if let Some((index, v)) =
        eda_normalized.iter().map(|v| v.as_f64()).enumerate().find(|(_, v)| !(0.0..=1.0).contains(v))
    {
        return Err(VizError::InputOutOfUnitRange { index, value: v });
    }
    Ok(KeyframeTrack {
        subject_id: subject_id.to_string(),
        channel: TrackChannel::Height,
        fps,
        bounds,
        values: map_unit(eda_normalized, rate_hz, fps, bounds)?,
    })
}

/// Scale track from a raw BVP waveform: min-max normalized, resampled, and
/// mapped onto `bounds`.
pub fn bvp_to_scale<T: Real>(
    subject_id: &str,
    bvp: &[T],
    rate_hz: f64,
    fps: u32,
    bounds: (f64, f64),
) -> Result<KeyframeTrack<T>, VizError> {
    check_settings(rate_hz, fps, bounds)?;
    if bvp.is_empty() {
        return Err(VizError::EmptyInput);
    }
    let unit = minmax_normalize(bvp)?;
    Ok(KeyframeTrack {
        subject_id: subject_id.to_string(),
        channel: TrackChannel::Scale,
        fps,
        bounds,
        values: map_unit(&unit, rate_hz, fps, bounds)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExportBounds {
    pub height: (f64, f64),
    pub scale: (f64, f64),
}

impl Default for ExportBounds {
    fn default() -> Self {
        Self { height: (0.0, 1.0), scale: (0.8, 1.2) }
    }
}

/// One track per recording, in cohort order: EDA recordings become height
/// tracks and BVP recordings scale tracks.
pub fn cohort_tracks<T: Real>(
    cohort: &Cohort<T>,
    fps: u32,
    bounds: ExportBounds,
) -> Result<Vec<KeyframeTrack<T>>, VizError> {
    if cohort.recordings.is_empty() {
        return Err(VizError::EmptyCohort);
    }
    cohort
        .recordings
        .iter()
        .map(|rec| match rec.channel {
            ChannelKind::Eda => eda_to_height(&rec.subject_id, &rec.samples, rec.sample_rate_hz, fps, bounds.height),
            ChannelKind::Bvp => bvp_to_scale(&rec.subject_id, &rec.samples, rec.sample_rate_hz, fps, bounds.scale),
        })
        .collect()
}

/// Write tracks as line-delimited JSON, one object per track.
pub fn write_tracks<T: Real + Serialize, W: Write>(tracks: &[KeyframeTrack<T>], out: W) -> Result<(), VizError> {
    let mut out = io::BufWriter::new(out);
    for track in tracks {
        serde_json::to_writer(&mut out, track).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// [`cohort_tracks`] followed by [`write_tracks`]; returns the track count.
pub fn export_tracks<T: Real + Serialize, W: Write>(
    cohort: &Cohort<T>,
    fps: u32,
    bounds: ExportBounds,
    out: W,
) -> Result<usize, VizError> {
    let tracks = cohort_tracks(cohort, fps, bounds)?;
    write_tracks(&tracks, out)?;
    Ok(tracks.len())
}
