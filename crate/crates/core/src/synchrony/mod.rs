//! Synchrony between signals and cohorts: Pearson correlation, DTW,
//! group-average comparison per segment, and exhaustive pairwise DTW.

mod dtw;
mod pearson;

pub use dtw::{dtw_distance, dtw_path, DtwConfig, DtwDistance, LocalCost, StepPattern};
pub use pearson::{correlation_p_value, pearson, Correlation};

use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{segment_indices, Segment};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynchronyError {
    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("series of {len} samples is shorter than the required {min}")]
    TooFewSamples { len: usize, min: usize },
    #[error("input is constant")]
    ConstantInput,
    #[error("empty input series")]
    EmptyInput,
    #[error("band radius {radius} cannot connect series of lengths {len_x} and {len_y}")]
    InfeasibleBand { radius: usize, len_x: usize, len_y: usize },
    #[error("cohort {0:?} has no included recordings")]
    EmptyCohort(String),
    #[error("segment {label:?} [{start_s}, {end_s}) exceeds series of {len} samples")]
    SegmentOutOfRange { label: String, start_s: f64, end_s: f64, len: usize },
    #[error("rate {rate_hz} Hz is not an integer multiple of 1 Hz")]
    NonIntegerRate { rate_hz: f64 },
    #[error("cohorts sampled at different rates: {left} Hz vs {right} Hz")]
    RateMismatch { left: f64, right: f64 },
    #[error("pair table CSV: {0}")]
    PairTableFormat(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    #[default]
    Tonic,
    Phasic,
    /// The preprocessed, normalized signal before decomposition.
    Raw,
}

/// One subject's analysis-ready series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSeries<T> {
    pub subject_id: String,
    /// Excluded subjects are skipped by group averages and pair tables.
    pub excluded: bool,
    pub raw: Vec<T>,
    pub tonic: Vec<T>,
    pub phasic: Vec<T>,
}

impl<T> SubjectSeries<T> {
    pub fn component(&self, component: Component) -> &[T] {
        match component {
            Component::Tonic => &self.tonic,
            Component::Phasic => &self.phasic,
            Component::Raw => &self.raw,
        }
    }
}

/// A preprocessed cohort on the analysis grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisCohort<T> {
    pub label: String,
    pub rate_hz: f64,
    pub duration_s: f64,
    pub subjects: Vec<SubjectSeries<T>>,
}

impl<T> AnalysisCohort<T> {
    pub fn included(&self) -> impl Iterator<Item = &SubjectSeries<T>> {
        self.subjects.iter().filter(|s| !s.excluded)
    }
}

/// Pointwise mean over included subjects, summed in subject order.
pub fn group_average<T: Real>(cohort: &AnalysisCohort<T>, component: Component) -> Result<Vec<T>, SynchronyError> {
    let mut members = cohort.included();
    let first = members.next().ok_or_else(|| SynchronyError::EmptyCohort(cohort.label.clone()))?;
    let len = first.component(component).len();
    let mut sum: Vec<f64> = first.component(component).iter().map(|v| v.as_f64()).collect();
    let mut count = 1usize;
    for subject in members {
        let series = subject.component(component);
        if series.len() != len {
            return Err(SynchronyError::LengthMismatch { left: len, right: series.len() });
        }
        for (acc, v) in sum.iter_mut().zip(series) {
            *acc += v.as_f64();
        }
        count += 1;
    }
    Ok(sum.into_iter().map(|s| T::from_f64_lossy(s / count as f64)).collect())
}

/// Correlation and DTW for one segment (or the whole timeline).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynchronyResult {
    pub segment_label: String,
    pub r: f64,
    pub p: f64,
    pub df: usize,
    pub dtw_raw: f64,
    pub dtw_normalized: f64,
    pub path_length: usize,
    pub n_x: usize,
    pub n_y: usize,
}

fn segment_slice<'a, T>(series: &'a [T], rate_hz: f64, seg: &Segment) -> Result<&'a [T], SynchronyError> {
    let (first, last) = segment_indices(rate_hz, seg.start_s, seg.end_s);
    if last > series.len() || first >= last {
        return Err(SynchronyError::SegmentOutOfRange {
            label: seg.label.clone(),
            start_s: seg.start_s,
            end_s: seg.end_s,
            len: series.len(),
        });
    }
    Ok(&series[first..last])
}

/// Block means over whole seconds; a trailing partial second is dropped.
pub fn decimate_to_1hz<T: Real>(series: &[T], rate_hz: f64) -> Result<Vec<f64>, SynchronyError> {
    let factor = rate_hz.round();
    if !(factor >= 1.0 && (rate_hz - factor).abs() < 1e-9) {
        return Err(SynchronyError::NonIntegerRate { rate_hz });
    }
    let factor = factor as usize;
    Ok(series.chunks_exact(factor).map(|block| block.iter().map(|v| v.as_f64()).sum::<f64>() / factor as f64).collect())
}

/// One result per segment in `segments` (callers typically pass the
/// segment list including `overall`). Correlations use 1 Hz block means;
/// DTW runs at `rate_hz`.
pub fn group_synchrony<T: Real>(
    reference_avg: &[T],
    probe_avg: &[T],
    segments: &[Segment],
    rate_hz: f64,
    cfg: &DtwConfig,
) -> Result<Vec<SynchronyResult>, SynchronyError> {
    if reference_avg.len() != probe_avg.len() {
        return Err(SynchronyError::LengthMismatch { left: reference_avg.len(), right: probe_avg.len() });
    }
    segments
        .iter()
        .map(|seg| {
            let x = segment_slice(reference_avg, rate_hz, seg)?;
            let y = segment_slice(probe_avg, rate_hz, seg)?;
            let corr = pearson(&decimate_to_1hz(x, rate_hz)?, &decimate_to_1hz(y, rate_hz)?)?;
            let d = dtw_distance(x, y, cfg)?;
            Ok(SynchronyResult {
                segment_label: seg.label.clone(),
                r: corr.r,
                p: corr.p,
                df: corr.df,
                dtw_raw: d.raw,
                dtw_normalized: d.normalized,
                path_length: d.path_length,
                n_x: x.len(),
                n_y: y.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub probe_subject: String,
    pub reference_subject: String,
    pub condition: String,
    pub segment: String,
    pub dtw_raw: f64,
    pub dtw_normalized: f64,
}

/// Long-format per-pair DTW values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairTable {
    pub rows: Vec<PairRow>,
}

pub const PAIR_TABLE_HEADER: [&str; 6] =
    ["probe_subject", "reference_subject", "condition", "segment", "dtw_raw", "dtw_normalized"];

impl PairTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn extend(&mut self, other: PairTable) {
        self.rows.extend(other.rows);
    }

    pub fn rows_for<'a>(&'a self, condition: &'a str, segment: &'a str) -> impl Iterator<Item = &'a PairRow> + 'a {
        self.rows.iter().filter(move |r| r.condition == condition && r.segment == segment)
    }

    /// Raw or normalized DTW values of one condition/segment cell, in row order.
    pub fn values(&self, condition: &str, segment: &str, normalized: bool) -> Vec<f64> {
        self.rows_for(condition, segment).map(|r| if normalized { r.dtw_normalized } else { r.dtw_raw }).collect()
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), SynchronyError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let fmt = |e: csv::Error| SynchronyError::PairTableFormat(e.to_string());
        w.write_record(PAIR_TABLE_HEADER).map_err(fmt)?;
        for row in &self.rows {
            w.write_record([
                row.probe_subject.as_str(),
                row.reference_subject.as_str(),
                row.condition.as_str(),
                row.segment.as_str(),
                &row.dtw_raw.to_string(),
                &row.dtw_normalized.to_string(),
            ])
            .map_err(fmt)?;
        }
        w.flush().map_err(|e| SynchronyError::PairTableFormat(e.to_string()))
    }

    pub fn read_csv<R: io::Read>(input: R) -> Result<Self, SynchronyError> {
        let mut reader = csv::Reader::from_reader(input);
        let headers = reader.headers().map_err(|e| SynchronyError::PairTableFormat(e.to_string()))?;
        if headers.iter().ne(PAIR_TABLE_HEADER) {
            return Err(SynchronyError::PairTableFormat(format!("unexpected header {headers:?}")));
        }
        let rows = reader
            .records()
            .enumerate()
            .map(|(i, rec)| {
                let rec = rec.map_err(|e| SynchronyError::PairTableFormat(e.to_string()))?;
                let num = |k: usize| {
                    rec[k].parse::<f64>().map_err(|_| SynchronyError::PairTableFormat(format!("row {i}: bad number")))
                };
                Ok(PairRow {
                    probe_subject: rec[0].to_string(),
                    reference_subject: rec[1].to_string(),
                    condition: rec[2].to_string(),
                    segment: rec[3].to_string(),
                    dtw_raw: num(4)?,
                    dtw_normalized: num(5)?,
                })
            })
            .collect::<Result<_, SynchronyError>>()?;
        Ok(Self { rows })
    }
}

/// Every included probe subject against every included reference subject,
/// for every segment. Rows come out probe-major, then reference, then
/// segment, independent of the rayon pool size.
pub fn pairwise_dtw<T: Real>(
    reference: &AnalysisCohort<T>,
    probe: &AnalysisCohort<T>,
    component: Component,
    segments: &[Segment],
    cfg: &DtwConfig,
) -> Result<PairTable, SynchronyError> {
    if reference.rate_hz != probe.rate_hz {
        return Err(SynchronyError::RateMismatch { left: reference.rate_hz, right: probe.rate_hz });
    }
    let rate = reference.rate_hz;
    let refs: Vec<&SubjectSeries<T>> = reference.included().collect();
    let probes: Vec<&SubjectSeries<T>> = probe.included().collect();
    let jobs: Vec<(usize, usize)> = (0..probes.len()).flat_map(|p| (0..refs.len()).map(move |r| (p, r))).collect();

    let per_pair: Vec<Vec<PairRow>> = jobs
        .par_iter()
        .map(|&(p, r)| {
            let (ps, rs) = (probes[p], refs[r]);
            segments
                .iter()
                .map(|seg| {
                    let x = segment_slice(ps.component(component), rate, seg)?;
                    let y = segment_slice(rs.component(component), rate, seg)?;
                    let d = dtw_distance(x, y, cfg)?;
                    Ok(PairRow {
                        probe_subject: ps.subject_id.clone(),
                        reference_subject: rs.subject_id.clone(),
                        condition: probe.label.clone(),
                        segment: seg.label.clone(),
                        dtw_raw: d.raw,
                        dtw_normalized: d.normalized,
                    })
                })
                .collect::<Result<Vec<_>, SynchronyError>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(PairTable { rows: per_pair.into_iter().flatten().collect() })
}
