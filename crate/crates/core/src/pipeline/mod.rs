//! Manifest-driven analysis: ingest, preprocess, decompose, synchrony,
//! statistics, report, and keyframe export.

mod cache;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    align_to_timeline, parse_recording, validate_cohort, ChannelKind, Cohort, CohortEntry, Recording, Segment,
    StudyManifest, ValidationReport,
};
use crate::decompose::tonic_phasic_split;
use crate::error::{Context, Error};
use crate::preprocess::{preprocess_pipeline, resample, PreprocessConfig};
use crate::stats::{
    art_transform, oneway_anova, rm_anova, shapiro_wilk, tukey_hsd, AnovaResult, LongTable, Observation, PosthocResult,
    ShapiroWilk, StatsError,
};
use crate::synchrony::{
    group_average, group_synchrony, pairwise_dtw, AnalysisCohort, Component, PairTable, SubjectSeries, SynchronyResult,
};
use crate::vizmap::{bvp_to_scale, eda_to_height, write_tracks, KeyframeTrack};

pub use cache::{Stage, Workspace};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A checked manifest together with the directory its paths resolve
/// against and a digest of every input file.
#[derive(Debug, Clone)]
pub struct Study {
    pub manifest: StudyManifest,
    pub base: PathBuf,
    pub inputs_hash: String,
}

impl Study {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let (manifest, base) = StudyManifest::load(path)?;
        Self::from_parts(manifest, base)
    }

    pub fn from_parts(manifest: StudyManifest, base: PathBuf) -> Result<Self, Error> {
        let mut hasher = Sha256::new();
        for file in manifest.referenced_files(&base) {
            let bytes = fs::read(&file).map_err(|source| match source.kind() {
                std::io::ErrorKind::NotFound => {
                    Error::from(crate::dataset::ManifestError::MissingFile { path: file.clone() })
                }
                _ => Error::Io { path: file.clone(), source },
            })?;
            hasher.update(Sha256::digest(&bytes));
        }
        Ok(Self { manifest, base, inputs_hash: hex::encode(hasher.finalize()) })
    }

    /// Digest of the canonical manifest JSON.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.manifest.to_canonical_json().as_bytes()))
    }

    /// Key for stage artifacts: changes whenever configuration or inputs do.
    pub fn cache_key(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.config_hash().as_bytes());
        hasher.update(self.inputs_hash.as_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn segments(&self) -> Vec<Segment> {
        self.manifest.segments.with_overall(self.manifest.reference.duration_s)
    }

    fn rate_of(&self, entry: &CohortEntry) -> f64 {
        entry.rate_hz.unwrap_or_else(|| self.manifest.channel.nominal_rate_hz())
    }
}

/// Parsed recordings of one cohort, with optional BVP companions.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestedCohort {
    pub cohort: Cohort<f64>,
    pub bvp: Vec<Recording<f64>>,
}

/// Parse every recording named by the manifest, reference cohort first.
pub fn ingest(study: &Study) -> Result<Vec<IngestedCohort>, Error> {
    let m = &study.manifest;
    m.cohorts()
        .map(|entry| {
            let rate = study.rate_of(entry);
            let recordings = entry
                .recordings
                .par_iter()
                .map(|r| read_recording(&study.base, &r.subject, &r.path, m.channel, rate))
                .collect::<Result<Vec<_>, _>>()?;
            let bvp_rate = entry.bvp_rate_hz.unwrap_or_else(|| ChannelKind::Bvp.nominal_rate_hz());
            let bvp = entry
                .recordings
                .par_iter()
                .filter_map(|r| r.bvp_path.as_ref().map(|p| (r, p)))
                .map(|(r, p)| read_recording(&study.base, &r.subject, p, ChannelKind::Bvp, bvp_rate))
                .collect::<Result<Vec<_>, _>>()?;
            let cohort = Cohort {
                label: entry.label.clone(),
                recordings,
                duration_s: entry.duration_s,
                segments: m.segments.clone(),
            };
            Ok(IngestedCohort { cohort, bvp })
        })
        .collect()
}

fn read_recording(
    base: &Path,
    subject: &str,
    rel: &str,
    channel: ChannelKind,
    rate: f64,
) -> Result<Recording<f64>, Error> {
    let path = base.join(rel);
    let bytes = fs::read(&path).map_err(Error::io(&path))?;
    parse_recording(subject, &bytes, channel, rate).context(path.display().to_string())
}

pub fn screen(ingested: &[IngestedCohort]) -> Vec<ValidationReport> {
    ingested.iter().map(|c| validate_cohort(&c.cohort)).collect()
}

/// Preprocessed, decomposed cohorts on the analysis grid, reference first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prepared {
    pub screening: Vec<ValidationReport>,
    pub cohorts: Vec<AnalysisCohort<f64>>,
}

impl Prepared {
    pub fn reference(&self) -> &AnalysisCohort<f64> {
        &self.cohorts[0]
    }

    pub fn probes(&self) -> &[AnalysisCohort<f64>] {
        &self.cohorts[1..]
    }
}

pub fn prepare(study: &Study, ingested: &[IngestedCohort]) -> Result<Prepared, Error> {
    let screening = screen(ingested);
    let keep = study.manifest.analysis.keep_flagged;
    let cohorts = ingested
        .iter()
        .zip(&screening)
        .map(|(c, report)| prepare_cohort(&c.cohort, report, &study.manifest.preprocess, keep))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Prepared { screening, cohorts })
}

/// Align each recording to the cohort timeline, preprocess and decompose it
/// at its native rate, then resample onto `floor(duration * analysis_hz)`
/// analysis samples. Flagged recordings are carried as excluded, empty
/// series unless `keep_flagged` is set.
pub fn prepare_cohort(
    cohort: &Cohort<f64>,
    report: &ValidationReport,
    cfg: &PreprocessConfig,
    keep_flagged: bool,
) -> Result<AnalysisCohort<f64>, Error> {
    let analysis_hz = cfg.target_rates.analysis_hz;
    let target = (cohort.duration_s * analysis_hz + 1e-9).floor() as usize;
    let subjects = cohort
        .recordings
        .par_iter()
        .map(|rec| {
            if report.is_flagged(&rec.subject_id) && !keep_flagged {
                return Ok(SubjectSeries {
                    subject_id: rec.subject_id.clone(),
                    excluded: true,
                    raw: vec![],
                    tonic: vec![],
                    phasic: vec![],
                });
            }
            let ctx = || format!("{}/{}", cohort.label, rec.subject_id);
            let aligned = align_to_timeline(rec, cohort.duration_s);
            let clean = preprocess_pipeline(&aligned, cfg).context(ctx())?;
            let rate = clean.sample_rate_hz;
            let parts = tonic_phasic_split(&clean.samples, rate, &cfg.decompose).context(ctx())?;
            let to_grid = |x: &[f64]| -> Result<Vec<f64>, Error> {
                let mut y =
                    if rate == analysis_hz { x.to_vec() } else { resample(x, rate, analysis_hz).context(ctx())? };
                let last = y[y.len() - 1];
                y.resize(target, last);
                Ok(y)
            };
            Ok(SubjectSeries {
                subject_id: rec.subject_id.clone(),
                excluded: false,
                raw: to_grid(&clean.samples)?,
                tonic: to_grid(&parts.tonic)?,
                phasic: to_grid(&parts.phasic)?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(AnalysisCohort { label: cohort.label.clone(), rate_hz: analysis_hz, duration_s: cohort.duration_s, subjects })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSynchrony {
    pub condition: String,
    pub results: Vec<SynchronyResult>,
}

/// Group-average synchrony of each probe cohort against the reference.
pub fn group_stage(study: &Study, prepared: &Prepared) -> Result<Vec<ConditionSynchrony>, Error> {
    let component = study.manifest.analysis.component;
    let segments = study.segments();
    let reference = prepared.reference();
    let ref_avg = group_average(reference, component).context(format!("cohort {}", reference.label))?;
    prepared
        .probes()
        .iter()
        .map(|probe| {
            let ctx = format!("cohort {}", probe.label);
            let avg = group_average(probe, component).context(ctx.clone())?;
            let results =
                group_synchrony(&ref_avg, &avg, &segments, probe.rate_hz, &study.manifest.dtw).context(ctx)?;
            Ok(ConditionSynchrony { condition: probe.label.clone(), results })
        })
        .collect()
}

/// Exhaustive probe x reference DTW table, probes in manifest order.
pub fn pairs_stage(study: &Study, prepared: &Prepared) -> Result<PairTable, Error> {
    let segments = study.segments();
    let mut table = PairTable::default();
    for probe in prepared.probes() {
        let part = pairwise_dtw(
            prepared.reference(),
            probe,
            study.manifest.analysis.component,
            &segments,
            &study.manifest.dtw,
        )
        .context(format!("cohort {}", probe.label))?;
        table.extend(part);
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub condition: String,
    pub segment: String,
    pub n: usize,
    pub mean_raw: f64,
    pub mean_norm: f64,
    pub sd_norm: f64,
    pub median_norm: f64,
    pub min_norm: f64,
    pub max_norm: f64,
}

pub fn summarize_pairs(study: &Study, pairs: &PairTable) -> Vec<PairSummary> {
    let mut out = Vec::new();
    for probe in &study.manifest.probes {
        for seg in study.segments() {
            let norm = pairs.values(&probe.label, &seg.label, true);
            if norm.is_empty() {
                continue;
            }
            let raw = pairs.values(&probe.label, &seg.label, false);
            let n = norm.len();
            let mean = norm.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (norm.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            let mut sorted = norm.clone();
            sorted.sort_by(f64::total_cmp);
            let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
            out.push(PairSummary {
                condition: probe.label.clone(),
                segment: seg.label.clone(),
                n,
                mean_raw: raw.iter().sum::<f64>() / n as f64,
                mean_norm: mean,
                sd_norm: sd,
                median_norm: median,
                min_norm: sorted[0],
                max_norm: sorted[n - 1],
            });
        }
    }
    out
}

/// Either a computed result or the reason it was not computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outcome<T> {
    Done(T),
    Skipped { skipped: String, reason: String },
}

impl<T> Outcome<T> {
    fn skipped(code: &str, reason: impl Into<String>) -> Self {
        Outcome::Skipped { skipped: code.to_string(), reason: reason.into() }
    }

    pub fn done(&self) -> Option<&T> {
        match self {
            Outcome::Done(v) => Some(v),
            Outcome::Skipped { .. } => None,
        }
    }
}

impl<T> From<Result<T, StatsError>> for Outcome<T> {
    fn from(r: Result<T, StatsError>) -> Self {
        match r {
            Ok(v) => Outcome::Done(v),
            Err(e) => {
                let err = Err::<(), _>(e).context("stats").unwrap_err();
                Outcome::skipped(&err.code(), err.to_string())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityEntry {
    pub condition: String,
    pub segment: String,
    pub n: usize,
    pub result: Outcome<ShapiroWilk>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionAnova {
    pub segment: String,
    /// `dtw_normalized` or `dtw_raw`, following the DTW normalization setting.
    pub measure: String,
    pub method: String,
    pub result: Outcome<AnovaResult>,
    /// Mean aligned rank per condition.
    pub rank_means: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub normality: Vec<NormalityEntry>,
    pub anova: Outcome<ConditionAnova>,
    pub posthoc: Outcome<PosthocResult>,
    pub rm_anova: Option<Outcome<AnovaResult>>,
}

const STATS_SEGMENT: &str = crate::dataset::OVERALL_LABEL;

/// Normality screen, ART one-way ANOVA, and Tukey HSD on the aligned ranks
/// of whole-timeline pair DTW, plus the optional repeated-measures scores.
pub fn stats_stage(study: &Study, pairs: Option<&PairTable>) -> Result<StatsReport, Error> {
    let m = &study.manifest;
    let normalized = m.dtw.normalize_by_path;
    let measure = if normalized { "dtw_normalized" } else { "dtw_raw" };
    let (normality, anova, posthoc) = match pairs {
        None => (
            Vec::new(),
            Outcome::skipped("pipeline.pairwise_disabled", "pairwise analysis disabled"),
            Outcome::skipped("pipeline.pairwise_disabled", "pairwise analysis disabled"),
        ),
        Some(pairs) => {
            let normality = m
                .probes
                .iter()
                .map(|p| {
                    let values = pairs.values(&p.label, STATS_SEGMENT, normalized);
                    NormalityEntry {
                        condition: p.label.clone(),
                        segment: STATS_SEGMENT.into(),
                        n: values.len(),
                        result: shapiro_wilk(&values).into(),
                    }
                })
                .collect();
            let table = LongTable::new(
                pairs
                    .rows
                    .iter()
                    .filter(|r| r.segment == STATS_SEGMENT)
                    .map(|r| {
                        let v = if normalized { r.dtw_normalized } else { r.dtw_raw };
                        Observation::new(format!("{}|{}", r.probe_subject, r.reference_subject), r.condition.clone(), v)
                    })
                    .collect(),
            );
            match art_transform(&table) {
                Err(e) => {
                    let anova = Outcome::<ConditionAnova>::from(Err(e));
                    let Outcome::Skipped { skipped, reason } = anova.clone() else { unreachable!() };
                    (normality, anova, Outcome::Skipped { skipped, reason })
                }
                Ok(ranked) => {
                    let rank_means = ranked
                        .groups()
                        .into_iter()
                        .map(|(g, v)| (g.to_string(), v.iter().sum::<f64>() / v.len() as f64))
                        .collect();
                    let anova = ConditionAnova {
                        segment: STATS_SEGMENT.into(),
                        measure: measure.into(),
                        method: "art_oneway".into(),
                        result: oneway_anova(&ranked).into(),
                        rank_means,
                    };
                    (normality, Outcome::Done(anova), tukey_hsd(&ranked, m.stats.p_adjust).into())
                }
            }
        }
    };
    let rm = match &m.stats.scores {
        None => None,
        Some(rel) => {
            let path = study.base.join(rel);
            let bytes = fs::read(&path).map_err(Error::io(&path))?;
            let table = LongTable::read_csv(bytes.as_slice()).context(path.display().to_string())?;
            Some(rm_anova(&table).into())
        }
    };
    Ok(StatsReport { normality, anova, posthoc, rm_anova: rm })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub inputs_hash: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub generated_at: String,
    pub provenance: Provenance,
    pub manifest: StudyManifest,
    pub screening: Vec<ValidationReport>,
    pub component: Component,
    pub group_synchrony: Vec<ConditionSynchrony>,
    pub pair_summary: Option<Vec<PairSummary>>,
    pub normality: Vec<NormalityEntry>,
    pub anova: Outcome<ConditionAnova>,
    pub posthoc: Outcome<PosthocResult>,
    pub rm_anova: Option<Outcome<AnovaResult>>,
}

impl AnalysisReport {
    pub fn assemble(
        study: &Study,
        screening: Vec<ValidationReport>,
        group: Vec<ConditionSynchrony>,
        pairs: Option<&PairTable>,
        stats: StatsReport,
        generated_at: String,
    ) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            generated_at,
            provenance: Provenance {
                config_hash: study.config_hash(),
                inputs_hash: study.inputs_hash.clone(),
                tool_version: TOOL_VERSION.into(),
            },
            manifest: study.manifest.clone(),
            screening,
            component: study.manifest.analysis.component,
            group_synchrony: group,
            pair_summary: pairs.map(|p| summarize_pairs(study, p)),
            normality: stats.normality,
            anova: stats.anova,
            posthoc: stats.posthoc,
            rm_anova: stats.rm_anova,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn group_result(&self, condition: &str, segment: &str) -> Option<&SynchronyResult> {
        self.group_synchrony
            .iter()
            .find(|c| c.condition == condition)
            .and_then(|c| c.results.iter().find(|r| r.segment_label == segment))
    }
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// All analysis stages in memory on already-ingested cohorts.
pub fn analyze(study: &Study, ingested: &[IngestedCohort]) -> Result<(AnalysisReport, Option<PairTable>), Error> {
    let prepared = prepare(study, ingested)?;
    let group = group_stage(study, &prepared)?;
    let pairs = if study.manifest.analysis.pairwise { Some(pairs_stage(study, &prepared)?) } else { None };
    let stats = stats_stage(study, pairs.as_ref())?;
    let report = AnalysisReport::assemble(study, prepared.screening, group, pairs.as_ref(), stats, timestamp());
    Ok((report, pairs))
}

/// Run every stage from scratch; when `out` is given, write the report,
/// pair table, and every stage artifact there.
pub fn run_full_analysis(study: &Study, out: Option<&Path>) -> Result<AnalysisReport, Error> {
    match out {
        None => Ok(analyze(study, &ingest(study)?)?.0),
        Some(dir) => Workspace::new(study, dir)?.run_all(),
    }
}

/// Keyframe tracks for one cohort: EDA height tracks for every included
/// subject, then BVP scale tracks. Signals cover the closed interval
/// `[0, duration]`, so a 260 s cohort yields `260 * fps + 1` frames.
pub fn cohort_keyframes(
    study: &Study,
    cohort: &IngestedCohort,
    report: &ValidationReport,
) -> Result<Vec<KeyframeTrack<f64>>, Error> {
    let m = &study.manifest;
    let keep = |id: &str| m.analysis.keep_flagged || !report.is_flagged(id);
    let span = cohort.cohort.duration_s;
    let mut tracks: Vec<KeyframeTrack<f64>> = cohort
        .cohort
        .recordings
        .par_iter()
        .filter(|r| keep(&r.subject_id))
        .map(|rec| {
            let ctx = format!("{}/{}", cohort.cohort.label, rec.subject_id);
            let closed = align_to_timeline(rec, span + 1.0 / rec.sample_rate_hz);
            match rec.channel {
                ChannelKind::Eda => {
                    let clean = preprocess_pipeline(&closed, &m.preprocess).context(ctx.clone())?;
                    eda_to_height(
                        &rec.subject_id,
                        &clean.samples,
                        clean.sample_rate_hz,
                        m.keyframes.fps,
                        m.keyframes.height_bounds,
                    )
                    .context(ctx)
                }
                ChannelKind::Bvp => bvp_to_scale(
                    &rec.subject_id,
                    &closed.samples,
                    closed.sample_rate_hz,
                    m.keyframes.fps,
                    m.keyframes.scale_bounds,
                )
                .context(ctx),
            }
        })
        .collect::<Result<_, Error>>()?;
    let bvp = cohort
        .bvp
        .par_iter()
        .filter(|r| keep(&r.subject_id))
        .map(|rec| {
            let closed = align_to_timeline(rec, span + 1.0 / rec.sample_rate_hz);
            bvp_to_scale(
                &rec.subject_id,
                &closed.samples,
                closed.sample_rate_hz,
                m.keyframes.fps,
                m.keyframes.scale_bounds,
            )
            .context(format!("{}/{} bvp", cohort.cohort.label, rec.subject_id))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    tracks.extend(bvp);
    if tracks.is_empty() {
        return Err(Error::Viz { context: cohort.cohort.label.clone(), source: crate::vizmap::VizError::EmptyCohort });
    }
    Ok(tracks)
}

/// Write `<dir>/<cohort>.ndjson` for every cohort; returns the files.
pub fn export_keyframes(study: &Study, ingested: &[IngestedCohort], dir: &Path) -> Result<Vec<PathBuf>, Error> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let screening = screen(ingested);
    ingested
        .iter()
        .zip(&screening)
        .map(|(cohort, report)| {
            let tracks = cohort_keyframes(study, cohort, report)?;
            let path = dir.join(format!("{}.ndjson", cohort.cohort.label));
            let file = fs::File::create(&path).map_err(Error::io(&path))?;
            write_tracks(&tracks, file).context(path.display().to_string())?;
            Ok(path)
        })
        .collect()
}

/// Size the global worker pool. Only the first call takes effect.
pub fn init_thread_pool(threads: usize) -> bool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().is_ok()
}

/// A synthetic study held in memory, with the manifest `SynthStudy::write`
/// would produce. The inputs hash covers the generated samples.
pub fn synthetic_study(spec: &crate::synthgen::SynthStudy) -> Result<(Study, Vec<IngestedCohort>), Error> {
    let cohorts = spec.generate()?;
    let mut hasher = Sha256::new();
    let entries: Vec<CohortEntry> = cohorts
        .iter()
        .map(|c| {
            for rec in &c.recordings {
                for v in &rec.samples {
                    hasher.update(v.to_le_bytes());
                }
            }
            CohortEntry {
                label: c.label.clone(),
                duration_s: c.duration_s,
                rate_hz: c
                    .recordings
                    .first()
                    .map(|r| r.sample_rate_hz)
                    .filter(|r| *r != ChannelKind::Eda.nominal_rate_hz()),
                bvp_rate_hz: None,
                recordings: c
                    .recordings
                    .iter()
                    .map(|r| crate::dataset::RecordingEntry {
                        subject: r.subject_id.clone(),
                        path: format!("{}/{}.csv", c.label, r.subject_id),
                        bvp_path: None,
                    })
                    .collect(),
            }
        })
        .collect();
    let mut entries = entries.into_iter();
    let reference = entries.next().expect("reference cohort");
    let mut manifest = StudyManifest::new(reference, entries.collect());
    manifest.segments = crate::synthgen::concert_segments(spec.reference.duration_s);
    let study = Study { manifest, base: PathBuf::new(), inputs_hash: hex::encode(hasher.finalize()) };
    let ingested = cohorts.into_iter().map(|cohort| IngestedCohort { cohort, bvp: vec![] }).collect();
    Ok((study, ingested))
}
