use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ChannelKind, SegmentSpec};
use crate::preprocess::PreprocessConfig;
use crate::stats::PAdjustMethod;
use crate::synchrony::{Component, DtwConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    UnsupportedSchema { found: u32 },
    #[error("invalid manifest: {0}")]
    Invalid(String),
    #[error("referenced file not found: {}", path.display())]
    MissingFile { path: PathBuf },
}

/// Study description: which files form which cohort and how to analyze them.
/// Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyManifest {
    pub schema_version: u32,
    #[serde(default = "default_channel")]
    pub channel: ChannelKind,
    pub reference: CohortEntry,
    pub probes: Vec<CohortEntry>,
    #[serde(default)]
    pub segments: SegmentSpec,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub dtw: DtwConfig,
    #[serde(default)]
    pub stats: StatsSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub keyframes: KeyframeSpec,
}

fn default_channel() -> ChannelKind {
    ChannelKind::Eda
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortEntry {
    pub label: String,
    pub duration_s: f64,
    /// Sample rate of the files; defaults to the channel's nominal rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bvp_rate_hz: Option<f64>,
    pub recordings: Vec<RecordingEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingEntry {
    pub subject: String,
    pub path: String,
    /// Optional companion BVP file, used only for keyframe export.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bvp_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsSpec {
    #[serde(default)]
    pub p_adjust: PAdjustMethod,
    /// Long-format CSV (`subject_id,group,value`) analyzed with a
    /// repeated-measures ANOVA, e.g. questionnaire change scores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<String>,
}

impl Default for StatsSpec {
    fn default() -> Self {
        Self { p_adjust: PAdjustMethod::Holm, scores: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub component: Component,
    #[serde(default = "yes")]
    pub pairwise: bool,
    #[serde(default)]
    pub keep_flagged: bool,
}

fn yes() -> bool {
    true
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self { component: Component::default(), pairwise: true, keep_flagged: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeSpec {
    #[serde(default = "default_fps")]
    pub fps: u32,
    #[serde(default = "default_height_bounds")]
    pub height_bounds: (f64, f64),
    #[serde(default = "default_scale_bounds")]
    pub scale_bounds: (f64, f64),
}

fn default_fps() -> u32 {
    30
}

fn default_height_bounds() -> (f64, f64) {
    (0.0, 1.0)
}

fn default_scale_bounds() -> (f64, f64) {
    (0.8, 1.2)
}

impl Default for KeyframeSpec {
    fn default() -> Self {
        Self { fps: default_fps(), height_bounds: default_height_bounds(), scale_bounds: default_scale_bounds() }
    }
}

impl StudyManifest {
    /// Current schema with every optional section at its default.
    pub fn new(reference: CohortEntry, probes: Vec<CohortEntry>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            channel: default_channel(),
            reference,
            probes,
            segments: SegmentSpec::default(),
            preprocess: PreprocessConfig::default(),
            dtw: DtwConfig::default(),
            stats: StatsSpec::default(),
            analysis: AnalysisSpec::default(),
            keyframes: KeyframeSpec::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        let manifest: Self = serde_json::from_str(text)?;
        manifest.check()?;
        Ok(manifest)
    }

    /// Read, parse, and check a manifest; also verifies every referenced
    /// file exists. Returns the manifest and its base directory.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), ManifestError> {
        let text = fs::read_to_string(path).map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })?;
        let manifest = Self::from_json(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for file in manifest.referenced_files(&base) {
            if !file.is_file() {
                return Err(ManifestError::MissingFile { path: file });
            }
        }
        Ok((manifest, base))
    }

    pub fn cohorts(&self) -> impl Iterator<Item = &CohortEntry> {
        std::iter::once(&self.reference).chain(self.probes.iter())
    }

    pub fn referenced_files(&self, base: &Path) -> Vec<PathBuf> {
        let mut files: Vec<PathBuf> = self
            .cohorts()
            .flat_map(|c| c.recordings.iter())
            .flat_map(|r| std::iter::once(&r.path).chain(r.bvp_path.iter()))
            .map(|p| base.join(p))
            .collect();
        if let Some(scores) = &self.stats.scores {
            files.push(base.join(scores));
        }
        files
    }

    fn check(&self) -> Result<(), ManifestError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ManifestError::UnsupportedSchema { found: self.schema_version });
        }
        if self.probes.is_empty() {
            return Err(ManifestError::Invalid("at least one probe cohort is required".into()));
        }
        let mut labels = BTreeSet::new();
        for cohort in self.cohorts() {
            if !labels.insert(cohort.label.as_str()) {
                return Err(ManifestError::Invalid(format!("duplicate cohort label {:?}", cohort.label)));
            }
            if cohort.recordings.is_empty() {
                return Err(ManifestError::Invalid(format!("cohort {:?} has no recordings", cohort.label)));
            }
            if !(cohort.duration_s.is_finite() && cohort.duration_s > 0.0) {
                return Err(ManifestError::Invalid(format!("cohort {:?} duration must be positive", cohort.label)));
            }
            if cohort.duration_s != self.reference.duration_s {
                return Err(ManifestError::Invalid(format!(
                    "cohort {:?} duration {} differs from reference duration {}",
                    cohort.label, cohort.duration_s, self.reference.duration_s
                )));
            }
            for rate in cohort.rate_hz.iter().chain(cohort.bvp_rate_hz.iter()) {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(ManifestError::Invalid(format!("cohort {:?} has non-positive rate", cohort.label)));
                }
            }
            let mut subjects = BTreeSet::new();
            for rec in &cohort.recordings {
                if !subjects.insert(rec.subject.as_str()) {
                    return Err(ManifestError::Invalid(format!(
                        "duplicate subject {:?} in cohort {:?}",
                        rec.subject, cohort.label
                    )));
                }
            }
        }
        self.segments.validate(self.reference.duration_s).map_err(|e| ManifestError::Invalid(e.to_string()))?;
        self.preprocess.check().map_err(|e| ManifestError::Invalid(e.to_string()))?;
        let (lo, hi) = self.keyframes.height_bounds;
        let (slo, shi) = self.keyframes.scale_bounds;
        if self.keyframes.fps == 0 || !(lo < hi) || !(slo < shi) {
            return Err(ManifestError::Invalid("keyframe fps must be positive and bounds ascending".into()));
        }
        Ok(())
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("manifest serializes")
    }
}
