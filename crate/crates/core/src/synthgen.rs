//! Synthetic cohorts with known alignment to a base arousal profile.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ChannelKind, Cohort, CohortEntry, Recording, RecordingEntry, SegmentSpec, StudyManifest};
use crate::preprocess::Butterworth;
use crate::scalar::Real;

/// Corner frequency of the noise smoother.
pub const NOISE_CUTOFF_HZ: f64 = 0.5;

const CONCERT_LENGTH_S: f64 = 260.0;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseProfile {
    /// Decay from 1.0 to 0.4 over 0-100 s, raised-cosine bump to 0.8 at
    /// 130 s, decay to 0.2 by 260 s. Times stretch with the duration.
    ConcertLike,
    Flat,
    /// Values on the config's sample grid; linearly interpolated, ends held.
    Custom(Vec<f64>),
}

impl BaseProfile {
    pub fn value_at(&self, t_s: f64, duration_s: f64, rate_hz: f64) -> f64 {
        match self {
            BaseProfile::ConcertLike => concert_like(t_s * CONCERT_LENGTH_S / duration_s),
            BaseProfile::Flat => 0.5,
            BaseProfile::Custom(values) => {
                let pos = (t_s * rate_hz).max(0.0);
                let i = pos.floor() as usize;
                if i + 1 >= values.len() {
                    return values[values.len() - 1];
                }
                let frac = pos - i as f64;
                values[i] + frac * (values[i + 1] - values[i])
            }
        }
    }
}

fn concert_like(t: f64) -> f64 {
    let t = t.clamp(0.0, CONCERT_LENGTH_S);
    if t < 100.0 {
        1.0 - 0.6 * t / 100.0
    } else if t < 160.0 {
        let phase = std::f64::consts::TAU * (t - 100.0) / 60.0;
        0.4 + 0.4 * (1.0 - phase.cos()) / 2.0
    } else {
        0.4 - 0.2 * (t - 160.0) / 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub label: String,
    pub n_subjects: usize,
    pub duration_s: f64,
    pub rate_hz: f64,
    pub base_profile: BaseProfile,
    pub noise_sigma: f64,
    pub lag_max_s: f64,
    pub subject_gain_range: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            label: "synthetic".into(),
            n_subjects: 20,
            duration_s: 260.0,
            rate_hz: 10.0,
            base_profile: BaseProfile::ConcertLike,
            noise_sigma: 0.1,
            lag_max_s: 0.0,
            subject_gain_range: (1.0, 1.0),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.rate_hz).round() as usize
    }

    pub fn check(&self) -> Result<(), SynthError> {
        let bad = |msg: &str| Err(SynthError::InvalidConfig(msg.into()));
        if self.n_subjects == 0 {
            return bad("n_subjects must be positive");
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad("duration_s must be positive");
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > 2.0 * NOISE_CUTOFF_HZ) {
            return bad("rate_hz must exceed twice the noise cutoff");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative");
        }
        if !(self.lag_max_s.is_finite() && self.lag_max_s >= 0.0) {
            return bad("lag_max_s must be non-negative");
        }
        let (lo, hi) = self.subject_gain_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad("subject_gain_range must be finite with lo <= hi");
        }
        if let BaseProfile::Custom(values) = &self.base_profile {
            if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return bad("custom profile must be non-empty and finite");
            }
        }
        if self.n_samples() < 2 {
            return bad("duration too short for the sample rate");
        }
        Ok(())
    }
}

/// The noiseless profile on the config's sample grid.
pub fn base_series(cfg: &SynthConfig) -> Vec<f64> {
    (0..cfg.n_samples())
        .map(|i| cfg.base_profile.value_at(i as f64 / cfg.rate_hz, cfg.duration_s, cfg.rate_hz))
        .collect()
}

/// Each subject is `gain * base(t - lag) + noise`, with the noise low-passed
/// and rescaled to sample standard deviation `noise_sigma`. Subject `k`
/// draws from its own ChaCha stream, so the output does not depend on
/// generation order.
pub fn gen_cohort<T: Real>(cfg: &SynthConfig) -> Result<Cohort<T>, SynthError> {
    cfg.check()?;
    let smoother =
        Butterworth::lowpass(2, NOISE_CUTOFF_HZ, cfg.rate_hz).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let n = cfg.n_samples();
    let recordings = (0..cfg.n_subjects)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let lag = if cfg.lag_max_s > 0.0 { rng.random_range(0.0..=cfg.lag_max_s) } else { 0.0 };
            let (lo, hi) = cfg.subject_gain_range;
            let gain = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let noise = smooth_noise(&mut rng, n, cfg.noise_sigma, &smoother)?;
            let samples = (0..n)
                .map(|i| {
                    let t = i as f64 / cfg.rate_hz - lag;
                    T::from_f64_lossy(gain * cfg.base_profile.value_at(t, cfg.duration_s, cfg.rate_hz) + noise[i])
                })
                .collect();
            Recording::new(subject_name(&cfg.label, k), ChannelKind::Eda, cfg.rate_hz, samples)
                .map_err(|e| SynthError::InvalidConfig(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Cohort {
        label: cfg.label.clone(),
        recordings,
        duration_s: cfg.duration_s,
        segments: concert_segments(cfg.duration_s),
    })
}

fn subject_name(label: &str, k: usize) -> String {
    format!("{label}_{:03}", k + 1)
}

fn smooth_noise(rng: &mut ChaCha8Rng, n: usize, sigma: f64, smoother: &Butterworth) -> Result<Vec<f64>, SynthError> {
    // draw even when sigma is zero so the stream layout stays fixed
    let white: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    if sigma == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let smooth = smoother.filtfilt(&white).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let mean = smooth.iter().sum::<f64>() / n as f64;
    let sd = (smooth.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    Ok(smooth.iter().map(|v| (v - mean) / sd * sigma).collect())
}

/// Write each recording as `<dir>/<subject>.csv` in the `timestamp_ms,value`
/// format and return the matching manifest entry with paths relative to
/// `base`.
pub fn write_cohort<T: Real>(cohort: &Cohort<T>, base: &Path, dir: &str) -> io::Result<CohortEntry> {
    fs::create_dir_all(base.join(dir))?;
    let mut entries = Vec::with_capacity(cohort.recordings.len());
    for rec in &cohort.recordings {
        let rel = format!("{dir}/{}.csv", rec.subject_id);
        let mut out = io::BufWriter::new(fs::File::create(base.join(&rel))?);
        writeln!(out, "timestamp_ms,value")?;
        for (i, v) in rec.samples.iter().enumerate() {
            let ts = (rec.t0_offset_s + i as f64 / rec.sample_rate_hz) * 1000.0;
            writeln!(out, "{},{}", ts, v.as_f64())?;
        }
        out.flush()?;
        entries.push(RecordingEntry { subject: rec.subject_id.clone(), path: rel, bvp_path: None });
    }
    let rate = cohort.recordings.first().map(|r| r.sample_rate_hz);
    Ok(CohortEntry {
        label: cohort.label.clone(),
        duration_s: cohort.duration_s,
        rate_hz: rate.filter(|r| *r != ChannelKind::Eda.nominal_rate_hz()),
        bvp_rate_hz: None,
        recordings: entries,
    })
}

/// The default segment boundaries stretched from 260 s to `duration_s`.
pub fn concert_segments(duration_s: f64) -> SegmentSpec {
    let scale = duration_s / CONCERT_LENGTH_S;
    let mut spec = SegmentSpec::default();
    for seg in &mut spec.segments {
        seg.start_s *= scale;
        seg.end_s *= scale;
        if duration_s != CONCERT_LENGTH_S {
            seg.label = format!("{:.1}-{:.1}s", seg.start_s, seg.end_s);
        }
    }
    spec
}

/// A reference cohort plus probe cohorts, written together as a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthStudy {
    pub reference: SynthConfig,
    pub probes: Vec<SynthConfig>,
}

impl SynthStudy {
    /// Reference of 40 plus probes of 21, 20, and 21 subjects at noise
    /// 0.1, 0.25, and 0.5; cohort `i` is seeded with `seed * 1000 + i`.
    pub fn three_conditions(seed: u64) -> Self {
        let cohort = |label: &str, n: usize, sigma: f64, i: u64| SynthConfig {
            label: label.into(),
            n_subjects: n,
            noise_sigma: sigma,
            lag_max_s: 2.0,
            subject_gain_range: (0.8, 1.2),
            seed: seed.wrapping_mul(1000).wrapping_add(i),
            ..Default::default()
        };
        Self {
            reference: cohort("reference", 40, 0.1, 0),
            probes: vec![cohort("low", 21, 0.1, 1), cohort("med", 20, 0.25, 2), cohort("high", 21, 0.5, 3)],
        }
    }

    pub fn configs(&self) -> impl Iterator<Item = &SynthConfig> {
        std::iter::once(&self.reference).chain(self.probes.iter())
    }

    pub fn generate(&self) -> Result<Vec<Cohort<f64>>, SynthError> {
        self.configs().map(gen_cohort).collect()
    }

    /// Write every cohort under `dir/<label>/` and a `manifest.json` that
    /// references them; returns the manifest.
    pub fn write(&self, dir: &Path) -> Result<StudyManifest, SynthWriteError> {
        let durations: Vec<f64> = self.configs().map(|c| c.duration_s).collect();
        if self.probes.is_empty() || durations.iter().any(|d| *d != durations[0]) {
            return Err(SynthError::InvalidConfig("a study needs probes and one shared duration".into()).into());
        }
        let mut entries = Vec::new();
        for cohort in self.generate()? {
            entries.push(write_cohort(&cohort, dir, &cohort.label)?);
        }
        let mut entries = entries.into_iter();
        let reference = entries.next().expect("reference cohort");
        let mut manifest = StudyManifest::new(reference, entries.collect());
        manifest.segments = concert_segments(durations[0]);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(manifest)
    }
}

#[derive(Debug, Error)]
pub enum SynthWriteError {
    #[error(transparent)]
    Config(#[from] SynthError),
    #[error(transparent)]
    Io(#[from] io::Error),
}
