//! Tonic (slow baseline) / phasic (fast residual) split of a cleaned EDA
//! trace.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::{Butterworth, PreprocessError};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecomposeError {
    #[error("tonic cutoff {cutoff_hz} Hz is not below the Nyquist frequency {nyquist_hz} Hz")]
    CutoffAboveNyquist { cutoff_hz: f64, nyquist_hz: f64 },
    #[error(transparent)]
    Filter(PreprocessError),
    #[error("invalid decomposition configuration: {0}")]
    InvalidConfig(String),
}

impl From<PreprocessError> for DecomposeError {
    fn from(err: PreprocessError) -> Self {
        match err {
            PreprocessError::CutoffAboveNyquist { cutoff_hz, nyquist_hz } => {
                DecomposeError::CutoffAboveNyquist { cutoff_hz, nyquist_hz }
            }
            other => DecomposeError::Filter(other),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecomposeMethod {
    /// Tonic = zero-phase 2nd-order low-pass; phasic = input - tonic.
    #[default]
    ComplementaryLowpass,
    /// Tonic = centered rolling median; phasic = input - tonic.
    MedianBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeConfig {
    pub method: DecomposeMethod,
    pub tonic_cutoff_hz: f64,
    pub median_window_s: f64,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self { method: DecomposeMethod::ComplementaryLowpass, tonic_cutoff_hz: 0.05, median_window_s: 8.0 }
    }
}

impl DecomposeConfig {
    pub fn check(&self) -> Result<(), DecomposeError> {
        if !(self.tonic_cutoff_hz > 0.0) || !(self.median_window_s > 0.0) {
            return Err(DecomposeError::InvalidConfig("cutoff and median window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdaComponents<T> {
    pub tonic: Vec<T>,
    pub phasic: Vec<T>,
    pub method: DecomposeMethod,
}

const TONIC_ORDER: usize = 2;

pub fn tonic_phasic_split<T: Real>(
    signal: &[T],
    rate_hz: f64,
    cfg: &DecomposeConfig,
) -> Result<EdaComponents<T>, DecomposeError> {
    cfg.check()?;
    let nyquist_hz = rate_hz / 2.0;
    if cfg.tonic_cutoff_hz >= nyquist_hz {
        return Err(DecomposeError::CutoffAboveNyquist { cutoff_hz: cfg.tonic_cutoff_hz, nyquist_hz });
    }
    let tonic = match cfg.method {
        DecomposeMethod::ComplementaryLowpass => {
            Butterworth::lowpass(TONIC_ORDER, cfg.tonic_cutoff_hz, rate_hz)?.filtfilt(signal)?
        }
        DecomposeMethod::MedianBaseline => rolling_median(signal, odd_width(cfg.median_window_s * rate_hz)),
    };
    let phasic = signal.iter().zip(&tonic).map(|(&x, &t)| x - t).collect();
    Ok(EdaComponents { tonic, phasic, method: cfg.method })
}

fn odd_width(samples: f64) -> usize {
    let w = (samples.round() as usize).max(1);
    w | 1
}

/// Centered rolling median, window truncated at the ends.
fn rolling_median<T: Real>(signal: &[T], width: usize) -> Vec<T> {
    let half = width / 2;
    let n = signal.len();
    let mut window: Vec<T> = Vec::with_capacity(width);
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            window.clear();
            window.extend_from_slice(&signal[lo..hi]);
            window.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            let m = window.len();
            if m % 2 == 1 {
                window[m / 2]
            } else {
                (window[m / 2 - 1] + window[m / 2]) / T::from_f64_lossy(2.0)
            }
        })
        .collect()
}

/// Sum of absolute first differences.
pub fn total_variation<T: Real>(signal: &[T]) -> f64 {
    signal.windows(2).map(|w| (w[1] - w[0]).abs().as_f64()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn sine(freq: f64, amp: f64, rate: f64, secs: f64) -> Vec<f64> {
        (0..(secs * rate) as usize).map(|i| amp * (TAU * freq * i as f64 / rate).sin()).collect()
    }

    fn rms(xs: &[f64]) -> f64 {
        (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
    }

    #[test]
    fn constant_has_no_phasic_part() {
        for method in [DecomposeMethod::ComplementaryLowpass, DecomposeMethod::MedianBaseline] {
            let cfg = DecomposeConfig { method, ..Default::default() };
            let c = tonic_phasic_split(&[0.4f64; 300], 10.0, &cfg).unwrap();
            assert!(c.tonic.iter().all(|v| (v - 0.4).abs() < 1e-12));
            assert!(c.phasic.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn ramp_is_tonic() {
        let rate = 10.0;
        let ramp: Vec<f64> = (0..600).map(|i| i as f64 / 599.0).collect();
        let c = tonic_phasic_split(&ramp, rate, &DecomposeConfig::default()).unwrap();
        let margin = (5.0 * rate) as usize;
        let inner = &c.phasic[margin..600 - margin];
        assert!(rms(inner) < 0.02, "phasic rms {}", rms(inner));
    }

    #[test]
    fn separates_slow_and_fast_sines() {
        let rate = 10.0;
        let slow = sine(0.01, 1.0, rate, 400.0);
        let fast = sine(0.5, 0.3, rate, 400.0);
        let mixed: Vec<f64> = slow.iter().zip(&fast).map(|(a, b)| a + b).collect();
        let c = tonic_phasic_split(&mixed, rate, &DecomposeConfig::default()).unwrap();
        let (lo, hi) = (500, 3500);
        let peak = c.tonic[lo..hi].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 0.05, "tonic amplitude {peak}");
        let err: Vec<f64> = (lo..hi).map(|i| c.phasic[i] - fast[i]).collect();
        assert!(rms(&err) < 0.05 * 0.3 / 2f64.sqrt() * 3.0, "phasic error {}", rms(&err));
    }

    #[test]
    fn cutoff_must_be_below_nyquist() {
        let cfg = DecomposeConfig { tonic_cutoff_hz: 6.0, ..Default::default() };
        assert!(matches!(
            tonic_phasic_split(&[0.0f64; 100], 10.0, &cfg),
            Err(DecomposeError::CutoffAboveNyquist { .. })
        ));
    }

    #[test]
    fn median_baseline_rejects_spikes() {
        let mut x = vec![1.0f64; 200];
        x[100] = 9.0;
        let cfg = DecomposeConfig { method: DecomposeMethod::MedianBaseline, ..Default::default() };
        let c = tonic_phasic_split(&x, 10.0, &cfg).unwrap();
        assert!(c.tonic.iter().all(|&v| v == 1.0));
        assert_eq!(c.phasic[100], 8.0);
    }

    #[test]
    fn works_in_single_precision() {
        let x: Vec<f32> = (0..400).map(|i| (i as f32 * 0.01).sin()).collect();
        let c = tonic_phasic_split(&x, 10.0, &DecomposeConfig::default()).unwrap();
        for ((t, p), v) in c.tonic.iter().zip(&c.phasic).zip(&x) {
            assert!((t + p - v).abs() < 1e-6);
        }
    }
}
