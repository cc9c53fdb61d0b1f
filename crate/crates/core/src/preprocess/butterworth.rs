//! Digital Butterworth low-pass design (bilinear transform with frequency
//! prewarping) realized as a cascade of biquads, plus forward-backward
//! application.

use std::f64::consts::PI;

use super::PreprocessError;
use crate::scalar::Real;

/// One second-order section, `a[0] == 1`. First-order sections keep
/// `b[2] == a[2] == 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    /// Direct-form-II-transposed state that holds the section at rest for a
    /// constant input `level`.
    fn steady_state(&self, level: f64) -> [f64; 2] {
        let y = self.dc_gain() * level;
        [y - self.b[0] * level, self.b[2] * level - self.a[2] * y]
    }

    fn run(&self, signal: &mut [f64], mut state: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        for x in signal.iter_mut() {
            let input = *x;
            let y = b0 * input + state[0];
            state[0] = b1 * input - a1 * y + state[1];
            state[1] = b2 * input - a2 * y;
            *x = y;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    pub order: usize,
    pub sections: Vec<Biquad>,
}

impl Butterworth {
    pub fn lowpass(order: usize, cutoff_hz: f64, rate_hz: f64) -> Result<Self, PreprocessError> {
        if order == 0 {
            return Err(PreprocessError::InvalidConfig("filter order must be at least 1".into()));
        }
        let nyquist = rate_hz / 2.0;
        if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
            return Err(PreprocessError::CutoffAboveNyquist { cutoff_hz, nyquist_hz: nyquist });
        }
        // prewarped analog cutoff, normalized so the prototype sits at 1 rad/s
        let k = (PI * cutoff_hz / rate_hz).tan();
        let k2 = k * k;
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for pair in 0..order / 2 {
            let theta = PI * (2 * pair + 1) as f64 / (2 * order) as f64;
            let inv_q = 2.0 * theta.sin();
            let norm = 1.0 / (1.0 + k * inv_q + k2);
            let b0 = k2 * norm;
            sections.push(Biquad {
                b: [b0, 2.0 * b0, b0],
                a: [1.0, 2.0 * (k2 - 1.0) * norm, (1.0 - k * inv_q + k2) * norm],
            });
        }
        if order % 2 == 1 {
            let b0 = k / (k + 1.0);
            sections.push(Biquad { b: [b0, b0, 0.0], a: [1.0, (k - 1.0) / (k + 1.0), 0.0] });
        }
        Ok(Self { order, sections })
    }

    /// Magnitude of the single-pass frequency response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / rate_hz;
        self.sections
            .iter()
            .map(|s| {
                let eval = |c: &[f64; 3]| {
                    let re = c[0] + c[1] * w.cos() + c[2] * (2.0 * w).cos();
                    let im = -(c[1] * w.sin() + c[2] * (2.0 * w).sin());
                    re.hypot(im)
                };
                eval(&s.b) / eval(&s.a)
            })
            .product()
    }

    /// Extension length used on each side by [`Butterworth::filtfilt`].
    pub fn pad_len(&self) -> usize {
        3 * (self.order + 1)
    }

    fn run_cascade(&self, signal: &mut [f64]) {
        let mut level = signal.first().copied().unwrap_or(0.0);
        for section in &self.sections {
            section.run(signal, section.steady_state(level));
            level *= section.dc_gain();
        }
    }

    fn check_len(&self, len: usize) -> Result<(), PreprocessError> {
        let min = self.pad_len();
        if len < min {
            return Err(PreprocessError::SignalTooShort { len, min });
        }
        Ok(())
    }

    /// Causal single pass, started at rest on the first sample.
    pub fn filter<T: Real>(&self, signal: &[T]) -> Result<Vec<T>, PreprocessError> {
        self.check_len(signal.len())?;
        let mut work: Vec<f64> = signal.iter().map(|v| v.as_f64()).collect();
        self.run_cascade(&mut work);
        Ok(work.into_iter().map(T::from_f64_lossy).collect())
    }

    /// Zero-phase forward-backward pass over an odd (point-reflected)
    /// extension of the signal.
    pub fn filtfilt<T: Real>(&self, signal: &[T]) -> Result<Vec<T>, PreprocessError> {
        let n = signal.len();
        self.check_len(n)?;
        let x: Vec<f64> = signal.iter().map(|v| v.as_f64()).collect();
        let pad = self.pad_len().min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(&x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        self.run_cascade(&mut ext);
        ext.reverse();
        self.run_cascade(&mut ext);
        ext.reverse();
        Ok(ext[pad..pad + n].iter().map(|&v| T::from_f64_lossy(v)).collect())
    }
}
