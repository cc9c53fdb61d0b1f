//! Dynamic time warping with unit-weight symmetric steps and an optional
//! Sakoe-Chiba band.
//!
//! Path recovery prefers the diagonal predecessor, then `(i, j-1)`, then
//! `(i-1, j)`. The distance-only routine carries the recovered path length
//! forward through the DP with the same preference, so it needs two rows
//! of memory and still reports the exact path length.

use serde::{Deserialize, Serialize};

use super::SynchronyError;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalCost {
    #[default]
    AbsDiff,
    SquaredDiff,
}

impl LocalCost {
    #[inline(always)]
    fn eval(self, a: f64, b: f64) -> f64 {
        match self {
            LocalCost::AbsDiff => (a - b).abs(),
            LocalCost::SquaredDiff => (a - b) * (a - b),
        }
    }
}

/// Steps `(1,0)`, `(0,1)`, `(1,1)`, all with weight 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPattern {
    #[default]
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtwConfig {
    pub local_cost: LocalCost,
    pub step: StepPattern,
    /// Sakoe-Chiba radius: cell `(i, j)` is admissible iff `|i - j| <= r`.
    pub band_radius: Option<usize>,
    /// Whether [`DtwDistance::value`] reports the path-normalized distance.
    pub normalize_by_path: bool,
}

impl Default for DtwConfig {
    fn default() -> Self {
        Self {
            local_cost: LocalCost::AbsDiff,
            step: StepPattern::Symmetric,
            band_radius: None,
            normalize_by_path: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtwDistance {
    pub raw: f64,
    pub normalized: f64,
    pub path_length: usize,
}

impl DtwDistance {
    pub fn value(&self, cfg: &DtwConfig) -> f64 {
        if cfg.normalize_by_path {
            self.normalized
        } else {
            self.raw
        }
    }
}

fn check_inputs(n: usize, m: usize, cfg: &DtwConfig) -> Result<(), SynchronyError> {
    if n == 0 || m == 0 {
        return Err(SynchronyError::EmptyInput);
    }
    if let Some(r) = cfg.band_radius {
        if r < n.abs_diff(m) {
            return Err(SynchronyError::InfeasibleBand { radius: r, len_x: n, len_y: m });
        }
    }
    Ok(())
}

#[inline]
fn band(i: usize, m: usize, radius: Option<usize>) -> (usize, usize) {
    match radius {
        Some(r) => (i.saturating_sub(r), (i + r).min(m - 1)),
        None => (0, m - 1),
    }
}

/// DTW distance using `O(len(y))` memory.
pub fn dtw_distance<T: Real>(x: &[T], y: &[T], cfg: &DtwConfig) -> Result<DtwDistance, SynchronyError> {
    let (n, m) = (x.len(), y.len());
    check_inputs(n, m, cfg)?;
    let xs: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
    let ys: Vec<f64> = y.iter().map(|v| v.as_f64()).collect();
    let cost = cfg.local_cost;

    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    let mut prev_len = vec![0u32; m];
    let mut cur_len = vec![0u32; m];

    // row 0: only horizontal moves
    let (_, hi0) = band(0, m, cfg.band_radius);
    let mut acc = 0.0;
    for j in 0..=hi0 {
        acc += cost.eval(xs[0], ys[j]);
        prev[j] = acc;
        prev_len[j] = j as u32 + 1;
    }

    for (i, &xi) in xs.iter().enumerate().skip(1) {
        let (lo, hi) = band(i, m, cfg.band_radius);
        if lo > 0 {
            cur[lo - 1] = f64::INFINITY;
        }
        let mut j = lo;
        if lo == 0 {
            cur[0] = cost.eval(xi, ys[0]) + prev[0];
            cur_len[0] = prev_len[0] + 1;
            j = 1;
        }
        while j <= hi {
            let mut best = prev[j - 1];
            let mut len = prev_len[j - 1];
            let left = cur[j - 1];
            if left < best {
                best = left;
                len = cur_len[j - 1];
            }
            let up = prev[j];
            if up < best {
                best = up;
                len = prev_len[j];
            }
            cur[j] = cost.eval(xi, ys[j]) + best;
            cur_len[j] = len + 1;
            j += 1;
        }
        if hi + 1 < m {
            cur[hi + 1] = f64::INFINITY;
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut prev_len, &mut cur_len);
    }

    let raw = prev[m - 1];
    let path_length = prev_len[m - 1] as usize;
    Ok(DtwDistance { raw, normalized: raw / path_length as f64, path_length })
}

/// DTW distance plus the warping path from `(0, 0)` to `(n-1, m-1)`,
/// using the full `n * m` accumulated-cost matrix.
pub fn dtw_path<T: Real>(
    x: &[T],
    y: &[T],
    cfg: &DtwConfig,
) -> Result<(DtwDistance, Vec<(usize, usize)>), SynchronyError> {
    let (n, m) = (x.len(), y.len());
    check_inputs(n, m, cfg)?;
    let cost = cfg.local_cost;
    let mut acc = vec![f64::INFINITY; n * m];
    let at = |i: usize, j: usize| i * m + j;
    for i in 0..n {
        let (lo, hi) = band(i, m, cfg.band_radius);
        let xi = x[i].as_f64();
        for j in lo..=hi {
            let c = cost.eval(xi, y[j].as_f64());
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => acc[at(0, j - 1)],
                (_, 0) => acc[at(i - 1, 0)],
                _ => {
                    let mut b = acc[at(i - 1, j - 1)];
                    let left = acc[at(i, j - 1)];
                    if left < b {
                        b = left;
                    }
                    let up = acc[at(i - 1, j)];
                    if up < b {
                        b = up;
                    }
                    b
                }
            };
            acc[at(i, j)] = c + best;
        }
    }

    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        (i, j) = match (i, j) {
            (0, _) => (0, j - 1),
            (_, 0) => (i - 1, 0),
            _ => {
                let mut step = (i - 1, j - 1);
                if acc[at(i, j - 1)] < acc[at(step.0, step.1)] {
                    step = (i, j - 1);
                }
                if acc[at(i - 1, j)] < acc[at(step.0, step.1)] {
                    step = (i - 1, j);
                }
                step
            }
        };
        path.push((i, j));
    }
    path.reverse();

    let raw = acc[at(n - 1, m - 1)];
    let path_length = path.len();
    Ok((DtwDistance { raw, normalized: raw / path_length as f64, path_length }, path))
}
