#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

pub fn fixture(name: &str) -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

pub fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_series(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random::<f64>()).collect()
}

/// DTW by direct recursion over the last step of every monotone path,
/// memoized on the cell.
pub fn dtw_brute_force(x: &[f64], y: &[f64]) -> f64 {
    fn go(i: usize, j: usize, x: &[f64], y: &[f64], memo: &mut HashMap<(usize, usize), f64>) -> f64 {
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let cost = (x[i] - y[j]).abs();
        let v = match (i, j) {
            (0, 0) => cost,
            (0, _) => cost + go(0, j - 1, x, y, memo),
            (_, 0) => cost + go(i - 1, 0, x, y, memo),
            _ => {
                let a = go(i - 1, j - 1, x, y, memo);
                let b = go(i, j - 1, x, y, memo);
                let c = go(i - 1, j, x, y, memo);
                cost + a.min(b).min(c)
            }
        };
        memo.insert((i, j), v);
        v
    }
    go(x.len() - 1, y.len() - 1, x, y, &mut HashMap::new())
}

pub fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}
