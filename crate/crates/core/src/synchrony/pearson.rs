use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::SynchronyError;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided p-value against the t distribution with `df` degrees of freedom.
    pub p: f64,
    pub df: usize,
}

/// Product-moment correlation with `df = n - 2`.
pub fn pearson<T: Real>(x: &[T], y: &[T]) -> Result<Correlation, SynchronyError> {
    if x.len() != y.len() {
        return Err(SynchronyError::LengthMismatch { left: x.len(), right: y.len() });
    }
    let n = x.len();
    if n < 3 {
        return Err(SynchronyError::TooFewSamples { len: n, min: 3 });
    }
    let xs: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
    let ys: Vec<f64> = y.iter().map(|v| v.as_f64()).collect();
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in xs.iter().zip(&ys) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(SynchronyError::ConstantInput);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = n - 2;
    Ok(Correlation { r, p: correlation_p_value(r, df), df })
}

pub fn correlation_p_value(r: f64, df: usize) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df as f64 / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    (2.0 * dist.cdf(-t.abs())).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_examples() {
        let c = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert_eq!((c.r, c.p, c.df), (1.0, 0.0, 1));
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().r, -1.0);
        let c = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((c.r - 0.8).abs() < 1e-12);
        assert_eq!(c.df, 2);
        // t = 0.8 * sqrt(2 / 0.36); two-sided p from t(2) has the closed form 1 - t / sqrt(2 + t^2)
        let t = 0.8 * (2.0f64 / 0.36).sqrt();
        assert!((c.p - (1.0 - t / (2.0 + t * t).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn degrees_of_freedom_for_260_samples() {
        let x: Vec<f64> = (0..260).map(|i| (i as f64 * 0.1).sin()).collect();
        let y: Vec<f64> = (0..260).map(|i| (i as f64 * 0.1).sin() + 0.1 * (i as f64).cos()).collect();
        assert_eq!(pearson(&x, &y).unwrap().df, 258);
    }

    #[test]
    fn errors() {
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0, 3.0]), Err(SynchronyError::LengthMismatch { .. })));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(SynchronyError::TooFewSamples { .. })));
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(SynchronyError::ConstantInput));
    }
}
