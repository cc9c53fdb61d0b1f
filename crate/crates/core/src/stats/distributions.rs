//! Distribution functions statrs does not provide: the studentized range
//! and the noncentral F, plus the noncentral-F inversion for effect-size
//! confidence intervals.

use std::sync::OnceLock;

use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

const GL_POINTS: usize = 20;

/// Gauss-Legendre nodes and weights on [-1, 1], found by Newton iteration
/// on the Legendre polynomial.
fn gauss_legendre() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_POINTS;
        (0..n)
            .map(|i| {
                let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
                let mut deriv = 0.0;
                for _ in 0..100 {
                    let (mut p0, mut p1) = (1.0, x);
                    for k in 2..=n {
                        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    deriv = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                    let step = p1 / deriv;
                    x -= step;
                    if step.abs() < 1e-16 {
                        break;
                    }
                }
                (x, 2.0 / ((1.0 - x * x) * deriv * deriv))
            })
            .collect()
    })
}

/// Composite Gauss-Legendre over `[a, b]` split into `panels` pieces.
pub(crate) fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let rule = gauss_legendre();
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        let half = 0.5 * width;
        total += half * rule.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>();
    }
    total
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `P(range of k iid N(0,1) > w)`.
fn normal_range_sf(w: f64, k: usize) -> f64 {
    if w <= 0.0 {
        return 1.0;
    }
    let km1 = (k - 1) as f64;
    // k * phi(z) * (Phi(z)^(k-1) - (Phi(z) - Phi(z-w))^(k-1)), written to avoid cancellation
    let integrand = |z: f64| {
        let a = normal_cdf(z);
        if a == 0.0 {
            return 0.0;
        }
        let d = normal_cdf(z - w);
        let ratio = (d / a).min(1.0);
        let tail = -(km1 * (-ratio).ln_1p()).exp_m1();
        k as f64 * normal_pdf(z) * a.powf(km1) * tail
    };
    integrate(integrand, -9.0, 9.0, 36).clamp(0.0, 1.0)
}

/// Upper tail of the studentized range distribution `P(Q > q)` for `k`
/// groups and `df` error degrees of freedom (`df = inf` allowed).
pub fn studentized_range_sf(q: f64, k: usize, df: f64) -> f64 {
    assert!(k >= 2, "studentized range needs at least two groups");
    if q <= 0.0 {
        return 1.0;
    }
    if !df.is_finite() || df > 1e5 {
        return normal_range_sf(q, k);
    }
    // s = sqrt(chi2_df / df) has log-density c + (df-1) ln s - df s^2 / 2
    let log_norm = 0.5 * df * df.ln() - ln_gamma(0.5 * df) - (0.5 * df - 1.0) * std::f64::consts::LN_2;
    let log_density = |s: f64| log_norm + (df - 1.0) * s.ln() - 0.5 * df * s * s;
    let mode = ((df - 1.0).max(0.0) / df).sqrt();
    let peak = if mode > 0.0 { log_density(mode) } else { log_norm };
    let spread = 1.0 / (2.0 * df).sqrt();
    let cut = 45.0;
    let mut hi = mode + spread;
    while log_density(hi) > peak - cut {
        hi += spread;
    }
    let mut lo = mode;
    while lo > 0.0 && log_density(lo) > peak - cut {
        lo = (lo - spread).max(0.0);
    }
    let value =
        integrate(|s| if s <= 0.0 { 0.0 } else { log_density(s).exp() * normal_range_sf(q * s, k) }, lo, hi, 48);
    value.clamp(0.0, 1.0)
}

/// `P(F' <= f)` for the noncentral F with noncentrality `lambda`, as a
/// Poisson mixture of regularized incomplete beta functions.
pub fn noncentral_f_cdf(f: f64, df1: f64, df2: f64, lambda: f64) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    let x = df1 * f / (df1 * f + df2);
    let half = 0.5 * lambda;
    if half == 0.0 {
        return beta_reg(0.5 * df1, 0.5 * df2, x);
    }
    let centre = half.floor();
    let reach = (12.0 * half.sqrt() + 40.0).ceil();
    let first = (centre - reach).max(0.0) as u64;
    let last = (centre + reach) as u64;
    let mut total = 0.0;
    for j in first..=last {
        let jf = j as f64;
        let log_w = -half + jf * half.ln() - ln_gamma(jf + 1.0);
        total += log_w.exp() * beta_reg(0.5 * df1 + jf, 0.5 * df2, x);
    }
    total.clamp(0.0, 1.0)
}

const CI_TOLERANCE: f64 = 1e-8;
/// Largest noncentrality searched; the Poisson mixture costs `O(sqrt(lambda))`.
const LAMBDA_MAX: f64 = 1e6;

/// Noncentrality `lambda` with `P(F' <= f_obs; lambda) = target`, 0 when
/// even `lambda = 0` falls below the target, `None` past [`LAMBDA_MAX`].
fn solve_noncentrality(f_obs: f64, df1: f64, df2: f64, target: f64) -> Option<f64> {
    let cdf = |lam: f64| noncentral_f_cdf(f_obs, df1, df2, lam);
    if cdf(0.0) <= target {
        return Some(0.0);
    }
    if cdf(LAMBDA_MAX) > target {
        return None;
    }
    let mut hi = (f_obs * df1).clamp(1.0, LAMBDA_MAX);
    while cdf(hi) > target {
        hi = (2.0 * hi).min(LAMBDA_MAX);
    }
    let mut lo = 0.0;
    while hi - lo > CI_TOLERANCE * (1.0 + lo) {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Confidence interval for partial eta-squared by inverting the noncentral
/// F in its noncentrality, mapped through `lambda / (lambda + df1 + df2 + 1)`.
/// Past the searchable noncentrality the bounds saturate outward.
pub fn partial_eta_sq_ci(f_obs: f64, df1: f64, df2: f64, level: f64) -> (f64, f64) {
    let alpha = 0.5 * (1.0 - level);
    let n = df1 + df2 + 1.0;
    let to_eta = |lam: f64| lam / (lam + n);
    let lo = solve_noncentrality(f_obs, df1, df2, 1.0 - alpha).map_or(to_eta(LAMBDA_MAX), to_eta);
    let hi = solve_noncentrality(f_obs, df1, df2, alpha).map_or(1.0, to_eta);
    (lo, hi)
}
