use serde::{Deserialize, Serialize};

use super::distributions::studentized_range_sf;
use super::{cohens_d, mean, p_adjust, LongTable, PAdjustMethod, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub group_a: String,
    pub group_b: String,
    /// `mean(group_a) - mean(group_b)`.
    pub mean_diff: f64,
    pub q: f64,
    /// Studentized-range (Tukey-Kramer) p-value.
    pub p_raw: f64,
    /// `p_raw` after the family-wise adjustment in [`PosthocResult::method`].
    pub p_adjusted: f64,
    pub cohens_d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosthocResult {
    pub method: PAdjustMethod,
    pub df_within: usize,
    pub comparisons: Vec<PairwiseComparison>,
}

/// All-pairs Tukey HSD (Tukey-Kramer standard errors for unequal sizes).
/// Groups are compared in label order.
pub fn tukey_hsd(table: &LongTable, method: PAdjustMethod) -> Result<PosthocResult, StatsError> {
    table.check_finite()?;
    let groups = table.groups();
    let k = groups.len();
    if k < 2 {
        return Err(StatsError::DegenerateDesign(format!("{k} group(s); need at least 2")));
    }
    if let Some((label, _)) = groups.iter().find(|(_, v)| v.len() < 2) {
        return Err(StatsError::DegenerateDesign(format!("group {label:?} has fewer than 2 observations")));
    }
    let n_total: usize = groups.values().map(Vec::len).sum();
    let df_within = n_total - k;
    let ss_within: f64 = groups
        .values()
        .map(|v| {
            let m = mean(v);
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        })
        .sum();
    let ms_within = ss_within / df_within as f64;
    if !(ms_within > 0.0) {
        return Err(StatsError::ZeroVariance);
    }

    let entries: Vec<(&str, &Vec<f64>)> = groups.iter().map(|(k, v)| (*k, v)).collect();
    let mut comparisons = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let (la, a) = entries[i];
            let (lb, b) = entries[j];
            let mean_diff = mean(a) - mean(b);
            let se = (0.5 * ms_within * (1.0 / a.len() as f64 + 1.0 / b.len() as f64)).sqrt();
            let q = mean_diff.abs() / se;
            let d = cohens_d(a, b).unwrap_or(0.0);
            comparisons.push(PairwiseComparison {
                group_a: la.to_string(),
                group_b: lb.to_string(),
                mean_diff,
                q,
                p_raw: studentized_range_sf(q, k, df_within as f64),
                p_adjusted: 0.0,
                cohens_d: d,
            });
        }
    }
    let raw: Vec<f64> = comparisons.iter().map(|c| c.p_raw).collect();
    for (c, adj) in comparisons.iter_mut().zip(p_adjust(&raw, method)?) {
        c.p_adjusted = adj;
    }
    Ok(PosthocResult { method, df_within, comparisons })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_groups_have_unit_p() {
        let g = [1.0, 2.0, 4.0, 7.0];
        let t = LongTable::from_groups([("a", &g[..]), ("b", &g[..]), ("c", &g[..])]);
        let r = tukey_hsd(&t, PAdjustMethod::Holm).unwrap();
        assert_eq!(r.comparisons.len(), 3);
        for c in &r.comparisons {
            assert!((c.p_raw - 1.0).abs() < 1e-6);
            assert_eq!(c.mean_diff, 0.0);
        }
    }

    #[test]
    fn sign_convention_follows_label_order() {
        let t = LongTable::from_groups([("b", &[5.0, 6.0, 7.0][..]), ("a", &[1.0, 2.0, 3.0][..])]);
        let r = tukey_hsd(&t, PAdjustMethod::FdrBh).unwrap();
        let c = &r.comparisons[0];
        assert_eq!((c.group_a.as_str(), c.group_b.as_str()), ("a", "b"));
        assert_eq!(c.mean_diff, -4.0);
        assert_eq!(c.cohens_d, -4.0);
        assert!(c.p_adjusted >= c.p_raw);
    }
}
