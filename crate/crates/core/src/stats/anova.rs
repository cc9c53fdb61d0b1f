use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::distributions::partial_eta_sq_ci;
use super::{mean, LongTable, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p: f64,
    pub partial_eta_sq: f64,
    pub eta_ci_90: (f64, f64),
    /// Effect sum of squares.
    pub ss_effect: f64,
    /// Error sum of squares for the effect's F test.
    pub ss_error: f64,
}

impl AnovaResult {
    fn from_sums(ss_effect: f64, ss_error: f64, df_effect: usize, df_error: usize) -> Result<Self, StatsError> {
        let (f, p) = if ss_effect == 0.0 {
            (0.0, 1.0)
        } else if ss_error <= 0.0 {
            return Err(StatsError::ZeroVariance);
        } else {
            let f = (ss_effect / df_effect as f64) / (ss_error / df_error as f64);
            let dist = FisherSnedecor::new(df_effect as f64, df_error as f64).expect("positive df");
            (f, dist.sf(f))
        };
        let partial_eta_sq = if ss_effect == 0.0 { 0.0 } else { ss_effect / (ss_effect + ss_error) };
        Ok(Self {
            f,
            df_between: df_effect,
            df_within: df_error,
            p,
            partial_eta_sq,
            eta_ci_90: partial_eta_sq_ci(f, df_effect as f64, df_error as f64, 0.90),
            ss_effect,
            ss_error,
        })
    }
}

/// Between-subjects one-way ANOVA over the table's groups.
pub fn oneway_anova(table: &LongTable) -> Result<AnovaResult, StatsError> {
    table.check_finite()?;
    let groups = table.groups();
    if groups.len() < 2 {
        return Err(StatsError::DegenerateDesign(format!("{} group(s); need at least 2", groups.len())));
    }
    if let Some((label, _)) = groups.iter().find(|(_, v)| v.len() < 2) {
        return Err(StatsError::DegenerateDesign(format!("group {label:?} has fewer than 2 observations")));
    }
    let n_total: usize = groups.values().map(Vec::len).sum();
    let grand = groups.values().flatten().sum::<f64>() / n_total as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for values in groups.values() {
        let m = mean(values);
        ss_between += values.len() as f64 * (m - grand).powi(2);
        ss_within += values.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    AnovaResult::from_sums(ss_between, ss_within, groups.len() - 1, n_total - groups.len())
}

/// One-way repeated-measures ANOVA: condition effect tested against the
/// condition-by-subject residual. Every subject must contribute exactly one
/// value per condition.
pub fn rm_anova(table: &LongTable) -> Result<AnovaResult, StatsError> {
    table.check_finite()?;
    let conditions: BTreeSet<&str> = table.rows.iter().map(|r| r.group.as_str()).collect();
    let mut cells: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for row in &table.rows {
        let slot = cells.entry(row.subject_id.as_str()).or_default();
        if slot.insert(row.group.as_str(), row.value).is_some() {
            return Err(StatsError::IncompleteDesign(format!(
                "subject {:?} has repeated condition {:?}",
                row.subject_id, row.group
            )));
        }
    }
    if let Some((subject, _)) = cells.iter().find(|(_, c)| c.len() != conditions.len()) {
        return Err(StatsError::IncompleteDesign(format!("subject {subject:?} is missing a condition")));
    }
    let (k, n) = (conditions.len(), cells.len());
    if k < 2 || n < 2 {
        return Err(StatsError::DegenerateDesign(format!("{n} subject(s) x {k} condition(s)")));
    }

    let matrix: Vec<Vec<f64>> = cells.values().map(|c| c.values().copied().collect()).collect();
    let grand = matrix.iter().flatten().sum::<f64>() / (n * k) as f64;
    let subject_means: Vec<f64> = matrix.iter().map(|row| mean(row)).collect();
    let condition_means: Vec<f64> = (0..k).map(|j| matrix.iter().map(|row| row[j]).sum::<f64>() / n as f64).collect();
    let ss_condition: f64 = condition_means.iter().map(|m| n as f64 * (m - grand).powi(2)).sum();
    let mut ss_error = 0.0;
    for (i, row) in matrix.iter().enumerate() {
        for (j, &y) in row.iter().enumerate() {
            ss_error += (y - subject_means[i] - condition_means[j] + grand).powi(2);
        }
    }
    AnovaResult::from_sums(ss_condition, ss_error, k - 1, (k - 1) * (n - 1))
}
