//! Statistics over long-format tables: normality screening, the aligned
//! rank transform, ANOVAs with partial eta-squared, Tukey HSD, p-value
//! adjustment, and Cohen's d.

mod anova;
mod art;
mod distributions;
mod posthoc;
mod shapiro;

pub use anova::{oneway_anova, rm_anova, AnovaResult};
pub use art::{art_transform, midranks};
pub use distributions::{noncentral_f_cdf, partial_eta_sq_ci, studentized_range_sf};
pub use posthoc::{tukey_hsd, PairwiseComparison, PosthocResult};
pub use shapiro::{shapiro_wilk, ShapiroWilk};

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample of {n} is smaller than the minimum {min}")]
    SampleTooSmall { n: usize, min: usize },
    #[error("sample of {n} exceeds the maximum {max}")]
    SampleTooLarge { n: usize, max: usize },
    #[error("input is constant")]
    ConstantInput,
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("zero within-group variance")]
    ZeroVariance,
    #[error("incomplete repeated-measures design: {0}")]
    IncompleteDesign(String),
    #[error("p-value {0} outside [0, 1]")]
    OutOfRangeP(f64),
    #[error("pooled standard deviation is zero")]
    ZeroPooledSd,
    #[error("long table CSV: {0}")]
    TableFormat(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub subject_id: String,
    pub group: String,
    pub value: f64,
}

impl Observation {
    pub fn new(subject_id: impl Into<String>, group: impl Into<String>, value: f64) -> Self {
        Self { subject_id: subject_id.into(), group: group.into(), value }
    }
}

/// Rows of `(subject_id, group, value)`. Between-subject tests use `group`
/// as the factor; the repeated-measures ANOVA treats `subject_id` as the
/// within-subject key and `group` as the condition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LongTable {
    pub rows: Vec<Observation>,
}

impl LongTable {
    pub fn new(rows: Vec<Observation>) -> Self {
        Self { rows }
    }

    pub fn from_groups<'a>(groups: impl IntoIterator<Item = (&'a str, &'a [f64])>) -> Self {
        let mut rows = Vec::new();
        for (label, values) in groups {
            for (i, &v) in values.iter().enumerate() {
                rows.push(Observation::new(format!("{label}{i}"), label, v));
            }
        }
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Values per group, labels ascending, values sorted within a group so
    /// that downstream sums do not depend on row order.
    pub fn groups(&self) -> BTreeMap<&str, Vec<f64>> {
        let mut map: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for row in &self.rows {
            map.entry(row.group.as_str()).or_default().push(row.value);
        }
        for values in map.values_mut() {
            values.sort_by(f64::total_cmp);
        }
        map
    }

    fn check_finite(&self) -> Result<(), StatsError> {
        if self.rows.iter().any(|r| !r.value.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        Ok(())
    }

    /// Read `subject_id,group,value` CSV.
    pub fn read_csv<R: io::Read>(input: R) -> Result<Self, StatsError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = reader.headers().map_err(|e| StatsError::TableFormat(e.to_string()))?.clone();
        if headers.iter().ne(["subject_id", "group", "value"]) {
            return Err(StatsError::TableFormat(format!("expected header subject_id,group,value, got {headers:?}")));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| StatsError::TableFormat(e.to_string()))?;
            let value = rec[2].parse::<f64>().map_err(|_| StatsError::TableFormat(format!("row {i}: bad value")))?;
            rows.push(Observation::new(&rec[0], &rec[1], value));
        }
        Ok(Self { rows })
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PAdjustMethod {
    /// Holm-Bonferroni step-down.
    #[default]
    Holm,
    /// Benjamini-Hochberg step-up false discovery rate.
    FdrBh,
}

/// Adjust a family of p-values; output order matches input order.
pub fn p_adjust(p_values: &[f64], method: PAdjustMethod) -> Result<Vec<f64>, StatsError> {
    if let Some(&bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatsError::OutOfRangeP(bad));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    match method {
        PAdjustMethod::Holm => {
            let mut running = 0.0f64;
            for (rank, &idx) in order.iter().enumerate() {
                let scaled = ((m - rank) as f64 * p_values[idx]).min(1.0);
                running = running.max(scaled);
                adjusted[idx] = running;
            }
        }
        PAdjustMethod::FdrBh => {
            let mut running = 1.0f64;
            for (rank, &idx) in order.iter().enumerate().rev() {
                let scaled = (m as f64 / (rank + 1) as f64 * p_values[idx]).min(1.0);
                running = running.min(scaled);
                adjusted[idx] = running;
            }
        }
    }
    Ok(adjusted)
}

/// Standardized mean difference `(mean(a) - mean(b)) / pooled_sd`.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::SampleTooSmall { n: s.len(), min: 2 });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * sample_variance(a) + (nb - 1.0) * sample_variance(b)) / (na + nb - 2.0)).sqrt();
    if !(pooled > 0.0) {
        return Err(StatsError::ZeroPooledSd);
    }
    Ok((mean(a) - mean(b)) / pooled)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holm_examples() {
        assert_eq!(p_adjust(&[0.01, 0.04], PAdjustMethod::Holm).unwrap(), vec![0.02, 0.04]);
        assert_eq!(p_adjust(&[0.03, 0.04], PAdjustMethod::Holm).unwrap(), vec![0.06, 0.06]);
        assert_eq!(p_adjust(&[0.04, 0.01], PAdjustMethod::Holm).unwrap(), vec![0.04, 0.02]);
        assert_eq!(p_adjust(&[0.6, 0.9], PAdjustMethod::Holm).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn bh_examples() {
        let adj = p_adjust(&[0.01, 0.04, 0.03], PAdjustMethod::FdrBh).unwrap();
        assert_eq!(adj, vec![0.03, 0.04, 0.04]);
        for method in [PAdjustMethod::Holm, PAdjustMethod::FdrBh] {
            assert_eq!(p_adjust(&[0.2], method).unwrap(), vec![0.2]);
            assert_eq!(p_adjust(&[], method).unwrap(), Vec::<f64>::new());
        }
        assert_eq!(p_adjust(&[0.1, 1.2], PAdjustMethod::FdrBh), Err(StatsError::OutOfRangeP(1.2)));
        assert!(p_adjust(&[f64::NAN], PAdjustMethod::Holm).is_err());
    }

    #[test]
    fn cohens_d_examples() {
        assert_eq!(cohens_d(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap(), -1.0);
        assert_eq!(cohens_d(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(cohens_d(&[0.0, 0.0], &[1.0, 1.0]), Err(StatsError::ZeroPooledSd));
        assert!(matches!(cohens_d(&[1.0], &[1.0, 2.0]), Err(StatsError::SampleTooSmall { .. })));
    }

    #[test]
    fn long_table_csv() {
        let t = LongTable::read_csv("subject_id,group,value\ns1,a,1.5\ns2,b,2\n".as_bytes()).unwrap();
        assert_eq!(t.rows[1], Observation::new("s2", "b", 2.0));
        assert!(LongTable::read_csv("x,y\n".as_bytes()).is_err());
    }
}
