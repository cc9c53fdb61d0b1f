//! Aligned rank transform for a single between-subjects factor.

use super::{LongTable, Observation, StatsError};

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their average
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Align responses for the group factor and replace them by midranks over
/// the whole table. With one factor the only other estimated term is the
/// grand mean, so the aligned response is `y - grand_mean`.
pub fn art_transform(table: &LongTable) -> Result<LongTable, StatsError> {
    table.check_finite()?;
    let groups = table.groups();
    if groups.len() < 2 {
        return Err(StatsError::DegenerateDesign(format!("{} group(s); need at least 2", groups.len())));
    }
    if let Some((label, _)) = groups.iter().find(|(_, v)| v.len() < 2) {
        return Err(StatsError::DegenerateDesign(format!("group {label:?} has fewer than 2 observations")));
    }
    let n = table.rows.len() as f64;
    let grand = groups.values().flatten().sum::<f64>() / n;
    let aligned: Vec<f64> = table.rows.iter().map(|r| r.value - grand).collect();
    let ranks = midranks(&aligned);
    Ok(LongTable::new(
        table
            .rows
            .iter()
            .zip(ranks)
            .map(|(r, rank)| Observation::new(r.subject_id.clone(), r.group.clone(), rank))
            .collect(),
    ))
}
