//! Spearman rank correlation with average-rank tie handling.

use std::collections::BTreeMap;

use crate::history::RunHistory;

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("values are comparable"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share the same value
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rho of two paired samples: the Pearson correlation of their
/// rank vectors. `None` when fewer than 3 pairs or either side has zero
/// rank variance.
pub fn spearman_from_pairs(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    if a.len() < 3 {
        return None;
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    pearson(&ra, &rb)
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx <= 0.0 || vy <= 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Spearman rho between the losses observed at two budgets, pairing by
/// `config_id` (repeated evaluations of the same configuration at one
/// budget are averaged). `None` means undefined: fewer than 3 paired
/// configurations or no rank variance on one side.
pub fn spearman_rank_correlation(history: &RunHistory, budget_a: f64, budget_b: f64) -> Option<f64> {
    let losses_a = mean_losses_at(history, budget_a);
    let losses_b = mean_losses_at(history, budget_b);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (id, loss) in &losses_a {
        if let Some(other) = losses_b.get(id) {
            a.push(*loss);
            b.push(*other);
        }
    }
    if a.len() < 3 {
        return None;
    }
    spearman_from_pairs(&a, &b)
}

fn mean_losses_at(history: &RunHistory, budget: f64) -> BTreeMap<u64, f64> {
    let mut sums: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for record in history.records() {
        if record.budget != budget {
            continue;
        }
        if let Some(loss) = record.outcome.loss() {
            let entry = sums.entry(record.config_id).or_insert((0.0, 0));
            entry.0 += loss;
            entry.1 += 1;
        }
    }
    sums.into_iter().map(|(id, (sum, count))| (id, sum / count as f64)).collect()
}
