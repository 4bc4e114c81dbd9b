//! Choosing one error bound per layer from the assessment records.
//!
//! Accuracy mode minimizes the total compressed size subject to the summed
//! degradation staying within `ε⋆`; each degradation is rounded up to a
//! multiple of `ε⋆/B` and the dynamic program runs over the used buckets.
//! Ratio mode minimizes the summed degradation subject to an exact byte
//! budget, with degradations rounded up to `1/1000` of their largest
//! possible sum.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::assessor::AssessmentRecord;

/// Bucket count of the accuracy budget.
pub const ACCURACY_BUCKETS: usize = 100;

/// Bucket count of the degradation axis in ratio mode.
pub const RATIO_BUCKETS: usize = 1000;

/// Predicted losses at or above this many points leave the regime where
/// per-layer degradations were observed to add up.
pub const LINEARITY_LIMIT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("assessment table has no layers")]
    NoLayers,
    #[error("layer {0} has no assessment records")]
    EmptyLayer(usize),
    #[error("record for layer {found} listed under layer {expected}")]
    MisplacedRecord { expected: usize, found: usize },
    #[error("record of layer {0} has a non-finite or non-positive value")]
    InvalidRecord(usize),
    #[error("invalid budget {0}")]
    InvalidBudget(f64),
    #[error("expected loss {budget} is infeasible; layer {layer} alone needs {min_delta} points")]
    InfeasibleLoss { layer: usize, min_delta: f64, budget: f64 },
    #[error("size budget {budget} bytes is infeasible; smallest achievable size is {min_size} bytes")]
    InfeasibleSize { budget: usize, min_size: usize },
    #[error("plan covers {plan} layers but the table has {table}")]
    LayerCountMismatch { plan: usize, table: usize },
    #[error("no record for layer {layer} at eb {eb}")]
    MissingRecord { layer: usize, eb: f64 },
}

/// Chosen bound per layer with the totals predicted from the records.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundPlan {
    pub ebs: Vec<f64>,
    pub predicted_total_size: usize,
    /// Sum of the raw per-layer degradations (percentage points).
    pub predicted_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPrediction {
    pub loss: f64,
    /// The loss is at or above [`LINEARITY_LIMIT`].
    pub out_of_regime: bool,
}

/// Minimal cumulative size per layer prefix and budget: `sizes[l][b]` is the
/// smallest total over layers `0..=l` using at most `b` buckets.
#[derive(Debug, Clone, PartialEq)]
pub struct DpTable {
    pub sizes: Vec<Vec<Option<usize>>>,
}

/// Groups a flat record list by `layer_id`; ids must cover `0..k`.
pub fn group_by_layer(records: &[AssessmentRecord]) -> Result<Vec<Vec<AssessmentRecord>>, PlanError> {
    let k = records.iter().map(|r| r.layer_id + 1).max().ok_or(PlanError::NoLayers)?;
    let mut out = alloc::vec![Vec::new(); k];
    for r in records {
        out[r.layer_id].push(*r);
    }
    if let Some(i) = out.iter().position(Vec::is_empty) {
        return Err(PlanError::EmptyLayer(i));
    }
    Ok(out)
}

/// Smallest `k` with `Δ ≤ k·total/buckets`; zero and negative `Δ` map to 0.
pub fn delta_bucket(delta: f64, total: f64, buckets: usize) -> usize {
    if delta <= 0.0 {
        return 0;
    }
    if total <= 0.0 {
        return usize::MAX;
    }
    let edge = |k: usize| if k == buckets { total } else { total * k as f64 / buckets as f64 };
    let guess = libm::ceil(delta / total * buckets as f64);
    // far past the budget, or NaN
    if guess.is_nan() || guess >= (buckets * 4) as f64 {
        return usize::MAX;
    }
    let mut k = guess as usize;
    while k > 0 && edge(k - 1) >= delta {
        k -= 1;
    }
    while edge(k) < delta {
        k += 1;
    }
    k
}

fn validate(table: &[Vec<AssessmentRecord>]) -> Result<(), PlanError> {
    if table.is_empty() {
        return Err(PlanError::NoLayers);
    }
    for (l, recs) in table.iter().enumerate() {
        if recs.is_empty() {
            return Err(PlanError::EmptyLayer(l));
        }
        for r in recs {
            if r.layer_id != l {
                return Err(PlanError::MisplacedRecord { expected: l, found: r.layer_id });
            }
            if !(r.eb > 0.0 && r.eb.is_finite() && r.delta.is_finite()) {
                return Err(PlanError::InvalidRecord(l));
            }
        }
    }
    Ok(())
}

/// Partial solution kept per DP state.
#[derive(Clone)]
struct State {
    size: usize,
    buckets: usize,
    picks: Vec<usize>,
}

fn cmp_ebs(table: &[Vec<AssessmentRecord>], a: &[usize], b: &[usize]) -> Ordering {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(l, (&x, &y))| table[l][x].eb.total_cmp(&table[l][y].eb))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Runs the layer-by-layer relaxation over states indexed by the summed
/// bucket count `0..=limit`, keeping per state the smallest size and then
/// the lexicographically smallest bounds.
fn run_dp(
    table: &[Vec<AssessmentRecord>],
    bucket_of: &[Vec<usize>],
    limit: usize,
) -> Vec<Vec<Option<State>>> {
    let mut layers = Vec::with_capacity(table.len());
    let mut prev: Vec<Option<State>> = alloc::vec![None; limit + 1];
    prev[0] = Some(State { size: 0, buckets: 0, picks: Vec::new() });
    for (l, recs) in table.iter().enumerate() {
        let mut cur: Vec<Option<State>> = alloc::vec![None; limit + 1];
        for state in prev.iter().flatten() {
            for (c, r) in recs.iter().enumerate() {
                let Some(b) = state.buckets.checked_add(bucket_of[l][c]).filter(|&b| b <= limit) else {
                    continue;
                };
                let size = state.size + r.sigma;
                let better = match &cur[b] {
                    None => true,
                    Some(old) => match size.cmp(&old.size) {
                        Ordering::Less => true,
                        Ordering::Greater => false,
                        Ordering::Equal => {
                            let mut picks = state.picks.clone();
                            picks.push(c);
                            cmp_ebs(table, &picks, &old.picks).is_lt()
                        }
                    },
                };
                if better {
                    let mut picks = state.picks.clone();
                    picks.push(c);
                    cur[b] = Some(State { size, buckets: b, picks });
                }
            }
        }
        layers.push(cur.clone());
        prev = cur;
    }
    layers
}

fn plan_from(table: &[Vec<AssessmentRecord>], picks: &[usize]) -> BoundPlan {
    let chosen = || picks.iter().enumerate().map(|(l, &c)| &table[l][c]);
    BoundPlan {
        ebs: chosen().map(|r| r.eb).collect(),
        predicted_total_size: chosen().map(|r| r.sigma).sum(),
        predicted_loss: chosen().map(|r| r.delta).sum(),
    }
}

fn accuracy_buckets(table: &[Vec<AssessmentRecord>], expected_loss: f64) -> Vec<Vec<usize>> {
    table
        .iter()
        .map(|recs| recs.iter().map(|r| delta_bucket(r.delta, expected_loss, ACCURACY_BUCKETS)).collect())
        .collect()
}

/// Minimizes total size subject to the bucketed degradation sum staying
/// within `expected_loss`. Ties go to the smaller bucket sum, then to the
/// smaller bound on the earliest differing layer.
pub fn optimize_expected_accuracy(
    table: &[Vec<AssessmentRecord>],
    expected_loss: f64,
) -> Result<BoundPlan, PlanError> {
    validate(table)?;
    if !(expected_loss > 0.0 && expected_loss.is_finite()) {
        return Err(PlanError::InvalidBudget(expected_loss));
    }
    let buckets = accuracy_buckets(table, expected_loss);
    let dp = run_dp(table, &buckets, ACCURACY_BUCKETS);
    let best = dp
        .last()
        .expect("non-empty table")
        .iter()
        .flatten()
        .min_by(|a, b| {
            a.size.cmp(&b.size).then(a.buckets.cmp(&b.buckets)).then_with(|| cmp_ebs(table, &a.picks, &b.picks))
        });
    match best {
        Some(s) => Ok(plan_from(table, &s.picks)),
        None => {
            let (layer, min_delta) = table
                .iter()
                .enumerate()
                .map(|(l, recs)| (l, recs.iter().map(AssessmentRecord::planning_delta).fold(f64::INFINITY, f64::min)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                .expect("non-empty table");
            Err(PlanError::InfeasibleLoss { layer, min_delta, budget: expected_loss })
        }
    }
}

/// The accuracy-mode DP table, reduced to "at most `b` buckets" form.
pub fn dp_table(table: &[Vec<AssessmentRecord>], expected_loss: f64) -> Result<DpTable, PlanError> {
    validate(table)?;
    if !(expected_loss > 0.0 && expected_loss.is_finite()) {
        return Err(PlanError::InvalidBudget(expected_loss));
    }
    let dp = run_dp(table, &accuracy_buckets(table, expected_loss), ACCURACY_BUCKETS);
    let sizes = dp
        .iter()
        .map(|row| {
            let mut best: Option<usize> = None;
            row.iter()
                .map(|s| {
                    if let Some(s) = s {
                        best = Some(best.map_or(s.size, |b| b.min(s.size)));
                    }
                    best
                })
                .collect()
        })
        .collect();
    Ok(DpTable { sizes })
}

/// Minimizes the bucketed degradation sum subject to a total size of at
/// most `size_budget` bytes. Ties go to the smaller size, then to the
/// smaller bound on the earliest differing layer.
pub fn optimize_expected_ratio(
    table: &[Vec<AssessmentRecord>],
    size_budget: usize,
) -> Result<BoundPlan, PlanError> {
    validate(table)?;
    let min_size: usize = table.iter().map(|recs| recs.iter().map(|r| r.sigma).min().unwrap_or(0)).sum();
    if min_size > size_budget {
        return Err(PlanError::InfeasibleSize { budget: size_budget, min_size });
    }
    let total = ratio_scale(table);
    let buckets: Vec<Vec<usize>> = table
        .iter()
        .map(|recs| recs.iter().map(|r| delta_bucket(r.delta, total, RATIO_BUCKETS)).collect())
        .collect();
    // per-layer ceilings can push the sum slightly past RATIO_BUCKETS
    let limit = buckets.iter().map(|b| b.iter().copied().max().unwrap_or(0)).sum();
    let dp = run_dp(table, &buckets, limit);
    let best = dp
        .last()
        .expect("non-empty table")
        .iter()
        .flatten()
        .filter(|s| s.size <= size_budget)
        .min_by(|a, b| {
            a.buckets.cmp(&b.buckets).then(a.size.cmp(&b.size)).then_with(|| cmp_ebs(table, &a.picks, &b.picks))
        })
        .expect("the smallest-size choice is always within budget");
    Ok(plan_from(table, &best.picks))
}

/// Span of the degradation axis in ratio mode: the largest possible sum of
/// clamped degradations.
pub fn ratio_scale(table: &[Vec<AssessmentRecord>]) -> f64 {
    table
        .iter()
        .map(|recs| recs.iter().map(AssessmentRecord::planning_delta).fold(0.0, f64::max))
        .sum()
}

/// Sum of the raw degradations of the plan's bounds.
pub fn predict_loss(plan: &BoundPlan, table: &[Vec<AssessmentRecord>]) -> Result<LossPrediction, PlanError> {
    if plan.ebs.len() != table.len() {
        return Err(PlanError::LayerCountMismatch { plan: plan.ebs.len(), table: table.len() });
    }
    let mut loss = 0.0;
    for (layer, (&eb, recs)) in plan.ebs.iter().zip(table).enumerate() {
        let r = recs
            .iter()
            .find(|r| r.eb.to_bits() == eb.to_bits())
            .ok_or(PlanError::MissingRecord { layer, eb })?;
        loss += r.delta;
    }
    Ok(LossPrediction { loss, out_of_regime: loss >= LINEARITY_LIMIT })
}
