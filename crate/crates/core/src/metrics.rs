//! Reward-series comparison: Pearson correlation, the EPIC distance in its
//! state-only closed form `D = sqrt((1 - rho) / 2)`, and benchmark-level
//! aggregation.
//!
//! A series with zero variance has no defined correlation; such comparisons
//! yield `Degenerate` rather than an error, and aggregation counts them
//! separately instead of folding them into means. The default evaluation
//! mode concatenates each positive/negative pair before scoring, which keeps
//! the ground-truth side away from zero variance (negatives are constant
//! zero on their own).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Domain, PairedInstance};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("series is empty")]
    Empty,
    #[error("series value at index {index} is not finite")]
    NonFinite { index: usize },
    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("series too short for correlation: length {len}")]
    TooShort { len: usize },
    #[error("prediction misaligned for trajectory {trajectory_id}: {detail}")]
    Misalignment {
        trajectory_id: String,
        detail: String,
    },
}

/// An ordered list of rewards in [0, 1]. Values are clamped on construction;
/// non-finite input is rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardSeries {
    values: Vec<f64>,
}

impl RewardSeries {
    pub fn new(values: Vec<f64>) -> Result<Self, MetricsError> {
        if values.is_empty() {
            return Err(MetricsError::Empty);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite { index });
        }
        Ok(Self {
            values: values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A correlation-based comparison either yields a value or is undefined
/// because one side has zero variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricOutcome {
    Defined(f64),
    Degenerate,
}

impl MetricOutcome {
    pub fn value(self) -> Option<f64> {
        match self {
            MetricOutcome::Defined(v) => Some(v),
            MetricOutcome::Degenerate => None,
        }
    }
}

fn check_aligned(x: &[f64], y: &[f64]) -> Result<(), MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(MetricsError::TooShort { len: x.len() });
    }
    Ok(())
}

/// Sample Pearson correlation over raw slices. `Degenerate` when either side
/// has zero variance.
pub fn pearson_slices(x: &[f64], y: &[f64]) -> Result<MetricOutcome, MetricsError> {
    check_aligned(x, y)?;
    // Constant series have no variance by definition; testing the values
    // directly avoids calling a series degenerate or not based on rounding
    // in the mean.
    if x.iter().all(|v| *v == x[0]) || y.iter().all(|v| *v == y[0]) {
        return Ok(MetricOutcome::Degenerate);
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Ok(MetricOutcome::Degenerate);
    }
    // sqrt of the product (not the product of sqrts) keeps exact cases exact:
    // identical series yield rho = 1.0 with no rounding residue.
    Ok(MetricOutcome::Defined(cov / (var_x * var_y).sqrt()))
}

/// Pearson correlation between two reward series.
pub fn pearson(x: &RewardSeries, y: &RewardSeries) -> Result<MetricOutcome, MetricsError> {
    pearson_slices(x.values(), y.values())
}

/// EPIC distance over raw slices: `sqrt((1 - rho) / 2)`, in [0, 1].
pub fn epic_distance_slices(pred: &[f64], truth: &[f64]) -> Result<MetricOutcome, MetricsError> {
    Ok(match pearson_slices(pred, truth)? {
        MetricOutcome::Defined(rho) => {
            MetricOutcome::Defined(((1.0 - rho).clamp(0.0, 2.0) / 2.0).sqrt())
        }
        MetricOutcome::Degenerate => MetricOutcome::Degenerate,
    })
}

/// EPIC distance between predicted and ground-truth reward series.
pub fn epic_distance(
    pred: &RewardSeries,
    truth: &RewardSeries,
) -> Result<MetricOutcome, MetricsError> {
    epic_distance_slices(pred.values(), truth.values())
}

/// How trajectories are grouped before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Concatenate each pair's positive and negative series before scoring.
    PerPair,
    /// Score each trajectory on its own; constant-truth items come out
    /// degenerate and are excluded from means (but counted).
    PerTrajectory,
}

/// Predicted reward series keyed by trajectory id.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PredictionSet {
    by_id: BTreeMap<String, RewardSeries>,
}

impl PredictionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: &str, series: RewardSeries) {
        self.by_id.insert(id.to_string(), series);
    }

    pub fn get(&self, id: &str) -> Option<&RewardSeries> {
        self.by_id.get(id)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &RewardSeries)> {
        self.by_id.iter()
    }
}

/// Score of one evaluated item (a pair or a single trajectory).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemOutcome {
    pub id: String,
    pub domain: Domain,
    /// `None` marks a degenerate (zero-variance or too-short) comparison.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSummary {
    pub mean: Option<f64>,
    pub included: usize,
    pub degenerate: usize,
}

/// Aggregated evaluation result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mode: EvalMode,
    pub items: Vec<ItemOutcome>,
    pub per_domain: BTreeMap<String, DomainSummary>,
    /// Mean over all defined item distances.
    pub overall: Option<f64>,
    pub included: usize,
    pub degenerate: usize,
}

fn aligned_prediction<'a>(
    predictions: &'a PredictionSet,
    trajectory_id: &str,
    truth_len: usize,
) -> Result<&'a RewardSeries, MetricsError> {
    let series = predictions
        .get(trajectory_id)
        .ok_or_else(|| MetricsError::Misalignment {
            trajectory_id: trajectory_id.to_string(),
            detail: "no prediction series".into(),
        })?;
    if series.len() != truth_len {
        return Err(MetricsError::Misalignment {
            trajectory_id: trajectory_id.to_string(),
            detail: format!(
                "prediction length {} vs trajectory length {truth_len}",
                series.len()
            ),
        });
    }
    Ok(series)
}

fn score_item(pred: &[f64], truth: &[f64]) -> Option<f64> {
    match epic_distance_slices(pred, truth) {
        Ok(outcome) => outcome.value(),
        // Length-1 trajectories cannot be correlated; treat as degenerate.
        Err(MetricsError::TooShort { .. }) => None,
        Err(_) => unreachable!("lengths are pre-checked"),
    }
}

/// Evaluate aligned predictions over a paired dataset.
pub fn evaluate(
    instances: &[PairedInstance],
    predictions: &PredictionSet,
    mode: EvalMode,
) -> Result<EvaluationReport, MetricsError> {
    let mut items = Vec::new();
    for pair in instances {
        let pos_truth = pair.positive.rewards();
        let neg_truth = pair.negative.rewards();
        let pos_pred = aligned_prediction(predictions, &pair.positive.id, pos_truth.len())?;
        let neg_pred = aligned_prediction(predictions, &pair.negative.id, neg_truth.len())?;
        match mode {
            EvalMode::PerPair => {
                let mut truth = pos_truth.clone();
                truth.extend_from_slice(&neg_truth);
                let mut pred = pos_pred.values().to_vec();
                pred.extend_from_slice(neg_pred.values());
                items.push(ItemOutcome {
                    id: format!("{}+{}", pair.positive.id, pair.negative.id),
                    domain: pair.positive.domain,
                    distance: score_item(&pred, &truth),
                });
            }
            EvalMode::PerTrajectory => {
                items.push(ItemOutcome {
                    id: pair.positive.id.clone(),
                    domain: pair.positive.domain,
                    distance: score_item(pos_pred.values(), &pos_truth),
                });
                items.push(ItemOutcome {
                    id: pair.negative.id.clone(),
                    domain: pair.negative.domain,
                    distance: score_item(neg_pred.values(), &neg_truth),
                });
            }
        }
    }

    let mut per_domain: BTreeMap<String, (f64, usize, usize)> = BTreeMap::new();
    let mut sum = 0.0;
    let mut included = 0usize;
    let mut degenerate = 0usize;
    for item in &items {
        let entry = per_domain
            .entry(item.domain.label().to_string())
            .or_insert((0.0, 0, 0));
        match item.distance {
            Some(d) => {
                entry.0 += d;
                entry.1 += 1;
                sum += d;
                included += 1;
            }
            None => {
                entry.2 += 1;
                degenerate += 1;
            }
        }
    }
    let per_domain = per_domain
        .into_iter()
        .map(|(domain, (total, inc, deg))| {
            (
                domain,
                DomainSummary {
                    mean: if inc > 0 {
                        Some(total / inc as f64)
                    } else {
                        None
                    },
                    included: inc,
                    degenerate: deg,
                },
            )
        })
        .collect();
    Ok(EvaluationReport {
        mode,
        items,
        per_domain,
        overall: if included > 0 {
            Some(sum / included as f64)
        } else {
            None
        },
        included,
        degenerate,
    })
}

#[derive(Serialize, Deserialize)]
struct PredictionLine {
    id: String,
    rewards: Vec<f64>,
}

/// Write predictions as JSONL: `{"id": ..., "rewards": [...]}` per line,
/// sorted by id.
pub fn predictions_to_jsonl(predictions: &PredictionSet) -> String {
    let mut out = String::new();
    for (id, series) in predictions.iter() {
        let line = PredictionLine {
            id: id.clone(),
            rewards: series.values().to_vec(),
        };
        out.push_str(&serde_json::to_string(&line).expect("serializable"));
        out.push('\n');
    }
    out
}

/// Parse a predictions JSONL file; series are validated on load.
pub fn predictions_from_jsonl(text: &str) -> Result<PredictionSet, MetricsError> {
    let mut predictions = PredictionSet::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PredictionLine =
            serde_json::from_str(line).map_err(|e| MetricsError::Misalignment {
                trajectory_id: format!("line {}", index + 1),
                detail: e.to_string(),
            })?;
        let series = RewardSeries::new(parsed.rewards).map_err(|e| MetricsError::Misalignment {
            trajectory_id: parsed.id.clone(),
            detail: e.to_string(),
        })?;
        predictions.insert(&parsed.id, series);
    }
    Ok(predictions)
}

/// Fixed-column text table: one row per method, one column per domain
/// present, plus Overall.
pub fn render_table(rows: &[(&str, &EvaluationReport)]) -> String {
    let mut domains: Vec<&'static str> = Vec::new();
    for domain in Domain::ALL {
        if rows
            .iter()
            .any(|(_, r)| r.per_domain.contains_key(domain.label()))
        {
            domains.push(domain.label());
        }
    }
    let mut out = String::new();
    out.push_str(&format!("{:<16}", "Method"));
    for domain in &domains {
        out.push_str(&format!("{domain:>14}"));
    }
    out.push_str(&format!("{:>14}\n", "Overall"));
    for (method, report) in rows {
        out.push_str(&format!("{method:<16}"));
        for domain in &domains {
            let cell = report
                .per_domain
                .get(*domain)
                .and_then(|s| s.mean)
                .map(|m| format!("{m:.3}"))
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!("{cell:>14}"));
        }
        let overall = report
            .overall
            .map(|m| format!("{m:.3}"))
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!("{overall:>14}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Domain, Label, PairedInstance, Step, StepOrigin, Trajectory};
    use proptest::prelude::*;

    fn series(values: &[f64]) -> RewardSeries {
        RewardSeries::new(values.to_vec()).unwrap()
    }

    #[test]
    fn pearson_identity_orthogonal_degenerate() {
        let ramp = series(&[0.0, 0.5, 1.0]);
        assert_eq!(pearson(&ramp, &ramp).unwrap(), MetricOutcome::Defined(1.0));

        let x = series(&[0.0, 1.0, 0.0, 1.0]);
        let y = series(&[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(pearson(&x, &y).unwrap(), MetricOutcome::Defined(0.0));

        let constant = series(&[0.4, 0.4, 0.4]);
        assert_eq!(
            pearson(&ramp, &constant).unwrap(),
            MetricOutcome::Degenerate
        );
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(
            pearson_slices(&[0.0, 1.0], &[0.0, 1.0, 0.5]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(
            pearson_slices(&[0.0], &[1.0]),
            Err(MetricsError::TooShort { len: 1 })
        ));
        assert!(matches!(
            RewardSeries::new(vec![]),
            Err(MetricsError::Empty)
        ));
        assert!(matches!(
            RewardSeries::new(vec![0.1, f64::NAN]),
            Err(MetricsError::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn series_clamps_on_construction() {
        let s = RewardSeries::new(vec![-0.5, 0.5, 1.5]).unwrap();
        assert_eq!(s.values(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn epic_identities() {
        let ramp = series(&[0.0, 0.5, 1.0]);
        assert_eq!(
            epic_distance(&ramp, &ramp).unwrap(),
            MetricOutcome::Defined(0.0)
        );

        let anti = series(&[1.0, 0.5, 0.0]);
        assert_eq!(
            epic_distance(&anti, &ramp).unwrap(),
            MetricOutcome::Defined(1.0)
        );

        let x = series(&[0.0, 1.0, 0.0, 1.0]);
        let y = series(&[0.0, 0.0, 1.0, 1.0]);
        let d = epic_distance(&x, &y).unwrap().value().unwrap();
        assert!((d - std::f64::consts::FRAC_1_SQRT_2).abs() <= 1e-12);
    }

    #[test]
    fn epic_symmetry() {
        let a = series(&[0.1, 0.7, 0.3, 0.9]);
        let b = series(&[0.2, 0.4, 0.8, 0.5]);
        assert_eq!(
            epic_distance(&a, &b).unwrap(),
            epic_distance(&b, &a).unwrap()
        );
    }

    proptest! {
        #[test]
        fn epic_is_affine_invariant(
            pred in proptest::collection::vec(0.0f64..1.0, 4..12),
            truth in proptest::collection::vec(0.0f64..1.0, 4..12),
            a in 0.1f64..10.0,
            b in -5.0f64..5.0,
        ) {
            let n = pred.len().min(truth.len());
            let pred = &pred[..n];
            let truth = &truth[..n];
            let transformed: Vec<f64> = pred.iter().map(|v| a * v + b).collect();
            let base = epic_distance_slices(pred, truth).unwrap();
            let moved = epic_distance_slices(&transformed, truth).unwrap();
            match (base, moved) {
                (MetricOutcome::Defined(x), MetricOutcome::Defined(y)) => {
                    prop_assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
                }
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }

    fn trajectory(id: &str, label: Label, goal: &str, rewards: &[f64]) -> Trajectory {
        Trajectory {
            id: id.into(),
            domain: Domain::Synthetic,
            goal: goal.into(),
            label,
            steps: rewards
                .iter()
                .map(|r| Step {
                    action: "a".into(),
                    observation: "o".into(),
                    reward: *r,
                    origin: StepOrigin::Expert,
                })
                .collect(),
            meta: Default::default(),
        }
    }

    fn pair(index: usize, pos: &[f64], neg: &[f64]) -> PairedInstance {
        PairedInstance {
            positive: trajectory(&format!("p{index}"), Label::Positive, "g", pos),
            negative: trajectory(&format!("n{index}"), Label::Negative, "g", neg),
        }
    }

    fn oracle_predictions(instances: &[PairedInstance]) -> PredictionSet {
        let mut preds = PredictionSet::new();
        for pair in instances {
            preds.insert(&pair.positive.id, series(&pair.positive.rewards()));
            preds.insert(&pair.negative.id, series(&pair.negative.rewards()));
        }
        preds
    }

    #[test]
    fn oracle_predictions_score_zero_in_both_modes() {
        let instances = vec![
            pair(0, &[0.5, 1.0], &[0.0, 0.0]),
            pair(1, &[0.25, 0.5, 0.75, 1.0], &[0.0, 0.0, 0.0]),
        ];
        let preds = oracle_predictions(&instances);
        let per_pair = evaluate(&instances, &preds, EvalMode::PerPair).unwrap();
        assert_eq!(per_pair.overall, Some(0.0));
        assert_eq!(per_pair.degenerate, 0);
        let per_traj = evaluate(&instances, &preds, EvalMode::PerTrajectory).unwrap();
        // Positives correlate perfectly; constant-zero negatives are
        // degenerate and excluded.
        assert_eq!(per_traj.overall, Some(0.0));
        assert_eq!(per_traj.degenerate, 2);
        assert_eq!(per_traj.included, 2);
    }

    #[test]
    fn anti_oracle_scores_one_per_pair() {
        let instances = vec![pair(0, &[0.25, 0.5, 0.75, 1.0], &[0.0, 0.0, 0.0, 0.0])];
        let mut preds = PredictionSet::new();
        for pair in &instances {
            let flip =
                |t: &Trajectory| series(&t.rewards().iter().map(|r| 1.0 - r).collect::<Vec<_>>());
            preds.insert(&pair.positive.id, flip(&pair.positive));
            preds.insert(&pair.negative.id, flip(&pair.negative));
        }
        let report = evaluate(&instances, &preds, EvalMode::PerPair).unwrap();
        assert_eq!(report.overall, Some(1.0));
    }

    #[test]
    fn evaluate_matches_hand_computation_on_three_pairs() {
        let instances = vec![
            pair(0, &[0.5, 1.0], &[0.0, 0.0]),
            pair(1, &[1.0], &[0.0, 0.0]),
            pair(2, &[0.25, 0.5, 0.75, 1.0], &[0.0; 4]),
        ];
        let mut preds = PredictionSet::new();
        preds.insert("p0", series(&[0.2, 0.9]));
        preds.insert("n0", series(&[0.1, 0.3]));
        preds.insert("p1", series(&[0.6]));
        preds.insert("n1", series(&[0.5, 0.5]));
        preds.insert("p2", series(&[0.1, 0.1, 0.8, 0.9]));
        preds.insert("n2", series(&[0.0, 0.2, 0.1, 0.0]));

        let report = evaluate(&instances, &preds, EvalMode::PerPair).unwrap();
        let mut expected = Vec::new();
        for (pred, truth) in [
            (vec![0.2, 0.9, 0.1, 0.3], vec![0.5, 1.0, 0.0, 0.0]),
            (vec![0.6, 0.5, 0.5], vec![1.0, 0.0, 0.0]),
            (
                vec![0.1, 0.1, 0.8, 0.9, 0.0, 0.2, 0.1, 0.0],
                vec![0.25, 0.5, 0.75, 1.0, 0.0, 0.0, 0.0, 0.0],
            ),
        ] {
            expected.push(
                epic_distance_slices(&pred, &truth)
                    .unwrap()
                    .value()
                    .unwrap(),
            );
        }
        let got: Vec<f64> = report.items.iter().map(|i| i.distance.unwrap()).collect();
        assert_eq!(got, expected);
        let mean = expected.iter().sum::<f64>() / expected.len() as f64;
        assert!((report.overall.unwrap() - mean).abs() <= 1e-15);
    }

    #[test]
    fn per_pair_is_total_when_pairs_span_zero_and_one() {
        let instances = vec![pair(0, &[1.0], &[0.0])];
        let mut preds = PredictionSet::new();
        // Constant predictions: the prediction side has zero variance, which
        // still yields Degenerate. Totality concerns the truth side.
        preds.insert("p0", series(&[1.0]));
        preds.insert("n0", series(&[0.0]));
        let report = evaluate(&instances, &preds, EvalMode::PerPair).unwrap();
        assert_eq!(report.items[0].distance, Some(0.0));
    }

    #[test]
    fn misalignment_names_the_trajectory() {
        let instances = vec![pair(0, &[0.5, 1.0], &[0.0, 0.0])];
        let mut preds = PredictionSet::new();
        preds.insert("p0", series(&[0.5, 1.0]));
        preds.insert("n0", series(&[0.0]));
        let err = evaluate(&instances, &preds, EvalMode::PerPair).unwrap_err();
        assert!(
            matches!(&err, MetricsError::Misalignment { trajectory_id, .. } if trajectory_id == "n0"),
            "{err}"
        );
    }

    #[test]
    fn prediction_jsonl_round_trip() {
        let mut preds = PredictionSet::new();
        preds.insert("b", series(&[0.1, 0.9]));
        preds.insert("a", series(&[1.0]));
        let text = predictions_to_jsonl(&preds);
        let loaded = predictions_from_jsonl(&text).unwrap();
        assert_eq!(loaded.get("a").unwrap().values(), &[1.0]);
        assert_eq!(loaded.get("b").unwrap().values(), &[0.1, 0.9]);
        assert_eq!(predictions_to_jsonl(&loaded), text);
        assert!(predictions_from_jsonl("{oops\n").is_err());
    }

    #[test]
    fn table_renders_present_domains() {
        let instances = vec![pair(0, &[0.5, 1.0], &[0.0, 0.0])];
        let preds = oracle_predictions(&instances);
        let report = evaluate(&instances, &preds, EvalMode::PerPair).unwrap();
        let table = render_table(&[("oracle", &report)]);
        assert!(table.contains("Synthetic"));
        assert!(table.contains("Overall"));
        assert!(table.contains("oracle"));
        assert!(table.contains("0.000"));
        assert!(!table.contains("AlfWorld"));
    }
}
