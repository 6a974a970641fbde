//! Aggregate metrics over scored outcomes.
//!
//! Probability-based metrics take [`ProbVector`]s indexed by option position
//! together with the gold option index for each item.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::types::{CalibrationBin, FirstTokenOutcome, Label, MASS_TOLERANCE};

/// Lower clamp applied to the gold probability before taking its log.
pub const LOG_LOSS_FLOOR: f64 = 1e-12;
pub const DEFAULT_ACE_RANGES: usize = 10;
pub const DEFAULT_CALIBRATION_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("no outcomes to aggregate")]
    Empty,
    #[error("arity mismatch: {0}")]
    Arity(String),
    #[error("ACE needs at least as many predictions ({n}) as ranges ({ranges})")]
    TooFewForRanges { n: usize, ranges: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// Per-option probabilities for one question, indexed by option position.
///
/// Normalized vectors sum to one; raw vectors keep the unnormalized option
/// mass (sum at most one) for calibration on vocabulary-level probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector {
    probs: Vec<f64>,
    normalized: bool,
}

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self, MetricError> {
        Self::check_values(&probs)?;
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MetricError::Parameter(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            probs,
            normalized: true,
        })
    }

    pub fn raw(probs: Vec<f64>) -> Result<Self, MetricError> {
        Self::check_values(&probs)?;
        let sum: f64 = probs.iter().sum();
        if sum > 1.0 + MASS_TOLERANCE {
            return Err(MetricError::Parameter(format!("raw mass {sum} exceeds 1")));
        }
        Ok(Self {
            probs,
            normalized: false,
        })
    }

    fn check_values(probs: &[f64]) -> Result<(), MetricError> {
        if probs.len() < 2 {
            return Err(MetricError::Arity("need at least two options".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0 + MASS_TOLERANCE).contains(p)) {
            return Err(MetricError::Parameter("probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Index of the most probable option; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Which probabilities feed the calibration metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationInput {
    #[default]
    Renormalized,
    Raw,
}

/// Divide each option's mass by the total. All-zero input maps to the
/// uniform vector and returns `true` as the degenerate flag.
pub fn normalize_options(option_probs: &BTreeMap<Label, f64>) -> (ProbVector, bool) {
    let k = option_probs.len();
    let total: f64 = option_probs.values().sum();
    if total <= 0.0 {
        let uniform = vec![1.0 / k as f64; k];
        return (
            ProbVector {
                probs: uniform,
                normalized: true,
            },
            true,
        );
    }
    let probs = option_probs.values().map(|p| p / total).collect();
    (
        ProbVector {
            probs,
            normalized: true,
        },
        false,
    )
}

/// Calibration vector for one outcome under the chosen input mode.
pub fn outcome_vector(outcome: &FirstTokenOutcome, input: CalibrationInput) -> ProbVector {
    match input {
        CalibrationInput::Renormalized => normalize_options(&outcome.option_probs).0,
        CalibrationInput::Raw => ProbVector {
            probs: outcome.option_probs.values().map(|p| p.min(1.0)).collect(),
            normalized: false,
        },
    }
}

/// Gold option index of an outcome (labels are consecutive from A).
pub fn gold_index(outcome: &FirstTokenOutcome) -> usize {
    outcome.gold_label.index()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccuracyField {
    RestrictedChoice,
    MatchedLabel,
}

pub fn accuracy(outcomes: &[FirstTokenOutcome], field: AccuracyField) -> Result<f64, MetricError> {
    if outcomes.is_empty() {
        return Err(MetricError::Empty);
    }
    let correct = outcomes
        .iter()
        .filter(|o| match field {
            AccuracyField::RestrictedChoice => o.restricted_choice == o.gold_label,
            AccuracyField::MatchedLabel => o.matched_label == Some(o.gold_label),
        })
        .count();
    Ok(correct as f64 / outcomes.len() as f64)
}

/// First-token validity rate, in percent.
pub fn ftvr(outcomes: &[FirstTokenOutcome]) -> Result<f64, MetricError> {
    if outcomes.is_empty() {
        return Err(MetricError::Empty);
    }
    let valid = outcomes.iter().filter(|o| o.is_valid).count();
    Ok(100.0 * valid as f64 / outcomes.len() as f64)
}

/// Distinct second tokens after a valid first token, divided by FTVR on the
/// percentage scale. `None` when no first token is valid.
pub fn continuation_diversity(outcomes: &[FirstTokenOutcome]) -> Result<Option<f64>, MetricError> {
    let rate = ftvr(outcomes)?;
    if rate == 0.0 {
        return Ok(None);
    }
    let distinct: HashSet<&str> = outcomes
        .iter()
        .filter(|o| o.is_valid)
        .filter_map(|o| o.second_token.as_deref())
        .collect();
    Ok(Some(distinct.len() as f64 / rate))
}

fn check_golds(vectors: &[ProbVector], golds: &[usize]) -> Result<(), MetricError> {
    if vectors.len() != golds.len() {
        return Err(MetricError::Arity(format!(
            "{} vectors but {} gold labels",
            vectors.len(),
            golds.len()
        )));
    }
    if vectors.is_empty() {
        return Err(MetricError::Empty);
    }
    for (i, (v, &g)) in vectors.iter().zip(golds).enumerate() {
        if g >= v.len() {
            return Err(MetricError::Arity(format!(
                "item {i}: gold index {g} outside {} options",
                v.len()
            )));
        }
    }
    Ok(())
}

/// 100 × mean squared gap between the gold-class probability and 1.
pub fn brier_x100(vectors: &[ProbVector], golds: &[usize]) -> Result<f64, MetricError> {
    check_golds(vectors, golds)?;
    let sum: f64 = vectors
        .iter()
        .zip(golds)
        .map(|(v, &g)| {
            let gap = v.probs[g] - 1.0;
            gap * gap
        })
        .sum();
    Ok(100.0 * sum / vectors.len() as f64)
}

/// Mean negative log of the gold-class probability, clamped at
/// [`LOG_LOSS_FLOOR`].
pub fn log_loss(vectors: &[ProbVector], golds: &[usize]) -> Result<f64, MetricError> {
    check_golds(vectors, golds)?;
    let sum: f64 = vectors
        .iter()
        .zip(golds)
        .map(|(v, &g)| -v.probs[g].max(LOG_LOSS_FLOOR).ln())
        .sum();
    Ok(sum / vectors.len() as f64)
}

/// Adaptive calibration error with `ranges` equal-count ranges per class.
///
/// For each class the N predictions are sorted ascending by that class's
/// probability (ties by item order) and cut into `ranges` contiguous runs of
/// `N / ranges` items; the last run takes the remainder.
pub fn ace(vectors: &[ProbVector], golds: &[usize], ranges: usize) -> Result<f64, MetricError> {
    check_golds(vectors, golds)?;
    if ranges == 0 {
        return Err(MetricError::Parameter("ranges must be >= 1".into()));
    }
    let n = vectors.len();
    if n < ranges {
        return Err(MetricError::TooFewForRanges { n, ranges });
    }
    let k = vectors[0].len();
    if vectors.iter().any(|v| v.len() != k) {
        return Err(MetricError::Arity(
            "ACE needs every vector to have the same arity".into(),
        ));
    }
    let size = n / ranges;
    let mut total = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    for class in 0..k {
        order.sort_by(|&a, &b| {
            vectors[a].probs[class]
                .total_cmp(&vectors[b].probs[class])
                .then(a.cmp(&b))
        });
        for r in 0..ranges {
            let start = r * size;
            let end = if r + 1 == ranges { n } else { start + size };
            let members = &order[start..end];
            let (hits, conf) = members.iter().fold((0usize, 0.0f64), |(h, c), &i| {
                (h + usize::from(golds[i] == class), c + vectors[i].probs[class])
            });
            let len = members.len() as f64;
            total += (hits as f64 / len - conf / len).abs();
        }
    }
    Ok(total / (k * ranges) as f64)
}

fn bin_index(conf: f64, bins: usize) -> usize {
    let mut b = ((conf * bins as f64).floor().max(0.0) as usize).min(bins - 1);
    // Align with the lo <= conf < hi edges as computed in `calibration_curve`.
    while b + 1 < bins && conf >= (b + 1) as f64 / bins as f64 {
        b += 1;
    }
    while b > 0 && conf < b as f64 / bins as f64 {
        b -= 1;
    }
    b
}

/// Reliability-diagram rows: argmax confidence binned into `bins`
/// equal-width bins over [0, 1]. The last bin is closed at 1.
pub fn calibration_curve(
    vectors: &[ProbVector],
    golds: &[usize],
    bins: usize,
) -> Result<Vec<CalibrationBin>, MetricError> {
    if bins < 2 {
        return Err(MetricError::Parameter("bins must be >= 2".into()));
    }
    if vectors.len() != golds.len() {
        return Err(MetricError::Arity(format!(
            "{} vectors but {} gold labels",
            vectors.len(),
            golds.len()
        )));
    }
    let mut conf_sum = vec![0.0; bins];
    let mut hits = vec![0usize; bins];
    let mut counts = vec![0usize; bins];
    for (v, &g) in vectors.iter().zip(golds) {
        let top = v.argmax();
        let conf = v.probs[top];
        let b = bin_index(conf, bins);
        conf_sum[b] += conf;
        hits[b] += usize::from(top == g);
        counts[b] += 1;
    }
    Ok((0..bins)
        .map(|b| {
            let count = counts[b];
            let (mean_conf, acc) = if count == 0 {
                (None, None)
            } else {
                (Some(conf_sum[b] / count as f64), Some(hits[b] as f64 / count as f64))
            };
            CalibrationBin {
                bin_lo: b as f64 / bins as f64,
                bin_hi: (b + 1) as f64 / bins as f64,
                mean_conf,
                accuracy: acc,
                count,
            }
        })
        .collect())
}

/// Mean and population standard deviation (divisor N), single pass.
pub fn aggregate_mean_std(values: &[f64]) -> Result<(f64, f64), MetricError> {
    if values.is_empty() {
        return Err(MetricError::Empty);
    }
    // Welford
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for (i, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    Ok((mean, (m2 / values.len() as f64).max(0.0).sqrt()))
}
