//! Post-hoc analysis of few-shot trials: per-row percentage weight change
//! rankings, projections of the novel-noun row delta onto the gender axis,
//! and accuracy aggregation across trials with bootstrap intervals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::eval::{bootstrap_mean_ci, BootstrapConfig, ConditionTag};
use crate::linalg::{dot, Mat};
use crate::wordlab::{FewShotTrial, RowDelta, TaughtLabel};

/// Relative weight change of one embedding row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightDelta {
    pub token: TokenId,
    pub before_norm: f64,
    pub delta_norm: f64,
    /// 100 * ||delta row|| / ||row before||.
    pub percent_change: f64,
}

fn percent_change(before_norm: f64, delta_norm: f64) -> f64 {
    if before_norm > 0.0 {
        100.0 * delta_norm / before_norm
    } else if delta_norm == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Top-k rows by percentage weight change between two embedding tables;
/// ties break by token id, so the order is a deterministic total order.
pub fn rank_weight_changes(before: &Mat, after: &Mat, k: usize) -> Result<Vec<WeightDelta>> {
    if before.rows != after.rows || before.cols != after.cols {
        return Err(Error::Input(format!(
            "table shapes differ: {}x{} vs {}x{}",
            before.rows, before.cols, after.rows, after.cols
        )));
    }
    let deltas: Vec<RowDelta> = (0..before.rows)
        .map(|r| {
            let b = before.row(r);
            let a = after.row(r);
            let mut delta_sq = 0.0;
            let mut before_sq = 0.0;
            for (x, y) in b.iter().zip(a) {
                let d = y - x;
                delta_sq += d * d;
                before_sq += x * x;
            }
            RowDelta {
                token: r as TokenId,
                before_norm: before_sq.sqrt(),
                delta_norm: delta_sq.sqrt(),
            }
        })
        .collect();
    Ok(rank_row_deltas(&deltas, k))
}

/// Same ranking over already-computed sparse row deltas.
pub fn rank_row_deltas(rows: &[RowDelta], k: usize) -> Vec<WeightDelta> {
    let mut out: Vec<WeightDelta> = rows
        .iter()
        .map(|r| WeightDelta {
            token: r.token,
            before_norm: r.before_norm,
            delta_norm: r.delta_norm,
            percent_change: percent_change(r.before_norm, r.delta_norm),
        })
        .collect();
    out.sort_by(|a, b| {
        b.percent_change
            .partial_cmp(&a.percent_change)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.token.cmp(&b.token))
    });
    out.truncate(k);
    out
}

/// Vector difference of the two pristine parent embeddings,
/// x(parent_m) - x(parent_f).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenderAxis {
    pub axis: Vec<f64>,
}

impl GenderAxis {
    pub fn new(axis: Vec<f64>) -> Result<Self> {
        if axis.iter().all(|&v| v == 0.0) {
            return Err(Error::Input("gender axis is the zero vector".into()));
        }
        Ok(GenderAxis { axis })
    }

    pub fn from_pristine(
        pristine: &crate::model::ModelState,
        parent_f: TokenId,
        parent_m: TokenId,
    ) -> Result<Self> {
        let f = pristine.get_embedding_row(parent_f)?;
        let m = pristine.get_embedding_row(parent_m)?;
        Self::new(m.iter().zip(&f).map(|(a, b)| a - b).collect())
    }
}

/// Signed projection of a row delta on the unit-normalized gender axis;
/// positive points toward the masculine parent.
pub fn project_on_gender_axis(delta_row: &[f64], axis: &GenderAxis) -> Result<f64> {
    if delta_row.len() != axis.axis.len() {
        return Err(Error::Input(format!(
            "delta dimension {} does not match axis dimension {}",
            delta_row.len(),
            axis.axis.len()
        )));
    }
    let norm = dot(&axis.axis, &axis.axis).sqrt();
    Ok(dot(delta_row, &axis.axis) / norm)
}

/// One aggregate cell: mean accuracy across specs and repetitions for a
/// (model, condition, taught, shot-count) combination, optionally cut by
/// test distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub model: String,
    pub condition: ConditionTag,
    pub taught: TaughtLabel,
    pub shots: usize,
    /// `None` aggregates over all distances.
    pub distance: Option<usize>,
    pub n_trials: usize,
    pub mean_pre_accuracy: f64,
    pub mean_accuracy: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Per-novel-noun learning curve, for the faded per-noun rendering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecCurve {
    pub model: String,
    pub condition: ConditionTag,
    pub taught: TaughtLabel,
    pub spec: String,
    pub pre_accuracy: f64,
    /// (shot count, mean accuracy over repetitions).
    pub points: Vec<(usize, f64)>,
}

/// Masculine-minus-feminine taught-gender accuracy gap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenderGap {
    pub model: String,
    /// `None` pools all conditions.
    pub condition: Option<ConditionTag>,
    pub shots: usize,
    pub masculine_accuracy: f64,
    pub feminine_accuracy: f64,
    pub gap: f64,
}

/// Gender-axis behaviour per taught label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSummary {
    pub model: String,
    pub taught: TaughtLabel,
    pub n_trials: usize,
    pub mean_projection: f64,
    pub mean_abs_projection: f64,
    /// Fraction of trials whose projection sign matches the taught gender
    /// (1.0 for the neutral control by convention; see `expected_sign`).
    pub sign_consistency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialAggregate {
    pub cells: Vec<AggregateCell>,
    pub curves: Vec<SpecCurve>,
    pub gender_gaps: Vec<GenderGap>,
    pub projections: Vec<ProjectionSummary>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Aggregate trials into cells, per-noun curves, gender gaps and projection
/// summaries. Input order does not matter; duplicate trial keys are
/// rejected.
pub fn aggregate_trials(
    trials: &[FewShotTrial],
    bootstrap: &BootstrapConfig,
) -> Result<TrialAggregate> {
    if trials.is_empty() {
        return Err(Error::Input("no trials to aggregate".into()));
    }
    // canonical order: makes every float reduction and bootstrap draw a
    // pure function of the trial set, not of input order
    let trials: Vec<&FewShotTrial> = {
        let mut ordered: Vec<&FewShotTrial> = trials.iter().collect();
        ordered.sort_by_key(|t| t.key());
        ordered
    };
    {
        let mut seen = std::collections::BTreeSet::new();
        for t in &trials {
            if !seen.insert(t.key()) {
                return Err(Error::Input(format!(
                    "duplicate trial key {}",
                    t.key_string()
                )));
            }
        }
    }

    type CellKey = (String, ConditionTag, TaughtLabel, usize, Option<usize>);
    let mut cell_pre: BTreeMap<CellKey, Vec<f64>> = BTreeMap::new();
    let mut cell_post: BTreeMap<CellKey, Vec<f64>> = BTreeMap::new();
    for t in &trials {
        let base = (t.model_label.clone(), t.condition, t.taught, t.shot_count);
        let key = (base.0.clone(), base.1, base.2, base.3, None);
        cell_pre.entry(key.clone()).or_default().push(t.pre_accuracy);
        cell_post.entry(key).or_default().push(t.post_accuracy);
        for ((d, pre), (d2, post)) in t.pre_by_distance.iter().zip(&t.post_by_distance) {
            if d != d2 {
                return Err(Error::Input(format!(
                    "trial {} has mismatched distance cuts",
                    t.key_string()
                )));
            }
            let key = (base.0.clone(), base.1, base.2, base.3, Some(*d));
            cell_pre.entry(key.clone()).or_default().push(*pre);
            cell_post.entry(key).or_default().push(*post);
        }
    }
    let mut cells = Vec::with_capacity(cell_post.len());
    for (key, post) in &cell_post {
        let pre = &cell_pre[key];
        let label = format!("{}/{}/{}/{}shot/{:?}", key.0, key.1, key.2, key.3, key.4);
        let (ci_lo, ci_hi) = bootstrap_mean_ci(post, bootstrap, &label);
        cells.push(AggregateCell {
            model: key.0.clone(),
            condition: key.1,
            taught: key.2,
            shots: key.3,
            distance: key.4,
            n_trials: post.len(),
            mean_pre_accuracy: mean(pre),
            mean_accuracy: mean(post),
            ci_lo,
            ci_hi,
        });
    }

    type CurveKey = (String, ConditionTag, TaughtLabel, String);
    let mut curve_points: BTreeMap<CurveKey, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    let mut curve_pre: BTreeMap<CurveKey, Vec<f64>> = BTreeMap::new();
    for t in &trials {
        let key = (
            t.model_label.clone(),
            t.condition,
            t.taught,
            t.spec_label.clone(),
        );
        curve_points
            .entry(key.clone())
            .or_default()
            .entry(t.shot_count)
            .or_default()
            .push(t.post_accuracy);
        curve_pre.entry(key).or_default().push(t.pre_accuracy);
    }
    let curves: Vec<SpecCurve> = curve_points
        .iter()
        .map(|(key, by_shots)| SpecCurve {
            model: key.0.clone(),
            condition: key.1,
            taught: key.2,
            spec: key.3.clone(),
            pre_accuracy: mean(&curve_pre[key]),
            points: by_shots.iter().map(|(s, accs)| (*s, mean(accs))).collect(),
        })
        .collect();

    // masculine-minus-feminine gap per shot count, pooled and per condition
    let mut gap_acc: BTreeMap<(String, Option<ConditionTag>, usize, TaughtLabel), Vec<f64>> =
        BTreeMap::new();
    for t in &trials {
        if t.taught == TaughtLabel::Neutral {
            continue;
        }
        gap_acc
            .entry((t.model_label.clone(), None, t.shot_count, t.taught))
            .or_default()
            .push(t.post_accuracy);
        gap_acc
            .entry((
                t.model_label.clone(),
                Some(t.condition),
                t.shot_count,
                t.taught,
            ))
            .or_default()
            .push(t.post_accuracy);
    }
    let mut gender_gaps = Vec::new();
    let mut gap_keys: Vec<(String, Option<ConditionTag>, usize)> = gap_acc
        .keys()
        .map(|(m, c, s, _)| (m.clone(), *c, *s))
        .collect();
    gap_keys.sort();
    gap_keys.dedup();
    for (model, condition, shots) in gap_keys {
        let f = gap_acc.get(&(model.clone(), condition, shots, TaughtLabel::Feminine));
        let m = gap_acc.get(&(model.clone(), condition, shots, TaughtLabel::Masculine));
        if let (Some(f), Some(m)) = (f, m) {
            let feminine_accuracy = mean(f);
            let masculine_accuracy = mean(m);
            gender_gaps.push(GenderGap {
                model,
                condition,
                shots,
                masculine_accuracy,
                feminine_accuracy,
                gap: masculine_accuracy - feminine_accuracy,
            });
        }
    }

    let mut proj_acc: BTreeMap<(String, TaughtLabel), Vec<f64>> = BTreeMap::new();
    for t in &trials {
        proj_acc
            .entry((t.model_label.clone(), t.taught))
            .or_default()
            .push(t.axis_projection());
    }
    let projections: Vec<ProjectionSummary> = proj_acc
        .iter()
        .map(|((model, taught), projs)| {
            let consistent = projs
                .iter()
                .filter(|&&p| match taught {
                    TaughtLabel::Masculine => p > 0.0,
                    TaughtLabel::Feminine => p < 0.0,
                    TaughtLabel::Neutral => true,
                })
                .count();
            ProjectionSummary {
                model: model.clone(),
                taught: *taught,
                n_trials: projs.len(),
                mean_projection: mean(projs),
                mean_abs_projection: mean(&projs.iter().map(|p| p.abs()).collect::<Vec<_>>()),
                sign_consistency: consistent as f64 / projs.len() as f64,
            }
        })
        .collect();

    Ok(TrialAggregate {
        cells,
        curves,
        gender_gaps,
        projections,
    })
}
