//! Novel-noun laboratory: synthesize a novel embedding as the midpoint of
//! two opposite-gender parents, implant it over the least-frequent
//! vocabulary slot, classify its initial gender, run single-step few-shot
//! learning episodes restricted to the embedding table, and record one
//! trial per (noun x condition x taught gender x shot count x repetition).

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{
    build_test_suite, evaluate_suite, BootstrapConfig, Condition, ConditionTag, ConstructionKind,
    NounPair,
};
use crate::grammar::Gender;
use crate::linalg::dot;
use crate::model::{loss_and_gradients, plain_sgd_step, GradScope, ModelState};
use crate::stimuli::{control_pool, default_distances, learning_pool, test_templates};
use crate::util::derive_seed;

/// A novel noun: the midpoint of two semantically related nouns of opposite
/// gender, hosted in the embedding row of the least frequent token.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NovelNounSpec {
    pub label: String,
    pub parent_f: TokenId,
    pub parent_m: TokenId,
    pub slot: TokenId,
}

impl NovelNounSpec {
    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        if self.parent_f == self.parent_m {
            return Err(Error::Input(format!(
                "novel noun {} has identical parents",
                self.label
            )));
        }
        if self.slot == self.parent_f || self.slot == self.parent_m {
            return Err(Error::Input(format!(
                "novel noun {} uses a parent as its slot",
                self.label
            )));
        }
        if self.slot == vocab.unk_id || self.slot == vocab.eos_id {
            return Err(Error::Input(format!(
                "novel noun {} would overwrite a reserved token",
                self.label
            )));
        }
        Ok(())
    }
}

/// Assemble novel-noun specs from frequency-matched opposite-gender pairs.
pub fn default_novel_specs(vocab: &Vocabulary, pairs: &[NounPair]) -> Result<Vec<NovelNounSpec>> {
    let slot = vocab
        .least_frequent_id()
        .ok_or_else(|| Error::Input("vocabulary has no non-reserved tokens".into()))?;
    let specs: Vec<NovelNounSpec> = pairs
        .iter()
        .map(|pair| NovelNounSpec {
            label: format!(
                "{}+{}",
                vocab.token(pair.feminine),
                vocab.token(pair.masculine)
            ),
            parent_f: pair.feminine,
            parent_m: pair.masculine,
            slot,
        })
        .collect();
    for spec in &specs {
        spec.validate(vocab)?;
    }
    Ok(specs)
}

/// Midpoint of the two parent embeddings, read from the current table.
pub fn synthesize_novel_embedding(model: &ModelState, spec: &NovelNounSpec) -> Result<Vec<f64>> {
    let f = model.get_embedding_row(spec.parent_f)?;
    let m = model.get_embedding_row(spec.parent_m)?;
    Ok(f.iter().zip(&m).map(|(a, b)| 0.5 * a + 0.5 * b).collect())
}

/// Overwrite the least-frequent non-reserved token's embedding row with the
/// synthesized vector; every other row is untouched.
pub fn implant_novel_noun(
    model: &mut ModelState,
    vector: &[f64],
    vocab: &Vocabulary,
) -> Result<TokenId> {
    let slot = vocab
        .least_frequent_id()
        .ok_or_else(|| Error::Input("vocabulary has no non-reserved tokens".into()))?;
    model.set_embedding_row(slot, vector)?;
    Ok(slot)
}

/// Distance-zero noun-adjective probes over the slot token, used to
/// classify a novel noun's gender before any learning step.
pub fn initial_gender_probe_suite(
    slot: TokenId,
    vocab: &Vocabulary,
) -> Result<Vec<crate::eval::TestItem>> {
    let condition = Condition::for_tag(ConditionTag::A);
    let templates= test_templates(ConstructionKind::NounAdjective)?;
    // the expected-gender label is irrelevant for the majority vote
    build_test_suite(&condition, &[(slot, Gender::Feminine)], &[0], &templates, vocab)
}

/// Majority vote over probe items; the margin is the mean of
/// p(feminine) - p(masculine). Vote ties fall back to the margin sign.
pub fn initial_gender(
    model: &ModelState,
    probe_suite: &[crate::eval::TestItem],
) -> Result<(Gender, f64)> {
    if probe_suite.is_empty() {
        return Err(Error::Input("empty probe suite".into()));
    }
    let mut f_votes = 0usize;
    let mut m_votes = 0usize;
    let mut margin = 0.0;
    for item in probe_suite {
        let scored = crate::eval::score_item(model, item)?;
        match scored.choice {
            crate::eval::Choice::Feminine => f_votes += 1,
            crate::eval::Choice::Masculine => m_votes += 1,
            crate::eval::Choice::Tie => {}
        }
        margin += scored.p_f - scored.p_m;
    }
    margin /= probe_suite.len() as f64;
    let gender = match f_votes.cmp(&m_votes) {
        std::cmp::Ordering::Greater => Gender::Feminine,
        std::cmp::Ordering::Less => Gender::Masculine,
        std::cmp::Ordering::Equal => {
            if margin >= 0.0 {
                Gender::Feminine
            } else {
                Gender::Masculine
            }
        }
    };
    Ok((gender, margin))
}

/// What the single gradient step is allowed to touch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateScope {
    /// The whole embedding table (input and output roles).
    #[default]
    EmbeddingOnly,
    /// Ablation: only the implanted slot's row.
    NovelRowOnly,
    /// Ablation: every parameter.
    FullModel,
}

/// Per-row change of the embedding table after an update; rows with zero
/// change are omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowDelta {
    pub token: TokenId,
    pub before_norm: f64,
    pub delta_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingDelta {
    pub rows: Vec<RowDelta>,
    /// Full delta vector of the implanted slot's row.
    pub slot_delta: Vec<f64>,
}

/// One plain gradient step (no momentum) on the learning sentences, with
/// the gradient restricted to the requested scope. Dropout is disabled;
/// every sentence must contain the slot token.
pub fn few_shot_update(
    model: &mut ModelState,
    sentences: &[Vec<TokenId>],
    slot: TokenId,
    lr: f64,
    scope: UpdateScope,
) -> Result<EmbeddingDelta> {
    if sentences.is_empty() {
        return Err(Error::Input("no learning sentences".into()));
    }
    for (i, sentence) in sentences.iter().enumerate() {
        if !sentence.contains(&slot) {
            return Err(Error::Stimulus(format!(
                "learning sentence {} does not contain the slot token {slot}",
                i + 1
            )));
        }
    }
    let before = model.params.embedding.clone();
    let grad_scope = match scope {
        UpdateScope::FullModel => GradScope::Full,
        _ => GradScope::EmbeddingOnly,
    };
    let (_, mut grads) = loss_and_gradients(model, sentences, grad_scope, None)?;
    if scope == UpdateScope::NovelRowOnly {
        let slot_row = slot as usize;
        for r in 0..grads.params.embedding.rows {
            if r != slot_row {
                grads.params.embedding.row_mut(r).iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
    plain_sgd_step(model, &grads, lr)?;

    let after = &model.params.embedding;
    let mut rows = Vec::new();
    for r in 0..after.rows {
        let b = before.row(r);
        let a = after.row(r);
        let mut delta_sq = 0.0;
        let mut before_sq = 0.0;
        for (x, y) in b.iter().zip(a) {
            let d = y - x;
            delta_sq += d * d;
            before_sq += x * x;
        }
        if delta_sq > 0.0 {
            rows.push(RowDelta {
                token: r as TokenId,
                before_norm: before_sq.sqrt(),
                delta_norm: delta_sq.sqrt(),
            });
        }
    }
    let slot_delta: Vec<f64> = before
        .row(slot as usize)
        .iter()
        .zip(after.row(slot as usize))
        .map(|(b, a)| a - b)
        .collect();
    Ok(EmbeddingDelta { rows, slot_delta })
}

/// Taught label of a learning episode; the control condition teaches
/// nothing (elided article, no gendered target).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaughtLabel {
    Feminine,
    Masculine,
    Neutral,
}

impl TaughtLabel {
    pub fn gender(self) -> Option<Gender> {
        match self {
            TaughtLabel::Feminine => Some(Gender::Feminine),
            TaughtLabel::Masculine => Some(Gender::Masculine),
            TaughtLabel::Neutral => None,
        }
    }
}

impl std::fmt::Display for TaughtLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TaughtLabel::Feminine => "f",
            TaughtLabel::Masculine => "m",
            TaughtLabel::Neutral => "neutral",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FewShotConfig {
    pub shots: Vec<usize>,
    pub repetitions: usize,
    pub pool_size: usize,
    pub lr: f64,
    pub scope: UpdateScope,
    pub seed: u64,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        FewShotConfig {
            shots: vec![1, 2, 3, 5, 10],
            repetitions: 5,
            pool_size: 15,
            lr: 1.0,
            scope: UpdateScope::EmbeddingOnly,
            seed: 0,
        }
    }
}

impl FewShotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shots.is_empty() || self.repetitions == 0 {
            return Err(Error::Config(
                "few-shot config needs at least one shot count and one repetition".into(),
            ));
        }
        for &s in &self.shots {
            if s == 0 || s > self.pool_size {
                return Err(Error::Config(format!(
                    "shot count {s} outside 1..={}",
                    self.pool_size
                )));
            }
        }
        if self.lr < 0.0 {
            return Err(Error::Config("few-shot lr must be non-negative".into()));
        }
        Ok(())
    }
}

/// Learning pools per construction, feminine/masculine variants plus the
/// gender-neutral control pool. Defaults to the shipped inventories.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolSet {
    pub article_noun: (crate::stimuli::StimulusPool, crate::stimuli::StimulusPool),
    pub noun_adjective: (crate::stimuli::StimulusPool, crate::stimuli::StimulusPool),
    pub noun_participle: (crate::stimuli::StimulusPool, crate::stimuli::StimulusPool),
    pub control: crate::stimuli::StimulusPool,
}

impl PoolSet {
    pub fn shipped() -> Result<Self> {
        let pair = |kind| -> Result<_> {
            Ok((
                learning_pool(kind, Gender::Feminine)?,
                learning_pool(kind, Gender::Masculine)?,
            ))
        };
        Ok(PoolSet {
            article_noun: pair(ConstructionKind::ArticleNoun)?,
            noun_adjective: pair(ConstructionKind::NounAdjective)?,
            noun_participle: pair(ConstructionKind::NounParticiple)?,
            control: control_pool(),
        })
    }

    pub fn learning(&self, kind: ConstructionKind, gender: Gender) -> Result<&crate::stimuli::StimulusPool> {
        let pair = match kind {
            ConstructionKind::ArticleNoun => &self.article_noun,
            ConstructionKind::NounAdjective => &self.noun_adjective,
            ConstructionKind::NounParticiple => &self.noun_participle,
            ConstructionKind::NounRelativePronoun => {
                return Err(Error::Stimulus(
                    "relative-pronoun frames are test constructions, not learning pools".into(),
                ))
            }
        };
        Ok(match gender {
            Gender::Feminine => &pair.0,
            Gender::Masculine => &pair.1,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub few_shot: FewShotConfig,
    pub conditions: Vec<ConditionTag>,
    /// Test distances for adjective/participle suites.
    pub distances_adjacent: Vec<usize>,
    /// Test distances for relative-pronoun suites.
    pub distances_relative: Vec<usize>,
    pub include_control: bool,
    pub model_label: String,
    /// Bootstrap for per-trial suite reports; zero resamples skips the
    /// resampling (aggregation bootstraps across trials instead).
    pub bootstrap: BootstrapConfig,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            few_shot: FewShotConfig::default(),
            conditions: ConditionTag::all().to_vec(),
            distances_adjacent: default_distances(ConstructionKind::NounAdjective),
            distances_relative: default_distances(ConstructionKind::NounRelativePronoun),
            include_control: false,
            model_label: "model".into(),
            bootstrap: BootstrapConfig {
                resamples: 0,
                ..BootstrapConfig::default()
            },
        }
    }
}

/// One learning episode: pristine model, implanted noun, one gradient step
/// on a sampled mini-batch, evaluated on the condition's test construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FewShotTrial {
    pub model_label: String,
    pub spec_label: String,
    pub parent_f: TokenId,
    pub parent_m: TokenId,
    pub slot: TokenId,
    pub condition: ConditionTag,
    pub taught: TaughtLabel,
    pub shot_count: usize,
    pub repetition: usize,
    pub seed: u64,
    pub sentence_indices: Vec<usize>,
    pub initial_gender: Gender,
    pub initial_margin: f64,
    pub n_items: usize,
    /// Taught-gender accuracy before/after the update (for the control
    /// condition: feminine-preference rate).
    pub pre_accuracy: f64,
    pub post_accuracy: f64,
    pub pre_by_distance: Vec<(usize, f64)>,
    pub post_by_distance: Vec<(usize, f64)>,
    pub pre_ties: usize,
    pub post_ties: usize,
    pub frozen_hash_before: String,
    pub frozen_hash_after: String,
    /// Sparse per-row embedding deltas (rows with any change).
    pub delta_rows: Vec<RowDelta>,
    pub slot_delta: Vec<f64>,
    /// Pristine-table gender axis, x(parent_m) - x(parent_f).
    pub gender_axis: Vec<f64>,
}

impl FewShotTrial {
    pub fn key(&self) -> (String, String, ConditionTag, TaughtLabel, usize, usize) {
        (
            self.model_label.clone(),
            self.spec_label.clone(),
            self.condition,
            self.taught,
            self.shot_count,
            self.repetition,
        )
    }

    pub fn key_string(&self) -> String {
        format!(
            "{}/{}/{}/{}/{}shot/rep{}",
            self.model_label, self.spec_label, self.condition, self.taught, self.shot_count,
            self.repetition
        )
    }

    /// Signed movement of the slot row along the unit gender axis;
    /// positive is toward the masculine parent.
    pub fn axis_projection(&self) -> f64 {
        let norm = dot(&self.gender_axis, &self.gender_axis).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        dot(&self.slot_delta, &self.gender_axis) / norm
    }
}

struct TrialTask {
    spec_index: usize,
    condition: Option<ConditionTag>,
    taught: TaughtLabel,
    shot_count: usize,
    repetition: usize,
}

/// Run the full protocol: for every (spec x condition x taught gender x
/// shot count x repetition), reload the pristine model, implant the noun,
/// sample a fresh mini-batch from the 15-sentence pool, apply one
/// embedding-scope gradient step and evaluate on the test construction.
/// Trials are independent and run in parallel; results are merged in
/// deterministic key order.
pub fn run_protocol(
    pristine: &ModelState,
    vocab: &Vocabulary,
    specs: &[NovelNounSpec],
    config: &ProtocolConfig,
) -> Result<Vec<FewShotTrial>> {
    run_protocol_with_pools(pristine, vocab, specs, config, &PoolSet::shipped()?)
}

pub fn run_protocol_with_pools(
    pristine: &ModelState,
    vocab: &Vocabulary,
    specs: &[NovelNounSpec],
    config: &ProtocolConfig,
    pools: &PoolSet,
) -> Result<Vec<FewShotTrial>> {
    config.few_shot.validate()?;
    if specs.is_empty() {
        return Err(Error::Config("no novel-noun specs".into()));
    }
    if config.conditions.is_empty() {
        return Err(Error::Config("no conditions requested".into()));
    }
    for spec in specs {
        spec.validate(vocab)?;
    }

    // validate pool sizes against the shot counts
    let max_shot = *config.few_shot.shots.iter().max().unwrap();
    for &tag in &config.conditions {
        let condition = Condition::for_tag(tag);
        for gender in [Gender::Feminine, Gender::Masculine] {
            let pool = pools.learning(condition.learning, gender)?;
            if pool.len() < max_shot || pool.len() < config.few_shot.pool_size {
                return Err(Error::Config(format!(
                    "learning pool for condition {tag} has {} sentences; \
                     pool_size {} and max shot {max_shot} do not fit",
                    pool.len(),
                    config.few_shot.pool_size,
                )));
            }
        }
    }
    if config.include_control
        && (pools.control.len() < max_shot || pools.control.len() < config.few_shot.pool_size)
    {
        return Err(Error::Config(format!(
            "control pool has {} sentences; pool_size {} and max shot {max_shot} do not fit",
            pools.control.len(),
            config.few_shot.pool_size,
        )));
    }

    let mut tasks = Vec::new();
    for (spec_index, _) in specs.iter().enumerate() {
        for &condition in &config.conditions {
            for taught in [TaughtLabel::Feminine, TaughtLabel::Masculine] {
                for &shot_count in &config.few_shot.shots {
                    for repetition in 1..=config.few_shot.repetitions {
                        tasks.push(TrialTask {
                            spec_index,
                            condition: Some(condition),
                            taught,
                            shot_count,
                            repetition,
                        });
                    }
                }
            }
        }
        if config.include_control {
            for &shot_count in &config.few_shot.shots {
                for repetition in 1..=config.few_shot.repetitions {
                    tasks.push(TrialTask {
                        spec_index,
                        condition: None,
                        taught: TaughtLabel::Neutral,
                        shot_count,
                        repetition,
                    });
                }
            }
        }
    }

    let mut trials: Vec<FewShotTrial> = tasks
        .par_iter()
        .map(|task| run_trial(pristine, vocab, &specs[task.spec_index], task, config, pools))
        .collect::<Result<Vec<_>>>()?;
    trials.sort_by_key(|t| t.key());
    Ok(trials)
}

fn run_trial(
    pristine: &ModelState,
    vocab: &Vocabulary,
    spec: &NovelNounSpec,
    task: &TrialTask,
    config: &ProtocolConfig,
    pools: &PoolSet,
) -> Result<FewShotTrial> {
    // the control condition evaluates on the noun-adjective suite
    let eval_condition = Condition::for_tag(task.condition.unwrap_or(ConditionTag::A));
    let taught_gender = task.taught.gender();

    let mut model = pristine.clone();
    let vector = synthesize_novel_embedding(&model, spec)?;
    let slot = implant_novel_noun(&mut model, &vector, vocab)?;
    if slot != spec.slot {
        return Err(Error::Internal(format!(
            "slot mismatch: vocabulary gives {slot}, spec expects {}",
            spec.slot
        )));
    }

    let probe_suite = initial_gender_probe_suite(slot, vocab)?;
    let (init_gender, init_margin) = initial_gender(&model, &probe_suite)?;

    let distances = match eval_condition.test {
        ConstructionKind::NounRelativePronoun => &config.distances_relative,
        _ => &config.distances_adjacent,
    };
    let templates = test_templates(eval_condition.test)?;
    let expected = taught_gender.unwrap_or(Gender::Feminine);
    let suite = build_test_suite(
        &eval_condition,
        &[(slot, expected)],
        distances,
        &templates,
        vocab,
    )?;

    let pre = evaluate_suite(&model, &suite, &config.bootstrap)?;
    let frozen_hash_before = model.non_embedding_hash();

    let pool = match task.taught {
        TaughtLabel::Neutral => &pools.control,
        _ => pools.learning(eval_condition.learning, expected)?,
    };
    let sentences = pool.encode(vocab, slot)?;
    let seed = derive_seed(
        config.few_shot.seed,
        &[
            "trial",
            &config.model_label,
            &spec.label,
            &eval_condition.tag.to_string(),
            &task.taught.to_string(),
            &task.shot_count.to_string(),
            &task.repetition.to_string(),
        ],
    );
    let indices = sample_without_replacement(sentences.len(), task.shot_count, seed);
    let batch: Vec<Vec<TokenId>> = indices.iter().map(|&i| sentences[i].clone()).collect();

    let delta = few_shot_update(&mut model, &batch, slot, config.few_shot.lr, config.few_shot.scope)?;
    let frozen_hash_after = model.non_embedding_hash();
    let post = evaluate_suite(&model, &suite, &config.bootstrap)?;

    let by_distance = |report: &crate::eval::AccuracyReport| -> Vec<(usize, f64)> {
        distances
            .iter()
            .filter_map(|&d| report.accuracy_at_distance(d).map(|a| (d, a)))
            .collect()
    };

    let axis: Vec<f64> = {
        let f = pristine.get_embedding_row(spec.parent_f)?;
        let m = pristine.get_embedding_row(spec.parent_m)?;
        m.iter().zip(&f).map(|(a, b)| a - b).collect()
    };

    Ok(FewShotTrial {
        model_label: config.model_label.clone(),
        spec_label: spec.label.clone(),
        parent_f: spec.parent_f,
        parent_m: spec.parent_m,
        slot,
        condition: eval_condition.tag,
        taught: task.taught,
        shot_count: task.shot_count,
        repetition: task.repetition,
        seed,
        sentence_indices: indices,
        initial_gender: init_gender,
        initial_margin: init_margin,
        n_items: suite.len(),
        pre_accuracy: pre.overall_accuracy,
        post_accuracy: post.overall_accuracy,
        pre_by_distance: by_distance(&pre),
        post_by_distance: by_distance(&post),
        pre_ties: pre.overall_ties,
        post_ties: post.overall_ties,
        frozen_hash_before,
        frozen_hash_after,
        delta_rows: delta.rows,
        slot_delta: delta.slot_delta,
        gender_axis: axis,
    })
}

fn sample_without_replacement(n: usize, k: usize, seed: u64) -> Vec<usize> {
    use rand::SeedableRng;
    let mut rng = rand_pcg::Pcg64::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let i = rng.gen_range(0..pool.len());
        out.push(pool.swap_remove(i));
    }
    out
}

/// One JSON record per trial.
pub fn trials_to_jsonl(trials: &[FewShotTrial]) -> Result<String> {
    let mut out = String::new();
    for trial in trials {
        let line = serde_json::to_string(trial)
            .map_err(|e| Error::Internal(format!("trial encode: {e}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

pub fn trials_from_jsonl(text: &str) -> Result<Vec<FewShotTrial>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Input(format!("trial decode: {e}"))))
        .collect()
}

/// Long-format CSV for plotting: one row per trial and distance, plus an
/// `all` row per trial.
pub fn trials_to_csv(trials: &[FewShotTrial]) -> String {
    let mut out = String::from(
        "model,spec,condition,taught,shots,rep,distance,n_items,pre_accuracy,post_accuracy,\
         initial_gender,slot_delta_norm,axis_projection\n",
    );
    for t in trials {
        let slot_delta_norm = dot(&t.slot_delta, &t.slot_delta).sqrt();
        let mut push_row = |distance: &str, pre: f64, post: f64| {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{:.6},{:.6},{},{:.6},{:.6}",
                t.model_label,
                t.spec_label,
                t.condition,
                t.taught,
                t.shot_count,
                t.repetition,
                distance,
                t.n_items,
                pre,
                post,
                t.initial_gender,
                slot_delta_norm,
                t.axis_projection(),
            );
        };
        push_row("all", t.pre_accuracy, t.post_accuracy);
        for ((d, pre), (_, post)) in t.pre_by_distance.iter().zip(&t.post_by_distance) {
            push_row(&d.to_string(), *pre, *post);
        }
    }
    out
}

pub fn save_trials(trials: &[FewShotTrial], jsonl_path: &Path, csv_path: &Path) -> Result<()> {
    std::fs::write(jsonl_path, trials_to_jsonl(trials)?)
        .map_err(|e| Error::io(jsonl_path.display().to_string(), e))?;
    std::fs::write(csv_path, trials_to_csv(trials))
        .map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    Ok(())
}

pub fn load_trials(jsonl_path: &Path) -> Result<Vec<FewShotTrial>> {
    let text = std::fs::read_to_string(jsonl_path)
        .map_err(|e| Error::io(jsonl_path.display().to_string(), e))?;
    trials_from_jsonl(&text)
}
