//! Targeted minimal-pair gender-agreement evaluation: suite construction,
//! scoring by comparing the conditional probabilities of the two target
//! forms, and accuracy aggregation with bootstrap confidence intervals.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::grammar::{Gender, GenderedPair};
use crate::model::{next_token_distribution, ModelState};
use crate::util::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConditionTag {
    A,
    B,
    C,
    D,
}

impl ConditionTag {
    pub fn all() -> [ConditionTag; 4] {
        [ConditionTag::A, ConditionTag::B, ConditionTag::C, ConditionTag::D]
    }
}

impl std::fmt::Display for ConditionTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ConditionTag::A => "A",
            ConditionTag::B => "B",
            ConditionTag::C => "C",
            ConditionTag::D => "D",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for ConditionTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(ConditionTag::A),
            "B" | "b" => Ok(ConditionTag::B),
            "C" | "c" => Ok(ConditionTag::C),
            "D" | "d" => Ok(ConditionTag::D),
            other => Err(Error::Input(format!("unknown condition: {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstructionKind {
    ArticleNoun,
    NounAdjective,
    NounParticiple,
    NounRelativePronoun,
}

/// A learning/test construction pairing. Learning reveals gender in one
/// agreement context; testing probes a different one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub tag: ConditionTag,
    pub learning: ConstructionKind,
    pub test: ConstructionKind,
}

impl Condition {
    pub fn for_tag(tag: ConditionTag) -> Condition {
        let (learning, test) = match tag {
            ConditionTag::A => (ConstructionKind::ArticleNoun, ConstructionKind::NounAdjective),
            ConditionTag::B => (
                ConstructionKind::ArticleNoun,
                ConstructionKind::NounParticiple,
            ),
            ConditionTag::C => (
                ConstructionKind::NounAdjective,
                ConstructionKind::NounRelativePronoun,
            ),
            ConditionTag::D => (
                ConstructionKind::NounParticiple,
                ConstructionKind::NounRelativePronoun,
            ),
        };
        Condition { tag, learning, test }
    }

    pub fn all() -> Vec<Condition> {
        ConditionTag::all().into_iter().map(Condition::for_tag).collect()
    }
}

/// Sentence-beginning, intervening-phrase and target inventories used to
/// build a suite for one test construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteTemplates {
    pub beginnings: Vec<Vec<String>>,
    /// Distance (number of intervening gender-neutral words) to phrase.
    pub gaps: BTreeMap<usize, Vec<String>>,
    pub targets: Vec<GenderedPair>,
}

/// One minimal-pair agreement probe: a prefix ending just before the target
/// position, and the two candidate target forms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestItem {
    pub prefix: Vec<TokenId>,
    pub target_f: TokenId,
    pub target_m: TokenId,
    pub condition: ConditionTag,
    pub n_intervening: usize,
    pub noun: TokenId,
    /// Expected gender: the noun's lexical gender for known nouns, or the
    /// taught gender for novel-noun trials.
    pub noun_gender: Gender,
}

/// Cross product of beginnings x nouns x requested distances x target pairs.
pub fn build_test_suite(
    condition: &Condition,
    nouns: &[(TokenId, Gender)],
    distances: &[usize],
    templates: &SuiteTemplates,
    vocab: &Vocabulary,
) -> Result<Vec<TestItem>> {
    if condition.test == ConstructionKind::ArticleNoun {
        return Err(Error::Stimulus(
            "article-noun is a learning construction; no test suite exists for it".into(),
        ));
    }
    let lookup = |word: &str| -> Result<TokenId> {
        vocab
            .id(word)
            .ok_or_else(|| Error::Stimulus(format!("template token {word:?} not in vocabulary")))
    };
    let beginnings: Vec<Vec<TokenId>> = templates
        .beginnings
        .iter()
        .map(|b| b.iter().map(|w| lookup(w)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut gaps: BTreeMap<usize, Vec<TokenId>> = BTreeMap::new();
    for &d in distances {
        let phrase = templates.gaps.get(&d).ok_or_else(|| {
            Error::Stimulus(format!("no intervening phrase of length {d} in templates"))
        })?;
        if phrase.len() != d {
            return Err(Error::Stimulus(format!(
                "intervening phrase {phrase:?} has length {} but is registered at distance {d}",
                phrase.len()
            )));
        }
        gaps.insert(d, phrase.iter().map(|w| lookup(w)).collect::<Result<Vec<_>>>()?);
    }
    let targets: Vec<(TokenId, TokenId)> = templates
        .targets
        .iter()
        .map(|pair| Ok((lookup(&pair.feminine)?, lookup(&pair.masculine)?)))
        .collect::<Result<Vec<_>>>()?;

    let mut items = Vec::new();
    for beginning in &beginnings {
        for &(noun, noun_gender) in nouns {
            for &d in distances {
                let gap = &gaps[&d];
                let mut prefix = Vec::with_capacity(beginning.len() + 1 + gap.len());
                prefix.extend_from_slice(beginning);
                prefix.push(noun);
                prefix.extend_from_slice(gap);
                for &(target_f, target_m) in &targets {
                    if target_f == target_m {
                        return Err(Error::Stimulus(format!(
                            "degenerate minimal pair at token id {target_f}"
                        )));
                    }
                    if prefix.iter().filter(|&&t| t == noun).count() != 1 {
                        return Err(Error::Stimulus(format!(
                            "prefix must contain the probed noun {noun} exactly once"
                        )));
                    }
                    if prefix.contains(&target_f) || prefix.contains(&target_m) {
                        return Err(Error::Stimulus(
                            "a target form appears inside the prefix".into(),
                        ));
                    }
                    items.push(TestItem {
                        prefix: prefix.clone(),
                        target_f,
                        target_m,
                        condition: condition.tag,
                        n_intervening: d,
                        noun,
                        noun_gender,
                    });
                }
            }
        }
    }
    if items.is_empty() {
        return Err(Error::Stimulus("empty test suite".into()));
    }
    Ok(items)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    Feminine,
    Masculine,
    Tie,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub p_f: f64,
    pub p_m: f64,
    pub choice: Choice,
    /// Choice matches the item's expected gender; ties are incorrect.
    pub correct: bool,
}

/// Compare the conditional probabilities of the two target forms at the
/// single target position. Exact ties are recorded and scored incorrect.
pub fn score_item(model: &ModelState, item: &TestItem) -> Result<ScoredItem> {
    let dist = next_token_distribution(model, &item.prefix)?;
    let p_f = dist[item.target_f as usize];
    let p_m = dist[item.target_m as usize];
    let choice = if p_f > p_m {
        Choice::Feminine
    } else if p_m > p_f {
        Choice::Masculine
    } else {
        Choice::Tie
    };
    let correct = matches!(
        (choice, item.noun_gender),
        (Choice::Feminine, Gender::Feminine) | (Choice::Masculine, Gender::Masculine)
    );
    Ok(ScoredItem {
        p_f,
        p_m,
        choice,
        correct,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
    pub confidence: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 1000,
            seed: 0,
            confidence: 0.95,
        }
    }
}

/// Percentile bootstrap interval for the mean of `values`, clamped to
/// bracket the point estimate.
pub fn bootstrap_mean_ci(values: &[f64], config: &BootstrapConfig, label: &str) -> (f64, f64) {
    let n = values.len();
    let point = values.iter().sum::<f64>() / n as f64;
    if n == 1 || config.resamples == 0 {
        return (point, point);
    }
    let mut rng = rng_for(config.seed, &["bootstrap", label]);
    let mut means = Vec::with_capacity(config.resamples);
    for _ in 0..config.resamples {
        let mut acc = 0.0;
        for _ in 0..n {
            acc += values[rng.gen_range(0..n)];
        }
        means.push(acc / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = (1.0 - config.confidence) / 2.0;
    let pick = |q: f64| means[((config.resamples - 1) as f64 * q).round() as usize];
    let lo = pick(alpha).min(point);
    let hi = pick(1.0 - alpha).max(point);
    (lo, hi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub condition: ConditionTag,
    pub gender: Gender,
    pub distance: usize,
    pub n: usize,
    pub accuracy: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub ties: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub cells: Vec<CellReport>,
    pub overall_n: usize,
    pub overall_accuracy: f64,
    pub overall_ci: (f64, f64),
    pub overall_ties: usize,
}

impl AccuracyReport {
    /// Accuracy over the cells at one distance, item-weighted.
    pub fn accuracy_at_distance(&self, distance: usize) -> Option<f64> {
        let mut n = 0usize;
        let mut correct = 0.0;
        for cell in self.cells.iter().filter(|c| c.distance == distance) {
            n += cell.n;
            correct += cell.accuracy * cell.n as f64;
        }
        (n > 0).then(|| correct / n as f64)
    }

    /// Accuracy over the cells for one expected gender, item-weighted.
    pub fn accuracy_for_gender(&self, gender: Gender) -> Option<f64> {
        let mut n = 0usize;
        let mut correct = 0.0;
        for cell in self.cells.iter().filter(|c| c.gender == gender) {
            n += cell.n;
            correct += cell.accuracy * cell.n as f64;
        }
        (n > 0).then(|| correct / n as f64)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("condition,gender,distance,n,accuracy,ci_lo,ci_hi,ties\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6},{}",
                c.condition, c.gender, c.distance, c.n, c.accuracy, c.ci_lo, c.ci_hi, c.ties
            );
        }
        out
    }
}

/// Score every item (read-only over the model, in parallel, merged in item
/// order) and aggregate per (condition, gender, distance) cell with
/// bootstrap confidence intervals over items.
pub fn evaluate_suite(
    model: &ModelState,
    items: &[TestItem],
    bootstrap: &BootstrapConfig,
) -> Result<AccuracyReport> {
    if items.is_empty() {
        return Err(Error::Input("empty test suite".into()));
    }
    let scored: Result<Vec<ScoredItem>> =
        items.par_iter().map(|item| score_item(model, item)).collect();
    let scored = scored?;

    let mut cells: BTreeMap<(ConditionTag, u8, usize), Vec<(bool, bool)>> = BTreeMap::new();
    for (item, s) in items.iter().zip(&scored) {
        let gender_key = match item.noun_gender {
            Gender::Feminine => 0u8,
            Gender::Masculine => 1u8,
        };
        cells
            .entry((item.condition, gender_key, item.n_intervening))
            .or_default()
            .push((s.correct, s.choice == Choice::Tie));
    }

    let mut reports = Vec::with_capacity(cells.len());
    for ((condition, gender_key, distance), outcomes) in &cells {
        let n = outcomes.len();
        let correct: Vec<f64> = outcomes.iter().map(|&(c, _)| c as u8 as f64).collect();
        let accuracy = correct.iter().sum::<f64>() / n as f64;
        let ties = outcomes.iter().filter(|&&(_, t)| t).count();
        let gender = if *gender_key == 0 {
            Gender::Feminine
        } else {
            Gender::Masculine
        };
        let label = format!("{condition}/{gender}/{distance}");
        let (ci_lo, ci_hi) = bootstrap_mean_ci(&correct, bootstrap, &label);
        reports.push(CellReport {
            condition: *condition,
            gender,
            distance: *distance,
            n,
            accuracy,
            ci_lo,
            ci_hi,
            ties,
        });
    }

    let all_correct: Vec<f64> = scored.iter().map(|s| s.correct as u8 as f64).collect();
    let overall_accuracy = all_correct.iter().sum::<f64>() / all_correct.len() as f64;
    let overall_ci = bootstrap_mean_ci(&all_correct, bootstrap, "overall");
    Ok(AccuracyReport {
        cells: reports,
        overall_n: items.len(),
        overall_accuracy,
        overall_ci,
        overall_ties: scored.iter().filter(|s| s.choice == Choice::Tie).count(),
    })
}

/// A frequency-matched feminine/masculine noun pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NounPair {
    pub feminine: TokenId,
    pub masculine: TokenId,
    pub feminine_count: u64,
    pub masculine_count: u64,
}

/// Select `n_per_gender` nouns of each gender that occur at least
/// `min_count` times, greedily paired by closest corpus counts.
pub fn build_known_noun_baseline(
    vocab: &Vocabulary,
    corpus_freqs: &[u64],
    lexicon: &[(String, Gender)],
    n_per_gender: usize,
    min_count: u64,
) -> Result<Vec<NounPair>> {
    let mut feminine: Vec<(TokenId, u64)> = Vec::new();
    let mut masculine: Vec<(TokenId, u64)> = Vec::new();
    for (word, gender) in lexicon {
        let Some(id) = vocab.id(word) else { continue };
        let count = corpus_freqs[id as usize];
        if count < min_count {
            continue;
        }
        match gender {
            Gender::Feminine => feminine.push((id, count)),
            Gender::Masculine => masculine.push((id, count)),
        }
    }
    if feminine.len() < n_per_gender || masculine.len() < n_per_gender {
        return Err(Error::Config(format!(
            "need {n_per_gender} nouns per gender with count >= {min_count}; \
             found {} feminine and {} masculine",
            feminine.len(),
            masculine.len()
        )));
    }
    // repeatedly take the globally closest-count (feminine, masculine) pair
    let mut pairs = Vec::with_capacity(n_per_gender);
    for _ in 0..n_per_gender {
        let mut best: Option<(usize, usize, u64)> = None;
        for (i, &(_, fc)) in feminine.iter().enumerate() {
            for (j, &(_, mc)) in masculine.iter().enumerate() {
                let diff = fc.abs_diff(mc);
                if best.is_none_or(|(_, _, d)| diff < d) {
                    best = Some((i, j, diff));
                }
            }
        }
        let (i, j, _) = best.unwrap();
        let (f_id, f_count) = feminine.remove(i);
        let (m_id, m_count) = masculine.remove(j);
        pairs.push(NounPair {
            feminine: f_id,
            masculine: m_id,
            feminine_count: f_count,
            masculine_count: m_count,
        });
    }
    Ok(pairs)
}

/// Suite file format: tab-separated fields per line; the prefix column is
/// space-joined token strings.
pub fn suite_to_file_string(items: &[TestItem], vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for item in items {
        let prefix = item
            .prefix
            .iter()
            .map(|&id| vocab.token(id))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(
            out,
            "{prefix}\t{}\t{}\t{}\t{}\t{}\t{}",
            vocab.token(item.target_f),
            vocab.token(item.target_m),
            item.condition,
            item.n_intervening,
            vocab.token(item.noun),
            item.noun_gender,
        );
    }
    out
}

pub fn suite_from_file_string(text: &str, vocab: &Vocabulary) -> Result<Vec<TestItem>> {
    let lookup = |word: &str, ln: usize| -> Result<TokenId> {
        vocab.id(word).ok_or_else(|| {
            Error::Input(format!("suite line {ln}: token {word:?} not in vocabulary"))
        })
    };
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ln = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(Error::Input(format!(
                "suite line {ln}: expected 7 tab-separated fields, got {}",
                fields.len()
            )));
        }
        let prefix = fields[0]
            .split(' ')
            .map(|w| lookup(w, ln))
            .collect::<Result<Vec<_>>>()?;
        items.push(TestItem {
            prefix,
            target_f: lookup(fields[1], ln)?,
            target_m: lookup(fields[2], ln)?,
            condition: fields[3].parse()?,
            n_intervening: fields[4]
                .parse()
                .map_err(|e| Error::Input(format!("suite line {ln}: bad distance: {e}")))?,
            noun: lookup(fields[5], ln)?,
            noun_gender: Gender::parse(fields[6])?,
        });
    }
    Ok(items)
}

pub fn save_suite(items: &[TestItem], vocab: &Vocabulary, path: &Path) -> Result<()> {
    std::fs::write(path, suite_to_file_string(items, vocab))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_suite(path: &Path, vocab: &Vocabulary) -> Result<Vec<TestItem>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    suite_from_file_string(&text, vocab)
}
