//! Word-level corpus preparation: tokenization, frequency-ordered
//! vocabulary, unknown-token filtering and the train/valid/test split.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::rng_for;

pub const UNK_TOKEN: &str = "<unk>";
pub const EOS_TOKEN: &str = "<eos>";

/// Fraction of unknown tokens above which a sentence is dropped.
pub const MAX_UNKNOWN_FRACTION: f64 = 0.05;

pub type TokenId = u32;

/// Bidirectional token<->id map, ids dense and ordered by descending corpus
/// frequency after the two reserved entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    /// Corpus count per id; reserved entries hold the counts observed for
    /// their literal token strings (zero when absent).
    frequency: Vec<u64>,
    pub unk_id: TokenId,
    pub eos_id: TokenId,
}

impl Vocabulary {
    /// Build from already-tokenized sentences, keeping the `max_size` most
    /// frequent tokens overall (the two reserved tokens count toward
    /// `max_size`). Ties break lexicographically.
    pub fn build(sentences: &[Vec<String>], max_size: usize) -> Result<Self> {
        if max_size < 2 {
            return Err(Error::Config(format!(
                "vocabulary max_size {max_size} is smaller than the 2 reserved tokens"
            )));
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for sentence in sentences {
            for tok in sentence {
                *counts.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        let eos_count = counts.remove(EOS_TOKEN).unwrap_or(0);
        let unk_count = counts.remove(UNK_TOKEN).unwrap_or(0);

        let mut ordered: Vec<(&str, u64)> = counts.into_iter().collect();
        ordered.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ordered.truncate(max_size - 2);

        let mut tokens = Vec::with_capacity(ordered.len() + 2);
        let mut frequency = Vec::with_capacity(ordered.len() + 2);
        tokens.push(UNK_TOKEN.to_string());
        frequency.push(unk_count);
        tokens.push(EOS_TOKEN.to_string());
        frequency.push(eos_count);
        for (tok, count) in ordered {
            tokens.push(tok.to_string());
            frequency.push(count);
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Ok(Vocabulary {
            tokens,
            index,
            frequency,
            unk_id: 0,
            eos_id: 1,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> TokenId {
        self.id(token).unwrap_or(self.unk_id)
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn frequency_of(&self, id: TokenId) -> u64 {
        self.frequency[id as usize]
    }

    /// Least frequent non-reserved token. Because ids are ordered by
    /// descending frequency with lexicographic tie-breaks, this is the last
    /// id; kept as a scan so it also holds for vocabularies loaded from
    /// files that were not produced by [`Vocabulary::build`].
    pub fn least_frequent_id(&self) -> Option<TokenId> {
        (2..self.tokens.len())
            .map(|i| i as TokenId)
            .min_by(|&a, &b| {
                self.frequency[a as usize]
                    .cmp(&self.frequency[b as usize])
                    .then_with(|| self.tokens[b as usize].cmp(&self.tokens[a as usize]))
            })
    }

    pub fn encode_sentence(&self, tokens: &[String]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.id_or_unk(t)).collect()
    }

    pub fn decode_sentence(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    /// File format: header line `#V=<count>`, then one token per line in id
    /// order. Frequencies are not persisted; loaded vocabularies report a
    /// descending pseudo-count so frequency ordering survives the round
    /// trip.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#V={}", self.tokens.len());
        for tok in &self.tokens {
            let _ = writeln!(out, "{tok}");
        }
        out
    }

    pub fn from_file_string(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Input("empty vocabulary file".into()))?;
        let declared: usize = header
            .strip_prefix("#V=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Input(format!("bad vocabulary header: {header:?}")))?;
        let tokens: Vec<String> = lines.map(|l| l.to_string()).collect();
        if tokens.len() != declared {
            return Err(Error::Input(format!(
                "vocabulary header declares {declared} tokens but file has {}",
                tokens.len()
            )));
        }
        let unk_id = tokens.iter().position(|t| t == UNK_TOKEN);
        let eos_id = tokens.iter().position(|t| t == EOS_TOKEN);
        let (Some(unk_id), Some(eos_id)) = (unk_id, eos_id) else {
            return Err(Error::Input(
                "vocabulary file is missing a reserved <unk> or <eos> token".into(),
            ));
        };
        let mut index = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Input(format!("duplicate token in vocabulary: {t}")));
            }
        }
        let n = tokens.len();
        let frequency = (0..n).map(|i| (n - i) as u64).collect();
        Ok(Vocabulary {
            tokens,
            index,
            frequency,
            unk_id: unk_id as TokenId,
            eos_id: eos_id as TokenId,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_file_string(&text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Train,
    Valid,
    Test,
    Eval,
}

impl std::fmt::Display for SourceTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SourceTag::Train => "train",
            SourceTag::Valid => "valid",
            SourceTag::Test => "test",
            SourceTag::Eval => "eval",
        };
        write!(f, "{s}")
    }
}

/// Id sequences, each terminated by exactly one eos id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizedCorpus {
    pub sentences: Vec<Vec<TokenId>>,
    pub source_tag: SourceTag,
}

impl TokenizedCorpus {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.len()).sum()
    }

    /// Count per token id over the whole corpus.
    pub fn frequencies(&self, vocab_size: usize) -> Vec<u64> {
        let mut counts = vec![0u64; vocab_size];
        for sentence in &self.sentences {
            for &id in sentence {
                counts[id as usize] += 1;
            }
        }
        counts
    }

    /// One sentence per line of space-separated ids.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for sentence in &self.sentences {
            let line: Vec<String> = sentence.iter().map(|id| id.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_file_string(text: &str, source_tag: SourceTag) -> Result<Self> {
        let mut sentences = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ids: std::result::Result<Vec<TokenId>, _> =
                line.split_whitespace().map(|t| t.parse()).collect();
            let ids = ids.map_err(|e| {
                Error::Input(format!("bad id on line {}: {e}", ln + 1))
            })?;
            sentences.push(ids);
        }
        Ok(TokenizedCorpus {
            sentences,
            source_tag,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path, source_tag: SourceTag) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_file_string(&text, source_tag)
    }
}

/// Split raw text into lowercased word tokens, one sentence per line, each
/// with an appended eos marker. Punctuation becomes whitespace except
/// apostrophes; an elided article like `l'` stays a token of its own, so
/// `l'ampoule` tokenizes as `l'` + `ampoule`. Empty lines are dropped.
pub fn tokenize(raw_text: &str) -> Vec<Vec<String>> {
    let mut sentences = Vec::new();
    for line in raw_text.lines() {
        let mut cleaned = String::with_capacity(line.len());
        for ch in line.chars() {
            let lowered = ch.to_lowercase().next().unwrap_or(ch);
            if lowered.is_alphanumeric() || lowered == '\'' {
                cleaned.push(lowered);
            } else {
                cleaned.push(' ');
            }
        }
        let mut tokens = Vec::new();
        for word in cleaned.split_whitespace() {
            for piece in word.split_inclusive('\'') {
                if !piece.is_empty() && piece != "'" {
                    tokens.push(piece.to_string());
                }
            }
        }
        if tokens.is_empty() {
            continue;
        }
        tokens.push(EOS_TOKEN.to_string());
        sentences.push(tokens);
    }
    sentences
}

/// Replace out-of-vocabulary tokens with the unknown id and drop sentences
/// whose unknown fraction (over non-eos tokens) strictly exceeds
/// [`MAX_UNKNOWN_FRACTION`]. Sentences with no content tokens are dropped.
pub fn apply_unknowns_and_filter(
    sentences: &[Vec<String>],
    vocab: &Vocabulary,
    source_tag: SourceTag,
) -> TokenizedCorpus {
    let mut kept = Vec::new();
    for sentence in sentences {
        let mut ids = Vec::with_capacity(sentence.len() + 1);
        let mut unk = 0usize;
        let mut content = 0usize;
        for tok in sentence {
            if tok == EOS_TOKEN {
                continue;
            }
            content += 1;
            let id = vocab.id_or_unk(tok);
            if id == vocab.unk_id {
                unk += 1;
            }
            ids.push(id);
        }
        if content == 0 {
            continue;
        }
        if unk as f64 / content as f64 > MAX_UNKNOWN_FRACTION {
            continue;
        }
        ids.push(vocab.eos_id);
        kept.push(ids);
    }
    TokenizedCorpus {
        sentences: kept,
        source_tag,
    }
}

/// Deterministic shuffle then an 8:1:1 partition by sentence count.
/// Remainder sentences go to train.
pub fn split_corpus(
    corpus: &TokenizedCorpus,
    seed: u64,
) -> Result<(TokenizedCorpus, TokenizedCorpus, TokenizedCorpus)> {
    let n = corpus.sentences.len();
    if n < 10 {
        return Err(Error::Config(format!(
            "corpus has {n} sentences; at least 10 are required for an 8:1:1 split"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_for(seed, &["corpus-split"]);
    order.shuffle(&mut rng);

    let n_valid = n / 10;
    let n_test = n / 10;
    let n_train = n - n_valid - n_test;

    let take = |range: std::ops::Range<usize>, tag| TokenizedCorpus {
        sentences: order[range]
            .iter()
            .map(|&i| corpus.sentences[i].clone())
            .collect(),
        source_tag: tag,
    };
    let train = take(0..n_train, SourceTag::Train);
    let valid = take(n_train..n_train + n_valid, SourceTag::Valid);
    let test = take(n_train + n_valid..n, SourceTag::Test);
    Ok((train, valid, test))
}
