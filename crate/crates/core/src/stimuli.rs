//! Shipped French stimulus inventories: the learning-sentence pools for
//! each condition (feminine/masculine variants plus a gender-neutral
//! control pool) and the test-suite templates for each agreement
//! construction. Pool files hold one sentence per line with a `NOUN`
//! placeholder and a trailing `<eos>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::{TokenId, Vocabulary, EOS_TOKEN};
use crate::error::{Error, Result};
use crate::eval::{ConstructionKind, SuiteTemplates};
use crate::grammar::{Gender, GenderedPair};

pub const NOUN_PLACEHOLDER: &str = "NOUN";

/// A pool of learning sentences sharing one construction, with the noun
/// left as a placeholder.
#[derive(Clone, Debug, PartialEq)]
pub struct StimulusPool {
    pub sentences: Vec<Vec<String>>,
}

impl StimulusPool {
    fn from_lines(lines: &[&str]) -> Self {
        StimulusPool {
            sentences: lines
                .iter()
                .map(|l| l.split(' ').map(|w| w.to_string()).collect())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, sentence) in self.sentences.iter().enumerate() {
            let placeholders = sentence
                .iter()
                .filter(|w| w.as_str() == NOUN_PLACEHOLDER)
                .count();
            if placeholders != 1 {
                return Err(Error::Stimulus(format!(
                    "pool sentence {} must contain the NOUN placeholder exactly once",
                    i + 1
                )));
            }
            if sentence.last().map(String::as_str) != Some(EOS_TOKEN) {
                return Err(Error::Stimulus(format!(
                    "pool sentence {} must end with {EOS_TOKEN}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Substitute the placeholder and encode against a vocabulary. Every
    /// non-placeholder token must be in-vocabulary.
    pub fn encode(&self, vocab: &Vocabulary, noun_id: TokenId) -> Result<Vec<Vec<TokenId>>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.sentences.len());
        for sentence in &self.sentences {
            let mut ids = Vec::with_capacity(sentence.len());
            for word in sentence {
                if word == NOUN_PLACEHOLDER {
                    ids.push(noun_id);
                } else {
                    let id = vocab.id(word).ok_or_else(|| {
                        Error::Stimulus(format!("pool token {word:?} not in vocabulary"))
                    })?;
                    ids.push(id);
                }
            }
            out.push(ids);
        }
        Ok(out)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for sentence in &self.sentences {
            let _ = writeln!(out, "{}", sentence.join(" "));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let pool = StimulusPool {
            sentences: text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| l.split_whitespace().map(|w| w.to_string()).collect())
                .collect(),
        };
        pool.validate()?;
        Ok(pool)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }
}

const ARTICLE_NOUN_FRAMES: &[&str] = &[
    "je vois", "je jette", "je tiens", "on admire", "on jette", "on voit", "on observe",
    "nous avons vu", "nous observons", "nous aimons", "nous avons mangé", "j' ai vu", "j' aime",
    "j' ai mangé", "j' observe",
];

/// Adjectives of the distance-zero elided-article learning sentences,
/// (masculine, feminine).
const LEARNING_ADJECTIVES: &[(&str, &str)] = &[
    ("brun", "brune"),
    ("élégant", "élégante"),
    ("excessif", "excessive"),
    ("blanc", "blanche"),
    ("violent", "violente"),
    ("noir", "noire"),
    ("agressif", "agressive"),
    ("brillant", "brillante"),
    ("massif", "massive"),
    ("lumineux", "lumineuse"),
    ("coloré", "colorée"),
    ("gravé", "gravée"),
    ("sérieux", "sérieuse"),
    ("lourd", "lourde"),
    ("ancien", "ancienne"),
];

/// Participles of the distance-zero elided-article learning sentences.
/// The pool repeats fermé/fermée; the repetition is kept as shipped.
const LEARNING_PARTICIPLES: &[(&str, &str)] = &[
    ("détruit", "détruite"),
    ("brisé", "brisée"),
    ("fermé", "fermée"),
    ("renversé", "renversée"),
    ("allumé", "allumée"),
    ("gelé", "gelée"),
    ("rayé", "rayée"),
    ("bloqué", "bloquée"),
    ("fermé", "fermée"),
    ("lavé", "lavée"),
    ("peint", "peinte"),
    ("pressé", "pressée"),
    ("enflammé", "enflammée"),
    ("coupé", "coupée"),
    ("écrasé", "écrasée"),
];

/// Learning pool for a given learning construction and taught gender.
pub fn learning_pool(kind: ConstructionKind, gender: Gender) -> Result<StimulusPool> {
    let lines: Vec<String> = match kind {
        ConstructionKind::ArticleNoun => {
            let article = match gender {
                Gender::Feminine => "la",
                Gender::Masculine => "le",
            };
            ARTICLE_NOUN_FRAMES
                .iter()
                .map(|frame| format!("{frame} {article} {NOUN_PLACEHOLDER} {EOS_TOKEN}"))
                .collect()
        }
        ConstructionKind::NounAdjective => LEARNING_ADJECTIVES
            .iter()
            .map(|(m, f)| {
                let target = if gender == Gender::Feminine { f } else { m };
                format!("je vois l' {NOUN_PLACEHOLDER} {target} {EOS_TOKEN}")
            })
            .collect(),
        ConstructionKind::NounParticiple => LEARNING_PARTICIPLES
            .iter()
            .map(|(m, f)| {
                let target = if gender == Gender::Feminine { f } else { m };
                format!("je vois l' {NOUN_PLACEHOLDER} {target} {EOS_TOKEN}")
            })
            .collect(),
        ConstructionKind::NounRelativePronoun => {
            return Err(Error::Stimulus(
                "relative-pronoun frames are test constructions, not learning pools".into(),
            ))
        }
    };
    let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
    Ok(StimulusPool::from_lines(&refs))
}

/// Gender-neutral control pool: the elided article and no gendered token.
pub fn control_pool() -> StimulusPool {
    let lines: Vec<String> = ARTICLE_NOUN_FRAMES
        .iter()
        .map(|frame| format!("{frame} l' {NOUN_PLACEHOLDER} {EOS_TOKEN}"))
        .collect();
    let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
    StimulusPool::from_lines(&refs)
}

/// Test-target adjective minimal pairs.
const TEST_ADJECTIVES: &[(&str, &str)] = &[
    ("vert", "verte"),
    ("petit", "petite"),
    ("grand", "grande"),
    ("gris", "grise"),
    ("blond", "blonde"),
    ("rond", "ronde"),
    ("droit", "droite"),
    ("étroit", "étroite"),
    ("lent", "lente"),
    ("prudent", "prudente"),
    ("parfait", "parfaite"),
    ("plat", "plate"),
    ("profond", "profonde"),
    ("chaud", "chaude"),
    ("froid", "froide"),
];

/// Test-target participle minimal pairs.
const TEST_PARTICIPLES: &[(&str, &str)] = &[
    ("fixé", "fixée"),
    ("cassé", "cassée"),
    ("posé", "posée"),
    ("rangé", "rangée"),
    ("plié", "pliée"),
    ("usé", "usée"),
    ("vidé", "vidée"),
    ("monté", "montée"),
    ("baissé", "baissée"),
    ("tourné", "tournée"),
    ("porté", "portée"),
    ("jeté", "jetée"),
    ("donné", "donnée"),
    ("perdu", "perdue"),
    ("vendu", "vendue"),
];

const NEGATED_FRAMES: &[&str] = &["je ne vois pas de", "on ne voit pas de"];

const RELATIVE_FRAMES: &[&str] = &[
    "je vois l'",
    "tu vois l'",
    "on voit l'",
    "nous voyons l'",
    "vous voyez l'",
    "j' observe l'",
    "tu observes l'",
    "on observe l'",
    "nous observons l'",
    "vous observez l'",
    "je regarde l'",
    "tu regardes l'",
    "on regarde l'",
    "nous regardons l'",
    "vous regardez l'",
    "j' admire l'",
    "tu admires l'",
    "on admire l'",
    "nous admirons l'",
    "vous admirez l'",
    "je tiens l'",
    "tu tiens l'",
    "on tient l'",
    "nous tenons l'",
];

fn split_frames(frames: &[&str]) -> Vec<Vec<String>> {
    frames
        .iter()
        .map(|f| f.split(' ').map(|w| w.to_string()).collect())
        .collect()
}

fn gap_map(entries: &[(usize, &[&str])]) -> BTreeMap<usize, Vec<String>> {
    entries
        .iter()
        .map(|(d, ws)| (*d, ws.iter().map(|w| w.to_string()).collect()))
        .collect()
}

/// Intervening-phrase and target inventories for a test construction.
/// The phrases are gender-neutral, and some token combinations never occur
/// in the synthetic training grammar, so suites probe generalization rather
/// than recall of literal training n-grams.
pub fn test_templates(kind: ConstructionKind) -> Result<SuiteTemplates> {
    match kind {
        ConstructionKind::NounAdjective | ConstructionKind::NounParticiple => {
            let targets: Vec<GenderedPair> = if kind == ConstructionKind::NounAdjective {
                TEST_ADJECTIVES
            } else {
                TEST_PARTICIPLES
            }
            .iter()
            .map(|(m, f)| GenderedPair::new(m, f))
            .collect();
            Ok(SuiteTemplates {
                beginnings: split_frames(NEGATED_FRAMES),
                gaps: gap_map(&[
                    (0, &[] as &[&str]),
                    (1, &["souvent"]),
                    (2, &["qui", "est"]),
                    (3, &["qui", "est", "parfois"]),
                    (4, &["qui", "est", "encore", "plus"]),
                    (5, &["en", "ce", "moment", "qui", "est"]),
                    (6, &["en", "ce", "moment", "qui", "est", "presque"]),
                ]),
                targets,
            })
        }
        ConstructionKind::NounRelativePronoun => Ok(SuiteTemplates {
            beginnings: split_frames(RELATIVE_FRAMES),
            gaps: gap_map(&[
                (1, &["sur"] as &[&str]),
                (2, &["juste", "sur"]),
                (3, &["plutôt", "marron", "sur"]),
                (4, &["plus", "ou", "moins", "sur"]),
                (5, &["plus", "ou", "moins", "marron", "sur"]),
            ]),
            targets: vec![GenderedPair::new("lequel", "laquelle")],
        }),
        ConstructionKind::ArticleNoun => Err(Error::Stimulus(
            "article-noun frames are learning constructions, not test suites".into(),
        )),
    }
}

/// Default test distances per construction.
pub fn default_distances(kind: ConstructionKind) -> Vec<usize> {
    match kind {
        ConstructionKind::NounRelativePronoun => vec![1, 2, 3, 4, 5],
        _ => vec![0, 1, 3, 6],
    }
}

/// Write every shipped pool to a directory, feminine/masculine variants in
/// paired files.
pub fn write_pool_files(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    for (kind, stem) in [
        (ConstructionKind::ArticleNoun, "learn_article_noun"),
        (ConstructionKind::NounAdjective, "learn_noun_adjective"),
        (ConstructionKind::NounParticiple, "learn_noun_participle"),
    ] {
        for gender in [Gender::Feminine, Gender::Masculine] {
            let pool = learning_pool(kind, gender)?;
            pool.save(&dir.join(format!("{stem}_{gender}.txt")))?;
        }
    }
    control_pool().save(&dir.join("learn_control.txt"))?;
    Ok(())
}
