//! Synthetic gendered-grammar corpus generator.
//!
//! Produces French-flavoured sentences in which every gender-marked token
//! (article, adjective, participle, relative pronoun) agrees with the head
//! noun by construction. The lexicon is large enough to train desk-scale
//! models that exhibit measurable agreement behaviour, and it contains every
//! token used by the shipped learning pools and test templates.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::util::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Feminine,
    Masculine,
}

impl Gender {
    pub fn opposite(self) -> Gender {
        match self {
            Gender::Feminine => Gender::Masculine,
            Gender::Masculine => Gender::Feminine,
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            Gender::Feminine => "f",
            Gender::Masculine => "m",
        }
    }

    pub fn parse(s: &str) -> Result<Gender> {
        match s {
            "f" | "F" | "feminine" => Ok(Gender::Feminine),
            "m" | "M" | "masculine" => Ok(Gender::Masculine),
            other => Err(Error::Input(format!("unknown gender label: {other:?}"))),
        }
    }
}

impl std::fmt::Display for Gender {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// A noun with its grammatical gender. Vowel-initial nouns take the elided
/// article `l'`, which hides gender.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NounEntry {
    pub word: String,
    pub gender: Gender,
}

impl NounEntry {
    pub fn vowel_initial(&self) -> bool {
        starts_with_vowel(&self.word)
    }
}

pub fn starts_with_vowel(word: &str) -> bool {
    matches!(
        word.chars().next(),
        Some('a' | 'e' | 'i' | 'o' | 'u' | 'é' | 'è' | 'ê' | 'â' | 'î' | 'ô' | 'û')
    )
}

/// Masculine/feminine surface forms of a gender-inflected word.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenderedPair {
    pub masculine: String,
    pub feminine: String,
}

impl GenderedPair {
    pub fn new(masculine: &str, feminine: &str) -> Self {
        GenderedPair {
            masculine: masculine.into(),
            feminine: feminine.into(),
        }
    }

    pub fn form(&self, gender: Gender) -> &str {
        match gender {
            Gender::Feminine => &self.feminine,
            Gender::Masculine => &self.masculine,
        }
    }
}

/// Relative weights of the sentence templates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateWeights {
    pub article_noun: f64,
    /// Article + noun + gap + adjective/participle: the article and the
    /// inflected form agree with the same noun in one sentence.
    pub article_noun_target: f64,
    pub noun_adjective: f64,
    pub noun_participle: f64,
    pub noun_relative_pronoun: f64,
    pub rare_token: f64,
}

impl Default for TemplateWeights {
    fn default() -> Self {
        TemplateWeights {
            article_noun: 0.21,
            article_noun_target: 0.22,
            noun_adjective: 0.19,
            noun_participle: 0.17,
            noun_relative_pronoun: 0.2,
            rare_token: 0.01,
        }
    }
}

/// Declarative description of the synthetic grammar: lexicon sections,
/// sentence-beginning inventories, intervening-phrase inventories and the
/// masculine/feminine head-noun ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrammarSpec {
    /// Probability that a generated sentence has a masculine head noun.
    pub ratio_masculine: f64,
    pub nouns: Vec<NounEntry>,
    pub adjectives: Vec<GenderedPair>,
    pub participles: Vec<GenderedPair>,
    /// Gender-neutral words used to build intervening material.
    pub fillers: Vec<String>,
    /// Deliberately rare sentinel tokens; the least frequent of these ends
    /// up hosting implanted novel-noun embeddings.
    pub rare_tokens: Vec<String>,
    /// Beginnings for article-noun sentences, without the article.
    pub article_noun_beginnings: Vec<String>,
    /// Beginnings for negated object sentences, ending in "de".
    pub negated_beginnings: Vec<String>,
    /// Beginnings for relative-pronoun sentences, ending in "l'".
    pub relative_beginnings: Vec<String>,
    /// Gender-neutral phrases inserted between noun and adjective or
    /// participle target.
    pub gap_phrases: Vec<Vec<String>>,
    /// Gender-neutral phrases between noun and relative pronoun; each ends
    /// with the preposition "sur".
    pub relative_gap_phrases: Vec<Vec<String>>,
    /// Zipf exponent for noun draws within a gender pool; zero gives
    /// uniform frequencies, larger values a steeper head/tail split like
    /// natural corpora.
    pub noun_zipf_exponent: f64,
    /// Probability of a sentence-initial neutral adverb; breaks up the
    /// otherwise rigid positional structure of the templates.
    pub leading_adverb_rate: f64,
    /// Probability of appending one or two neutral words after the final
    /// slot of a sentence.
    pub trailing_tail_rate: f64,
    pub template_weights: TemplateWeights,
}

const FEMININE_NOUNS: &[&str] = &[
    "table", "maison", "voiture", "porte", "fenêtre", "chaise", "lampe", "tasse", "fourchette",
    "bague", "gomme", "perle", "plante", "tarte", "vanne", "casquette", "cerise", "colle",
    "cuillère", "cuisinière", "guitare", "perruque", "scie", "tablette", "robe", "valise",
    "montagne", "rivière", "route", "chanson", "fleur", "feuille", "bouteille", "corde", "brosse",
    "fusée", "machine", "tomate", "salade", "veste", "chemise", "poche", "cloche", "pierre",
    "banque", "ferme", "statue", "lettre", "carte", "tente", "pelle", "brique", "lune", "plage",
    "forêt", "vache", "chèvre", "poule", "fraise", "pomme", "poire", "banane", "carotte",
    // vowel-initial: take the elided article l'
    "ampoule", "assiette", "écharpe", "étoile", "épée", "orange", "usine", "armoire", "échelle",
    "affiche",
];

const MASCULINE_NOUNS: &[&str] = &[
    "livre", "chat", "chien", "mur", "sac", "vélo", "bol", "bracelet", "foulard", "fouet",
    "stylo", "lustre", "diamant", "robinet", "feutre", "citron", "ruban", "couteau", "violon",
    "bonnet", "marteau", "gâteau", "bateau", "château", "jardin", "poisson", "cheval", "camion",
    "tapis", "manteau", "chapeau", "panier", "miroir", "tiroir", "bureau", "cahier", "crayon",
    "tableau", "pont", "toit", "mouton", "renard", "lapin", "placard", "clavier", "ballon",
    "bouton", "carton", "chiffon", "clou", "seau", "verre", "banc", "journal", "moteur",
    "tracteur", "wagon", "fromage", "beurre", "sucre", "pain", "four", "mot",
    // vowel-initial
    "arbre", "avion", "oiseau", "ordinateur", "escalier", "éléphant", "immeuble", "objet",
    "outil", "anneau",
];

const ADJECTIVES: &[(&str, &str)] = &[
    // used by the distance-zero learning sentences
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
    // used as noun-adjective test targets
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
    // extra coverage
    ("joli", "jolie"),
    ("vrai", "vraie"),
    ("neuf", "neuve"),
    ("vif", "vive"),
    ("bas", "basse"),
    ("gras", "grasse"),
    ("gros", "grosse"),
    ("doux", "douce"),
    ("faux", "fausse"),
    ("léger", "légère"),
    ("premier", "première"),
    ("dernier", "dernière"),
    ("entier", "entière"),
    ("cher", "chère"),
    ("fier", "fière"),
    ("sûr", "sûre"),
    ("clair", "claire"),
    ("obscur", "obscure"),
    ("voisin", "voisine"),
    ("certain", "certaine"),
    ("long", "longue"),
    ("fin", "fine"),
    ("plein", "pleine"),
    ("dur", "dure"),
    ("sec", "sèche"),
];

const PARTICIPLES: &[(&str, &str)] = &[
    // used by the distance-zero learning sentences
    ("détruit", "détruite"),
    ("brisé", "brisée"),
    ("fermé", "fermée"),
    ("renversé", "renversée"),
    ("allumé", "allumée"),
    ("gelé", "gelée"),
    ("rayé", "rayée"),
    ("bloqué", "bloquée"),
    ("lavé", "lavée"),
    ("peint", "peinte"),
    ("pressé", "pressée"),
    ("enflammé", "enflammée"),
    ("coupé", "coupée"),
    ("écrasé", "écrasée"),
    // used as noun-participle test targets
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
    // extra coverage
    ("accroché", "accrochée"),
    ("arraché", "arrachée"),
    ("attaché", "attachée"),
    ("balayé", "balayée"),
    ("brossé", "brossée"),
    ("brûlé", "brûlée"),
    ("chargé", "chargée"),
    ("copié", "copiée"),
    ("décoré", "décorée"),
    ("dessiné", "dessinée"),
    ("emballé", "emballée"),
    ("frappé", "frappée"),
    ("gonflé", "gonflée"),
    ("grillé", "grillée"),
    ("lancé", "lancée"),
    ("marqué", "marquée"),
    ("mélangé", "mélangée"),
    ("mouillé", "mouillée"),
    ("noué", "nouée"),
    ("payé", "payée"),
    ("poussé", "poussée"),
    ("rempli", "remplie"),
    ("réparé", "réparée"),
    ("rincé", "rincée"),
    ("scellé", "scellée"),
    ("soulevé", "soulevée"),
    ("signé", "signée"),
    ("collé", "collée"),
    ("percé", "percée"),
    ("mesuré", "mesurée"),
];

const FILLERS: &[&str] = &[
    "vraiment", "souvent", "parfois", "encore", "déjà", "toujours", "presque", "très", "assez",
    "plutôt", "maintenant", "hier", "demain", "ici", "là", "bien", "mal", "vite", "tard", "tôt",
    "juste", "même", "marron", "ensemble", "ailleurs", "alors", "ensuite", "puis", "cependant",
    "pourtant", "désormais", "autrefois", "longtemps", "partout", "dedans", "dehors", "enfin",
];

const RARE_TOKENS: &[&str] = &[
    "xylophone", "yaourt", "zeste", "kiosque", "kayak", "zigzag", "wapiti", "yucca",
];

const ARTICLE_NOUN_BEGINNINGS: &[&str] = &[
    "je vois",
    "je jette",
    "je tiens",
    "on admire",
    "on jette",
    "on voit",
    "on observe",
    "nous avons vu",
    "nous observons",
    "nous aimons",
    "nous avons mangé",
    "j' ai vu",
    "j' aime",
    "j' ai mangé",
    "j' observe",
];

const NEGATED_BEGINNINGS: &[&str] = &["je ne vois pas de", "on ne voit pas de"];

const RELATIVE_BEGINNINGS: &[&str] = &[
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

fn phrases(spec: &[&[&str]]) -> Vec<Vec<String>> {
    spec.iter()
        .map(|p| p.iter().map(|w| w.to_string()).collect())
        .collect()
}

impl GrammarSpec {
    /// Default gender-balanced grammar.
    pub fn default_spec() -> Self {
        let mut nouns = Vec::new();
        for w in FEMININE_NOUNS {
            nouns.push(NounEntry {
                word: w.to_string(),
                gender: Gender::Feminine,
            });
        }
        for w in MASCULINE_NOUNS {
            nouns.push(NounEntry {
                word: w.to_string(),
                gender: Gender::Masculine,
            });
        }
        GrammarSpec {
            ratio_masculine: 0.5,
            nouns,
            adjectives: ADJECTIVES
                .iter()
                .map(|(m, f)| GenderedPair::new(m, f))
                .collect(),
            participles: PARTICIPLES
                .iter()
                .map(|(m, f)| GenderedPair::new(m, f))
                .collect(),
            fillers: FILLERS.iter().map(|w| w.to_string()).collect(),
            rare_tokens: RARE_TOKENS.iter().map(|w| w.to_string()).collect(),
            article_noun_beginnings: ARTICLE_NOUN_BEGINNINGS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            negated_beginnings: NEGATED_BEGINNINGS.iter().map(|s| s.to_string()).collect(),
            relative_beginnings: RELATIVE_BEGINNINGS.iter().map(|s| s.to_string()).collect(),
            gap_phrases: phrases(&[
                &["vraiment"],
                &["souvent"],
                &["encore"],
                &["déjà"],
                &["toujours"],
                &["parfois"],
                &["presque"],
                &["qui", "est"],
                &["vraiment", "très"],
                &["plutôt", "très"],
                &["encore", "plus"],
                &["qui", "est", "vraiment"],
                &["qui", "est", "très"],
                &["en", "ce", "moment"],
                &["qui", "est", "déjà", "très"],
                &["qui", "est", "encore", "plus"],
                &["en", "ce", "moment", "qui", "est"],
                &["qui", "est", "déjà", "vraiment", "très"],
                &["en", "ce", "moment", "qui", "est", "vraiment"],
                &["en", "ce", "moment", "qui", "est", "très"],
            ]),
            relative_gap_phrases: phrases(&[
                &["sur"],
                &["juste", "sur"],
                &["assez", "marron", "sur"],
                &["plus", "ou", "moins", "sur"],
                &["plus", "ou", "moins", "marron", "sur"],
            ]),
            noun_zipf_exponent: 0.9,
            leading_adverb_rate: 0.35,
            trailing_tail_rate: 0.4,
            template_weights: TemplateWeights::default(),
        }
    }

    /// Preset with a 0.7 masculine head-noun ratio, for studying the
    /// masculine-default effect.
    pub fn biased_spec() -> Self {
        GrammarSpec {
            ratio_masculine: 0.7,
            ..Self::default_spec()
        }
    }

    pub fn nouns_of(&self, gender: Gender) -> impl Iterator<Item = &NounEntry> {
        self.nouns.iter().filter(move |n| n.gender == gender)
    }

    /// All gendered surface forms (articles, pronouns, adjective and
    /// participle inflections) keyed by the gender they mark.
    pub fn gender_marked_forms(&self) -> Vec<(String, Gender)> {
        let mut out = vec![
            ("le".to_string(), Gender::Masculine),
            ("la".to_string(), Gender::Feminine),
            ("lequel".to_string(), Gender::Masculine),
            ("laquelle".to_string(), Gender::Feminine),
        ];
        for pair in self.adjectives.iter().chain(&self.participles) {
            out.push((pair.masculine.clone(), Gender::Masculine));
            out.push((pair.feminine.clone(), Gender::Feminine));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ratio_masculine) {
            return Err(Error::Config(format!(
                "ratio_masculine {} outside [0, 1]",
                self.ratio_masculine
            )));
        }
        for (label, rate) in [
            ("leading_adverb_rate", self.leading_adverb_rate),
            ("trailing_tail_rate", self.trailing_tail_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{label} {rate} outside [0, 1]")));
            }
        }
        if !(0.0..=3.0).contains(&self.noun_zipf_exponent) {
            return Err(Error::Config(format!(
                "noun_zipf_exponent {} outside [0, 3]",
                self.noun_zipf_exponent
            )));
        }
        for (label, empty) in [
            ("nouns", self.nouns.is_empty()),
            ("adjectives", self.adjectives.is_empty()),
            ("participles", self.participles.is_empty()),
            ("fillers", self.fillers.is_empty()),
            ("article_noun_beginnings", self.article_noun_beginnings.is_empty()),
            ("negated_beginnings", self.negated_beginnings.is_empty()),
            ("relative_beginnings", self.relative_beginnings.is_empty()),
            ("gap_phrases", self.gap_phrases.is_empty()),
            ("relative_gap_phrases", self.relative_gap_phrases.is_empty()),
        ] {
            if empty {
                return Err(Error::Config(format!("grammar section {label} is empty")));
            }
        }
        for gender in [Gender::Feminine, Gender::Masculine] {
            if self.nouns_of(gender).next().is_none() {
                return Err(Error::Config(format!("no {gender} nouns in grammar")));
            }
            if !self.nouns_of(gender).any(|n| n.vowel_initial()) {
                return Err(Error::Config(format!(
                    "no vowel-initial {gender} nouns; the l' templates need them"
                )));
            }
        }
        for pair in self.adjectives.iter().chain(&self.participles) {
            if pair.masculine == pair.feminine {
                return Err(Error::Config(format!(
                    "inflected pair has identical forms: {}",
                    pair.masculine
                )));
            }
        }
        let marked: std::collections::HashSet<&str> = self
            .adjectives
            .iter()
            .chain(&self.participles)
            .flat_map(|p| [p.masculine.as_str(), p.feminine.as_str()])
            .chain(["le", "la", "lequel", "laquelle"])
            .collect();
        for filler in &self.fillers {
            if marked.contains(filler.as_str()) {
                return Err(Error::Config(format!(
                    "filler {filler:?} collides with a gender-marked form"
                )));
            }
        }
        for phrase in &self.relative_gap_phrases {
            if phrase.last().map(String::as_str) != Some("sur") {
                return Err(Error::Config(
                    "relative gap phrases must end with \"sur\"".into(),
                ));
            }
        }
        for beginning in &self.relative_beginnings {
            if !beginning.ends_with("l'") {
                return Err(Error::Config(format!(
                    "relative beginning {beginning:?} must end with l'"
                )));
            }
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Internal(format!("grammar encode: {e}")))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: GrammarSpec =
            toml::from_str(text).map_err(|e| Error::Config(format!("grammar parse: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }
}

/// Article used before a noun in subject-verb-object position.
fn definite_article(noun: &NounEntry) -> &'static str {
    if noun.vowel_initial() {
        "l'"
    } else {
        match noun.gender {
            Gender::Feminine => "la",
            Gender::Masculine => "le",
        }
    }
}

/// Generate `n_sentences` lines of raw text, deterministically from the
/// seed. Every gender-marked token agrees with its head noun.
pub fn generate_synthetic_corpus(spec: &GrammarSpec, n_sentences: usize, seed: u64) -> Result<String> {
    spec.validate()?;
    let mut rng = rng_for(seed, &["synthetic-corpus"]);

    let w = &spec.template_weights;
    let template_dist = WeightedIndex::new([
        w.article_noun,
        w.noun_adjective,
        w.noun_participle,
        w.noun_relative_pronoun,
        w.rare_token,
        w.article_noun_target,
    ])
    .map_err(|e| Error::Config(format!("bad template weights: {e}")))?;

    let feminine: Vec<&NounEntry> = spec.nouns_of(Gender::Feminine).collect();
    let masculine: Vec<&NounEntry> = spec.nouns_of(Gender::Masculine).collect();
    let feminine_vowel: Vec<&NounEntry> = feminine
        .iter()
        .copied()
        .filter(|n| n.vowel_initial())
        .collect();
    let masculine_vowel: Vec<&NounEntry> = masculine
        .iter()
        .copied()
        .filter(|n| n.vowel_initial())
        .collect();
    // head/tail noun frequencies within each pool
    let zipf = |n: usize| -> WeightedIndex<f64> {
        let s = spec.noun_zipf_exponent;
        WeightedIndex::new((0..n).map(|i| 1.0 / ((i + 1) as f64).powf(s))).unwrap()
    };
    let feminine_dist = zipf(feminine.len());
    let masculine_dist = zipf(masculine.len());
    let feminine_vowel_dist = zipf(feminine_vowel.len());
    let masculine_vowel_dist = zipf(masculine_vowel.len());

    // Gap lengths are weighted toward short phrases; phrase picked uniformly
    // among those of the drawn length.
    let gap_lengths: Vec<usize> = {
        let mut ls: Vec<usize> = spec.gap_phrases.iter().map(|p| p.len()).collect();
        ls.push(0);
        ls.sort_unstable();
        ls.dedup();
        ls
    };
    let gap_weight = |len: usize| -> f64 {
        match len {
            0 => 0.30,
            1 => 0.16,
            2 => 0.14,
            3 => 0.14,
            4 => 0.10,
            _ => 0.08,
        }
    };
    let gap_dist = WeightedIndex::new(gap_lengths.iter().map(|&l| gap_weight(l)))
        .map_err(|e| Error::Config(format!("bad gap lengths: {e}")))?;

    let mut out = String::new();
    for _ in 0..n_sentences {
        let gender = if rng.gen_bool(spec.ratio_masculine) {
            Gender::Masculine
        } else {
            Gender::Feminine
        };
        let (pool, vowel_pool, pool_dist, vowel_dist) = match gender {
            Gender::Feminine => (&feminine, &feminine_vowel, &feminine_dist, &feminine_vowel_dist),
            Gender::Masculine => (
                &masculine,
                &masculine_vowel,
                &masculine_dist,
                &masculine_vowel_dist,
            ),
        };
        let mut tokens: Vec<&str> = Vec::with_capacity(16);
        if rng.gen_bool(spec.leading_adverb_rate) {
            tokens.push(&spec.fillers[rng.gen_range(0..spec.fillers.len())]);
        }
        let mut allow_tail = true;
        match template_dist.sample(&mut rng) {
            // article-noun: the article reveals gender unless elided
            0 => {
                let beginning = &spec.article_noun_beginnings
                    [rng.gen_range(0..spec.article_noun_beginnings.len())];
                let noun = pool[pool_dist.sample(&mut rng)];
                tokens.extend(beginning.split(' '));
                tokens.push(definite_article(noun));
                tokens.push(&noun.word);
            }
            // noun-adjective / noun-participle with an intervening gap
            kind @ (1 | 2) => {
                let pairs = if kind == 1 {
                    &spec.adjectives
                } else {
                    &spec.participles
                };
                let pair = &pairs[rng.gen_range(0..pairs.len())];
                let use_elided = !vowel_pool.is_empty() && rng.gen_bool(0.35);
                let noun = if use_elided {
                    vowel_pool[vowel_dist.sample(&mut rng)]
                } else {
                    pool[pool_dist.sample(&mut rng)]
                };
                if use_elided {
                    let beginning = &spec.relative_beginnings
                        [rng.gen_range(0..spec.relative_beginnings.len())];
                    tokens.extend(beginning.split(' '));
                } else {
                    let beginning = &spec.negated_beginnings
                        [rng.gen_range(0..spec.negated_beginnings.len())];
                    tokens.extend(beginning.split(' '));
                }
                tokens.push(&noun.word);
                let len = gap_lengths[gap_dist.sample(&mut rng)];
                if len > 0 {
                    let candidates: Vec<&Vec<String>> = spec
                        .gap_phrases
                        .iter()
                        .filter(|p| p.len() == len)
                        .collect();
                    let phrase = candidates[rng.gen_range(0..candidates.len())];
                    tokens.extend(phrase.iter().map(String::as_str));
                }
                tokens.push(pair.form(gender));
            }
            // noun-relative-pronoun; requires a vowel-initial noun after l'
            3 => {
                let beginning =
                    &spec.relative_beginnings[rng.gen_range(0..spec.relative_beginnings.len())];
                let noun = vowel_pool[vowel_dist.sample(&mut rng)];
                let phrase = &spec.relative_gap_phrases
                    [rng.gen_range(0..spec.relative_gap_phrases.len())];
                tokens.extend(beginning.split(' '));
                tokens.push(&noun.word);
                tokens.extend(phrase.iter().map(String::as_str));
                tokens.push(match gender {
                    Gender::Feminine => "laquelle",
                    Gender::Masculine => "lequel",
                });
            }
            // rare sentinel token in a neutral presentative frame
            4 => {
                let rare = &spec.rare_tokens[rng.gen_range(0..spec.rare_tokens.len())];
                tokens.push("voici");
                tokens.push(rare);
                allow_tail = false;
            }
            // article + noun + gap + inflected form, all agreeing
            _ => {
                let beginning = &spec.article_noun_beginnings
                    [rng.gen_range(0..spec.article_noun_beginnings.len())];
                let noun = pool[pool_dist.sample(&mut rng)];
                let pairs = if rng.gen_bool(0.55) {
                    &spec.adjectives
                } else {
                    &spec.participles
                };
                let pair = &pairs[rng.gen_range(0..pairs.len())];
                tokens.extend(beginning.split(' '));
                tokens.push(definite_article(noun));
                tokens.push(&noun.word);
                let len = gap_lengths[gap_dist.sample(&mut rng)];
                if len > 0 {
                    let candidates: Vec<&Vec<String>> = spec
                        .gap_phrases
                        .iter()
                        .filter(|p| p.len() == len)
                        .collect();
                    let phrase = candidates[rng.gen_range(0..candidates.len())];
                    tokens.extend(phrase.iter().map(String::as_str));
                }
                tokens.push(pair.form(gender));
            }
        }
        if allow_tail && rng.gen_bool(spec.trailing_tail_rate) {
            for _ in 0..rng.gen_range(1..=2usize) {
                tokens.push(&spec.fillers[rng.gen_range(0..spec.fillers.len())]);
            }
        }
        let _ = writeln!(out, "{}", tokens.join(" "));
    }
    Ok(out)
}
