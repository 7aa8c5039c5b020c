//! Seeded word-level text augmentation and contrastive view-pair construction.
//!
//! Four operators run in a fixed order: synonym replacement, deletion,
//! insertion, then at most one adjacent swap. A word is a whitespace-delimited
//! token; trailing punctuation stays attached to it and is ignored for lexicon
//! lookup.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{CourseKey, CourseRecord, StatementRecord};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};

const BUILTIN_LEXICON: &str = include_str!("../data/lexicon.tsv");

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl SynonymLexicon {
    /// The engineering-vocabulary lexicon shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_LEXICON).expect("bundled lexicon is well-formed")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Parses `word<TAB>syn1,syn2,...` lines. Blank lines and `#` comments are
    /// skipped, self-references removed, and words left without synonyms dropped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (word, syns) = line.split_once('\t').ok_or_else(|| Error::MalformedLexicon {
                line: idx + 1,
                reason: "expected `word<TAB>synonyms`".into(),
            })?;
            let word = word.trim().to_lowercase();
            if word.is_empty() || word.contains(char::is_whitespace) {
                return Err(Error::MalformedLexicon {
                    line: idx + 1,
                    reason: format!("headword `{word}` must be a single word"),
                });
            }
            let list = entries.entry(word.clone()).or_default();
            for syn in syns.split(',') {
                let syn = syn.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
                if !syn.is_empty() && syn != word && !list.contains(&syn) {
                    list.push(syn);
                }
            }
        }
        entries.retain(|_, v| !v.is_empty());
        Ok(Self { entries })
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a [&'a str])>) -> Self {
        let text: String = pairs
            .into_iter()
            .map(|(w, syns)| format!("{w}\t{}\n", syns.join(",")))
            .collect();
        Self::parse(&text).expect("pairs form a valid lexicon")
    }

    pub fn synonyms(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileName {
    Light,
    Heavy,
}

/// Per-operator probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentProfile {
    pub name: ProfileName,
    pub p_delete: f64,
    pub p_synonym: f64,
    pub p_insert: f64,
    pub p_swap: f64,
}

impl AugmentProfile {
    pub fn light() -> Self {
        Self { name: ProfileName::Light, p_delete: 0.05, p_synonym: 0.10, p_insert: 0.05, p_swap: 0.10 }
    }

    pub fn heavy() -> Self {
        Self { name: ProfileName::Heavy, p_delete: 0.15, p_synonym: 0.25, p_insert: 0.10, p_swap: 0.30 }
    }

    /// A profile that leaves text untouched.
    pub fn identity(name: ProfileName) -> Self {
        Self { name, p_delete: 0.0, p_synonym: 0.0, p_insert: 0.0, p_swap: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (label, p) in [
            ("p_delete", self.p_delete),
            ("p_synonym", self.p_synonym),
            ("p_insert", self.p_insert),
            ("p_swap", self.p_swap),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{label} = {p} is not a probability")));
            }
        }
        Ok(())
    }
}

/// Splits `"transfer,"` into `("transfer", ",")`.
fn split_trailing_punct(word: &str) -> (&str, &str) {
    let stem = word.trim_end_matches(|c: char| c.is_ascii_punctuation());
    if stem.is_empty() {
        (word, "")
    } else {
        (stem, &word[stem.len()..])
    }
}

fn coin(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn replace_synonyms(words: &mut [String], p: f64, lexicon: &SynonymLexicon, rng: &mut ChaCha8Rng) {
    for word in words.iter_mut() {
        if !coin(rng, p) {
            continue;
        }
        let (stem, suffix) = split_trailing_punct(word);
        if let Some(syns) = lexicon.synonyms(stem) {
            let pick = &syns[rng.random_range(0..syns.len())];
            *word = format!("{pick}{suffix}");
        }
    }
}

fn delete_words(words: &mut Vec<String>, p: f64, rng: &mut ChaCha8Rng) {
    let keep: Vec<bool> = words.iter().map(|_| !coin(rng, p)).collect();
    if keep.iter().any(|&k| k) {
        let mut it = keep.iter();
        words.retain(|_| *it.next().unwrap());
    } else {
        let survivor = rng.random_range(0..words.len());
        let word = words.swap_remove(survivor);
        *words = vec![word];
    }
}

fn insert_words(words: &mut Vec<String>, p: f64, lexicon: &SynonymLexicon, rng: &mut ChaCha8Rng) {
    let rounds = words.len();
    for _ in 0..rounds {
        if !coin(rng, p) {
            continue;
        }
        let candidates: Vec<&[String]> = words
            .iter()
            .filter_map(|w| lexicon.synonyms(split_trailing_punct(w).0))
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let syns = candidates[rng.random_range(0..candidates.len())];
        let pick = syns[rng.random_range(0..syns.len())].clone();
        let at = rng.random_range(0..=words.len());
        words.insert(at, pick);
    }
}

fn swap_once(words: &mut [String], p: f64, rng: &mut ChaCha8Rng) {
    if coin(rng, p) && words.len() >= 2 {
        let i = rng.random_range(0..words.len() - 1);
        words.swap(i, i + 1);
    }
}

/// Applies the profile's operators to `text`, deterministically in `seed`.
pub fn augment_text(text: &str, profile: &AugmentProfile, lexicon: &SynonymLexicon, seed: u64) -> Result<String> {
    let mut words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    if words.is_empty() {
        return Err(Error::EmptyText);
    }
    let mut rng = rng_from_seed(seed);
    replace_synonyms(&mut words, profile.p_synonym, lexicon, &mut rng);
    delete_words(&mut words, profile.p_delete, &mut rng);
    insert_words(&mut words, profile.p_insert, lexicon, &mut rng);
    swap_once(&mut words, profile.p_swap, &mut rng);
    Ok(words.join(" "))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewSource {
    StatementPlusAugmented,
    DoubleAugmented,
}

/// Two texts that training should embed close together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewPair {
    pub view_a_text: String,
    pub view_b_text: String,
    pub label: CourseKey,
    pub source: ViewSource,
}

/// Builds one epoch's view pairs.
///
/// Each training statement yields `(statement, heavy(course))` for the course
/// it is labelled with; a course without statements yields two independent
/// heavy augmentations of its own text. Seeds are derived from
/// `(epoch_seed, course key, view index)`.
pub fn build_view_pairs(
    courses: &[CourseRecord],
    train_statements: &[StatementRecord],
    heavy: &AugmentProfile,
    lexicon: &SynonymLexicon,
    epoch_seed: u64,
) -> Result<Vec<ViewPair>> {
    let mut pairs = Vec::new();
    for course in courses {
        let key = course.key();
        let text = &course.text_for_encoder;
        let augment = |view: u64| augment_text(text, heavy, lexicon, derive_seed(epoch_seed, key.as_str(), view));

        let mut associated = train_statements.iter().filter(|s| s.contrastive_label == key).peekable();
        if associated.peek().is_none() {
            pairs.push(ViewPair {
                view_a_text: augment(0)?,
                view_b_text: augment(1)?,
                label: key.clone(),
                source: ViewSource::DoubleAugmented,
            });
            continue;
        }
        for (j, statement) in associated.enumerate() {
            pairs.push(ViewPair {
                view_a_text: statement.text.clone(),
                view_b_text: augment(2 + j as u64)?,
                label: key.clone(),
                source: ViewSource::StatementPlusAugmented,
            });
        }
    }
    Ok(pairs)
}
