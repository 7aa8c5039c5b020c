//! Course catalog and student statement ingestion, text cleaning, and the
//! seeded train/test split.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Punctuation kept by [`clean_text`] in addition to letters, digits and spaces.
pub const RETAINED_PUNCTUATION: &[char] = &['.', ',', ';', ':', '(', ')', '\'', '-', '/', '&'];

/// Lowercases, replaces every character outside the retained set by a space,
/// collapses whitespace runs and trims.
pub fn clean_text(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let replaced: String = lowered
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || RETAINED_PUNCTUATION.contains(&c) {
                c
            } else {
                ' '
            }
        })
        .collect();
    replaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A course key of the form `"FAC 1234"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CourseKey(String);

impl CourseKey {
    /// Normalizes `"mcg 4136"`, `"MCG4136"` or `" Mcg  4136 "` to `"MCG 4136"`.
    pub fn parse(raw: &str) -> Option<Self> {
        let compact: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
        let compact = compact.to_ascii_uppercase();
        let bytes = compact.as_bytes();
        if bytes.len() != 7
            || !bytes[..3].iter().all(u8::is_ascii_uppercase)
            || !bytes[3..].iter().all(u8::is_ascii_digit)
        {
            return None;
        }
        Some(Self(format!("{} {}", &compact[..3], &compact[3..])))
    }

    pub fn from_parts(faculty: &str, code: &str) -> Option<Self> {
        Self::parse(&format!("{faculty} {code}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn faculty(&self) -> &str {
        &self.0[..3]
    }

    pub fn number(&self) -> &str {
        &self.0[4..]
    }
}

impl fmt::Display for CourseKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for CourseKey {
    type Error = String;

    fn try_from(value: String) -> std::result::Result<Self, String> {
        CourseKey::parse(&value).ok_or_else(|| format!("invalid course key `{value}`"))
    }
}

impl From<CourseKey> for String {
    fn from(key: CourseKey) -> String {
        key.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    #[serde(alias = "en")]
    English,
    #[serde(alias = "fr")]
    French,
    #[default]
    #[serde(other)]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CourseRecord {
    pub faculty: String,
    pub code: String,
    pub title: String,
    pub description: String,
    #[serde(default)]
    pub components: String,
    #[serde(default)]
    pub prerequisites: String,
    #[serde(default)]
    pub language: Language,
    pub text_for_encoder: String,
}

impl CourseRecord {
    pub fn key(&self) -> CourseKey {
        CourseKey::from_parts(&self.faculty, &self.code).expect("retained records carry valid keys")
    }
}

/// Builds the encoder text: title, description, then components.
pub fn compose_encoder_text(title: &str, description: &str, components: &str) -> String {
    let title = title.trim().trim_end_matches('.');
    clean_text(&format!("{title}. {description} {components}"))
}

#[derive(Debug, Clone, Copy)]
pub struct CatalogOptions {
    /// Courses whose cleaned description has fewer words are dropped.
    pub min_desc_words: usize,
}

impl Default for CatalogOptions {
    fn default() -> Self {
        Self { min_desc_words: 5 }
    }
}

#[derive(Deserialize)]
struct RawCourse {
    faculty: String,
    code: String,
    title: String,
    description: String,
    #[serde(default)]
    components: Option<String>,
    #[serde(default)]
    prerequisites: Option<String>,
    #[serde(default)]
    language: Language,
}

pub fn load_courses(path: impl AsRef<Path>, opts: &CatalogOptions) -> Result<Vec<CourseRecord>> {
    parse_courses(BufReader::new(File::open(path)?), opts)
}

/// Parses catalog JSON lines. Blank lines are skipped; line numbers are 1-based.
pub fn parse_courses(reader: impl BufRead, opts: &CatalogOptions) -> Result<Vec<CourseRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawCourse = serde_json::from_str(&line)
            .map_err(|e| Error::MalformedRecord { line: line_no, reason: e.to_string() })?;
        let key = CourseKey::from_parts(&raw.faculty, &raw.code).ok_or_else(|| {
            Error::MalformedRecord {
                line: line_no,
                reason: format!("invalid course key `{} {}`", raw.faculty, raw.code),
            }
        })?;

        if raw.language != Language::English {
            continue;
        }
        if clean_text(&raw.description).split(' ').filter(|w| !w.is_empty()).count()
            < opts.min_desc_words
        {
            continue;
        }
        if !seen.insert(key.clone()) {
            return Err(Error::DuplicateId(key.to_string()));
        }

        let components = raw.components.unwrap_or_default();
        let text_for_encoder = compose_encoder_text(&raw.title, &raw.description, &components);
        out.push(CourseRecord {
            faculty: key.faculty().to_string(),
            code: key.number().to_string(),
            title: raw.title.trim().to_string(),
            description: raw.description.trim().to_string(),
            components,
            prerequisites: raw.prerequisites.unwrap_or_default(),
            language: raw.language,
            text_for_encoder,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementRecord {
    pub id: String,
    pub text: String,
    pub liked_courses: Vec<CourseKey>,
    pub contrastive_label: CourseKey,
}

impl StatementRecord {
    pub fn relevant(&self) -> BTreeSet<CourseKey> {
        self.liked_courses.iter().cloned().collect()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LikedField {
    List(Vec<String>),
    Joined(String),
}

#[derive(Deserialize)]
struct RawStatement {
    #[serde(default)]
    id: Option<String>,
    text: String,
    liked: LikedField,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatementLoad {
    pub records: Vec<StatementRecord>,
    /// Statements dropped because none of their liked courses is known.
    pub dropped_unknown: usize,
}

pub fn load_statements(path: impl AsRef<Path>, known: &BTreeSet<CourseKey>) -> Result<StatementLoad> {
    parse_statements(BufReader::new(File::open(path)?), known)
}

/// Parses statement JSON lines. Liked keys that are not in `known` are
/// removed; a statement left with no known key is dropped and counted.
pub fn parse_statements(reader: impl BufRead, known: &BTreeSet<CourseKey>) -> Result<StatementLoad> {
    let mut records = Vec::new();
    let mut dropped_unknown = 0;
    let mut ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawStatement = serde_json::from_str(&line)
            .map_err(|e| Error::MalformedRecord { line: line_no, reason: e.to_string() })?;

        let entries: Vec<String> = match raw.liked {
            LikedField::List(items) => items,
            LikedField::Joined(s) => s.split(';').map(str::to_string).collect(),
        };
        let mut liked = Vec::new();
        for entry in entries.iter().map(|e| e.trim()).filter(|e| !e.is_empty()) {
            let key = CourseKey::parse(entry).ok_or_else(|| Error::MalformedRecord {
                line: line_no,
                reason: format!("invalid liked course `{entry}`"),
            })?;
            if !liked.contains(&key) {
                liked.push(key);
            }
        }
        if liked.is_empty() {
            return Err(Error::EmptyLikedList { line: line_no });
        }

        let text = clean_text(&raw.text);
        if text.is_empty() {
            return Err(Error::MalformedRecord { line: line_no, reason: "empty statement text".into() });
        }
        let id = raw.id.unwrap_or_else(|| format!("s{line_no:05}"));
        if !ids.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }

        liked.retain(|k| known.contains(k));
        let Some(label) = liked.first().cloned() else {
            dropped_unknown += 1;
            continue;
        };
        records.push(StatementRecord { id, text, liked_courses: liked, contrastive_label: label });
    }
    Ok(StatementLoad { records, dropped_unknown })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<StatementRecord>,
    pub test: Vec<StatementRecord>,
    pub split_seed: u64,
    pub train_fraction: f64,
}

/// Seeded shuffle, then the first `⌊n·fraction⌋` records go to train.
pub fn split_statements(records: &[StatementRecord], seed: u64, train_fraction: f64) -> Result<DatasetSplit> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut rng_from_seed(seed));
    // the epsilon absorbs products such as 0.7 * 10 = 6.999...
    let n_train = ((records.len() as f64) * train_fraction + 1e-9).floor() as usize;
    let (train_idx, test_idx) = order.split_at(n_train.min(records.len()));
    Ok(DatasetSplit {
        train: train_idx.iter().map(|&i| records[i].clone()).collect(),
        test: test_idx.iter().map(|&i| records[i].clone()).collect(),
        split_seed: seed,
        train_fraction,
    })
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::MalformedRecord { line: idx + 1, reason: e.to_string() })?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(list: &[&str]) -> BTreeSet<CourseKey> {
        list.iter().map(|k| CourseKey::parse(k).unwrap()).collect()
    }

    fn course_line(fac: &str, code: &str, lang: &str, desc: &str) -> String {
        serde_json::json!({
            "faculty": fac, "code": code, "title": "Some Title",
            "description": desc, "components": "Lecture", "prerequisites": "", "language": lang,
        })
        .to_string()
    }

    #[test]
    fn clean_text_examples() {
        assert_eq!(
            clean_text("Electronics I. Physics of Semiconductors"),
            "electronics i. physics of semiconductors"
        );
        assert_eq!(clean_text("a   b\t c"), "a b c");
        assert_eq!(clean_text("Heat @@ Transfer!!"), "heat transfer");
        assert_eq!(clean_text(""), "");
        assert_eq!(clean_text("Énergie & Systèmes (I/II)"), "énergie & systèmes (i/ii)");
    }

    #[test]
    fn course_key_normalization() {
        assert_eq!(CourseKey::parse("mcg 4136").unwrap().as_str(), "MCG 4136");
        assert_eq!(CourseKey::parse("MCG4136").unwrap().as_str(), "MCG 4136");
        assert!(CourseKey::parse("MC 4136").is_none());
        assert!(CourseKey::parse("MCG 413").is_none());
        assert!(CourseKey::parse("MCG 41a6").is_none());
    }

    #[test]
    fn language_filter_keeps_english() {
        let desc = "one two three four five six";
        let text = [
            course_line("ELG", "1000", "english", desc),
            course_line("ELG", "1001", "english", desc),
            course_line("ELG", "1002", "english", desc),
            course_line("ELG", "1003", "french", desc),
        ]
        .join("\n");
        let courses = parse_courses(text.as_bytes(), &CatalogOptions::default()).unwrap();
        assert_eq!(courses.len(), 3);
    }

    #[test]
    fn short_descriptions_are_dropped() {
        let text = [
            course_line("ELG", "1000", "english", "too short"),
            course_line("ELG", "1001", "english", "this one has enough words"),
        ]
        .join("\n");
        let courses = parse_courses(text.as_bytes(), &CatalogOptions { min_desc_words: 5 }).unwrap();
        assert_eq!(courses.len(), 1);
        assert_eq!(courses[0].code, "1001");
    }

    #[test]
    fn encoder_text_matches_cleaned_table_sample() {
        let line = serde_json::json!({
            "faculty": "ELG", "code": "2136", "title": "Electronics I",
            "description": "Physics of semiconductors, diodes and transistors.",
            "language": "english",
        })
        .to_string();
        let courses = parse_courses(line.as_bytes(), &CatalogOptions::default()).unwrap();
        assert!(courses[0].text_for_encoder.starts_with("electronics i. physics of semiconductors"));
        assert_eq!(courses[0].key().as_str(), "ELG 2136");
    }

    #[test]
    fn malformed_course_reports_line() {
        let text = format!("{}\n\n{{\"faculty\": 3}}", course_line("ELG", "1000", "english", "a b c d e"));
        match parse_courses(text.as_bytes(), &CatalogOptions::default()) {
            Err(Error::MalformedRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_course_key_is_rejected() {
        let desc = "one two three four five";
        let text = [course_line("ELG", "1000", "english", desc), course_line("elg", "1000", "english", desc)]
            .join("\n");
        assert!(matches!(
            parse_courses(text.as_bytes(), &CatalogOptions::default()),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn statements_multi_liked() {
        let known = keys(&["MCG 4136", "ELG 6393"]);
        let line = r#"{"text":"i like mechatronics","liked":["MCG 4136","ELG 6393"]}"#;
        let load = parse_statements(line.as_bytes(), &known).unwrap();
        let rec = &load.records[0];
        assert_eq!(rec.contrastive_label.as_str(), "MCG 4136");
        assert_eq!(rec.liked_courses.len(), 2);
        assert_eq!(rec.text, "i like mechatronics");
    }

    #[test]
    fn statements_semicolon_and_case() {
        let known = keys(&["CEG 3156", "ELG 5383"]);
        let line = r#"{"text":"I enjoy Computer System Design","liked":"ceg 3156; ELG 5383"}"#;
        let load = parse_statements(line.as_bytes(), &known).unwrap();
        assert_eq!(load.records[0].liked_courses, vec![
            CourseKey::parse("CEG 3156").unwrap(),
            CourseKey::parse("ELG 5383").unwrap()
        ]);
        assert_eq!(load.records[0].text, "i enjoy computer system design");
    }

    #[test]
    fn unknown_statements_are_dropped_and_counted() {
        let known = keys(&["MCG 4136"]);
        let text = "{\"text\":\"x\",\"liked\":[\"XXX 0000\"]}\n{\"text\":\"y\",\"liked\":[\"mcg 4136\"]}";
        let load = parse_statements(text.as_bytes(), &known).unwrap();
        assert_eq!(load.dropped_unknown, 1);
        assert_eq!(load.records.len(), 1);
        assert_eq!(load.records[0].contrastive_label.as_str(), "MCG 4136");
    }

    #[test]
    fn empty_liked_list_errors() {
        let known = keys(&["MCG 4136"]);
        let text = r#"{"text":"x","liked":[]}"#;
        assert!(matches!(
            parse_statements(text.as_bytes(), &known),
            Err(Error::EmptyLikedList { line: 1 })
        ));
        let text = r#"{"text":"x","liked":" ; "}"#;
        assert!(matches!(parse_statements(text.as_bytes(), &known), Err(Error::EmptyLikedList { .. })));
    }

    fn dummy_statements(n: usize) -> Vec<StatementRecord> {
        let key = CourseKey::parse("ELG 1000").unwrap();
        (0..n)
            .map(|i| StatementRecord {
                id: format!("s{i}"),
                text: format!("text {i}"),
                liked_courses: vec![key.clone()],
                contrastive_label: key.clone(),
            })
            .collect()
    }

    #[test]
    fn split_sizes() {
        let s = split_statements(&dummy_statements(10), 3, 0.8).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        let s = split_statements(&dummy_statements(600), 3, 0.8).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (480, 120));
    }

    #[test]
    fn split_is_deterministic() {
        let recs = dummy_statements(50);
        assert_eq!(split_statements(&recs, 9, 0.8).unwrap(), split_statements(&recs, 9, 0.8).unwrap());
        assert_ne!(
            split_statements(&recs, 9, 0.8).unwrap().train,
            split_statements(&recs, 10, 0.8).unwrap().train
        );
    }

    #[test]
    fn split_errors() {
        assert!(matches!(split_statements(&[], 0, 0.8), Err(Error::EmptyInput)));
        assert!(matches!(split_statements(&dummy_statements(3), 0, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(split_statements(&dummy_statements(3), 0, 0.0), Err(Error::InvalidArgument(_))));
    }
}
