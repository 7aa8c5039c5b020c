//! File-level stages behind the `isorec` subcommands. Each stage reads the
//! artifacts of earlier ones from disk and writes its own.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{build_view_pairs, AugmentProfile, SynonymLexicon};
use crate::catalog::{load_courses, load_statements, read_jsonl, split_statements, write_jsonl, CatalogOptions, CourseRecord, StatementRecord};
use crate::embed::{masked_mean_pool, read_embeddings, EmbeddingSource, EmbeddingTable};
use crate::error::{Error, Result};
use crate::eval::{evaluate_index, MetricsReport};
use crate::geometry::{cosine_distribution, isoscore, project_2d};
use crate::linalg::Matrix;
use crate::model::{forward, load_weights, save_weights, ModelMeta, ProjectionWeights};
use crate::serve::{build_index, save_index, CourseIndex};
use crate::train::{export_manifest, train, TrainReport, TrainingConfig, ViewBank};

pub const COURSES_FILE: &str = "courses.jsonl";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const SPLIT_FILE: &str = "split.json";

/// Where encoder features come from: the stub encoder or an EMB1 file.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingsSpec {
    Stub { width: usize, seed: u64 },
    File(PathBuf),
}

impl EmbeddingsSpec {
    /// `"stub"` selects the stub encoder; anything else is an EMB1 path.
    pub fn parse(raw: &str, stub_width: usize, stub_seed: u64) -> Self {
        if raw == "stub" {
            Self::Stub { width: stub_width, seed: stub_seed }
        } else {
            Self::File(PathBuf::from(raw))
        }
    }

    pub fn open(&self) -> Result<EmbeddingSource> {
        match self {
            Self::Stub { width, seed } => Ok(EmbeddingSource::stub(*width, *seed)),
            Self::File(path) => Ok(EmbeddingSource::Table(EmbeddingTable::load(path)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub split_seed: u64,
    pub train_fraction: f64,
    pub courses: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub dropped_unknown: usize,
}

/// Cleans the raw catalog and statements, splits the statements and writes
/// everything into `out_dir`.
pub fn prepare(
    courses_path: &Path,
    statements_path: &Path,
    seed: u64,
    train_fraction: f64,
    out_dir: &Path,
) -> Result<SplitManifest> {
    let courses = load_courses(courses_path, &CatalogOptions::default())?;
    let known: BTreeSet<_> = courses.iter().map(CourseRecord::key).collect();
    let load = load_statements(statements_path, &known)?;
    let split = split_statements(&load.records, seed, train_fraction)?;

    fs::create_dir_all(out_dir)?;
    write_jsonl(out_dir.join(COURSES_FILE), &courses)?;
    write_jsonl(out_dir.join(TRAIN_FILE), &split.train)?;
    write_jsonl(out_dir.join(TEST_FILE), &split.test)?;
    let manifest = SplitManifest {
        split_seed: seed,
        train_fraction,
        courses: courses.len(),
        train_ids: split.train.iter().map(|s| s.id.clone()).collect(),
        test_ids: split.test.iter().map(|s| s.id.clone()).collect(),
        dropped_unknown: load.dropped_unknown,
    };
    write_json(out_dir.join(SPLIT_FILE), &manifest)?;
    Ok(manifest)
}

/// The outputs of [`prepare`], read back.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub courses: Vec<CourseRecord>,
    pub train: Vec<StatementRecord>,
    pub test: Vec<StatementRecord>,
}

impl PreparedData {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Self {
            courses: read_jsonl(dir.join(COURSES_FILE))?,
            train: read_jsonl(dir.join(TRAIN_FILE))?,
            test: read_jsonl(dir.join(TEST_FILE))?,
        })
    }
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_lexicon(path: Option<&Path>) -> Result<SynonymLexicon> {
    path.map_or_else(|| Ok(SynonymLexicon::builtin()), SynonymLexicon::load)
}

/// Writes one epoch's view pairs for inspection. Returns the pair count.
pub fn augment(data_dir: &Path, lexicon: &SynonymLexicon, heavy: &AugmentProfile, epoch_seed: u64, out: &Path) -> Result<usize> {
    let data = PreparedData::load(data_dir)?;
    let pairs = build_view_pairs(&data.courses, &data.train, heavy, lexicon, epoch_seed)?;
    write_jsonl(out, &pairs)?;
    Ok(pairs.len())
}

/// Writes every `(id, text)` that training and evaluation will request, for
/// an external encoder to turn into an EMB1 file.
pub fn manifest(data_dir: &Path, lexicon: &SynonymLexicon, config: &TrainingConfig, out: &Path) -> Result<usize> {
    let data = PreparedData::load(data_dir)?;
    let bank = ViewBank::generate(&data.courses, &config.heavy, lexicon, config.view_bank_size, config.seed)?;
    let statements: Vec<_> = data.train.iter().chain(&data.test).cloned().collect();
    let entries = export_manifest(&data.courses, &statements, &bank);
    write_jsonl(out, &entries)?;
    Ok(entries.len())
}

pub fn train_model(
    data_dir: &Path,
    source: &EmbeddingSource,
    lexicon: &SynonymLexicon,
    config: &TrainingConfig,
    model_out: &Path,
    report_out: &Path,
) -> Result<TrainReport> {
    let data = PreparedData::load(data_dir)?;
    let outcome = train(&data.courses, &data.train, source, lexicon, config)?;
    save_weights(model_out, &outcome.weights, &config.meta(source.width()))?;
    let mut report = outcome.report;
    report.weights_path = Some(model_out.display().to_string());
    write_json(report_out, &report)?;
    Ok(report)
}

fn load_model_for(source: &EmbeddingSource, model: &Path) -> Result<(ProjectionWeights, ModelMeta)> {
    let (weights, meta) = load_weights(model)?;
    if weights.dims.in_dim != source.width() {
        return Err(Error::DimMismatch { expected: weights.dims.in_dim, got: source.width() });
    }
    Ok((weights, meta))
}

pub fn index_courses(data_dir: &Path, source: &EmbeddingSource, model: &Path, out: &Path) -> Result<CourseIndex> {
    let data = PreparedData::load(data_dir)?;
    let (weights, meta) = load_model_for(source, model)?;
    let index = build_index(&data.courses, source, &weights)?.with_meta(meta);
    save_index(out, &index)?;
    Ok(index)
}

/// Scores the held-out statements and writes the metrics JSON.
pub fn evaluate(data_dir: &Path, source: &EmbeddingSource, model: &Path, n: usize, out: &Path) -> Result<MetricsReport> {
    let data = PreparedData::load(data_dir)?;
    let (weights, _) = load_model_for(source, model)?;
    let index = build_index(&data.courses, source, &weights)?;
    let report = evaluate_index(&index, &data.test, source, &weights, n)?;
    write_json(out, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoScoreReport {
    pub count: usize,
    pub width: usize,
    pub isoscore: f64,
    pub cos_mean: f64,
    pub cos_std: f64,
}

/// IsoScore and cosine statistics of the pooled vectors in an EMB1 file.
pub fn isoscore_of_file(embeddings: &Path, out: &Path) -> Result<IsoScoreReport> {
    let seqs = read_embeddings(embeddings)?;
    let rows = seqs.iter().map(|s| masked_mean_pool(s).map(|p| p.vector)).collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let points = Matrix::from_rows(&rows)?;
    let cos = cosine_distribution(&points)?;
    let report = IsoScoreReport {
        count: rows.len(),
        width: points.cols(),
        isoscore: isoscore(&points)?,
        cos_mean: cos.mean,
        cos_std: cos.std,
    };
    write_json(out, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub group: String,
}

/// Projects course and test-statement embeddings onto their two leading
/// principal components. Courses are grouped by faculty; statements by the
/// course they are labelled with.
pub fn plot_points(data: &PreparedData, source: &EmbeddingSource, weights: &ProjectionWeights) -> Result<Vec<PlotPoint>> {
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for c in &data.courses {
        let key = c.key();
        rows.push(forward(weights, &source.pooled(key.as_str(), &c.text_for_encoder)?)?.output);
        ids.push((key.to_string(), c.faculty.clone()));
    }
    for s in &data.test {
        rows.push(forward(weights, &source.pooled(&s.id, &s.text)?)?.output);
        ids.push((s.id.clone(), format!("statement {}", s.contrastive_label)));
    }
    let xy = project_2d(&Matrix::from_rows(&rows)?)?;
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(i, (id, group))| PlotPoint { id, x: xy[(i, 0)], y: xy[(i, 1)], group })
        .collect())
}

pub fn write_plot_csv(path: &Path, points: &[PlotPoint]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "id,x,y,group")?;
    for p in points {
        writeln!(out, "{},{},{},{}", csv_field(&p.id), p.x, p.y, csv_field(&p.group))?;
    }
    out.flush()?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn plot_data(data_dir: &Path, source: &EmbeddingSource, model: &Path, out: &Path) -> Result<usize> {
    let data = PreparedData::load(data_dir)?;
    let (weights, _) = load_model_for(source, model)?;
    let points = plot_points(&data, source, &weights)?;
    write_plot_csv(out, &points)?;
    Ok(points.len())
}
