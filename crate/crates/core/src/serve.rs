//! Course index, Top-N ranking and the three front ends that share it: a
//! one-shot call, a line-oriented REPL and an HTTP service.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::catalog::{clean_text, CourseKey, CourseRecord};
use crate::embed::{read_bytes, read_magic, read_string, read_u32, read_u64, EmbeddingSource};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::model::{forward, ModelMeta, ProjectionWeights};

pub const IDX1_MAGIC: [u8; 4] = *b"IDX1";
pub const IDX1_VERSION: u32 = 1;

/// Longest description prefix kept in the index, in characters.
pub const SNIPPET_CHARS: usize = 120;

/// Stored vectors are f32, so unit norm only holds to single precision.
pub const STORED_NORM_TOLERANCE: f64 = 1e-5;

pub const DEFAULT_TOP_N: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub key: CourseKey,
    pub title: String,
    pub snippet: String,
    pub vector: Vec<f32>,
}

/// Immutable table of projected course embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct CourseIndex {
    dim: usize,
    entries: Vec<IndexEntry>,
    positions: BTreeMap<CourseKey, usize>,
    meta: Option<ModelMeta>,
}

pub fn snippet(description: &str) -> String {
    description.trim().chars().take(SNIPPET_CHARS).collect()
}

impl CourseIndex {
    pub fn from_entries(entries: Vec<IndexEntry>) -> Result<Self> {
        let dim = entries.first().map_or(0, |e| e.vector.len());
        let mut positions = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.vector.len() != dim {
                return Err(Error::DimMismatch { expected: dim, got: e.vector.len() });
            }
            let len = e.vector.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
            if !((len - 1.0).abs() <= STORED_NORM_TOLERANCE) {
                return Err(Error::InvalidData(format!("vector for {} has norm {len}", e.key)));
            }
            if positions.insert(e.key.clone(), i).is_some() {
                return Err(Error::DuplicateId(e.key.to_string()));
            }
        }
        Ok(Self { dim, entries, positions, meta: None })
    }

    pub fn with_meta(mut self, meta: ModelMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn meta(&self) -> Option<&ModelMeta> {
        self.meta.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn get(&self, key: &CourseKey) -> Option<&IndexEntry> {
        self.positions.get(key).map(|&i| &self.entries[i])
    }

    /// Every entry scored by cosine similarity to `query`, best first; equal
    /// scores are ordered by ascending course key.
    pub fn rank(&self, query: &[f64]) -> Result<Vec<(usize, f64)>> {
        if query.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: query.len() });
        }
        let qn = norm(query);
        if qn == 0.0 {
            return Err(Error::ZeroVector);
        }
        let mut scored: Vec<(usize, f64)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let v: Vec<f64> = e.vector.iter().map(|&x| f64::from(x)).collect();
                (i, (dot(query, &v) / (qn * norm(&v))).clamp(-1.0, 1.0))
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| self.entries[a.0].key.cmp(&self.entries[b.0].key)));
        Ok(scored)
    }
}

/// Projects every course through the head and stores the unit output.
pub fn build_index(
    courses: &[CourseRecord],
    source: &EmbeddingSource,
    weights: &ProjectionWeights,
) -> Result<CourseIndex> {
    let entries = courses
        .iter()
        .map(|c| {
            let key = c.key();
            let pooled = source.pooled(key.as_str(), &c.text_for_encoder)?;
            let z = forward(weights, &pooled)?.output;
            Ok(IndexEntry {
                key,
                title: c.title.clone(),
                snippet: snippet(&c.description),
                vector: z.iter().map(|&v| v as f32).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CourseIndex::from_entries(entries)
}

pub fn save_index(path: impl AsRef<Path>, index: &CourseIndex) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    encode_index(&mut out, index)?;
    out.flush()?;
    Ok(())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<CourseIndex> {
    decode_index(&mut BufReader::new(File::open(path)?))
}

fn write_str(out: &mut impl Write, s: &str) -> Result<()> {
    out.write_all(&(s.len() as u32).to_le_bytes())?;
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn encode_index(out: &mut impl Write, index: &CourseIndex) -> Result<()> {
    out.write_all(&IDX1_MAGIC)?;
    out.write_all(&IDX1_VERSION.to_le_bytes())?;
    out.write_all(&(index.dim as u32).to_le_bytes())?;
    out.write_all(&(index.entries.len() as u64).to_le_bytes())?;
    for e in &index.entries {
        write_str(out, e.key.as_str())?;
        write_str(out, &e.title)?;
        write_str(out, &e.snippet)?;
        for v in &e.vector {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn decode_index(r: &mut impl Read) -> Result<CourseIndex> {
    read_magic(r, IDX1_MAGIC)?;
    let version = read_u32(r)?;
    if version != IDX1_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dim = read_u32(r)? as usize;
    let count = read_u64(r)?;
    let mut entries = Vec::new();
    for _ in 0..count {
        let raw_key = read_string(r)?;
        let key = CourseKey::parse(&raw_key)
            .filter(|k| k.as_str() == raw_key)
            .ok_or_else(|| Error::InvalidData(format!("bad course key {raw_key:?}")))?;
        let title = read_string(r)?;
        let snippet = read_string(r)?;
        let raw = read_bytes(r, dim * 4)?;
        let vector = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        entries.push(IndexEntry { key, title, snippet, vector });
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::InvalidData("trailing bytes after index".into()));
    }
    let index = CourseIndex::from_entries(entries)?;
    if !index.is_empty() && index.dim != dim {
        return Err(Error::DimMismatch { expected: dim, got: index.dim });
    }
    Ok(CourseIndex { dim, ..index })
}

/// Turns free text into a unit query vector: clean, encode, pool, project.
#[derive(Debug, Clone)]
pub struct QueryEncoder {
    pub source: EmbeddingSource,
    pub weights: ProjectionWeights,
}

impl QueryEncoder {
    pub fn new(source: EmbeddingSource, weights: ProjectionWeights) -> Result<Self> {
        if source.width() != weights.dims.in_dim {
            return Err(Error::DimMismatch { expected: weights.dims.in_dim, got: source.width() });
        }
        Ok(Self { source, weights })
    }

    /// A pre-encoded source is keyed by the cleaned query text.
    pub fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let cleaned = clean_text(text);
        if cleaned.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let pooled = self.source.pooled(&cleaned, &cleaned)?;
        Ok(forward(&self.weights, &pooled)?.output)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationItem {
    pub rank: usize,
    pub code: CourseKey,
    pub title: String,
    pub score: f64,
    #[serde(skip)]
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationResult {
    pub query_text: String,
    pub n: usize,
    pub items: Vec<RecommendationItem>,
}

impl RecommendationResult {
    pub fn codes(&self) -> Vec<&CourseKey> {
        self.items.iter().map(|i| &i.code).collect()
    }
}

impl fmt::Display for RecommendationResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.query_text)?;
        writeln!(f, "Top {} recommended courses:", self.items.len())?;
        for item in &self.items {
            writeln!(f, "#{}. {} [similarity: {:.4}]", item.rank, item.code, item.score)?;
            writeln!(f, "Title: {}", item.title)?;
            writeln!(f, "Desc : {}", item.snippet)?;
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Top-`n` courses for one query. The only ranking path: the CLI, the REPL
/// and the HTTP handler all call this.
pub fn recommend(index: &CourseIndex, query_text: &str, encoder: &QueryEncoder, n: usize) -> Result<RecommendationResult> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let query = encoder.embed(query_text)?;
    let items = index
        .rank(&query)?
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(r, (i, score))| {
            let e = &index.entries[i];
            RecommendationItem {
                rank: r + 1,
                code: e.key.clone(),
                title: e.title.clone(),
                score,
                snippet: e.snippet.clone(),
            }
        })
        .collect();
    Ok(RecommendationResult { query_text: query_text.trim().to_string(), n, items })
}

/// Reads one statement per line and prints a ranked block for each. Blank
/// lines are skipped; per-query errors are reported and the loop continues.
pub fn run_repl(
    index: &CourseIndex,
    encoder: &QueryEncoder,
    n: usize,
    input: impl BufRead,
    mut output: impl Write,
) -> Result<usize> {
    let mut answered = 0;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match recommend(index, &line, encoder, n) {
            Ok(result) => {
                write!(output, "{result}")?;
                answered += 1;
            }
            Err(e) => writeln!(output, "error: {e}")?,
        }
        output.flush()?;
    }
    Ok(answered)
}

/// Shared, read-only state of the HTTP service.
#[derive(Debug, Clone)]
pub struct AppState {
    pub index: Arc<CourseIndex>,
    pub encoder: Arc<QueryEncoder>,
}

#[derive(Debug, Deserialize)]
struct RecommendRequest {
    text: String,
    #[serde(default = "default_n")]
    n: usize,
}

fn default_n() -> usize {
    DEFAULT_TOP_N
}

fn error_response(status: StatusCode, message: impl fmt::Display) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

async fn recommend_handler(State(state): State<AppState>, body: Bytes) -> Response {
    let req: RecommendRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, e),
    };
    match recommend(&state.index, &req.text, &state.encoder, req.n) {
        Ok(result) => Json(json!({ "results": result.items })).into_response(),
        Err(Error::EmptyQuery) => error_response(StatusCode::UNPROCESSABLE_ENTITY, Error::EmptyQuery),
        Err(e @ (Error::InvalidArgument(_) | Error::EmptyText)) => error_response(StatusCode::BAD_REQUEST, e),
        Err(e @ Error::MissingEmbedding(_)) => error_response(StatusCode::UNPROCESSABLE_ENTITY, e),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn health_handler(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "courses": state.index.len() }))
}

async fn course_handler(State(state): State<AppState>, UrlPath(raw): UrlPath<String>) -> Response {
    let entry = CourseKey::parse(&raw).and_then(|k| state.index.get(&k));
    match entry {
        Some(e) => Json(json!({ "code": e.key, "title": e.title, "description": e.snippet })).into_response(),
        None => error_response(StatusCode::NOT_FOUND, format!("unknown course {raw:?}")),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/recommend", post(recommend_handler))
        .route("/health", get(health_handler))
        .route("/courses/{key}", get(course_handler))
        .with_state(state)
}

/// Serves the router on `bind` until the process is stopped.
pub async fn serve_http(index: CourseIndex, encoder: QueryEncoder, bind: &str) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    let state = AppState { index: Arc::new(index), encoder: Arc::new(encoder) };
    axum::serve(listener, router(state)).await?;
    Ok(())
}
