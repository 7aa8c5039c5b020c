//! Retrieval metrics over ranked lists and the end-to-end evaluation of a
//! trained head.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::catalog::{CourseKey, CourseRecord, StatementRecord};
use crate::embed::EmbeddingSource;
use crate::error::{Error, Result};
use crate::geometry::{cosine_distribution, isoscore};
use crate::linalg::Matrix;
use crate::model::ProjectionWeights;
use crate::serve::{build_index, CourseIndex};

/// One query's full ranking, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub ranking: Vec<(CourseKey, f64)>,
    pub relevant: BTreeSet<CourseKey>,
}

impl RankedList {
    /// Sorts `scored` by descending score, ties by ascending key.
    pub fn new(query_id: impl Into<String>, mut scored: Vec<(CourseKey, f64)>, relevant: BTreeSet<CourseKey>) -> Self {
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self { query_id: query_id.into(), ranking: scored, relevant }
    }

    /// 1-based rank of the first relevant key.
    pub fn first_relevant_rank(&self) -> Option<usize> {
        self.ranking.iter().position(|(k, _)| self.relevant.contains(k)).map(|p| p + 1)
    }

    pub fn hits_in_top(&self, n: usize) -> usize {
        self.ranking.iter().take(n).filter(|(k, _)| self.relevant.contains(k)).count()
    }
}

fn check(lists: &[RankedList], n: usize) -> Result<()> {
    if lists.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    Ok(())
}

/// Fraction of queries with at least one relevant key in the top `n`.
pub fn hit_rate(lists: &[RankedList], n: usize) -> Result<f64> {
    check(lists, n)?;
    Ok(lists.iter().filter(|l| l.hits_in_top(n) > 0).count() as f64 / lists.len() as f64)
}

/// Macro-averaged F1@n, with precision over `n` slots.
pub fn f1_at_n(lists: &[RankedList], n: usize) -> Result<f64> {
    check(lists, n)?;
    let total: f64 = lists
        .iter()
        .map(|l| {
            let hits = l.hits_in_top(n) as f64;
            if hits == 0.0 {
                return 0.0;
            }
            let p = hits / n as f64;
            let r = hits / l.relevant.len() as f64;
            2.0 * p * r / (p + r)
        })
        .sum();
    Ok(total / lists.len() as f64)
}

/// Mean reciprocal rank of the first relevant key over the full ranking.
pub fn mrr(lists: &[RankedList]) -> Result<f64> {
    check(lists, 1)?;
    let total: f64 = lists.iter().map(|l| l.first_relevant_rank().map_or(0.0, |r| 1.0 / r as f64)).sum();
    Ok(total / lists.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub hit_rate: f64,
    pub f1: f64,
    pub mrr: f64,
    pub isoscore: f64,
    pub cos_mean: f64,
    pub cos_std: f64,
    pub num_queries: usize,
}

/// Ranks every statement against `index` through the serving path.
pub fn rank_statements(
    index: &CourseIndex,
    statements: &[StatementRecord],
    source: &EmbeddingSource,
    weights: &ProjectionWeights,
) -> Result<Vec<RankedList>> {
    statements
        .iter()
        .map(|s| {
            let pooled = source.pooled(&s.id, &s.text)?;
            let query = crate::model::forward(weights, &pooled)?.output;
            let scored = index
                .rank(&query)?
                .into_iter()
                .map(|(i, score)| (index.entries()[i].key.clone(), score))
                .collect();
            Ok(RankedList::new(s.id.clone(), scored, s.relevant()))
        })
        .collect()
}

/// Geometry of the stored course vectors.
pub fn index_geometry(index: &CourseIndex) -> Result<(f64, f64, f64)> {
    let rows: Vec<Vec<f64>> =
        index.entries().iter().map(|e| e.vector.iter().map(|&v| f64::from(v)).collect()).collect();
    let points = Matrix::from_rows(&rows)?;
    let cos = cosine_distribution(&points)?;
    Ok((isoscore(&points)?, cos.mean, cos.std))
}

/// Builds the course index for `weights` and scores the test statements.
pub fn evaluate_model(
    courses: &[CourseRecord],
    test_statements: &[StatementRecord],
    source: &EmbeddingSource,
    weights: &ProjectionWeights,
    n: usize,
) -> Result<MetricsReport> {
    let index = build_index(courses, source, weights)?;
    evaluate_index(&index, test_statements, source, weights, n)
}

pub fn evaluate_index(
    index: &CourseIndex,
    test_statements: &[StatementRecord],
    source: &EmbeddingSource,
    weights: &ProjectionWeights,
    n: usize,
) -> Result<MetricsReport> {
    let lists = rank_statements(index, test_statements, source, weights)?;
    let (iso, cos_mean, cos_std) = index_geometry(index)?;
    Ok(MetricsReport {
        n,
        hit_rate: hit_rate(&lists, n)?,
        f1: f1_at_n(&lists, n)?,
        mrr: mrr(&lists)?,
        isoscore: iso,
        cos_mean,
        cos_std,
        num_queries: lists.len(),
    })
}
