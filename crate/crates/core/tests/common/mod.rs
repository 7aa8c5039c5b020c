#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use isorec::embed::{write_embeddings, EmbeddingSource, EmbeddingTable, TokenEmbeddingSequence};
use isorec::model::{init_weights, save_weights, HeadDims, ModelMeta, ProjectionWeights};
use isorec::seed::rng_from_seed;
use isorec::serve::{save_index, CourseIndex, IndexEntry, QueryEncoder};
use isorec::train::batch_gradients;
use isorec::catalog::CourseKey;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rng_from_seed(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Random orthogonal matrix from the QR factorization of a Gaussian matrix.
pub fn random_rotation(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| gaussian(rng));
    g.qr().q()
}

/// Supervised multi-positive NT-Xent enumerated literally: no max shift,
/// positives summed inside the log.
pub fn brute_force_ntxent(z: &[Vec<f64>], labels: &[usize], tau: f64) -> Option<f64> {
    let sim = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let mut total = 0.0;
    let mut anchors = 0;
    for a in 0..z.len() {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut has_positive = false;
        for k in 0..z.len() {
            if k == a {
                continue;
            }
            let e = (sim(&z[a], &z[k]) / tau).exp();
            den += e;
            if labels[k] == labels[a] {
                num += e;
                has_positive = true;
            }
        }
        if has_positive {
            total += -(num / den).ln();
            anchors += 1;
        }
    }
    (anchors > 0).then(|| total / anchors as f64)
}

/// IsoScore computed from nalgebra's eigen-decomposition of the population
/// covariance, with the "dimensions used" count `k = (D - δ²(D - √D))² / D`
/// and `ι = (k - 1)/(D - 1)`.
pub fn isoscore_oracle(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let d = points[0].len();
    let x = DMatrix::from_fn(n, d, |r, c| points[r][c]);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, d, |r, c| x[(r, c)] - mean[c]);
    let cov = centered.transpose() * &centered / n as f64;
    let lambda = cov.symmetric_eigen().eigenvalues;
    let df = d as f64;
    let sigma_hat = &lambda * (df.sqrt() / lambda.norm());
    let delta = sigma_hat.map(|s| s - 1.0).norm() / (2.0 * (df - df.sqrt())).sqrt();
    let k = (df - delta * delta * (df - df.sqrt())).powi(2) / df;
    (k - 1.0) / (df - 1.0)
}

/// Random head with nonzero biases.
pub fn random_head(rng: &mut ChaCha8Rng, dims: HeadDims) -> ProjectionWeights {
    let mut w = init_weights(dims, rng.random()).unwrap();
    w.b1.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
    w.b2.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
    w
}

/// Largest relative error between analytic and central-difference gradients
/// of the combined loss over every head parameter.
pub fn max_gradient_error(
    weights: &ProjectionWeights,
    inputs: &[Vec<f64>],
    labels: &[String],
    tau: f64,
    lambda: f64,
    h: f64,
) -> f64 {
    let rows: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    let (_, analytic) = batch_gradients(weights, &rows, labels, tau, lambda).unwrap();
    let loss = |w: &ProjectionWeights| batch_gradients(w, &rows, labels, tau, lambda).unwrap().0.total;
    let mut worst = 0.0f64;
    let mut probe = weights.clone();
    for (block, grads) in analytic.blocks().iter().enumerate() {
        for i in 0..grads.len() {
            let original = probe.blocks()[block][i];
            probe.blocks_mut()[block][i] = original + h;
            let up = loss(&probe);
            probe.blocks_mut()[block][i] = original - h;
            let down = loss(&probe);
            probe.blocks_mut()[block][i] = original;
            let numeric = (up - down) / (2.0 * h);
            let scale = grads[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((grads[i] - numeric).abs() / scale);
        }
    }
    worst
}

/// Smallest |pre-activation| over a batch, to keep finite differences away
/// from ReLU kinks.
pub fn min_kink_distance(weights: &ProjectionWeights, inputs: &[Vec<f64>]) -> f64 {
    inputs
        .iter()
        .flat_map(|x| isorec::model::forward(weights, x).unwrap().pre_activation)
        .map(f64::abs)
        .fold(f64::INFINITY, f64::min)
}

pub fn key(s: &str) -> CourseKey {
    CourseKey::parse(s).unwrap()
}

pub const TOY_QUERY: &str = "power systems";

/// Three courses on e1, the diagonal and e2. Inserted out of order so the
/// ranking cannot come from insertion order.
pub fn toy_index() -> CourseIndex {
    let d = std::f32::consts::FRAC_1_SQRT_2;
    let entry = |k: &str, title: &str, v: [f32; 2]| IndexEntry {
        key: key(k),
        title: title.into(),
        snippet: format!("{title} description"),
        vector: v.to_vec(),
    };
    CourseIndex::from_entries(vec![
        entry("ELG 2000", "Orthogonal", [0.0, 1.0]),
        entry("ELG 3000", "Diagonal", [d, d]),
        entry("ELG 1000", "Exact", [1.0, 0.0]),
    ])
    .unwrap()
}

/// The hand-derived ordering for the toy query e1.
pub const TOY_ORDER: [(&str, f64); 3] =
    [("ELG 1000", 1.0), ("ELG 3000", std::f64::consts::FRAC_1_SQRT_2), ("ELG 2000", 0.0)];

pub fn identity_head() -> ProjectionWeights {
    let mut w = ProjectionWeights::zeros(HeadDims::new(2, 2, 2));
    w.w1 = vec![1.0, 0.0, 0.0, 1.0];
    w.w2 = vec![1.0, 0.0, 0.0, 1.0];
    w
}

pub fn toy_query_table() -> EmbeddingTable {
    let seq = TokenEmbeddingSequence::new(TOY_QUERY, 2, vec![1.0, 0.0, 0.5, 0.0], vec![1, 1]).unwrap();
    EmbeddingTable::from_sequences(vec![seq]).unwrap()
}

pub fn toy_encoder() -> QueryEncoder {
    QueryEncoder::new(EmbeddingSource::Table(toy_query_table()), identity_head()).unwrap()
}

pub struct ToyFiles {
    pub index: PathBuf,
    pub model: PathBuf,
    pub queries: PathBuf,
}

/// Writes the toy index, identity head and query embeddings under `dir`.
pub fn write_toy_files(dir: &Path) -> ToyFiles {
    let files = ToyFiles { index: dir.join("toy.idx1"), model: dir.join("toy.prj1"), queries: dir.join("queries.emb1") };
    save_index(&files.index, &toy_index()).unwrap();
    let meta = ModelMeta { tau: 0.05, lambda: 0.1, seed: 0, epochs: 0, encoder_width: 2 };
    save_weights(&files.model, &identity_head(), &meta).unwrap();
    let seqs: Vec<_> = toy_query_table().iter().cloned().collect();
    write_embeddings(&files.queries, &seqs).unwrap();
    files
}

/// Course keys and scores from the text block printed by the CLI and REPL.
pub fn parse_ranked_block(text: &str) -> Vec<(String, f64)> {
    text.lines()
        .filter(|l| l.starts_with('#'))
        .map(|l| {
            let (_, rest) = l.split_once(". ").unwrap();
            let (code, score) = rest.split_once(" [similarity: ").unwrap();
            (code.to_string(), score.trim_end_matches(']').parse().unwrap())
        })
        .collect()
}

pub fn assert_toy_order(ranking: &[(String, f64)], tolerance: f64) {
    assert_eq!(ranking.len(), TOY_ORDER.len());
    for ((code, score), (want_code, want_score)) in ranking.iter().zip(TOY_ORDER) {
        assert_eq!(code, want_code);
        assert!((score - want_score).abs() <= tolerance, "{code}: {score} vs {want_score}");
    }
}

pub fn isorec_bin() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_isorec"))
}

/// Runs one `isorec` subcommand and panics with its stderr on failure.
pub fn run_isorec(args: &[&str]) -> std::process::Output {
    let out = isorec_bin().args(args).output().unwrap();
    assert!(out.status.success(), "isorec {:?} failed: {}", args, String::from_utf8_lossy(&out.stderr));
    out
}

/// Artifacts of one CLI pipeline run on the desk dataset.
pub struct PipelineRun {
    pub model: Vec<u8>,
    pub index: Vec<u8>,
    pub metrics: Vec<u8>,
    pub report: serde_json::Value,
}

/// `prepare`, `augment`, `train`, `index` and `eval` through the binary with
/// the stub encoder, all under `dir`.
pub fn run_desk_pipeline(dir: &Path, seed: u64) -> PipelineRun {
    use isorec::synthetic::{desk_config, generate, DESK_WIDTH};
    generate(60, seed).write_to(dir.join("raw")).unwrap();
    std::fs::write(dir.join("config.json"), serde_json::to_vec(&desk_config(seed)).unwrap()).unwrap();
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let seed = seed.to_string();
    let width = DESK_WIDTH.to_string();
    let stub = ["--embeddings", "stub", "--stub-width", &width, "--stub-seed", &seed];

    let (courses, statements, data) = (p("raw/courses.jsonl"), p("raw/statements.jsonl"), p("data"));
    run_isorec(&["prepare", "--courses", &courses, "--statements", &statements, "--seed", &seed, "--out", &data]);
    run_isorec(&["augment", "--in", &data, "--epoch-seed", &seed, "--out", &p("pairs.jsonl")]);
    let (model, config, report) = (p("model.prj1"), p("config.json"), p("report.json"));
    let mut train = vec!["train", "--data", &data, "--config", &config, "--out", &model, "--report", &report];
    train.extend(stub);
    run_isorec(&train);
    let index = p("courses.idx1");
    let mut index_cmd = vec!["index", "--data", &data, "--model", &model, "--out", &index];
    index_cmd.extend(stub);
    run_isorec(&index_cmd);
    let metrics = p("metrics.json");
    let mut eval = vec!["eval", "--data", &data, "--model", &model, "--out", &metrics];
    eval.extend(stub);
    run_isorec(&eval);

    PipelineRun {
        model: std::fs::read(&model).unwrap(),
        index: std::fs::read(&index).unwrap(),
        metrics: std::fs::read(&metrics).unwrap(),
        report: serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap(),
    }
}

/// Stub-encoded `text` stored under `id`, as an exporter would write it.
pub fn stub_sequence(id: &str, text: &str, width: usize, seed: u64) -> TokenEmbeddingSequence {
    let s = isorec::embed::stub_encode(text, width, seed).unwrap();
    TokenEmbeddingSequence::new(id, width, s.hidden().to_vec(), s.mask().to_vec()).unwrap()
}
