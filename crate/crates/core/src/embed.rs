//! Token-level encoder outputs, masked mean pooling, a deterministic stub
//! encoder, and the EMB1 interchange format.
//!
//! EMB1 layout (little-endian):
//!
//! ```text
//! magic "EMB1" | u32 version = 1 | u32 width E | u64 record count
//! per record: u32 id length | id bytes (UTF-8) | u32 T | T*E f32 hidden (row-major) | T u8 mask
//! ```

use std::borrow::Cow;
use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{eof_as_truncated, Error, Result};
use crate::seed::{derive_seed, rng_from_seed};

pub const EMB1_MAGIC: [u8; 4] = *b"EMB1";
pub const EMB1_VERSION: u32 = 1;

/// Hidden states `[T x E]` and the attention mask of one encoded text.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingSequence {
    id: String,
    width: usize,
    hidden: Vec<f32>,
    mask: Vec<u8>,
}

impl TokenEmbeddingSequence {
    pub fn new(id: impl Into<String>, width: usize, hidden: Vec<f32>, mask: Vec<u8>) -> Result<Self> {
        let id = id.into();
        if width == 0 {
            return Err(Error::InvalidArgument("encoder width must be positive".into()));
        }
        if mask.is_empty() {
            return Err(Error::InvalidArgument(format!("`{id}` has no tokens")));
        }
        if hidden.len() != mask.len() * width {
            return Err(Error::ShapeMismatch(format!(
                "`{id}`: {} hidden values for {} tokens of width {width}",
                hidden.len(),
                mask.len()
            )));
        }
        if mask.iter().any(|&m| m > 1) {
            return Err(Error::InvalidArgument(format!("`{id}`: mask entries must be 0 or 1")));
        }
        if hidden.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("`{id}`: non-finite hidden state")));
        }
        Ok(Self { id, width, hidden, mask })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_tokens(&self) -> usize {
        self.mask.len()
    }

    pub fn hidden(&self) -> &[f32] {
        &self.hidden
    }

    pub fn token(&self, t: usize) -> &[f32] {
        &self.hidden[t * self.width..(t + 1) * self.width]
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledEmbedding {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Averages the hidden states of unmasked tokens, accumulating in `f64`.
pub fn masked_mean_pool(seq: &TokenEmbeddingSequence) -> Result<PooledEmbedding> {
    let mut sum = vec![0.0f64; seq.width];
    let mut count = 0usize;
    for (t, &m) in seq.mask.iter().enumerate() {
        if m == 0 {
            continue;
        }
        count += 1;
        for (s, &h) in sum.iter_mut().zip(seq.token(t)) {
            *s += f64::from(h);
        }
    }
    if count == 0 {
        return Err(Error::AllMasked(seq.id.clone()));
    }
    let denom = count as f64;
    sum.iter_mut().for_each(|s| *s /= denom);
    Ok(PooledEmbedding { id: seq.id.clone(), vector: sum })
}

/// Strips trailing ASCII punctuation so `"transfer."` hashes like `"transfer"`.
fn stub_token(word: &str) -> &str {
    let stem = word.trim_end_matches(|c: char| c.is_ascii_punctuation());
    if stem.is_empty() {
        word
    } else {
        stem
    }
}

/// Unit-norm pseudo-random vector for one word.
pub fn stub_word_vector(word: &str, width: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(derive_seed(seed, stub_token(word), width as u64));
    loop {
        let v: Vec<f64> = (0..width).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Test double for the external encoder: one token per whitespace-delimited
/// word, each mapped to a fixed random unit vector, mask all ones.
pub fn stub_encode(text: &str, width: usize, seed: u64) -> Result<TokenEmbeddingSequence> {
    if width < 2 {
        return Err(Error::InvalidArgument(format!("stub width must be at least 2, got {width}")));
    }
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.is_empty() {
        return Err(Error::EmptyText);
    }
    let mut hidden = Vec::with_capacity(words.len() * width);
    for w in &words {
        hidden.extend(stub_word_vector(w, width, seed).into_iter().map(|x| x as f32));
    }
    TokenEmbeddingSequence::new(text, width, hidden, vec![1; words.len()])
}

pub fn write_embeddings(path: impl AsRef<Path>, seqs: &[TokenEmbeddingSequence]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_embeddings(&mut w, seqs)?;
    w.flush()?;
    Ok(())
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Vec<TokenEmbeddingSequence>> {
    decode_embeddings(&mut BufReader::new(File::open(path)?))
}

pub fn encode_embeddings(w: &mut impl Write, seqs: &[TokenEmbeddingSequence]) -> Result<()> {
    let width = seqs.first().map_or(0, |s| s.width);
    let mut ids = HashSet::new();
    for s in seqs {
        if !ids.insert(s.id.as_str()) {
            return Err(Error::DuplicateId(s.id.clone()));
        }
        if s.width != width {
            return Err(Error::DimMismatch { expected: width, got: s.width });
        }
    }

    w.write_all(&EMB1_MAGIC)?;
    w.write_all(&EMB1_VERSION.to_le_bytes())?;
    w.write_all(&(width as u32).to_le_bytes())?;
    w.write_all(&(seqs.len() as u64).to_le_bytes())?;
    for s in seqs {
        w.write_all(&(s.id.len() as u32).to_le_bytes())?;
        w.write_all(s.id.as_bytes())?;
        w.write_all(&(s.num_tokens() as u32).to_le_bytes())?;
        for v in &s.hidden {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&s.mask)?;
    }
    Ok(())
}

pub(crate) fn read_magic(r: &mut impl Read, expected: [u8; 4]) -> Result<()> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found).map_err(eof_as_truncated)?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(eof_as_truncated)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(eof_as_truncated)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads exactly `len` bytes without trusting `len` for preallocation.
pub(crate) fn read_bytes(r: &mut impl Read, len: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(Error::TruncatedFile);
    }
    Ok(buf)
}

pub(crate) fn read_string(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    String::from_utf8(read_bytes(r, len)?).map_err(|_| Error::InvalidData("string is not UTF-8".into()))
}

pub fn decode_embeddings(r: &mut impl Read) -> Result<Vec<TokenEmbeddingSequence>> {
    read_magic(r, EMB1_MAGIC)?;
    let version = read_u32(r)?;
    if version != EMB1_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let width = read_u32(r)? as usize;
    let count = read_u64(r)?;

    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for _ in 0..count {
        let id = read_string(r)?;
        let tokens = read_u32(r)? as usize;
        let raw = read_bytes(r, tokens * width * 4)?;
        let hidden: Vec<f32> =
            raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let mask = read_bytes(r, tokens)?;
        if !ids.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        out.push(
            TokenEmbeddingSequence::new(id, width, hidden, mask)
                .map_err(|e| Error::InvalidData(e.to_string()))?,
        );
    }
    Ok(out)
}

/// Where pooled encoder features come from.
#[derive(Debug, Clone)]
pub enum EmbeddingSource {
    /// Encode on the fly with [`stub_encode`].
    Stub { width: usize, seed: u64 },
    /// Pre-encoded sequences looked up by id.
    Table(EmbeddingTable),
}

impl EmbeddingSource {
    pub fn stub(width: usize, seed: u64) -> Self {
        Self::Stub { width, seed }
    }

    pub fn width(&self) -> usize {
        match self {
            Self::Stub { width, .. } => *width,
            Self::Table(t) => t.width,
        }
    }

    /// Token-level features of a text. The stub encodes `text`; a table
    /// looks up `id` and ignores `text`.
    pub fn sequence(&self, id: &str, text: &str) -> Result<Cow<'_, TokenEmbeddingSequence>> {
        match self {
            Self::Stub { width, seed } => Ok(Cow::Owned(stub_encode(text, *width, *seed)?)),
            Self::Table(t) => t.get(id).map(Cow::Borrowed).ok_or_else(|| Error::MissingEmbedding(id.into())),
        }
    }

    pub fn pooled(&self, id: &str, text: &str) -> Result<Vec<f64>> {
        Ok(masked_mean_pool(&*self.sequence(id, text)?)?.vector)
    }
}

#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    width: usize,
    entries: BTreeMap<String, TokenEmbeddingSequence>,
}

impl EmbeddingTable {
    pub fn from_sequences(seqs: Vec<TokenEmbeddingSequence>) -> Result<Self> {
        let width = seqs.first().map_or(0, |s| s.width);
        let mut entries = BTreeMap::new();
        for s in seqs {
            if s.width != width {
                return Err(Error::DimMismatch { expected: width, got: s.width });
            }
            if let Some(dup) = entries.insert(s.id.clone(), s) {
                return Err(Error::DuplicateId(dup.id));
            }
        }
        Ok(Self { width, entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_sequences(read_embeddings(path)?)
    }

    pub fn get(&self, id: &str) -> Option<&TokenEmbeddingSequence> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TokenEmbeddingSequence> {
        self.entries.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(hidden: &[[f32; 2]], mask: &[u8]) -> TokenEmbeddingSequence {
        TokenEmbeddingSequence::new("x", 2, hidden.iter().flatten().copied().collect(), mask.to_vec()).unwrap()
    }

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        crate::linalg::dot(a, b) / (crate::linalg::norm(a) * crate::linalg::norm(b))
    }

    #[test]
    fn pooling_examples() {
        assert_eq!(masked_mean_pool(&seq(&[[1.0, 3.0], [5.0, 7.0]], &[1, 1])).unwrap().vector, vec![3.0, 5.0]);
        assert_eq!(masked_mean_pool(&seq(&[[1.0, 3.0], [5.0, 7.0]], &[1, 0])).unwrap().vector, vec![1.0, 3.0]);
        assert!(matches!(
            masked_mean_pool(&seq(&[[1.0, 3.0], [5.0, 7.0]], &[0, 0])),
            Err(Error::AllMasked(_))
        ));
    }

    #[test]
    fn sequence_validation() {
        assert!(TokenEmbeddingSequence::new("a", 2, vec![0.0; 3], vec![1, 1]).is_err());
        assert!(TokenEmbeddingSequence::new("a", 2, vec![0.0; 4], vec![1, 2]).is_err());
        assert!(TokenEmbeddingSequence::new("a", 2, vec![f32::NAN, 0.0], vec![1]).is_err());
        assert!(TokenEmbeddingSequence::new("a", 2, vec![], vec![]).is_err());
    }

    #[test]
    fn stub_repeats_words_and_is_deterministic() {
        let s = stub_encode("a a", 8, 3).unwrap();
        assert_eq!(s.token(0), s.token(1));
        assert_eq!(stub_encode("heat transfer", 8, 3).unwrap(), stub_encode("heat transfer", 8, 3).unwrap());
        let n: f64 = s.token(0).iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
        assert_eq!(s.mask(), &[1, 1]);
        assert!(matches!(stub_encode("  ", 8, 3), Err(Error::EmptyText)));
        assert!(matches!(stub_encode("a", 1, 3), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn stub_shared_vocabulary_is_closer() {
        for seed in 0..100 {
            let pool = |t: &str| masked_mean_pool(&stub_encode(t, 768, seed).unwrap()).unwrap().vector;
            let base = pool("heat transfer");
            let shared = cos(&base, &pool("heat exchange"));
            let disjoint = cos(&base, &pool("compiler design"));
            assert!(shared > disjoint, "seed {seed}: {shared} <= {disjoint}");
        }
    }

    #[test]
    fn emb1_errors() {
        let mut bytes = Vec::new();
        encode_embeddings(&mut bytes, &[seq(&[[1.0, 2.0]], &[1])]).unwrap();

        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_embeddings(&mut bad.as_slice()), Err(Error::BadMagic { .. })));

        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(decode_embeddings(&mut v2.as_slice()), Err(Error::UnsupportedVersion(2))));

        let mut count2 = bytes.clone();
        count2[12] = 2;
        assert!(matches!(decode_embeddings(&mut count2.as_slice()), Err(Error::TruncatedFile)));

        let dup = [seq(&[[1.0, 2.0]], &[1]), seq(&[[3.0, 4.0]], &[1])];
        assert!(matches!(encode_embeddings(&mut Vec::new(), &dup), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn emb1_duplicate_on_read() {
        let a = seq(&[[1.0, 2.0]], &[1]);
        let mut bytes = Vec::new();
        encode_embeddings(&mut bytes, std::slice::from_ref(&a)).unwrap();
        // splice a second copy of the single record and bump the count
        let record = bytes[20..].to_vec();
        bytes.extend_from_slice(&record);
        bytes[12] = 2;
        assert!(matches!(decode_embeddings(&mut bytes.as_slice()), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn table_source_lookup() {
        let table = EmbeddingTable::from_sequences(vec![seq(&[[2.0, 4.0]], &[1])]).unwrap();
        let source = EmbeddingSource::Table(table);
        assert_eq!(source.pooled("x", "ignored").unwrap(), vec![2.0, 4.0]);
        assert!(matches!(source.pooled("y", "text"), Err(Error::MissingEmbedding(_))));
    }
}
