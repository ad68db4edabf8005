//! Embedding spaces: text-format I/O, row normalization, frequency slices,
//! and the synthetic language-pair generator used for controlled experiments.
//!
//! The text format is one header line `count dim` followed by `count` lines
//! of `token v_0 ... v_{dim-1}`, whitespace separated. File order is trusted
//! as descending frequency order; duplicate tokens after the first occurrence
//! are skipped and counted.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::evaluation::TranslationDictionary;
use crate::numerics::{gaussian_matrix, random_orthogonal_from, Matrix};
use crate::seeding::{substream_rng, STREAM_SYNTH};

#[derive(Error, Debug)]
pub enum EmbeddingError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header line {line:?}: expected `count dim`")]
    MalformedHeader { line: String },
    #[error("line {line_no}: expected {expected} fields, got {got}")]
    WrongFieldCount { line_no: usize, expected: usize, got: usize },
    #[error("line {line_no}: {text:?} is not a number")]
    InvalidNumber { line_no: usize, text: String },
    #[error("line {line_no}: non-finite coordinate")]
    NonFinite { line_no: usize },
    #[error("token {token:?} has a zero vector and cannot be normalized")]
    ZeroVector { token: String },
    #[error("file ended after {got} data lines, header declared {expected}")]
    TruncatedFile { expected: usize, got: usize },
    #[error("line {line_no}: data after the declared row count")]
    TrailingData { line_no: usize },
    #[error("embedding space must contain at least one token")]
    EmptyVocabulary,
    #[error("invalid shape {rows}x{cols}: need at least one row and one column")]
    InvalidShape { rows: usize, cols: usize },
    #[error("duplicate token {token:?}")]
    DuplicateToken { token: String },
    #[error("token {token:?} contains whitespace and cannot survive a text round-trip")]
    TokenWithWhitespace { token: String },
    #[error("vocabulary has {vocab} tokens but the matrix has {rows} rows")]
    VocabVectorMismatch { vocab: usize, rows: usize },
    #[error("space is flagged normalized but token {token:?} has norm {norm}")]
    NotUnitNorm { token: String, norm: f64 },
    #[error("synthetic pair needs n >= d >= 1, got n={n}, d={d}")]
    BadSyntheticShape { n: usize, d: usize },
}

/// A vocabulary in descending frequency order with one row vector per token.
#[derive(Clone, Debug)]
pub struct EmbeddingSpace {
    lang_id: String,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Matrix,
    normalized: bool,
}

impl EmbeddingSpace {
    /// Validates and assembles a space. Tokens must be unique, non-empty, and
    /// free of whitespace; vectors must be finite, one row per token; when
    /// `normalized` is set every row must already have unit norm.
    pub fn new(
        lang_id: impl Into<String>,
        vocab: Vec<String>,
        vectors: Matrix,
        normalized: bool,
    ) -> Result<Self, EmbeddingError> {
        if vocab.len() != vectors.rows() {
            return Err(EmbeddingError::VocabVectorMismatch { vocab: vocab.len(), rows: vectors.rows() });
        }
        if vectors.rows() == 0 || vectors.cols() == 0 {
            return Err(EmbeddingError::InvalidShape { rows: vectors.rows(), cols: vectors.cols() });
        }
        if !vectors.all_finite() {
            return Err(EmbeddingError::NonFinite { line_no: 0 });
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, token) in vocab.iter().enumerate() {
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(EmbeddingError::TokenWithWhitespace { token: token.clone() });
            }
            if index.insert(token.clone(), i).is_some() {
                return Err(EmbeddingError::DuplicateToken { token: token.clone() });
            }
        }
        if normalized {
            for i in 0..vectors.rows() {
                let norm = row_norm(vectors.row(i));
                if (norm - 1.0).abs() > 1e-8 {
                    return Err(EmbeddingError::NotUnitNorm { token: vocab[i].clone(), norm });
                }
            }
        }
        Ok(EmbeddingSpace { lang_id: lang_id.into(), vocab, index, vectors, normalized })
    }

    pub fn lang_id(&self) -> &str {
        &self.lang_id
    }

    /// Number of tokens.
    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn token(&self, i: usize) -> &str {
        &self.vocab[i]
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }
}

fn row_norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Result of loading a text embedding file.
pub struct LoadedEmbeddings {
    pub space: EmbeddingSpace,
    /// Data lines whose token had already been seen and were therefore skipped.
    pub duplicates_skipped: usize,
}

/// Reads a text embedding file. `max_vocab` keeps only the first distinct
/// tokens; `normalize` rescales every kept row to unit norm. The file stem
/// becomes the language id.
pub fn load_text_embeddings(
    path: &Path,
    max_vocab: Option<usize>,
    normalize: bool,
) -> Result<LoadedEmbeddings, EmbeddingError> {
    let lang_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "space".to_string());
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(EmbeddingError::MalformedHeader { line: String::new() }),
    };
    let mut parts = header.split_whitespace();
    let (count, dim) = match (parts.next(), parts.next(), parts.next()) {
        (Some(c), Some(d), None) => match (c.parse::<usize>(), d.parse::<usize>()) {
            (Ok(c), Ok(d)) => (c, d),
            _ => return Err(EmbeddingError::MalformedHeader { line: header.clone() }),
        },
        _ => return Err(EmbeddingError::MalformedHeader { line: header.clone() }),
    };
    if count == 0 {
        return Err(EmbeddingError::EmptyVocabulary);
    }
    if dim == 0 {
        return Err(EmbeddingError::InvalidShape { rows: count, cols: dim });
    }
    let cap = max_vocab.unwrap_or(usize::MAX);
    let mut vocab: Vec<String> = Vec::new();
    let mut seen: HashMap<String, ()> = HashMap::new();
    let mut data: Vec<f64> = Vec::new();
    let mut duplicates_skipped = 0usize;
    let mut consumed = 0usize;
    let mut line_no = 1usize;
    while consumed < count && vocab.len() < cap {
        let line = match lines.next() {
            Some(line) => line?,
            None => return Err(EmbeddingError::TruncatedFile { expected: count, got: consumed }),
        };
        line_no += 1;
        let mut fields = line.split_whitespace();
        let token = match fields.next() {
            Some(t) => t.to_string(),
            None => return Err(EmbeddingError::WrongFieldCount { line_no, expected: dim + 1, got: 0 }),
        };
        let values: Vec<&str> = fields.collect();
        if values.len() != dim {
            return Err(EmbeddingError::WrongFieldCount { line_no, expected: dim + 1, got: values.len() + 1 });
        }
        consumed += 1;
        if seen.contains_key(&token) {
            duplicates_skipped += 1;
            continue;
        }
        let mut row = Vec::with_capacity(dim);
        for text in values {
            let v: f64 = text
                .parse()
                .map_err(|_| EmbeddingError::InvalidNumber { line_no, text: text.to_string() })?;
            if !v.is_finite() {
                return Err(EmbeddingError::NonFinite { line_no });
            }
            row.push(v);
        }
        if normalize {
            let norm = row_norm(&row);
            if norm == 0.0 {
                return Err(EmbeddingError::ZeroVector { token });
            }
            for v in &mut row {
                *v /= norm;
            }
        }
        seen.insert(token.clone(), ());
        vocab.push(token);
        data.extend_from_slice(&row);
    }
    if consumed == count {
        for line in lines {
            let line = line?;
            line_no += 1;
            if !line.trim().is_empty() {
                return Err(EmbeddingError::TrailingData { line_no });
            }
        }
    }
    if vocab.is_empty() {
        return Err(EmbeddingError::EmptyVocabulary);
    }
    let rows = vocab.len();
    let vectors = Matrix::from_vec(rows, dim, data);
    let space = EmbeddingSpace::new(lang_id, vocab, vectors, normalize)?;
    Ok(LoadedEmbeddings { space, duplicates_skipped })
}

/// Writes a space in the text format read by [`load_text_embeddings`].
/// Coordinates are printed with 17 significant digits, so a round-trip
/// reproduces every `f64` exactly.
pub fn write_text_embeddings(space: &EmbeddingSpace, path: &Path) -> Result<(), EmbeddingError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{} {}", space.len(), space.dim())?;
    for i in 0..space.len() {
        write!(out, "{}", space.token(i))?;
        for v in space.vectors().row(i) {
            write!(out, " {v:.16e}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Returns a copy of the space with every row rescaled to unit norm.
pub fn normalize_rows(space: &EmbeddingSpace) -> Result<EmbeddingSpace, EmbeddingError> {
    let mut vectors = space.vectors().clone();
    for i in 0..vectors.rows() {
        let norm = row_norm(vectors.row(i));
        if norm == 0.0 {
            return Err(EmbeddingError::ZeroVector { token: space.token(i).to_string() });
        }
        for v in vectors.row_mut(i) {
            *v /= norm;
        }
    }
    EmbeddingSpace::new(space.lang_id(), space.vocab().to_vec(), vectors, true)
}

/// Index range of the `k` most frequent tokens, clamped to the vocabulary size.
pub fn frequency_slice(space: &EmbeddingSpace, k: usize) -> Range<usize> {
    0..k.min(space.len())
}

/// A generated language pair with known alignment.
pub struct SyntheticPair {
    pub source: EmbeddingSpace,
    pub target: EmbeddingSpace,
    /// Orthogonal map aligning source rows with target rows: `t ≈ s·Qᵀ`.
    pub rotation: Matrix,
    /// Exact word-level alignment between the two vocabularies.
    pub dictionary: TranslationDictionary,
    pub noise_sigma: f64,
}

/// Generates a synthetic pair: source rows are standard Gaussian, target rows
/// are the source rows rotated by a Haar-random orthogonal map plus isotropic
/// Gaussian noise of scale `noise_sigma`, optionally shuffled so row order
/// carries no alignment signal, optionally renormalized to unit length.
///
/// Draw order from the `synth` substream is fixed: source matrix, rotation,
/// noise matrix, shuffle permutation.
pub fn generate_synthetic_pair(
    seed: u64,
    n: usize,
    d: usize,
    noise_sigma: f64,
    shuffle_target: bool,
    normalize: bool,
) -> Result<SyntheticPair, EmbeddingError> {
    if d < 1 || n < d {
        return Err(EmbeddingError::BadSyntheticShape { n, d });
    }
    assert!(noise_sigma >= 0.0, "noise scale must be nonnegative");
    let mut rng = substream_rng(seed, STREAM_SYNTH);
    let source_vectors = gaussian_matrix(n, d, &mut rng);
    let rotation = random_orthogonal_from(d, &mut rng);
    let noise = gaussian_matrix(n, d, &mut rng);
    let mut aligned = source_vectors.mul_bt(&rotation);
    aligned.add_scaled(&noise, noise_sigma);

    let mut perm: Vec<usize> = (0..n).collect();
    if shuffle_target {
        perm.shuffle(&mut rng);
    }
    let target_vectors = aligned.gather_rows(&perm);

    let width = digits(n);
    let source_vocab: Vec<String> = (0..n).map(|i| format!("s{i:0width$}")).collect();
    let target_vocab: Vec<String> = (0..n).map(|j| format!("t{j:0width$}")).collect();
    let pairs: Vec<(String, String)> = (0..n)
        .map(|j| (source_vocab[perm[j]].clone(), target_vocab[j].clone()))
        .collect();
    let dictionary = TranslationDictionary::from_pairs(pairs);

    let mut source = EmbeddingSpace::new("synth-source", source_vocab, source_vectors, false)?;
    let mut target = EmbeddingSpace::new("synth-target", target_vocab, target_vectors, false)?;
    if normalize {
        source = normalize_rows(&source)?;
        target = normalize_rows(&target)?;
    }
    Ok(SyntheticPair { source, target, rotation, dictionary, noise_sigma: noise_sigma })
}

fn digits(n: usize) -> usize {
    n.max(1).to_string().len()
}
