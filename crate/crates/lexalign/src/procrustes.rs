//! Orthogonal Procrustes fitting and iterative refinement.
//!
//! Given paired rows, the closed-form solution maps query vectors onto their
//! partners with an exactly orthogonal matrix. Refinement alternates between
//! inducing a dictionary with mutual nearest neighbours and re-fitting the
//! map on the induced pairs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::embeddings::EmbeddingSpace;
use crate::numerics::{svd, Matrix, NumericsError};
use crate::similarity::{mutual_nn_pairs, InducedDictionary, SimilarityError, SimilarityMetric};

/// Singular values below this fraction of the largest mark a non-unique optimum.
const DEGENERACY_RTOL: f64 = 1e-12;

#[derive(Error, Debug)]
pub enum ProcrustesError {
    #[error("need at least one pair of rows")]
    EmptyPairSet,
    #[error("paired matrices differ in shape: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch { left_rows: usize, left_cols: usize, right_rows: usize, right_cols: usize },
    #[error("pair references row {index} but the {side} space has {len} rows")]
    IndexOutOfBounds { side: &'static str, index: usize, len: usize },
    #[error("refinement needs at least one iteration")]
    ZeroIterations,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Closed-form solution of one Procrustes problem.
pub struct ProcrustesSolution {
    /// Orthogonal map applied as `x ↦ x·Wᵀ` to query rows.
    pub map: Matrix,
    /// Smallest singular value of the cross-covariance matrix.
    pub min_singular_value: f64,
    /// True when the optimum is not unique (rank-deficient cross-covariance).
    pub degenerate: bool,
}

/// Fits the orthogonal map minimizing `‖Q·Wᵀ - T‖_F` over paired rows, where
/// row `i` of `query_rows` must land on row `i` of `target_rows`. The solution
/// is `W = U·Vᵀ` from the SVD of the cross-covariance `Tᵀ·Q`.
pub fn solve_procrustes(
    query_rows: &Matrix,
    target_rows: &Matrix,
) -> Result<ProcrustesSolution, ProcrustesError> {
    if query_rows.rows() != target_rows.rows() || query_rows.cols() != target_rows.cols() {
        return Err(ProcrustesError::ShapeMismatch {
            left_rows: query_rows.rows(),
            left_cols: query_rows.cols(),
            right_rows: target_rows.rows(),
            right_cols: target_rows.cols(),
        });
    }
    if query_rows.rows() == 0 || query_rows.cols() == 0 {
        return Err(ProcrustesError::EmptyPairSet);
    }
    let cross = target_rows.mul_at_b(query_rows);
    let decomp = svd(&cross)?;
    let map = decomp.u.mul_bt(&decomp.v);
    let max_sv = decomp.singular_values.first().copied().unwrap_or(0.0);
    let min_sv = decomp.singular_values.last().copied().unwrap_or(0.0);
    let degenerate = min_sv <= DEGENERACY_RTOL * max_sv.max(1e-300);
    Ok(ProcrustesSolution { map, min_singular_value: min_sv, degenerate })
}

/// Solves the Procrustes problem on the rows named by an induced dictionary:
/// pairs are `(query_index, candidate_index)` into the two spaces.
pub fn solve_on_dictionary(
    dict: &InducedDictionary,
    query_space: &EmbeddingSpace,
    candidate_space: &EmbeddingSpace,
) -> Result<ProcrustesSolution, ProcrustesError> {
    if dict.is_empty() {
        return Err(ProcrustesError::EmptyPairSet);
    }
    for &(q, c) in dict.pairs() {
        if q >= query_space.len() {
            return Err(ProcrustesError::IndexOutOfBounds { side: "query", index: q, len: query_space.len() });
        }
        if c >= candidate_space.len() {
            return Err(ProcrustesError::IndexOutOfBounds {
                side: "candidate",
                index: c,
                len: candidate_space.len(),
            });
        }
    }
    let qidx: Vec<usize> = dict.pairs().iter().map(|&(q, _)| q).collect();
    let cidx: Vec<usize> = dict.pairs().iter().map(|&(_, c)| c).collect();
    let q = query_space.vectors().gather_rows(&qidx);
    let c = candidate_space.vectors().gather_rows(&cidx);
    solve_procrustes(&q, &c)
}

/// Knobs for the refinement loop.
#[derive(Clone, Debug)]
pub struct RefineOptions {
    /// Number of most-frequent query words used for dictionary induction.
    pub query_limit: usize,
    /// Induce-and-refit rounds.
    pub iterations: usize,
    /// Restrict induction candidates to the `query_limit` most frequent
    /// target words instead of the whole candidate vocabulary.
    pub restrict_target_pool: bool,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions { query_limit: 10_000, iterations: 1, restrict_target_pool: false }
    }
}

/// Result of a refinement run.
pub struct RefineOutcome {
    /// The refined map (the initial map if refinement aborted immediately).
    pub map: Matrix,
    /// Induced dictionary size at each completed iteration.
    pub dictionary_sizes: Vec<usize>,
    /// Set when an iteration induced an empty dictionary and refinement
    /// stopped early, keeping the last map.
    pub aborted_empty: bool,
    /// The dictionary induced in the last completed iteration.
    pub last_dictionary: Option<InducedDictionary>,
}

/// Iteratively refines a map from `query_space` into `candidate_space`:
/// each round induces mutual-nearest-neighbour pairs under the current map
/// and replaces the map with the Procrustes fit on those pairs.
///
/// For the forward map pass `(source, target)`; for the inverse map pass
/// `(target, source)` — see [`refine_inverse`].
pub fn refine(
    initial: &Matrix,
    query_space: &EmbeddingSpace,
    candidate_space: &EmbeddingSpace,
    metric: &SimilarityMetric,
    options: &RefineOptions,
) -> Result<RefineOutcome, ProcrustesError> {
    if options.iterations == 0 {
        return Err(ProcrustesError::ZeroIterations);
    }
    let mut map = initial.clone();
    let mut sizes = Vec::with_capacity(options.iterations);
    let mut last_dictionary = None;
    for _ in 0..options.iterations {
        let induced = mutual_nn_pairs(
            &map,
            query_space,
            candidate_space,
            metric,
            options.query_limit,
            options.restrict_target_pool,
        )?;
        if induced.is_empty() {
            return Ok(RefineOutcome { map, dictionary_sizes: sizes, aborted_empty: true, last_dictionary });
        }
        sizes.push(induced.len());
        map = solve_on_dictionary(&induced, query_space, candidate_space)?.map;
        last_dictionary = Some(induced);
    }
    Ok(RefineOutcome { map, dictionary_sizes: sizes, aborted_empty: false, last_dictionary })
}

/// Refines the inverse map, which carries target words into the source space:
/// the same loop as [`refine`] with the two spaces' roles swapped.
pub fn refine_inverse(
    initial: &Matrix,
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    metric: &SimilarityMetric,
    options: &RefineOptions,
) -> Result<RefineOutcome, ProcrustesError> {
    refine(initial, target, source, metric, options)
}

/// Writes an induced dictionary as token pairs, query tokens first, in
/// descending query-frequency order.
pub fn write_induced_dictionary(
    dict: &InducedDictionary,
    query_space: &EmbeddingSpace,
    candidate_space: &EmbeddingSpace,
    path: &Path,
) -> Result<(), ProcrustesError> {
    for &(q, c) in dict.pairs() {
        if q >= query_space.len() {
            return Err(ProcrustesError::IndexOutOfBounds { side: "query", index: q, len: query_space.len() });
        }
        if c >= candidate_space.len() {
            return Err(ProcrustesError::IndexOutOfBounds {
                side: "candidate",
                index: c,
                len: candidate_space.len(),
            });
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    for &(q, c) in dict.pairs() {
        writeln!(out, "{} {}", query_space.token(q), candidate_space.token(c))?;
    }
    out.flush()?;
    Ok(())
}
