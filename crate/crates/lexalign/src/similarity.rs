//! Retrieval in the aligned space: inner-product k-NN, CSLS scoring with its
//! precomputed neighborhood cache, mutual-nearest-neighbour dictionary
//! induction, and a hubness diagnostic.
//!
//! CSLS rescores a query/target pair as twice their inner product minus the
//! mean inner product of each endpoint's nearest neighborhood, which penalizes
//! targets that are close to everything (hubs). Neighborhoods are always
//! defined by inner product, never by the corrected score itself.

use rayon::prelude::*;
use thiserror::Error;

use crate::embeddings::EmbeddingSpace;
use crate::numerics::{dot, Matrix};

/// Neighborhood size used by CSLS when the caller does not pick one.
pub const DEFAULT_CSLS_NEIGHBORHOOD: usize = 10;

/// Scoring rule for nearest-neighbour retrieval in the aligned space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SimilarityMetric {
    InnerProduct,
    Csls { neighborhood: usize },
}

impl Default for SimilarityMetric {
    fn default() -> Self {
        SimilarityMetric::Csls { neighborhood: DEFAULT_CSLS_NEIGHBORHOOD }
    }
}

#[derive(Error, Debug)]
pub enum SimilarityError {
    #[error("k = {k} exceeds the {available} available candidates")]
    KTooLarge { k: usize, available: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("neighborhood size {t} exceeds the {available} available vectors")]
    NeighborhoodTooLarge { t: usize, available: usize },
    #[error("neighborhood size must be at least 1")]
    ZeroNeighborhood,
    #[error("dimension mismatch: queries have {queries}, candidates have {candidates}")]
    DimensionMismatch { queries: usize, candidates: usize },
    #[error("retrieval needs at least one query and one candidate")]
    EmptyInput,
    #[error("query set is empty after applying the query limit")]
    EmptyQuerySet,
}

fn check_retrieval(queries: &Matrix, candidates: &Matrix) -> Result<(), SimilarityError> {
    if queries.rows() == 0 || candidates.rows() == 0 {
        return Err(SimilarityError::EmptyInput);
    }
    if queries.cols() != candidates.cols() {
        return Err(SimilarityError::DimensionMismatch {
            queries: queries.cols(),
            candidates: candidates.cols(),
        });
    }
    Ok(())
}

/// Keeps the `k` best `(index, score)` pairs, highest score first, ties broken
/// toward the lower index.
fn top_k(scores: impl Iterator<Item = f64>, k: usize) -> Vec<(usize, f64)> {
    let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
    for (idx, score) in scores.enumerate() {
        if best.len() == k {
            let worst = best[k - 1];
            if !(score > worst.1) {
                continue;
            }
        }
        let pos = best.partition_point(|&(bi, bs)| bs > score || (bs == score && bi < idx));
        best.insert(pos, (idx, score));
        if best.len() > k {
            best.pop();
        }
    }
    best
}

/// Mean of the `t` largest values.
fn top_t_mean(scores: impl Iterator<Item = f64>, t: usize) -> f64 {
    let mut best: Vec<f64> = Vec::with_capacity(t + 1);
    for score in scores {
        if best.len() == t && !(score > best[t - 1]) {
            continue;
        }
        let pos = best.partition_point(|&b| b >= score);
        best.insert(pos, score);
        if best.len() > t {
            best.pop();
        }
    }
    best.iter().sum::<f64>() / best.len() as f64
}

/// For every query row, the `k` candidates with the largest inner product,
/// best first, ties broken toward the lower candidate index.
pub fn knn_inner_product(
    queries: &Matrix,
    candidates: &Matrix,
    k: usize,
) -> Result<Vec<Vec<(usize, f64)>>, SimilarityError> {
    check_retrieval(queries, candidates)?;
    if k == 0 {
        return Err(SimilarityError::ZeroK);
    }
    if k > candidates.rows() {
        return Err(SimilarityError::KTooLarge { k, available: candidates.rows() });
    }
    let rows: Vec<usize> = (0..queries.rows()).collect();
    Ok(rows
        .par_iter()
        .map(|&i| {
            let q = queries.row(i);
            top_k((0..candidates.rows()).map(|j| dot(q, candidates.row(j))), k)
        })
        .collect())
}

/// Precomputed CSLS correction terms for a fixed query/target pairing.
#[derive(Clone, Debug)]
pub struct NeighborhoodCache {
    /// Mean inner product of each query row with its `neighborhood` closest targets.
    pub query_means: Vec<f64>,
    /// Mean inner product of each target row with its `neighborhood` closest queries.
    pub target_means: Vec<f64>,
    pub neighborhood: usize,
}

/// Computes both CSLS correction tables over the full cross product of
/// `mapped_queries` and `targets`.
pub fn build_neighborhood_cache(
    mapped_queries: &Matrix,
    targets: &Matrix,
    t: usize,
) -> Result<NeighborhoodCache, SimilarityError> {
    check_retrieval(mapped_queries, targets)?;
    if t == 0 {
        return Err(SimilarityError::ZeroNeighborhood);
    }
    let available = mapped_queries.rows().min(targets.rows());
    if t > available {
        return Err(SimilarityError::NeighborhoodTooLarge { t, available });
    }
    let qrows: Vec<usize> = (0..mapped_queries.rows()).collect();
    let query_means: Vec<f64> = qrows
        .par_iter()
        .map(|&i| {
            let q = mapped_queries.row(i);
            top_t_mean((0..targets.rows()).map(|j| dot(q, targets.row(j))), t)
        })
        .collect();
    let trows: Vec<usize> = (0..targets.rows()).collect();
    let target_means: Vec<f64> = trows
        .par_iter()
        .map(|&j| {
            let tr = targets.row(j);
            top_t_mean((0..mapped_queries.rows()).map(|i| dot(tr, mapped_queries.row(i))), t)
        })
        .collect();
    Ok(NeighborhoodCache { query_means, target_means, neighborhood: t })
}

/// CSLS top-`k` retrieval for the query rows listed in `row_indices`, using a
/// cache whose tables are aligned with the rows of `mapped_queries` and
/// `targets`. Scores are `2·⟨q, t⟩ - r_query - r_target`.
pub fn csls_topk_rows(
    mapped_queries: &Matrix,
    row_indices: &[usize],
    targets: &Matrix,
    cache: &NeighborhoodCache,
    k: usize,
) -> Result<Vec<Vec<(usize, f64)>>, SimilarityError> {
    check_retrieval(mapped_queries, targets)?;
    if k == 0 {
        return Err(SimilarityError::ZeroK);
    }
    if k > targets.rows() {
        return Err(SimilarityError::KTooLarge { k, available: targets.rows() });
    }
    assert_eq!(cache.query_means.len(), mapped_queries.rows(), "cache must match the query rows");
    assert_eq!(cache.target_means.len(), targets.rows(), "cache must match the target rows");
    Ok(row_indices
        .par_iter()
        .map(|&i| {
            let q = mapped_queries.row(i);
            let rq = cache.query_means[i];
            top_k(
                (0..targets.rows())
                    .map(|j| 2.0 * dot(q, targets.row(j)) - rq - cache.target_means[j]),
                k,
            )
        })
        .collect())
}

/// CSLS top-`k` retrieval for every query row, building the neighborhood
/// cache over exactly these queries and targets.
pub fn csls_topk(
    mapped_queries: &Matrix,
    targets: &Matrix,
    t: usize,
    k: usize,
) -> Result<Vec<Vec<(usize, f64)>>, SimilarityError> {
    let cache = build_neighborhood_cache(mapped_queries, targets, t)?;
    let rows: Vec<usize> = (0..mapped_queries.rows()).collect();
    csls_topk_rows(mapped_queries, &rows, targets, &cache, k)
}

/// Top-`k` retrieval under either metric. For CSLS the neighborhood cache is
/// built over exactly the given queries and targets.
pub fn topk_with_metric(
    mapped_queries: &Matrix,
    targets: &Matrix,
    metric: &SimilarityMetric,
    k: usize,
) -> Result<Vec<Vec<(usize, f64)>>, SimilarityError> {
    match metric {
        SimilarityMetric::InnerProduct => knn_inner_product(mapped_queries, targets, k),
        SimilarityMetric::Csls { neighborhood } => csls_topk(mapped_queries, targets, *neighborhood, k),
    }
}

/// A dictionary induced from retrieval: index pairs into a source and target
/// vocabulary, sorted by source index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InducedDictionary {
    pairs: Vec<(usize, usize)>,
}

impl InducedDictionary {
    pub fn from_pairs(mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        InducedDictionary { pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Swaps the roles of the two sides.
    pub fn transposed(&self) -> InducedDictionary {
        InducedDictionary::from_pairs(self.pairs.iter().map(|&(s, t)| (t, s)).collect())
    }
}

/// Induces a dictionary from the map: a pair `(i, j)` is kept when target `j`
/// is the best candidate for mapped query `i` and query `i` is the best
/// candidate for target `j` under the same score table.
///
/// Queries are the `query_limit` most frequent source words (clamped to the
/// vocabulary). With `restrict_target_pool` the candidate targets are also
/// clamped to the `query_limit` most frequent target words; otherwise the
/// whole target vocabulary competes.
pub fn mutual_nn_pairs(
    map: &Matrix,
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    metric: &SimilarityMetric,
    query_limit: usize,
    restrict_target_pool: bool,
) -> Result<InducedDictionary, SimilarityError> {
    let q_count = query_limit.min(source.len());
    if q_count == 0 {
        return Err(SimilarityError::EmptyQuerySet);
    }
    let t_count = if restrict_target_pool { query_limit.min(target.len()) } else { target.len() };
    let query_rows: Vec<usize> = (0..q_count).collect();
    let mapped = source.vectors().gather_rows(&query_rows).mul_bt(map);
    let pool_rows: Vec<usize> = (0..t_count).collect();
    let pool = target.vectors().gather_rows(&pool_rows);
    check_retrieval(&mapped, &pool)?;

    // Forward and backward argmax over one shared score table.
    let (forward, backward) = match metric {
        SimilarityMetric::InnerProduct => {
            let scores = mapped.mul_bt(&pool);
            argmax_both(&scores)
        }
        SimilarityMetric::Csls { neighborhood } => {
            let t = *neighborhood;
            if t == 0 {
                return Err(SimilarityError::ZeroNeighborhood);
            }
            let available = mapped.rows().min(pool.rows());
            if t > available {
                return Err(SimilarityError::NeighborhoodTooLarge { t, available });
            }
            let cache = build_neighborhood_cache(&mapped, &pool, t)?;
            let mut scores = mapped.mul_bt(&pool);
            for i in 0..scores.rows() {
                let row = scores.row_mut(i);
                for (j, v) in row.iter_mut().enumerate() {
                    *v = 2.0 * *v - cache.query_means[i] - cache.target_means[j];
                }
            }
            argmax_both(&scores)
        }
    };
    let pairs: Vec<(usize, usize)> = forward
        .iter()
        .enumerate()
        .filter(|&(i, &j)| backward[j] == i)
        .map(|(i, &j)| (i, j))
        .collect();
    Ok(InducedDictionary::from_pairs(pairs))
}

/// Row-wise and column-wise argmax with ties broken toward the lower index.
fn argmax_both(scores: &Matrix) -> (Vec<usize>, Vec<usize>) {
    let mut forward = vec![0usize; scores.rows()];
    let mut backward = vec![0usize; scores.cols()];
    let mut col_best = vec![f64::NEG_INFINITY; scores.cols()];
    for i in 0..scores.rows() {
        let row = scores.row(i);
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
            if v > col_best[j] {
                col_best[j] = v;
                backward[j] = i;
            }
        }
        forward[i] = best;
    }
    (forward, backward)
}

/// Number of target words that are the inner-product top-1 for strictly more
/// than `threshold` query rows.
pub fn hub_count(
    mapped_queries: &Matrix,
    targets: &Matrix,
    threshold: usize,
) -> Result<usize, SimilarityError> {
    let top1 = knn_inner_product(mapped_queries, targets, 1)?;
    let mut hits = vec![0usize; targets.rows()];
    for row in &top1 {
        hits[row[0].0] += 1;
    }
    Ok(hits.iter().filter(|&&c| c > threshold).count())
}
