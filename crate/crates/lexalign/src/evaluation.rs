//! Bilingual dictionary evaluation: coverage-aware precision@k, ranked error
//! records for inspection, and a CSV export of original and mapped vectors.
//!
//! A dictionary entry counts as covered when its source token is in the query
//! vocabulary and at least one acceptable translation is in the candidate
//! vocabulary. Precision is measured over covered entries only; an entry
//! scores at `k` when any acceptable translation appears in its top-`k`
//! retrieval.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::embeddings::EmbeddingSpace;
use crate::numerics::Matrix;
use crate::similarity::{
    build_neighborhood_cache, csls_topk_rows, knn_inner_product, SimilarityError, SimilarityMetric,
};

/// How deep retrieval searches when locating the rank of the true translation.
pub const RANK_SEARCH_DEPTH: usize = 100;

#[derive(Error, Debug)]
pub enum EvalError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("dictionary line {line_no}: expected `source target`, got {line:?}")]
    MalformedLine { line_no: usize, line: String },
    #[error("dictionary contains no pairs")]
    EmptyDictionary,
    #[error("no dictionary entry is covered by both vocabularies")]
    NothingCovered,
    #[error("precision requires at least one cutoff, each at least 1")]
    BadCutoffs,
    #[error("map is {rows}x{cols} but both spaces have dimension {dim}")]
    MapShapeMismatch { rows: usize, cols: usize, dim: usize },
    #[error("spaces have different dimensions: {left} vs {right}")]
    SpaceDimMismatch { left: usize, right: usize },
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

/// Word-level translation dictionary; a source token may have several
/// acceptable translations.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TranslationDictionary {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl TranslationDictionary {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        let mut entries: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (s, t) in pairs {
            entries.entry(s).or_default().insert(t);
        }
        TranslationDictionary { entries }
    }

    /// Number of distinct source tokens.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of (source, translation) pairs.
    pub fn pair_count(&self) -> usize {
        self.entries.values().map(BTreeSet::len).sum()
    }

    pub fn translations(&self, source: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(source)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.entries.iter().map(|(s, ts)| (s.as_str(), ts))
    }

    /// Swaps source and target roles.
    pub fn inverted(&self) -> TranslationDictionary {
        TranslationDictionary::from_pairs(
            self.entries
                .iter()
                .flat_map(|(s, ts)| ts.iter().map(move |t| (t.clone(), s.clone()))),
        )
    }
}

/// Reads a dictionary file: one `source target` pair per line, whitespace
/// separated. Repeated source tokens accumulate alternative translations;
/// exact duplicate pairs collapse.
pub fn load_dictionary(path: &Path) -> Result<TranslationDictionary, EvalError> {
    let reader = BufReader::new(File::open(path)?);
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        match (fields.next(), fields.next(), fields.next()) {
            (Some(s), Some(t), None) => pairs.push((s.to_string(), t.to_string())),
            _ => return Err(EvalError::MalformedLine { line_no: idx + 1, line }),
        }
    }
    if pairs.is_empty() {
        return Err(EvalError::EmptyDictionary);
    }
    Ok(TranslationDictionary::from_pairs(pairs))
}

/// Writes a dictionary in the format read by [`load_dictionary`],
/// sources in lexicographic order.
pub fn write_dictionary(dict: &TranslationDictionary, path: &Path) -> Result<(), EvalError> {
    let mut out = BufWriter::new(File::create(path)?);
    for (s, ts) in dict.entries() {
        for t in ts {
            writeln!(out, "{s} {t}")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Which way the alignment is being scored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Translate source words into the target space with the forward map.
    Forward,
    /// Translate target words into the source space with the inverse map.
    Inverse,
}

/// One covered entry whose top candidate was not an acceptable translation.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRecord {
    pub source_token: String,
    /// The (wrong) top-1 candidate.
    pub predicted: String,
    /// Acceptable translations present in the candidate vocabulary.
    pub acceptable: Vec<String>,
    /// 1-based rank of the best acceptable translation, if it appeared within
    /// the search depth.
    pub truth_rank: Option<usize>,
}

/// Precision/coverage report for one direction and metric.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Dictionary entries after orienting it for the scored direction.
    pub total_entries: usize,
    pub covered: usize,
    /// Percentage of entries covered by both vocabularies.
    pub coverage: f64,
    /// `(k, percent of covered entries with an acceptable translation in the top k)`.
    pub precision_at: Vec<(usize, f64)>,
    /// Covered entries that were not solved at rank 1, in descending source
    /// frequency order.
    pub errors: Vec<ErrorRecord>,
}

impl EvalReport {
    /// Precision at a specific cutoff, if it was requested.
    pub fn precision(&self, k: usize) -> Option<f64> {
        self.precision_at.iter().find(|&&(kk, _)| kk == k).map(|&(_, p)| p)
    }
}

/// Scores the map against a reference dictionary.
///
/// `Forward` queries are source words mapped into the target space; `Inverse`
/// queries are target words mapped into the source space with the dictionary
/// inverted internally, so the same dictionary file serves both directions.
/// The map must be the one matching the chosen direction.
///
/// Out-of-vocabulary entries are excluded from the precision denominator and
/// reported through `coverage`. For CSLS, the target-side correction is built
/// over the full mapped query vocabulary.
pub fn precision_at_k(
    map: &Matrix,
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    dictionary: &TranslationDictionary,
    metric: &SimilarityMetric,
    ks: &[usize],
    direction: Direction,
) -> Result<EvalReport, EvalError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(EvalError::BadCutoffs);
    }
    if source.dim() != target.dim() {
        return Err(EvalError::SpaceDimMismatch { left: source.dim(), right: target.dim() });
    }
    let dim = source.dim();
    if map.rows() != dim || map.cols() != dim {
        return Err(EvalError::MapShapeMismatch { rows: map.rows(), cols: map.cols(), dim });
    }
    let (queries, candidates, oriented);
    match direction {
        Direction::Forward => {
            queries = source;
            candidates = target;
            oriented = dictionary.clone();
        }
        Direction::Inverse => {
            queries = target;
            candidates = source;
            oriented = dictionary.inverted();
        }
    }
    if oriented.is_empty() {
        return Err(EvalError::EmptyDictionary);
    }

    // Covered entries in descending query-frequency order.
    let mut covered: Vec<(usize, &str, Vec<usize>, Vec<String>)> = Vec::new();
    for (s, ts) in oriented.entries() {
        let Some(qi) = queries.index_of(s) else { continue };
        let mut acceptable_idx = Vec::new();
        let mut acceptable_tok = Vec::new();
        for t in ts {
            if let Some(ci) = candidates.index_of(t) {
                acceptable_idx.push(ci);
                acceptable_tok.push(t.clone());
            }
        }
        if !acceptable_idx.is_empty() {
            covered.push((qi, s, acceptable_idx, acceptable_tok));
        }
    }
    covered.sort_by_key(|entry| entry.0);
    let total_entries = oriented.len();
    if covered.is_empty() {
        return Err(EvalError::NothingCovered);
    }

    let max_k = *ks.iter().max().expect("ks is nonempty");
    if max_k > candidates.len() {
        return Err(EvalError::Similarity(SimilarityError::KTooLarge {
            k: max_k,
            available: candidates.len(),
        }));
    }
    let depth = RANK_SEARCH_DEPTH.max(max_k).min(candidates.len());

    let mapped = queries.vectors().mul_bt(map);
    let query_rows: Vec<usize> = covered.iter().map(|entry| entry.0).collect();
    let retrieved: Vec<Vec<(usize, f64)>> = match metric {
        SimilarityMetric::InnerProduct => {
            let subset = mapped.gather_rows(&query_rows);
            knn_inner_product(&subset, candidates.vectors(), depth)?
        }
        SimilarityMetric::Csls { neighborhood } => {
            let cache = build_neighborhood_cache(&mapped, candidates.vectors(), *neighborhood)?;
            csls_topk_rows(&mapped, &query_rows, candidates.vectors(), &cache, depth)?
        }
    };

    let mut ranks: Vec<Option<usize>> = Vec::with_capacity(covered.len());
    for (entry, list) in covered.iter().zip(&retrieved) {
        let rank = list
            .iter()
            .position(|&(ci, _)| entry.2.contains(&ci))
            .map(|pos| pos + 1);
        ranks.push(rank);
    }

    let denom = covered.len() as f64;
    let precision_at: Vec<(usize, f64)> = ks
        .iter()
        .map(|&k| {
            let hits = ranks.iter().filter(|r| matches!(r, Some(rank) if *rank <= k)).count();
            (k, 100.0 * hits as f64 / denom)
        })
        .collect();

    let mut errors = Vec::new();
    for ((entry, list), rank) in covered.iter().zip(&retrieved).zip(&ranks) {
        if *rank == Some(1) {
            continue;
        }
        errors.push(ErrorRecord {
            source_token: entry.1.to_string(),
            predicted: candidates.token(list[0].0).to_string(),
            acceptable: entry.3.clone(),
            truth_rank: *rank,
        });
    }

    Ok(EvalReport {
        total_entries,
        covered: covered.len(),
        coverage: 100.0 * covered.len() as f64 / total_entries as f64,
        precision_at,
        errors,
    })
}

/// The first `limit` error records: covered entries the map got wrong,
/// most frequent source words first.
pub fn error_analysis(report: &EvalReport, limit: usize) -> &[ErrorRecord] {
    &report.errors[..limit.min(report.errors.len())]
}

/// One space to export, with the map that carries it into the shared space
/// (`None` exports the original coordinates twice).
pub struct ExportSpec<'a> {
    pub space: &'a EmbeddingSpace,
    pub map: Option<&'a Matrix>,
}

fn csv_escape(token: &str) -> String {
    if token.contains(',') || token.contains('"') {
        format!("\"{}\"", token.replace('"', "\"\""))
    } else {
        token.to_string()
    }
}

/// Writes up to `limit` rows per space as CSV: token, language id, original
/// coordinates, mapped coordinates. Returns the number of data rows written.
pub fn export_vectors(specs: &[ExportSpec], limit: usize, path: &Path) -> Result<usize, EvalError> {
    let Some(first) = specs.first() else {
        return Err(EvalError::EmptyDictionary);
    };
    let dim = first.space.dim();
    for spec in specs {
        if spec.space.dim() != dim {
            return Err(EvalError::SpaceDimMismatch { left: dim, right: spec.space.dim() });
        }
        if let Some(map) = spec.map {
            if map.rows() != dim || map.cols() != dim {
                return Err(EvalError::MapShapeMismatch { rows: map.rows(), cols: map.cols(), dim });
            }
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "token,lang")?;
    for i in 0..dim {
        write!(out, ",o{i}")?;
    }
    for i in 0..dim {
        write!(out, ",m{i}")?;
    }
    writeln!(out)?;
    let mut written = 0usize;
    for spec in specs {
        let rows = limit.min(spec.space.len());
        let mapped = spec.map.map(|m| {
            let idx: Vec<usize> = (0..rows).collect();
            spec.space.vectors().gather_rows(&idx).mul_bt(m)
        });
        for i in 0..rows {
            write!(out, "{},{}", csv_escape(spec.space.token(i)), csv_escape(spec.space.lang_id()))?;
            for v in spec.space.vectors().row(i) {
                write!(out, ",{v:.16e}")?;
            }
            let mrow: &[f64] = match &mapped {
                Some(m) => m.row(i),
                None => spec.space.vectors().row(i),
            };
            for v in mrow {
                write!(out, ",{v:.16e}")?;
            }
            writeln!(out)?;
            written += 1;
        }
    }
    out.flush()?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::generate_synthetic_pair;
    use crate::numerics::random_orthogonal;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn dictionary_loads_multi_translations() {
        let f = write_temp("chat cat\nchat kitty\ndog dog\n");
        let dict = load_dictionary(f.path()).unwrap();
        assert_eq!(dict.len(), 2);
        assert_eq!(dict.pair_count(), 3);
        let chat = dict.translations("chat").unwrap();
        assert!(chat.contains("cat") && chat.contains("kitty"));
    }

    #[test]
    fn dictionary_load_failures() {
        let empty = write_temp("");
        assert!(matches!(load_dictionary(empty.path()), Err(EvalError::EmptyDictionary)));
        let malformed = write_temp("chat cat\nlonely\n");
        assert!(matches!(
            load_dictionary(malformed.path()),
            Err(EvalError::MalformedLine { line_no: 2, .. })
        ));
        let too_many = write_temp("a b c\n");
        assert!(matches!(load_dictionary(too_many.path()), Err(EvalError::MalformedLine { .. })));
    }

    #[test]
    fn large_dictionary_fixture_counts() {
        let mut content = String::new();
        for i in 0..500 {
            for j in 0..3 {
                content.push_str(&format!("s{i:04} t{i:04}_{j}\n"));
            }
        }
        let f = write_temp(&content);
        let dict = load_dictionary(f.path()).unwrap();
        assert_eq!(dict.len(), 500);
        assert_eq!(dict.pair_count(), 1500);
    }

    #[test]
    fn duplicate_pairs_and_line_order_do_not_change_the_report() {
        let pair = generate_synthetic_pair(3, 60, 6, 0.1, true, true).unwrap();
        let base = precision_at_k(
            &pair.rotation,
            &pair.source,
            &pair.target,
            &pair.dictionary,
            &SimilarityMetric::InnerProduct,
            &[1, 5],
            Direction::Forward,
        )
        .unwrap();
        let mut pairs: Vec<(String, String)> = pair
            .dictionary
            .entries()
            .flat_map(|(s, ts)| ts.iter().map(move |t| (s.to_string(), t.clone())))
            .collect();
        pairs.reverse();
        let mut doubled = pairs.clone();
        doubled.extend(pairs.clone());
        let shuffled_dict = TranslationDictionary::from_pairs(doubled);
        let again = precision_at_k(
            &pair.rotation,
            &pair.source,
            &pair.target,
            &shuffled_dict,
            &SimilarityMetric::InnerProduct,
            &[1, 5],
            Direction::Forward,
        )
        .unwrap();
        assert_eq!(base, again);
    }

    #[test]
    fn ground_truth_rotation_scores_perfectly() {
        let pair = generate_synthetic_pair(41, 100, 8, 0.0, true, true).unwrap();
        let report = precision_at_k(
            &pair.rotation,
            &pair.source,
            &pair.target,
            &pair.dictionary,
            &SimilarityMetric::default(),
            &[1, 5, 10],
            Direction::Forward,
        )
        .unwrap();
        assert_eq!(report.coverage, 100.0);
        for &(_, p) in &report.precision_at {
            assert_eq!(p, 100.0);
        }
        assert!(report.errors.is_empty());
        assert!(error_analysis(&report, 10).is_empty());

        let inverse_report = precision_at_k(
            &pair.rotation.transpose(),
            &pair.source,
            &pair.target,
            &pair.dictionary,
            &SimilarityMetric::default(),
            &[1],
            Direction::Inverse,
        )
        .unwrap();
        assert_eq!(inverse_report.precision(1), Some(100.0));
    }

    #[test]
    fn random_rotation_scores_near_zero() {
        let pair = generate_synthetic_pair(43, 2000, 16, 0.01, true, true).unwrap();
        let stray = random_orthogonal(16, 999);
        let report = precision_at_k(
            &stray,
            &pair.source,
            &pair.target,
            &pair.dictionary,
            &SimilarityMetric::InnerProduct,
            &[1],
            Direction::Forward,
        )
        .unwrap();
        assert!(report.precision(1).unwrap() <= 1.0);
    }

    #[test]
    fn precision_is_monotone_in_k() {
        let pair = generate_synthetic_pair(47, 300, 8, 0.3, true, true).unwrap();
        let report = precision_at_k(
            &pair.rotation,
            &pair.source,
            &pair.target,
            &pair.dictionary,
            &SimilarityMetric::default(),
            &[1, 5, 10],
            Direction::Forward,
        )
        .unwrap();
        let ps: Vec<f64> = report.precision_at.iter().map(|&(_, p)| p).collect();
        assert!(ps[0] <= ps[1] && ps[1] <= ps[2]);
    }

    #[test]
    fn report_matches_a_bruteforce_rescoring() {
        let pair = generate_synthetic_pair(53, 150, 6, 0.2, true, true).unwrap();
        let report = precision_at_k(
            &pair.rotation,
            &pair.source,
            &pair.target,
            &pair.dictionary,
            &SimilarityMetric::InnerProduct,
            &[1, 5],
            Direction::Forward,
        )
        .unwrap();
        // Independent rescoring with naive loops.
        let mapped = pair.source.vectors().mul_bt(&pair.rotation);
        let mut hits1 = 0usize;
        let mut hits5 = 0usize;
        let mut covered = 0usize;
        for (s, ts) in pair.dictionary.entries() {
            let qi = pair.source.index_of(s).unwrap();
            let accept: Vec<usize> =
                ts.iter().filter_map(|t| pair.target.index_of(t)).collect();
            if accept.is_empty() {
                continue;
            }
            covered += 1;
            let mut scored: Vec<(usize, f64)> = (0..pair.target.len())
                .map(|j| {
                    let mut dot = 0.0;
                    for c in 0..pair.target.dim() {
                        dot += mapped.get(qi, c) * pair.target.vectors().get(j, c);
                    }
                    (j, dot)
                })
                .collect();
            scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            if let Some(pos) = scored.iter().position(|&(j, _)| accept.contains(&j)) {
                if pos < 1 {
                    hits1 += 1;
                }
                if pos < 5 {
                    hits5 += 1;
                }
            }
        }
        assert_eq!(report.covered, covered);
        assert_eq!(report.precision(1).unwrap(), 100.0 * hits1 as f64 / covered as f64);
        assert_eq!(report.precision(5).unwrap(), 100.0 * hits5 as f64 / covered as f64);
    }

    #[test]
    fn out_of_vocabulary_entries_lower_coverage_not_precision() {
        let pair = generate_synthetic_pair(59, 40, 4, 0.0, false, true).unwrap();
        let mut pairs: Vec<(String, String)> = pair
            .dictionary
            .entries()
            .flat_map(|(s, ts)| ts.iter().map(move |t| (s.to_string(), t.clone())))
            .collect();
        pairs.push(("unseen_source".into(), pair.target.token(0).into()));
        pairs.push((pair.source.token(0).into(), "unseen_target".into()));
        let dict = TranslationDictionary::from_pairs(pairs);
        let report = precision_at_k(
            &pair.rotation,
            &pair.source,
            &pair.target,
            &dict,
            &SimilarityMetric::InnerProduct,
            &[1],
            Direction::Forward,
        )
        .unwrap();
        assert_eq!(report.total_entries, 41);
        assert_eq!(report.covered, 40);
        assert!((report.coverage - 100.0 * 40.0 / 41.0).abs() < 1e-12);
        assert_eq!(report.precision(1), Some(100.0));
    }

    #[test]
    fn error_records_carry_the_truth_rank() {
        let queries = EmbeddingSpace::new(
            "q",
            vec!["w".into()],
            Matrix::from_vec(1, 2, vec![1.0, 0.0]),
            false,
        )
        .unwrap();
        let candidates = EmbeddingSpace::new(
            "c",
            vec!["wrong".into(), "right".into()],
            Matrix::from_vec(2, 2, vec![0.9, 0.0, 0.8, 0.0]),
            false,
        )
        .unwrap();
        let dict = TranslationDictionary::from_pairs(vec![("w".to_string(), "right".to_string())]);
        let report = precision_at_k(
            &Matrix::identity(2),
            &queries,
            &candidates,
            &dict,
            &SimilarityMetric::InnerProduct,
            &[1],
            Direction::Forward,
        )
        .unwrap();
        assert_eq!(report.precision(1), Some(0.0));
        assert_eq!(report.errors.len(), 1);
        let record = &report.errors[0];
        assert_eq!(record.source_token, "w");
        assert_eq!(record.predicted, "wrong");
        assert_eq!(record.acceptable, vec!["right".to_string()]);
        assert_eq!(record.truth_rank, Some(2));
    }

    #[test]
    fn nothing_covered_is_an_error() {
        let pair = generate_synthetic_pair(61, 10, 3, 0.0, false, false).unwrap();
        let dict = TranslationDictionary::from_pairs(vec![("xx".to_string(), "yy".to_string())]);
        assert!(matches!(
            precision_at_k(
                &pair.rotation,
                &pair.source,
                &pair.target,
                &dict,
                &SimilarityMetric::InnerProduct,
                &[1],
                Direction::Forward,
            ),
            Err(EvalError::NothingCovered)
        ));
    }

    #[test]
    fn export_writes_original_and_mapped_blocks() {
        let pair = generate_synthetic_pair(67, 12, 3, 0.0, false, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.csv");
        let written = export_vectors(
            &[
                ExportSpec { space: &pair.source, map: Some(&pair.rotation) },
                ExportSpec { space: &pair.target, map: None },
            ],
            5,
            &path,
        )
        .unwrap();
        assert_eq!(written, 10);
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert_eq!(header, "token,lang,o0,o1,o2,m0,m1,m2");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[0], pair.source.token(0));
        assert_eq!(first[1], "synth-source");
        let orig: Vec<f64> = first[2..5].iter().map(|v| v.parse().unwrap()).collect();
        let mapped: Vec<f64> = first[5..8].iter().map(|v| v.parse().unwrap()).collect();
        assert_eq!(orig, pair.source.vectors().row(0));
        let expected = pair.source.vectors().mul_bt(&pair.rotation);
        assert_eq!(mapped, expected.row(0));
        // Rows from the unmapped space repeat their original coordinates.
        let target_line: Vec<&str> = text.lines().nth(6).unwrap().split(',').collect();
        assert_eq!(target_line[2..5], target_line[5..8]);
    }

    #[test]
    fn identity_map_exports_identical_blocks() {
        let pair = generate_synthetic_pair(71, 4, 2, 0.0, false, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        let eye = Matrix::identity(2);
        export_vectors(&[ExportSpec { space: &pair.source, map: Some(&eye) }], 2, &path).unwrap();
        for line in std::fs::read_to_string(&path).unwrap().lines().skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells[2..4], cells[4..6]);
        }
    }
}
