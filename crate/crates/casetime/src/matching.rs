//! Pairwise event distances and the recursive best-match alignment.
//!
//! Given two event lists from the same report, a distance matrix is built
//! with either unit-cost Levenshtein distance or cosine distance over an
//! embedding backend. Matching assumes the lists describe the same
//! underlying events (1-to-1 correspondence) and resolves collisions
//! greedily: every remaining row claims its nearest column within the
//! threshold, each contested column keeps only the lowest-distance claim,
//! accepted rows and columns are removed, and the procedure recurses until
//! no claims remain.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

use crate::embed::{cosine_distance, EmbedError, Embedder};
use crate::timeline::EventRecord;
use crate::util::atomic_write;

/// Unit-cost edit distance (insertions, deletions, substitutions) over
/// Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr: Vec<usize> = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(ca != cb);
            curr[j + 1] = substitution.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// Raw edit counts; thresholds are length-dependent.
    Levenshtein,
    /// Cosine distance in an embedding space, in `[0, 2]`.
    CosineEmbedding,
}

impl std::fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DistanceMetric::Levenshtein => f.write_str("levenshtein"),
            DistanceMetric::CosineEmbedding => f.write_str("cosine_embedding"),
        }
    }
}

/// Dense rows-by-cols distance matrix between two event lists.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub rows: usize,
    pub cols: usize,
    values: Vec<f64>,
    pub metric: DistanceMetric,
}

impl DistanceMatrix {
    /// Build from row-major values; panics if dimensions disagree.
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>, metric: DistanceMetric) -> Self {
        assert_eq!(values.len(), rows * cols, "matrix dimensions disagree");
        debug_assert!(values.iter().all(|v| *v >= 0.0));
        DistanceMatrix {
            rows,
            cols,
            values,
            metric,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("cannot build a distance matrix from an empty event list")]
    EmptyEventList,
    #[error("cosine metric requires an embedding backend")]
    MissingBackend,
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Distances between every pair of event texts. Each unique text is
/// embedded (or compared) once; duplicate texts share results.
pub fn build_distance_matrix(
    side_a: &[EventRecord],
    side_b: &[EventRecord],
    metric: DistanceMetric,
    embedder: Option<&dyn Embedder>,
) -> Result<DistanceMatrix, MatchError> {
    if side_a.is_empty() || side_b.is_empty() {
        return Err(MatchError::EmptyEventList);
    }
    let values = match metric {
        DistanceMetric::Levenshtein => {
            let mut cache: HashMap<(&str, &str), f64> = HashMap::new();
            let mut values = Vec::with_capacity(side_a.len() * side_b.len());
            for a in side_a {
                for b in side_b {
                    let d = *cache
                        .entry((a.text.as_str(), b.text.as_str()))
                        .or_insert_with(|| levenshtein(&a.text, &b.text) as f64);
                    values.push(d);
                }
            }
            values
        }
        DistanceMetric::CosineEmbedding => {
            let embedder = embedder.ok_or(MatchError::MissingBackend)?;
            let mut unique: Vec<&str> = Vec::new();
            let mut index: HashMap<&str, usize> = HashMap::new();
            for event in side_a.iter().chain(side_b) {
                if !index.contains_key(event.text.as_str()) {
                    index.insert(&event.text, unique.len());
                    unique.push(&event.text);
                }
            }
            let vectors = embedder.embed(&unique)?;
            let mut values = Vec::with_capacity(side_a.len() * side_b.len());
            for a in side_a {
                for b in side_b {
                    let d = cosine_distance(&vectors[index[a.text.as_str()]], &vectors[index[b.text.as_str()]])?;
                    values.push(d);
                }
            }
            values
        }
    };
    Ok(DistanceMatrix::from_values(
        side_a.len(),
        side_b.len(),
        values,
        metric,
    ))
}

/// One accepted alignment pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: f64,
}

/// Injective 1-to-1 alignment under a threshold. `pairs` plus `unmatched_a`
/// cover every row index exactly once; likewise columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub pairs: Vec<MatchPair>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
    pub threshold: f64,
}

impl MatchSet {
    /// Consistency check used by tests and audits: injectivity on both
    /// sides, exact index coverage, and every pair within the threshold.
    pub fn verify_invariants(&self, rows: usize, cols: usize) -> Result<(), String> {
        let mut seen_a = vec![false; rows];
        let mut seen_b = vec![false; cols];
        for pair in &self.pairs {
            if pair.index_a >= rows || pair.index_b >= cols {
                return Err(format!("pair ({}, {}) out of bounds", pair.index_a, pair.index_b));
            }
            if std::mem::replace(&mut seen_a[pair.index_a], true) {
                return Err(format!("row {} matched twice", pair.index_a));
            }
            if std::mem::replace(&mut seen_b[pair.index_b], true) {
                return Err(format!("column {} matched twice", pair.index_b));
            }
            if pair.distance > self.threshold {
                return Err(format!(
                    "pair ({}, {}) distance {} exceeds threshold {}",
                    pair.index_a, pair.index_b, pair.distance, self.threshold
                ));
            }
        }
        for &i in &self.unmatched_a {
            if i >= rows || std::mem::replace(&mut seen_a[i], true) {
                return Err(format!("row {i} not covered exactly once"));
            }
        }
        for &j in &self.unmatched_b {
            if j >= cols || std::mem::replace(&mut seen_b[j], true) {
                return Err(format!("column {j} not covered exactly once"));
            }
        }
        if !seen_a.iter().all(|s| *s) || !seen_b.iter().all(|s| *s) {
            return Err("some index is neither matched nor unmatched".into());
        }
        Ok(())
    }
}

/// One claim observed during matching; `accepted` claims became pairs at
/// recursion depth `round` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchTraceRow {
    pub round: usize,
    pub index_a: usize,
    pub index_b: usize,
    pub distance: f64,
    pub accepted: bool,
}

/// Greedy recursive 1-to-1 alignment; see the module docs for the
/// procedure. Requires `threshold >= 0`. Ties (equal distances) resolve to
/// the lowest `(index_a, index_b)` so results are deterministic.
pub fn recursive_best_match(matrix: &DistanceMatrix, threshold: f64) -> MatchSet {
    recursive_best_match_traced(matrix, threshold).0
}

/// As [`recursive_best_match`], also returning every claim made in every
/// round for audit.
pub fn recursive_best_match_traced(
    matrix: &DistanceMatrix,
    threshold: f64,
) -> (MatchSet, Vec<MatchTraceRow>) {
    debug_assert!(threshold >= 0.0, "threshold must be nonnegative");
    let mut row_active = vec![true; matrix.rows];
    let mut col_active = vec![true; matrix.cols];
    let mut pairs: Vec<MatchPair> = Vec::new();
    let mut trace: Vec<MatchTraceRow> = Vec::new();

    for round in 1.. {
        // Every active row claims its nearest claimable column.
        let mut claims: Vec<(usize, usize, f64)> = Vec::new();
        for row in (0..matrix.rows).filter(|r| row_active[*r]) {
            let mut best: Option<(usize, f64)> = None;
            for col in (0..matrix.cols).filter(|c| col_active[*c]) {
                let d = matrix.get(row, col);
                if d <= threshold && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((col, d));
                }
            }
            if let Some((col, d)) = best {
                claims.push((row, col, d));
            }
        }
        if claims.is_empty() {
            break;
        }
        // Contested columns keep the lowest-distance claim; claims are in
        // ascending row order, so keeping the first on ties gives the
        // lexicographically lowest pair.
        let mut winners: HashMap<usize, (usize, f64)> = HashMap::new();
        for &(row, col, d) in &claims {
            match winners.get(&col) {
                Some(&(_, wd)) if wd <= d => {}
                _ => {
                    winners.insert(col, (row, d));
                }
            }
        }
        for &(row, col, d) in &claims {
            let accepted = winners[&col].0 == row;
            trace.push(MatchTraceRow {
                round,
                index_a: row,
                index_b: col,
                distance: d,
                accepted,
            });
            if accepted {
                pairs.push(MatchPair {
                    index_a: row,
                    index_b: col,
                    distance: d,
                });
                row_active[row] = false;
                col_active[col] = false;
            }
        }
    }

    pairs.sort_by_key(|p| p.index_a);
    let unmatched_a = (0..matrix.rows).filter(|r| row_active[*r]).collect();
    let unmatched_b = (0..matrix.cols).filter(|c| col_active[*c]).collect();
    (
        MatchSet {
            pairs,
            unmatched_a,
            unmatched_b,
            threshold,
        },
        trace,
    )
}

/// Inclusive distance range for candidate review; `lo > hi` is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceWindow {
    pub lo: f64,
    pub hi: f64,
}

impl DistanceWindow {
    pub fn contains(&self, d: f64) -> bool {
        d >= self.lo && d <= self.hi
    }
}

/// A row's best match with its distance, for threshold-calibration review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchCandidate {
    pub index_a: usize,
    pub index_b: usize,
    pub text_a: String,
    pub text_b: String,
    pub distance: f64,
}

/// For each event in `side_a`, its nearest `side_b` event; kept when the
/// distance falls inside `window`, returned ascending by distance. This is
/// the review table used to pick a match threshold by hand.
pub fn export_match_candidates(
    side_a: &[EventRecord],
    side_b: &[EventRecord],
    matrix: &DistanceMatrix,
    window: DistanceWindow,
) -> Vec<MatchCandidate> {
    debug_assert_eq!(matrix.rows, side_a.len());
    debug_assert_eq!(matrix.cols, side_b.len());
    let mut out = Vec::new();
    for (i, a) in side_a.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..matrix.cols {
            let d = matrix.get(i, j);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, d)) = best {
            if window.contains(d) {
                out.push(MatchCandidate {
                    index_a: i,
                    index_b: j,
                    text_a: a.text.clone(),
                    text_b: side_b[j].text.clone(),
                    distance: d,
                });
            }
        }
    }
    out.sort_by(|x, y| {
        x.distance
            .partial_cmp(&y.distance)
            .unwrap()
            .then(x.index_a.cmp(&y.index_a))
            .then(x.index_b.cmp(&y.index_b))
    });
    out
}

/// One audit row: a claim with its texts, ready for the flat export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub report_id: String,
    pub text_a: String,
    pub text_b: String,
    pub distance: f64,
    pub accepted: bool,
    pub recursion_depth: usize,
}

/// Pair trace rows with their event texts.
pub fn audit_rows(
    report_id: &str,
    side_a: &[EventRecord],
    side_b: &[EventRecord],
    trace: &[MatchTraceRow],
) -> Vec<AuditRow> {
    trace
        .iter()
        .map(|t| AuditRow {
            report_id: report_id.to_string(),
            text_a: side_a[t.index_a].text.clone(),
            text_b: side_b[t.index_b].text.clone(),
            distance: t.distance,
            accepted: t.accepted,
            recursion_depth: t.round,
        })
        .collect()
}

/// Write audit rows as a tab-separated table.
pub fn write_match_audit(rows: &[AuditRow], path: &Path) -> std::io::Result<()> {
    let mut out = String::from("report_id\ttext_a\ttext_b\tdistance\taccepted\trecursion_depth\n");
    for row in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            row.report_id,
            sanitize_tsv(&row.text_a),
            sanitize_tsv(&row.text_b),
            row.distance,
            u8::from(row.accepted),
            row.recursion_depth
        ));
    }
    atomic_write(path, out.as_bytes())
}

/// Write candidate rows as a tab-separated table, one per report-side pair.
pub fn write_match_candidates(
    rows: &[(String, MatchCandidate)],
    path: &Path,
) -> std::io::Result<()> {
    let mut out = String::from("report_id\ttext_a\ttext_b\tdistance\n");
    for (report_id, c) in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            report_id,
            sanitize_tsv(&c.text_a),
            sanitize_tsv(&c.text_b),
            c.distance
        ));
    }
    atomic_write(path, out.as_bytes())
}

/// Event text may contain tabs or newlines; flatten them so the table stays
/// one row per record.
fn sanitize_tsv(text: &str) -> String {
    text.replace(['\t', '\n', '\r'], " ")
}
