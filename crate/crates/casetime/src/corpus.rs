//! Corpus ingestion for PMOA-style flat-text article dumps.
//!
//! Articles are plain UTF-8 files in which the narrative body sits between
//! two structural separator lines: a line reading `==== BODY` and a later
//! line starting with `==== Refs`. This module slices out the body, applies
//! the case-report eligibility test (trigger phrases for a case report plus
//! a patient-age phrase), scans whole directory trees, and draws seeded,
//! reproducible samples of report ids.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::util::atomic_write;

/// Full trimmed line that opens the article body.
pub const BODY_MARKER: &str = "==== BODY";
/// Line prefix that closes the article body.
pub const REFS_MARKER_PREFIX: &str = "==== Refs";

/// Name of the sampling PRNG, recorded in run metadata so published samples
/// can be re-drawn on any machine.
pub const SAMPLE_PRNG: &str = "chacha20/partial-fisher-yates";

/// One eligible article: its id and extracted body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    /// File stem of the source article, e.g. `PMC4300884`.
    pub id: String,
    /// Body text between the structural markers (marker lines excluded).
    pub body: String,
    /// Path the article was read from.
    pub source_path: String,
    /// Length of `body` in Unicode scalar values.
    pub body_char_count: usize,
}

impl CaseReport {
    pub fn new(id: impl Into<String>, body: impl Into<String>, source_path: impl Into<String>) -> Self {
        let body = body.into();
        let body_char_count = body.chars().count();
        CaseReport {
            id: id.into(),
            body,
            source_path: source_path.into(),
            body_char_count,
        }
    }
}

/// Body extraction result. `refs_marker_missing` is a soft diagnostic: the
/// file was sliced to end-of-input because no `==== Refs` line was found.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedBody {
    pub text: String,
    pub refs_marker_missing: bool,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no `==== BODY` marker line in article")]
    MissingBodyMarker,
    #[error("corpus root {0} does not exist or is not a directory")]
    InvalidRoot(PathBuf),
    #[error("sample of {requested} requested but only {available} ids available")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed manifest row: {detail}")]
    MalformedManifest {
        path: String,
        line: usize,
        detail: String,
    },
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Extract the article body: the text strictly between the first line that
/// trims to [`BODY_MARKER`] and the first subsequent line starting with
/// [`REFS_MARKER_PREFIX`].
///
/// Marker lines are structural and never part of the body; a duplicate
/// `==== BODY` line inside the region is dropped as well. Trailing blank
/// lines are removed and a non-empty body is newline-terminated.
pub fn parse_article_body(raw: &str) -> Result<ParsedBody, CorpusError> {
    let mut offset = 0usize;
    let mut body_start: Option<usize> = None;
    let mut region_end = raw.len();
    let mut refs_marker_missing = true;

    for line in raw.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        let content = line.strip_suffix('\n').unwrap_or(line);
        match body_start {
            None => {
                if content.trim_end() == BODY_MARKER {
                    body_start = Some(offset);
                }
            }
            Some(_) => {
                if content.starts_with(REFS_MARKER_PREFIX) {
                    region_end = line_start;
                    refs_marker_missing = false;
                    break;
                }
            }
        }
    }

    let start = body_start.ok_or(CorpusError::MissingBodyMarker)?;
    let region = &raw[start..region_end];

    // Drop stray duplicate marker lines so the body never contains one.
    let mut text: String;
    if region.lines().any(|l| l.trim_end() == BODY_MARKER) {
        text = region
            .lines()
            .filter(|l| l.trim_end() != BODY_MARKER)
            .collect::<Vec<_>>()
            .join("\n");
    } else {
        text = region.to_string();
    }
    text.truncate(text.trim_end().len());
    if !text.is_empty() {
        text.push('\n');
    }
    Ok(ParsedBody {
        text,
        refs_marker_missing,
    })
}

/// Eligibility phrases for the case-report filter. All matching is done on
/// the lowercased body; a body qualifies when it contains at least one
/// phrase from each group.
#[derive(Debug, Clone)]
pub struct CaseReportFilter {
    pub report_phrases: Vec<String>,
    pub age_phrases: Vec<String>,
}

impl Default for CaseReportFilter {
    fn default() -> Self {
        CaseReportFilter {
            report_phrases: vec!["case report".into(), "case presentation".into()],
            age_phrases: vec!["year-old".into(), "year old".into()],
        }
    }
}

impl CaseReportFilter {
    pub fn matches(&self, body: &str) -> bool {
        let lower = body.to_lowercase();
        self.report_phrases.iter().any(|p| lower.contains(p.as_str()))
            && self.age_phrases.iter().any(|p| lower.contains(p.as_str()))
    }
}

/// Case-report predicate with the standard phrase set: the body must mention
/// "case report" or "case presentation" and "year-old" or "year old",
/// ignoring capitalization.
pub fn is_case_report(body: &str) -> bool {
    CaseReportFilter::default().matches(body)
}

/// Why a scanned file produced no report. Diagnostics are warnings, not
/// errors; the scan keeps going.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanDiagnosticKind {
    Io,
    MissingBodyMarker,
    MissingRefsMarker,
    DuplicateId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanDiagnostic {
    pub path: String,
    pub kind: ScanDiagnosticKind,
    pub detail: String,
}

/// Result of a corpus scan: eligible reports sorted by id, plus one
/// diagnostic per file-level problem encountered along the way.
#[derive(Debug, Default)]
pub struct ScanOutcome {
    pub reports: Vec<CaseReport>,
    pub diagnostics: Vec<ScanDiagnostic>,
}

/// Scan every file under `root`, keeping those whose extracted body passes
/// `filter`. Unreadable or marker-less files become diagnostics. The result
/// is sorted by id; duplicate ids keep the lexicographically first path.
pub fn scan_corpus(root: &Path, filter: &CaseReportFilter) -> Result<ScanOutcome, CorpusError> {
    if !root.is_dir() {
        return Err(CorpusError::InvalidRoot(root.to_path_buf()));
    }
    let mut files = Vec::new();
    collect_files(root, &mut files)?;
    files.sort();

    let mut outcome = ScanOutcome::default();
    for path in files {
        let raw = match fs::read_to_string(&path) {
            Ok(raw) => raw,
            Err(e) => {
                outcome.diagnostics.push(ScanDiagnostic {
                    path: path.display().to_string(),
                    kind: ScanDiagnosticKind::Io,
                    detail: e.to_string(),
                });
                continue;
            }
        };
        let parsed = match parse_article_body(&raw) {
            Ok(parsed) => parsed,
            Err(CorpusError::MissingBodyMarker) => {
                outcome.diagnostics.push(ScanDiagnostic {
                    path: path.display().to_string(),
                    kind: ScanDiagnosticKind::MissingBodyMarker,
                    detail: "no `==== BODY` line".into(),
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        if parsed.refs_marker_missing {
            outcome.diagnostics.push(ScanDiagnostic {
                path: path.display().to_string(),
                kind: ScanDiagnosticKind::MissingRefsMarker,
                detail: "no `==== Refs` line; body runs to end of file".into(),
            });
        }
        if !filter.matches(&parsed.text) {
            continue;
        }
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if id.is_empty() {
            continue;
        }
        outcome
            .reports
            .push(CaseReport::new(id, parsed.text, path.display().to_string()));
    }

    outcome.reports.sort_by(|a, b| a.id.cmp(&b.id).then(a.source_path.cmp(&b.source_path)));
    let mut seen = std::collections::HashSet::new();
    let mut dupes = Vec::new();
    outcome.reports.retain(|r| {
        if seen.insert(r.id.clone()) {
            true
        } else {
            dupes.push(ScanDiagnostic {
                path: r.source_path.clone(),
                kind: ScanDiagnosticKind::DuplicateId,
                detail: format!("id {} already seen; keeping first path", r.id),
            });
            false
        }
    });
    outcome.diagnostics.extend(dupes);
    Ok(outcome)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CorpusError> {
    let entries = fs::read_dir(dir).map_err(|e| CorpusError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| CorpusError::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Draw `n` ids uniformly without replacement.
///
/// The draw is a partial Fisher–Yates shuffle over a ChaCha20 stream keyed by
/// `seed`, with bounded indices taken by rejection sampling on `next_u64`, so
/// identical `(ids, n, seed)` yield identical output on every platform and
/// toolchain. Output is in draw order.
pub fn sample_reports(ids: &[String], n: usize, seed: u64) -> Result<Vec<String>, CorpusError> {
    use rand_chacha::rand_core::SeedableRng;
    if n > ids.len() {
        return Err(CorpusError::SampleTooLarge {
            requested: n,
            available: ids.len(),
        });
    }
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let mut pool: Vec<String> = ids.to_vec();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let remaining = (pool.len() - i) as u64;
        let j = i + uniform_index(&mut rng, remaining) as usize;
        pool.swap(i, j);
        out.push(pool[i].clone());
    }
    Ok(out)
}

/// Unbiased integer in `[0, bound)` from full 64-bit words (arc4random-style
/// rejection of the biased low range).
fn uniform_index(rng: &mut impl rand_chacha::rand_core::RngCore, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    if bound == 1 {
        return 0;
    }
    let min = bound.wrapping_neg() % bound; // 2^64 mod bound
    loop {
        let r = rng.next_u64();
        if r >= min {
            return r % bound;
        }
    }
}

/// One manifest row; see [`write_manifest`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub source_path: String,
    pub body_char_count: usize,
}

const MANIFEST_HEADER: &str = "id\tsource_path\tbody_char_count";

/// Write the scan manifest: one tab-separated record per eligible report
/// (`id`, `source_path`, `body_char_count`) under a header row.
pub fn write_manifest(reports: &[CaseReport], path: &Path) -> Result<(), CorpusError> {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!("{}\t{}\t{}\n", r.id, r.source_path, r.body_char_count));
    }
    atomic_write(path, out.as_bytes()).map_err(|e| CorpusError::io(path, e))
}

/// Read a manifest produced by [`write_manifest`] (or by hand, same layout).
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, CorpusError> {
    let raw = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        if idx == 0 {
            if line.trim_end() != MANIFEST_HEADER {
                return Err(CorpusError::MalformedManifest {
                    path: path.display().to_string(),
                    line: 1,
                    detail: format!("expected header `{MANIFEST_HEADER}`"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (id, source_path, count) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(id), Some(sp), Some(c), None) => (id, sp, c),
            _ => {
                return Err(CorpusError::MalformedManifest {
                    path: path.display().to_string(),
                    line: idx + 1,
                    detail: "expected exactly 3 tab-separated fields".into(),
                })
            }
        };
        let body_char_count = count.trim().parse::<usize>().map_err(|_| CorpusError::MalformedManifest {
            path: path.display().to_string(),
            line: idx + 1,
            detail: format!("body_char_count `{count}` is not an integer"),
        })?;
        rows.push(ManifestEntry {
            id: id.to_string(),
            source_path: source_path.to_string(),
            body_char_count,
        });
    }
    Ok(rows)
}
