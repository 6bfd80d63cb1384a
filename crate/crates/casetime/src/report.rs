//! Per-report evaluation, corpus aggregation and machine-readable exports.
//!
//! [`evaluate_pair`] compares two timelines of the same report: build the
//! distance matrix, align with recursive best match, then score concordance
//! (both tie conventions), absolute time errors, and subgroup breakdowns.
//! [`aggregate`] pools a set of per-report results per annotator pair.
//! Everything is emitted either as one self-describing JSON document or as
//! flat tab-separated tables ready for plotting.
//!
//! # JSON schema (version 1)
//!
//! [`EvalReport`], one document per report pair:
//! - `schema_version`: integer, currently 1.
//! - `report_id`, `side_a`, `side_b`: the report and the two annotator tags.
//! - `mode`: `reference_vs_candidate` or `inter_llm`.
//! - `n_events_a`, `n_events_b`, `n_matched`: event and matched-pair counts.
//! - `match_rate`: `n_matched / n_events_a` (side A is the denominator).
//! - `concordance_harrell`, `concordance_lenient`: ordering agreement with
//!   0.5 and 1.0 tie credit; null when no comparable pairs exist.
//! - `error_summary`: absolute-error statistics ([`ErrorSummary`]): count,
//!   mean, median, and count/fraction at exact agreement, within 24 h, over
//!   168 h, over 8760 h; null when nothing matched.
//! - `subgroup_summaries`: per reference-time bucket
//!   ([`SubgroupSummary`]): count and error statistics.
//! - `threshold`, `metric`, `embedder_tag`, `prompt_digest`,
//!   `config_digest`: full provenance of the run.
//! - `flags`: e.g. `no_matches`, `no_comparable_pairs`.
//!
//! [`CorpusSummary`]: `schema_version`, one [`PairSummary`] per annotator
//! pair (pooled counts, pooled match rate, mean concordances, pooled error
//! fractions, pooled subgroups), and the shared `provenance` block.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

use crate::embed::Embedder;
use crate::matching::{build_distance_matrix, recursive_best_match, DistanceMetric, MatchError};
use crate::metrics::{
    absolute_errors, concordance, subgroup_errors, ConcordanceMode, ErrorSummary, MatchedTimes,
    MetricsError, SubgroupEdges, SubgroupSummary, TimeBucket,
};
use crate::timeline::Timeline;
use crate::util::{atomic_write, sha256_hex};

/// Version stamped into every emitted JSON document.
pub const SCHEMA_VERSION: u32 = 1;

/// Which comparison an [`EvalReport`] encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Side A is ground truth (manual annotation).
    ReferenceVsCandidate,
    /// Both sides are model outputs; side A is the denominator by
    /// convention.
    InterLlm,
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalMode::ReferenceVsCandidate => f.write_str("reference_vs_candidate"),
            EvalMode::InterLlm => f.write_str("inter_llm"),
        }
    }
}

/// Matching and metric settings shared by every report in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub threshold: f64,
    pub metric: DistanceMetric,
    pub embedder_tag: String,
    pub prompt_digest: Option<String>,
    pub edges: SubgroupEdges,
}

impl EvalConfig {
    /// Cosine matching at the 0.1 threshold with default subgroup edges.
    pub fn cosine(embedder_tag: impl Into<String>) -> Self {
        EvalConfig {
            threshold: 0.1,
            metric: DistanceMetric::CosineEmbedding,
            embedder_tag: embedder_tag.into(),
            prompt_digest: None,
            edges: SubgroupEdges::default(),
        }
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        sha256_hex(&[&json])
    }
}

/// Flag set when a report pair had no matched events.
pub const FLAG_NO_MATCHES: &str = "no_matches";
/// Flag set when concordance was undefined (all reference times equal).
pub const FLAG_NO_COMPARABLE_PAIRS: &str = "no_comparable_pairs";

/// Metrics for one report pair. See the module docs for the field-by-field
/// schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub report_id: String,
    pub side_a: String,
    pub side_b: String,
    pub mode: EvalMode,
    pub n_events_a: usize,
    pub n_events_b: usize,
    pub n_matched: usize,
    pub match_rate: f64,
    pub concordance_harrell: Option<f64>,
    pub concordance_lenient: Option<f64>,
    pub error_summary: Option<ErrorSummary>,
    pub subgroup_summaries: Vec<SubgroupSummary>,
    pub threshold: f64,
    pub metric: DistanceMetric,
    pub embedder_tag: String,
    pub prompt_digest: Option<String>,
    pub config_digest: String,
    pub flags: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("timelines refer to different reports: {a} vs {b}")]
    MismatchedReport { a: String, b: String },
    #[error("cannot aggregate reports with differing config digests")]
    HeterogeneousConfig,
    #[error("no reports to aggregate")]
    EmptyInput,
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Compare two timelines of the same report under `config`.
///
/// Side A is the reference (or first model) and the match-rate denominator.
/// Both concordance conventions are always computed; metrics that are
/// undefined for the pair (nothing matched, or no comparable pairs) come
/// back as `None` with an explanatory flag instead of failing the run.
pub fn evaluate_pair(
    side_a: &Timeline,
    side_b: &Timeline,
    mode: EvalMode,
    config: &EvalConfig,
    embedder: Option<&dyn Embedder>,
) -> Result<EvalReport, ReportError> {
    if side_a.report_id != side_b.report_id {
        return Err(ReportError::MismatchedReport {
            a: side_a.report_id.clone(),
            b: side_b.report_id.clone(),
        });
    }
    let matrix = build_distance_matrix(&side_a.events, &side_b.events, config.metric, embedder)?;
    let match_set = recursive_best_match(&matrix, config.threshold);
    let matched = MatchedTimes::from_match_set(&match_set, side_a, side_b);

    let mut flags = Vec::new();
    let (concordance_harrell, concordance_lenient) = match (
        concordance(&matched, ConcordanceMode::Harrell),
        concordance(&matched, ConcordanceMode::Lenient),
    ) {
        (Ok(h), Ok(l)) => (Some(h), Some(l)),
        _ => {
            flags.push(FLAG_NO_COMPARABLE_PAIRS.to_string());
            (None, None)
        }
    };
    let error_summary = match absolute_errors(&matched) {
        Ok(out) => Some(out.summary),
        Err(MetricsError::EmptyInput) => {
            flags.push(FLAG_NO_MATCHES.to_string());
            None
        }
        Err(MetricsError::NoComparablePairs) => unreachable!("absolute_errors never returns this"),
    };
    let subgroup_summaries = subgroup_errors(&matched, &config.edges).unwrap_or_default();

    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        report_id: side_a.report_id.clone(),
        side_a: side_a.annotator.clone(),
        side_b: side_b.annotator.clone(),
        mode,
        n_events_a: side_a.events.len(),
        n_events_b: side_b.events.len(),
        n_matched: match_set.pairs.len(),
        match_rate: match_set.pairs.len() as f64 / side_a.events.len() as f64,
        concordance_harrell,
        concordance_lenient,
        error_summary,
        subgroup_summaries,
        threshold: config.threshold,
        metric: config.metric,
        embedder_tag: config.embedder_tag.clone(),
        prompt_digest: config.prompt_digest.clone(),
        config_digest: config.digest(),
        flags,
    })
}

/// Pooled error statistics. Fractions are exact pools of the per-report
/// counts, not means of fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledErrors {
    pub n: usize,
    pub mean: f64,
    pub fraction_exact: f64,
    pub fraction_within_24h: f64,
    pub fraction_over_168h: f64,
    pub fraction_over_8760h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledSubgroup {
    pub bucket: TimeBucket,
    pub count: usize,
    pub mean_error: Option<f64>,
}

/// Aggregate over all reports of one `(side_a, side_b, mode)` pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub side_a: String,
    pub side_b: String,
    pub mode: EvalMode,
    pub report_count: usize,
    pub total_events_a: usize,
    pub total_events_b: usize,
    pub total_matched: usize,
    /// Total matched over total side-A events.
    pub pooled_match_rate: f64,
    /// Total matched over total side-B events, for runs where the
    /// denominator convention is debatable (inter-LLM agreement).
    pub pooled_match_rate_b: f64,
    /// Unweighted mean of per-report match rates.
    pub mean_match_rate: f64,
    /// Mean of per-report concordances, reports without comparable pairs
    /// excluded; the headline ordering-agreement number.
    pub mean_concordance_harrell: Option<f64>,
    pub mean_concordance_lenient: Option<f64>,
    /// Reports contributing to the concordance means.
    pub concordance_report_count: usize,
    pub pooled_errors: Option<PooledErrors>,
    pub pooled_subgroups: Vec<PooledSubgroup>,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub threshold: f64,
    pub metric: DistanceMetric,
    pub embedder_tag: String,
    pub prompt_digest: Option<String>,
    pub subgroup_edges: SubgroupEdges,
    pub config_digest: String,
    pub concordance_modes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub schema_version: u32,
    pub pairs: Vec<PairSummary>,
    pub provenance: Provenance,
}

/// Pool per-report results. All reports must share one config digest;
/// grouping is by `(side_a, side_b, mode)` and the output order is sorted,
/// so aggregation is permutation-invariant.
pub fn aggregate(reports: &[EvalReport]) -> Result<CorpusSummary, ReportError> {
    let first = reports.first().ok_or(ReportError::EmptyInput)?;
    if reports.iter().any(|r| r.config_digest != first.config_digest) {
        return Err(ReportError::HeterogeneousConfig);
    }

    let mut groups: BTreeMap<(String, String, String), Vec<&EvalReport>> = BTreeMap::new();
    for report in reports {
        groups
            .entry((report.side_a.clone(), report.side_b.clone(), report.mode.to_string()))
            .or_default()
            .push(report);
    }

    let pairs = groups
        .into_values()
        .map(|members| {
            let total_events_a: usize = members.iter().map(|r| r.n_events_a).sum();
            let total_events_b: usize = members.iter().map(|r| r.n_events_b).sum();
            let total_matched: usize = members.iter().map(|r| r.n_matched).sum();
            let mean = |values: Vec<f64>| -> Option<f64> {
                (!values.is_empty())
                    .then(|| values.iter().sum::<f64>() / values.len() as f64)
            };
            let harrell: Vec<f64> = members.iter().filter_map(|r| r.concordance_harrell).collect();
            let lenient: Vec<f64> = members.iter().filter_map(|r| r.concordance_lenient).collect();
            let concordance_report_count = harrell.len();

            let with_errors: Vec<&ErrorSummary> =
                members.iter().filter_map(|r| r.error_summary.as_ref()).collect();
            let pooled_errors = (!with_errors.is_empty()).then(|| {
                let n: usize = with_errors.iter().map(|e| e.n).sum();
                let weighted_mean: f64 =
                    with_errors.iter().map(|e| e.mean * e.n as f64).sum::<f64>() / n as f64;
                let pool = |count: &dyn Fn(&ErrorSummary) -> usize| {
                    with_errors.iter().map(|e| count(e)).sum::<usize>() as f64 / n as f64
                };
                PooledErrors {
                    n,
                    mean: weighted_mean,
                    fraction_exact: pool(&|e| e.n_exact),
                    fraction_within_24h: pool(&|e| e.n_within_24h),
                    fraction_over_168h: pool(&|e| e.n_over_168h),
                    fraction_over_8760h: pool(&|e| e.n_over_8760h),
                }
            });

            let pooled_subgroups = TimeBucket::ALL
                .iter()
                .map(|bucket| {
                    let cells: Vec<&SubgroupSummary> = members
                        .iter()
                        .flat_map(|r| r.subgroup_summaries.iter())
                        .filter(|s| s.bucket == *bucket)
                        .collect();
                    let count: usize = cells.iter().map(|s| s.count).sum();
                    let mean_error = (count > 0).then(|| {
                        cells
                            .iter()
                            .filter_map(|s| s.mean_error.map(|m| m * s.count as f64))
                            .sum::<f64>()
                            / count as f64
                    });
                    PooledSubgroup {
                        bucket: *bucket,
                        count,
                        mean_error,
                    }
                })
                .collect();

            let sample = members[0];
            PairSummary {
                side_a: sample.side_a.clone(),
                side_b: sample.side_b.clone(),
                mode: sample.mode,
                report_count: members.len(),
                total_events_a,
                total_events_b,
                total_matched,
                pooled_match_rate: total_matched as f64 / total_events_a as f64,
                pooled_match_rate_b: total_matched as f64 / total_events_b as f64,
                mean_match_rate: members.iter().map(|r| r.match_rate).sum::<f64>()
                    / members.len() as f64,
                mean_concordance_harrell: mean(harrell),
                mean_concordance_lenient: mean(lenient),
                concordance_report_count,
                pooled_errors,
                pooled_subgroups,
            }
        })
        .collect();

    Ok(CorpusSummary {
        schema_version: SCHEMA_VERSION,
        pairs,
        provenance: Provenance {
            threshold: first.threshold,
            metric: first.metric,
            embedder_tag: first.embedder_tag.clone(),
            prompt_digest: first.prompt_digest.clone(),
            subgroup_edges: SubgroupEdges::default(),
            config_digest: first.config_digest.clone(),
            concordance_modes: vec!["harrell".into(), "lenient".into()],
        },
    })
}

/// Write any report document as pretty JSON.
pub fn emit_json<T: Serialize>(value: &T, path: &Path) -> Result<(), ReportError> {
    let json = serde_json::to_string_pretty(value).map_err(|e| ReportError::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    atomic_write(path, format!("{json}\n").as_bytes()).map_err(|e| ReportError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load_eval_report(path: &Path) -> Result<EvalReport, ReportError> {
    load_json(path)
}

pub fn load_corpus_summary(path: &Path) -> Result<CorpusSummary, ReportError> {
    load_json(path)
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ReportError> {
    let raw = std::fs::read_to_string(path).map_err(|e| ReportError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    serde_json::from_str(&raw).map_err(|e| ReportError::Json {
        path: path.display().to_string(),
        source: e,
    })
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Write the flat plot-ready tables for a summary and its member reports:
/// per-pair summary, per-report concordance (one row per report and
/// concordance mode, boxplot-ready), per-report error summaries, per-report
/// subgroup panels, and per-report match rates.
pub fn emit_tables(
    summary: &CorpusSummary,
    reports: &[EvalReport],
    dir: &Path,
) -> Result<(), ReportError> {
    let write = |name: &str, contents: String| -> Result<(), ReportError> {
        let path = dir.join(name);
        atomic_write(&path, contents.as_bytes()).map_err(|e| ReportError::Io {
            path: path.display().to_string(),
            source: e,
        })
    };

    let mut out = String::from(
        "side_a\tside_b\tmode\treports\tevents_a\tevents_b\tmatched\tpooled_match_rate\tpooled_match_rate_b\tmean_match_rate\tmean_concordance_harrell\tmean_concordance_lenient\n",
    );
    for p in &summary.pairs {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            p.side_a,
            p.side_b,
            p.mode,
            p.report_count,
            p.total_events_a,
            p.total_events_b,
            p.total_matched,
            p.pooled_match_rate,
            p.pooled_match_rate_b,
            p.mean_match_rate,
            fmt_opt(p.mean_concordance_harrell),
            fmt_opt(p.mean_concordance_lenient),
        ));
    }
    write("summary_pairs.tsv", out)?;

    let mut out = String::from("report_id\tside_a\tside_b\tmode\tconcordance_mode\tconcordance\n");
    for r in reports {
        for (mode, value) in [
            ("harrell", r.concordance_harrell),
            ("lenient", r.concordance_lenient),
        ] {
            if let Some(value) = value {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\n",
                    r.report_id, r.side_a, r.side_b, r.mode, mode, value
                ));
            }
        }
    }
    write("concordance_boxplot.tsv", out)?;

    let mut out = String::from(
        "report_id\tside_a\tside_b\tn\tmean\tmedian\tfraction_exact\tfraction_within_24h\tfraction_over_168h\tfraction_over_8760h\n",
    );
    for r in reports {
        if let Some(e) = &r.error_summary {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.report_id,
                r.side_a,
                r.side_b,
                e.n,
                e.mean,
                e.median,
                e.fraction_exact,
                e.fraction_within_24h,
                e.fraction_over_168h,
                e.fraction_over_8760h,
            ));
        }
    }
    write("error_summary.tsv", out)?;

    let mut out =
        String::from("report_id\tside_a\tside_b\tbucket\tcount\tmean_error\tmedian_error\tmax_error\n");
    for r in reports {
        for s in &r.subgroup_summaries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.report_id,
                r.side_a,
                r.side_b,
                s.bucket.label(),
                s.count,
                fmt_opt(s.mean_error),
                fmt_opt(s.median_error),
                fmt_opt(s.max_error),
            ));
        }
    }
    write("subgroup_panel.tsv", out)?;

    let mut out = String::from(
        "report_id\tside_a\tside_b\tn_events_a\tn_events_b\tn_matched\tmatch_rate\tthreshold\n",
    );
    for r in reports {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.report_id,
            r.side_a,
            r.side_b,
            r.n_events_a,
            r.n_events_b,
            r.n_matched,
            r.match_rate,
            r.threshold,
        ));
    }
    write("match_rate.tsv", out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{TrigramEmbedder, TRIGRAM_BACKEND_TAG};
    use crate::prompt::exemplar_output_block;
    use crate::timeline::{parse_llm_timeline, EventRecord};
    use proptest::prelude::*;

    fn timeline(annotator: &str, rows: &[(&str, f64)]) -> Timeline {
        Timeline {
            report_id: "PMC1".into(),
            annotator: annotator.into(),
            events: rows
                .iter()
                .enumerate()
                .map(|(i, (text, t))| EventRecord {
                    text: text.to_string(),
                    time_hours: *t,
                    source_line: i + 1,
                })
                .collect(),
            diagnostics: Vec::new(),
        }
    }

    fn config() -> EvalConfig {
        EvalConfig::cosine(TRIGRAM_BACKEND_TAG)
    }

    #[test]
    fn self_agreement_is_perfect() {
        let t = timeline(
            "manual",
            &[("fever", -72.0), ("rash", -48.0), ("admitted", 0.0), ("discharged", 24.0)],
        );
        let report = evaluate_pair(
            &t,
            &t,
            EvalMode::ReferenceVsCandidate,
            &config(),
            Some(&TrigramEmbedder),
        )
        .unwrap();
        assert_eq!(report.match_rate, 1.0);
        assert_eq!(report.n_matched, 4);
        assert_eq!(report.concordance_harrell, Some(1.0));
        assert_eq!(report.concordance_lenient, Some(1.0));
        assert_eq!(report.error_summary.as_ref().unwrap().fraction_exact, 1.0);
        assert!(report.flags.is_empty());
    }

    #[test]
    fn exemplar_with_shifted_discharge_time() {
        let reference =
            parse_llm_timeline(exemplar_output_block(), "PMC1", "manual").unwrap();
        let mut candidate = reference.clone();
        candidate.annotator = "gpt-4".into();
        let discharged = candidate
            .events
            .iter_mut()
            .find(|e| e.text == "discharged")
            .unwrap();
        assert_eq!(discharged.time_hours, 24.0);
        discharged.time_hours = 48.0;

        let report = evaluate_pair(
            &reference,
            &candidate,
            EvalMode::ReferenceVsCandidate,
            &config(),
            Some(&TrigramEmbedder),
        )
        .unwrap();
        assert_eq!(report.n_matched, 16);
        assert_eq!(report.concordance_harrell, Some(1.0));
        let errors = report.error_summary.unwrap();
        assert_eq!(errors.n_exact, 15);
        assert_eq!(errors.mean, 24.0 / 16.0);
    }

    #[test]
    fn disjoint_vocabularies_flag_degenerate_metrics() {
        let a = timeline("manual", &[("fever", 0.0), ("rash", 24.0)]);
        let b = timeline("gpt-4", &[("vomit", 0.0), ("cough", 24.0)]);
        let report = evaluate_pair(
            &a,
            &b,
            EvalMode::ReferenceVsCandidate,
            &config(),
            Some(&TrigramEmbedder),
        )
        .unwrap();
        assert_eq!(report.n_matched, 0);
        assert_eq!(report.match_rate, 0.0);
        assert_eq!(report.concordance_harrell, None);
        assert!(report.error_summary.is_none());
        assert!(report.flags.contains(&FLAG_NO_COMPARABLE_PAIRS.to_string()));
        assert!(report.flags.contains(&FLAG_NO_MATCHES.to_string()));
    }

    #[test]
    fn mismatched_ids_are_rejected() {
        let a = timeline("manual", &[("fever", 0.0)]);
        let mut b = timeline("gpt-4", &[("fever", 0.0)]);
        b.report_id = "PMC2".into();
        assert!(matches!(
            evaluate_pair(&a, &b, EvalMode::ReferenceVsCandidate, &config(), Some(&TrigramEmbedder)),
            Err(ReportError::MismatchedReport { .. })
        ));
    }

    fn report_with(concordance: f64, report_id: &str) -> EvalReport {
        let a = timeline(
            "manual",
            &[("fever", -72.0), ("rash", -48.0), ("admitted", 0.0), ("discharged", 24.0)],
        );
        let mut b = a.clone();
        b.annotator = "gpt-4".into();
        if concordance < 1.0 {
            // Swap two candidate times to create discordance.
            let t0 = b.events[0].time_hours;
            b.events[0].time_hours = b.events[3].time_hours;
            b.events[3].time_hours = t0;
        }
        let mut a = a;
        a.report_id = report_id.into();
        b.report_id = report_id.into();
        evaluate_pair(&a, &b, EvalMode::ReferenceVsCandidate, &config(), Some(&TrigramEmbedder))
            .unwrap()
    }

    #[test]
    fn aggregate_single_report_matches_inputs() {
        let r = report_with(1.0, "PMC1");
        let summary = aggregate(std::slice::from_ref(&r)).unwrap();
        assert_eq!(summary.pairs.len(), 1);
        let pair = &summary.pairs[0];
        assert_eq!(pair.report_count, 1);
        assert_eq!(pair.total_matched, r.n_matched);
        assert_eq!(pair.pooled_match_rate, r.match_rate);
        assert_eq!(pair.mean_concordance_harrell, r.concordance_harrell);
        assert_eq!(summary.provenance.config_digest, r.config_digest);
    }

    #[test]
    fn aggregate_means_concordances() {
        let a = report_with(1.0, "PMC1");
        let b = report_with(0.5, "PMC2");
        let harrell_a = a.concordance_harrell.unwrap();
        let harrell_b = b.concordance_harrell.unwrap();
        let summary = aggregate(&[a, b]).unwrap();
        let pair = &summary.pairs[0];
        assert_eq!(pair.report_count, 2);
        assert!((pair.mean_concordance_harrell.unwrap() - (harrell_a + harrell_b) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_rejects_mixed_configs() {
        let a = report_with(1.0, "PMC1");
        let mut b = report_with(1.0, "PMC2");
        b.config_digest = "different".into();
        assert!(matches!(
            aggregate(&[a, b]),
            Err(ReportError::HeterogeneousConfig)
        ));
        assert!(matches!(aggregate(&[]), Err(ReportError::EmptyInput)));
    }

    #[test]
    fn aggregate_is_permutation_invariant() {
        let reports: Vec<EvalReport> = (0..5)
            .map(|i| report_with(if i % 2 == 0 { 1.0 } else { 0.5 }, &format!("PMC{i}")))
            .collect();
        let mut reversed = reports.clone();
        reversed.reverse();
        assert_eq!(aggregate(&reports).unwrap(), aggregate(&reversed).unwrap());
    }

    #[test]
    fn json_round_trip_preserves_structure() {
        let dir = tempfile::tempdir().unwrap();
        let r = report_with(0.5, "PMC1");
        let path = dir.path().join("report.json");
        emit_json(&r, &path).unwrap();
        let back = load_eval_report(&path).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.schema_version, SCHEMA_VERSION);

        let summary = aggregate(std::slice::from_ref(&r)).unwrap();
        let path = dir.path().join("summary.json");
        emit_json(&summary, &path).unwrap();
        let back = load_corpus_summary(&path).unwrap();
        assert_eq!(back, summary);
        let raw = std::fs::read_to_string(&path).unwrap();
        assert!(raw.contains("\"schema_version\""));
        assert!(raw.contains("\"config_digest\""));
    }

    #[test]
    fn tables_have_one_concordance_row_per_report_and_mode() {
        let dir = tempfile::tempdir().unwrap();
        let reports = vec![report_with(1.0, "PMC1"), report_with(0.5, "PMC2")];
        let summary = aggregate(&reports).unwrap();
        emit_tables(&summary, &reports, dir.path()).unwrap();
        let boxplot = std::fs::read_to_string(dir.path().join("concordance_boxplot.tsv")).unwrap();
        // Header plus 2 reports x 2 modes.
        assert_eq!(boxplot.lines().count(), 5);
        let subgroups = std::fs::read_to_string(dir.path().join("subgroup_panel.tsv")).unwrap();
        assert_eq!(subgroups.lines().count(), 1 + 2 * TimeBucket::ALL.len());
        for name in ["summary_pairs.tsv", "error_summary.tsv", "match_rate.tsv"] {
            assert!(dir.path().join(name).exists());
        }
    }

    proptest! {
        #[test]
        fn concordance_is_symmetric_under_side_swap_without_ties(
            times in proptest::collection::btree_set(-500i32..500, 2..10),
            shuffled in proptest::collection::vec(0usize..1000, 10),
        ) {
            // Distinct texts, tie-free distinct times on both sides: the
            // alignment is the identity (exact text matches), so swapping
            // sides must not change concordance.
            let times: Vec<i32> = times.into_iter().collect();
            let n = times.len();
            let mut cand_times: Vec<i32> = times.clone();
            for (i, r) in shuffled.iter().take(n).enumerate() {
                cand_times.swap(i, r % n);
            }
            let rows_a: Vec<(String, f64)> = (0..n)
                .map(|i| (format!("event{i:03}"), times[i] as f64))
                .collect();
            let rows_b: Vec<(String, f64)> = (0..n)
                .map(|i| (format!("event{i:03}"), cand_times[i] as f64))
                .collect();
            let to_timeline = |annotator: &str, rows: &[(String, f64)]| {
                let refs: Vec<(&str, f64)> = rows.iter().map(|(t, h)| (t.as_str(), *h)).collect();
                timeline(annotator, &refs)
            };
            let a = to_timeline("manual", &rows_a);
            let b = to_timeline("gpt-4", &rows_b);
            let forward = evaluate_pair(&a, &b, EvalMode::InterLlm, &config(), Some(&TrigramEmbedder)).unwrap();
            let backward = evaluate_pair(&b, &a, EvalMode::InterLlm, &config(), Some(&TrigramEmbedder)).unwrap();
            prop_assert_eq!(forward.n_matched, backward.n_matched);
            prop_assert_eq!(forward.concordance_harrell, backward.concordance_harrell);
            prop_assert_eq!(forward.concordance_lenient, backward.concordance_lenient);
        }

        #[test]
        fn identity_evaluation_on_random_distinct_texts(
            rows in proptest::collection::btree_map("[a-z]{3,12}", -200i32..200, 2..12)
        ) {
            let rows: Vec<(String, f64)> = rows.into_iter().map(|(t, h)| (t, h as f64)).collect();
            let refs: Vec<(&str, f64)> = rows.iter().map(|(t, h)| (t.as_str(), *h)).collect();
            let t = timeline("manual", &refs);
            let report = evaluate_pair(
                &t,
                &t,
                EvalMode::ReferenceVsCandidate,
                &config(),
                Some(&TrigramEmbedder),
            )
            .unwrap();
            prop_assert_eq!(report.match_rate, 1.0);
            if let Some(e) = &report.error_summary {
                prop_assert_eq!(e.fraction_exact, 1.0);
            }
            prop_assert!(report.n_matched <= report.n_events_a.min(report.n_events_b));
        }
    }
}
