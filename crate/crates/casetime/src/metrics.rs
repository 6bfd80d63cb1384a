//! Temporal agreement metrics over matched event pairs.
//!
//! After matching, each pair carries a reference time (side A: the manual
//! annotation, or the first model in an inter-LLM run) and a candidate time
//! (side B). Agreement is measured three ways: ordering agreement
//! (concordance over comparable pairs), absolute time error in hours, and
//! error broken down by how far the reference time sits from presentation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::{recursive_best_match, DistanceMatrix, MatchSet};
use crate::timeline::Timeline;

pub const HOURS_PER_DAY: f64 = 24.0;
pub const HOURS_PER_WEEK: f64 = 168.0;
pub const HOURS_PER_YEAR: f64 = 8760.0;

/// Reference/candidate time pairs for the matched events of one report.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchedTimes {
    pub pairs: Vec<MatchedPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub t_ref: f64,
    pub t_cand: f64,
    pub index_a: usize,
    pub index_b: usize,
}

impl MatchedTimes {
    /// Pull times out of the two timelines for every matched index pair.
    pub fn from_match_set(match_set: &MatchSet, reference: &Timeline, candidate: &Timeline) -> Self {
        let pairs = match_set
            .pairs
            .iter()
            .map(|p| MatchedPair {
                t_ref: reference.events[p.index_a].time_hours,
                t_cand: candidate.events[p.index_b].time_hours,
                index_a: p.index_a,
                index_b: p.index_b,
            })
            .collect();
        MatchedTimes { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no comparable pairs: all reference times are equal")]
    NoComparablePairs,
    #[error("empty input")]
    EmptyInput,
}

/// How candidate ties are credited. A pair of events is comparable when the
/// reference times differ; if the candidate predicts the same time for
/// both, Harrell scoring gives half credit (survival C-index convention),
/// lenient scoring gives full credit ("not incorrect" ordering).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcordanceMode {
    Harrell,
    Lenient,
}

impl ConcordanceMode {
    fn tie_credit(self) -> f64 {
        match self {
            ConcordanceMode::Harrell => 0.5,
            ConcordanceMode::Lenient => 1.0,
        }
    }
}

/// Empirical probability of correct candidate ordering over all comparable
/// pairs. Walks groups of equal reference time in ascending order and
/// scores every cross-group candidate pair: 1 for the right order, the
/// mode's tie credit for a candidate tie, 0 otherwise.
pub fn concordance(matched: &MatchedTimes, mode: ConcordanceMode) -> Result<f64, MetricsError> {
    if matched.is_empty() {
        return Err(MetricsError::NoComparablePairs);
    }
    let mut items: Vec<(f64, f64)> = matched.pairs.iter().map(|p| (p.t_ref, p.t_cand)).collect();
    items.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("times are finite"));

    let mut groups: Vec<Vec<f64>> = Vec::new();
    let mut current_ref = f64::NAN;
    for (t_ref, t_cand) in items {
        if groups.is_empty() || t_ref != current_ref {
            groups.push(Vec::new());
            current_ref = t_ref;
        }
        groups.last_mut().unwrap().push(t_cand);
    }
    if groups.len() < 2 {
        return Err(MetricsError::NoComparablePairs);
    }

    let tie_credit = mode.tie_credit();
    let mut credit = 0.0;
    let mut comparable = 0u64;
    for earlier in 0..groups.len() {
        for later in earlier + 1..groups.len() {
            for &x in &groups[earlier] {
                for &y in &groups[later] {
                    comparable += 1;
                    if x < y {
                        credit += 1.0;
                    } else if x == y {
                        credit += tie_credit;
                    }
                }
            }
        }
    }
    Ok(credit / comparable as f64)
}

/// Elementwise `|t_cand - t_ref|` plus summary statistics. Counts are kept
/// alongside fractions so summaries can be pooled exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub n_exact: usize,
    pub fraction_exact: f64,
    pub n_within_24h: usize,
    pub fraction_within_24h: f64,
    pub n_over_168h: usize,
    pub fraction_over_168h: f64,
    pub n_over_8760h: usize,
    pub fraction_over_8760h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsoluteErrors {
    pub errors: Vec<f64>,
    pub summary: ErrorSummary,
}

/// Absolute time errors in hours. Exact means error 0; the day threshold is
/// inclusive (`<= 24`), the week and year thresholds exclusive (`> 168`,
/// `> 8760`).
pub fn absolute_errors(matched: &MatchedTimes) -> Result<AbsoluteErrors, MetricsError> {
    if matched.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let errors: Vec<f64> = matched
        .pairs
        .iter()
        .map(|p| (p.t_cand - p.t_ref).abs())
        .collect();
    let summary = summarize_errors(&errors);
    Ok(AbsoluteErrors { errors, summary })
}

fn summarize_errors(errors: &[f64]) -> ErrorSummary {
    let n = errors.len();
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("errors are finite"));
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let count = |pred: &dyn Fn(f64) -> bool| errors.iter().filter(|e| pred(**e)).count();
    let n_exact = count(&|e| e == 0.0);
    let n_within_24h = count(&|e| e <= HOURS_PER_DAY);
    let n_over_168h = count(&|e| e > HOURS_PER_WEEK);
    let n_over_8760h = count(&|e| e > HOURS_PER_YEAR);
    let frac = |k: usize| k as f64 / n as f64;
    ErrorSummary {
        n,
        mean: errors.iter().sum::<f64>() / n as f64,
        median,
        n_exact,
        fraction_exact: frac(n_exact),
        n_within_24h,
        fraction_within_24h: frac(n_within_24h),
        n_over_168h,
        fraction_over_168h: frac(n_over_168h),
        n_over_8760h,
        fraction_over_8760h: frac(n_over_8760h),
    }
}

/// Strata of `|reference time|`: exactly at presentation, then within a
/// day, a week, a year, and beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgroupEdges {
    pub day: f64,
    pub week: f64,
    pub year: f64,
}

impl Default for SubgroupEdges {
    fn default() -> Self {
        SubgroupEdges {
            day: HOURS_PER_DAY,
            week: HOURS_PER_WEEK,
            year: HOURS_PER_YEAR,
        }
    }
}

impl SubgroupEdges {
    pub fn validate(&self) -> Result<(), String> {
        if self.day > 0.0 && self.day < self.week && self.week < self.year {
            Ok(())
        } else {
            Err(format!(
                "subgroup edges must be strictly increasing and positive: {} {} {}",
                self.day, self.week, self.year
            ))
        }
    }

    pub fn bucket(&self, abs_hours: f64) -> TimeBucket {
        if abs_hours == 0.0 {
            TimeBucket::AtPresentation
        } else if abs_hours <= self.day {
            TimeBucket::WithinDay
        } else if abs_hours <= self.week {
            TimeBucket::WithinWeek
        } else if abs_hours <= self.year {
            TimeBucket::WithinYear
        } else {
            TimeBucket::BeyondYear
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeBucket {
    AtPresentation,
    WithinDay,
    WithinWeek,
    WithinYear,
    BeyondYear,
}

impl TimeBucket {
    pub const ALL: [TimeBucket; 5] = [
        TimeBucket::AtPresentation,
        TimeBucket::WithinDay,
        TimeBucket::WithinWeek,
        TimeBucket::WithinYear,
        TimeBucket::BeyondYear,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            TimeBucket::AtPresentation => "at_presentation",
            TimeBucket::WithinDay => "within_1_day",
            TimeBucket::WithinWeek => "within_1_week",
            TimeBucket::WithinYear => "within_1_year",
            TimeBucket::BeyondYear => "beyond_1_year",
        }
    }
}

/// Error statistics for the matched pairs falling into one bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSummary {
    pub bucket: TimeBucket,
    pub count: usize,
    pub mean_error: Option<f64>,
    pub median_error: Option<f64>,
    pub max_error: Option<f64>,
}

/// Absolute errors grouped by the reference-side distance from
/// presentation. Always returns all five buckets; empty buckets have count
/// zero and no statistics.
pub fn subgroup_errors(
    matched: &MatchedTimes,
    edges: &SubgroupEdges,
) -> Result<Vec<SubgroupSummary>, MetricsError> {
    if matched.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut by_bucket: Vec<Vec<f64>> = vec![Vec::new(); TimeBucket::ALL.len()];
    for pair in &matched.pairs {
        let bucket = edges.bucket(pair.t_ref.abs());
        let idx = TimeBucket::ALL.iter().position(|b| *b == bucket).unwrap();
        by_bucket[idx].push((pair.t_cand - pair.t_ref).abs());
    }
    Ok(TimeBucket::ALL
        .iter()
        .zip(by_bucket)
        .map(|(bucket, errors)| {
            if errors.is_empty() {
                SubgroupSummary {
                    bucket: *bucket,
                    count: 0,
                    mean_error: None,
                    median_error: None,
                    max_error: None,
                }
            } else {
                let summary = summarize_errors(&errors);
                SubgroupSummary {
                    bucket: *bucket,
                    count: summary.n,
                    mean_error: Some(summary.mean),
                    median_error: Some(summary.median),
                    max_error: errors.iter().copied().reduce(f64::max),
                }
            }
        })
        .collect())
}

/// Match rate at one threshold: matched pairs over the reference event
/// count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub match_rate: f64,
}

/// Match rate as a function of the distance threshold, for threshold
/// calibration plots. `ref_event_count` must be positive; `thresholds`
/// should be sorted ascending (rates are then nondecreasing).
pub fn match_rate_curve(
    matrix: &DistanceMatrix,
    ref_event_count: usize,
    thresholds: &[f64],
) -> Vec<CurvePoint> {
    assert!(ref_event_count > 0, "reference event count must be positive");
    debug_assert!(
        thresholds.windows(2).all(|w| w[0] <= w[1]),
        "thresholds should be sorted ascending"
    );
    thresholds
        .iter()
        .map(|&threshold| CurvePoint {
            threshold,
            match_rate: recursive_best_match(matrix, threshold).pairs.len() as f64
                / ref_event_count as f64,
        })
        .collect()
}

/// Histogram of one timeline's `|time_hours|` over the subgroup buckets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeDistribution {
    pub buckets: Vec<BucketCount>,
    pub fraction_at_zero: f64,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketCount {
    pub bucket: TimeBucket,
    pub count: usize,
    pub fraction: f64,
}

/// Where a timeline's events sit relative to presentation.
pub fn time_distribution(
    timeline: &Timeline,
    edges: &SubgroupEdges,
) -> Result<TimeDistribution, MetricsError> {
    if timeline.events.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let total = timeline.events.len();
    let mut counts = vec![0usize; TimeBucket::ALL.len()];
    for event in &timeline.events {
        let bucket = edges.bucket(event.time_hours.abs());
        counts[TimeBucket::ALL.iter().position(|b| *b == bucket).unwrap()] += 1;
    }
    let buckets: Vec<BucketCount> = TimeBucket::ALL
        .iter()
        .zip(&counts)
        .map(|(bucket, count)| BucketCount {
            bucket: *bucket,
            count: *count,
            fraction: *count as f64 / total as f64,
        })
        .collect();
    let fraction_at_zero = buckets[0].fraction;
    Ok(TimeDistribution {
        buckets,
        fraction_at_zero,
        total,
    })
}
