//! Timeline data model and its two wire formats.
//!
//! A timeline is an ordered list of `(event text, relative time in hours)`
//! pairs for one report from one annotator. Times are relative to case
//! presentation: negative before, 0 at presentation, positive after.
//!
//! Two formats are supported:
//! - the bar-separated rows an LLM is asked to emit (`event | -72`), parsed
//!   leniently with per-line diagnostics;
//! - two-column `event,time` CSV used for reference annotations and for
//!   persisting parsed timelines, parsed strictly.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

/// Annotator tag used for human reference annotations.
pub const MANUAL_ANNOTATOR: &str = "manual";

/// One extracted clinical event and its relative time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    /// Verbatim or near-verbatim text span for the event.
    pub text: String,
    /// Hours relative to case presentation; always finite.
    pub time_hours: f64,
    /// 1-based line of the raw annotation this event came from.
    pub source_line: usize,
}

/// Why a raw line contributed no event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagnosticKind {
    /// No `|` separator on the line.
    MalformedRow,
    /// Right-hand field did not parse as a number.
    NonNumericTime,
    /// Header row such as `Event | Time` or `event,time`.
    SkippedHeader,
    /// Markdown code fence (```), common in chat output.
    SkippedFence,
    /// Separator present but the event text was empty.
    EmptyEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    pub line_number: usize,
    pub raw_line: String,
    pub kind: DiagnosticKind,
}

/// Ordered events for one report from one annotator, plus any lines the
/// parser rejected. Immutable once constructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub report_id: String,
    /// Annotator tag, e.g. `manual`, `gpt-4`, `gpt-4-feedback`, `o1-preview`.
    pub annotator: String,
    pub events: Vec<EventRecord>,
    pub diagnostics: Vec<ParseDiagnostic>,
}

#[derive(Debug, Error)]
pub enum TimelineError {
    #[error("no events parsed for report {report_id} ({rejected} lines rejected)")]
    EmptyTimeline {
        report_id: String,
        rejected: usize,
        diagnostics: Vec<ParseDiagnostic>,
    },
    #[error("{path}:{line}: malformed row in reference annotation: {detail}")]
    MalformedRow {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

/// Parse the right-hand time field: optional sign, integer or decimal
/// digits, optional trailing unit token (`hours`, `hrs`, `h`, ...). Returns
/// `None` for anything else, including non-finite overflow.
pub fn parse_time_field(field: &str) -> Option<f64> {
    let mut s = field.trim();
    let lower = s.to_ascii_lowercase();
    for unit in ["hours", "hour", "hrs", "hr", "h"] {
        if lower.ends_with(unit) {
            s = s[..s.len() - unit.len()].trim_end();
            break;
        }
    }
    if !is_plain_number(s) {
        return None;
    }
    s.parse::<f64>().ok().filter(|t| t.is_finite())
}

/// Strict numeric grammar: `[+-]? (digits | digits '.' digits? | '.' digits)`.
/// Rejects exponents, `inf`, `nan`, and underscores that `f64::from_str`
/// would otherwise admit.
fn is_plain_number(s: &str) -> bool {
    let rest = s.strip_prefix(['+', '-']).unwrap_or(s);
    if rest.is_empty() {
        return false;
    }
    let (int_part, frac_part) = match rest.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (rest, None),
    };
    let digits = |t: &str| t.bytes().all(|b| b.is_ascii_digit());
    match frac_part {
        None => digits(int_part),
        Some(f) => {
            digits(int_part) && digits(f) && !(int_part.is_empty() && f.is_empty())
        }
    }
}

fn looks_like_header(event_field: &str, time_field: &str) -> bool {
    const TIME_HEADERS: [&str; 6] = ["time", "timestamp", "hours", "time_hours", "relative time", "time (hours)"];
    const EVENT_HEADERS: [&str; 2] = ["event", "events"];
    let t = time_field.trim().to_ascii_lowercase();
    let e = event_field.trim().to_ascii_lowercase();
    TIME_HEADERS.contains(&t.as_str()) || EVENT_HEADERS.contains(&e.as_str())
}

/// Parse one LLM response into a timeline.
///
/// Every line with a `|` separator, non-empty event text on the left and a
/// numeric field on the right becomes an event; lines with several pipes
/// split at the last one. Code fences, header rows and unparsable lines are
/// recorded as diagnostics; blank lines are ignored. Errors only when zero
/// events survive.
pub fn parse_llm_timeline(
    raw: &str,
    report_id: &str,
    annotator: &str,
) -> Result<Timeline, TimelineError> {
    let mut events = Vec::new();
    let mut diagnostics = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_number = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let reject = |kind: DiagnosticKind, diagnostics: &mut Vec<ParseDiagnostic>| {
            diagnostics.push(ParseDiagnostic {
                line_number,
                raw_line: line.to_string(),
                kind,
            });
        };
        if trimmed.starts_with("```") {
            reject(DiagnosticKind::SkippedFence, &mut diagnostics);
            continue;
        }
        let Some(split_at) = trimmed.rfind('|') else {
            reject(DiagnosticKind::MalformedRow, &mut diagnostics);
            continue;
        };
        let (event_field, time_field) = (&trimmed[..split_at], &trimmed[split_at + 1..]);
        let text = event_field.trim();
        if text.is_empty() {
            reject(DiagnosticKind::EmptyEvent, &mut diagnostics);
            continue;
        }
        match parse_time_field(time_field) {
            Some(time_hours) => events.push(EventRecord {
                text: text.to_string(),
                time_hours,
                source_line: line_number,
            }),
            None if looks_like_header(event_field, time_field) => {
                reject(DiagnosticKind::SkippedHeader, &mut diagnostics)
            }
            None => reject(DiagnosticKind::NonNumericTime, &mut diagnostics),
        }
    }
    if events.is_empty() {
        return Err(TimelineError::EmptyTimeline {
            report_id: report_id.to_string(),
            rejected: diagnostics.len(),
            diagnostics,
        });
    }
    Ok(Timeline {
        report_id: report_id.to_string(),
        annotator: annotator.to_string(),
        events,
        diagnostics,
    })
}

/// Load a two-column `event,time` CSV with an optional header row.
///
/// This is the strict path: any row that is not a header and does not parse
/// cleanly is fatal. Used for reference annotations and for timelines this
/// tool wrote itself.
pub fn read_timeline_csv(
    path: &Path,
    report_id: &str,
    annotator: &str,
) -> Result<Timeline, TimelineError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| TimelineError::Io {
        path: display.clone(),
        source: e,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut events = Vec::new();
    let mut diagnostics = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| TimelineError::Csv {
            path: display.clone(),
            source: e,
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(idx + 1);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if record.len() != 2 {
            return Err(TimelineError::MalformedRow {
                path: display,
                line,
                detail: format!("expected 2 columns, found {}", record.len()),
            });
        }
        let (event_field, time_field) = (&record[0], &record[1]);
        match parse_time_field(time_field) {
            Some(time_hours) => {
                let text = event_field.trim();
                if text.is_empty() {
                    return Err(TimelineError::MalformedRow {
                        path: display,
                        line,
                        detail: "empty event text".into(),
                    });
                }
                events.push(EventRecord {
                    text: text.to_string(),
                    time_hours,
                    source_line: line,
                });
            }
            None if idx == 0 && looks_like_header(event_field, time_field) => {
                diagnostics.push(ParseDiagnostic {
                    line_number: line,
                    raw_line: format!("{event_field},{time_field}"),
                    kind: DiagnosticKind::SkippedHeader,
                });
            }
            None => {
                return Err(TimelineError::MalformedRow {
                    path: display,
                    line,
                    detail: format!("time field `{time_field}` is not numeric"),
                });
            }
        }
    }
    if events.is_empty() {
        return Err(TimelineError::EmptyTimeline {
            report_id: report_id.to_string(),
            rejected: diagnostics.len(),
            diagnostics,
        });
    }
    Ok(Timeline {
        report_id: report_id.to_string(),
        annotator: annotator.to_string(),
        events,
        diagnostics,
    })
}

/// Load a reference annotation file; the annotator tag is always `manual`.
pub fn load_reference_annotation(path: &Path, report_id: &str) -> Result<Timeline, TimelineError> {
    read_timeline_csv(path, report_id, MANUAL_ANNOTATOR)
}

/// Format a relative time for serialization. `{}` on f64 prints the
/// shortest string that parses back to the same value.
pub fn format_time(t: f64) -> String {
    format!("{t}")
}

/// Write the two-column CSV form; `read_timeline_csv` on the result
/// reproduces every `(text, time_hours)` pair in order.
pub fn write_timeline(timeline: &Timeline, path: &Path) -> Result<(), TimelineError> {
    if timeline.events.is_empty() {
        return Err(TimelineError::EmptyTimeline {
            report_id: timeline.report_id.clone(),
            rejected: 0,
            diagnostics: Vec::new(),
        });
    }
    let display = path.display().to_string();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| TimelineError::Io {
            path: display.clone(),
            source: e,
        })?;
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| TimelineError::Csv {
        path: display.clone(),
        source: e,
    })?;
    let mut write_row = |a: &str, b: &str| -> Result<(), TimelineError> {
        writer.write_record([a, b]).map_err(|e| TimelineError::Csv {
            path: display.clone(),
            source: e,
        })
    };
    write_row("event", "time")?;
    for event in &timeline.events {
        write_row(&event.text, &format_time(event.time_hours))?;
    }
    writer.flush().map_err(|e| TimelineError::Io {
        path: display,
        source: e,
    })
}

/// Event and distinct-time counts for one timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineCounts {
    pub report_id: String,
    pub annotator: String,
    pub event_count: usize,
    pub distinct_time_count: usize,
}

/// Mean/minimum/maximum of a count across timelines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatTriple {
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorStats {
    pub annotator: String,
    pub timeline_count: usize,
    pub events: StatTriple,
    pub distinct_times: StatTriple,
}

/// Per-timeline counts plus a per-annotator mean/min/max summary, the
/// layout of the descriptive-statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationStats {
    pub per_timeline: Vec<TimelineCounts>,
    pub per_annotator: Vec<AnnotatorStats>,
}

/// Count distinct `time_hours` values by exact equality.
pub fn distinct_time_count(events: &[EventRecord]) -> usize {
    let mut times: Vec<f64> = events.iter().map(|e| e.time_hours).collect();
    times.sort_by(|a, b| a.partial_cmp(b).expect("times are finite"));
    times.dedup();
    times.len()
}

/// Per-annotator descriptive statistics over a set of timelines.
pub fn descriptive_stats(timelines: &[Timeline]) -> AnnotationStats {
    let mut per_timeline: Vec<TimelineCounts> = timelines
        .iter()
        .map(|t| TimelineCounts {
            report_id: t.report_id.clone(),
            annotator: t.annotator.clone(),
            event_count: t.events.len(),
            distinct_time_count: distinct_time_count(&t.events),
        })
        .collect();
    per_timeline.sort_by(|a, b| {
        a.annotator
            .cmp(&b.annotator)
            .then(a.report_id.cmp(&b.report_id))
    });

    let mut groups: BTreeMap<String, Vec<&TimelineCounts>> = BTreeMap::new();
    for counts in &per_timeline {
        groups.entry(counts.annotator.clone()).or_default().push(counts);
    }
    let triple = |values: &[usize]| StatTriple {
        mean: values.iter().sum::<usize>() as f64 / values.len() as f64,
        min: *values.iter().min().unwrap(),
        max: *values.iter().max().unwrap(),
    };
    let per_annotator = groups
        .into_iter()
        .map(|(annotator, members)| {
            let event_counts: Vec<usize> = members.iter().map(|m| m.event_count).collect();
            let distinct_counts: Vec<usize> =
                members.iter().map(|m| m.distinct_time_count).collect();
            AnnotatorStats {
                annotator,
                timeline_count: members.len(),
                events: triple(&event_counts),
                distinct_times: triple(&distinct_counts),
            }
        })
        .collect();
    AnnotationStats {
        per_timeline,
        per_annotator,
    }
}

/// Write the per-annotator stats summary as a tab-separated table
/// (annotator, events mean/min/max, distinct-times mean/min/max).
pub fn write_stats_table(stats: &AnnotationStats, path: &Path) -> Result<(), TimelineError> {
    let mut out = String::from(
        "annotator\ttimelines\tevents_mean\tevents_min\tevents_max\tdistinct_times_mean\tdistinct_times_min\tdistinct_times_max\n",
    );
    for row in &stats.per_annotator {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            row.annotator,
            row.timeline_count,
            row.events.mean,
            row.events.min,
            row.events.max,
            row.distinct_times.mean,
            row.distinct_times.min,
            row.distinct_times.max,
        ));
    }
    crate::util::atomic_write(path, out.as_bytes()).map_err(|e| TimelineError::Io {
        path: path.display().to_string(),
        source: e,
    })
}
