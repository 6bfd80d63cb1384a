//! Score one model timeline against a reference: match rate, concordance
//! under both tie conventions, absolute errors, subgroups, and the JSON
//! report document.
//!
//! ```bash
//! cargo run -p casetime --example evaluate_timelines
//! ```

use casetime::embed::{TrigramEmbedder, TRIGRAM_BACKEND_TAG};
use casetime::report::{aggregate, evaluate_pair, EvalConfig, EvalMode};
use casetime::timeline::{EventRecord, Timeline};

fn timeline(annotator: &str, rows: &[(&str, f64)]) -> Timeline {
    Timeline {
        report_id: "PMC000301".into(),
        annotator: annotator.into(),
        events: rows
            .iter()
            .enumerate()
            .map(|(i, (text, time_hours))| EventRecord {
                text: text.to_string(),
                time_hours: *time_hours,
                source_line: i + 1,
            })
            .collect(),
        diagnostics: Vec::new(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reference = timeline(
        "manual",
        &[
            ("seizure", -8760.0),
            ("admitted to the hospital", 0.0),
            ("mri scan", 24.0),
            ("discharged", 336.0),
        ],
    );
    let candidate = timeline(
        "gpt-4",
        &[
            ("seizure", -8000.0),
            ("admitted to the hospital", 0.0),
            ("mri scan", 0.0),
            ("discharged", 336.0),
            ("headache", -8000.0),
        ],
    );

    let config = EvalConfig::cosine(TRIGRAM_BACKEND_TAG);
    let report = evaluate_pair(
        &reference,
        &candidate,
        EvalMode::ReferenceVsCandidate,
        &config,
        Some(&TrigramEmbedder),
    )?;

    println!(
        "matched {}/{} reference events (match rate {:.2})",
        report.n_matched, report.n_events_a, report.match_rate
    );
    println!(
        "concordance: harrell {:?}, lenient {:?}",
        report.concordance_harrell, report.concordance_lenient
    );
    if let Some(errors) = &report.error_summary {
        println!(
            "errors: mean {:.1}h, median {:.1}h, exact {:.0}%, within a day {:.0}%",
            errors.mean,
            errors.median,
            errors.fraction_exact * 100.0,
            errors.fraction_within_24h * 100.0,
        );
    }
    println!("\nsubgroups by |reference time|:");
    for group in &report.subgroup_summaries {
        println!(
            "  {:<16} count {} mean error {:?}",
            group.bucket.label(),
            group.count,
            group.mean_error
        );
    }

    let summary = aggregate(std::slice::from_ref(&report))?;
    println!("\ncorpus summary document:\n{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
