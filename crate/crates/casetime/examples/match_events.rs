//! Align two event lists: distance matrices under both metrics, the
//! recursive best match, and the audit trail.
//!
//! ```bash
//! cargo run -p casetime --example match_events
//! ```

use casetime::embed::TrigramEmbedder;
use casetime::matching::{
    audit_rows, build_distance_matrix, export_match_candidates, levenshtein,
    recursive_best_match_traced, DistanceMetric, DistanceWindow,
};
use casetime::timeline::EventRecord;

fn events(rows: &[(&str, f64)]) -> Vec<EventRecord> {
    rows.iter()
        .enumerate()
        .map(|(i, (text, time_hours))| EventRecord {
            text: text.to_string(),
            time_hours: *time_hours,
            source_line: i + 1,
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let manual = events(&[
        ("fever", -72.0),
        ("rash", -72.0),
        ("admitted to the hospital", 0.0),
        ("discharged", 24.0),
    ]);
    let model = events(&[
        ("fever", -72.0),
        ("rash persisted", 0.0),
        ("admitted to the hospital", 0.0),
        ("discharged home", 36.0),
        ("eosinophilia", 0.0),
    ]);

    println!("levenshtein(\"fever\", \"rash\") = {}", levenshtein("fever", "rash"));

    let matrix = build_distance_matrix(
        &manual,
        &model,
        DistanceMetric::CosineEmbedding,
        Some(&TrigramEmbedder),
    )?;
    println!("\ncosine distance matrix ({}x{}):", matrix.rows, matrix.cols);
    for (i, event) in manual.iter().enumerate() {
        let row: Vec<String> = (0..matrix.cols).map(|j| format!("{:.3}", matrix.get(i, j))).collect();
        println!("  {:<26} {}", event.text, row.join("  "));
    }

    let threshold = 0.35; // generous for the trigram fallback
    let (match_set, trace) = recursive_best_match_traced(&matrix, threshold);
    println!("\nmatches at threshold {threshold}:");
    for pair in &match_set.pairs {
        println!(
            "  {} <-> {} (distance {:.3})",
            manual[pair.index_a].text, model[pair.index_b].text, pair.distance
        );
    }
    println!("unmatched manual events: {:?}", match_set.unmatched_a);
    println!("unmatched model events:  {:?}", match_set.unmatched_b);

    println!("\naudit trail:");
    for row in audit_rows("demo", &manual, &model, &trace) {
        println!(
            "  round {} {} -> {} d={:.3} accepted={}",
            row.recursion_depth, row.text_a, row.text_b, row.distance, row.accepted
        );
    }

    let window = DistanceWindow { lo: 0.0, hi: 0.5 };
    println!("\nreview candidates in {:?}:", window);
    for c in export_match_candidates(&manual, &model, &matrix, window) {
        println!("  {:.4}  {}  |  {}", c.distance, c.text_a, c.text_b);
    }
    Ok(())
}
