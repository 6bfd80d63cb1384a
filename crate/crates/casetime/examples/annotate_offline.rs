//! Run the annotate/feedback protocol against a fixture transport: no
//! network, fully deterministic.
//!
//! ```bash
//! cargo run -p casetime --example annotate_offline
//! ```

use casetime::chat::{annotate_report, FixtureTransport, LlmConfig};
use casetime::corpus::CaseReport;
use casetime::prompt::exemplar_output_block;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let report = CaseReport::new(
        "PMC000201",
        "Case report: an 18-year-old male admitted with fever and rash.",
        "inline",
    );

    // Single round: the canned response is the worked example from the base
    // prompt, which parses to 16 events.
    let transport =
        FixtureTransport::default().with_response("PMC000201", exemplar_output_block());
    let outcome = annotate_report(&report, &LlmConfig::gpt4(), &transport)?;
    println!(
        "single round: {} events from {} exchange(s), annotator `{}`",
        outcome.timeline.events.len(),
        outcome.exchanges.len(),
        outcome.timeline.annotator,
    );
    for event in outcome.timeline.events.iter().take(5) {
        println!("  {:>6}h  {}", event.time_hours, event.text);
    }

    // Two feedback rounds: each round gets its own canned response and the
    // prior answer is embedded under `Updates:`.
    let transport = FixtureTransport::default()
        .with_response("PMC000201.r0", "fever | -72\nrash | -72")
        .with_response("PMC000201.r1", "fever | -72\nrash | -72\nadmitted to the hospital | 0")
        .with_response(
            "PMC000201.r2",
            "fever | -72\nrash | -72\nadmitted to the hospital | 0\ndischarged | 24",
        );
    let config = LlmConfig {
        feedback_rounds: 2,
        ..LlmConfig::gpt4()
    };
    let outcome = annotate_report(&report, &config, &transport)?;
    println!(
        "\nfeedback strategy: {} exchanges, final timeline has {} events (annotator `{}`)",
        outcome.exchanges.len(),
        outcome.timeline.events.len(),
        outcome.timeline.annotator,
    );
    let second_round = &outcome.exchanges[1].request_text;
    let updates = second_round.find("Updates:").unwrap();
    println!("round 1 request tail: {}", &second_round[updates..updates + 40]);
    Ok(())
}
