//! Render the annotation prompt, with and without a feedback round, and
//! show token-budget truncation of the case text.
//!
//! ```bash
//! cargo run -p casetime --example render_prompt
//! ```

use casetime::prompt::{
    base_prompt, render_prompt, truncate_to_budget, CharsPerToken, PromptBundle, TokenEstimator,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let case_text = "A 55-year-old man was admitted with three days of fever.";

    let opening = PromptBundle::new(base_prompt(), case_text);
    let rendered = render_prompt(&opening)?;
    println!(
        "opening prompt: {} chars, ends with:\n...{}\n",
        rendered.chars().count(),
        &rendered[rendered.len().saturating_sub(120)..]
    );

    let feedback = opening.clone().with_feedback("fever | -72\nadmitted to the hospital | 0");
    let rendered = render_prompt(&feedback)?;
    println!(
        "feedback prompt ends with:\n...{}\n",
        &rendered[rendered.len().saturating_sub(120)..]
    );

    // An oversized body is right-truncated until the rendered prompt plus a
    // 25% response reserve fits the budget.
    let estimator = CharsPerToken::default();
    let huge = PromptBundle::new(base_prompt(), case_text.repeat(500));
    let budget = 1500;
    let truncated = truncate_to_budget(&huge, budget, &estimator)?;
    println!(
        "budget {budget} tokens: case text cut from {} to {} chars",
        huge.original_text.chars().count(),
        truncated.original_text.chars().count(),
    );
    let estimate = estimator.estimate_tokens(&render_prompt(&truncated)?);
    println!("rendered estimate {estimate} + reserve {} <= {budget}", budget / 4);
    Ok(())
}
