//! Prompt rendering and token budgeting for the annotation protocol.
//!
//! The conversation state is a [`PromptBundle`]: the fixed base prompt, the
//! case text, and optionally the prior model response plus a feedback probe.
//! Rendering follows a fixed template, byte for byte:
//!
//! ```text
//! {base_prompt}\n\nOriginal Text: {original_text}
//! {base_prompt}\n\nOriginal Text: {original_text}\n\nUpdates: {response} {feedback_prompt}
//! ```
//!
//! Token limits are enforced by right-truncating `original_text` only; the
//! fixed parts are never cut.

use thiserror::Error;

/// The packaged base prompt: task instructions, one worked case example with
/// its 16-row bar-separated output, and the output-format rules.
pub fn base_prompt() -> &'static str {
    include_str!("resources/base_prompt.txt").trim_end()
}

/// Feedback probe appended after the prior response in a feedback round.
pub const DEFAULT_FEEDBACK_PROMPT: &str = "are you sure?";

/// The 16-row example output block inside [`base_prompt`], from
/// `18 years old | 0` through `discharged | 24`. Handy as a deterministic
/// fixture response.
pub fn exemplar_output_block() -> &'static str {
    let prompt = base_prompt();
    let start = prompt
        .find("18 years old | 0")
        .expect("exemplar block present in base prompt");
    let end_marker = "discharged | 24";
    let end = prompt
        .rfind(end_marker)
        .expect("exemplar block present in base prompt")
        + end_marker.len();
    &prompt[start..end]
}

/// Rendered LLM conversation state.
///
/// `response` and `feedback_prompt` must be both present (a feedback round)
/// or both absent (the opening round).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub base_prompt: String,
    pub original_text: String,
    pub response: Option<String>,
    pub feedback_prompt: Option<String>,
}

impl PromptBundle {
    pub fn new(base_prompt: impl Into<String>, original_text: impl Into<String>) -> Self {
        PromptBundle {
            base_prompt: base_prompt.into(),
            original_text: original_text.into(),
            response: None,
            feedback_prompt: None,
        }
    }

    /// Turn the bundle into a feedback round carrying the prior `response`
    /// and the default probe.
    pub fn with_feedback(mut self, response: impl Into<String>) -> Self {
        self.response = Some(response.into());
        self.feedback_prompt = Some(DEFAULT_FEEDBACK_PROMPT.to_string());
        self
    }

    pub fn with_feedback_prompt(mut self, response: impl Into<String>, probe: impl Into<String>) -> Self {
        self.response = Some(response.into());
        self.feedback_prompt = Some(probe.into());
        self
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt bundle field `{0}` is missing or empty")]
    MissingField(&'static str),
    #[error(
        "fixed prompt parts need {fixed_tokens} tokens plus {reserve} reserved for the response, over the {token_limit}-token limit"
    )]
    BudgetTooSmall {
        fixed_tokens: usize,
        reserve: usize,
        token_limit: usize,
    },
}

/// Render the template exactly, with no extra whitespace.
pub fn render_prompt(bundle: &PromptBundle) -> Result<String, PromptError> {
    if bundle.base_prompt.is_empty() {
        return Err(PromptError::MissingField("base_prompt"));
    }
    if bundle.original_text.is_empty() {
        return Err(PromptError::MissingField("original_text"));
    }
    match (&bundle.response, &bundle.feedback_prompt) {
        (None, None) | (Some(_), Some(_)) => {}
        (Some(_), None) => return Err(PromptError::MissingField("feedback_prompt")),
        (None, Some(_)) => return Err(PromptError::MissingField("response")),
    }
    Ok(render_unchecked(bundle, &bundle.original_text))
}

fn render_unchecked(bundle: &PromptBundle, original_text: &str) -> String {
    match (&bundle.response, &bundle.feedback_prompt) {
        (Some(response), Some(feedback)) => format!(
            "{}\n\nOriginal Text: {}\n\nUpdates: {} {}",
            bundle.base_prompt, original_text, response, feedback
        ),
        _ => format!("{}\n\nOriginal Text: {}", bundle.base_prompt, original_text),
    }
}

/// Maps text to an estimated token count. Estimates must be monotone in the
/// text length for truncation to be well defined.
pub trait TokenEstimator: Sync {
    fn estimate_tokens(&self, text: &str) -> usize;
    /// Short tag recorded in run metadata.
    fn name(&self) -> &'static str;
}

/// Default heuristic: `ceil(char_count / chars_per_token)`. Exact
/// tokenization differs per model; four characters per token is a workable
/// cross-model approximation.
#[derive(Debug, Clone, Copy)]
pub struct CharsPerToken {
    pub chars_per_token: usize,
}

impl Default for CharsPerToken {
    fn default() -> Self {
        CharsPerToken { chars_per_token: 4 }
    }
}

impl TokenEstimator for CharsPerToken {
    fn estimate_tokens(&self, text: &str) -> usize {
        text.chars().count().div_ceil(self.chars_per_token)
    }

    fn name(&self) -> &'static str {
        "chars/4"
    }
}

/// Fraction of the token limit reserved for the model's answer.
pub const RESPONSE_RESERVE_DENOMINATOR: usize = 4;

/// Right-truncate `original_text` so the rendered prompt plus a 25% response
/// reserve fits `token_limit`. Only the case text is ever cut; the base
/// prompt and any feedback fields are kept whole.
pub fn truncate_to_budget(
    bundle: &PromptBundle,
    token_limit: usize,
    estimator: &dyn TokenEstimator,
) -> Result<PromptBundle, PromptError> {
    truncate_with_reserve(
        bundle,
        token_limit,
        token_limit / RESPONSE_RESERVE_DENOMINATOR,
        estimator,
    )
}

/// As [`truncate_to_budget`] with an explicit response reserve.
pub fn truncate_with_reserve(
    bundle: &PromptBundle,
    token_limit: usize,
    reserve: usize,
    estimator: &dyn TokenEstimator,
) -> Result<PromptBundle, PromptError> {
    let budget = token_limit.saturating_sub(reserve);
    let fits = |text: &str| estimator.estimate_tokens(&render_unchecked(bundle, text)) <= budget;

    if fits(&bundle.original_text) {
        return Ok(bundle.clone());
    }
    if !fits("") {
        return Err(PromptError::BudgetTooSmall {
            fixed_tokens: estimator.estimate_tokens(&render_unchecked(bundle, "")),
            reserve,
            token_limit,
        });
    }

    // Longest fitting prefix by binary search over char boundaries;
    // boundaries[k] is the byte length of the k-char prefix.
    let mut boundaries: Vec<usize> = bundle
        .original_text
        .char_indices()
        .map(|(byte, _)| byte)
        .collect();
    boundaries.push(bundle.original_text.len());
    let mut lo = 0usize; // fits
    let mut hi = boundaries.len() - 1; // does not fit (checked above)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(&bundle.original_text[..boundaries[mid]]) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut truncated = bundle.clone();
    truncated.original_text = bundle.original_text[..boundaries[lo]].to_string();
    Ok(truncated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn renders_no_feedback_template_byte_exactly() {
        let bundle = PromptBundle::new("B", "T");
        assert_eq!(render_prompt(&bundle).unwrap(), "B\n\nOriginal Text: T");
    }

    #[test]
    fn renders_feedback_template_byte_exactly() {
        let bundle = PromptBundle::new("B", "T").with_feedback("R");
        assert_eq!(
            render_prompt(&bundle).unwrap(),
            "B\n\nOriginal Text: T\n\nUpdates: R are you sure?"
        );
    }

    #[test]
    fn half_filled_feedback_round_is_rejected() {
        let mut bundle = PromptBundle::new("B", "T");
        bundle.response = Some("R".into());
        assert!(matches!(
            render_prompt(&bundle),
            Err(PromptError::MissingField("feedback_prompt"))
        ));
        let mut bundle = PromptBundle::new("B", "T");
        bundle.feedback_prompt = Some("are you sure?".into());
        assert!(matches!(
            render_prompt(&bundle),
            Err(PromptError::MissingField("response"))
        ));
    }

    #[test]
    fn empty_fixed_fields_are_rejected() {
        assert!(render_prompt(&PromptBundle::new("", "T")).is_err());
        assert!(render_prompt(&PromptBundle::new("B", "")).is_err());
    }

    #[test]
    fn base_prompt_has_expected_shape() {
        let p = base_prompt();
        assert!(p.starts_with("You are a physician."));
        assert!(p.ends_with("Skip the title of the table."));
        assert!(p.contains("separated by a pipe '|'"));
        assert!(!p.ends_with('\n'));
    }

    #[test]
    fn exemplar_block_parses_to_sixteen_events() {
        let block = exemplar_output_block();
        let t = crate::timeline::parse_llm_timeline(block, "exemplar", "fixture").unwrap();
        assert_eq!(t.events.len(), 16);
    }

    #[test]
    fn within_budget_is_a_no_op() {
        let bundle = PromptBundle::new("base", "short text");
        let out = truncate_to_budget(&bundle, 1000, &CharsPerToken::default()).unwrap();
        assert_eq!(out, bundle);
    }

    #[test]
    fn oversized_text_becomes_proper_prefix_within_budget() {
        let body = "abcd".repeat(4000);
        let bundle = PromptBundle::new("base", body.clone());
        let estimator = CharsPerToken::default();
        let limit = 2000;
        let out = truncate_to_budget(&bundle, limit, &estimator).unwrap();
        assert!(out.original_text.len() < body.len());
        assert!(body.starts_with(&out.original_text));
        let rendered = render_prompt(&out).unwrap();
        assert!(estimator.estimate_tokens(&rendered) + limit / 4 <= limit);
        // Longest such prefix: one more char must overflow.
        let over = format!("{}{}", out.original_text, "x");
        let mut bigger = bundle.clone();
        bigger.original_text = over;
        let rendered_over = render_unchecked(&bigger, &bigger.original_text);
        assert!(estimator.estimate_tokens(&rendered_over) + limit / 4 > limit);
    }

    #[test]
    fn budget_smaller_than_fixed_parts_errors() {
        let bundle = PromptBundle::new("a very long base prompt that does not fit", "text");
        assert!(matches!(
            truncate_to_budget(&bundle, 8, &CharsPerToken::default()),
            Err(PromptError::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn feedback_fields_are_never_truncated() {
        let bundle = PromptBundle::new("base", "x".repeat(10_000)).with_feedback("prior response");
        let out = truncate_to_budget(&bundle, 100, &CharsPerToken::default()).unwrap();
        assert_eq!(out.response.as_deref(), Some("prior response"));
        assert_eq!(out.feedback_prompt.as_deref(), Some(DEFAULT_FEEDBACK_PROMPT));
        assert!(out.original_text.len() < 10_000);
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        let bundle = PromptBundle::new("b", "é".repeat(400));
        let out = truncate_to_budget(&bundle, 80, &CharsPerToken::default()).unwrap();
        assert!(bundle.original_text.starts_with(&out.original_text));
        assert!(!out.original_text.is_empty());
    }

    proptest! {
        #[test]
        fn truncated_text_is_always_a_prefix(
            body in "[a-z ]{0,500}",
            limit in 20usize..200,
        ) {
            let bundle = PromptBundle::new("base prompt", body.clone());
            if let Ok(out) = truncate_to_budget(&bundle, limit, &CharsPerToken::default()) {
                prop_assert!(body.starts_with(&out.original_text));
                prop_assert_eq!(out.base_prompt, bundle.base_prompt);
            }
        }

        #[test]
        fn render_is_injective_in_original_text(a in ".{1,40}", b in ".{1,40}") {
            let ra = render_prompt(&PromptBundle::new("B", a.clone())).unwrap();
            let rb = render_prompt(&PromptBundle::new("B", b.clone())).unwrap();
            prop_assert_eq!(a == b, ra == rb);
        }
    }
}
