//! Extraction of `<example>`-delimited instructions from raw teacher output.
//!
//! Parsing never fails: damaged spans are reported in the batch instead of
//! thrown, and callers decide whether zero examples is fatal. A missing
//! close tag loses only its own span — scanning restarts at the next open
//! tag, so subsequent well-formed examples survive.

pub const OPEN_TAG: &str = "<example>";
pub const CLOSE_TAG: &str = "</example>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// Open tag with no matching close tag before the next open tag (or
    /// end of input).
    Unclosed,
    /// Tag pair whose content trims to nothing.
    Empty,
    /// Exact duplicate (after trim) of an example already in this batch.
    Duplicate,
    /// Well-formed example beyond the expected batch size.
    Overflow,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::Unclosed => "unclosed",
            RejectReason::Empty => "empty",
            RejectReason::Duplicate => "duplicate",
            RejectReason::Overflow => "overflow",
        }
    }
}

/// The outcome of parsing one teacher response.
#[derive(Debug, Clone, Default)]
pub struct ParsedBatch {
    /// Trimmed, non-empty, pairwise-distinct example texts, in order of
    /// appearance, capped at the expected batch size.
    pub examples: Vec<String>,
    /// How many examples short of the expected count the batch came up.
    pub shortfall: usize,
    /// Spans that were dropped, with the raw fragment for audit.
    pub rejected: Vec<(RejectReason, String)>,
}

/// Scans `raw` left to right for `<example>`...`</example>` pairs. Content
/// may span lines. Text outside tag pairs is ignored.
pub fn extract_examples(raw: &str, expected: usize) -> ParsedBatch {
    let mut batch = ParsedBatch::default();
    let mut cursor = 0usize;
    while let Some(rel_open) = raw[cursor..].find(OPEN_TAG) {
        let open_at = cursor + rel_open;
        let content_start = open_at + OPEN_TAG.len();
        let next_close = raw[content_start..].find(CLOSE_TAG);
        let next_open = raw[content_start..].find(OPEN_TAG);
        match (next_close, next_open) {
            (None, None) => {
                batch
                    .rejected
                    .push((RejectReason::Unclosed, raw[open_at..].to_string()));
                break;
            }
            (None, Some(rel)) => {
                let inner_open = content_start + rel;
                batch
                    .rejected
                    .push((RejectReason::Unclosed, raw[open_at..inner_open].to_string()));
                cursor = inner_open;
            }
            (Some(rel_close), inner) => {
                let close_at = content_start + rel_close;
                if let Some(rel) = inner {
                    let inner_open = content_start + rel;
                    if inner_open < close_at {
                        // this open tag never closed; the next one might
                        batch
                            .rejected
                            .push((RejectReason::Unclosed, raw[open_at..inner_open].to_string()));
                        cursor = inner_open;
                        continue;
                    }
                }
                let content = raw[content_start..close_at].trim();
                if content.is_empty() {
                    batch.rejected.push((
                        RejectReason::Empty,
                        raw[open_at..close_at + CLOSE_TAG.len()].to_string(),
                    ));
                } else if batch.examples.iter().any(|e| e == content) {
                    batch
                        .rejected
                        .push((RejectReason::Duplicate, content.to_string()));
                } else if batch.examples.len() >= expected {
                    batch
                        .rejected
                        .push((RejectReason::Overflow, content.to_string()));
                } else {
                    batch.examples.push(content.to_string());
                }
                cursor = close_at + CLOSE_TAG.len();
            }
        }
    }
    batch.shortfall = expected.saturating_sub(batch.examples.len());
    batch
}

/// Renders texts as one tagged line each — the inverse of
/// [`extract_examples`] for tag-free content.
pub fn render_tagged(texts: &[String]) -> String {
    let mut out = String::new();
    for text in texts {
        out.push_str(OPEN_TAG);
        out.push_str(text);
        out.push_str(CLOSE_TAG);
        out.push('\n');
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum ValidateError {
    #[error("example exceeds length cap ({len} > {cap} chars)")]
    TooLong { len: usize, cap: usize },
    #[error("example contains a nested example tag")]
    NestedTag,
    #[error("example is empty after trim")]
    Empty,
}

pub const DEFAULT_LENGTH_CAP: usize = 2048;

/// Trims and validates a single extracted example: rejects texts over the
/// length cap (in chars) or containing example tags.
pub fn validate_example(text: &str, length_cap: usize) -> Result<&str, ValidateError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(ValidateError::Empty);
    }
    if trimmed.contains(OPEN_TAG) || trimmed.contains(CLOSE_TAG) {
        return Err(ValidateError::NestedTag);
    }
    let len = trimmed.chars().count();
    if len > length_cap {
        return Err(ValidateError::TooLong {
            len,
            cap: length_cap,
        });
    }
    Ok(trimmed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_well_formed_examples() {
        let batch = extract_examples("<example>A</example>\n<example>B</example>", 2);
        assert_eq!(batch.examples, vec!["A", "B"]);
        assert_eq!(batch.shortfall, 0);
        assert!(batch.rejected.is_empty());
    }

    #[test]
    fn empty_example_rejected_and_counted() {
        let batch = extract_examples("<example></example><example>A</example>", 2);
        assert_eq!(batch.examples, vec!["A"]);
        assert_eq!(batch.shortfall, 1);
        assert_eq!(batch.rejected.len(), 1);
        assert_eq!(batch.rejected[0].0, RejectReason::Empty);
    }

    #[test]
    fn duplicate_within_batch_dropped() {
        let batch = extract_examples(
            "<example>same</example><example>same</example><example>other</example>",
            3,
        );
        assert_eq!(batch.examples, vec!["same", "other"]);
        assert_eq!(batch.shortfall, 1);
        assert_eq!(batch.rejected[0].0, RejectReason::Duplicate);
    }

    #[test]
    fn unclosed_trailing_tag_is_one_rejected_span() {
        let batch = extract_examples("<example>ok</example><example>dangling...", 2);
        assert_eq!(batch.examples, vec!["ok"]);
        assert_eq!(batch.shortfall, 1);
        assert_eq!(batch.rejected.len(), 1);
        assert_eq!(batch.rejected[0].0, RejectReason::Unclosed);
        assert!(batch.rejected[0].1.contains("dangling"));
    }

    #[test]
    fn missing_close_does_not_swallow_next_example() {
        let batch = extract_examples("<example>damaged <example>survivor</example>", 2);
        assert_eq!(batch.examples, vec!["survivor"]);
        assert_eq!(batch.rejected.len(), 1);
        assert_eq!(batch.rejected[0].0, RejectReason::Unclosed);
        assert!(batch.rejected[0].1.contains("damaged"));
    }

    #[test]
    fn noise_outside_tags_ignored() {
        let batch = extract_examples(
            "Sure! Here are your examples:\n<example>A</example>\nHope that helps </example> bye",
            1,
        );
        assert_eq!(batch.examples, vec!["A"]);
        assert!(batch.rejected.is_empty());
    }

    #[test]
    fn overflow_beyond_expected_recorded() {
        let raw = render_tagged(&["a".into(), "b".into(), "c".into()]);
        let batch = extract_examples(&raw, 2);
        assert_eq!(batch.examples, vec!["a", "b"]);
        assert_eq!(batch.shortfall, 0);
        assert_eq!(batch.rejected.len(), 1);
        assert_eq!(batch.rejected[0].0, RejectReason::Overflow);
        assert_eq!(batch.rejected[0].1, "c");
    }

    #[test]
    fn multiline_content_preserved() {
        let batch = extract_examples("<example>line one\nline two</example>", 1);
        assert_eq!(batch.examples, vec!["line one\nline two"]);
    }

    #[test]
    fn validate_example_rules() {
        assert_eq!(validate_example(" hi ", DEFAULT_LENGTH_CAP).unwrap(), "hi");
        assert!(matches!(
            validate_example("evil <example> inside", DEFAULT_LENGTH_CAP),
            Err(ValidateError::NestedTag)
        ));
        let long = "x".repeat(3000);
        assert!(matches!(
            validate_example(&long, 2048),
            Err(ValidateError::TooLong {
                len: 3000,
                cap: 2048
            })
        ));
        assert!(matches!(
            validate_example("  ", 10),
            Err(ValidateError::Empty)
        ));
    }

    fn tag_free_text() -> impl Strategy<Value = String> {
        // printable, no tag labels, trimmed and non-empty
        "[a-zA-Z0-9 ,.?!:'\"-]{1,60}"
            .prop_map(|s| s.trim().to_string())
            .prop_filter("non-empty, tag-free", |s| {
                !s.is_empty() && !s.contains(OPEN_TAG) && !s.contains(CLOSE_TAG)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn prop_render_parse_round_trip(texts in proptest::collection::vec(tag_free_text(), 1..25)) {
            // distinct after trim, as the parser drops within-batch duplicates
            let mut seen = std::collections::HashSet::new();
            let texts: Vec<String> = texts.into_iter().filter(|t| seen.insert(t.clone())).collect();
            let raw = render_tagged(&texts);
            let batch = extract_examples(&raw, texts.len());
            prop_assert_eq!(batch.examples, texts);
            prop_assert_eq!(batch.shortfall, 0usize);
            prop_assert!(batch.rejected.is_empty());
        }

        #[test]
        fn prop_prefix_suffix_noise_invariant(
            texts in proptest::collection::vec(tag_free_text(), 1..10),
            prefix in "[a-zA-Z0-9 \n]{0,40}",
            suffix in "[a-zA-Z0-9 \n]{0,40}",
        ) {
            let mut seen = std::collections::HashSet::new();
            let texts: Vec<String> = texts.into_iter().filter(|t| seen.insert(t.clone())).collect();
            let plain = extract_examples(&render_tagged(&texts), texts.len());
            let noisy_raw = format!("{prefix}{}{suffix}", render_tagged(&texts));
            let noisy = extract_examples(&noisy_raw, texts.len());
            prop_assert_eq!(plain.examples, noisy.examples);
        }
    }
}
