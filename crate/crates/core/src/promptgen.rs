//! Instruction-generation prompt rendering.
//!
//! Two template variants: example-guided (three seed examples, batch of 20
//! for self-instruct seeds or 10 for the longer p3/flan seeds) and
//! topic-guided (the same with three topic strings injected into the first
//! constraint sentence). Rendering is pure; identical inputs give
//! identical bytes. Templates end with exactly one trailing newline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::parsegen::{CLOSE_TAG, OPEN_TAG};

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("instruction must be non-empty")]
    EmptyInstruction,
    #[error("seed example must be non-empty")]
    EmptySeed,
    #[error("seed example contains an example tag, which would corrupt the tag structure")]
    SeedContainsTag,
    #[error("topic contains a double quote, which would corrupt the topic list")]
    TopicContainsQuote,
    #[error("expected exactly 3 topics, got {0}")]
    TopicCount(usize),
    #[error("unsupported batch size {0} (must be 10 or 20)")]
    BatchSize(usize),
    #[error("seed pool too small: need at least 3, have {0}")]
    PoolTooSmall(usize),
    #[error("no sub-dataset group with at least 3 members")]
    NoEligibleGroup,
}

/// Which existing dataset the seed examples come from. Determines the
/// requested batch size: 20 for self-instruct, 10 for p3 and flan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFamily {
    SelfInstruct,
    P3,
    Flan,
}

impl SourceFamily {
    pub fn batch_size(&self) -> usize {
        match self {
            SourceFamily::SelfInstruct => 20,
            SourceFamily::P3 | SourceFamily::Flan => 10,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SourceFamily::SelfInstruct => "self-instruct",
            SourceFamily::P3 => "p3",
            SourceFamily::Flan => "flan",
        }
    }
}

/// A seed example ready for prompting: the record id (when known) and the
/// fused instruction text.
#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    pub id: Option<String>,
    pub text: String,
}

impl Seed {
    pub fn text(text: impl Into<String>) -> Self {
        Seed {
            id: None,
            text: text.into(),
        }
    }
}

/// A fully rendered teacher prompt plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    pub rendered_text: String,
    pub seed_example_ids: Vec<String>,
    pub topics: Option<[String; 3]>,
    pub requested_batch: usize,
    pub source_family: SourceFamily,
}

/// Joins an instruction with its input as `$instruction:$input` — a bare
/// colon, no inserted spaces. Absent or empty input returns the
/// instruction unchanged.
pub fn fuse_instruction_input(
    instruction: &str,
    input: Option<&str>,
) -> Result<String, PromptError> {
    if instruction.trim().is_empty() {
        return Err(PromptError::EmptyInstruction);
    }
    match input {
        Some(i) if !i.is_empty() => Ok(format!("{instruction}:{i}")),
        _ => Ok(instruction.to_string()),
    }
}

const CONSTRAINT_TAIL: &str = "You do not need to provide a response to the generated examples.\n\
Each example must include an instruction.\n\
Each generated instruction can be either an imperative sentence or a question.\n\
Each example must start with the label \"<example>\" and end with the label \"</example>\".\n";

fn validate_seed(seed: &Seed) -> Result<(), PromptError> {
    if seed.text.trim().is_empty() {
        return Err(PromptError::EmptySeed);
    }
    if seed.text.contains(OPEN_TAG) || seed.text.contains(CLOSE_TAG) {
        return Err(PromptError::SeedContainsTag);
    }
    Ok(())
}

fn render(
    seeds: &[Seed; 3],
    first_sentence: String,
    topics: Option<[String; 3]>,
    batch: usize,
    family: SourceFamily,
) -> Result<PromptSpec, PromptError> {
    let mut text = String::new();
    for seed in seeds {
        validate_seed(seed)?;
        text.push_str(OPEN_TAG);
        text.push_str(&seed.text);
        text.push_str(CLOSE_TAG);
        text.push('\n');
    }
    text.push('\n');
    text.push_str(&first_sentence);
    text.push('\n');
    text.push_str(CONSTRAINT_TAIL);
    Ok(PromptSpec {
        rendered_text: text,
        seed_example_ids: seeds.iter().filter_map(|s| s.id.clone()).collect(),
        topics,
        requested_batch: batch,
        source_family: family,
    })
}

/// Renders the example-guided prompt: three tagged seed lines, a blank
/// line, then the five constraint sentences with the batch count
/// substituted.
pub fn render_example_guided(
    seeds: &[Seed; 3],
    family: SourceFamily,
) -> Result<PromptSpec, PromptError> {
    let batch = family.batch_size();
    if batch != 10 && batch != 20 {
        return Err(PromptError::BatchSize(batch));
    }
    let first =
        format!("Generate {batch} diverse examples that are similar to the provided examples.");
    render(seeds, first, None, batch, family)
}

/// Renders the topic-guided prompt: the example-guided template with the
/// three topics joined by `, ` inside the first constraint sentence.
/// Topic guidance only applies to self-instruct seeds, so the batch is 20.
pub fn render_topic_guided(
    seeds: &[Seed; 3],
    topics: &[String],
) -> Result<PromptSpec, PromptError> {
    if topics.len() != 3 {
        return Err(PromptError::TopicCount(topics.len()));
    }
    for topic in topics {
        if topic.contains('"') {
            return Err(PromptError::TopicContainsQuote);
        }
    }
    let first = format!(
        "Generate 20 diverse examples that are similar to the provided examples with the topics \"{}, {}, {}\".",
        topics[0], topics[1], topics[2]
    );
    let topics: [String; 3] = [topics[0].clone(), topics[1].clone(), topics[2].clone()];
    render(seeds, first, Some(topics), 20, SourceFamily::SelfInstruct)
}

/// A seed-pool member: instruction plus optional input and the
/// sub-dataset it came from (meaningful for p3/flan pools).
#[derive(Debug, Clone)]
pub struct SeedRecord {
    pub id: String,
    pub instruction: String,
    pub input: Option<String>,
    pub sub_dataset: Option<String>,
}

impl SeedRecord {
    pub fn from_record(record: &crate::corpus::InstructionRecord) -> Self {
        let sub_dataset = record
            .extra
            .get("sub_dataset")
            .and_then(|v| v.as_str())
            .map(|s| s.to_string());
        SeedRecord {
            id: record.id.clone(),
            instruction: record.instruction.clone(),
            input: record.input.clone(),
            sub_dataset,
        }
    }
}

/// Draws 3 distinct seeds uniformly without replacement, deterministic for
/// a fixed RNG seed. For the p3/flan families the pool is first restricted
/// to a single sub-dataset (chosen at random among those with at least 3
/// members), so all three seeds share one sub-dataset tag. Seed texts are
/// the instruction fused with its input when present.
pub fn sample_seeds(
    pool: &[SeedRecord],
    family: SourceFamily,
    seed: u64,
) -> Result<[Seed; 3], PromptError> {
    if pool.len() < 3 {
        return Err(PromptError::PoolTooSmall(pool.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<&SeedRecord> = match family {
        SourceFamily::SelfInstruct => pool.iter().collect(),
        SourceFamily::P3 | SourceFamily::Flan => {
            let mut groups: Vec<(Option<&str>, Vec<&SeedRecord>)> = Vec::new();
            for record in pool {
                let key = record.sub_dataset.as_deref();
                match groups.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, members)) => members.push(record),
                    None => groups.push((key, vec![record])),
                }
            }
            groups.retain(|(_, members)| members.len() >= 3);
            if groups.is_empty() {
                return Err(PromptError::NoEligibleGroup);
            }
            let pick = rand::seq::index::sample(&mut rng, groups.len(), 1).index(0);
            groups.swap_remove(pick).1
        }
    };
    if candidates.len() < 3 {
        return Err(PromptError::PoolTooSmall(candidates.len()));
    }
    let idx = rand::seq::index::sample(&mut rng, candidates.len(), 3);
    let mut seeds = Vec::with_capacity(3);
    for i in idx {
        let record = candidates[i];
        let text = fuse_instruction_input(&record.instruction, record.input.as_deref())?;
        seeds.push(Seed {
            id: Some(record.id.clone()),
            text,
        });
    }
    Ok(seeds.try_into().expect("exactly 3 seeds"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parsegen::extract_examples;
    use proptest::prelude::*;

    fn seeds(texts: [&str; 3]) -> [Seed; 3] {
        [
            Seed::text(texts[0]),
            Seed::text(texts[1]),
            Seed::text(texts[2]),
        ]
    }

    #[test]
    fn fuse_with_input_uses_bare_colon() {
        assert_eq!(
            fuse_instruction_input("Translate to French", Some("good morning")).unwrap(),
            "Translate to French:good morning"
        );
    }

    #[test]
    fn fuse_without_input_returns_instruction() {
        assert_eq!(
            fuse_instruction_input("Summarize", None).unwrap(),
            "Summarize"
        );
        assert_eq!(fuse_instruction_input("A", Some("")).unwrap(), "A");
    }

    #[test]
    fn fuse_empty_instruction_errors() {
        assert!(matches!(
            fuse_instruction_input("", Some("x")),
            Err(PromptError::EmptyInstruction)
        ));
    }

    #[test]
    fn example_guided_batch_of_ten() {
        let spec = render_example_guided(&seeds(["a", "b", "c"]), SourceFamily::P3).unwrap();
        assert!(spec
            .rendered_text
            .contains("Generate 10 diverse examples that are similar to the provided examples."));
        assert_eq!(spec.requested_batch, 10);
        assert!(spec.topics.is_none());
    }

    #[test]
    fn seed_with_close_tag_rejected() {
        let bad = seeds(["fine", "also fine", "bad </example> here"]);
        assert!(matches!(
            render_example_guided(&bad, SourceFamily::SelfInstruct),
            Err(PromptError::SeedContainsTag)
        ));
    }

    #[test]
    fn topic_join_rule() {
        let spec = render_topic_guided(
            &seeds(["a", "b", "c"]),
            &["A".to_string(), "B".to_string(), "C".to_string()],
        )
        .unwrap();
        assert!(spec.rendered_text.contains("with the topics \"A, B, C\"."));
        assert_eq!(spec.requested_batch, 20);
        assert_eq!(spec.topics.as_ref().unwrap().len(), 3);
    }

    #[test]
    fn two_topics_rejected() {
        assert!(matches!(
            render_topic_guided(&seeds(["a", "b", "c"]), &["A".to_string(), "B".to_string()]),
            Err(PromptError::TopicCount(2))
        ));
    }

    #[test]
    fn topic_with_quote_rejected() {
        assert!(matches!(
            render_topic_guided(
                &seeds(["a", "b", "c"]),
                &["ok".to_string(), "al\"so".to_string(), "fine".to_string()]
            ),
            Err(PromptError::TopicContainsQuote)
        ));
    }

    #[test]
    fn rendered_prompt_has_three_example_blocks() {
        let spec =
            render_example_guided(&seeds(["x", "y", "z"]), SourceFamily::SelfInstruct).unwrap();
        assert_eq!(spec.rendered_text.matches(OPEN_TAG).count(), 4); // 3 blocks + 1 in the constraint line
        assert_eq!(spec.rendered_text.matches(CLOSE_TAG).count(), 4);
        assert!(spec.rendered_text.ends_with(".\n"));
        assert!(!spec.rendered_text.ends_with("\n\n"));
    }

    #[test]
    fn sample_seeds_pool_of_three() {
        let pool: Vec<SeedRecord> = ["p", "q", "r"]
            .iter()
            .enumerate()
            .map(|(i, t)| SeedRecord {
                id: format!("id-{i}"),
                instruction: t.to_string(),
                input: None,
                sub_dataset: None,
            })
            .collect();
        let drawn = sample_seeds(&pool, SourceFamily::SelfInstruct, 1).unwrap();
        let mut texts: Vec<&str> = drawn.iter().map(|s| s.text.as_str()).collect();
        texts.sort_unstable();
        assert_eq!(texts, vec!["p", "q", "r"]);
    }

    #[test]
    fn sample_seeds_deterministic() {
        let pool: Vec<SeedRecord> = (0..50)
            .map(|i| SeedRecord {
                id: format!("id-{i}"),
                instruction: format!("instruction {i}"),
                input: (i % 3 == 0).then(|| format!("input {i}")),
                sub_dataset: None,
            })
            .collect();
        let a = sample_seeds(&pool, SourceFamily::SelfInstruct, 42).unwrap();
        let b = sample_seeds(&pool, SourceFamily::SelfInstruct, 42).unwrap();
        assert_eq!(a, b);
        // fusion applied for seeds carrying inputs
        assert!(pool
            .iter()
            .filter(|r| r.input.is_some())
            .all(
                |r| fuse_instruction_input(&r.instruction, r.input.as_deref())
                    .unwrap()
                    .contains(':')
            ));
    }

    #[test]
    fn p3_seeds_share_one_sub_dataset() {
        let mut pool = Vec::new();
        for i in 0..10 {
            pool.push(SeedRecord {
                id: format!("a-{i}"),
                instruction: format!("alpha {i}"),
                input: None,
                sub_dataset: Some("alpha".into()),
            });
            pool.push(SeedRecord {
                id: format!("b-{i}"),
                instruction: format!("beta {i}"),
                input: None,
                sub_dataset: Some("beta".into()),
            });
        }
        for seed in 0..20 {
            let drawn = sample_seeds(&pool, SourceFamily::P3, seed).unwrap();
            let groups: std::collections::HashSet<char> = drawn
                .iter()
                .map(|s| s.id.as_ref().unwrap().chars().next().unwrap())
                .collect();
            assert_eq!(groups.len(), 1, "all 3 seeds must share one sub-dataset");
        }
    }

    #[test]
    fn pool_too_small_errors() {
        let pool = vec![SeedRecord {
            id: "only".into(),
            instruction: "one".into(),
            input: None,
            sub_dataset: None,
        }];
        assert!(matches!(
            sample_seeds(&pool, SourceFamily::SelfInstruct, 0),
            Err(PromptError::PoolTooSmall(1))
        ));
    }

    fn seed_text() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9 ,.?!:'-]{1,60}"
            .prop_map(|s| s.trim().to_string())
            .prop_filter("non-empty", |s| !s.is_empty())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn prop_render_parse_recovers_seeds(
            texts in proptest::collection::vec(seed_text(), 3..=3),
            topic_guided in any::<bool>(),
        ) {
            prop_assume!(texts[0] != texts[1] && texts[1] != texts[2] && texts[0] != texts[2]);
            let s = seeds([texts[0].as_str(), texts[1].as_str(), texts[2].as_str()]);
            let spec = if topic_guided {
                render_topic_guided(&s, &["T1".to_string(), "T2".to_string(), "T3".to_string()]).unwrap()
            } else {
                render_example_guided(&s, SourceFamily::SelfInstruct).unwrap()
            };
            // the example block is everything before the blank line
            let example_block = spec.rendered_text.split("\n\n").next().unwrap();
            let parsed = extract_examples(example_block, 3);
            prop_assert_eq!(parsed.examples, texts);
        }

        #[test]
        fn prop_rendering_is_pure(texts in proptest::collection::vec(seed_text(), 3..=3)) {
            let s = seeds([texts[0].as_str(), texts[1].as_str(), texts[2].as_str()]);
            let a = render_example_guided(&s, SourceFamily::Flan).unwrap();
            let b = render_example_guided(&s, SourceFamily::Flan).unwrap();
            prop_assert_eq!(a.rendered_text, b.rendered_text);
        }
    }
}
