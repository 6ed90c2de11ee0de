//! Few-shot prompt used to ask an auxiliary model for the exact answer.

pub const TEMPLATE_ID: &str = "exact-answer-v1";

pub const TEMPLATE: &str = include_str!("../../assets/exact_answer_prompt_v1.txt");

/// Sentinel the extractor emits when the long answer does not answer.
pub const NO_ANSWER: &str = "NO ANSWER";

/// Answered exemplar.
const QUESTION_1: &str = "What is the capital of France?";
const LONG_ANSWER_1: &str = "The capital of France is Paris, which is also its largest city.";
const SHORT_ANSWER_1: &str = "Paris";

/// Unanswered exemplar.
const QUESTION_2: &str = "Who wrote the novel Moby-Dick?";
const LONG_ANSWER_2: &str = "Many novels were written in the nineteenth century, and it is hard to say much about them.";

/// Fills `{name}` slots in a single pass, so slot-like text inside the
/// substituted values is left alone.
fn render(template: &str, lookup: impl Fn(&str) -> Option<String>) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}').and_then(|close| lookup(&after[..close]).map(|v| (close, v))) {
            Some((close, value)) => {
                out.push_str(&value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn build_prompt(question: &str, long_answer: &str) -> String {
    render(TEMPLATE, |slot| {
        let v = match slot {
            "question_1" => QUESTION_1,
            "long_answer_1" => LONG_ANSWER_1,
            "short_answer_1" => SHORT_ANSWER_1,
            "question_2" => QUESTION_2,
            "long_answer_2" => LONG_ANSWER_2,
            "question" => question,
            "long_answer" => long_answer,
            _ => return None,
        };
        Some(v.to_string())
    })
}
