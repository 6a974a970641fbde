//! Prompt rendering for chat-formatted models.
//!
//! A question becomes a single user turn followed by an opened assistant
//! turn. In prefill mode the template text is written directly after the
//! assistant opening, so the model continues from it; the assistant turn is
//! never closed.

use serde::{Deserialize, Serialize};

use crate::types::{ChatFormat, InvariantError, Label, PrefillTemplate, Question, RenderMode, RenderedPrompt};

pub const DEFAULT_INSTRUCTION: &str = "The following is a multiple-choice question. Choose the correct option.";
pub const DEFAULT_ANSWER_CUE: &str = "Answer:";
pub const DEFAULT_OPTION_LINE_FORMAT: &str = "{label}) {text}";
pub const DEFAULT_TEMPLATE_ID: &str = "t07";

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("unknown render mode {0:?}")]
    UnknownMode(String),
    #[error("prefill mode requires a prefill template")]
    MissingPrefill,
    #[error("mode {0} does not take a prefill template")]
    UnexpectedPrefill(RenderMode),
    #[error("option line format must contain {{label}} and {{text}}: {0:?}")]
    BadOptionFormat(String),
    #[error(transparent)]
    Invariant(#[from] InvariantError),
}

/// How the user turn is laid out: instruction, stem, one line per option,
/// then the answer cue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptLayout {
    pub instruction: String,
    /// Pattern for each option line; `{label}` and `{text}` are substituted.
    pub option_line_format: String,
    pub answer_cue: String,
}

impl Default for PromptLayout {
    fn default() -> Self {
        Self {
            instruction: DEFAULT_INSTRUCTION.to_owned(),
            option_line_format: DEFAULT_OPTION_LINE_FORMAT.to_owned(),
            answer_cue: DEFAULT_ANSWER_CUE.to_owned(),
        }
    }
}

impl PromptLayout {
    fn option_line(&self, label: Label, text: &str) -> String {
        let mut buf = [0u8; 4];
        self.option_line_format
            .replace("{label}", label.as_char().encode_utf8(&mut buf))
            .replace("{text}", text)
    }

    /// Lines "X) text", one per option in label order.
    pub fn option_lines(&self, q: &Question) -> Vec<String> {
        q.options().iter().map(|o| self.option_line(o.label, &o.text)).collect()
    }

    fn validate(&self) -> Result<(), RenderError> {
        if self.option_line_format.contains("{label}") && self.option_line_format.contains("{text}") {
            Ok(())
        } else {
            Err(RenderError::BadOptionFormat(self.option_line_format.clone()))
        }
    }
}

/// "A, B, C, D" for a question's labels.
pub fn options_list(labels: &[Label]) -> String {
    labels.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(", ")
}

/// User-turn content for a question. Shared by every render mode so that
/// prefilling only ever changes the assistant side.
pub fn user_content(q: &Question, layout: &PromptLayout, mode: RenderMode) -> String {
    let mut instruction = layout.instruction.clone();
    if mode == RenderMode::PromptInstruction {
        if !instruction.is_empty() {
            instruction.push(' ');
        }
        instruction.push_str("Please answer only with ");
        instruction.push_str(&options_list(&q.labels()));
    }
    let mut parts = Vec::with_capacity(q.n_options() + 3);
    if !instruction.is_empty() {
        parts.push(instruction);
        parts.push(String::new());
    }
    parts.push(q.stem().to_owned());
    parts.extend(layout.option_lines(q));
    if !layout.answer_cue.is_empty() {
        parts.push(layout.answer_cue.clone());
    }
    parts.join("\n")
}

pub fn render_prompt(
    q: &Question,
    layout: &PromptLayout,
    fmt: &ChatFormat,
    mode: RenderMode,
    prefill: Option<&PrefillTemplate>,
) -> Result<RenderedPrompt, RenderError> {
    match (mode, prefill) {
        (RenderMode::Prefill, None) => return Err(RenderError::MissingPrefill),
        (m, Some(_)) if m != RenderMode::Prefill => return Err(RenderError::UnexpectedPrefill(m)),
        _ => {}
    }
    layout.validate()?;
    let content = user_content(q, layout, mode);
    let prefix = [
        fmt.user_open(),
        content.as_str(),
        fmt.user_close(),
        fmt.assistant_open(),
    ]
    .concat();
    Ok(RenderedPrompt::assemble(prefix, mode, fmt, prefill)?)
}

/// Parse a mode name as used in configs and on the command line.
pub fn parse_render_mode(s: &str) -> Result<RenderMode, RenderError> {
    s.parse().map_err(|_| RenderError::UnknownMode(s.to_owned()))
}

pub fn builtin_chat_formats() -> Vec<ChatFormat> {
    let f = |name, uo, uc, ao, ac| ChatFormat::new(name, uo, uc, ao, ac).expect("builtin format");
    vec![
        f(
            "chatml",
            "<|im_start|>user\n",
            "<|im_end|>\n",
            "<|im_start|>assistant\n",
            "<|im_end|>\n",
        ),
        f(
            "llama3",
            "<|begin_of_text|><|start_header_id|>user<|end_header_id|>\n\n",
            "<|eot_id|>",
            "<|start_header_id|>assistant<|end_header_id|>\n\n",
            "<|eot_id|>",
        ),
        f(
            "gemma",
            "<bos><start_of_turn>user\n",
            "<end_of_turn>\n",
            "<start_of_turn>model\n",
            "<end_of_turn>\n",
        ),
        f("zephyr", "<|user|>\n", "</s>\n", "<|assistant|>\n", "</s>\n"),
    ]
}

pub fn chat_format_by_name(name: &str) -> Option<ChatFormat> {
    builtin_chat_formats().into_iter().find(|f| f.name() == name)
}

const TEMPLATE_TEXTS: [&str; 10] = [
    "I choose:",
    "Having evaluated the question and its choices, I conclude with:",
    "My final answer is:",
    "Upon careful reflection, the response I find most appropriate is:",
    "Alright, I'm going with:",
    "After reviewing the options thoughtfully, I've decided on:",
    "Given the question and the possible options, my answer is:",
    "Let's cut to the chase, the answer is:",
    "After thorough consideration of the question and all potential answers, my final selection is:",
    "Given the context and underlying assumptions in both the question and its options, I determine the most fitting response to be:",
];

/// The ten bundled prefill templates, ids `t01`..`t10`.
pub fn builtin_prefill_templates() -> Vec<PrefillTemplate> {
    TEMPLATE_TEXTS
        .iter()
        .enumerate()
        .map(|(i, text)| PrefillTemplate::new(format!("t{:02}", i + 1), *text).expect("builtin template"))
        .collect()
}

pub fn default_prefill_template() -> PrefillTemplate {
    prefill_template_by_id(DEFAULT_TEMPLATE_ID).expect("default template present")
}

pub fn prefill_template_by_id(id: &str) -> Option<PrefillTemplate> {
    builtin_prefill_templates().into_iter().find(|t| t.id() == id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> Question {
        Question::from_texts("q1", "Which is a mammal?", vec!["Shark", "Dolphin", "Trout", "Eel"], 1).unwrap()
    }

    fn tagged() -> ChatFormat {
        ChatFormat::new("tagged", "<|user|>", "<|end|>", "<|assistant|>", "<|end|>").unwrap()
    }

    #[test]
    fn prefill_ends_with_default_template() {
        let p = render_prompt(
            &q(),
            &PromptLayout::default(),
            &tagged(),
            RenderMode::Prefill,
            Some(&default_prefill_template()),
        )
        .unwrap();
        assert!(p
            .text()
            .ends_with("<|assistant|>Given the question and the possible options, my answer is:"));
        assert_eq!(p.prefill_id(), Some("t07"));
    }

    #[test]
    fn plain_ends_with_assistant_open() {
        let p = render_prompt(&q(), &PromptLayout::default(), &tagged(), RenderMode::PlainFtp, None).unwrap();
        assert!(p.text().ends_with("<|assistant|>"));
        assert!(!p.text().contains("Please answer only"));
    }

    #[test]
    fn prompt_instruction_lists_labels() {
        let p = render_prompt(
            &q(),
            &PromptLayout::default(),
            &tagged(),
            RenderMode::PromptInstruction,
            None,
        )
        .unwrap();
        assert!(p.text().contains("Please answer only with A, B, C, D"));
        assert!(p.text().ends_with("<|assistant|>"));
    }

    #[test]
    fn mode_and_prefill_must_agree() {
        let layout = PromptLayout::default();
        let t = default_prefill_template();
        assert!(matches!(
            render_prompt(&q(), &layout, &tagged(), RenderMode::Prefill, None),
            Err(RenderError::MissingPrefill)
        ));
        assert!(matches!(
            render_prompt(&q(), &layout, &tagged(), RenderMode::PlainFtp, Some(&t)),
            Err(RenderError::UnexpectedPrefill(_))
        ));
        assert!(matches!(parse_render_mode("full"), Err(RenderError::UnknownMode(_))));
    }

    #[test]
    fn delimiter_inside_content_is_rejected() {
        let q = Question::from_texts("q", "say <|assistant|> now", vec!["a", "b"], 0).unwrap();
        let err = render_prompt(&q, &PromptLayout::default(), &tagged(), RenderMode::PlainFtp, None).unwrap_err();
        assert!(err.to_string().contains("exactly one assistant_open"));
    }

    #[test]
    fn option_lines_follow_label_order() {
        let lines = PromptLayout::default().option_lines(&q());
        assert_eq!(lines, ["A) Shark", "B) Dolphin", "C) Trout", "D) Eel"]);
    }

    #[test]
    fn builtin_registries() {
        let formats = builtin_chat_formats();
        assert!(formats.len() >= 3);
        let mut names: Vec<_> = formats.iter().map(|f| f.name()).collect();
        names.dedup();
        assert_eq!(names.len(), formats.len());
        let templates = builtin_prefill_templates();
        assert_eq!(templates.len(), 10);
        assert_eq!(templates[0].text(), "I choose:");
        assert_eq!(templates[0].id(), "t01");
        assert_eq!(templates[9].id(), "t10");
        assert_eq!(default_prefill_template().id(), "t07");
    }

    #[test]
    fn chatml_empty_exchange_is_delimiters() {
        let f = chat_format_by_name("chatml").unwrap();
        assert_eq!(
            f.render_exchange("", ""),
            "<|im_start|>user\n<|im_end|>\n<|im_start|>assistant\n<|im_end|>\n"
        );
    }
}
