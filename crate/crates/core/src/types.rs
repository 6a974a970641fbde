//! Domain types shared by every stage of an evaluation run.
//!
//! Every type validates its invariants on construction and on
//! deserialization, so a value that exists is a value that is well formed.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Tolerance for "probability mass sums to at most one" checks.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// A violated invariant, naming the type and the rule that failed.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{type_name}: {invariant}")]
pub struct InvariantError {
    pub type_name: &'static str,
    pub invariant: String,
}

impl InvariantError {
    pub(crate) fn new(type_name: &'static str, invariant: impl Into<String>) -> Self {
        Self {
            type_name,
            invariant: invariant.into(),
        }
    }
}

fn check(cond: bool, type_name: &'static str, invariant: &str) -> Result<(), InvariantError> {
    if cond {
        Ok(())
    } else {
        Err(InvariantError::new(type_name, invariant))
    }
}

// ---------------------------------------------------------------------------
// Label
// ---------------------------------------------------------------------------

/// A symbolic answer label: one uppercase ASCII letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(char);

impl Label {
    pub fn new(c: char) -> Result<Self, InvariantError> {
        check(
            c.is_ascii_uppercase(),
            "Label",
            "label must be a single uppercase ASCII letter",
        )?;
        Ok(Self(c))
    }

    /// The label at zero-based position `index` (0 → A).
    pub fn from_index(index: usize) -> Result<Self, InvariantError> {
        check(index < 26, "Label", "label index must be below 26")?;
        Ok(Self((b'A' + index as u8) as char))
    }

    pub fn as_char(self) -> char {
        self.0
    }

    pub fn index(self) -> usize {
        (self.0 as u8 - b'A') as usize
    }

    /// The first `n` labels, A, B, ...
    pub fn first_n(n: usize) -> Result<Vec<Label>, InvariantError> {
        (0..n).map(Label::from_index).collect()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl TryFrom<&str> for Label {
    type Error = InvariantError;

    fn try_from(s: &str) -> Result<Self, Self::Error> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Label::new(c),
            _ => Err(InvariantError::new(
                "Label",
                format!("label must be exactly one character, got {s:?}"),
            )),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut buf = [0u8; 4];
        serializer.serialize_str(self.0.encode_utf8(&mut buf))
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Label::try_from(s.as_str()).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Question
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOption {
    pub label: Label,
    pub text: String,
}

/// One multiple-choice item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "QuestionRepr")]
pub struct Question {
    id: String,
    stem: String,
    options: Vec<AnswerOption>,
    gold_label: Label,
}

#[derive(Deserialize)]
struct QuestionRepr {
    id: String,
    stem: String,
    options: Vec<AnswerOption>,
    gold_label: Label,
}

impl TryFrom<QuestionRepr> for Question {
    type Error = InvariantError;

    fn try_from(r: QuestionRepr) -> Result<Self, Self::Error> {
        Question::new(r.id, r.stem, r.options, r.gold_label)
    }
}

impl Question {
    pub fn new(
        id: impl Into<String>,
        stem: impl Into<String>,
        options: Vec<AnswerOption>,
        gold_label: Label,
    ) -> Result<Self, InvariantError> {
        let id = id.into();
        check(!id.is_empty(), "Question", "id must be non-empty")?;
        check(
            (2..=26).contains(&options.len()),
            "Question",
            "option count must be between 2 and 26",
        )?;
        for (i, opt) in options.iter().enumerate() {
            check(
                opt.label.index() == i,
                "Question",
                "labels must be consecutive letters starting at A",
            )?;
        }
        check(
            options.iter().any(|o| o.label == gold_label),
            "Question",
            "gold_label must appear among option labels",
        )?;
        Ok(Self {
            id,
            stem: stem.into(),
            options,
            gold_label,
        })
    }

    /// Build a question from option texts, labelling them A, B, ... in order.
    pub fn from_texts<S: Into<String>>(
        id: impl Into<String>,
        stem: impl Into<String>,
        texts: Vec<S>,
        gold_index: usize,
    ) -> Result<Self, InvariantError> {
        check(texts.len() <= 26, "Question", "option count must be between 2 and 26")?;
        let options = texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                Ok(AnswerOption {
                    label: Label::from_index(i)?,
                    text: t.into(),
                })
            })
            .collect::<Result<Vec<_>, InvariantError>>()?;
        check(
            gold_index < options.len(),
            "Question",
            "gold_label must appear among option labels",
        )?;
        let gold = Label::from_index(gold_index)?;
        Self::new(id, stem, options, gold)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn stem(&self) -> &str {
        &self.stem
    }

    pub fn options(&self) -> &[AnswerOption] {
        &self.options
    }

    pub fn gold_label(&self) -> Label {
        self.gold_label
    }

    pub fn labels(&self) -> Vec<Label> {
        self.options.iter().map(|o| o.label).collect()
    }

    pub fn n_options(&self) -> usize {
        self.options.len()
    }
}

// ---------------------------------------------------------------------------
// Chat format and prefill template
// ---------------------------------------------------------------------------

/// Control-token skeleton of a chat model's dialogue format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ChatFormatRepr")]
pub struct ChatFormat {
    name: String,
    user_open: String,
    user_close: String,
    assistant_open: String,
    assistant_close: String,
}

#[derive(Deserialize)]
struct ChatFormatRepr {
    name: String,
    user_open: String,
    user_close: String,
    assistant_open: String,
    assistant_close: String,
}

impl TryFrom<ChatFormatRepr> for ChatFormat {
    type Error = InvariantError;

    fn try_from(r: ChatFormatRepr) -> Result<Self, Self::Error> {
        ChatFormat::new(r.name, r.user_open, r.user_close, r.assistant_open, r.assistant_close)
    }
}

impl ChatFormat {
    pub fn new(
        name: impl Into<String>,
        user_open: impl Into<String>,
        user_close: impl Into<String>,
        assistant_open: impl Into<String>,
        assistant_close: impl Into<String>,
    ) -> Result<Self, InvariantError> {
        let name = name.into();
        let assistant_open = assistant_open.into();
        check(!name.is_empty(), "ChatFormat", "name must be non-empty")?;
        check(
            !assistant_open.is_empty(),
            "ChatFormat",
            "assistant_open must be non-empty",
        )?;
        Ok(Self {
            name,
            user_open: user_open.into(),
            user_close: user_close.into(),
            assistant_open,
            assistant_close: assistant_close.into(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn user_open(&self) -> &str {
        &self.user_open
    }
    pub fn user_close(&self) -> &str {
        &self.user_close
    }
    pub fn assistant_open(&self) -> &str {
        &self.assistant_open
    }
    pub fn assistant_close(&self) -> &str {
        &self.assistant_close
    }

    /// A complete single-exchange conversation. With empty contents this is
    /// the four delimiters concatenated in order.
    pub fn render_exchange(&self, user: &str, assistant: &str) -> String {
        [
            self.user_open.as_str(),
            user,
            self.user_close.as_str(),
            self.assistant_open.as_str(),
            assistant,
            self.assistant_close.as_str(),
        ]
        .concat()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PrefillTemplateRepr")]
pub struct PrefillTemplate {
    id: String,
    text: String,
}

#[derive(Deserialize)]
struct PrefillTemplateRepr {
    id: String,
    text: String,
}

impl TryFrom<PrefillTemplateRepr> for PrefillTemplate {
    type Error = InvariantError;

    fn try_from(r: PrefillTemplateRepr) -> Result<Self, Self::Error> {
        PrefillTemplate::new(r.id, r.text)
    }
}

impl PrefillTemplate {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, InvariantError> {
        let id = id.into();
        let text = text.into();
        check(!id.is_empty(), "PrefillTemplate", "id must be non-empty")?;
        check(!text.is_empty(), "PrefillTemplate", "text must be non-empty")?;
        check(
            !text.ends_with('\n') && !text.ends_with('\r'),
            "PrefillTemplate",
            "text must not end with a newline",
        )?;
        Ok(Self { id, text })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

// ---------------------------------------------------------------------------
// Rendered prompt
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    PlainFtp,
    PromptInstruction,
    Prefill,
}

impl RenderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RenderMode::PlainFtp => "plain_ftp",
            RenderMode::PromptInstruction => "prompt_instruction",
            RenderMode::Prefill => "prefill",
        }
    }
}

impl fmt::Display for RenderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RenderMode {
    type Err = InvariantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain_ftp" => Ok(RenderMode::PlainFtp),
            "prompt_instruction" => Ok(RenderMode::PromptInstruction),
            "prefill" => Ok(RenderMode::Prefill),
            other => Err(InvariantError::new("RenderMode", format!("unknown mode {other:?}"))),
        }
    }
}

/// The exact text sent to a backend, with what it was rendered from.
///
/// `bytes` is kept as UTF-8 text: every renderer input is text, and the
/// completion wire protocol carries the prompt as a JSON string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RenderedPromptRepr")]
pub struct RenderedPrompt {
    bytes: String,
    mode: RenderMode,
    chat_format_name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    prefill_id: Option<String>,
    #[serde(skip)]
    prefill_text: Option<String>,
}

#[derive(Deserialize)]
struct RenderedPromptRepr {
    bytes: String,
    mode: RenderMode,
    chat_format_name: String,
    #[serde(default)]
    prefill_id: Option<String>,
}

impl TryFrom<RenderedPromptRepr> for RenderedPrompt {
    type Error = InvariantError;

    fn try_from(r: RenderedPromptRepr) -> Result<Self, Self::Error> {
        check(
            (r.mode == RenderMode::Prefill) == r.prefill_id.is_some(),
            "RenderedPrompt",
            "mode = prefill iff prefill_id present",
        )?;
        check(!r.bytes.is_empty(), "RenderedPrompt", "bytes must be non-empty")?;
        Ok(Self {
            bytes: r.bytes,
            mode: r.mode,
            chat_format_name: r.chat_format_name,
            prefill_id: r.prefill_id,
            prefill_text: None,
        })
    }
}

impl RenderedPrompt {
    /// Assemble a prompt from an already-rendered prefix (ending in
    /// `fmt.assistant_open`) and an optional prefill.
    pub(crate) fn assemble(
        prefix: String,
        mode: RenderMode,
        fmt: &ChatFormat,
        prefill: Option<&PrefillTemplate>,
    ) -> Result<Self, InvariantError> {
        check(
            (mode == RenderMode::Prefill) == prefill.is_some(),
            "RenderedPrompt",
            "mode = prefill iff prefill_id present",
        )?;
        check(
            prefix.ends_with(fmt.assistant_open()),
            "RenderedPrompt",
            "prompt must end with the assistant turn opening",
        )?;
        check(
            prefix.matches(fmt.assistant_open()).count() == 1,
            "RenderedPrompt",
            "bytes must contain exactly one assistant_open occurrence",
        )?;
        let mut bytes = prefix;
        if let Some(p) = prefill {
            bytes.push_str(p.text());
        }
        Ok(Self {
            bytes,
            mode,
            chat_format_name: fmt.name().to_owned(),
            prefill_id: prefill.map(|p| p.id().to_owned()),
            prefill_text: prefill.map(|p| p.text().to_owned()),
        })
    }

    pub fn bytes(&self) -> &[u8] {
        self.bytes.as_bytes()
    }

    pub fn text(&self) -> &str {
        &self.bytes
    }

    pub fn mode(&self) -> RenderMode {
        self.mode
    }

    pub fn chat_format_name(&self) -> &str {
        &self.chat_format_name
    }

    pub fn prefill_id(&self) -> Option<&str> {
        self.prefill_id.as_deref()
    }

    /// Prefill text, when known (not carried through serialization).
    pub fn prefill_text(&self) -> Option<&str> {
        self.prefill_text.as_deref()
    }
}

// ---------------------------------------------------------------------------
// Token candidates and generation traces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TokenCandidateRepr")]
pub struct TokenCandidate {
    token_text: String,
    logprob: f64,
}

#[derive(Deserialize)]
struct TokenCandidateRepr {
    token_text: String,
    logprob: f64,
}

impl TryFrom<TokenCandidateRepr> for TokenCandidate {
    type Error = InvariantError;

    fn try_from(r: TokenCandidateRepr) -> Result<Self, Self::Error> {
        TokenCandidate::new(r.token_text, r.logprob)
    }
}

impl TokenCandidate {
    /// `logprob` is a natural log; values a hair above zero are accepted as
    /// numerical noise from the backend.
    pub fn new(token_text: impl Into<String>, logprob: f64) -> Result<Self, InvariantError> {
        let token_text = token_text.into();
        check(!token_text.is_empty(), "TokenCandidate", "token_text must be non-empty")?;
        check(
            !logprob.is_nan() && logprob <= MASS_TOLERANCE,
            "TokenCandidate",
            "logprob must be <= 0",
        )?;
        Ok(Self { token_text, logprob })
    }

    pub fn from_prob(token_text: impl Into<String>, prob: f64) -> Result<Self, InvariantError> {
        Self::new(token_text, prob.ln())
    }

    pub fn token_text(&self) -> &str {
        &self.token_text
    }

    pub fn logprob(&self) -> f64 {
        self.logprob
    }

    pub fn prob(&self) -> f64 {
        self.logprob.exp()
    }
}

/// Order candidates by logprob descending, breaking ties by the
/// lexicographically smallest token text.
pub fn sort_candidates(candidates: &mut [TokenCandidate]) {
    candidates.sort_by(|a, b| {
        b.logprob
            .total_cmp(&a.logprob)
            .then_with(|| a.token_text.cmp(&b.token_text))
    });
}

/// Per-position top-k candidates from a backend plus the greedy path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GenerationTraceRepr")]
pub struct GenerationTrace {
    positions: Vec<Vec<TokenCandidate>>,
    greedy_tokens: Vec<String>,
    top_k: usize,
}

#[derive(Deserialize)]
struct GenerationTraceRepr {
    positions: Vec<Vec<TokenCandidate>>,
    greedy_tokens: Vec<String>,
    top_k: usize,
}

impl TryFrom<GenerationTraceRepr> for GenerationTrace {
    type Error = InvariantError;

    fn try_from(r: GenerationTraceRepr) -> Result<Self, Self::Error> {
        let trace = GenerationTrace {
            positions: r.positions,
            greedy_tokens: r.greedy_tokens,
            top_k: r.top_k,
        };
        trace.validate()?;
        Ok(trace)
    }
}

impl GenerationTrace {
    /// Build a trace from per-position candidates. Candidates are sorted,
    /// and the greedy token at each position is its first candidate.
    pub fn from_positions(mut positions: Vec<Vec<TokenCandidate>>, top_k: usize) -> Result<Self, InvariantError> {
        for p in positions.iter_mut() {
            sort_candidates(p);
        }
        check(
            positions.iter().all(|p| !p.is_empty()),
            "GenerationTrace",
            "every position needs at least one candidate",
        )?;
        let greedy_tokens = positions.iter().map(|p| p[0].token_text.clone()).collect();
        let trace = Self {
            positions,
            greedy_tokens,
            top_k,
        };
        trace.validate()?;
        Ok(trace)
    }

    fn validate(&self) -> Result<(), InvariantError> {
        const T: &str = "GenerationTrace";
        check(!self.positions.is_empty(), T, "at least one position required")?;
        check(self.top_k >= 1, T, "top_k must be >= 1")?;
        check(
            self.greedy_tokens.len() == self.positions.len(),
            T,
            "|greedy_tokens| must equal |positions|",
        )?;
        for (p, cands) in self.positions.iter().enumerate() {
            check(!cands.is_empty(), T, "every position needs at least one candidate")?;
            check(
                cands.windows(2).all(|w| w[0].logprob >= w[1].logprob),
                T,
                "candidates must be sorted by logprob descending",
            )?;
            let mut seen = std::collections::HashSet::new();
            check(
                cands.iter().all(|c| seen.insert(c.token_text.as_str())),
                T,
                "token_texts must be distinct within a position",
            )?;
            check(
                self.greedy_tokens[p] == cands[0].token_text,
                T,
                "greedy token must equal the top candidate",
            )?;
            let mass: f64 = cands.iter().map(TokenCandidate::prob).sum();
            check(
                mass <= 1.0 + MASS_TOLERANCE,
                T,
                "candidate probabilities must sum to at most 1",
            )?;
        }
        Ok(())
    }

    pub fn positions(&self) -> &[Vec<TokenCandidate>] {
        &self.positions
    }

    pub fn first_position(&self) -> &[TokenCandidate] {
        &self.positions[0]
    }

    pub fn greedy_tokens(&self) -> &[String] {
        &self.greedy_tokens
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    /// Greedy continuation joined into text.
    pub fn greedy_text(&self) -> String {
        self.greedy_tokens.concat()
    }
}

// ---------------------------------------------------------------------------
// Per-question outcome
// ---------------------------------------------------------------------------

/// What one backend response says about one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FirstTokenOutcomeRepr")]
pub struct FirstTokenOutcome {
    pub question_id: String,
    pub top1_token: String,
    pub is_valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched_label: Option<Label>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_token: Option<String>,
    /// Unnormalized option mass read off the first position.
    pub option_probs: BTreeMap<Label, f64>,
    pub restricted_choice: Label,
    pub gold_label: Label,
    /// Set when every option had zero mass and `restricted_choice` fell back
    /// to the smallest label.
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Deserialize)]
struct FirstTokenOutcomeRepr {
    question_id: String,
    top1_token: String,
    is_valid: bool,
    #[serde(default)]
    matched_label: Option<Label>,
    #[serde(default)]
    second_token: Option<String>,
    option_probs: BTreeMap<Label, f64>,
    restricted_choice: Label,
    gold_label: Label,
    #[serde(default)]
    degenerate: bool,
}

impl TryFrom<FirstTokenOutcomeRepr> for FirstTokenOutcome {
    type Error = InvariantError;

    fn try_from(r: FirstTokenOutcomeRepr) -> Result<Self, Self::Error> {
        let o = FirstTokenOutcome {
            question_id: r.question_id,
            top1_token: r.top1_token,
            is_valid: r.is_valid,
            matched_label: r.matched_label,
            second_token: r.second_token,
            option_probs: r.option_probs,
            restricted_choice: r.restricted_choice,
            gold_label: r.gold_label,
            degenerate: r.degenerate,
        };
        o.validate()?;
        Ok(o)
    }
}

impl FirstTokenOutcome {
    pub fn validate(&self) -> Result<(), InvariantError> {
        const T: &str = "FirstTokenOutcome";
        check(
            self.is_valid == self.matched_label.is_some(),
            T,
            "is_valid iff matched_label present",
        )?;
        check(
            self.option_probs.contains_key(&self.restricted_choice),
            T,
            "restricted_choice must be an option label",
        )?;
        check(
            self.option_probs.contains_key(&self.gold_label),
            T,
            "gold_label must be an option label",
        )?;
        check(
            self.option_probs.values().all(|p| (0.0..=1.0).contains(p)),
            T,
            "option_probs values must lie in [0, 1]",
        )?;
        let sum: f64 = self.option_probs.values().sum();
        check(sum <= 1.0 + MASS_TOLERANCE, T, "option_probs must sum to at most 1")?;
        Ok(())
    }

    pub fn labels(&self) -> Vec<Label> {
        self.option_probs.keys().copied().collect()
    }
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One equal-width reliability-diagram bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_conf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateScore {
    pub template_id: String,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub full_vocab_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ftvr: Option<f64>,
}

/// Accuracy across a set of prefill templates with mean and population std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSweep {
    pub per_template: Vec<TemplateScore>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// Answer from the open-ended baseline for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenEndedAnswer {
    pub question_id: String,
    pub response: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judged_label: Option<Label>,
    pub gold_label: Label,
}

/// Aggregated metrics for one dataset × model × mode × template.
///
/// Metrics that do not apply to the run's mode are `None` and omitted from
/// the JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EvalReportRepr")]
pub struct EvalReport {
    pub schema_version: u32,
    pub dataset_name: String,
    pub model_name: String,
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_style: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    pub n_questions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full_vocab_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ftvr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ace: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub brier_x100: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_bins: Option<Vec<CalibrationBin>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degenerate_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unparsed_replies: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template_sweep: Option<TemplateSweep>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub caveats: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub open_ended: Option<Vec<OpenEndedAnswer>>,
    pub per_question: Vec<FirstTokenOutcome>,
}

#[derive(Deserialize)]
struct EvalReportRepr {
    schema_version: u32,
    dataset_name: String,
    model_name: String,
    mode: String,
    #[serde(default)]
    prompt_style: Option<String>,
    #[serde(default)]
    template_id: Option<String>,
    n_questions: usize,
    #[serde(default)]
    accuracy: Option<f64>,
    #[serde(default)]
    full_vocab_accuracy: Option<f64>,
    #[serde(default)]
    ftvr: Option<f64>,
    #[serde(default)]
    cd: Option<f64>,
    #[serde(default)]
    ace: Option<f64>,
    #[serde(default)]
    brier_x100: Option<f64>,
    #[serde(default)]
    log_loss: Option<f64>,
    #[serde(default)]
    calibration_bins: Option<Vec<CalibrationBin>>,
    #[serde(default)]
    degenerate_count: Option<usize>,
    #[serde(default)]
    unparsed_replies: Option<usize>,
    #[serde(default)]
    template_sweep: Option<TemplateSweep>,
    #[serde(default)]
    caveats: Vec<String>,
    #[serde(default)]
    open_ended: Option<Vec<OpenEndedAnswer>>,
    per_question: Vec<FirstTokenOutcome>,
}

impl TryFrom<EvalReportRepr> for EvalReport {
    type Error = InvariantError;

    fn try_from(r: EvalReportRepr) -> Result<Self, Self::Error> {
        let report = EvalReport {
            schema_version: r.schema_version,
            dataset_name: r.dataset_name,
            model_name: r.model_name,
            mode: r.mode,
            prompt_style: r.prompt_style,
            template_id: r.template_id,
            n_questions: r.n_questions,
            accuracy: r.accuracy,
            full_vocab_accuracy: r.full_vocab_accuracy,
            ftvr: r.ftvr,
            cd: r.cd,
            ace: r.ace,
            brier_x100: r.brier_x100,
            log_loss: r.log_loss,
            calibration_bins: r.calibration_bins,
            degenerate_count: r.degenerate_count,
            unparsed_replies: r.unparsed_replies,
            template_sweep: r.template_sweep,
            caveats: r.caveats,
            open_ended: r.open_ended,
            per_question: r.per_question,
        };
        report.validate()?;
        Ok(report)
    }
}

impl EvalReport {
    pub fn validate(&self) -> Result<(), InvariantError> {
        const T: &str = "EvalReport";
        let within = |v: Option<f64>, lo: f64, hi: f64| v.is_none_or(|x| x >= lo && x <= hi);
        check(within(self.accuracy, 0.0, 1.0), T, "accuracy must lie in [0, 1]")?;
        check(
            within(self.full_vocab_accuracy, 0.0, 1.0),
            T,
            "full_vocab_accuracy must lie in [0, 1]",
        )?;
        check(within(self.ftvr, 0.0, 100.0), T, "ftvr must lie in [0, 100]")?;
        check(self.cd.is_none_or(|x| x >= 0.0), T, "cd must be >= 0")?;
        check(within(self.ace, 0.0, 1.0), T, "ace must lie in [0, 1]")?;
        check(
            within(self.brier_x100, 0.0, 100.0),
            T,
            "brier_x100 must lie in [0, 100]",
        )?;
        check(self.log_loss.is_none_or(|x| x >= 0.0), T, "log_loss must be >= 0")?;
        if let (Some(acc), Some(ftvr)) = (self.full_vocab_accuracy, self.ftvr) {
            check(
                acc <= ftvr / 100.0 + 1e-12,
                T,
                "full_vocab_accuracy must not exceed ftvr/100",
            )?;
        }
        if let Some(bins) = &self.calibration_bins {
            check(
                bins.iter().map(|b| b.count).sum::<usize>() == self.n_questions,
                T,
                "calibration bin counts must sum to n_questions",
            )?;
        }
        Ok(())
    }
}
