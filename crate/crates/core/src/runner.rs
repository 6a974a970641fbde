//! Evaluation orchestration: render → complete → score → aggregate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{complete_batch, run_bounded, Backend, BackendError, BackendKind};
use crate::extraction::{self, ExtractionError, OPEN_ENDED_MAX_TOKENS};
use crate::metrics::{self, AccuracyField, CalibrationInput, MetricError};
use crate::scoring::{self, ScoreError, SurfaceMode};
use crate::templating::{self, PromptLayout, RenderError};
use crate::types::{
    ChatFormat, EvalReport, FirstTokenOutcome, GenerationTrace, OpenEndedAnswer, PrefillTemplate, Question, RenderMode,
    RenderedPrompt, TemplateScore, TemplateSweep, REPORT_SCHEMA_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    PlainFtp,
    PromptInstruction,
    Prefill,
    FullVocab,
    OpenEnded,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::PlainFtp => "plain_ftp",
            EvalMode::PromptInstruction => "prompt_instruction",
            EvalMode::Prefill => "prefill",
            EvalMode::FullVocab => "full_vocab",
            EvalMode::OpenEnded => "open_ended",
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvalMode {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "plain_ftp" => EvalMode::PlainFtp,
            "prompt_instruction" => EvalMode::PromptInstruction,
            "prefill" => EvalMode::Prefill,
            "full_vocab" => EvalMode::FullVocab,
            "open_ended" => EvalMode::OpenEnded,
            other => return Err(RunError::Config(format!("unknown mode {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TemplateSelection {
    Single(PrefillTemplate),
    Sweep(Vec<PrefillTemplate>),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset_name: String,
    pub mode: EvalMode,
    /// Prompt rendering used by `full_vocab` runs. The restricted modes
    /// render with their own style and `open_ended` uses `plain_ftp`.
    pub prompt_style: RenderMode,
    pub chat_format: ChatFormat,
    pub layout: PromptLayout,
    pub templates: TemplateSelection,
    pub surface_mode: SurfaceMode,
    pub calibration_input: CalibrationInput,
    pub ace_ranges: usize,
    pub calibration_bins: usize,
}

impl RunConfig {
    pub fn new(dataset_name: impl Into<String>, mode: EvalMode, chat_format: ChatFormat) -> Self {
        Self {
            dataset_name: dataset_name.into(),
            mode,
            prompt_style: RenderMode::Prefill,
            chat_format,
            layout: PromptLayout::default(),
            templates: TemplateSelection::Single(templating::default_prefill_template()),
            surface_mode: SurfaceMode::Aggregate,
            calibration_input: CalibrationInput::Renormalized,
            ace_ranges: metrics::DEFAULT_ACE_RANGES,
            calibration_bins: metrics::DEFAULT_CALIBRATION_BINS,
        }
    }

    pub fn render_mode(&self) -> RenderMode {
        match self.mode {
            EvalMode::PlainFtp | EvalMode::OpenEnded => RenderMode::PlainFtp,
            EvalMode::PromptInstruction => RenderMode::PromptInstruction,
            EvalMode::Prefill => RenderMode::Prefill,
            EvalMode::FullVocab => self.prompt_style,
        }
    }
}

/// Question-level results gathered before a backend failure aborted the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartialResults {
    pub dataset_name: String,
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    pub completed: Vec<CompletedItem>,
    pub failed: Vec<FailedItem>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletedItem {
    pub question_id: String,
    pub trace: GenerationTrace,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailedItem {
    pub index: usize,
    pub question_id: String,
    pub error: String,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("{} of {} backend requests failed; first: {}", .partial.failed.len(),
            .partial.failed.len() + .partial.completed.len(),
            .partial.failed.first().map(|f| f.error.as_str()).unwrap_or(""))]
    Backend { partial: Box<PartialResults> },
    #[error("backend: {0}")]
    Transport(#[from] BackendError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub fn render_all(
    questions: &[Question],
    cfg: &RunConfig,
    template: Option<&PrefillTemplate>,
) -> Result<Vec<RenderedPrompt>, RenderError> {
    let mode = cfg.render_mode();
    let prefill = if mode == RenderMode::Prefill { template } else { None };
    questions
        .iter()
        .map(|q| templating::render_prompt(q, &cfg.layout, &cfg.chat_format, mode, prefill))
        .collect()
}

fn collect_traces(
    questions: &[Question],
    prompts: &[RenderedPrompt],
    backend: &dyn Backend,
    cfg: &RunConfig,
    template: Option<&PrefillTemplate>,
) -> Result<Vec<GenerationTrace>, RunError> {
    let out = complete_batch(backend, prompts);
    out.into_complete().map_err(|out| {
        let completed = out
            .results
            .into_iter()
            .enumerate()
            .filter_map(|(i, t)| {
                t.map(|trace| CompletedItem {
                    question_id: questions[i].id().to_owned(),
                    trace,
                })
            })
            .collect();
        let failed = out
            .errors
            .into_iter()
            .map(|(i, e)| FailedItem {
                index: i,
                question_id: questions[i].id().to_owned(),
                error: e.to_string(),
            })
            .collect();
        RunError::Backend {
            partial: Box::new(PartialResults {
                dataset_name: cfg.dataset_name.clone(),
                mode: cfg.mode.to_string(),
                template_id: template.map(|t| t.id().to_owned()),
                completed,
                failed,
            }),
        }
    })
}

/// Score every question; outcomes come back sorted by question id.
pub fn score_all(
    questions: &[Question],
    traces: &[GenerationTrace],
    surface_mode: SurfaceMode,
) -> Result<Vec<FirstTokenOutcome>, ScoreError> {
    let mut outcomes = questions
        .iter()
        .zip(traces)
        .map(|(q, t)| scoring::full_vocab_outcome(t, q, surface_mode))
        .collect::<Result<Vec<_>, _>>()?;
    outcomes.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    Ok(outcomes)
}

fn empty_report(cfg: &RunConfig, model_name: &str, n: usize) -> EvalReport {
    EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        dataset_name: cfg.dataset_name.clone(),
        model_name: model_name.to_owned(),
        mode: cfg.mode.to_string(),
        prompt_style: None,
        template_id: None,
        n_questions: n,
        accuracy: None,
        full_vocab_accuracy: None,
        ftvr: None,
        cd: None,
        ace: None,
        brier_x100: None,
        log_loss: None,
        calibration_bins: None,
        degenerate_count: None,
        unparsed_replies: None,
        template_sweep: None,
        caveats: Vec::new(),
        open_ended: None,
        per_question: Vec::new(),
    }
}

/// Fill a report's metrics from scored outcomes.
pub fn build_report(
    cfg: &RunConfig,
    model_name: &str,
    template: Option<&PrefillTemplate>,
    outcomes: Vec<FirstTokenOutcome>,
) -> Result<EvalReport, RunError> {
    let mut report = empty_report(cfg, model_name, outcomes.len());
    let render_mode = cfg.render_mode();
    if cfg.mode == EvalMode::FullVocab {
        report.prompt_style = Some(render_mode.to_string());
    }
    if render_mode == RenderMode::Prefill {
        report.template_id = template.map(|t| t.id().to_owned());
    }

    report.accuracy = Some(metrics::accuracy(&outcomes, AccuracyField::RestrictedChoice)?);
    let vectors: Vec<_> = outcomes
        .iter()
        .map(|o| metrics::outcome_vector(o, cfg.calibration_input))
        .collect();
    let golds: Vec<usize> = outcomes.iter().map(metrics::gold_index).collect();
    report.brier_x100 = Some(metrics::brier_x100(&vectors, &golds)?);
    report.log_loss = Some(metrics::log_loss(&vectors, &golds)?);
    let uniform_arity = vectors.iter().all(|v| v.len() == vectors[0].len());
    if !uniform_arity {
        report
            .caveats
            .push("ace omitted: questions have differing option counts".to_owned());
    } else if outcomes.len() < cfg.ace_ranges {
        report.caveats.push(format!(
            "ace omitted: {} questions is fewer than {} ranges",
            outcomes.len(),
            cfg.ace_ranges
        ));
    } else {
        report.ace = Some(metrics::ace(&vectors, &golds, cfg.ace_ranges)?);
    }
    report.calibration_bins = Some(metrics::calibration_curve(&vectors, &golds, cfg.calibration_bins)?);
    report.degenerate_count = Some(outcomes.iter().filter(|o| o.degenerate).count());

    if cfg.mode == EvalMode::FullVocab {
        report.full_vocab_accuracy = Some(metrics::accuracy(&outcomes, AccuracyField::MatchedLabel)?);
        report.ftvr = Some(metrics::ftvr(&outcomes)?);
        report.cd = metrics::continuation_diversity(&outcomes)?;
    }
    report.per_question = outcomes;
    Ok(report)
}

fn run_single(
    questions: &[Question],
    cfg: &RunConfig,
    backend: &dyn Backend,
    template: Option<&PrefillTemplate>,
) -> Result<EvalReport, RunError> {
    let prompts = render_all(questions, cfg, template)?;
    let traces = collect_traces(questions, &prompts, backend, cfg, template)?;
    let outcomes = score_all(questions, &traces, cfg.surface_mode)?;
    let mut report = build_report(cfg, &backend.config().model_name, template, outcomes)?;
    if backend.config().kind == BackendKind::Http {
        report.caveats.push(format!(
            "option mass outside the backend's top-{} candidates is counted as 0",
            backend.config().top_k
        ));
    }
    Ok(report)
}

fn run_open_ended(
    questions: &[Question],
    cfg: &RunConfig,
    backend: &dyn Backend,
    judge: &dyn Backend,
) -> Result<EvalReport, RunError> {
    let prompts = render_all(questions, cfg, None)?;
    let responses = run_bounded(questions.len(), backend.config().max_in_flight, |i| {
        backend.generate(prompts[i].text(), OPEN_ENDED_MAX_TOKENS)
    });
    let responses = responses
        .into_complete()
        .map_err(|mut out| RunError::Transport(out.errors.remove(0).1))?;
    let verdicts = run_bounded(
        questions.len(),
        judge.config().max_in_flight,
        |i| match extraction::classify_open_ended(judge, &questions[i], &responses[i]) {
            Ok(l) => Ok(Some(l)),
            Err(ExtractionError::Unparsed(reply)) => {
                log::debug!("question {}: unparsed judge reply {reply:?}", questions[i].id());
                Ok(None)
            }
            Err(ExtractionError::Backend(e)) => Err(e),
        },
    );
    let verdicts = verdicts
        .into_complete()
        .map_err(|mut out| RunError::Transport(out.errors.remove(0).1))?;

    let mut answers: Vec<OpenEndedAnswer> = questions
        .iter()
        .zip(responses)
        .zip(verdicts)
        .map(|((q, response), judged)| OpenEndedAnswer {
            question_id: q.id().to_owned(),
            response,
            judged_label: judged,
            gold_label: q.gold_label(),
        })
        .collect();
    answers.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    if answers.is_empty() {
        return Err(MetricError::Empty.into());
    }
    let mut report = empty_report(cfg, &backend.config().model_name, answers.len());
    let correct = answers.iter().filter(|a| a.judged_label == Some(a.gold_label)).count();
    report.accuracy = Some(correct as f64 / answers.len() as f64);
    report.unparsed_replies = Some(answers.iter().filter(|a| a.judged_label.is_none()).count());
    report
        .caveats
        .push(format!("free-form generation capped at {OPEN_ENDED_MAX_TOKENS} tokens"));
    report.open_ended = Some(answers);
    Ok(report)
}

/// Run one evaluation. `judge` is required for `open_ended` mode.
pub fn run_eval(
    cfg: &RunConfig,
    questions: &[Question],
    backend: &dyn Backend,
    judge: Option<&dyn Backend>,
) -> Result<EvalReport, RunError> {
    if questions.is_empty() {
        return Err(RunError::Config("dataset has no questions".into()));
    }
    if cfg.mode == EvalMode::OpenEnded {
        let judge = judge.ok_or_else(|| RunError::Config("open_ended mode needs a judge backend".into()))?;
        return run_open_ended(questions, cfg, backend, judge);
    }
    match &cfg.templates {
        TemplateSelection::Single(t) => run_single(questions, cfg, backend, Some(t)),
        TemplateSelection::Sweep(templates) => {
            if cfg.render_mode() != RenderMode::Prefill {
                return Err(RunError::Config("a template sweep needs prefill rendering".into()));
            }
            if templates.is_empty() {
                return Err(RunError::Config("template sweep is empty".into()));
            }
            let mut reports = Vec::with_capacity(templates.len());
            for t in templates {
                reports.push(run_single(questions, cfg, backend, Some(t))?);
            }
            let per_template: Vec<TemplateScore> = reports
                .iter()
                .map(|r| TemplateScore {
                    template_id: r.template_id.clone().unwrap_or_default(),
                    accuracy: r.accuracy.expect("restricted accuracy"),
                    full_vocab_accuracy: r.full_vocab_accuracy,
                    ftvr: r.ftvr,
                })
                .collect();
            let accs: Vec<f64> = per_template.iter().map(|s| s.accuracy).collect();
            let (mean, std) = metrics::aggregate_mean_std(&accs)?;
            let primary = reports
                .iter()
                .position(|r| r.template_id.as_deref() == Some(templating::DEFAULT_TEMPLATE_ID))
                .unwrap_or(0);
            let mut report = reports.swap_remove(primary);
            report.template_sweep = Some(TemplateSweep {
                per_template,
                mean_accuracy: mean,
                std_accuracy: std,
            });
            Ok(report)
        }
    }
}
