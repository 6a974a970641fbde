//! First-token-probability evaluation for multiple-choice QA.
//!
//! A question is rendered into a chat prompt (optionally with an output
//! prefill written after the assistant turn opens), a backend returns the
//! top-k next-token distribution, and the first position is scored two ways:
//! restricted to the option labels, and as an unconstrained top-1 token.
//! Outcomes aggregate into accuracy, validity rate, continuation diversity
//! and calibration metrics.

pub mod backend;
pub mod config;
pub mod dataset;
pub mod extraction;
pub mod metrics;
pub mod report;
pub mod runner;
pub mod scoring;
pub mod templating;
pub mod types;

pub use backend::{Backend, BackendConfig, BackendError, BackendKind, MockBackend, MockScript};
pub use report::{emit_report, ReportFormat};
pub use runner::{run_eval, EvalMode, RunConfig, RunError, TemplateSelection};
pub use types::{
    ChatFormat, EvalReport, FirstTokenOutcome, GenerationTrace, InvariantError, Label, PrefillTemplate, Question,
    RenderMode, RenderedPrompt, TokenCandidate,
};
