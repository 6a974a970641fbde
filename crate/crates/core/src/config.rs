//! Run configuration file. Every field is optional; command-line flags
//! override whatever the file sets.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendConfig, MockScript};
use crate::dataset::{self, DatasetError};
use crate::metrics::CalibrationInput;
use crate::report::ReportFormat;
use crate::runner::{EvalMode, RunConfig, TemplateSelection};
use crate::scoring::SurfaceMode;
use crate::templating::{self, PromptLayout};
use crate::types::{ChatFormat, Question, RenderMode};

/// A builtin format by name, or a full inline definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChatFormatSpec {
    Named(String),
    Inline(ChatFormat),
}

impl ChatFormatSpec {
    pub fn resolve(&self) -> Result<ChatFormat, String> {
        match self {
            ChatFormatSpec::Named(name) => templating::chat_format_by_name(name).ok_or_else(|| {
                let known: Vec<_> = templating::builtin_chat_formats()
                    .iter()
                    .map(|f| f.name().to_owned())
                    .collect();
                format!("unknown chat format {name:?} (builtin: {})", known.join(", "))
            }),
            ChatFormatSpec::Inline(f) => Ok(f.clone()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub mode: Option<EvalMode>,
    pub prompt_style: Option<RenderMode>,
    /// JSONL path; the bundled toy dataset when absent.
    pub dataset: Option<PathBuf>,
    pub backend: Option<BackendConfig>,
    pub mock_script: Option<PathBuf>,
    pub judge: Option<BackendConfig>,
    pub judge_mock_script: Option<PathBuf>,
    pub chat_format: Option<ChatFormatSpec>,
    pub layout: Option<PromptLayout>,
    pub template_id: Option<String>,
    pub all_templates: Option<bool>,
    pub strict_single_surface: Option<bool>,
    pub calibration_input: Option<CalibrationInput>,
    pub report_format: Option<ReportFormat>,
    pub out: Option<PathBuf>,
}

impl HarnessConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config file: {e}"))
    }

    /// Read a config file. Relative input paths (dataset, mock scripts) are
    /// taken relative to the file's directory; `out` stays relative to the
    /// working directory.
    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            for p in [&mut cfg.dataset, &mut cfg.mock_script, &mut cfg.judge_mock_script]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn dataset_name(&self) -> String {
        match &self.dataset {
            None => dataset::TOY_DATASET_NAME.to_owned(),
            Some(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
        }
    }

    pub fn load_questions(&self) -> Result<Vec<Question>, DatasetError> {
        let qs = match &self.dataset {
            None => dataset::builtin_toy_dataset(),
            Some(p) => dataset::load_jsonl(p)?,
        };
        if qs.is_empty() {
            return Err(DatasetError::Empty);
        }
        Ok(qs)
    }

    pub fn run_config(&self) -> Result<RunConfig, String> {
        let mode = self.mode.unwrap_or(EvalMode::Prefill);
        let fmt = self
            .chat_format
            .clone()
            .unwrap_or_else(|| ChatFormatSpec::Named("chatml".into()))
            .resolve()?;
        let mut cfg = RunConfig::new(self.dataset_name(), mode, fmt);
        if let Some(style) = self.prompt_style {
            if mode != EvalMode::FullVocab {
                return Err("prompt_style only applies to full_vocab mode".into());
            }
            cfg.prompt_style = style;
        }
        if let Some(layout) = &self.layout {
            cfg.layout = layout.clone();
        }
        let sweep = self.all_templates.unwrap_or(false);
        if sweep && self.template_id.is_some() {
            return Err("choose either a template id or the full template sweep".into());
        }
        if (sweep || self.template_id.is_some()) && cfg.render_mode() != RenderMode::Prefill {
            return Err(format!("prefill templates do not apply to {mode} rendering"));
        }
        cfg.templates = if sweep {
            TemplateSelection::Sweep(templating::builtin_prefill_templates())
        } else {
            let id = self.template_id.as_deref().unwrap_or(templating::DEFAULT_TEMPLATE_ID);
            TemplateSelection::Single(
                templating::prefill_template_by_id(id).ok_or_else(|| format!("unknown template id {id:?}"))?,
            )
        };
        if self.strict_single_surface.unwrap_or(false) {
            cfg.surface_mode = SurfaceMode::StrictSingle;
        }
        if let Some(input) = self.calibration_input {
            cfg.calibration_input = input;
        }
        Ok(cfg)
    }
}

pub fn load_mock_script(path: &std::path::Path) -> Result<MockScript, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("mock script {}: {e}", path.display()))
}
