//! Browser bindings for the interactive demo page: render a prompt, score a
//! hand-written first-token distribution, and explore calibration metrics on
//! synthetic predictions. Every export takes and returns JSON strings.

use ftp_harness::metrics::{self, ProbVector};
use ftp_harness::scoring::{self, SurfaceMode};
use ftp_harness::templating::{self, PromptLayout};
use ftp_harness::types::{CalibrationBin, GenerationTrace, Question, RenderMode, TokenCandidate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[derive(Serialize)]
struct Catalog {
    chat_formats: Vec<String>,
    templates: Vec<(String, String)>,
    default_template: &'static str,
}

/// Names of the builtin chat formats and prefill templates.
#[wasm_bindgen]
pub fn catalog() -> String {
    let c = Catalog {
        chat_formats: templating::builtin_chat_formats()
            .iter()
            .map(|f| f.name().to_owned())
            .collect(),
        templates: templating::builtin_prefill_templates()
            .iter()
            .map(|t| (t.id().to_owned(), t.text().to_owned()))
            .collect(),
        default_template: templating::DEFAULT_TEMPLATE_ID,
    };
    serde_json::to_string(&c).expect("catalog serializes")
}

#[derive(Deserialize)]
struct QuestionInput {
    stem: String,
    options: Vec<String>,
    #[serde(default)]
    gold_index: usize,
}

fn question(json: &str) -> Result<Question, String> {
    let q: QuestionInput = serde_json::from_str(json).map_err(|e| e.to_string())?;
    Question::from_texts("demo", q.stem, q.options, q.gold_index).map_err(|e| e.to_string())
}

pub fn render(question_json: &str, format: &str, mode: &str, template_id: &str) -> Result<String, String> {
    let q = question(question_json)?;
    let fmt = templating::chat_format_by_name(format).ok_or_else(|| format!("unknown chat format {format:?}"))?;
    let mode: RenderMode = mode.parse().map_err(|e: ftp_harness::InvariantError| e.to_string())?;
    let prefill = match mode {
        RenderMode::Prefill => Some(
            templating::prefill_template_by_id(template_id)
                .ok_or_else(|| format!("unknown template {template_id:?}"))?,
        ),
        _ => None,
    };
    templating::render_prompt(&q, &PromptLayout::default(), &fmt, mode, prefill.as_ref())
        .map(|p| p.text().to_owned())
        .map_err(|e| e.to_string())
}

/// Exact prompt text for `{"stem", "options"}` under a chat format and mode.
#[wasm_bindgen]
pub fn render_prompt(question_json: &str, format: &str, mode: &str, template_id: &str) -> Result<String, JsError> {
    render(question_json, format, mode, template_id).map_err(js_err)
}

#[derive(Deserialize)]
struct ScoreInput {
    n_options: usize,
    #[serde(default)]
    gold_index: usize,
    /// First-position candidates as `[token, probability]`.
    candidates: Vec<(String, f64)>,
    #[serde(default)]
    second_token: Option<String>,
    #[serde(default)]
    strict: bool,
}

#[derive(Serialize)]
struct ScoreOutput {
    top1_token: String,
    is_valid: bool,
    matched_label: Option<String>,
    restricted_choice: String,
    degenerate: bool,
    option_mass: Vec<(String, f64)>,
    normalized: Vec<(String, f64)>,
    correct_restricted: bool,
    correct_full_vocab: bool,
}

pub fn score(input_json: &str) -> Result<String, String> {
    let input: ScoreInput = serde_json::from_str(input_json).map_err(|e| e.to_string())?;
    let texts: Vec<String> = (0..input.n_options).map(|i| format!("option {}", i + 1)).collect();
    let q = Question::from_texts("demo", "", texts, input.gold_index).map_err(|e| e.to_string())?;
    let first = input
        .candidates
        .into_iter()
        .filter(|(t, p)| !t.is_empty() && *p > 0.0)
        .map(|(t, p)| TokenCandidate::from_prob(t, p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    if first.is_empty() {
        return Err("enter at least one candidate with probability > 0".into());
    }
    let mut positions = vec![first];
    if let Some(second) = input.second_token.filter(|s| !s.is_empty()) {
        positions.push(vec![TokenCandidate::from_prob(second, 1.0).map_err(|e| e.to_string())?]);
    }
    let top_k = positions[0].len();
    let trace = GenerationTrace::from_positions(positions, top_k).map_err(|e| e.to_string())?;
    let mode = if input.strict {
        SurfaceMode::StrictSingle
    } else {
        SurfaceMode::Aggregate
    };
    let o = scoring::full_vocab_outcome(&trace, &q, mode).map_err(|e| e.to_string())?;
    let (norm, _) = metrics::normalize_options(&o.option_probs);
    let out = ScoreOutput {
        top1_token: o.top1_token.clone(),
        is_valid: o.is_valid,
        matched_label: o.matched_label.map(|l| l.to_string()),
        restricted_choice: o.restricted_choice.to_string(),
        degenerate: o.degenerate,
        option_mass: o.option_probs.iter().map(|(l, p)| (l.to_string(), *p)).collect(),
        normalized: o
            .option_probs
            .keys()
            .map(|l| l.to_string())
            .zip(norm.probs().iter().copied())
            .collect(),
        correct_restricted: o.restricted_choice == o.gold_label,
        correct_full_vocab: o.matched_label == Some(o.gold_label),
    };
    Ok(serde_json::to_string(&out).expect("score serializes"))
}

/// Score one first-token distribution the way the harness does.
#[wasm_bindgen]
pub fn score_first_token(input_json: &str) -> Result<String, JsError> {
    score(input_json).map_err(js_err)
}

#[derive(Deserialize)]
struct CalibrationInput {
    n: usize,
    k: usize,
    /// Probability that the sharpest option is the gold one.
    skill: f64,
    /// Multiplier on the random logits; larger values give more confident predictions.
    sharpness: f64,
    seed: u64,
    #[serde(default = "default_bins")]
    bins: usize,
    #[serde(default = "default_ranges")]
    ranges: usize,
}

fn default_bins() -> usize {
    metrics::DEFAULT_CALIBRATION_BINS
}

fn default_ranges() -> usize {
    metrics::DEFAULT_ACE_RANGES
}

#[derive(Serialize)]
struct CalibrationOutput {
    accuracy: f64,
    ace: Option<f64>,
    brier_x100: f64,
    log_loss: f64,
    bins: Vec<CalibrationBin>,
}

/// Synthetic predictions: each item draws random logits, scales them by
/// `sharpness`, and its gold label is the argmax with probability `skill`.
fn synthetic(input: &CalibrationInput) -> (Vec<ProbVector>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(input.seed);
    let mut vectors = Vec::with_capacity(input.n);
    let mut golds = Vec::with_capacity(input.n);
    for _ in 0..input.n {
        let logits: Vec<f64> = (0..input.k).map(|_| rng.gen::<f64>() * input.sharpness * 4.0).collect();
        let max = logits.iter().copied().fold(f64::MIN, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let v = ProbVector::raw(probs).expect("softmax output is a distribution");
        let top = v.argmax();
        let gold = if rng.gen_bool(input.skill) {
            top
        } else {
            let other = rng.gen_range(0..input.k - 1);
            if other >= top {
                other + 1
            } else {
                other
            }
        };
        vectors.push(v);
        golds.push(gold);
    }
    (vectors, golds)
}

pub fn calibration(input_json: &str) -> Result<String, String> {
    let input: CalibrationInput = serde_json::from_str(input_json).map_err(|e| e.to_string())?;
    if !(2..=26).contains(&input.k) {
        return Err("options must be between 2 and 26".into());
    }
    if input.n == 0 || input.n > 100_000 {
        return Err("items must be between 1 and 100000".into());
    }
    if !(0.0..=1.0).contains(&input.skill) || input.sharpness.is_nan() || input.sharpness < 0.0 {
        return Err("skill must lie in [0, 1] and sharpness must be >= 0".into());
    }
    let (vectors, golds) = synthetic(&input);
    let correct = vectors.iter().zip(&golds).filter(|(v, &g)| v.argmax() == g).count();
    let out = CalibrationOutput {
        accuracy: correct as f64 / input.n as f64,
        ace: metrics::ace(&vectors, &golds, input.ranges).ok(),
        brier_x100: metrics::brier_x100(&vectors, &golds).map_err(|e| e.to_string())?,
        log_loss: metrics::log_loss(&vectors, &golds).map_err(|e| e.to_string())?,
        bins: metrics::calibration_curve(&vectors, &golds, input.bins).map_err(|e| e.to_string())?,
    };
    Ok(serde_json::to_string(&out).expect("calibration serializes"))
}

/// Reliability diagram and calibration metrics for synthetic predictions.
#[wasm_bindgen]
pub fn explore_calibration(input_json: &str) -> Result<String, JsError> {
    calibration(input_json).map_err(js_err)
}
