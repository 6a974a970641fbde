mod common;

use std::path::PathBuf;

use ftp_harness::templating::{
    builtin_chat_formats, builtin_prefill_templates, default_prefill_template, render_prompt, PromptLayout,
};
use ftp_harness::types::{ChatFormat, Question, RenderMode};
use ftp_harness::{dataset, PrefillTemplate};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Compare against a checked-in file; `BLESS=1` rewrites it.
fn check_golden(name: &str, actual: &str) {
    let path = golden_dir().join(name);
    if std::env::var_os("BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected =
        std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e} (run with BLESS=1)", path.display()));
    assert_eq!(actual, expected, "golden mismatch for {name}");
}

fn toy_first() -> Question {
    dataset::builtin_toy_dataset().remove(0)
}

#[test]
fn golden_prompts_for_every_builtin_format() {
    let q = toy_first();
    let layout = PromptLayout::default();
    let t07 = default_prefill_template();
    for fmt in builtin_chat_formats() {
        for mode in [RenderMode::PlainFtp, RenderMode::PromptInstruction, RenderMode::Prefill] {
            let prefill = (mode == RenderMode::Prefill).then_some(&t07);
            let p = render_prompt(&q, &layout, &fmt, mode, prefill).unwrap();
            check_golden(&format!("{}_{}.txt", fmt.name(), mode), p.text());
        }
    }
}

#[test]
fn spec_style_example_formats() {
    let fmt = ChatFormat::new("tagged", "<|user|>", "<|end|>", "<|assistant|>", "<|end|>").unwrap();
    let q = Question::from_texts("x", "Pick one.", vec!["w", "x", "y", "z"], 2).unwrap();
    let layout = PromptLayout::default();
    let t = default_prefill_template();
    let pre = render_prompt(&q, &layout, &fmt, RenderMode::Prefill, Some(&t)).unwrap();
    assert!(pre
        .text()
        .ends_with("<|assistant|>Given the question and the possible options, my answer is:"));
    assert_eq!(pre.prefill_id(), Some("t07"));
    let plain = render_prompt(&q, &layout, &fmt, RenderMode::PlainFtp, None).unwrap();
    assert!(plain.text().ends_with("<|assistant|>"));
    assert_eq!(plain.prefill_id(), None);
    let instr = render_prompt(&q, &layout, &fmt, RenderMode::PromptInstruction, None).unwrap();
    let user_turn = &instr.text()[..instr.text().find("<|assistant|>").unwrap()];
    assert!(user_turn.contains("Please answer only with A, B, C, D"));
}

#[test]
fn builtin_formats_render_empty_turns_as_delimiters() {
    let formats = builtin_chat_formats();
    assert!(formats.len() >= 3);
    for f in &formats {
        assert_eq!(
            f.render_exchange("", ""),
            [f.user_open(), f.user_close(), f.assistant_open(), f.assistant_close()].concat()
        );
        let json = serde_json::to_string(f).unwrap();
        assert_eq!(&serde_json::from_str::<ChatFormat>(&json).unwrap(), f);
    }
}

#[test]
fn ten_templates_with_t07_default() {
    let ts = builtin_prefill_templates();
    let ids: Vec<&str> = ts.iter().map(|t| t.id()).collect();
    assert_eq!(
        ids,
        ["t01", "t02", "t03", "t04", "t05", "t06", "t07", "t08", "t09", "t10"]
    );
    assert_eq!(
        default_prefill_template().text(),
        "Given the question and the possible options, my answer is:"
    );
    for t in &ts {
        assert!(!t.text().is_empty() && !t.text().ends_with('\n'));
    }
}

#[test]
fn mode_and_prefill_must_agree() {
    let q = toy_first();
    let layout = PromptLayout::default();
    let fmt = &builtin_chat_formats()[0];
    let t = default_prefill_template();
    assert!(render_prompt(&q, &layout, fmt, RenderMode::Prefill, None).is_err());
    assert!(render_prompt(&q, &layout, fmt, RenderMode::PlainFtp, Some(&t)).is_err());
    assert!(render_prompt(&q, &layout, fmt, RenderMode::PromptInstruction, Some(&t)).is_err());
}

#[test]
fn rendering_a_stem_that_contains_assistant_open_is_rejected() {
    let fmt = &builtin_chat_formats()[0];
    let q = Question::from_texts("x", format!("smuggled {}", fmt.assistant_open()), vec!["a", "b"], 0).unwrap();
    let err = render_prompt(&q, &PromptLayout::default(), fmt, RenderMode::PlainFtp, None).unwrap_err();
    assert!(err.to_string().contains("assistant_open"), "{err}");
}

proptest! {
    #[test]
    fn prefill_is_plain_plus_template(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = common::random_question(&mut rng, 0);
        let fmt = common::random_format(&mut rng);
        let t: PrefillTemplate = common::random_template(&mut rng);
        let layout = PromptLayout::default();
        let plain = render_prompt(&q, &layout, &fmt, RenderMode::PlainFtp, None).unwrap();
        let pre = render_prompt(&q, &layout, &fmt, RenderMode::Prefill, Some(&t)).unwrap();
        prop_assert_eq!(pre.text(), format!("{}{}", plain.text(), t.text()));
        prop_assert_eq!(plain.text().matches(fmt.assistant_open()).count(), 1);
        prop_assert!(!pre.text().ends_with(fmt.assistant_close()) || fmt.assistant_close().is_empty());
    }

    #[test]
    fn one_option_line_per_option_in_label_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = common::random_question(&mut rng, 0);
        let lines = PromptLayout::default().option_lines(&q);
        prop_assert_eq!(lines.len(), q.n_options());
        for (line, opt) in lines.iter().zip(q.options()) {
            prop_assert_eq!(line, &format!("{}) {}", opt.label, opt.text));
        }
    }
}
