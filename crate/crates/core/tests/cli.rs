mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ftp_harness::types::EvalReport;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ftp-harness"));
    c.env_remove("FTP_HARNESS_API_KEY").env("RUST_LOG", "error");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn write_script(dir: &Path, name: &str, script: &ftp_harness::MockScript) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(script).unwrap()).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn full_vocab_run_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), "steer.json", &common::steering_script());
    let out = dir.path().join("report.json");
    let o = run(
        &[
            "run",
            "--mock-script",
            script.to_str().unwrap(),
            "--mode",
            "full_vocab",
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r: EvalReport = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(r.ftvr, Some(100.0));
    assert_eq!(r.full_vocab_accuracy, Some(0.4));
    assert_eq!(r.dataset_name, "toy");

    let o = run(
        &[
            "run",
            "--mock-script",
            script.to_str().unwrap(),
            "--mode",
            "full_vocab",
            "--prompt-style",
            "plain_ftp",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r: EvalReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r.ftvr, Some(0.0));
}

#[test]
fn csv_output_and_template_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), "noisy.json", &common::noisy_script(2));
    let o = run(
        &[
            "run",
            "--mock-script",
            script.to_str().unwrap(),
            "--all-templates",
            "--report-format",
            "csv",
            "--chat-format",
            "llama3",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with("schema_version,"));
    assert!(csv.contains("\nt01,") && csv.contains("\nt10,"));
    assert!(csv.contains("\nmean,") && csv.contains("\nstd,"));
}

#[test]
fn identical_reports_across_concurrency_limits() {
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), "noisy.json", &common::noisy_script(4));
    let outputs: Vec<Vec<u8>> = ["1", "8", "1"]
        .iter()
        .map(|n| {
            let o = run(
                &[
                    "run",
                    "--mock-script",
                    script.to_str().unwrap(),
                    "--mode",
                    "full_vocab",
                    "--max-in-flight",
                    n,
                ],
                dir.path(),
            );
            assert!(o.status.success(), "{}", stderr(&o));
            o.stdout
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    write_script(dir.path(), "steer.json", &common::steering_script());
    let data = dir.path().join("mini.jsonl");
    std::fs::write(
        &data,
        "{\"id\":\"m1\",\"stem\":\"Pick B\",\"options\":[\"no\",\"yes\"],\"gold_index\":1}\n\
         {\"id\":\"m2\",\"stem\":\"Pick A\",\"options\":[\"yes\",\"no\"],\"gold_index\":0}\n",
    )
    .unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"mode": "prefill", "dataset": "mini.jsonl", "mock_script": "steer.json",
            "backend": {"kind": "mock", "model_name": "scripted"}, "chat_format": "gemma"}"#,
    )
    .unwrap();
    // Paths inside the file resolve against its directory, not the cwd.
    let elsewhere = tempfile::tempdir().unwrap();
    let o = run(
        &["run", "--config", cfg.to_str().unwrap(), "--mode", "full_vocab"],
        elsewhere.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r: EvalReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r.mode, "full_vocab");
    assert_eq!(r.dataset_name, "mini");
    assert_eq!(r.model_name, "scripted");
    assert_eq!(r.n_questions, 2);
    assert_eq!(r.full_vocab_accuracy, Some(0.5));
}

#[test]
fn open_ended_with_mock_judge() {
    let dir = tempfile::tempdir().unwrap();
    let eos = ftp_harness::MockScript::dist(&[("</s>", 0.9)]);
    let gen = ftp_harness::MockScript::new(ftp_harness::MockScript::dist(&[("Four", 0.9)]), 0)
        .unwrap()
        .with_override(
            "Red Planet",
            vec![ftp_harness::MockScript::dist(&[("Mars", 0.9)]), eos.clone()],
        )
        .unwrap();
    let judge = ftp_harness::MockScript::new(eos, 0)
        .unwrap()
        .with_override("output:\nMars\n", vec![ftp_harness::MockScript::dist(&[("C", 0.9)])])
        .unwrap();
    let g = write_script(dir.path(), "gen.json", &gen);
    let j = write_script(dir.path(), "judge.json", &judge);
    let o = run(
        &[
            "run",
            "--mode",
            "open_ended",
            "--mock-script",
            g.to_str().unwrap(),
            "--judge-mock-script",
            j.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r: EvalReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r.accuracy, Some(0.05));
    assert_eq!(r.unparsed_replies, Some(19));

    let o = run(
        &["run", "--mode", "open_ended", "--mock-script", g.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), "s.json", &common::steering_script());
    let s = script.to_str().unwrap();

    let o = run(&["run", "--mock-script", s, "--dataset", "missing.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    std::fs::write(dir.path().join("bad.jsonl"), "{\"id\":\"x\"}\n").unwrap();
    let o = run(&["run", "--mock-script", s, "--dataset", "bad.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));

    for args in [
        vec!["run", "--mock-script", s, "--template-id", "t99"],
        vec!["run", "--mock-script", s, "--mode", "plain_ftp", "--all-templates"],
        vec!["run", "--mock-script", s, "--chat-format", "nope"],
        vec!["run"],
        vec!["run", "--mock-script", "absent.json"],
        vec!["run", "--mock-script", s, "--mode", "sideways"],
    ] {
        let o = run(&args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn backend_failure_exits_3_and_writes_partial_results() {
    let server = common::StubServer::start(|_, req| {
        if req.json()["prompt"].as_str().unwrap().contains("Red Planet") {
            (400, "no".into())
        } else {
            (
                200,
                common::completion_body(&[&[(" A", -0.5), ("x", -2.0)], &[(")", -0.1)]]),
            )
        }
    });
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "run",
            "--backend-url",
            &server.base_url,
            "--model",
            "stub",
            "--out",
            "r.json",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(!dir.path().join("r.json").exists());
    let partial: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("r.json.partial.json")).unwrap()).unwrap();
    assert_eq!(partial["completed"].as_array().unwrap().len(), 19);
    assert_eq!(partial["failed"][0]["question_id"], "toy-02");
    assert!(stderr(&o).contains("partial results written"));

    let ok = common::StubServer::start(|_, _| (200, common::completion_body(&[&[(" A", -0.5)], &[(")", -0.1)]])));
    let o = bin()
        .args(["run", "--backend-url", &ok.base_url, "--top-k", "3"])
        .env("FTP_HARNESS_API_KEY", "sk-cli")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let reqs = ok.requests();
    assert_eq!(reqs.len(), 20);
    assert!(reqs.iter().all(|r| r.header("authorization") == Some("Bearer sk-cli")));
    assert!(reqs.iter().all(|r| r.json()["logprobs"] == 3));
    let r: EvalReport = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r.caveats.iter().any(|c| c.contains("top-3")));
}

#[test]
fn auxiliary_commands() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["templates"], dir.path());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 10);
    assert!(text.contains("t07 (default)\tGiven the question and the possible options, my answer is:"));

    let o = run(&["formats"], dir.path());
    let formats: Vec<ftp_harness::ChatFormat> = serde_json::from_slice(&o.stdout).unwrap();
    assert!(formats.len() >= 3);

    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy.jsonl");
    let o = run(&["validate", "--dataset", data], dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().contains("20 questions"));
}
