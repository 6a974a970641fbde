use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ftp_harness::backend::{self, BackendConfig, BackendKind};
use ftp_harness::config::{self, ChatFormatSpec, HarnessConfig};
use ftp_harness::metrics::CalibrationInput;
use ftp_harness::types::RenderMode;
use ftp_harness::{dataset, emit_report, templating, EvalMode, ReportFormat, RunError};

const EXIT_CONFIG: u8 = 2;
const EXIT_BACKEND: u8 = 3;
const EXIT_DATASET: u8 = 4;

#[derive(Parser)]
#[command(
    name = "ftp-harness",
    version,
    about = "First-token-probability MCQA evaluation with output prefilling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a dataset and write a report.
    Run(Box<RunArgs>),
    /// Check a JSONL dataset and print its question count.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// List the bundled prefill templates.
    Templates,
    /// List the bundled chat formats as JSON.
    Formats,
}

#[derive(Args, Default)]
struct RunArgs {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// plain_ftp | prompt_instruction | prefill | full_vocab | open_ended
    #[arg(long)]
    mode: Option<EvalMode>,
    /// Prompt rendering for full_vocab runs: plain_ftp | prompt_instruction | prefill
    #[arg(long)]
    prompt_style: Option<RenderMode>,
    /// JSONL dataset; the bundled toy set when omitted.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    backend_url: Option<String>,
    /// Use the scripted mock backend with this JSON script.
    #[arg(long, conflicts_with = "backend_url")]
    mock_script: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, conflicts_with = "all_templates")]
    template_id: Option<String>,
    #[arg(long)]
    all_templates: bool,
    /// Builtin chat format name.
    #[arg(long)]
    chat_format: Option<String>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    /// json | csv
    #[arg(long)]
    report_format: Option<ReportFormat>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Judge endpoint for open_ended mode.
    #[arg(long)]
    judge_url: Option<String>,
    #[arg(long, conflicts_with = "judge_url")]
    judge_mock_script: Option<PathBuf>,
    #[arg(long)]
    judge_model: Option<String>,
    /// Count only the bare label surface toward option mass.
    #[arg(long)]
    strict_single_surface: bool,
    /// Calibrate on raw option mass instead of renormalized probabilities.
    #[arg(long)]
    raw_calibration: bool,
}

enum Failure {
    Config(String),
    Backend(String),
    Dataset(String),
}

impl Failure {
    fn exit(self) -> ExitCode {
        let (code, msg) = match self {
            Failure::Config(m) => (EXIT_CONFIG, m),
            Failure::Backend(m) => (EXIT_BACKEND, m),
            Failure::Dataset(m) => (EXIT_DATASET, m),
        };
        eprintln!("error: {msg}");
        ExitCode::from(code)
    }
}

fn merge(args: RunArgs) -> Result<HarnessConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => HarnessConfig::load(p).map_err(Failure::Config)?,
        None => HarnessConfig::default(),
    };
    if args.mode.is_some() {
        cfg.mode = args.mode;
    }
    if args.prompt_style.is_some() {
        cfg.prompt_style = args.prompt_style;
    }
    if args.dataset.is_some() {
        cfg.dataset = args.dataset;
    }
    if let Some(url) = args.backend_url {
        let mut b = cfg
            .backend
            .take()
            .unwrap_or_else(|| BackendConfig::http(&url, "default"));
        b.kind = BackendKind::Http;
        b.base_url = Some(url);
        cfg.backend = Some(b);
        cfg.mock_script = None;
    }
    if let Some(p) = args.mock_script {
        let mut b = cfg.backend.take().unwrap_or_else(|| BackendConfig::mock("mock"));
        b.kind = BackendKind::Mock;
        b.base_url = None;
        cfg.backend = Some(b);
        cfg.mock_script = Some(p);
    }
    if let Some(b) = cfg.backend.as_mut() {
        if let Some(m) = args.model {
            b.model_name = m;
        }
        if let Some(k) = args.top_k {
            b.top_k = k;
        }
        if let Some(n) = args.max_in_flight {
            b.max_in_flight = n;
        }
    }
    if let Some(url) = args.judge_url {
        let mut j = cfg.judge.take().unwrap_or_else(|| BackendConfig::http(&url, "judge"));
        j.kind = BackendKind::Http;
        j.base_url = Some(url);
        cfg.judge = Some(j);
        cfg.judge_mock_script = None;
    }
    if let Some(p) = args.judge_mock_script {
        cfg.judge = Some(cfg.judge.take().unwrap_or_else(|| BackendConfig::mock("judge")));
        if let Some(j) = cfg.judge.as_mut() {
            j.kind = BackendKind::Mock;
            j.base_url = None;
        }
        cfg.judge_mock_script = Some(p);
    }
    if let (Some(j), Some(m)) = (cfg.judge.as_mut(), args.judge_model) {
        j.model_name = m;
    }
    if args.template_id.is_some() {
        cfg.template_id = args.template_id;
        cfg.all_templates = Some(false);
    }
    if args.all_templates {
        cfg.all_templates = Some(true);
        cfg.template_id = None;
    }
    if let Some(name) = args.chat_format {
        cfg.chat_format = Some(ChatFormatSpec::Named(name));
    }
    if args.report_format.is_some() {
        cfg.report_format = args.report_format;
    }
    if args.out.is_some() {
        cfg.out = args.out;
    }
    if args.strict_single_surface {
        cfg.strict_single_surface = Some(true);
    }
    if args.raw_calibration {
        cfg.calibration_input = Some(CalibrationInput::Raw);
    }
    Ok(cfg)
}

fn connect(
    cfg: Option<&BackendConfig>,
    script: Option<&Path>,
    what: &str,
) -> Result<Box<dyn backend::Backend>, Failure> {
    let cfg =
        cfg.ok_or_else(|| Failure::Config(format!("no {what} configured (use --{what}-url or a mock script)")))?;
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let script = match (cfg.kind, script) {
        (BackendKind::Mock, Some(p)) => Some(config::load_mock_script(p).map_err(Failure::Config)?),
        (BackendKind::Mock, None) => return Err(Failure::Config(format!("mock {what} needs a script"))),
        (BackendKind::Http, _) => None,
    };
    backend::connect(cfg, script).map_err(|e| Failure::Config(e.to_string()))
}

fn recovery_path(out: Option<&Path>) -> PathBuf {
    match out {
        Some(p) => {
            let mut s = p.as_os_str().to_owned();
            s.push(".partial.json");
            PathBuf::from(s)
        }
        None => PathBuf::from("ftp-harness-recovery.json"),
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let cfg = merge(args)?;
    let run_cfg = cfg.run_config().map_err(Failure::Config)?;
    let questions = cfg.load_questions().map_err(|e| Failure::Dataset(e.to_string()))?;
    let backend = connect(cfg.backend.as_ref(), cfg.mock_script.as_deref(), "backend")?;
    let judge = if run_cfg.mode == EvalMode::OpenEnded {
        Some(connect(cfg.judge.as_ref(), cfg.judge_mock_script.as_deref(), "judge")?)
    } else {
        None
    };
    let report = match ftp_harness::run_eval(&run_cfg, &questions, backend.as_ref(), judge.as_deref()) {
        Ok(r) => r,
        Err(RunError::Backend { partial }) => {
            let path = recovery_path(cfg.out.as_deref());
            let dump = serde_json::to_vec_pretty(&partial).expect("partial results serialize");
            let note = match std::fs::write(&path, dump) {
                Ok(()) => format!("partial results written to {}", path.display()),
                Err(e) => format!("could not write {}: {e}", path.display()),
            };
            let err = RunError::Backend { partial };
            return Err(Failure::Backend(format!("{err}; {note}")));
        }
        Err(e @ RunError::Transport(_)) => return Err(Failure::Backend(e.to_string())),
        Err(e) => return Err(Failure::Config(e.to_string())),
    };
    let bytes = emit_report(&report, cfg.report_format.unwrap_or_default());
    match &cfg.out {
        Some(p) => std::fs::write(p, &bytes).map_err(|e| Failure::Config(format!("writing {}: {e}", p.display())))?,
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| Failure::Config(e.to_string()))?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(*args),
        Command::Validate { dataset: path } => match dataset::load_jsonl(&path) {
            Ok(qs) => {
                println!("{}: {} questions", path.display(), qs.len());
                Ok(())
            }
            Err(e) => Err(Failure::Dataset(e.to_string())),
        },
        Command::Templates => {
            for t in templating::builtin_prefill_templates() {
                let marker = if t.id() == templating::DEFAULT_TEMPLATE_ID {
                    " (default)"
                } else {
                    ""
                };
                println!("{}{marker}\t{}", t.id(), t.text());
            }
            Ok(())
        }
        Command::Formats => {
            let formats = templating::builtin_chat_formats();
            println!("{}", serde_json::to_string_pretty(&formats).expect("formats serialize"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.exit(),
    }
}
