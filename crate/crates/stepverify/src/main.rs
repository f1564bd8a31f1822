use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use stepverify::backend::{make_backend, BackendKind};
use stepverify::bench::{
    build_correctness_dataset, evaluate_verifier, load_labeled_records, load_qa_dataset,
    run_accuracy_benchmark, save_labeled_records, AccuracyReport, BenchMode, ItemOutcome, QAItem,
    answers_match,
};
use stepverify::config::RunConfig;
use stepverify::error::{Error, Result};
use stepverify::prompt::{PromptStyle, VerifierVariant};
use stepverify::search::{sb_search, sg_sc_search, sg_search, SearchTrace};
use stepverify::verifier::{verify_chain, ReasoningChain};

#[derive(Parser)]
#[command(name = "stepverify", version, about = "Step-wise verification for chain-of-thought reasoning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one reasoning chain per dataset item and score accuracy.
    Generate(RunArgs),
    /// Self-consistency: sample several chains per item and vote.
    Sc(ScArgs),
    /// Verifier-guided step-wise search.
    Search(SearchArgs),
    /// Verify a stored chain file, attaching per-step scores.
    Verify(VerifyArgs),
    /// Build a balanced correctness-classification dataset.
    BuildDataset(BuildArgs),
    /// Evaluate the verifier as a classifier on a labeled dataset.
    Classify(ClassifyArgs),
    /// Render a stored report as a table.
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Line-delimited QA dataset.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Report output path (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Prompt style: base, cot, ps-plus, tab-cot, cot-step.
    #[arg(long)]
    style: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Rule file for the scripted backend.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Base URL for the HTTP backend.
    #[arg(long)]
    base_url: Option<String>,
    /// Model name for the HTTP backend.
    #[arg(long)]
    model: Option<String>,
    /// Verifier prompt variant: r or cotr.
    #[arg(long)]
    variant: Option<String>,
    /// Score steps by the verification response alone.
    #[arg(long)]
    no_c1: bool,
    /// Write a per-turn search trace next to the output file.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct ScArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Voting policy.
    #[arg(long, value_parser = ["majority", "max", "weighted", "filter"])]
    policy: String,
    /// Number of sampled chains per item.
    #[arg(long)]
    samples: Option<usize>,
    /// Sampling temperature.
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Search strategy.
    #[arg(long, value_parser = ["sg", "sg-sc", "sb-sc"])]
    strategy: String,
    /// Candidate steps sampled per turn.
    #[arg(long)]
    k: Option<usize>,
    /// Initial samples for sg-sc.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    beam_width: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Initial pruning temperature.
    #[arg(long)]
    tau0: Option<f64>,
    /// Per-turn pruning temperature decay.
    #[arg(long)]
    alpha: Option<f64>,
    /// Sampling temperature for candidate steps.
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Line-delimited chain file to score.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 4000)]
    n_questions: usize,
    #[arg(long, default_value_t = 1000)]
    n_per_class: usize,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Labeled chain dataset to evaluate.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Stored report file.
    #[arg(long)]
    input: PathBuf,
}

/// Top-level report file. The timestamp is the only field excluded from
/// determinism comparisons.
#[derive(Serialize)]
struct ReportFile<T: Serialize> {
    timestamp: u64,
    seed: u64,
    config: serde_json::Value,
    result: T,
}

fn now_secs() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn merge_common(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &common.dataset {
        cfg.dataset_path = Some(p.display().to_string());
    }
    if let Some(p) = &common.output {
        cfg.output_path = Some(p.display().to_string());
    }
    if let Some(s) = &common.style {
        cfg.style = Some(s.clone());
    }
    if let Some(seed) = common.seed {
        cfg.seed = Some(seed);
    }
    if let Some(script) = &common.script {
        cfg.backend.kind = BackendKind::Scripted;
        cfg.backend.script_path = script.display().to_string();
    }
    if let Some(url) = &common.base_url {
        cfg.backend.kind = BackendKind::Http;
        cfg.backend.base_url = url.clone();
    }
    if let Some(model) = &common.model {
        cfg.backend.model_name = model.clone();
    }
    if let Some(variant) = &common.variant {
        cfg.scoring.verifier_variant = variant.parse::<VerifierVariant>()?;
    }
    if common.no_c1 {
        cfg.scoring.use_c1 = false;
    }
    if common.trace {
        cfg.trace = true;
    }
    Ok(cfg)
}

fn resolve_style(cfg: &RunConfig) -> Result<PromptStyle> {
    match &cfg.style {
        Some(tag) => tag.parse(),
        None => Ok(PromptStyle::CotStep),
    }
}

fn load_items(cfg: &RunConfig) -> Result<Vec<QAItem>> {
    let path = cfg
        .dataset_path
        .as_ref()
        .ok_or_else(|| Error::Config("dataset path is required (--dataset)".into()))?;
    load_qa_dataset(path)
}

fn emit_report<T: Serialize>(cfg: &RunConfig, seed: u64, result: T) -> Result<()> {
    let report = ReportFile {
        timestamp: now_secs(),
        seed,
        config: cfg.snapshot(),
        result,
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::invalid_state(format!("report serialization failed: {e}")))?;
    match &cfg.output_path {
        Some(path) => std::fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    Ok(())
}

fn run_benchmark(cfg: &RunConfig, mode: BenchMode) -> Result<()> {
    let style = resolve_style(cfg)?;
    let seed = cfg.seed.unwrap_or(0);
    let backend = make_backend(&cfg.backend)?;
    let items = load_items(cfg)?;
    eprintln!("running {mode:?} over {} items", items.len());
    let report =
        run_accuracy_benchmark(backend.as_ref(), &items, style, mode, &cfg.scoring, &cfg.search, seed)?;
    eprintln!("accuracy {:.4} ({}/{})", report.accuracy, report.correct, report.total);
    emit_report(cfg, seed, report)
}

fn trace_path(cfg: &RunConfig) -> String {
    match &cfg.output_path {
        Some(path) => format!("{path}.trace.jsonl"),
        None => "trace.jsonl".to_string(),
    }
}

/// Search benchmark with per-item trace collection.
fn run_search(cfg: &RunConfig, strategy: &str) -> Result<()> {
    let style = resolve_style(cfg)?;
    let seed = cfg.seed.unwrap_or(0);
    let backend = make_backend(&cfg.backend)?;
    let items = load_items(cfg)?;
    eprintln!("running search ({strategy}) over {} items", items.len());

    let mut per_item = Vec::with_capacity(items.len());
    let mut correct = 0;
    let mut traces: Vec<(String, SearchTrace)> = Vec::new();
    for item in &items {
        let mut search = cfg.search.clone();
        search.rng_seed = seed;
        search.answer_kind = item.answer_kind.hint();
        let run = || -> Result<(stepverify::parse::ExtractedAnswer, SearchTrace)> {
            match strategy {
                "sg" => {
                    let out =
                        sg_search(backend.as_ref(), &item.id, &item.question, style, &cfg.scoring, &search)?;
                    Ok((out.chain.answer, out.trace))
                }
                "sg-sc" => {
                    let out =
                        sg_sc_search(backend.as_ref(), &item.id, &item.question, style, &cfg.scoring, &search)?;
                    Ok((out.outcome.winner, out.trace))
                }
                "sb-sc" => {
                    let out =
                        sb_search(backend.as_ref(), &item.id, &item.question, style, &cfg.scoring, &search)?;
                    Ok((out.outcome.winner, out.trace))
                }
                other => Err(Error::invalid_input(format!("unknown strategy: {other}"))),
            }
        };
        let mut result = run();
        if result.is_err() {
            result = run();
        }
        let outcome = match result {
            Ok((answer, trace)) => {
                let matched = answers_match(&answer, &item.gold_answer, item.answer_kind.hint());
                if matched {
                    correct += 1;
                }
                if cfg.trace {
                    traces.push((item.id.clone(), trace));
                }
                ItemOutcome {
                    id: item.id.clone(),
                    predicted: answer.canonical,
                    gold: item.gold_answer.clone(),
                    correct: matched,
                    error: None,
                }
            }
            Err(e) => ItemOutcome {
                id: item.id.clone(),
                predicted: String::new(),
                gold: item.gold_answer.clone(),
                correct: false,
                error: Some(e.to_string()),
            },
        };
        per_item.push(outcome);
    }

    if cfg.trace {
        use std::io::Write;
        let path = trace_path(cfg);
        let mut file = std::fs::File::create(&path)?;
        for (id, trace) in &traces {
            for record in &trace.records {
                let mut value = serde_json::to_value(record)
                    .map_err(|e| Error::invalid_state(format!("trace serialization failed: {e}")))?;
                value["item"] = serde_json::Value::String(id.clone());
                writeln!(file, "{value}")?;
            }
        }
        eprintln!("trace written to {path}");
    }

    let mode = match strategy {
        "sg" => BenchMode::Sg,
        "sg-sc" => BenchMode::SgSc,
        _ => BenchMode::SbSc,
    };
    let report = AccuracyReport {
        mode,
        style,
        accuracy: correct as f64 / items.len() as f64,
        total: items.len(),
        correct,
        per_item,
        seed,
        config: serde_json::json!({
            "scoring": serde_json::to_value(&cfg.scoring).unwrap(),
            "search": serde_json::to_value(&cfg.search).unwrap(),
        }),
    };
    eprintln!("accuracy {:.4} ({}/{})", report.accuracy, report.correct, report.total);
    emit_report(cfg, seed, report)
}

fn run_verify(args: &VerifyArgs) -> Result<()> {
    use std::io::BufRead;
    let cfg = merge_common(&args.common)?;
    let backend = make_backend(&cfg.backend)?;
    let file = std::fs::File::open(&args.input)?;
    let mut chains = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let chain: ReasoningChain = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        chains.push(chain);
    }
    eprintln!("verifying {} chains", chains.len());
    for chain in &mut chains {
        verify_chain(backend.as_ref(), chain, &cfg.scoring)?;
    }
    let mut out = String::new();
    for chain in &chains {
        out.push_str(
            &serde_json::to_string(chain)
                .map_err(|e| Error::invalid_state(format!("chain serialization failed: {e}")))?,
        );
        out.push('\n');
    }
    match &cfg.output_path {
        Some(path) => std::fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

fn run_build_dataset(args: &BuildArgs) -> Result<()> {
    let cfg = merge_common(&args.common)?;
    let style = resolve_style(&cfg)?;
    let seed = cfg.seed.unwrap_or(0);
    let backend = make_backend(&cfg.backend)?;
    let items = load_items(&cfg)?;
    let dataset = build_correctness_dataset(
        backend.as_ref(),
        &items,
        style,
        args.n_questions.min(items.len()),
        args.n_per_class,
        seed,
    )?;
    if dataset.shortfall() > 0 {
        eprintln!(
            "class shortfall: kept {} per class (target {}, {} positive / {} negative available)",
            dataset.per_class_kept,
            dataset.per_class_target,
            dataset.positives_available,
            dataset.negatives_available
        );
    }
    let path = cfg
        .output_path
        .as_ref()
        .ok_or_else(|| Error::Config("output path is required (--output)".into()))?;
    save_labeled_records(&dataset.records, path)?;
    eprintln!("{} labeled records written to {path}", dataset.records.len());
    Ok(())
}

fn run_classify(args: &ClassifyArgs) -> Result<()> {
    let cfg = merge_common(&args.common)?;
    let seed = cfg.seed.unwrap_or(0);
    let backend = make_backend(&cfg.backend)?;
    let records = load_labeled_records(&args.input)?;
    eprintln!("classifying {} records", records.len());
    let evaluation = evaluate_verifier(backend.as_ref(), &records, &cfg.scoring)?;
    eprintln!(
        "acc {:.4} tpr {:.4} tnr {:.4}",
        evaluation.metrics.acc, evaluation.metrics.tpr, evaluation.metrics.tnr
    );
    emit_report(&cfg, seed, evaluation)
}

fn run_report(args: &ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.input)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    let result = &value["result"];
    if let Some(per_item) = result["per_item"].as_array() {
        println!(
            "mode: {}  style: {}  accuracy: {:.4}  ({}/{})  seed: {}",
            result["mode"].as_str().unwrap_or("?"),
            result["style"].as_str().unwrap_or("?"),
            result["accuracy"].as_f64().unwrap_or(f64::NAN),
            result["correct"],
            result["total"],
            value["seed"],
        );
        println!("{:<16} {:<16} {:<16} {}", "id", "predicted", "gold", "correct");
        for item in per_item {
            println!(
                "{:<16} {:<16} {:<16} {}",
                item["id"].as_str().unwrap_or("?"),
                item["predicted"].as_str().unwrap_or(""),
                item["gold"].as_str().unwrap_or(""),
                item["correct"],
            );
        }
    } else if let Some(metrics) = result.get("metrics") {
        println!("{:<12} {}", "metric", "value");
        for key in ["acc", "tnr", "tpr", "precision", "f1"] {
            println!("{:<12} {:.4}", key, metrics[key].as_f64().unwrap_or(f64::NAN));
        }
        println!(
            "confusion: tp {} fp {} tn {} fn {}",
            metrics["tp"], metrics["fp"], metrics["tn"], metrics["fn_"],
        );
    } else {
        println!("{}", serde_json::to_string_pretty(&value).unwrap_or(text));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => {
            let cfg = merge_common(&args.common)?;
            run_benchmark(&cfg, BenchMode::Single)
        }
        Command::Sc(args) => {
            let mut cfg = merge_common(&args.common)?;
            if let Some(samples) = args.samples {
                cfg.search.sc_initial_samples = samples;
            }
            if let Some(t) = args.temperature {
                cfg.search.sampling_temperature = t;
            }
            let mode = match args.policy.as_str() {
                "majority" => BenchMode::ScMajority,
                "max" => BenchMode::ScMax,
                "weighted" => BenchMode::ScWeighted,
                _ => BenchMode::ScFilter,
            };
            run_benchmark(&cfg, mode)
        }
        Command::Search(args) => {
            let mut cfg = merge_common(&args.common)?;
            if let Some(k) = args.k {
                cfg.search.k_candidates = k;
            }
            if let Some(samples) = args.samples {
                cfg.search.sc_initial_samples = samples;
            }
            if let Some(width) = args.beam_width {
                cfg.search.beam_width = width;
            }
            if let Some(max_steps) = args.max_steps {
                cfg.search.max_steps = max_steps;
            }
            if let Some(tau0) = args.tau0 {
                cfg.search.tau0 = tau0;
            }
            if let Some(alpha) = args.alpha {
                cfg.search.alpha = alpha;
            }
            if let Some(t) = args.temperature {
                cfg.search.sampling_temperature = t;
            }
            run_search(&cfg, &args.strategy)
        }
        Command::Verify(args) => run_verify(&args),
        Command::BuildDataset(args) => run_build_dataset(&args),
        Command::Classify(args) => run_classify(&args),
        Command::Report(args) => run_report(&args),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
}
