//! `relex`: train, score, predict, export attention data and run the
//! gradient check suite.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use relex_core::check::gradient_suite;
use relex_core::dataset::{build_vocab, parse_records, parse_semeval_with, split_dev, Example, ParseOptions};
use relex_core::embedding::load_pretrained;
use relex_core::evaluation::{macro_f1, write_predictions_file};
use relex_core::numerics::checkpoint::peek_header;
use relex_core::numerics::{CheckOptions, Fault, Rng};
use relex_core::trace::{trace_sentence, types_report};
use relex_core::trainer::train_with;
use relex_core::{Error, Model, ModelConfig, Result, Scalar};

/// Stream of the seed used for out-of-vocabulary word vectors.
const EMBEDDING_STREAM: u64 = u64::MAX;

#[derive(Parser)]
#[command(name = "relex", version, about = "Entity-aware attention relation classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write model.ckpt, report.json and report.csv.
    Train(TrainArgs),
    /// Score a labeled file; writes predictions.txt and score.json.
    Eval(EvalArgs),
    /// Label a file; writes predictions.txt.
    Predict(EvalArgs),
    /// Export self-attention, α and latent type data as JSON.
    Visualize(VisualizeArgs),
    /// Finite-difference check of every parameter group (64-bit).
    Check(CheckArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training file in SemEval-2010 Task 8 format.
    #[arg(long)]
    data: PathBuf,
    /// Held-out file; without it `dev_size` examples are split off `--data`.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Pre-trained vectors, one `token v1 … v_d` per line.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// TOML file overriding the default hyperparameters.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 32, value_parser = parse_precision)]
    precision: u8,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Expected dimensions; a checkpoint that disagrees is rejected.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct VisualizeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Sentences to trace (labels optional).
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the per-group results as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, hide = true, value_parser = parse_fault)]
    inject_fault: Option<Fault>,
}

fn parse_precision(s: &str) -> std::result::Result<u8, String> {
    match s {
        "32" => Ok(32),
        "64" => Ok(64),
        _ => Err("precision must be 32 or 64".into()),
    }
}

fn parse_fault(s: &str) -> std::result::Result<Fault, String> {
    match s {
        "tanh" => Ok(Fault::TanhBackward),
        "sigmoid" => Ok(Fault::SigmoidBackward),
        _ => Err("fault must be `tanh` or `sigmoid`".into()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("RELEX_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let inputs: Vec<&PathBuf> = match &cli.command {
        Command::Train(a) => [
            Some(&a.data),
            a.dev.as_ref(),
            a.embeddings.as_ref(),
            a.config.as_ref(),
        ]
        .into_iter()
        .flatten()
        .collect(),
        Command::Eval(a) | Command::Predict(a) => [Some(&a.checkpoint), Some(&a.test), a.config.as_ref()]
            .into_iter()
            .flatten()
            .collect(),
        Command::Visualize(a) => vec![&a.checkpoint, &a.test],
        Command::Check(_) => Vec::new(),
    };
    if let Err(e) = require_paths(inputs) {
        eprintln!("error: {e}");
        return ExitCode::from(exit_code(&e));
    }
    let result = match cli.command {
        Command::Train(a) => match a.precision {
            64 => train::<f64>(&a),
            _ => train::<f32>(&a),
        },
        Command::Eval(a) => with_checkpoint(&a.checkpoint, |b| eval::<f32>(b, &a), |b| eval::<f64>(b, &a)),
        Command::Predict(a) => with_checkpoint(
            &a.checkpoint,
            |b| predict::<f32>(b, &a),
            |b| predict::<f64>(b, &a),
        ),
        Command::Visualize(a) => with_checkpoint(
            &a.checkpoint,
            |b| visualize::<f32>(b, &a),
            |b| visualize::<f64>(b, &a),
        ),
        Command::Check(a) => check(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        Error::CheckpointMismatch(_) => 3,
        _ => 1,
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::io(path, source)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let s = serde_json::to_string_pretty(value)?;
    fs::write(path, s + "\n").map_err(|e| io_error(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

/// Fails with the first path that does not exist.
fn require_paths<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(io_error(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<ModelConfig> {
    match path {
        Some(p) => ModelConfig::default().merge_file(p),
        None => Ok(ModelConfig::default()),
    }
}

fn with_checkpoint(
    path: &Path,
    f32_run: impl FnOnce(&[u8]) -> Result<ExitCode>,
    f64_run: impl FnOnce(&[u8]) -> Result<ExitCode>,
) -> Result<ExitCode> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    match peek_header(&bytes)?.precision {
        64 => f64_run(&bytes),
        _ => f32_run(&bytes),
    }
}

fn train<T: Scalar>(a: &TrainArgs) -> Result<ExitCode> {
    let cfg = load_config(a.config.as_deref())?;
    let opts = ParseOptions {
        max_len: cfg.max_len,
        require_label: true,
    };
    let examples = parse_semeval_with(&read_text(&a.data)?, &opts)?;
    let (train, dev) = match &a.dev {
        Some(p) => (examples, parse_semeval_with(&read_text(p)?, &opts)?),
        None => split_dev(&examples, cfg.dev_size, a.seed)?,
    };
    let vocab = build_vocab(&train, cfg.min_count)?;
    let words = match &a.embeddings {
        Some(p) => {
            let mut rng = Rng::new(a.seed).fork(EMBEDDING_STREAM);
            let (table, found) = load_pretrained::<T>(p, &vocab, cfg.d_w, cfg.oov_std, &mut rng)?;
            eprintln!("embeddings: {found} of {} vocabulary entries found", vocab.len());
            Some(table)
        }
        None => None,
    };
    create_dir(&a.out)?;
    eprintln!(
        "training on {} sentences, selecting on {} ({}-bit, seed {})",
        train.len(),
        if dev.is_empty() {
            "the training set".to_string()
        } else {
            format!("{} dev sentences", dev.len())
        },
        T::BITS,
        a.seed
    );
    let model = Model::<T>::new(cfg.clone(), vocab, words, a.seed)?;
    let (model, report) = train_with(model, &train, &dev, a.seed, |e| {
        eprintln!(
            "epoch {:>3}  loss {:.4}  train acc {:.3}  dev F1 {:.4}  ({:.1}s)",
            e.epoch, e.train_loss, e.train_accuracy, e.dev_macro_f1, e.wall_secs
        );
    })?;
    model.save(&a.out.join("model.ckpt"))?;
    let mut value = serde_json::to_value(&report)?;
    value["config"] = serde_json::to_value(&cfg)?;
    value["seed"] = json!(a.seed);
    value["precision"] = json!(T::BITS);
    write_json(&a.out.join("report.json"), &value)?;
    report.write_csv(&a.out.join("report.csv"))?;
    if let (Some(best), Some(f1)) = (report.best_epoch, report.best_dev_macro_f1) {
        println!("best epoch {best}: macro-F1 {f1:.4}");
    }
    Ok(ExitCode::SUCCESS)
}

fn load_model<T: Scalar>(bytes: &[u8], config: Option<&Path>) -> Result<Model<T>> {
    let model = Model::<T>::from_bytes(bytes)?;
    if let Some(p) = config {
        model.ensure_compatible(&ModelConfig::default().merge_file(p)?)?;
    }
    Ok(model)
}

fn parse_input(path: &Path, max_len: usize, require_label: bool) -> Result<Vec<Example>> {
    parse_semeval_with(
        &read_text(path)?,
        &ParseOptions {
            max_len,
            require_label,
        },
    )
}

fn eval<T: Scalar>(bytes: &[u8], a: &EvalArgs) -> Result<ExitCode> {
    let model = load_model::<T>(bytes, a.config.as_deref())?;
    let examples = parse_input(&a.test, model.config.max_len, true)?;
    let pred = model.predict(&examples)?;
    let gold: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let ids: Vec<u64> = examples.iter().map(|e| e.id).collect();
    let score = macro_f1(&gold, &pred)?;
    create_dir(&a.out)?;
    write_predictions_file(&a.out.join("predictions.txt"), &ids, &pred)?;
    write_json(&a.out.join("score.json"), &score)?;
    println!(
        "macro-F1 {:.4}  accuracy {:.4}  ({} sentences)",
        score.macro_f1, score.accuracy, score.examples
    );
    Ok(ExitCode::SUCCESS)
}

fn predict<T: Scalar>(bytes: &[u8], a: &EvalArgs) -> Result<ExitCode> {
    let model = load_model::<T>(bytes, a.config.as_deref())?;
    let examples = parse_input(&a.test, model.config.max_len, false)?;
    let pred = model.predict(&examples)?;
    let ids: Vec<u64> = examples.iter().map(|e| e.id).collect();
    create_dir(&a.out)?;
    write_predictions_file(&a.out.join("predictions.txt"), &ids, &pred)?;
    Ok(ExitCode::SUCCESS)
}

fn visualize<T: Scalar>(bytes: &[u8], a: &VisualizeArgs) -> Result<ExitCode> {
    let model = Model::<T>::from_bytes(bytes)?;
    let opts = ParseOptions {
        max_len: model.config.max_len,
        require_label: false,
    };
    let mut traces = Vec::new();
    let mut errors = Vec::new();
    for (i, rec) in parse_records(&read_text(&a.test)?, &opts).into_iter().enumerate() {
        match rec.and_then(|ex| trace_sentence(&model, &ex)) {
            Ok(t) => traces.push(t),
            Err(e) => errors.push(json!({ "record": i, "message": e.to_string() })),
        }
    }
    create_dir(&a.out)?;
    let selfattn: Vec<Value> = traces
        .iter()
        .map(|t| {
            json!({
                "id": t.id,
                "tokens": t.tokens,
                "heads": t.heads,
                "records": t.self_attention_records(),
            })
        })
        .collect();
    let alpha: Vec<Value> = traces
        .iter()
        .map(|t| {
            json!({
                "id": t.id,
                "tokens": t.tokens,
                "predicted": t.predicted,
                "gold": t.gold,
                "alpha": t.alpha,
                "entities": t.entities.iter().map(|e| json!({
                    "position": e.position,
                    "token": e.token,
                    "type_weights": e.type_weights,
                    "type_id": e.type_id,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    write_json(
        &a.out.join("selfattn.json"),
        &json!({ "sentences": selfattn, "errors": errors }),
    )?;
    write_json(
        &a.out.join("alpha.json"),
        &json!({ "sentences": alpha, "errors": errors }),
    )?;
    write_json(&a.out.join("types.json"), &types_report(&model, &traces))?;
    for e in &errors {
        eprintln!("skipped: {}", e["message"].as_str().unwrap_or_default());
    }
    println!("traced {} sentences, {} failed", traces.len(), errors.len());
    if traces.is_empty() {
        return Err(Error::InvalidArgument("no sentence could be traced".into()));
    }
    Ok(ExitCode::SUCCESS)
}

fn check(a: &CheckArgs) -> Result<ExitCode> {
    let opts = CheckOptions { h: 1e-5, tol: a.tol };
    let report = gradient_suite(a.seed, &opts, a.inject_fault)?;
    println!("{:<12} {:>8} {:>14}", "group", "checked", "max rel err");
    for g in &report.groups {
        println!(
            "{:<12} {:>8} {:>14.3e}  {}",
            g.group,
            g.checked,
            g.max_rel_error,
            if g.passed { "ok" } else { "FAIL" }
        );
    }
    if let Some(p) = &a.out {
        write_json(p, &report)?;
    }
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        println!("gradient check failed at tolerance {:e}", a.tol);
        ExitCode::FAILURE
    })
}
