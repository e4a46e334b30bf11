//! Operator entry point. Subcommands: generate, train, eval, gradcheck,
//! predict. Exit codes: 0 success, 1 usage error, 2 validation error,
//! 3 numeric failure. Logs go to stderr, data to files or stdout.

mod config;

use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use serde_json::json;
use std::io::Write;
use std::path::PathBuf;
use stgcn_core::data::{
    generate_video, load_model, read_dataset, save_model, write_dataset, ModelArchive,
};
use stgcn_core::graph::{Label, STGraphSequence};
use stgcn_core::metrics::{accumulate, finalize, hard_decision, MetricsReport, NodeConfusion};
use stgcn_core::model::{forward, ModelConfig, Prediction};
use stgcn_core::training::{grad_check_model, sequence_loss, train, TrainConfig};
use stgcn_core::Error;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn render(&self) -> String {
        match self {
            CliError::Usage(m) => format!("error[usage]: {m}"),
            CliError::Validation(m) => format!("error[validation]: {m}"),
            CliError::Numeric(m) => format!("error[numeric]: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Numeric(m) => CliError::Numeric(m),
            other => CliError::Validation(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "stgcn", about = "Per-cell dead/alive classification over video-as-graph sequences", version)]
struct Cli {
    /// TOML config file with [model], [train] and [synth] sections.
    /// Command-line flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Print the fully resolved configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,

    /// Worker threads for generation and evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    Generate(GenerateArgs),
    /// Train a model on a dataset and write a model archive.
    Train(TrainArgs),
    /// Evaluate a model archive against a dataset.
    Eval(EvalArgs),
    /// Check reverse-mode gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Write per-sequence predictions for a dataset.
    Predict(PredictArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output dataset path (one record per line).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    videos: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    max_cells: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    death_onset_prob: Option<f64>,
    #[arg(long)]
    feature_sep: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset path.
    #[arg(long)]
    data: PathBuf,
    /// Output model archive path.
    #[arg(long)]
    out: PathBuf,
    /// Optional validation dataset evaluated each epoch.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Optional file receiving the per-epoch log lines.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    death_class_weight: Option<f64>,
    #[arg(long)]
    no_shuffle: bool,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    gc_dim: Option<usize>,
    #[arg(long)]
    attn_dim: Option<usize>,
    #[arg(long)]
    gc_layers: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output metrics report path (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 4)]
    frames: usize,
    #[arg(long, default_value_t = 3)]
    nodes: usize,
    #[arg(long, default_value_t = 5)]
    feature_dim: usize,
    #[arg(long, default_value_t = 6)]
    gc_dim: usize,
    #[arg(long, default_value_t = 6)]
    hidden: usize,
    #[arg(long, default_value_t = 4)]
    attn_dim: usize,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output predictions path (one record per line).
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap's own help/version output is not an error
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprintln!("error[usage]: {e}");
            std::process::exit(1);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("{}", e.render());
            std::process::exit(e.code());
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let workers = cli.workers.max(1);
    match cli.command {
        Some(Command::Generate(a)) => cmd_generate(cfg, a, workers),
        Some(Command::Train(a)) => cmd_train(cfg, a),
        Some(Command::Eval(a)) => cmd_eval(cfg, a, workers),
        Some(Command::Gradcheck(a)) => cmd_gradcheck(a),
        Some(Command::Predict(a)) => cmd_predict(a),
        None => Err(CliError::Usage("a subcommand is required; see --help".to_string())),
    }
}

/// Run `f(i)` for each index across `workers` threads, collecting
/// results in index order regardless of scheduling.
fn indexed_parallel<T, F>(count: usize, workers: usize, f: F) -> Result<Vec<T>, CliError>
where
    T: Send,
    F: Fn(usize) -> Result<T, Error> + Sync,
{
    if workers <= 1 || count <= 1 {
        return (0..count).map(|i| f(i).map_err(CliError::from)).collect();
    }
    let mut slots: Vec<Option<Result<T, Error>>> = (0..count).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots_ref = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(count) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let r = f(i);
                slots_ref.lock().expect("slot lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("all slots filled").map_err(CliError::from))
        .collect()
}

fn cmd_generate(mut cfg: RunConfig, a: GenerateArgs, workers: usize) -> Result<(), CliError> {
    if let Some(v) = a.videos {
        cfg.synth.videos = v;
    }
    if let Some(t) = a.frames {
        if t == 0 {
            return Err(CliError::Usage("--frames must be at least 1".to_string()));
        }
        cfg.synth.t = t;
    }
    if let Some(c) = a.max_cells {
        if c == 0 {
            return Err(CliError::Usage("--max-cells must be at least 1".to_string()));
        }
        cfg.synth.max_cells = c;
        cfg.synth.cell_count_weights = vec![1.0; c];
    }
    if let Some(f) = a.feature_dim {
        cfg.synth.f = f;
    }
    if let Some(s) = a.seed {
        cfg.synth.seed = s;
    }
    if let Some(p) = a.death_onset_prob {
        cfg.synth.death_onset_prob = p;
    }
    if let Some(s) = a.feature_sep {
        cfg.synth.feature_sep = s;
    }
    if let Some(t) = a.threshold {
        cfg.synth.threshold = t;
    }
    cfg.synth.validate().map_err(CliError::from)?;

    let synth = &cfg.synth;
    let dataset: Vec<STGraphSequence> =
        indexed_parallel(synth.videos, workers, |i| generate_video(synth, i))?;
    write_dataset(&a.out, &dataset).map_err(CliError::from)?;

    let mut dead = vec![0usize; synth.max_cells];
    let mut alive = vec![0usize; synth.max_cells];
    for s in &dataset {
        for (v, &l) in s.labels.iter().enumerate() {
            match l {
                Label::Dead => dead[v] += 1,
                Label::Alive => alive[v] += 1,
            }
        }
    }
    for v in 0..synth.max_cells {
        println!("node {}: dead={} alive={}", v + 1, dead[v], alive[v]);
    }
    Ok(())
}

fn resolve_model_config(
    cfg: &RunConfig,
    dataset: &[STGraphSequence],
) -> Result<ModelConfig, CliError> {
    let mut model = cfg.model.clone();
    if let Some(first) = dataset.first() {
        model.f = first.f;
        model.n = first.n;
        model.t = first.t;
    }
    model.validate().map_err(CliError::from)?;
    Ok(model)
}

fn cmd_train(mut cfg: RunConfig, a: TrainArgs) -> Result<(), CliError> {
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        cfg.train.learning_rate = lr;
    }
    if let Some(b) = a.batch {
        cfg.train.batch = b;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(w) = a.death_class_weight {
        cfg.train.death_class_weight = w;
    }
    if a.no_shuffle {
        cfg.train.shuffle = false;
    }
    if let Some(h) = a.hidden {
        cfg.model.h = h;
    }
    if let Some(g) = a.gc_dim {
        cfg.model.g = g;
    }
    if let Some(d) = a.attn_dim {
        cfg.model.d_a = d;
    }
    if let Some(l) = a.gc_layers {
        cfg.model.gc_layers = l;
    }
    cfg.train.validate().map_err(CliError::from)?;

    let dataset = read_dataset(&a.data).map_err(CliError::from)?;
    if dataset.is_empty() {
        return Err(CliError::Validation("training dataset is empty".to_string()));
    }
    let model_cfg = resolve_model_config(&cfg, &dataset)?;
    let validation = match &a.val {
        Some(p) => Some(read_dataset(p).map_err(CliError::from)?),
        None => None,
    };

    let mut log_file = match &a.log {
        Some(p) => Some(std::fs::File::create(p).map_err(|e| {
            CliError::Validation(format!("cannot create log {}: {e}", p.display()))
        })?),
        None => None,
    };
    let mut hook = |epoch: usize, loss: f64, val_acc: Option<f64>| {
        let line = match val_acc {
            Some(acc) => format!("{epoch}\t{loss}\t{acc}"),
            None => format!("{epoch}\t{loss}"),
        };
        eprintln!("{line}");
        if let Some(f) = log_file.as_mut() {
            let _ = writeln!(f, "{line}");
        }
    };
    let (params, _history) = train(
        &dataset,
        validation.as_deref(),
        &model_cfg,
        &cfg.train,
        Some(&mut hook),
    )
    .map_err(CliError::from)?;
    save_model(&a.out, &ModelArchive::new(&model_cfg, &params)).map_err(CliError::from)?;
    Ok(())
}

fn load_model_and_data(
    model_path: &std::path::Path,
    data_path: &std::path::Path,
) -> Result<(ModelConfig, stgcn_core::model::ModelParams, Vec<STGraphSequence>), CliError> {
    let archive = load_model(model_path).map_err(CliError::from)?;
    let params = archive.params().map_err(CliError::from)?;
    let dataset = read_dataset(data_path).map_err(CliError::from)?;
    Ok((archive.model_config, params, dataset))
}

/// The summary row prints the exact serialized field values from the
/// report, tab-separated.
fn summary_row(report: &MetricsReport) -> String {
    [
        serde_json::to_string(&report.average_accuracy).expect("serializable"),
        serde_json::to_string(&report.mean_loss).expect("serializable"),
        serde_json::to_string(&report.average_precision).expect("serializable"),
        serde_json::to_string(&report.average_recall).expect("serializable"),
    ]
    .join("\t")
}

fn cmd_eval(_cfg: RunConfig, a: EvalArgs, workers: usize) -> Result<(), CliError> {
    let (model_cfg, params, dataset) = load_model_and_data(&a.model, &a.data)?;
    if dataset.is_empty() {
        return Err(CliError::Validation("evaluation dataset is empty".to_string()));
    }
    let train_cfg = TrainConfig::default();
    // pure forward passes fan out; results merge in dataset order
    let per_seq: Vec<(Prediction, f64)> = indexed_parallel(dataset.len(), workers, |i| {
        let pred = forward(&dataset[i], &params, &model_cfg)?;
        let loss = sequence_loss(&pred, &dataset[i], &train_cfg)?;
        Ok((pred, loss))
    })?;
    let mut confusions = vec![NodeConfusion::default(); model_cfg.n];
    let mut losses = Vec::with_capacity(dataset.len());
    for (seq, (pred, loss)) in dataset.iter().zip(per_seq.iter()) {
        losses.push(*loss);
        for v in 0..seq.n {
            let decided = hard_decision(&pred.probs[v]).map_err(CliError::from)?;
            accumulate(&mut confusions, v, decided, seq.labels[v]).map_err(CliError::from)?;
        }
    }
    let report = finalize(&confusions, &losses).map_err(CliError::from)?;
    if let Some(out) = &a.out {
        let doc = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Validation(format!("report serialization: {e}")))?;
        std::fs::write(out, doc + "\n")
            .map_err(|e| CliError::Validation(format!("cannot write report: {e}")))?;
    }
    println!("{}", summary_row(&report));
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<(), CliError> {
    if a.eps <= 0.0 {
        return Err(CliError::Usage(format!("--eps must be positive, got {}", a.eps)));
    }
    let model_cfg = ModelConfig {
        f: a.feature_dim,
        g: a.gc_dim,
        h: a.hidden,
        d_a: a.attn_dim,
        n: a.nodes,
        t: a.frames,
        gc_layers: 1,
        isolate_padded: false,
        attn_tanh: false,
    };
    let report = grad_check_model(&model_cfg, a.seed, a.eps, a.tol).map_err(CliError::from)?;
    println!(
        "gradcheck: max_rel_err={:e} worst={} coords={} tol={:e} -> {}",
        report.max_rel_err,
        report.worst_param,
        report.coords,
        a.tol,
        if report.pass { "PASS" } else { "FAIL" }
    );
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "gradient check failed: max_rel_err {:e} exceeds tol {:e}",
            report.max_rel_err, a.tol
        )))
    }
}

fn cmd_predict(a: PredictArgs) -> Result<(), CliError> {
    let (model_cfg, params, dataset) = load_model_and_data(&a.model, &a.data)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(&a.out).map_err(|e| {
        CliError::Validation(format!("cannot create {}: {e}", a.out.display()))
    })?);
    for seq in &dataset {
        let pred = forward(seq, &params, &model_cfg).map_err(CliError::from)?;
        let nodes: Vec<serde_json::Value> = (0..seq.n)
            .map(|v| -> Result<serde_json::Value, CliError> {
                let decision = hard_decision(&pred.probs[v]).map_err(CliError::from)?;
                Ok(json!({
                    "node": v,
                    "p_dead": pred.probs[v][1],
                    "decision": decision.index(),
                    "attention": pred.attention_weights[v],
                }))
            })
            .collect::<Result<_, _>>()?;
        let record = json!({ "id": seq.id, "nodes": nodes });
        writeln!(out, "{record}")
            .map_err(|e| CliError::Validation(format!("write failed: {e}")))?;
    }
    out.flush()
        .map_err(|e| CliError::Validation(format!("write failed: {e}")))?;
    Ok(())
}
