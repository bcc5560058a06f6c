//! Batch command-line interface: graph construction, corpus statistics,
//! training, prediction, evaluation, ablations, and gradient checks.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors
//! (including missing input files).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use docrel::ablation::{run_ablation, AblationSwitch};
use docrel::data::{multi_label_stats, Corpus, RelationNames, RelationVocab};
use docrel::diagnostics;
use docrel::eval::{
    evaluate, multi_label_f1, read_predictions, write_predictions, Metrics, SetSize,
};
use docrel::graph::{conditional_matrix, count_cooccurrence, CorrelationGraph, GraphParams};
use docrel::model::{LossKind, ModelConfig};
use docrel::train::{
    decode_scores, predict_corpus, score_corpus, write_trace, Checkpoint, Prepared, TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "docrel",
    version,
    about = "Document-level relation extraction with a label co-occurrence relation graph"
)]
struct Cli {
    /// JSON config file; command-line flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory that relative input paths are resolved against
    #[arg(long, global = true, env = "DOCREL_DATA_DIR")]
    data_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the relation correlation graph from a labeled corpus
    BuildGraph(BuildGraphArgs),
    /// Print label co-occurrence statistics of a corpus
    Stats(StatsArgs),
    /// Train a model and write a checkpoint plus a loss trace
    Train(TrainArgs),
    /// Score a corpus with a trained checkpoint and decode predictions
    Predict(PredictArgs),
    /// Score a prediction file against gold labels
    Eval(EvalArgs),
    /// Train the full model and ablation variants under identical seeds
    Ablate(AblateArgs),
    /// Verify tape gradients against finite differences
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic corpus with planted label correlations
    Synth(SynthArgs),
}

#[derive(Args)]
struct GraphFlags {
    /// Co-occurrence count filter tau (default: 10)
    #[arg(long)]
    tau: Option<u64>,
    /// Conditional-probability edge threshold delta (default: 0.05)
    #[arg(long)]
    delta: Option<f64>,
    /// Neighbor weight share p of the re-weighting (default: 0.3)
    #[arg(long)]
    p: Option<f64>,
}

#[derive(Args)]
struct ModelFlags {
    /// Word-embedding width (default: 100)
    #[arg(long)]
    d_word: Option<usize>,
    /// Entity-type-embedding width (default: 20)
    #[arg(long)]
    d_type: Option<usize>,
    /// LSTM hidden width per direction (default: 128)
    #[arg(long)]
    d_hidden: Option<usize>,
    /// Stacked BiLSTM layers (default: 1)
    #[arg(long)]
    lstm_layers: Option<usize>,
    /// Relation-embedding width (default: 500)
    #[arg(long)]
    d_rel: Option<usize>,
    /// Graph attention layers (default: 2)
    #[arg(long)]
    gat_layers: Option<usize>,
    /// Attention heads per layer (default: 2)
    #[arg(long)]
    gat_heads: Option<usize>,
    /// Hidden features per head (default: 500)
    #[arg(long)]
    gat_hidden: Option<usize>,
    /// Block-diagonal grouping of the bilinear forms (default: 1)
    #[arg(long)]
    bilinear_blocks: Option<usize>,
    /// Use the graph as an attention mask only, dropping the re-weighting
    #[arg(long)]
    mask_only_gat: bool,
}

#[derive(Args)]
struct TrainFlags {
    /// Random seed (default: 7)
    #[arg(long)]
    seed: Option<u64>,
    /// Training epochs (default: 30)
    #[arg(long)]
    epochs: Option<usize>,
    /// Documents per optimizer step (default: 4)
    #[arg(long)]
    batch_docs: Option<usize>,
    /// Learning rate for embeddings and encoder (default: 0.001)
    #[arg(long)]
    lr: Option<f64>,
    /// Learning rate for the head; falls back to --lr (default: 0.001)
    #[arg(long)]
    lr_head: Option<f64>,
    /// Keep-probability for relation-free pairs (default: 0.25)
    #[arg(long)]
    neg_rate: Option<f64>,
    /// Global gradient-norm clip (default: 1.0)
    #[arg(long)]
    clip_norm: Option<f64>,
    /// Positive/negative loss mix alpha (default: 0.4)
    #[arg(long)]
    alpha: Option<f64>,
    /// Decision threshold scale theta (default: 0.85)
    #[arg(long)]
    theta: Option<f64>,
    /// Optional text embedding file seeding the word table
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct BuildGraphArgs {
    /// Labeled training corpus (DocRED JSON)
    #[arg(long)]
    train: PathBuf,
    /// Output graph JSON path
    #[arg(long)]
    out: PathBuf,
    /// Also write a Graphviz rendering here
    #[arg(long)]
    dot: Option<PathBuf>,
    /// Also write (head, tail, weight) triples here
    #[arg(long)]
    tsv: Option<PathBuf>,
    #[command(flatten)]
    graph: GraphFlags,
}

#[derive(Args)]
struct StatsArgs {
    /// Labeled corpus (DocRED JSON)
    #[arg(long)]
    train: PathBuf,
    /// Optional rel_info.json mapping codes to names
    #[arg(long)]
    rel_info: Option<PathBuf>,
    /// How many asymmetric conditional pairs to print (default: 10)
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Count filter for the conditional table (default: 0, raw statistics)
    #[arg(long)]
    tau: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Labeled training corpus (DocRED JSON)
    #[arg(long)]
    train: PathBuf,
    /// Optional development corpus for per-epoch F1
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Load an existing graph JSON instead of building one
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Output directory for checkpoint.json, trace.csv, and graph.json
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    graph_flags: GraphFlags,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    training: TrainFlags,
}

#[derive(Args)]
struct PredictArgs {
    /// Checkpoint written by `train`
    #[arg(long)]
    checkpoint: PathBuf,
    /// Corpus to score (labels optional)
    #[arg(long)]
    input: PathBuf,
    /// Prediction JSON output path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Decision threshold scale (default: the checkpoint's theta)
    #[arg(long)]
    theta: Option<f64>,
    /// Drop scores from the output to match the submission format
    #[arg(long)]
    submission: bool,
    /// Comma-separated theta grid; prints F1 per value against the
    /// input's labels instead of writing predictions
    #[arg(long, value_delimiter = ',')]
    sweep_theta: Vec<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Prediction JSON file
    #[arg(long)]
    pred: PathBuf,
    /// Gold corpus (DocRED JSON)
    #[arg(long)]
    gold: PathBuf,
    /// Training corpus for the train-overlap-ignoring F1
    #[arg(long)]
    train: Option<PathBuf>,
    /// Also print F1 restricted to multi-relation pairs
    #[arg(long)]
    multi: bool,
}

#[derive(Args)]
struct AblateArgs {
    /// Labeled training corpus (DocRED JSON)
    #[arg(long)]
    train: PathBuf,
    /// Evaluation corpus; defaults to the training corpus
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Variants to train: no-correlation-module, at-loss-instead-of-mat,
    /// mask-only-gat (default: all three)
    #[arg(long, value_delimiter = ',')]
    switches: Vec<String>,
    #[command(flatten)]
    graph_flags: GraphFlags,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    training: TrainFlags,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Random seed for the check fixtures (default: 7)
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    /// Output corpus path (DocRED JSON)
    #[arg(long)]
    out: PathBuf,
    /// Number of documents (default: 50)
    #[arg(long, default_value_t = 50)]
    docs: usize,
    /// Random seed (default: 7)
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Tenths of surface pairs whose bundle partner fires (default: 9)
    #[arg(long, default_value_t = 9)]
    partner_tenths: u64,
    /// Restrict labels to the two-relation bundles
    #[arg(long)]
    bundle_only: bool,
}

/// Error class that maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

/// Optional values loaded from --config; flags win over these, and these
/// win over the built-in defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    tau: Option<u64>,
    delta: Option<f64>,
    p: Option<f64>,
    seed: Option<u64>,
    epochs: Option<usize>,
    batch_docs: Option<usize>,
    lr: Option<f64>,
    lr_head: Option<f64>,
    neg_rate: Option<f64>,
    clip_norm: Option<f64>,
    alpha: Option<f64>,
    theta: Option<f64>,
    d_word: Option<usize>,
    d_type: Option<usize>,
    d_hidden: Option<usize>,
    lstm_layers: Option<usize>,
    d_rel: Option<usize>,
    gat_layers: Option<usize>,
    gat_heads: Option<usize>,
    gat_hidden: Option<usize>,
    bilinear_blocks: Option<usize>,
    embeddings: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file_config = match &cli.config {
        Some(path) => {
            let resolved = resolve_path(&cli.data_dir, path);
            require_file(&resolved)?;
            let text = fs::read_to_string(&resolved)
                .with_context(|| format!("reading {}", resolved.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| UsageError(format!("config {}: {e}", resolved.display())))?
        }
        None => FileConfig::default(),
    };
    match cli.command {
        Command::BuildGraph(args) => cmd_build_graph(&cli.data_dir, &file_config, args),
        Command::Stats(args) => cmd_stats(&cli.data_dir, &file_config, args),
        Command::Train(args) => cmd_train(&cli.data_dir, &file_config, args),
        Command::Predict(args) => cmd_predict(&cli.data_dir, &file_config, args),
        Command::Eval(args) => cmd_eval(&cli.data_dir, args),
        Command::Ablate(args) => cmd_ablate(&cli.data_dir, &file_config, args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let cfg = docrel::synth::SynthConfig {
        docs: args.docs,
        seed: args.seed,
        partner_tenths: args.partner_tenths,
        bundle_only: args.bundle_only,
        ..docrel::synth::SynthConfig::default()
    };
    let corpus = docrel::synth::generate(&cfg);
    corpus.write_path(&args.out)?;
    println!(
        "{} documents, {} facts written to {}",
        corpus.n_docs(),
        corpus.n_facts(),
        args.out.display()
    );
    Ok(())
}

fn resolve_path(data_dir: &Option<PathBuf>, path: &Path) -> PathBuf {
    match data_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(UsageError(format!("input file {} does not exist", path.display())).into());
    }
    Ok(())
}

fn load_corpus(data_dir: &Option<PathBuf>, path: &Path) -> Result<Corpus> {
    let resolved = resolve_path(data_dir, path);
    require_file(&resolved)?;
    Ok(Corpus::from_path(&resolved)?)
}

fn graph_params(flags: &GraphFlags, file: &FileConfig) -> GraphParams {
    let defaults = GraphParams::default();
    GraphParams {
        tau: flags.tau.or(file.tau).unwrap_or(defaults.tau),
        delta: flags.delta.or(file.delta).unwrap_or(defaults.delta),
        p: flags.p.or(file.p).unwrap_or(defaults.p),
    }
}

fn model_config(flags: &ModelFlags, file: &FileConfig) -> ModelConfig {
    let d = ModelConfig::default();
    ModelConfig {
        d_word: flags.d_word.or(file.d_word).unwrap_or(d.d_word),
        d_type: flags.d_type.or(file.d_type).unwrap_or(d.d_type),
        d_hidden: flags.d_hidden.or(file.d_hidden).unwrap_or(d.d_hidden),
        lstm_layers: flags
            .lstm_layers
            .or(file.lstm_layers)
            .unwrap_or(d.lstm_layers),
        d_rel: flags.d_rel.or(file.d_rel).unwrap_or(d.d_rel),
        gat_layers: flags.gat_layers.or(file.gat_layers).unwrap_or(d.gat_layers),
        gat_heads: flags.gat_heads.or(file.gat_heads).unwrap_or(d.gat_heads),
        gat_hidden: flags.gat_hidden.or(file.gat_hidden).unwrap_or(d.gat_hidden),
        bilinear_blocks: flags
            .bilinear_blocks
            .or(file.bilinear_blocks)
            .unwrap_or(d.bilinear_blocks),
        gat_mode: if flags.mask_only_gat {
            docrel::gat::GatMode::MaskOnly
        } else {
            d.gat_mode
        },
        ..d
    }
}

fn train_config(flags: &TrainFlags, file: &FileConfig) -> TrainConfig {
    let d = TrainConfig::default();
    let lr = flags.lr.or(file.lr).unwrap_or(d.lr_encoder);
    TrainConfig {
        seed: flags.seed.or(file.seed).unwrap_or(d.seed),
        epochs: flags.epochs.or(file.epochs).unwrap_or(d.epochs),
        batch_docs: flags.batch_docs.or(file.batch_docs).unwrap_or(d.batch_docs),
        lr_encoder: lr,
        lr_head: flags.lr_head.or(file.lr_head).unwrap_or(lr),
        neg_rate: flags.neg_rate.or(file.neg_rate).unwrap_or(d.neg_rate),
        clip_norm: flags.clip_norm.or(file.clip_norm).unwrap_or(d.clip_norm),
        alpha: flags.alpha.or(file.alpha).unwrap_or(d.alpha),
        theta: flags.theta.or(file.theta).unwrap_or(d.theta),
        loss: LossKind::Mat,
        ..d
    }
}

fn cmd_build_graph(
    data_dir: &Option<PathBuf>,
    file: &FileConfig,
    args: BuildGraphArgs,
) -> Result<()> {
    let corpus = load_corpus(data_dir, &args.train)?;
    let vocab = RelationVocab::from_corpus(&corpus);
    let params = graph_params(&args.graph, file);
    let graph = CorrelationGraph::build(&corpus, &vocab, params)?;
    graph.write_json(&args.out)?;
    if let Some(dot) = &args.dot {
        graph.write_dot(dot)?;
    }
    if let Some(tsv) = &args.tsv {
        graph.write_tsv(tsv)?;
    }
    println!(
        "r={} edges={} density={:.4} tau={} delta={} p={}",
        graph.r,
        graph.edge_count(),
        graph.density(),
        graph.tau,
        graph.delta,
        graph.p
    );
    println!("graph written to {}", args.out.display());
    Ok(())
}

fn cmd_stats(data_dir: &Option<PathBuf>, file: &FileConfig, args: StatsArgs) -> Result<()> {
    let corpus = load_corpus(data_dir, &args.train)?;
    let vocab = RelationVocab::from_corpus(&corpus);
    let names = match &args.rel_info {
        Some(path) => {
            let resolved = resolve_path(data_dir, path);
            require_file(&resolved)?;
            RelationNames::from_path(&resolved)?
        }
        None => RelationNames::default(),
    };
    let stats = multi_label_stats(&corpus, &vocab)?;

    println!(
        "documents={} entities={} facts={} relation-types={}",
        corpus.n_docs(),
        corpus.n_entities(),
        corpus.n_facts(),
        vocab.len()
    );
    if !stats.has_pairs {
        println!("no labeled entity pairs");
        return Ok(());
    }
    println!("label-set size histogram:");
    for (size, count) in &stats.histogram {
        println!("  {size}: {count}");
    }
    println!(
        "multi-label fraction: {:.4} (max set size {})",
        stats.multi_fraction, stats.max_set_size
    );

    let tau = args.tau.or(file.tau).unwrap_or(0);
    let counts = count_cooccurrence(&corpus, &vocab)?;
    let cond = conditional_matrix(&counts, tau);
    let mut asymmetric: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..vocab.len() {
        for j in 0..vocab.len() {
            if i != j && cond[i][j] > 0.0 {
                asymmetric.push((cond[i][j] - cond[j][i], i, j));
            }
        }
    }
    asymmetric.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then((a.1, a.2).cmp(&(b.1, b.2)))
    });
    let label = |idx: usize| {
        let code = vocab.code(idx);
        match names.name(code) {
            Some(name) => format!("{code} ({name})"),
            None => code.to_string(),
        }
    };
    println!("top asymmetric conditional pairs (tau={tau}):");
    println!("  P(j|i)   P(i|j)   i -> j");
    for (_, i, j) in asymmetric.into_iter().take(args.top) {
        println!(
            "  {:.4}   {:.4}   {} -> {}",
            cond[i][j],
            cond[j][i],
            label(i),
            label(j)
        );
    }
    Ok(())
}

fn cmd_train(data_dir: &Option<PathBuf>, file: &FileConfig, args: TrainArgs) -> Result<()> {
    let corpus = load_corpus(data_dir, &args.train)?;
    let dev = match &args.dev {
        Some(path) => Some(load_corpus(data_dir, path)?),
        None => None,
    };
    let vocab = RelationVocab::from_corpus(&corpus);
    let graph = match &args.graph {
        Some(path) => {
            let resolved = resolve_path(data_dir, path);
            require_file(&resolved)?;
            CorrelationGraph::from_path(&resolved)?
        }
        None => CorrelationGraph::build(&corpus, &vocab, graph_params(&args.graph_flags, file))?,
    };
    let model_cfg = model_config(&args.model, file);
    let train_cfg = train_config(&args.training, file);

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let prepared = Prepared::new(&corpus, vocab, &graph)?;
    let mut model = docrel::model::Model::init(
        model_cfg,
        prepared.vocab.len(),
        prepared.words.len(),
        prepared.types.len(),
        train_cfg.seed,
    )?;
    if let Some(path) = args.training.embeddings.clone().or(file.embeddings.clone()) {
        let resolved = resolve_path(data_dir, &path);
        require_file(&resolved)?;
        let loaded = docrel::encoder::load_embedding_file(
            &resolved,
            &prepared.words,
            model_cfg.d_word,
            model.params.get_mut("enc.word"),
        )?;
        println!("seeded {loaded} word vectors from {}", resolved.display());
    }
    let outcome = docrel::train::train_model(model, &corpus, &prepared, train_cfg, dev.as_ref())?;

    for row in &outcome.trace {
        match row.dev_f1 {
            Some(f1) => println!(
                "epoch {:>3}  mean_loss {:.6}  dev_f1 {:.4}",
                row.epoch, row.mean_loss, f1
            ),
            None => println!("epoch {:>3}  mean_loss {:.6}", row.epoch, row.mean_loss),
        }
    }

    let checkpoint = Checkpoint::capture(&outcome.model, &train_cfg, &prepared, &graph);
    let ckpt_path = args.out_dir.join("checkpoint.json");
    checkpoint.write(&ckpt_path)?;
    write_trace(args.out_dir.join("trace.csv"), &outcome.trace)?;
    graph.write_json(args.out_dir.join("graph.json"))?;
    println!("checkpoint written to {}", ckpt_path.display());
    Ok(())
}

fn cmd_predict(data_dir: &Option<PathBuf>, _file: &FileConfig, args: PredictArgs) -> Result<()> {
    let ckpt_path = resolve_path(data_dir, &args.checkpoint);
    require_file(&ckpt_path)?;
    let checkpoint = Checkpoint::from_path(&ckpt_path)?;
    let (model, prepared) = checkpoint.restore()?;
    let corpus = load_corpus(data_dir, &args.input)?;
    let theta = args.theta.unwrap_or(checkpoint.train.theta);

    if !args.sweep_theta.is_empty() {
        if corpus.n_facts() == 0 {
            return Err(UsageError("--sweep-theta needs a labeled input corpus".into()).into());
        }
        let scored = score_corpus(&model, &prepared, &corpus)?;
        println!("theta    precision  recall  f1");
        for &t in &args.sweep_theta {
            let preds = decode_scores(&scored, &prepared.vocab, t);
            let m = evaluate(&preds, &corpus, None)?;
            println!("{t:<8} {:.4}     {:.4}  {:.4}", m.precision, m.recall, m.f1);
        }
        if args.out.is_none() {
            return Ok(());
        }
    }

    let out = args
        .out
        .ok_or_else(|| UsageError("--out is required unless --sweep-theta is given".into()))?;
    let predictions = predict_corpus(&model, &prepared, &corpus, theta)?;
    write_predictions(&out, &predictions, args.submission)?;
    println!(
        "{} predictions written to {} (theta={theta})",
        predictions.len(),
        out.display()
    );
    Ok(())
}

fn print_metrics(prefix: &str, m: &Metrics) {
    match m.ign_f1 {
        Some(ign) => println!(
            "{prefix}P={:.4} R={:.4} F1={:.4} IgnF1={:.4} (correct={} predicted={} gold={})",
            m.precision, m.recall, m.f1, ign, m.correct, m.predicted, m.gold
        ),
        None => println!(
            "{prefix}P={:.4} R={:.4} F1={:.4} (correct={} predicted={} gold={})",
            m.precision, m.recall, m.f1, m.correct, m.predicted, m.gold
        ),
    }
}

fn cmd_eval(data_dir: &Option<PathBuf>, args: EvalArgs) -> Result<()> {
    let pred_path = resolve_path(data_dir, &args.pred);
    require_file(&pred_path)?;
    let predictions = read_predictions(&pred_path)?;
    let gold = load_corpus(data_dir, &args.gold)?;
    let train = match &args.train {
        Some(path) => Some(load_corpus(data_dir, path)?),
        None => None,
    };
    let metrics = evaluate(&predictions, &gold, train.as_ref())?;
    print_metrics("", &metrics);
    if args.multi {
        for (name, selector) in [
            ("2-rel   ", SetSize::Exactly(2)),
            ("3-rel   ", SetSize::Exactly(3)),
            ("overall ", SetSize::AtLeast(2)),
        ] {
            match multi_label_f1(&predictions, &gold, selector)? {
                Some(m) => print_metrics(&format!("{name} "), &m),
                None => println!("{name} absent (no qualifying pairs)"),
            }
        }
    }
    Ok(())
}

fn cmd_ablate(data_dir: &Option<PathBuf>, file: &FileConfig, args: AblateArgs) -> Result<()> {
    let corpus = load_corpus(data_dir, &args.train)?;
    let eval_corpus = match &args.eval {
        Some(path) => load_corpus(data_dir, path)?,
        None => corpus.clone(),
    };
    let switches: Vec<AblationSwitch> = if args.switches.is_empty() {
        AblationSwitch::ALL.to_vec()
    } else {
        args.switches
            .iter()
            .map(|s| {
                s.parse::<AblationSwitch>()
                    .map_err(|e| UsageError(e.to_string()))
            })
            .collect::<Result<_, _>>()?
    };
    let rows = run_ablation(
        &corpus,
        &eval_corpus,
        graph_params(&args.graph_flags, file),
        model_config(&args.model, file),
        train_config(&args.training, file),
        &switches,
    )?;
    let fmt = |v: Option<f64>| match v {
        Some(f) => format!("{f:.4}"),
        None => "  --  ".to_string(),
    };
    println!("variant                   F1      2-rel   3-rel   overall  loss");
    for row in &rows {
        println!(
            "{:<25} {:.4}  {}  {}  {}   {:.4}",
            row.variant,
            row.f1,
            fmt(row.two_rel_f1),
            fmt(row.three_rel_f1),
            fmt(row.overall_multi_f1),
            row.final_mean_loss
        );
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    let checks = diagnostics::run_all(args.seed)?;
    let mut failed = false;
    for check in &checks {
        let verdict = if check.passed() { "PASS" } else { "FAIL" };
        println!(
            "{:<12} max-rel-err {:.3e} over {} values  {verdict}",
            check.name, check.max_rel_err, check.checked_values
        );
        failed |= !check.passed();
    }
    if failed {
        anyhow::bail!(
            "a gradient check reached {} (tolerance {})",
            checks
                .iter()
                .map(|c| c.max_rel_err)
                .fold(f64::NEG_INFINITY, f64::max),
            diagnostics::GRAD_TOLERANCE
        );
    }
    Ok(())
}
