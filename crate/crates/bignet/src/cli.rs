//! Command-line entry points tying the pipeline together for batch use.
//!
//! Exit codes: 0 success, 1 contract violation (any module error, reported as
//! one machine-readable JSON line on stderr), 2 usage error (unknown command
//! or flag, handled by the argument parser).
//!
//! Every command writes a run manifest next to its artifacts: the exact
//! configuration echo, seeds, and format versions needed to regenerate the
//! outputs bit-identically.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::bim::{parse_model, serialize_model, FloorModel};
use crate::config::RunConfig;
use crate::embedder::HashEmbedder;
use crate::error::{BignetError, Result};
use crate::graph::{
    build_graph, load_graph, partition_regions, save_graph, BimGraph, DatasetEntry,
    DatasetManifest, GraphDataset, GraphMode, Split, BGRAPH_VERSION,
};
use crate::metrics::EvalReport;
use crate::nn::params::PARAMS_VERSION;
use crate::pretrain::{history_to_csv, pretrain, Checkpoint, CHECKPOINT_VERSION};
use crate::synth::{
    apply_labels, generate_building, inject_errors, make_splits, prefix_model_ids, BuildingSpec,
    LabelMap,
};
use crate::transfer::{evaluate, train_transfer, Classifier, TransferStrategy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONTRACT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const MANIFEST_VERSION: u32 = 1;
const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "bignet",
    version,
    about = "BIM graphs, masked-autoencoder pretraining, and transfer-based design checking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert BIM-lite JSON models to .bgraph files with a dataset manifest.
    Convert(ConvertArgs),
    /// Generate synthetic BIM-lite buildings from a parametric spec.
    Synth(SynthArgs),
    /// Inject labeled errors (semantic / data range / topological) into models.
    Inject(InjectArgs),
    /// Pretrain the masked graph autoencoder over a converted dataset.
    Pretrain(PretrainArgs),
    /// Train a node classifier by transfer from a pretraining checkpoint.
    Transfer(TransferArgs),
    /// Evaluate a trained classifier on one dataset split.
    Eval(EvalArgs),
    /// Reproduce the radius / transfer-fraction / strategy comparison grids.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Homogeneous,
    Heterogeneous,
}

impl From<ModeArg> for GraphMode {
    fn from(m: ModeArg) -> GraphMode {
        match m {
            ModeArg::Homogeneous => GraphMode::Homogeneous,
            ModeArg::Heterogeneous => GraphMode::Heterogeneous,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    FeatExtractMlp,
    FeatExtractGat,
    FineTuneMlp,
    NoneMlp,
    NoneGat,
}

impl From<StrategyArg> for TransferStrategy {
    fn from(s: StrategyArg) -> TransferStrategy {
        match s {
            StrategyArg::FeatExtractMlp => TransferStrategy::FeatExtractMlp,
            StrategyArg::FeatExtractGat => TransferStrategy::FeatExtractGat,
            StrategyArg::FineTuneMlp => TransferStrategy::FineTuneMlp,
            StrategyArg::NoneMlp => TransferStrategy::NoneMlp,
            StrategyArg::NoneGat => TransferStrategy::NoneGat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Pretrain,
    TransferTrain,
    TransferVal,
    TransferTest,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Pretrain => Split::Pretrain,
            SplitArg::TransferTrain => Split::TransferTrain,
            SplitArg::TransferVal => Split::TransferVal,
            SplitArg::TransferTest => Split::TransferTest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepAxis {
    Radius,
    Fraction,
    Strategy,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    /// BIM-lite JSON file or directory of such files.
    #[arg(long)]
    input: PathBuf,
    /// Output directory for .bgraph files and manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// Spatial relationship discovery radius in metres.
    #[arg(long, default_value_t = 0.3)]
    radius: f64,
    /// Graph feature layout.
    #[arg(long, value_enum, default_value_t = ModeArg::Heterogeneous)]
    mode: ModeArg,
    /// Split floors into regions of at most this many projected nodes.
    #[arg(long)]
    max_nodes: Option<usize>,
    /// Label map from `inject` to apply to the built graphs.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Assign transfer train/val/test splits over error-bearing regions.
    #[arg(long)]
    transfer_fraction: Option<f64>,
    /// Seed for the split assignment.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// BuildingSpec JSON file; omitted means the default 4x3x2 building.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory for BIM-lite building files.
    #[arg(long)]
    out: PathBuf,
    /// Override the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of buildings; building b uses seed + b and id prefix `Bb/`.
    #[arg(long, default_value_t = 1)]
    count: usize,
}

#[derive(Debug, Args)]
struct InjectArgs {
    /// BIM-lite JSON file or directory of such files.
    #[arg(long)]
    input: PathBuf,
    /// Output directory for models.json, labels.json, and report.json.
    #[arg(long)]
    out: PathBuf,
    /// Fraction of eligible targets perturbed per error type.
    #[arg(long, default_value_t = 0.3)]
    rate: f64,
    /// Injection RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Spatial radius bounding the fitting displacement, in metres.
    #[arg(long, default_value_t = 0.3)]
    radius: f64,
}

#[derive(Debug, Args)]
struct PretrainArgs {
    /// Dataset directory produced by `convert` (must hold manifest.json).
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Run configuration file (key = value); omitted means defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TransferArgs {
    /// Dataset directory with transfer_train / transfer_val splits.
    #[arg(long)]
    data: PathBuf,
    /// Transfer strategy.
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    /// Pretraining checkpoint (required unless the strategy is none_*).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output classifier path.
    #[arg(long)]
    out: PathBuf,
    /// Run configuration file; omitted means defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Dataset directory with the split to evaluate.
    #[arg(long)]
    data: PathBuf,
    /// Trained classifier path.
    #[arg(long)]
    classifier: PathBuf,
    /// Which split to evaluate.
    #[arg(long, value_enum, default_value_t = SplitArg::TransferTest)]
    split: SplitArg,
    /// Where to write the JSON evaluation report.
    #[arg(long)]
    report_out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Grid axis: spatial radius, transfer fraction, or strategy comparison.
    #[arg(long, value_enum)]
    axis: SweepAxis,
    /// Directory of clean BIM-lite models (e.g. `synth` output).
    #[arg(long)]
    input: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Run configuration file; omitted means defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Error injection rate for the labeled half of the corpus.
    #[arg(long, default_value_t = 0.3)]
    rate: f64,
}

/// Parse `argv` and run one command. Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests print to stdout and succeed; everything
            // else is a usage error.
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Convert(args) => cmd_convert(&args),
        Command::Synth(args) => cmd_synth(&args),
        Command::Inject(args) => cmd_inject(&args),
        Command::Pretrain(args) => cmd_pretrain(&args),
        Command::Transfer(args) => cmd_transfer(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Sweep(args) => cmd_sweep(&args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.to_string() }));
            EXIT_CONTRACT
        }
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

/// Model files under `input`: the file itself, or every `*.json` in the
/// directory except injection/manifest side files, in sorted order.
fn collect_model_files(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        return Err(BignetError::Validation(format!(
            "input {} is neither a file nor a directory",
            input.display()
        )));
    }
    const SIDE_FILES: [&str; 4] =
        ["labels.json", "report.json", "manifest.json", "run_manifest.json"];
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().map_or(false, |e| e == "json")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .map_or(true, |n| !SIDE_FILES.contains(&n))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(BignetError::Validation(format!(
            "no model files found under {}",
            input.display()
        )));
    }
    Ok(files)
}

fn load_floors(input: &Path) -> Result<Vec<FloorModel>> {
    let mut floors = Vec::new();
    for path in collect_model_files(input)? {
        let raw = std::fs::read_to_string(&path)?;
        floors.extend(
            parse_model(&raw)
                .map_err(|e| BignetError::Parse(format!("{}: {e}", path.display())))?,
        );
    }
    Ok(floors)
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::from_file(p),
        None => {
            let mut cfg = RunConfig::default();
            cfg.apply_env_override()?;
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

/// Dataset config keys (mode, radius) come from the dataset manifest, not the
/// run config, so a checkpoint always matches the graphs it trained on.
fn config_for_dataset(path: &Option<PathBuf>, manifest: &DatasetManifest) -> Result<RunConfig> {
    let mut cfg = load_config(path)?;
    cfg.mode = manifest.mode;
    cfg.spatial_radius_m = manifest.spatial_radius_m;
    Ok(cfg)
}

fn load_manifest(data: &Path) -> Result<DatasetManifest> {
    let path = data.join("manifest.json");
    DatasetManifest::load(&path)
        .map_err(|e| BignetError::Format(format!("{}: {e}", path.display())))
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// `model.ckpt` + `history.csv` -> `model.history.csv`, next to the artifact.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("artifact");
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn write_run_manifest(path: &Path, body: serde_json::Value) -> Result<()> {
    let manifest = json!({
        "manifest_version": MANIFEST_VERSION,
        "tool_version": TOOL_VERSION,
        "format_versions": {
            "bgraph": BGRAPH_VERSION,
            "params": PARAMS_VERSION,
            "checkpoint": CHECKPOINT_VERSION,
        },
        "run": body,
    });
    std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn load_split_refs(
    manifest: &DatasetManifest,
    split: Split,
    base: &Path,
) -> Result<Vec<BimGraph>> {
    let graphs = manifest.load_split(split, base)?;
    if graphs.is_empty() {
        return Err(BignetError::Validation(format!(
            "dataset {} has no graphs in split {split:?}",
            base.display()
        )));
    }
    Ok(graphs)
}

// ---------------------------------------------------------------------------
// convert
// ---------------------------------------------------------------------------

fn cmd_convert(args: &ConvertArgs) -> Result<()> {
    if args.radius <= 0.0 {
        return Err(BignetError::Validation("--radius must be positive".into()));
    }
    let mode: GraphMode = args.mode.into();
    let mut floors = load_floors(&args.input)?;
    if let Some(max_nodes) = args.max_nodes {
        if max_nodes == 0 {
            return Err(BignetError::Validation("--max-nodes must be positive".into()));
        }
        floors = partition_regions(&floors, max_nodes, args.radius);
    }
    let labels: Option<LabelMap> = match &args.labels {
        Some(p) => Some(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => None,
    };

    let embedder = HashEmbedder;
    let mut graphs = Vec::with_capacity(floors.len());
    for floor in &floors {
        let mut g = build_graph(floor, args.radius, mode, &embedder)?;
        if let Some(labels) = &labels {
            apply_labels(&mut g, labels)?;
        }
        graphs.push(g);
    }

    let mut dataset = GraphDataset::new(graphs);
    if let Some(fraction) = args.transfer_fraction {
        dataset = make_splits(dataset, fraction, args.split_seed)?;
    }

    std::fs::create_dir_all(&args.out)?;
    let mut entries = Vec::with_capacity(dataset.graphs.len());
    let mut total_nodes = 0usize;
    let mut total_edges = 0usize;
    for (i, (g, &split)) in dataset.graphs.iter().zip(&dataset.splits).enumerate() {
        let file = format!("{:05}_{}.bgraph", i, sanitize(&g.meta.region_id));
        save_graph(g, &args.out.join(&file))?;
        total_nodes += g.nodes.len();
        total_edges += g.edges.len();
        entries.push(DatasetEntry {
            path: PathBuf::from(file),
            split,
            nodes: g.nodes.len(),
            edges: g.edges.len(),
            nodes_by_type: g.node_count_by_type(),
            region_id: g.meta.region_id.clone(),
        });
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        mode,
        spatial_radius_m: args.radius,
        entries,
    };
    manifest.save(&args.out.join("manifest.json"))?;
    write_run_manifest(
        &args.out.join("run_manifest.json"),
        json!({
            "command": "convert",
            "input": args.input.display().to_string(),
            "radius": args.radius,
            "mode": mode,
            "max_nodes": args.max_nodes,
            "labels": args.labels.as_ref().map(|p| p.display().to_string()),
            "transfer_fraction": args.transfer_fraction,
            "split_seed": args.split_seed,
        }),
    )?;
    println!(
        "converted {} region(s): {} nodes, {} edges -> {}",
        dataset.graphs.len(),
        total_nodes,
        total_edges,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    if args.count == 0 {
        return Err(BignetError::Validation("--count must be >= 1".into()));
    }
    let mut spec = match &args.spec {
        Some(p) => BuildingSpec::load(p)?,
        None => BuildingSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Ok(v) = std::env::var(crate::config::SEED_ENV_VAR) {
        spec.seed = v.parse().map_err(|_| {
            BignetError::Config(format!(
                "{} must be an integer, got {v:?}",
                crate::config::SEED_ENV_VAR
            ))
        })?;
    }

    std::fs::create_dir_all(&args.out)?;
    let mut total_components = 0usize;
    for b in 0..args.count {
        let mut spec_b = spec.clone();
        spec_b.seed = spec.seed + b as u64;
        let mut floors = generate_building(&spec_b)?;
        if args.count > 1 {
            prefix_model_ids(&mut floors, &format!("B{b}"));
        }
        total_components += floors.iter().map(|f| f.components.len()).sum::<usize>();
        std::fs::write(
            args.out.join(format!("building_{b:03}.json")),
            serialize_model(&floors)?,
        )?;
    }
    write_run_manifest(
        &args.out.join("run_manifest.json"),
        json!({
            "command": "synth",
            "spec": spec,
            "count": args.count,
        }),
    )?;
    println!(
        "generated {} building(s), {} components -> {}",
        args.count,
        total_components,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// inject
// ---------------------------------------------------------------------------

fn cmd_inject(args: &InjectArgs) -> Result<()> {
    let floors = load_floors(&args.input)?;
    let (models, labels, report) = inject_errors(&floors, args.rate, args.seed, args.radius)?;
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("models.json"), serialize_model(&models)?)?;
    std::fs::write(
        args.out.join("labels.json"),
        serde_json::to_string_pretty(&labels)?,
    )?;
    std::fs::write(
        args.out.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    write_run_manifest(
        &args.out.join("run_manifest.json"),
        json!({
            "command": "inject",
            "input": args.input.display().to_string(),
            "rate": args.rate,
            "seed": args.seed,
            "radius": args.radius,
        }),
    )?;
    println!(
        "injected errors (rates achieved: semantic {:.3}, data range {:.3}, topological {:.3}) -> {}",
        report.semantic_rate_achieved,
        report.data_range_rate_achieved,
        report.topological_rate_achieved,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------

fn cmd_pretrain(args: &PretrainArgs) -> Result<()> {
    let manifest = load_manifest(&args.data)?;
    let cfg = config_for_dataset(&args.config, &manifest)?;
    let graphs = load_split_refs(&manifest, Split::Pretrain, &args.data)?;
    let refs: Vec<&BimGraph> = graphs.iter().collect();

    let outcome = pretrain(&refs, &cfg)?;
    outcome.checkpoint.save(&args.out)?;
    std::fs::write(sibling(&args.out, "history.csv"), history_to_csv(&outcome.history))?;
    std::fs::write(
        sibling(&args.out, "grid.json"),
        serde_json::to_string_pretty(&outcome.grid)?,
    )?;
    write_run_manifest(
        &sibling(&args.out, "run_manifest.json"),
        json!({
            "command": "pretrain",
            "data": args.data.display().to_string(),
            "seed": cfg.seed,
            "config_echo": cfg.to_key_values(),
        }),
    )?;
    let meta = &outcome.checkpoint.meta;
    println!(
        "pretrained on {} graph(s): best lr {} batch {} -> val loss {:.6} at epoch {} -> {}",
        refs.len(),
        meta.lr,
        meta.batch_size,
        meta.val_loss,
        meta.best_epoch,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// transfer
// ---------------------------------------------------------------------------

fn transfer_history_csv(history: &[crate::transfer::TransferEpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,val_average_f1,w0,w1,w2,w3\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            h.epoch,
            h.train_loss,
            h.val_average_f1,
            h.class_weights[0],
            h.class_weights[1],
            h.class_weights[2],
            h.class_weights[3],
        ));
    }
    out
}

fn cmd_transfer(args: &TransferArgs) -> Result<()> {
    let manifest = load_manifest(&args.data)?;
    let cfg = config_for_dataset(&args.config, &manifest)?;
    let strategy: TransferStrategy = args.strategy.into();
    let checkpoint = match &args.checkpoint {
        Some(p) => Some(Checkpoint::load(p)?),
        None => None,
    };
    let train = load_split_refs(&manifest, Split::TransferTrain, &args.data)?;
    let val = load_split_refs(&manifest, Split::TransferVal, &args.data)?;
    let train_refs: Vec<&BimGraph> = train.iter().collect();
    let val_refs: Vec<&BimGraph> = val.iter().collect();

    let outcome = train_transfer(strategy, checkpoint.as_ref(), &train_refs, &val_refs, &cfg)?;
    outcome.classifier.save(&args.out)?;
    std::fs::write(
        sibling(&args.out, "history.csv"),
        transfer_history_csv(&outcome.history),
    )?;
    write_run_manifest(
        &sibling(&args.out, "run_manifest.json"),
        json!({
            "command": "transfer",
            "data": args.data.display().to_string(),
            "strategy": strategy.name(),
            "checkpoint": args.checkpoint.as_ref().map(|p| p.display().to_string()),
            "seed": cfg.seed,
            "config_echo": cfg.to_key_values(),
        }),
    )?;
    let meta = &outcome.classifier.meta;
    println!(
        "trained {} classifier: val average F1 {:.4} at epoch {} -> {}",
        strategy.name(),
        meta.val_average_f1,
        meta.best_epoch,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

const CLASS_NAMES: [&str; 4] = [
    "correct",
    "semantic_conflict",
    "data_range_error",
    "topological_error",
];

fn print_report(report: &EvalReport) {
    println!(
        "nodes {} | accuracy {:.4} | average F1 {:.4} | weighted F1 {:.4}",
        report.nodes_evaluated, report.accuracy, report.average_f1, report.weighted_f1
    );
    for (name, m) in CLASS_NAMES.iter().zip(&report.per_class) {
        println!(
            "  {name:<18} precision {:.4}  recall {:.4}  f1 {:.4}",
            m.precision, m.recall, m.f1
        );
    }
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let manifest = load_manifest(&args.data)?;
    let classifier = Classifier::load(&args.classifier)?;
    let graphs = load_split_refs(&manifest, args.split.into(), &args.data)?;
    let refs: Vec<&BimGraph> = graphs.iter().collect();
    let report = evaluate(&classifier, &refs)?;
    report.save(&args.report_out)?;
    write_run_manifest(
        &sibling(&args.report_out, "run_manifest.json"),
        json!({
            "command": "eval",
            "data": args.data.display().to_string(),
            "classifier": args.classifier.display().to_string(),
            "split": format!("{:?}", Split::from(args.split)),
        }),
    )?;
    print_report(&report);
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepRow {
    axis: &'static str,
    value: String,
    strategy: TransferStrategy,
    report: EvalReport,
}

/// One end-to-end run: inject errors into the back half of the corpus, build
/// graphs, split, pretrain (when any strategy needs it), train, evaluate.
fn sweep_point(
    floors: &[FloorModel],
    cfg: &RunConfig,
    rate: f64,
    strategies: &[TransferStrategy],
) -> Result<Vec<(TransferStrategy, EvalReport)>> {
    let half = floors.len() / 2;
    if half < 2 || floors.len() - half < 3 {
        return Err(BignetError::Validation(format!(
            "sweep needs >= 2 clean and >= 3 error-bearing floors, got {} total",
            floors.len()
        )));
    }
    let (clean, to_perturb) = floors.split_at(half);
    let (errored, labels, _report) =
        inject_errors(to_perturb, rate, cfg.seed, cfg.spatial_radius_m)?;

    let embedder = HashEmbedder;
    let mut graphs = Vec::with_capacity(floors.len());
    for floor in clean {
        graphs.push(build_graph(floor, cfg.spatial_radius_m, cfg.mode, &embedder)?);
    }
    for floor in &errored {
        let mut g = build_graph(floor, cfg.spatial_radius_m, cfg.mode, &embedder)?;
        apply_labels(&mut g, &labels)?;
        graphs.push(g);
    }
    let dataset = make_splits(GraphDataset::new(graphs), cfg.transfer_fraction, cfg.seed)?;

    let checkpoint = if strategies.iter().any(|s| s.uses_pretrained_encoder()) {
        let pre = dataset.of_split(Split::Pretrain);
        Some(pretrain(&pre, cfg)?.checkpoint)
    } else {
        None
    };
    let train = dataset.of_split(Split::TransferTrain);
    let val = dataset.of_split(Split::TransferVal);
    let test = dataset.of_split(Split::TransferTest);

    let mut results = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let ckpt = if strategy.uses_pretrained_encoder() {
            checkpoint.as_ref()
        } else {
            None
        };
        let outcome = train_transfer(strategy, ckpt, &train, &val, cfg)?;
        results.push((strategy, evaluate(&outcome.classifier, &test)?));
    }
    Ok(results)
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let base_cfg = load_config(&args.config)?;
    let floors = load_floors(&args.input)?;
    let mut rows: Vec<SweepRow> = Vec::new();

    match args.axis {
        SweepAxis::Radius => {
            for &radius in &base_cfg.sweep_radii {
                let mut cfg = base_cfg.clone();
                cfg.spatial_radius_m = radius;
                for (strategy, report) in
                    sweep_point(&floors, &cfg, args.rate, &[TransferStrategy::FeatExtractGat])?
                {
                    rows.push(SweepRow {
                        axis: "radius",
                        value: radius.to_string(),
                        strategy,
                        report,
                    });
                }
            }
        }
        SweepAxis::Fraction => {
            for &fraction in &base_cfg.sweep_fractions {
                let mut cfg = base_cfg.clone();
                cfg.transfer_fraction = fraction;
                for (strategy, report) in
                    sweep_point(&floors, &cfg, args.rate, &[TransferStrategy::FeatExtractGat])?
                {
                    rows.push(SweepRow {
                        axis: "fraction",
                        value: fraction.to_string(),
                        strategy,
                        report,
                    });
                }
            }
        }
        SweepAxis::Strategy => {
            for (strategy, report) in
                sweep_point(&floors, &base_cfg, args.rate, &TransferStrategy::ALL)?
            {
                rows.push(SweepRow {
                    axis: "strategy",
                    value: strategy.name().to_string(),
                    strategy,
                    report,
                });
            }
        }
    }

    let mut csv = String::from("axis,value,strategy,accuracy,average_f1,weighted_f1\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.axis,
            row.value,
            row.strategy.name(),
            row.report.accuracy,
            row.report.average_f1,
            row.report.weighted_f1,
        ));
        println!(
            "{} = {:<16} {:<16} accuracy {:.4}  average F1 {:.4}  weighted F1 {:.4}",
            row.axis,
            row.value,
            row.strategy.name(),
            row.report.accuracy,
            row.report.average_f1,
            row.report.weighted_f1,
        );
    }
    std::fs::write(&args.out, &csv)?;
    write_run_manifest(
        &sibling(&args.out, "run_manifest.json"),
        json!({
            "command": "sweep",
            "axis": format!("{:?}", args.axis),
            "input": args.input.display().to_string(),
            "rate": args.rate,
            "seed": base_cfg.seed,
            "config_echo": base_cfg.to_key_values(),
        }),
    )?;
    println!("wrote {} sweep row(s) -> {}", rows.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// Round-trip helpers used by integration tests and examples
// ---------------------------------------------------------------------------

/// Load every graph in a converted dataset directory, in manifest order.
pub fn load_dataset_graphs(data: &Path) -> Result<Vec<BimGraph>> {
    let manifest = load_manifest(data)?;
    manifest
        .entries
        .iter()
        .map(|e| {
            let p = if e.path.is_absolute() {
                e.path.clone()
            } else {
                data.join(&e.path)
            };
            load_graph(&p)
        })
        .collect()
}
