use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use denograph::corpus::{load_captions, load_features, load_lexicon, SpellingLexicon};
use denograph::eval::{self, ReferRule};
use denograph::graph::{self, build, BuildOptions};
use denograph::ling::RuleSet;
use denograph::sampler::{sample_batch, NegativeCounts};
use denograph::trainer::{self, TrainConfig};
use denograph::{DenotationGraph, FeatureStore, MatchModel, SimilarityIndex};
use serde::Deserialize;
use serde_json::{json, Value};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "denograph", version, about = "Denotation graphs and image-text matching")]
struct Cli {
    /// Worker threads for parallel phases.
    #[arg(long, global = true, env = "DENOGRAPH_THREADS", default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a denotation graph from tagged captions.
    BuildDg(BuildArgs),
    /// Print graph statistics as JSON.
    Stats(GraphArg),
    /// Print graph statistics as summary-table rows.
    ExportStats(GraphArg),
    /// Draw one training batch and print it as JSON lines.
    Sample(SampleArgs),
    /// Train a matching model.
    Train(TrainArgs),
    /// Evaluate a trained model.
    Eval(EvalArgs),
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    captions: PathBuf,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Spelling corrections applied to captions first (`wrong<TAB>right`).
    #[arg(long)]
    replacements: Option<PathBuf>,
    /// Config file with `rules`, `max_levels` and `reduce_transitive`;
    /// flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_levels: Option<u32>,
    /// Comma-separated rule ids, e.g. `R1,R2,R5`.
    #[arg(long)]
    rules: Option<String>,
    /// Keep transitive edges.
    #[arg(long)]
    no_reduce: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GraphArg {
    #[arg(long)]
    graph: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    node: usize,
    #[arg(long)]
    image: String,
    #[arg(long)]
    seed: u64,
    /// Negatives per kind as `v,s,h,d`.
    #[arg(long, default_value = "1,1,1,1")]
    counts: NegativeCounts,
    #[arg(long, default_value_t = 20)]
    knn_k: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Task {
    T2i,
    I2t,
    Map,
    Refer,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Split {
    All,
    Heldout,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_enum)]
    task: Task,
    /// Directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Images used as the retrieval pool and query set.
    #[arg(long, value_enum, default_value = "all")]
    split: Split,
    /// Seed of the region mask vector.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Score regions by the drop their masking causes.
    #[arg(long)]
    drop_semantics: bool,
    /// Expression node for `refer`.
    #[arg(long)]
    node: Option<usize>,
    /// Image whose regions `refer` chooses between.
    #[arg(long)]
    image: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BuildConfig {
    rules: Option<Vec<String>>,
    max_levels: Option<u32>,
    reduce_transitive: Option<bool>,
}

fn build_options(args: &BuildArgs, threads: usize) -> Result<BuildOptions> {
    let cfg: BuildConfig = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            toml::from_str(&text).map_err(|e| denograph::Error::Config(e.to_string()))?
        }
        None => BuildConfig::default(),
    };
    let mut opts = BuildOptions { threads: threads.max(1), ..Default::default() };
    if let Some(rules) = &cfg.rules {
        opts.rules = RuleSet::parse_list(&rules.join(","))?;
    }
    if let Some(rules) = &args.rules {
        opts.rules = RuleSet::parse_list(rules)?;
    }
    opts.max_levels = args.max_levels.or(cfg.max_levels).unwrap_or(opts.max_levels);
    opts.reduce_transitive = !args.no_reduce && cfg.reduce_transitive.unwrap_or(true);
    Ok(opts)
}

fn build_dg(args: &BuildArgs, threads: usize) -> Result<Value> {
    let opts = build_options(args, threads)?;
    let mut captions = load_captions(&args.captions)?;
    let mut replaced = 0;
    if let Some(p) = &args.replacements {
        replaced = SpellingLexicon::load(p)?.apply(&mut captions);
    }
    let lexicon = match &args.lexicon {
        Some(p) => load_lexicon(p)?,
        None => Default::default(),
    };
    let g = build(&captions, &lexicon, &opts)?;
    graph::save(&g, &args.out)?;
    Ok(json!({
        "out": args.out,
        "captions": captions.len(),
        "replaced_tokens": replaced,
        "max_levels": opts.max_levels,
        "rules": opts.rules.iter().map(|r| r.as_str()).collect::<Vec<_>>(),
        "reduce_transitive": opts.reduce_transitive,
        "n_nodes": g.len(),
        "n_edges": g.edge_count(),
    }))
}

fn sample(args: &SampleArgs) -> Result<Vec<Value>> {
    let g = graph::load(&args.graph)?;
    let features = load_features(&args.features)?;
    let k = args.knn_k.min(features.len().saturating_sub(1));
    let index = SimilarityIndex::build(&features, k)?;
    let batch = sample_batch(&g, &index, args.node, &args.image, args.counts, args.seed)?;
    let mut lines = vec![json!({
        "positive_node": batch.positive_node,
        "positive_norm": g.node(batch.positive_node)?.norm(),
        "positive_image": batch.positive_image,
        "counts": args.counts.0,
        "shortfall": batch.shortfall.0,
        "seed": batch.rng_seed,
    })];
    for n in &batch.negatives {
        lines.push(json!({
            "kind": n.kind,
            "node": n.node,
            "norm": g.node(n.node)?.norm(),
            "image": n.image,
        }));
    }
    Ok(lines)
}

fn load_inputs(graph_path: &Path, features_path: &Path) -> Result<(DenotationGraph, FeatureStore)> {
    Ok((graph::load(graph_path)?, load_features(features_path)?))
}

fn train(args: &TrainArgs) -> Result<Value> {
    let mut cfg = match &args.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let (g, features) = load_inputs(&args.graph, &args.features)?;
    let out = trainer::train(&g, &features, &cfg, Some(&args.out))?;
    let cfg_path = args.out.join("config.toml");
    fs::write(&cfg_path, cfg.to_text()).with_context(|| format!("cannot write {}", cfg_path.display()))?;
    Ok(json!({
        "out": args.out,
        "config": cfg,
        "train_images": out.train_images.len(),
        "heldout_images": out.heldout_images.len(),
        "final": out.log.last(),
    }))
}

fn eval_pool(args: &EvalArgs, g: &DenotationGraph) -> Result<Vec<String>> {
    match args.split {
        Split::All => Ok(g.image_ids().to_vec()),
        Split::Heldout => {
            let p = args.model.join("config.toml");
            let cfg = TrainConfig::load(&p)?;
            let held: Vec<String> = trainer::heldout_split(g.image_ids(), cfg.heldout_fraction).into_iter().collect();
            if held.is_empty() {
                bail!(denograph::Error::EmptyCandidates);
            }
            Ok(held)
        }
    }
}

fn evaluate(args: &EvalArgs) -> Result<Value> {
    let model = MatchModel::load(args.model.join("model.dgmd"), args.model.join("vocab.txt"))?;
    let (g, features) = load_inputs(&args.graph, &args.features)?;
    let rule = if args.drop_semantics { ReferRule::DropSemantics } else { ReferRule::Literal };
    let metrics = match args.task {
        Task::T2i | Task::I2t => {
            let pool = eval_pool(args, &g)?;
            let queries = eval::leaf_queries(&model, &g, &pool);
            if queries.is_empty() {
                bail!(denograph::Error::EmptyCandidates);
            }
            let m = match args.task {
                Task::T2i => eval::text_to_image(&model, &features, &queries, &pool)?,
                _ => {
                    let shown: BTreeSet<&String> = queries.iter().flat_map(|q| &q.relevant).collect();
                    let images: Vec<String> = pool.iter().filter(|i| shown.contains(i)).cloned().collect();
                    eval::image_to_text(&model, &features, &queries, &images)?
                }
            };
            json!({ "r1": m.r(1), "r5": m.r(5), "r10": m.r(10), "rsum": m.rsum, "queries": queries.len() })
        }
        Task::Map => {
            let pool = eval_pool(args, &g)?;
            let by_level = eval::map_by_level(&model, &g, &features, &pool)?;
            json!({ "map_by_level": by_level })
        }
        Task::Refer => {
            let node = args.node.ok_or_else(|| usage("--task refer needs --node"))?;
            let image = args.image.as_deref().ok_or_else(|| usage("--task refer needs --image"))?;
            let expr = &g.node(node)?.expression;
            let feat = features.get(image)?;
            let regions: Vec<Vec<f64>> = feat.regions.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
            let choice = eval::refer_select(&model, &model.vocab.encode(expr), &feat.vector_f64(), &regions, args.seed, rule)?;
            json!({ "expression": expr.norm(), "image": image, "choice": choice })
        }
    };
    Ok(json!({
        "task": format!("{:?}", args.task).to_lowercase(),
        "metrics": metrics,
        "config_echo": {
            "model": args.model,
            "graph": args.graph,
            "features": args.features,
            "split": format!("{:?}", args.split).to_lowercase(),
            "rule": rule,
            "node": args.node,
            "image": args.image,
        },
        "seed": args.seed,
    }))
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: &str) -> anyhow::Error {
    anyhow!(UsageError(msg.to_string()))
}

fn run(cli: &Cli) -> Result<Vec<Value>> {
    Ok(match &cli.command {
        Command::BuildDg(a) => vec![build_dg(a, cli.threads)?],
        Command::Stats(a) => {
            let g = graph::load(&a.graph)?;
            vec![serde_json::to_value(g.stats()?)?]
        }
        Command::ExportStats(a) => {
            let stats = graph::load(&a.graph)?.stats()?;
            let rows: Vec<Value> = stats
                .table_rows()
                .into_iter()
                .map(|(label, value)| json!({ "statistic": label, "all/internal/leaf": value }))
                .collect();
            vec![json!({ "rows": rows })]
        }
        Command::Sample(a) => sample(a)?,
        Command::Train(a) => vec![train(a)?],
        Command::Eval(a) => vec![evaluate(a)?],
    })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<denograph::Error>() {
        Some(e) if e.is_numeric() => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(lines) => {
            let mut out = std::io::stdout().lock();
            for line in lines {
                if writeln!(out, "{}", line).is_err() {
                    return ExitCode::from(EXIT_DATA);
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            // core errors already embed their source in the message
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{}: {}", msg, c);
                }
            }
            eprintln!("error: {}", msg);
            ExitCode::from(exit_code(&e))
        }
    }
}
