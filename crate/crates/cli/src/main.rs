use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use glocal_core::attention::{sa_forward_matrix, SaWeights, SoftmaxMode};
use glocal_core::config::{load_config, PipelineConfig};
use glocal_core::embed::{fit_embedder, LinearEmbedder};
use glocal_core::graph::{build_knn_graph, load_graph, save_graph, split_dense_sparse};
use glocal_core::io::{
    load_feature_matrix, load_ids, load_manifest, read_score_report, save_feature_matrix, write_score_report,
    FeatureMatrix,
};
use glocal_core::pipeline::{evaluate_auc, layout_matrix, migna_labels, read_labels, run_pipeline, write_labels};
use glocal_core::sampling::{incremental_sampling, one_time_sampling, write_picks, WalkContext};
use glocal_core::scoring::{build_report, fit_mc_svm, KernelChoice, McSvmParams};
use glocal_core::synth::write_image_corpus;

#[derive(Parser)]
#[command(name = "glocal", version, about = "Glocal novelty scoring and graph-based sample selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label pool samples from prediction / ground-truth disagreement.
    Migna {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 16)]
        grid: usize,
        #[arg(long, default_value_t = 5)]
        tau: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the linear embedder and optionally encode a second set.
    Embed {
        /// Training data: a manifest (.tsv) of layout images or a feature matrix.
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value_t = 16)]
        r: usize,
        /// Output directory for the model.
        #[arg(long)]
        out: PathBuf,
        /// Data to encode into latent codes (manifest or feature matrix).
        #[arg(long, requires = "fae")]
        encode: Option<PathBuf>,
        #[arg(long)]
        fae: Option<PathBuf>,
    },
    /// Self-attention forward pass over latent tensors.
    Attend {
        #[arg(long)]
        features: PathBuf,
        /// Tensor shape as C,H,W.
        #[arg(long)]
        shape: String,
        /// Weight directory, or `seeded` for deterministic random weights.
        #[arg(long, default_value = "seeded")]
        weights: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "per-query")]
        softmax: SoftmaxMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Local, global and fused novelty scores.
    Score {
        /// Local features of the training corpus.
        #[arg(long)]
        train_fsa: PathBuf,
        /// Local features of the samples to score.
        #[arg(long)]
        fsa: PathBuf,
        /// Inputs to reconstruct: a manifest of layout images or a feature matrix.
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        embedder: PathBuf,
        /// One id per line; defaults to manifest ids or row numbers.
        #[arg(long)]
        ids: Option<PathBuf>,
        #[arg(long = "K", default_value_t = 10)]
        clusters: usize,
        #[arg(long, default_value_t = 0.1)]
        nu: f64,
        #[arg(long, default_value = "rbf")]
        kernel: KernelChoice,
        #[arg(long, default_value_t = -0.9, allow_hyphen_values = true)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Symmetrised k-NN graph over latent codes.
    Graph {
        #[arg(long)]
        fae: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select representative nodes with random walks.
    Sample {
        #[command(subcommand)]
        method: SampleMethod,
    },
    /// ROC AUC of each report column against MIGNA labels.
    EvalAuc {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Run the configured pipeline end to end.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, e.g. `--set seed=3`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Write a seeded synthetic corpus with a ready-to-run config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        train: usize,
        #[arg(long, default_value_t = 60)]
        pool: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum SampleMethod {
    /// One-time sampling.
    Ots {
        #[command(flatten)]
        common: SampleArgs,
        #[arg(long)]
        n: usize,
    },
    /// Incremental sampling.
    Ins {
        #[command(flatten)]
        common: SampleArgs,
        #[arg(long)]
        batch: usize,
    },
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    fae: PathBuf,
    #[arg(long)]
    fsa: PathBuf,
    /// One id per node; defaults to node numbers.
    #[arg(long)]
    ids: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Kernel width of the graph density; median edge length when omitted.
    #[arg(long)]
    sigma_den: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn is_manifest(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "tsv")
}

/// A feature matrix, or the flattened layouts of a manifest, plus ids when known.
fn load_inputs(p: &Path, stage: &str) -> Result<(FeatureMatrix, Option<Vec<String>>)> {
    if is_manifest(p) {
        let m = load_manifest(p)?;
        Ok((layout_matrix(&m, stage)?, Some(m.ids())))
    } else {
        Ok((load_feature_matrix(p)?, None))
    }
}

fn node_ids(path: &Option<PathBuf>, n: usize) -> Result<Vec<String>> {
    match path {
        Some(p) => {
            let ids = load_ids(p)?;
            if ids.len() != n {
                bail!("{} has {} ids for {n} rows", p.display(), ids.len());
            }
            Ok(ids)
        }
        None => Ok((0..n).map(|i| i.to_string()).collect()),
    }
}

fn parse_shape(s: &str) -> Result<(usize, usize, usize)> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("shape {s:?} is not C,H,W"))?;
    match v[..] {
        [c, h, w] => Ok((c, h, w)),
        _ => bail!("shape {s:?} is not C,H,W"),
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("GLOCAL_THREADS") {
        let n: usize = v.parse().with_context(|| format!("GLOCAL_THREADS={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Migna { manifest, grid, tau, out } => {
            let labels = migna_labels(&load_manifest(&manifest)?, grid, tau)?;
            write_labels(&labels, &out)?;
            let novel = labels.iter().filter(|l| l.is_novel).count();
            println!("{novel} of {} samples novel", labels.len());
        }
        Command::Embed { train, r, out, encode, fae } => {
            let (train, _) = load_inputs(&train, "embed")?;
            let model = fit_embedder(&train, r)?;
            model.save(&out)?;
            if let (Some(src), Some(dst)) = (encode, fae) {
                let (data, _) = load_inputs(&src, "embed")?;
                save_feature_matrix(&model.encode_matrix(&data)?, dst)?;
            }
        }
        Command::Attend { features, shape, weights, seed, softmax, out } => {
            let shape = parse_shape(&shape)?;
            let w = if weights == "seeded" {
                SaWeights::seeded(shape.0, seed)?
            } else {
                SaWeights::load(&weights)?
            };
            let fsa = sa_forward_matrix(&load_feature_matrix(&features)?, shape, &w, softmax)?;
            save_feature_matrix(&fsa, out)?;
        }
        Command::Score {
            train_fsa,
            fsa,
            images,
            embedder,
            ids,
            clusters,
            nu,
            kernel,
            threshold,
            seed,
            out,
        } => {
            let model = fit_mc_svm(&load_feature_matrix(&train_fsa)?, McSvmParams { clusters, nu, kernel, seed })?;
            let pool = load_feature_matrix(&fsa)?;
            let local = model.local_scores(&pool);
            let (y, manifest_ids) = load_inputs(&images, "score")?;
            let global = LinearEmbedder::load(&embedder)?.global_scores(&y)?;
            let ids = match (ids, manifest_ids) {
                (Some(p), _) => node_ids(&Some(p), pool.n_samples())?,
                (None, Some(m)) => m,
                (None, None) => node_ids(&None, pool.n_samples())?,
            };
            let report = build_report(&ids, &local, &global, threshold)?;
            write_score_report(&report, &out)?;
            let novel = report.rows.iter().filter(|r| r.is_novel).count();
            println!("{novel} of {} samples novel", report.rows.len());
        }
        Command::Graph { fae, k, out } => {
            let g = build_knn_graph(&load_feature_matrix(&fae)?, k)?;
            save_graph(&g, &out)?;
            let part = split_dense_sparse(&g);
            println!(
                "{} nodes, {} edges, {} dense / {} sparse",
                g.n(),
                g.n_edges(),
                part.dense.len(),
                part.sparse.len()
            );
        }
        Command::Sample { method } => {
            let (common, sampler) = match method {
                SampleMethod::Ots { common, n } => (common, Ok(n)),
                SampleMethod::Ins { common, batch } => (common, Err(batch)),
            };
            let graph = load_graph(&common.graph)?;
            let ids = node_ids(&common.ids, graph.n())?;
            let fae = load_feature_matrix(&common.fae)?;
            let fsa = load_feature_matrix(&common.fsa)?;
            let ctx = WalkContext::new(graph, &fae, &fsa, common.sigma_den, common.seed)?;
            let part = split_dense_sparse(&ctx.graph);
            let set = match sampler {
                Ok(n) => one_time_sampling(&ctx, &part, n, common.epochs)?,
                Err(batch) => {
                    let outcome = incremental_sampling(&ctx, &part, batch, common.epochs)?;
                    println!("{} batches", outcome.batches());
                    outcome.samples
                }
            };
            write_picks(&set, &ids, &common.out)?;
            println!("{} nodes selected", set.len());
        }
        Command::EvalAuc { report, labels } => {
            let s = evaluate_auc(&read_score_report(&report)?, &read_labels(&labels)?)?;
            println!("samples {}", s.n);
            println!("local   {:.6}", s.local);
            println!("global  {:.6}", s.global);
            println!("glocal  {:.6}", s.glocal);
        }
        Command::Run { config, overrides } => {
            let mut cfg: PipelineConfig = load_config(&config)?;
            for o in &overrides {
                let (k, v) = o.split_once('=').with_context(|| format!("override {o:?} is not KEY=VALUE"))?;
                cfg.set(k.trim(), v)?;
            }
            let stamps = run_pipeline(&cfg)?;
            println!("config {}", cfg.hash());
            for (name, digest) in stamps {
                println!("{digest}  {name}");
            }
        }
        Command::Synth { out, train, pool, seed } => {
            let files = write_image_corpus(&out, train, pool, seed)?;
            println!("{}", files.config.display());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads().and_then(|_| run(cli)) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
