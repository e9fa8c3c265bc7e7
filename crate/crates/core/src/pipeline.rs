//! End-to-end run: migna → embed → attend → score → graph → sample.
//!
//! Every stage reads its inputs from files and writes its outputs into the
//! output directory, so any subset of stages can be rerun on top of earlier
//! artifacts. After a run, `stamps.tsv` records the config hash and the
//! SHA-256 of every artifact present.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::attention::{sa_forward_matrix, SaWeights};
use crate::config::{PipelineConfig, Sampler, Stage};
use crate::embed::{fit_embedder, LinearEmbedder};
use crate::error::{Error, Result};
use crate::graph::{build_knn_graph, load_graph, save_graph, split_dense_sparse};
use crate::io::{
    load_feature_matrix, load_ids, load_image, load_manifest, read_score_report, save_feature_matrix, save_ids,
    write_score_report, DatasetManifest, FeatureMatrix, FeatureRole, ScoreReport,
};
use crate::migna::{corpus_stats, deformation_map, label_novelty, patch_anomalies};
use crate::sampling::{incremental_sampling, one_time_sampling, write_picks, WalkContext};
use crate::scoring::{auc, build_report, fit_mc_svm, McSvmParams};

pub const LABELS_FILE: &str = "labels.csv";
pub const MODEL_DIR: &str = "model";
pub const FAE_FILE: &str = "fae.glfm";
pub const FSA_TRAIN_FILE: &str = "fsa_train.glfm";
pub const FSA_POOL_FILE: &str = "fsa_pool.glfm";
pub const REPORT_FILE: &str = "report.csv";
pub const GRAPH_FILE: &str = "graph.bin";
pub const GRAPH_IDS_FILE: &str = "graph_ids.txt";
pub const PICKS_FILE: &str = "picks.csv";
pub const STAMPS_FILE: &str = "stamps.tsv";

/// MIGNA outcome for one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoveltyLabel {
    pub sample_id: String,
    pub anomaly_count: usize,
    pub is_novel: bool,
}

pub const LABELS_HEADER: &str = "id,anomaly_count,is_novel";

/// Labels every manifest entry that has both a prediction and a ground truth.
/// Patch statistics are pooled over all labelled samples.
pub fn migna_labels(manifest: &DatasetManifest, grid: usize, tau: usize) -> Result<Vec<NoveltyLabel>> {
    let mut ids = Vec::new();
    let mut maps = Vec::new();
    for e in &manifest.entries {
        let (Some(pred), Some(gt)) = (&e.prediction, &e.ground_truth) else {
            continue;
        };
        let ctx = |err: Error| err.in_stage("migna", Some(&e.sample_id));
        let map = deformation_map(&load_image(pred).map_err(ctx)?, &load_image(gt).map_err(ctx)?).map_err(ctx)?;
        ids.push(e.sample_id.clone());
        maps.push(map);
    }
    if maps.is_empty() {
        return Err(Error::Empty("no manifest entry has both a prediction and a ground truth".into()));
    }
    let stats = corpus_stats(&maps, grid)?;
    ids.into_iter()
        .zip(&maps)
        .map(|(id, map)| {
            let patches = patch_anomalies(map, &stats, grid).map_err(|e| e.in_stage("migna", Some(&id)))?;
            Ok(NoveltyLabel {
                anomaly_count: patches.anomaly_count(),
                is_novel: label_novelty(&patches, tau),
                sample_id: id,
            })
        })
        .collect()
}

pub fn format_labels(labels: &[NoveltyLabel]) -> String {
    let mut out = format!("{LABELS_HEADER}\n");
    for l in labels {
        out.push_str(&format!("{},{},{}\n", l.sample_id, l.anomaly_count, u8::from(l.is_novel)));
    }
    out
}

pub fn parse_labels(text: &str) -> Result<Vec<NoveltyLabel>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == LABELS_HEADER => {}
        other => return Err(Error::Format(format!("expected label header, found {other:?}"))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 3 {
                return Err(Error::Format(format!("label row {l:?} needs 3 fields")));
            }
            Ok(NoveltyLabel {
                sample_id: f[0].to_string(),
                anomaly_count: f[1]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad anomaly count {:?}", f[1])))?,
                is_novel: match f[2].trim() {
                    "1" | "true" => true,
                    "0" | "false" => false,
                    other => return Err(Error::Format(format!("bad novelty flag {other:?}"))),
                },
            })
        })
        .collect()
}

pub fn write_labels(labels: &[NoveltyLabel], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_labels(labels)).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<NoveltyLabel>> {
    let path = path.as_ref();
    parse_labels(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// Flattened layout images of a manifest, pixel values scaled to `[0, 1]`.
pub fn layout_matrix(manifest: &DatasetManifest, stage: &str) -> Result<FeatureMatrix> {
    let mut rows = Vec::with_capacity(manifest.len());
    let mut dims = None;
    for e in &manifest.entries {
        let img = load_image(&e.layout).map_err(|err| err.in_stage(stage, Some(&e.sample_id)))?;
        let dim = (img.width(), img.height());
        if *dims.get_or_insert(dim) != dim {
            return Err(Error::Shape(format!(
                "layout is {}x{}, earlier layouts are {}x{}",
                dim.0,
                dim.1,
                dims.unwrap().0,
                dims.unwrap().1
            ))
            .in_stage(stage, Some(&e.sample_id)));
        }
        rows.push(img.to_unit_f64());
    }
    if rows.is_empty() {
        return Err(Error::Empty("manifest has no samples".into()).in_stage(stage, None));
    }
    FeatureMatrix::from_rows(&rows, FeatureRole::GlobalAe)
}

/// AUC of each report column against MIGNA labels, matched by sample id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AucSummary {
    pub local: f64,
    pub global: f64,
    pub glocal: f64,
    pub n: usize,
}

pub fn evaluate_auc(report: &ScoreReport, labels: &[NoveltyLabel]) -> Result<AucSummary> {
    let by_id: HashMap<&str, bool> = labels.iter().map(|l| (l.sample_id.as_str(), l.is_novel)).collect();
    let mut y = Vec::new();
    let (mut l, mut g, mut n) = (Vec::new(), Vec::new(), Vec::new());
    for row in &report.rows {
        if let Some(&label) = by_id.get(row.sample_id.as_str()) {
            y.push(label);
            l.push(row.theta_local);
            g.push(row.theta_global);
            n.push(row.theta_novel);
        }
    }
    Ok(AucSummary {
        local: auc(&l, &y)?,
        global: auc(&g, &y)?,
        glocal: auc(&n, &y)?,
        n: y.len(),
    })
}

fn require<'a>(v: &'a Option<PathBuf>, key: &str, stage: Stage) -> Result<&'a PathBuf> {
    v.as_ref()
        .ok_or_else(|| Error::Config(format!("`{key}` is required")).in_stage(stage.name(), None))
}

fn stage_err(stage: Stage) -> impl Fn(Error) -> Error {
    move |e| match e {
        e @ Error::Stage { .. } => e,
        e => e.in_stage(stage.name(), None),
    }
}

fn run_migna(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let manifest = load_manifest(require(&cfg.pool_manifest, "pool_manifest", Stage::Migna)?)?;
    let labels = migna_labels(&manifest, cfg.grid, cfg.tau)?;
    let novel = labels.iter().filter(|l| l.is_novel).count();
    log::info!("migna: {novel} of {} samples labelled novel", labels.len());
    write_labels(&labels, out.join(LABELS_FILE))
}

fn run_embed(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let train = load_manifest(require(&cfg.train_manifest, "train_manifest", Stage::Embed)?)?;
    let pool = load_manifest(require(&cfg.pool_manifest, "pool_manifest", Stage::Embed)?)?;
    let model = fit_embedder(&layout_matrix(&train, "embed")?, cfg.r)?;
    model.save(out.join(MODEL_DIR))?;
    let fae = model.encode_matrix(&layout_matrix(&pool, "embed")?)?;
    save_feature_matrix(&fae, out.join(FAE_FILE))
}

fn run_attend(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let shape = cfg
        .litho_shape
        .ok_or_else(|| Error::Config("`litho_shape` is required".into()))?;
    let weights = match &cfg.weights {
        Some(dir) => SaWeights::load(dir)?,
        None => SaWeights::seeded(shape.0, cfg.seed)?,
    };
    for (key, src, dst) in [
        ("train_litho", &cfg.train_litho, FSA_TRAIN_FILE),
        ("pool_litho", &cfg.pool_litho, FSA_POOL_FILE),
    ] {
        let litho = load_feature_matrix(require(src, key, Stage::Attend)?)?;
        let fsa = sa_forward_matrix(&litho, shape, &weights, cfg.softmax)?;
        save_feature_matrix(&fsa, out.join(dst))?;
    }
    Ok(())
}

fn run_score(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let pool = load_manifest(require(&cfg.pool_manifest, "pool_manifest", Stage::Score)?)?;
    let train_sa = load_feature_matrix(out.join(FSA_TRAIN_FILE))?;
    let pool_sa = load_feature_matrix(out.join(FSA_POOL_FILE))?;
    if pool_sa.n_samples() != pool.len() {
        return Err(Error::Shape(format!(
            "{} local feature rows for {} pool samples",
            pool_sa.n_samples(),
            pool.len()
        )));
    }
    let model = fit_mc_svm(
        &train_sa,
        McSvmParams {
            clusters: cfg.clusters,
            nu: cfg.nu,
            kernel: cfg.kernel,
            seed: cfg.seed,
        },
    )?;
    let local = model.local_scores(&pool_sa);
    let embedder = LinearEmbedder::load(out.join(MODEL_DIR))?;
    let global = embedder.global_scores(&layout_matrix(&pool, "score")?)?;
    let report = build_report(&pool.ids(), &local, &global, cfg.threshold)?;
    let novel = report.rows.iter().filter(|r| r.is_novel).count();
    log::info!("score: {novel} of {} samples above threshold {}", report.rows.len(), cfg.threshold);
    write_score_report(&report, out.join(REPORT_FILE))
}

fn run_graph(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let report = read_score_report(out.join(REPORT_FILE))?;
    let fae = load_feature_matrix(out.join(FAE_FILE))?;
    let nodes: Vec<usize> = (0..report.rows.len()).filter(|&i| report.rows[i].is_novel).collect();
    if nodes.len() < 2 {
        return Err(Error::Empty(format!("{} novel samples, need at least 2 for a graph", nodes.len())));
    }
    let k = cfg.k.min(nodes.len() - 1);
    if k < cfg.k {
        log::warn!("graph: k lowered from {} to {k} for {} novel samples", cfg.k, nodes.len());
    }
    let graph = build_knn_graph(&fae.select_rows(&nodes)?, k)?;
    save_graph(&graph, out.join(GRAPH_FILE))?;
    let ids: Vec<String> = nodes.iter().map(|&i| report.rows[i].sample_id.clone()).collect();
    save_ids(&ids, out.join(GRAPH_IDS_FILE))
}

fn run_sample(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let graph = load_graph(out.join(GRAPH_FILE))?;
    let ids = load_ids(out.join(GRAPH_IDS_FILE))?;
    let report = read_score_report(out.join(REPORT_FILE))?;
    let row_of: HashMap<&str, usize> = report
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.sample_id.as_str(), i))
        .collect();
    let rows = ids
        .iter()
        .map(|id| {
            row_of
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Data(format!("graph node {id:?} missing from the report")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let fae = load_feature_matrix(out.join(FAE_FILE))?.select_rows(&rows)?;
    let fsa = load_feature_matrix(out.join(FSA_POOL_FILE))?.select_rows(&rows)?;
    let ctx = WalkContext::new(graph, &fae, &fsa, cfg.sigma_den, cfg.seed)?;
    let part = split_dense_sparse(&ctx.graph);
    let set = match cfg.sampler {
        Sampler::OneTime => one_time_sampling(&ctx, &part, cfg.n_s, cfg.epochs)?,
        Sampler::Incremental => {
            let outcome = incremental_sampling(&ctx, &part, cfg.batch, cfg.epochs)?;
            log::info!("sample: incremental sampling ran {} batches", outcome.batches());
            outcome.samples
        }
    };
    write_picks(&set, &ids, out.join(PICKS_FILE))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(crate::util::hex(&Sha256::digest(&bytes)))
}

/// Artifact paths relative to the output directory, in a fixed order.
pub fn artifact_names() -> Vec<String> {
    let mut names: Vec<String> = [
        LABELS_FILE,
        FAE_FILE,
        FSA_TRAIN_FILE,
        FSA_POOL_FILE,
        REPORT_FILE,
        GRAPH_FILE,
        GRAPH_IDS_FILE,
        PICKS_FILE,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    names.push(format!("{MODEL_DIR}/{}", crate::embed::MEAN_FILE));
    names.push(format!("{MODEL_DIR}/{}", crate::embed::BASIS_FILE));
    names.sort();
    names
}

/// Writes `stamps.tsv`: the config hash, then one `name<TAB>sha256` line per artifact present.
pub fn write_stamps(cfg: &PipelineConfig, out: &Path) -> Result<Vec<(String, String)>> {
    let mut stamps = Vec::new();
    for name in artifact_names() {
        let p = out.join(&name);
        if p.is_file() {
            stamps.push((name, sha256_file(&p)?));
        }
    }
    let mut text = format!("config\t{}\n", cfg.hash());
    for (name, digest) in &stamps {
        text.push_str(&format!("{name}\t{digest}\n"));
    }
    let path = out.join(STAMPS_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(stamps)
}

/// Runs the configured stages in order and stamps the outputs.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Vec<(String, String)>> {
    cfg.validate()?;
    let out = cfg.out_dir.as_path();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for &stage in &cfg.stages {
        log::info!("stage {stage}");
        let result = match stage {
            Stage::Migna => run_migna(cfg, out),
            Stage::Embed => run_embed(cfg, out),
            Stage::Attend => run_attend(cfg, out),
            Stage::Score => run_score(cfg, out),
            Stage::Graph => run_graph(cfg, out),
            Stage::Sample => run_sample(cfg, out),
        };
        result.map_err(stage_err(stage))?;
    }
    write_stamps(cfg, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_roundtrip() {
        let labels = vec![
            NoveltyLabel {
                sample_id: "a".into(),
                anomaly_count: 0,
                is_novel: false,
            },
            NoveltyLabel {
                sample_id: "b".into(),
                anomaly_count: 12,
                is_novel: true,
            },
        ];
        let text = format_labels(&labels);
        assert_eq!(text, "id,anomaly_count,is_novel\na,0,0\nb,12,1\n");
        assert_eq!(parse_labels(&text).unwrap(), labels);
        assert!(matches!(parse_labels("x,y\n"), Err(Error::Format(_))));
    }

    #[test]
    fn missing_input_names_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::new(dir.path());
        cfg.set("out_dir", "out").unwrap();
        cfg.set("stages", "embed").unwrap();
        match run_pipeline(&cfg).unwrap_err() {
            Error::Stage { stage, .. } => assert_eq!(stage, "embed"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
