//! Flat `key = value` pipeline configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Keys are case sensitive (`k` is the graph neighbourhood size, `K` the
//! number of clusters). Relative paths resolve against the directory of the
//! config file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::attention::SoftmaxMode;
use crate::error::{Error, Result};
use crate::scoring::KernelChoice;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Migna,
    Embed,
    Attend,
    Score,
    Graph,
    Sample,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Migna,
        Stage::Embed,
        Stage::Attend,
        Stage::Score,
        Stage::Graph,
        Stage::Sample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Migna => "migna",
            Stage::Embed => "embed",
            Stage::Attend => "attend",
            Stage::Score => "score",
            Stage::Graph => "graph",
            Stage::Sample => "sample",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    OneTime,
    Incremental,
}

impl FromStr for Sampler {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ots" => Ok(Sampler::OneTime),
            "ins" => Ok(Sampler::Incremental),
            _ => Err(Error::Config(format!("sampler must be `ots` or `ins`, got {s:?}"))),
        }
    }
}

pub const KEYS: &[&str] = &[
    "train_manifest",
    "pool_manifest",
    "train_litho",
    "pool_litho",
    "litho_shape",
    "weights",
    "out_dir",
    "stages",
    "r",
    "softmax",
    "grid",
    "tau",
    "K",
    "nu",
    "kernel",
    "threshold",
    "k",
    "sigma_den",
    "sampler",
    "n_s",
    "batch",
    "epochs",
    "seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Directory relative paths are resolved against.
    pub base: PathBuf,
    /// Raw values in key order, as written (or overridden).
    values: Vec<(String, String)>,

    pub train_manifest: Option<PathBuf>,
    pub pool_manifest: Option<PathBuf>,
    pub train_litho: Option<PathBuf>,
    pub pool_litho: Option<PathBuf>,
    pub litho_shape: Option<(usize, usize, usize)>,
    /// Directory of saved self-attention weights; seeded weights when absent.
    pub weights: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub stages: Vec<Stage>,
    pub r: usize,
    pub softmax: SoftmaxMode,
    pub grid: usize,
    pub tau: usize,
    pub clusters: usize,
    pub nu: f64,
    pub kernel: KernelChoice,
    pub threshold: f64,
    pub k: usize,
    pub sigma_den: Option<f64>,
    pub sampler: Sampler,
    pub n_s: usize,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse {v:?}")))
}

impl PipelineConfig {
    pub fn new(base: impl Into<PathBuf>) -> Self {
        Self {
            base: base.into(),
            values: Vec::new(),
            train_manifest: None,
            pool_manifest: None,
            train_litho: None,
            pool_litho: None,
            litho_shape: None,
            weights: None,
            out_dir: PathBuf::from("out"),
            stages: Stage::ALL.to_vec(),
            r: 16,
            softmax: SoftmaxMode::PerQuery,
            grid: crate::migna::DEFAULT_GRID,
            tau: crate::migna::DEFAULT_TAU,
            clusters: crate::scoring::DEFAULT_CLUSTERS,
            nu: crate::scoring::DEFAULT_NU,
            kernel: KernelChoice::RbfMedian,
            threshold: crate::scoring::DEFAULT_THRESHOLD,
            k: crate::graph::DEFAULT_K,
            sigma_den: None,
            sampler: Sampler::OneTime,
            n_s: 100,
            batch: 25,
            epochs: 50,
            seed: 0,
        }
    }

    fn path(&self, v: &str) -> PathBuf {
        let p = Path::new(v);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Sets one key; later calls override earlier ones.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "train_manifest" => self.train_manifest = Some(self.path(v)),
            "pool_manifest" => self.pool_manifest = Some(self.path(v)),
            "train_litho" => self.train_litho = Some(self.path(v)),
            "pool_litho" => self.pool_litho = Some(self.path(v)),
            "weights" => self.weights = if v == "seeded" { None } else { Some(self.path(v)) },
            "out_dir" => self.out_dir = self.path(v),
            "litho_shape" => self.litho_shape = Some(parse_shape(v)?),
            "stages" => {
                let mut stages = v
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<Vec<Stage>>>()?;
                stages.sort();
                stages.dedup();
                self.stages = stages;
            }
            "r" => self.r = parse_num(key, v)?,
            "softmax" => self.softmax = v.parse().map_err(|e| Error::Config(format!("`softmax`: {e}")))?,
            "grid" => self.grid = parse_num(key, v)?,
            "tau" => self.tau = parse_num(key, v)?,
            "K" => self.clusters = parse_num(key, v)?,
            "nu" => self.nu = parse_num(key, v)?,
            "kernel" => self.kernel = v.parse().map_err(|e| Error::Config(format!("`kernel`: {e}")))?,
            "threshold" => self.threshold = parse_num(key, v)?,
            "k" => self.k = parse_num(key, v)?,
            "sigma_den" => self.sigma_den = if v == "auto" { None } else { Some(parse_num(key, v)?) },
            "sampler" => self.sampler = v.parse()?,
            "n_s" => self.n_s = parse_num(key, v)?,
            "batch" => self.batch = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        match self.values.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = v.to_string(),
            None => self.values.push((key.to_string(), v.to_string())),
        }
        Ok(())
    }

    /// Checks ranges that individual stages would otherwise reject late.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("r", self.r),
            ("grid", self.grid),
            ("K", self.clusters),
            ("k", self.k),
            ("n_s", self.n_s),
            ("batch", self.batch),
            ("epochs", self.epochs),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{name}` must be at least 1")));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::Config(format!("`nu` = {} must lie in (0, 1]", self.nu)));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Config("`threshold` must be finite".into()));
        }
        if let Some(s) = self.sigma_den {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("`sigma_den` = {s} must be positive")));
            }
        }
        Ok(())
    }

    /// Canonical text of the explicitly set keys, sorted by key.
    pub fn canonical(&self) -> String {
        let mut v = self.values.clone();
        v.sort();
        v.iter().map(|(k, val)| format!("{k}={val}\n")).collect()
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn hash(&self) -> String {
        crate::util::hex(&Sha256::digest(self.canonical().as_bytes()))
    }
}

fn parse_shape(v: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("`litho_shape` must be C,H,W, got {v:?}")));
    }
    Ok((
        parse_num("litho_shape", parts[0])?,
        parse_num("litho_shape", parts[1])?,
        parse_num("litho_shape", parts[2])?,
    ))
}

pub fn parse_config(text: &str, base: &Path) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::new(base);
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        cfg.set(key.trim(), value)?;
    }
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}
