//! Inference-only self-attention over a `C x (H*W)` latent tensor.
//!
//! Query/key maps reduce the channel depth to `C/8` with 1x1 projections,
//! attention weights come from a softmax of query-key dot products, and the
//! output is `gamma * O + f` where `O` is the projected attention-weighted
//! value map.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::io::{load_feature_matrix, save_feature_matrix, FeatureMatrix, FeatureRole};

/// Channel reduction factor for the query and key projections.
pub const CHANNEL_REDUCTION: usize = 8;
pub const INIT_RANGE: f64 = 0.05;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{rows}x{cols} matrix needs {} values, got {}", rows * cols, data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `selfᵀ · rhs`.
    pub fn t_mul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != rhs.rows {
            return Err(Error::Shape(format!(
                "cannot multiply ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let lhs_row = &self.data[k * self.cols..(k + 1) * self.cols];
            let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
            for (i, &a) in lhs_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }
}

/// `C x (H*W)` latent tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Matrix,
}

impl LatentTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || channels % CHANNEL_REDUCTION != 0 {
            return Err(Error::Shape(format!("channel count {channels} must be a positive multiple of {CHANNEL_REDUCTION}")));
        }
        if height == 0 || width == 0 {
            return Err(Error::Shape("spatial size must be non-zero".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("latent tensor has non-finite values".into()));
        }
        Ok(Self { channels, height, width, data: Matrix::from_vec(channels, height * width, data)? })
    }

    pub fn positions(&self) -> usize {
        self.height * self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaWeights {
    /// `C x C/8`
    pub w_q: Matrix,
    /// `C x C/8`
    pub w_k: Matrix,
    /// `C x C`
    pub w_v: Matrix,
    /// `C x C`
    pub w_o: Matrix,
    pub gamma: f64,
}

pub const WEIGHT_FILES: [&str; 5] = ["wq.glfm", "wk.glfm", "wv.glfm", "wo.glfm", "gamma.glfm"];

impl SaWeights {
    pub fn channels(&self) -> usize {
        self.w_v.rows
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.w_v.rows;
        let cr = c / CHANNEL_REDUCTION;
        let ok = c % CHANNEL_REDUCTION == 0
            && c > 0
            && (self.w_q.rows, self.w_q.cols) == (c, cr)
            && (self.w_k.rows, self.w_k.cols) == (c, cr)
            && (self.w_v.rows, self.w_v.cols) == (c, c)
            && (self.w_o.rows, self.w_o.cols) == (c, c);
        if !ok {
            return Err(Error::Shape(format!(
                "weight shapes inconsistent: wq {}x{}, wk {}x{}, wv {}x{}, wo {}x{}",
                self.w_q.rows, self.w_q.cols, self.w_k.rows, self.w_k.cols,
                self.w_v.rows, self.w_v.cols, self.w_o.rows, self.w_o.cols
            )));
        }
        if !self.gamma.is_finite() {
            return Err(Error::Data("gamma must be finite".into()));
        }
        Ok(())
    }

    /// Uniform(-0.05, 0.05) weights with `gamma = 1`.
    pub fn seeded(channels: usize, seed: u64) -> Result<Self> {
        if channels == 0 || channels % CHANNEL_REDUCTION != 0 {
            return Err(Error::Shape(format!("channel count {channels} must be a positive multiple of {CHANNEL_REDUCTION}")));
        }
        let mut rng = crate::util::stream_rng(&[seed, 0x5A]);
        let mut m = |r: usize, c: usize| Matrix {
            rows: r,
            cols: c,
            data: (0..r * c).map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE)).collect(),
        };
        let cr = channels / CHANNEL_REDUCTION;
        Ok(Self {
            w_q: m(channels, cr),
            w_k: m(channels, cr),
            w_v: m(channels, channels),
            w_o: m(channels, channels),
            gamma: 1.0,
        })
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| -> Result<Matrix> {
            let m = load_feature_matrix(dir.join(name))?;
            Matrix::from_vec(m.n_samples(), m.dim(), m.data().iter().map(|&v| v as f64).collect())
        };
        let gamma = read(WEIGHT_FILES[4])?;
        if gamma.data.len() != 1 {
            return Err(Error::Format("gamma file must hold a 1x1 matrix".into()));
        }
        let w = Self {
            w_q: read(WEIGHT_FILES[0])?,
            w_k: read(WEIGHT_FILES[1])?,
            w_v: read(WEIGHT_FILES[2])?,
            w_o: read(WEIGHT_FILES[3])?,
            gamma: gamma.data[0],
        };
        w.validate()?;
        Ok(w)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let to_fm = |m: &Matrix| FeatureMatrix::new(m.rows, m.cols, m.data.iter().map(|&v| v as f32).collect(), FeatureRole::LocalSa);
        for (name, m) in WEIGHT_FILES.iter().zip([&self.w_q, &self.w_k, &self.w_v, &self.w_o]) {
            save_feature_matrix(&to_fm(m)?, dir.join(name))?;
        }
        let g = FeatureMatrix::new(1, 1, vec![self.gamma as f32], FeatureRole::LocalSa)?;
        save_feature_matrix(&g, dir.join(WEIGHT_FILES[4]))
    }
}

/// Attention normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SoftmaxMode {
    /// Softmax over keys, separately for every query.
    #[default]
    PerQuery,
    /// One normaliser shared by every query-key pair.
    Global,
}

impl std::str::FromStr for SoftmaxMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-query" | "query" => Ok(Self::PerQuery),
            "global" => Ok(Self::Global),
            other => Err(Error::Param(format!("unknown softmax mode {other:?}"))),
        }
    }
}

pub struct Qkv {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
}

pub fn project_qkv(f: &LatentTensor, w: &SaWeights) -> Result<Qkv> {
    w.validate()?;
    if w.channels() != f.channels {
        return Err(Error::Shape(format!("weights expect {} channels, tensor has {}", w.channels(), f.channels)));
    }
    Ok(Qkv {
        q: w.w_q.t_mul(&f.data)?,
        k: w.w_k.t_mul(&f.data)?,
        v: w.w_v.t_mul(&f.data)?,
    })
}

/// `beta[j][i]` (row `j`, column `i`) from scores `s_ij = q_i · k_j`.
pub fn attention_weights(q: &Matrix, k: &Matrix, mode: SoftmaxMode) -> Result<Matrix> {
    if q.rows != k.rows || q.cols != k.cols {
        return Err(Error::Shape(format!("Q is {}x{}, K is {}x{}", q.rows, q.cols, k.rows, k.cols)));
    }
    let n = q.cols;
    // scores[j][i] = q_i · k_j
    let s = k.t_mul(q)?;
    let mut beta = Matrix::zeros(n, n);
    match mode {
        SoftmaxMode::PerQuery => {
            for j in 0..n {
                let row = &s.data[j * n..(j + 1) * n];
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let out = &mut beta.data[j * n..(j + 1) * n];
                let mut z = 0.0;
                for (o, &v) in out.iter_mut().zip(row) {
                    *o = (v - max).exp();
                    z += *o;
                }
                out.iter_mut().for_each(|o| *o /= z);
            }
        }
        SoftmaxMode::Global => {
            let max = s.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (o, &v) in beta.data.iter_mut().zip(&s.data) {
                *o = (v - max).exp();
                z += *o;
            }
            beta.data.iter_mut().for_each(|o| *o /= z);
        }
    }
    Ok(beta)
}

/// Attention output map `O` (before scaling by gamma).
pub fn attention_output(f: &LatentTensor, w: &SaWeights, mode: SoftmaxMode) -> Result<Matrix> {
    let qkv = project_qkv(f, w)?;
    let beta = attention_weights(&qkv.q, &qkv.k, mode)?;
    let (c, n) = (f.channels, f.positions());
    // mixed[:, j] = Σ_i beta[j][i] v_i
    let mut mixed = Matrix::zeros(c, n);
    for ch in 0..c {
        let v_row = &qkv.v.data[ch * n..(ch + 1) * n];
        for j in 0..n {
            let b_row = &beta.data[j * n..(j + 1) * n];
            mixed.set(ch, j, b_row.iter().zip(v_row).map(|(b, v)| b * v).sum());
        }
    }
    w.w_o.t_mul(&mixed)
}

pub fn sa_forward(f: &LatentTensor, w: &SaWeights, mode: SoftmaxMode) -> Result<LatentTensor> {
    let o = attention_output(f, w, mode)?;
    let data = o.data.iter().zip(&f.data.data).map(|(o, x)| w.gamma * o + x).collect();
    LatentTensor::new(f.channels, f.height, f.width, data)
}

/// Applies the forward pass to every row of a matrix of flattened `C x H x W` tensors.
pub fn sa_forward_matrix(
    features: &FeatureMatrix,
    shape: (usize, usize, usize),
    w: &SaWeights,
    mode: SoftmaxMode,
) -> Result<FeatureMatrix> {
    use rayon::prelude::*;
    let (c, h, wd) = shape;
    if features.dim() != c * h * wd {
        return Err(Error::Shape(format!("rows have {} values, shape {c}x{h}x{wd} needs {}", features.dim(), c * h * wd)));
    }
    let rows = (0..features.n_samples())
        .into_par_iter()
        .map(|i| {
            let t = LatentTensor::new(c, h, wd, features.row_f64(i))?;
            Ok(sa_forward(&t, w, mode)?.data.data)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::from_rows(&rows, FeatureRole::LocalSa)
}
