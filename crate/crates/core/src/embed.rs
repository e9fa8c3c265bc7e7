//! Linear principal-subspace embedder.
//!
//! Stands in for a trained convolutional autoencoder: the latent code of a
//! flattened image `y` is `basisᵀ (y - mean)` and its reconstruction is
//! `mean + basis basisᵀ (y - mean)`. The global novelty score is the squared
//! reconstruction error.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::io::{load_feature_matrix, save_feature_matrix, FeatureMatrix, FeatureRole};

pub const MEAN_FILE: &str = "mean.glfm";
pub const BASIS_FILE: &str = "basis.glfm";

#[derive(Debug, Clone, PartialEq)]
pub struct LinearEmbedder {
    mean: Vec<f64>,
    /// `dim x r`, row-major, orthonormal columns.
    basis: Vec<f64>,
    dim: usize,
    r: usize,
}

impl LinearEmbedder {
    pub fn from_parts(mean: Vec<f64>, basis: Vec<f64>, r: usize) -> Result<Self> {
        let dim = mean.len();
        if r == 0 || basis.len() != dim * r {
            return Err(Error::Shape(format!(
                "basis has {} values, expected {dim}x{r}",
                basis.len()
            )));
        }
        Ok(Self { mean, basis, dim, r })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn latent_dim(&self) -> usize {
        self.r
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Column `j` of the basis.
    pub fn basis_vector(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.basis[i * self.r + j]).collect()
    }

    fn check_dim(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim {
            return Err(Error::Shape(format!(
                "embedder expects dimension {}, got {}",
                self.dim,
                y.len()
            )));
        }
        Ok(())
    }

    /// Latent code `basisᵀ (y - mean)`.
    pub fn encode(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(y)?;
        let mut z = vec![0.0; self.r];
        for (i, (&yi, &mi)) in y.iter().zip(&self.mean).enumerate() {
            let c = yi - mi;
            let row = &self.basis[i * self.r..(i + 1) * self.r];
            for (zj, &b) in z.iter_mut().zip(row) {
                *zj += b * c;
            }
        }
        Ok(z)
    }

    pub fn decode(&self, z: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                let row = &self.basis[i * self.r..(i + 1) * self.r];
                self.mean[i] + row.iter().zip(z).map(|(b, z)| b * z).sum::<f64>()
            })
            .collect()
    }

    pub fn reconstruct(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.decode(&self.encode(y)?))
    }

    /// Latent codes for every row, as a global-role feature matrix.
    pub fn encode_matrix(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        let rows = (0..m.n_samples())
            .map(|i| self.encode(&m.row_f64(i)))
            .collect::<Result<Vec<_>>>()?;
        FeatureMatrix::from_rows(&rows, FeatureRole::GlobalAe)
    }

    /// Reconstruction-error score of every row.
    pub fn global_scores(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        (0..m.n_samples())
            .map(|i| {
                let y = m.row_f64(i);
                let y_hat = self.reconstruct(&y)?;
                Ok(global_score(&y, &y_hat))
            })
            .collect()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mean = FeatureMatrix::new(1, self.dim, self.mean.iter().map(|&v| v as f32).collect(), FeatureRole::GlobalAe)?;
        let basis = FeatureMatrix::new(self.dim, self.r, self.basis.iter().map(|&v| v as f32).collect(), FeatureRole::GlobalAe)?;
        save_feature_matrix(&mean, dir.join(MEAN_FILE))?;
        save_feature_matrix(&basis, dir.join(BASIS_FILE))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mean = load_feature_matrix(dir.join(MEAN_FILE))?;
        let basis = load_feature_matrix(dir.join(BASIS_FILE))?;
        if mean.n_samples() != 1 || basis.n_samples() != mean.dim() {
            return Err(Error::Format(format!(
                "embedder files disagree: mean {}x{}, basis {}x{}",
                mean.n_samples(),
                mean.dim(),
                basis.n_samples(),
                basis.dim()
            )));
        }
        let to64 = |m: &FeatureMatrix| m.data().iter().map(|&v| v as f64).collect();
        Self::from_parts(to64(&mean), to64(&basis), basis.dim())
    }
}

/// Fits the top-`r` principal directions of the centred training rows.
///
/// Basis vectors are ordered by decreasing singular value and signed so that
/// their first non-negligible component is positive.
pub fn fit_embedder(train: &FeatureMatrix, r: usize) -> Result<LinearEmbedder> {
    let (n, dim) = (train.n_samples(), train.dim());
    if r == 0 || r > n.min(dim) {
        return Err(Error::Param(format!(
            "latent dimension {r} must be in 1..={}",
            n.min(dim)
        )));
    }
    let mut mean = vec![0.0; dim];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(train.row(i)) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| train.row(i)[j] as f64 - mean[j]);
    let svd = centered.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Solver { what: "SVD did not produce right singular vectors".into(), residual: f64::NAN })?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

    let mut basis = vec![0.0; dim * r];
    for (j, &src) in order.iter().take(r).enumerate() {
        let row = v_t.row(src);
        let sign = row
            .iter()
            .find(|v| v.abs() > 1e-12)
            .map_or(1.0, |v| v.signum());
        for i in 0..dim {
            basis[i * r + j] = sign * row[i];
        }
    }
    LinearEmbedder::from_parts(mean, basis, r)
}

/// Squared Euclidean distance between an input and its reconstruction.
pub fn global_score(y: &[f64], y_hat: &[f64]) -> f64 {
    crate::util::sq_dist(y, y_hat)
}
