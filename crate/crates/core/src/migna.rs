//! Novelty annotation from prediction / ground-truth disagreement.
//!
//! A deformation map holds the per-pixel absolute difference between a
//! predicted and a measured contour image. The map is cut into a
//! `grid x grid` set of patches; patches touching the grid perimeter are
//! dropped, and a retained patch is anomalous when its mean difference lies
//! more than three corpus standard deviations above the corpus mean. A
//! layout is novel when it holds at least `tau` anomalous patches.

use crate::error::{Error, Result};
use crate::io::GrayImage;

pub const DEFAULT_GRID: usize = 16;
pub const DEFAULT_TAU: usize = 5;
/// Anomaly threshold in corpus standard deviations.
pub const SIGMA_MULTIPLIER: f64 = 3.0;

/// Per-pixel `|pred - gt|`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeformationMap {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl DeformationMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.width + x]
    }

    /// Mean value of every patch, row-major over the grid.
    pub fn patch_means(&self, grid: usize) -> Result<Vec<f64>> {
        check_grid(self.width, self.height, grid)?;
        let (pw, ph) = (self.width / grid, self.height / grid);
        let mut sums = vec![0u64; grid * grid];
        for y in 0..self.height {
            let row = &self.values[y * self.width..(y + 1) * self.width];
            let gy = y / ph;
            for (gx, chunk) in row.chunks_exact(pw).enumerate() {
                sums[gy * grid + gx] += chunk.iter().map(|&v| v as u64).sum::<u64>();
            }
        }
        let area = (pw * ph) as f64;
        Ok(sums.into_iter().map(|s| s as f64 / area).collect())
    }
}

fn check_grid(width: usize, height: usize, grid: usize) -> Result<()> {
    if grid == 0 || width % grid != 0 || height % grid != 0 {
        return Err(Error::Shape(format!(
            "{width}x{height} map is not divisible into a {grid}x{grid} grid"
        )));
    }
    Ok(())
}

/// Whether patch `(gx, gy)` lies off the grid perimeter.
pub fn is_retained(gx: usize, gy: usize, grid: usize) -> bool {
    gx > 0 && gy > 0 && gx + 1 < grid && gy + 1 < grid
}

pub fn deformation_map(pred: &GrayImage, gt: &GrayImage) -> Result<DeformationMap> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let values = pred
        .pixels()
        .iter()
        .zip(gt.pixels())
        .map(|(&a, &b)| a.abs_diff(b))
        .collect();
    Ok(DeformationMap {
        width: pred.width(),
        height: pred.height(),
        values,
    })
}

/// Mean and population standard deviation of retained-patch means over a corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusL1Stats {
    pub mean: f64,
    pub std: f64,
    pub n_patches: usize,
}

impl CorpusL1Stats {
    pub fn threshold(&self) -> f64 {
        self.mean + SIGMA_MULTIPLIER * self.std
    }
}

pub fn corpus_stats(maps: &[DeformationMap], grid: usize) -> Result<CorpusL1Stats> {
    let first = maps
        .first()
        .ok_or_else(|| Error::Empty("corpus_stats needs at least one map".into()))?;
    let mut values = Vec::new();
    for m in maps {
        if m.width != first.width || m.height != first.height {
            return Err(Error::Shape("corpus maps differ in shape".into()));
        }
        let means = m.patch_means(grid)?;
        for gy in 0..grid {
            for gx in 0..grid {
                if is_retained(gx, gy, grid) {
                    values.push(means[gy * grid + gx]);
                }
            }
        }
    }
    if values.is_empty() {
        return Err(Error::Empty(format!("grid {grid} retains no patches")));
    }
    let (mean, std) = crate::util::mean_std(&values);
    Ok(CorpusL1Stats {
        mean,
        std,
        n_patches: values.len(),
    })
}

/// Patch-level view of one deformation map.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub grid_size: usize,
    pub retained: Vec<bool>,
    pub anomaly: Vec<bool>,
    pub patch_l1: Vec<f64>,
}

impl PatchGrid {
    pub fn anomaly_count(&self) -> usize {
        self.anomaly.iter().filter(|&&a| a).count()
    }

    pub fn discarded_count(&self) -> usize {
        self.retained.iter().filter(|&&r| !r).count()
    }
}

pub fn patch_anomalies(map: &DeformationMap, stats: &CorpusL1Stats, grid: usize) -> Result<PatchGrid> {
    let patch_l1 = map.patch_means(grid)?;
    let threshold = stats.threshold();
    let retained: Vec<bool> = (0..grid * grid)
        .map(|i| is_retained(i % grid, i / grid, grid))
        .collect();
    let anomaly = retained
        .iter()
        .zip(&patch_l1)
        .map(|(&r, &v)| r && v > threshold)
        .collect();
    Ok(PatchGrid {
        grid_size: grid,
        retained,
        anomaly,
        patch_l1,
    })
}

pub fn label_novelty(grid: &PatchGrid, tau: usize) -> bool {
    grid.anomaly_count() >= tau
}
