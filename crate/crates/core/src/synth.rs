//! Seeded synthetic corpora.
//!
//! Everything here is a deterministic function of its seed, so tests and
//! demos can regenerate the same data instead of shipping binary fixtures.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::io::{save_feature_matrix, save_image, FeatureMatrix, FeatureRole, GrayImage};
use crate::util::stream_rng;

/// Local/global feature pairs for a training corpus and a labelled test corpus.
#[derive(Debug, Clone)]
pub struct GlocalCorpus {
    pub train_sa: FeatureMatrix,
    pub train_y: FeatureMatrix,
    pub test_sa: FeatureMatrix,
    pub test_y: FeatureMatrix,
    /// `true` for novel test samples.
    pub labels: Vec<bool>,
}

const SA_DIM: usize = 8;
const Y_DIM: usize = 24;
const Y_RANK: usize = 4;

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Two regular clusters plus a shifted novel population.
///
/// Regular samples: local features around one of two cluster centres, global
/// vectors inside a fixed rank-4 subspace plus isotropic noise. Novel samples
/// (a fifth of the test corpus) are pushed off the clusters in local space
/// and off the subspace in global space by independent random amounts, so
/// each score alone only partly separates them.
pub fn glocal_corpus(n_train: usize, n_test: usize, seed: u64) -> Result<GlocalCorpus> {
    let mut rng = stream_rng(&[seed, 0x6c6f_6361]);
    let basis: Vec<Vec<f64>> = (0..Y_RANK).map(|_| unit_vector(&mut rng, Y_DIM)).collect();
    let off_dir = unit_vector(&mut rng, Y_DIM);
    let centers = [4.0, -4.0];
    let noise_y = Normal::new(0.0, 0.3).expect("valid sigma");

    let draw = |novel: bool, rng: &mut rand_chacha::ChaCha8Rng| -> (Vec<f64>, Vec<f64>) {
        let c = centers[rng.gen_range(0..2)];
        let mut sa: Vec<f64> = (0..SA_DIM).map(|_| gaussian(rng)).collect();
        sa[0] += c;
        let mut y = vec![0.0; Y_DIM];
        for b in &basis {
            let z = 2.0 * gaussian(rng);
            for (yi, bi) in y.iter_mut().zip(b) {
                *yi += z * bi;
            }
        }
        for yi in y.iter_mut() {
            *yi += noise_y.sample(rng);
        }
        if novel {
            sa[1] += rng.gen_range(0.5..5.5);
            let b = rng.gen_range(0.25..2.5);
            for (yi, di) in y.iter_mut().zip(&off_dir) {
                *yi += b * di;
            }
        }
        (sa, y)
    };

    let mut train_sa = Vec::with_capacity(n_train);
    let mut train_y = Vec::with_capacity(n_train);
    for _ in 0..n_train {
        let (sa, y) = draw(false, &mut rng);
        train_sa.push(sa);
        train_y.push(y);
    }
    let n_novel = n_test / 5;
    let mut labels: Vec<bool> = (0..n_test).map(|i| i < n_novel).collect();
    labels.shuffle(&mut rng);
    let mut test_sa = Vec::with_capacity(n_test);
    let mut test_y = Vec::with_capacity(n_test);
    for &novel in &labels {
        let (sa, y) = draw(novel, &mut rng);
        test_sa.push(sa);
        test_y.push(y);
    }
    Ok(GlocalCorpus {
        train_sa: FeatureMatrix::from_rows(&train_sa, FeatureRole::LocalSa)?,
        train_y: FeatureMatrix::from_rows(&train_y, FeatureRole::GlobalAe)?,
        test_sa: FeatureMatrix::from_rows(&test_sa, FeatureRole::LocalSa)?,
        test_y: FeatureMatrix::from_rows(&test_y, FeatureRole::GlobalAe)?,
        labels,
    })
}

/// Global and local features for graph and sampling experiments, with the
/// generating cluster of every row.
#[derive(Debug, Clone)]
pub struct ClusteredFeatures {
    pub f_ae: FeatureMatrix,
    pub f_sa: FeatureMatrix,
    pub cluster: Vec<usize>,
}

/// `n` points drawn round-robin from `clusters` Gaussian blobs.
///
/// Blob centres sit `separation` apart on a random simplex-like layout in an
/// 8-dimensional global space; local features are strictly positive so their
/// cosine similarities are well defined.
pub fn gaussian_blobs(n: usize, clusters: usize, separation: f64, seed: u64) -> Result<ClusteredFeatures> {
    if clusters == 0 || n == 0 {
        return Err(Error::Param("need at least one cluster and one point".into()));
    }
    let dim = 8;
    let mut rng = stream_rng(&[seed, 0x626c_6f62]);
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|_| unit_vector(&mut rng, dim).into_iter().map(|x| x * separation).collect())
        .collect();
    let sa_profile: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..dim).map(|_| rng.gen_range(0.5..3.0)).collect())
        .collect();
    let mut ae = Vec::with_capacity(n);
    let mut sa = Vec::with_capacity(n);
    let mut cluster = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % clusters;
        ae.push(centers[c].iter().map(|m| m + gaussian(&mut rng)).collect::<Vec<f64>>());
        sa.push(
            sa_profile[c]
                .iter()
                .map(|m| (m + 0.3 * gaussian(&mut rng)).max(0.05))
                .collect::<Vec<f64>>(),
        );
        cluster.push(c);
    }
    Ok(ClusteredFeatures {
        f_ae: FeatureMatrix::from_rows(&ae, FeatureRole::GlobalAe)?,
        f_sa: FeatureMatrix::from_rows(&sa, FeatureRole::LocalSa)?,
        cluster,
    })
}

/// Two well separated blobs of `n_per_blob` points each.
pub fn two_blobs(n_per_blob: usize, seed: u64) -> Result<ClusteredFeatures> {
    gaussian_blobs(2 * n_per_blob, 2, 20.0, seed)
}

/// Shape of the latent tensors written by [`write_image_corpus`].
pub const LITHO_SHAPE: (usize, usize, usize) = (8, 4, 4);
pub const IMAGE_SIZE: usize = 64;

/// Files written by [`write_image_corpus`].
#[derive(Debug, Clone)]
pub struct ImageCorpusFiles {
    pub root: PathBuf,
    pub train_manifest: PathBuf,
    pub pool_manifest: PathBuf,
    pub train_litho: PathBuf,
    pub pool_litho: PathBuf,
    pub config: PathBuf,
    /// Ground-truth novelty of every pool sample, in manifest order.
    pub pool_novel: Vec<bool>,
}

struct Sample {
    layout: GrayImage,
    prediction: GrayImage,
    ground_truth: GrayImage,
}

fn bars_layout<R: Rng>(rng: &mut R) -> Result<GrayImage> {
    let mut img = GrayImage::filled(IMAGE_SIZE, IMAGE_SIZE, 0)?;
    let pitch = rng.gen_range(10..=16);
    let width = rng.gen_range(3..=pitch / 2);
    let offset = rng.gen_range(0..pitch);
    for y in 0..IMAGE_SIZE {
        for x in 0..IMAGE_SIZE {
            if (x + offset) % pitch < width {
                img.set(x, y, 255);
            }
        }
    }
    Ok(img)
}

fn contacts_layout<R: Rng>(rng: &mut R) -> Result<GrayImage> {
    let mut img = GrayImage::filled(IMAGE_SIZE, IMAGE_SIZE, 0)?;
    let pitch = rng.gen_range(9..=14);
    let side = rng.gen_range(3..=pitch / 2);
    let (ox, oy) = (rng.gen_range(0..pitch), rng.gen_range(0..pitch));
    for y in 0..IMAGE_SIZE {
        for x in 0..IMAGE_SIZE {
            if (x + ox) % pitch < side && (y + oy) % pitch < side {
                img.set(x, y, 255);
            }
        }
    }
    Ok(img)
}

fn make_sample<R: Rng>(novel: bool, rng: &mut R) -> Result<Sample> {
    let layout = if novel { contacts_layout(rng)? } else { bars_layout(rng)? };
    let ground_truth = layout.clone();
    let mut prediction = layout.clone();
    // isolated edge errors everywhere
    for _ in 0..rng.gen_range(0..3) {
        let (x, y) = (rng.gen_range(4..IMAGE_SIZE - 4), rng.gen_range(4..IMAGE_SIZE - 4));
        prediction.set(x, y, 255 - prediction.get(x, y));
    }
    if novel {
        // whole regions the model gets wrong
        for _ in 0..3 {
            let (x0, y0) = (rng.gen_range(4..IMAGE_SIZE - 12), rng.gen_range(4..IMAGE_SIZE - 12));
            for y in y0..y0 + 8 {
                for x in x0..x0 + 8 {
                    prediction.set(x, y, 255 - ground_truth.get(x, y));
                }
            }
        }
    }
    Ok(Sample {
        layout,
        prediction,
        ground_truth,
    })
}

/// Latent tensor summarising a sample: four channels of 16x16 block
/// coverage, four of block deformation energy, plus noise.
fn litho_features<R: Rng>(s: &Sample, rng: &mut R) -> Vec<f64> {
    let (c, h, w) = LITHO_SHAPE;
    let block = IMAGE_SIZE / h;
    let mut coverage = vec![0.0; h * w];
    let mut deform = vec![0.0; h * w];
    for y in 0..IMAGE_SIZE {
        for x in 0..IMAGE_SIZE {
            let b = (y / block) * w + x / block;
            coverage[b] += s.layout.get(x, y) as f64 / 255.0;
            let d = (s.prediction.get(x, y) as f64 - s.ground_truth.get(x, y) as f64).abs() / 255.0;
            deform[b] += d;
        }
    }
    let area = (block * block) as f64;
    let noise = Normal::new(0.0, 0.05).expect("valid sigma");
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for b in 0..h * w {
            let v = if ch < c / 2 {
                coverage[b] / area * (ch + 1) as f64 / 2.0
            } else {
                deform[b] / area * (ch - c / 2 + 1) as f64 * 4.0 + 0.1
            };
            out.push(v + noise.sample(rng));
        }
    }
    out
}

/// Writes a training corpus of regular layouts and a pool in which about a
/// fifth of the samples are novel, together with manifests, latent tensors
/// and a ready-to-run pipeline configuration.
pub fn write_image_corpus(dir: impl AsRef<Path>, n_train: usize, n_pool: usize, seed: u64) -> Result<ImageCorpusFiles> {
    let root = dir.as_ref().to_path_buf();
    let images = root.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut rng = stream_rng(&[seed, 0x696d_6167]);

    let mut train_manifest = String::new();
    let mut train_litho = Vec::with_capacity(n_train);
    for i in 0..n_train {
        let s = make_sample(false, &mut rng)?;
        let name = format!("train_{i:03}");
        save_image(&s.layout, images.join(format!("{name}.pgm")))?;
        train_manifest.push_str(&format!("{name}\timages/{name}.pgm\n"));
        train_litho.push(litho_features(&s, &mut rng));
    }

    let n_novel = n_pool / 5;
    let mut pool_novel: Vec<bool> = (0..n_pool).map(|i| i < n_novel).collect();
    pool_novel.shuffle(&mut rng);
    let mut pool_manifest = String::new();
    let mut pool_litho = Vec::with_capacity(n_pool);
    for (i, &novel) in pool_novel.iter().enumerate() {
        let s = make_sample(novel, &mut rng)?;
        let name = format!("pool_{i:03}");
        save_image(&s.layout, images.join(format!("{name}.pgm")))?;
        save_image(&s.prediction, images.join(format!("{name}_pred.pgm")))?;
        save_image(&s.ground_truth, images.join(format!("{name}_gt.pgm")))?;
        pool_manifest.push_str(&format!(
            "{name}\timages/{name}.pgm\timages/{name}_pred.pgm\timages/{name}_gt.pgm\n"
        ));
        pool_litho.push(litho_features(&s, &mut rng));
    }

    let write = |name: &str, text: &str| -> Result<PathBuf> {
        let p = root.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    };
    let train_manifest = write("train.tsv", &train_manifest)?;
    let pool_manifest = write("pool.tsv", &pool_manifest)?;
    let train_litho_path = root.join("train_litho.glfm");
    save_feature_matrix(&FeatureMatrix::from_rows(&train_litho, FeatureRole::LocalSa)?, &train_litho_path)?;
    let pool_litho_path = root.join("pool_litho.glfm");
    save_feature_matrix(&FeatureMatrix::from_rows(&pool_litho, FeatureRole::LocalSa)?, &pool_litho_path)?;
    let (c, h, w) = LITHO_SHAPE;
    let config = write(
        "glocal.conf",
        &format!(
            "# synthetic corpus, seed {seed}\n\
             train_manifest = train.tsv\n\
             pool_manifest = pool.tsv\n\
             train_litho = train_litho.glfm\n\
             pool_litho = pool_litho.glfm\n\
             litho_shape = {c},{h},{w}\n\
             out_dir = out\n\
             r = 8\n\
             K = 2\n\
             k = 5\n\
             n_s = 6\n\
             batch = 3\n\
             epochs = 20\n\
             seed = {seed}\n"
        ),
    )?;
    Ok(ImageCorpusFiles {
        root,
        train_manifest,
        pool_manifest,
        train_litho: train_litho_path,
        pool_litho: pool_litho_path,
        config,
        pool_novel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpora_are_seed_deterministic() {
        let a = glocal_corpus(50, 40, 3).unwrap();
        let b = glocal_corpus(50, 40, 3).unwrap();
        assert_eq!(a.test_sa, b.test_sa);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.labels.iter().filter(|&&l| l).count(), 8);
        let c = glocal_corpus(50, 40, 4).unwrap();
        assert_ne!(a.test_y, c.test_y);
    }

    #[test]
    fn blobs_are_balanced_and_positive() {
        let b = two_blobs(15, 1).unwrap();
        assert_eq!(b.f_ae.n_samples(), 30);
        assert_eq!(b.cluster.iter().filter(|&&c| c == 1).count(), 15);
        assert!(b.f_sa.data().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn image_corpus_roundtrips_through_loaders() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_image_corpus(dir.path(), 6, 10, 2).unwrap();
        let pool = crate::io::load_manifest(&files.pool_manifest).unwrap();
        assert_eq!(pool.len(), 10);
        assert!(pool.entries.iter().all(|e| e.prediction.is_some() && e.ground_truth.is_some()));
        let litho = crate::io::load_feature_matrix(&files.pool_litho).unwrap();
        assert_eq!(litho.dim(), 128);
        assert_eq!(files.pool_novel.iter().filter(|&&n| n).count(), 2);
    }
}
