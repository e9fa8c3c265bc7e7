//! Local (multi-sphere SVDD), global and fused novelty scores.
//!
//! The local score clusters training features with k-means, fits one SVDD
//! hypersphere per cluster and scores a query by its smallest
//! `‖φ(z) − c_k‖² − R_k²` over all spheres.

pub mod fusion;
pub mod kmeans;
pub mod svdd;

pub use fusion::{auc, glocal_score, normalize_scores, novelty_decisions, ScoreKind, ScoreVector, DEFAULT_THRESHOLD};
pub use kmeans::{kmeans, ClusterModel};
pub use svdd::{fit_svdd, Hypersphere, Kernel, KernelChoice, SvddParams};

use crate::error::{Error, Result};
use crate::io::{FeatureMatrix, ScoreReport, ScoreRow};

pub const DEFAULT_CLUSTERS: usize = 10;
pub const DEFAULT_NU: f64 = 0.1;

#[derive(Debug, Clone, Copy)]
pub struct McSvmParams {
    pub clusters: usize,
    pub nu: f64,
    pub kernel: KernelChoice,
    pub seed: u64,
}

impl Default for McSvmParams {
    fn default() -> Self {
        Self {
            clusters: DEFAULT_CLUSTERS,
            nu: DEFAULT_NU,
            kernel: KernelChoice::default(),
            seed: 0,
        }
    }
}

/// K per-cluster hyperspheres.
#[derive(Debug, Clone)]
pub struct HypersphereModel {
    pub clusters: ClusterModel,
    pub spheres: Vec<Hypersphere>,
}

impl HypersphereModel {
    pub fn local_score(&self, z: &[f64]) -> f64 {
        self.spheres
            .iter()
            .map(|s| s.dist_sq(z) - s.radius_sq)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn local_scores(&self, features: &FeatureMatrix) -> Vec<f64> {
        use rayon::prelude::*;
        (0..features.n_samples())
            .into_par_iter()
            .map(|i| self.local_score(&features.row_f64(i)))
            .collect()
    }
}

/// Fits k-means followed by one SVDD per cluster. Empty clusters get no sphere.
pub fn fit_mc_svm(train: &FeatureMatrix, params: McSvmParams) -> Result<HypersphereModel> {
    let points = train.to_rows_f64();
    let clusters = kmeans(&points, params.clusters, params.seed)?;
    let mut spheres = Vec::with_capacity(clusters.k());
    for k in 0..clusters.k() {
        let members: Vec<Vec<f64>> = clusters.members(k).into_iter().map(|i| points[i].clone()).collect();
        if members.is_empty() {
            continue;
        }
        let kernel = match params.kernel {
            KernelChoice::Linear => Kernel::Linear,
            KernelChoice::RbfMedian => Kernel::rbf_median(&members),
        };
        spheres.push(fit_svdd(&members, kernel, SvddParams::with_nu(params.nu))?);
    }
    Ok(HypersphereModel { clusters, spheres })
}

/// Assembles the per-sample report from raw local and global scores.
pub fn build_report(ids: &[String], local: &[f64], global: &[f64], threshold: f64) -> Result<ScoreReport> {
    if ids.len() != local.len() || ids.len() != global.len() {
        return Err(Error::Shape(format!(
            "{} ids, {} local scores, {} global scores",
            ids.len(),
            local.len(),
            global.len()
        )));
    }
    let l = ScoreVector::new(local.to_vec(), ScoreKind::Local)?;
    let g = ScoreVector::new(global.to_vec(), ScoreKind::Global)?;
    let fused = glocal_score(&l, &g)?;
    let decisions = novelty_decisions(&fused, threshold);
    Ok(ScoreReport {
        rows: ids
            .iter()
            .enumerate()
            .map(|(i, id)| ScoreRow {
                sample_id: id.clone(),
                theta_local: local[i],
                theta_global: global[i],
                theta_novel: fused.values[i],
                is_novel: decisions[i],
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::FeatureRole;

    #[test]
    fn score_at_center_is_minus_radius_sq() {
        let pts = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let s = fit_svdd(&pts, Kernel::Linear, SvddParams::with_nu(0.01)).unwrap();
        let model = HypersphereModel {
            clusters: kmeans(&pts, 1, 0).unwrap(),
            spheres: vec![s.clone()],
        };
        let c = s.linear_center().unwrap();
        assert!((model.local_score(&c) + s.radius_sq).abs() < 1e-9);
        // on the surface
        assert!(model.local_score(&[c[0] + s.radius(), c[1]]).abs() < 1e-6);
        assert!(model.local_score(&[5.0, 5.0]) > 0.0);
    }

    #[test]
    fn mc_svm_single_cluster_fits() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos()]).collect();
        let fm = FeatureMatrix::from_rows(&rows, FeatureRole::LocalSa).unwrap();
        let model = fit_mc_svm(&fm, McSvmParams { clusters: 1, ..Default::default() }).unwrap();
        assert_eq!(model.spheres.len(), 1);
        assert!(model.local_score(&[10.0, 10.0]) > model.local_score(&[0.0, 0.0]));
    }

    #[test]
    fn report_novel_column_is_fused_sum() {
        let ids: Vec<String> = (0..4).map(|i| format!("s{i}")).collect();
        let r = build_report(&ids, &[1.0, 2.0, 3.0, 10.0], &[0.5, 0.1, 0.2, 3.0], DEFAULT_THRESHOLD).unwrap();
        let nl = normalize_scores(&ScoreVector::new(vec![1.0, 2.0, 3.0, 10.0], ScoreKind::Local).unwrap()).unwrap();
        let ng = normalize_scores(&ScoreVector::new(vec![0.5, 0.1, 0.2, 3.0], ScoreKind::Global).unwrap()).unwrap();
        for (i, row) in r.rows.iter().enumerate() {
            assert!((row.theta_novel - nl.values[i] - ng.values[i]).abs() < 1e-9);
            assert_eq!(row.is_novel, row.theta_novel >= DEFAULT_THRESHOLD);
        }
        assert!(r.rows[3].is_novel);
    }
}
