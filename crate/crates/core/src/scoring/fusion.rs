//! Score normalisation, glocal fusion and ROC AUC.

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = -0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    Local,
    Global,
    Normalized,
    Glocal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub kind: ScoreKind,
}

impl ScoreVector {
    pub fn new(values: Vec<f64>, kind: ScoreKind) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("{kind:?} scores contain non-finite values")));
        }
        Ok(Self { values, kind })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Z-normalisation with the population standard deviation.
pub fn normalize_scores(v: &ScoreVector) -> Result<ScoreVector> {
    if v.len() < 2 {
        return Err(Error::Degenerate(format!("need at least 2 scores, got {}", v.len())));
    }
    let (mean, std) = crate::util::mean_std(&v.values);
    if !(std > 0.0) {
        return Err(Error::Degenerate("score vector is constant".into()));
    }
    let values: Vec<f64> = v.values.iter().map(|x| (x - mean) / std).collect();
    // one correction pass removes the rounding residue of the first
    let (m2, s2) = crate::util::mean_std(&values);
    let values = if s2 > 0.0 {
        values.iter().map(|x| (x - m2) / s2).collect()
    } else {
        values
    };
    ScoreVector::new(values, ScoreKind::Normalized)
}

/// `norm(local) + norm(global)`, elementwise.
pub fn glocal_score(local: &ScoreVector, global: &ScoreVector) -> Result<ScoreVector> {
    if local.len() != global.len() {
        return Err(Error::Shape(format!(
            "local has {} scores, global has {}",
            local.len(),
            global.len()
        )));
    }
    let l = normalize_scores(local)?;
    let g = normalize_scores(global)?;
    let values = l.values.iter().zip(&g.values).map(|(a, b)| a + b).collect();
    ScoreVector::new(values, ScoreKind::Glocal)
}

pub fn novelty_decisions(glocal: &ScoreVector, threshold: f64) -> Vec<bool> {
    glocal.values.iter().map(|&v| v >= threshold).collect()
}

/// Mann-Whitney AUC: probability that a positive outscores a negative, ties counted ½.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate("AUC needs both positive and negative labels".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // average ranks (1-based) over tie groups
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum_pos += avg_rank * pos_in_group as f64;
        start = end;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(v: &[f64]) -> ScoreVector {
        ScoreVector::new(v.to_vec(), ScoreKind::Local).unwrap()
    }

    #[test]
    fn normalize_one_two_three() {
        // sqrt(3/2) from an mpmath evaluation
        let n = normalize_scores(&sv(&[1.0, 2.0, 3.0])).unwrap();
        let r = 1.224_744_871_391_589_f64;
        assert!((n.values[0] + r).abs() < 1e-12);
        assert!(n.values[1].abs() < 1e-12);
        assert!((n.values[2] - r).abs() < 1e-12);
    }

    #[test]
    fn normalize_is_idempotent() {
        let n = normalize_scores(&sv(&[0.3, -2.0, 5.5, 1.25, 0.0])).unwrap();
        let nn = normalize_scores(&n).unwrap();
        for (a, b) in n.values.iter().zip(&nn.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_degenerate() {
        assert!(matches!(normalize_scores(&sv(&[5.0, 5.0, 5.0])), Err(Error::Degenerate(_))));
        assert!(matches!(normalize_scores(&sv(&[5.0])), Err(Error::Degenerate(_))));
    }

    #[test]
    fn glocal_examples() {
        let a = sv(&[1.0, 4.0, 2.0, 8.0]);
        let g = glocal_score(&a, &a).unwrap();
        let n = normalize_scores(&a).unwrap();
        for (x, y) in g.values.iter().zip(&n.values) {
            assert!((x - 2.0 * y).abs() < 1e-12);
        }
        let g = glocal_score(&sv(&[1.0, 2.0, 3.0]), &sv(&[3.0, 2.0, 1.0])).unwrap();
        assert!(g.values.iter().all(|v| v.abs() < 1e-12));
        assert!(matches!(glocal_score(&sv(&[1.0, 2.0]), &sv(&[1.0, 2.0, 3.0])), Err(Error::Shape(_))));
    }

    #[test]
    fn threshold_decisions() {
        let g = ScoreVector::new(vec![-2.0, -0.9, -0.5, 1.0], ScoreKind::Glocal).unwrap();
        assert_eq!(novelty_decisions(&g, DEFAULT_THRESHOLD), vec![false, true, true, true]);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
        assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn auc_complement_for_tie_free_scores() {
        let s = [0.3, -1.0, 2.2, 0.7, 1.1, -0.2];
        let l = [true, false, true, false, false, true];
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        assert!((auc(&s, &l).unwrap() + auc(&neg, &l).unwrap() - 1.0).abs() < 1e-15);
    }
}
