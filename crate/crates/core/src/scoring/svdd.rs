//! Soft-boundary support vector data description.
//!
//! The dual
//!
//! ```text
//! max  Σ α_i K(x_i, x_i) − Σ_ij α_i α_j K(x_i, x_j)
//! s.t. Σ α_i = 1,  0 ≤ α_i ≤ 1 / (ν m)
//! ```
//!
//! is solved with pairwise (SMO-style) updates on the maximal violating pair
//! until the KKT gap drops below the tolerance. The center lives in kernel
//! feature space as `c = Σ α_i φ(x_i)`.

use crate::error::{Error, Result};
use crate::util::{median, sq_dist};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;
/// Coefficients below this are treated as zero when deciding support vectors.
const ALPHA_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Linear,
    /// `exp(-‖x − y‖² / (2 σ²))`
    Rbf { sigma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => crate::util::dot(a, b),
            Kernel::Rbf { sigma } => (-sq_dist(a, b) / (2.0 * sigma * sigma)).exp(),
        }
    }

    /// RBF kernel with `σ` = median pairwise distance of `points` (1 when that is 0 or undefined).
    pub fn rbf_median(points: &[Vec<f64>]) -> Kernel {
        let mut d = Vec::new();
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                d.push(sq_dist(&points[i], &points[j]).sqrt());
            }
        }
        let sigma = median(&d).filter(|&s| s > 0.0).unwrap_or(1.0);
        Kernel::Rbf { sigma }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelChoice {
    Linear,
    /// RBF with the per-cluster median heuristic.
    #[default]
    RbfMedian,
}

impl std::str::FromStr for KernelChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "rbf" => Ok(Self::RbfMedian),
            other => Err(Error::Param(format!("unknown kernel {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SvddParams {
    pub nu: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SvddParams {
    pub fn with_nu(nu: f64) -> Self {
        Self {
            nu,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

/// One fitted hypersphere.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypersphere {
    pub points: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub kernel: Kernel,
    pub radius_sq: f64,
    /// `Σ_ij α_i α_j K_ij`, the squared norm of the center.
    pub center_norm_sq: f64,
    /// Box bound `1 / (ν m)`.
    pub upper: f64,
    pub nu: f64,
    pub iterations: usize,
}

impl Hypersphere {
    /// Squared feature-space distance from `z` to the center.
    pub fn dist_sq(&self, z: &[f64]) -> f64 {
        let cross: f64 = self
            .points
            .iter()
            .zip(&self.alpha)
            .filter(|(_, &a)| a > 0.0)
            .map(|(p, &a)| a * self.kernel.eval(p, z))
            .sum();
        self.kernel.eval(z, z) - 2.0 * cross + self.center_norm_sq
    }

    pub fn radius(&self) -> f64 {
        self.radius_sq.max(0.0).sqrt()
    }

    /// Explicit center; only defined for the linear kernel.
    pub fn linear_center(&self) -> Option<Vec<f64>> {
        if self.kernel != Kernel::Linear {
            return None;
        }
        let d = self.points[0].len();
        let mut c = vec![0.0; d];
        for (p, &a) in self.points.iter().zip(&self.alpha) {
            c.iter_mut().zip(p).for_each(|(c, v)| *c += a * v);
        }
        Some(c)
    }

    /// Dual objective value, equal to the primal `R² + (1/(ν m)) Σ ξ` at the optimum.
    pub fn dual_objective(&self) -> f64 {
        let diag: f64 = self
            .points
            .iter()
            .zip(&self.alpha)
            .map(|(p, &a)| a * self.kernel.eval(p, p))
            .sum();
        diag - self.center_norm_sq
    }

    pub fn primal_objective(&self) -> f64 {
        let slack: f64 = self
            .points
            .iter()
            .map(|p| (self.dist_sq(p) - self.radius_sq).max(0.0))
            .sum();
        self.radius_sq + self.upper * slack
    }
}

pub fn fit_svdd(points: &[Vec<f64>], kernel: Kernel, params: SvddParams) -> Result<Hypersphere> {
    let m = points.len();
    if m == 0 {
        return Err(Error::Empty("SVDD needs at least one point".into()));
    }
    if !(params.nu > 0.0 && params.nu <= 1.0) {
        return Err(Error::Param(format!("nu = {} must lie in (0, 1]", params.nu)));
    }
    let upper = 1.0 / (params.nu * m as f64);
    let gram: Vec<f64> = (0..m * m)
        .map(|ij| kernel.eval(&points[ij / m], &points[ij % m]))
        .collect();
    let k = |i: usize, j: usize| gram[i * m + j];

    // feasible start: fill coefficients up to the box bound in index order
    let mut alpha = vec![0.0; m];
    let mut remaining: f64 = 1.0;
    for a in alpha.iter_mut() {
        let take = remaining.min(upper);
        *a = take;
        remaining -= take;
        if remaining <= 0.0 {
            break;
        }
    }

    // gradient of f(α) = αᵀKα − Σ α_i K_ii
    let mut grad: Vec<f64> = (0..m)
        .map(|i| 2.0 * (0..m).map(|j| k(i, j) * alpha[j]).sum::<f64>() - k(i, i))
        .collect();

    let mut iterations = 0;
    let mut gap;
    loop {
        // i: may increase (α_i < C) with the smallest gradient;
        // j: may decrease (α_j > 0) with the largest gradient
        let mut up = None;
        let mut low = None;
        for t in 0..m {
            if alpha[t] < upper - ALPHA_EPS && up.map_or(true, |u: usize| grad[t] < grad[u]) {
                up = Some(t);
            }
            if alpha[t] > ALPHA_EPS && low.map_or(true, |l: usize| grad[t] > grad[l]) {
                low = Some(t);
            }
        }
        let (i, j) = match (up, low) {
            (Some(i), Some(j)) => (i, j),
            _ => {
                gap = 0.0;
                break;
            }
        };
        gap = grad[j] - grad[i];
        if gap < params.tolerance {
            break;
        }
        if iterations >= params.max_iterations {
            return Err(Error::Solver {
                what: format!("SVDD on {m} points after {iterations} iterations"),
                residual: gap,
            });
        }
        iterations += 1;
        let eta = (k(i, i) + k(j, j) - 2.0 * k(i, j)).max(1e-12);
        let step = (gap / (2.0 * eta)).min(upper - alpha[i]).min(alpha[j]);
        alpha[i] += step;
        alpha[j] -= step;
        for (t, g) in grad.iter_mut().enumerate() {
            *g += 2.0 * step * (k(t, i) - k(t, j));
        }
    }
    log::trace!("svdd converged in {iterations} iterations, gap {gap:e}");

    let center_norm_sq: f64 = (0..m)
        .map(|i| alpha[i] * (0..m).map(|j| alpha[j] * k(i, j)).sum::<f64>())
        .sum();
    // dist²(x_i) = ‖c‖² − grad_i
    let dist_sq: Vec<f64> = grad.iter().map(|g| center_norm_sq - g).collect();
    let free: Vec<f64> = (0..m)
        .filter(|&t| alpha[t] > ALPHA_EPS && alpha[t] < upper - ALPHA_EPS)
        .map(|t| dist_sq[t])
        .collect();
    let radius_sq = if !free.is_empty() {
        free.iter().sum::<f64>() / free.len() as f64
    } else {
        // no boundary support vector: R² lies between the inner and outer groups
        let inner = (0..m)
            .filter(|&t| alpha[t] < upper - ALPHA_EPS)
            .map(|t| dist_sq[t])
            .fold(f64::NEG_INFINITY, f64::max);
        let outer = (0..m)
            .filter(|&t| alpha[t] > ALPHA_EPS)
            .map(|t| dist_sq[t])
            .fold(f64::INFINITY, f64::min);
        match (inner.is_finite(), outer.is_finite()) {
            (true, true) => 0.5 * (inner + outer),
            (true, false) => inner,
            (false, true) => outer,
            (false, false) => 0.0,
        }
    }
    .max(0.0);

    Ok(Hypersphere {
        points: points.to_vec(),
        alpha,
        kernel,
        radius_sq,
        center_norm_sq,
        upper,
        nu: params.nu,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_sphere() {
        for kernel in [Kernel::Linear, Kernel::Rbf { sigma: 0.5 }] {
            let s = fit_svdd(&[vec![2.0, -1.0]], kernel, SvddParams::with_nu(0.3)).unwrap();
            assert_eq!(s.alpha, vec![1.0]);
            assert!(s.radius_sq.abs() < 1e-12);
            assert!(s.dist_sq(&[2.0, -1.0]).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_circle_hard_margin() {
        let pts = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]];
        // ν m = 0.04 < 1: box bound 25, no slack taken
        let s = fit_svdd(&pts, Kernel::Linear, SvddParams::with_nu(0.01)).unwrap();
        let c = s.linear_center().unwrap();
        assert!(c[0].abs() < 1e-6 && c[1].abs() < 1e-6, "{c:?}");
        assert!((s.radius_sq - 1.0).abs() < 1e-6);
    }

    #[test]
    fn nu_one_gives_equal_weight_mean() {
        let pts = vec![vec![0.0, 0.0], vec![3.0, 1.0], vec![-1.0, 5.0], vec![2.0, 2.0], vec![9.0, -4.0]];
        let s = fit_svdd(&pts, Kernel::Linear, SvddParams::with_nu(1.0)).unwrap();
        assert!(s.alpha.iter().all(|&a| (a - 0.2).abs() < 1e-12));
        let c = s.linear_center().unwrap();
        assert!((c[0] - 2.6).abs() < 1e-12 && (c[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn outside_count_bounded_by_nu() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for trial in 0..30 {
            let m = rng.gen_range(2..30);
            let nu = rng.gen_range(0.05..1.0);
            let pts: Vec<Vec<f64>> = (0..m).map(|_| vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).collect();
            let kernel = if trial % 2 == 0 { Kernel::Linear } else { Kernel::rbf_median(&pts) };
            let s = fit_svdd(&pts, kernel, SvddParams::with_nu(nu)).unwrap();
            let outside = pts.iter().filter(|p| s.dist_sq(p) > s.radius_sq + 1e-6).count();
            assert!(outside <= (nu * m as f64).ceil() as usize);
            assert!((s.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(s.alpha.iter().all(|&a| a >= 0.0 && a <= s.upper + 1e-12));
            assert!((s.primal_objective() - s.dual_objective()).abs() < 1e-4);
        }
    }

    #[test]
    fn parameter_errors() {
        assert!(matches!(fit_svdd(&[], Kernel::Linear, SvddParams::with_nu(0.5)), Err(Error::Empty(_))));
        assert!(matches!(fit_svdd(&[vec![0.0]], Kernel::Linear, SvddParams::with_nu(0.0)), Err(Error::Param(_))));
        assert!(matches!(fit_svdd(&[vec![0.0]], Kernel::Linear, SvddParams::with_nu(1.5)), Err(Error::Param(_))));
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64 % 7.0]).collect();
        let params = SvddParams { nu: 0.2, tolerance: 1e-12, max_iterations: 1 };
        match fit_svdd(&pts, Kernel::Linear, params) {
            Err(Error::Solver { residual, .. }) => assert!(residual > 0.0),
            other => panic!("expected solver error, got {other:?}"),
        }
    }

    #[test]
    fn median_heuristic() {
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        // pairwise distances 1, 3, 2 -> median 2
        assert_eq!(Kernel::rbf_median(&pts), Kernel::Rbf { sigma: 2.0 });
        assert_eq!(Kernel::rbf_median(&[vec![1.0]]), Kernel::Rbf { sigma: 1.0 });
    }
}
