//! Gaussian cluster model: specification, sampling, closed-form expected
//! Gaussian affinities, and the separation constants of the recovery bound.

use std::f64::consts::LN_2;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_sym, SymMatrix};

/// Upper bound on the Grothendieck constant used in every bound evaluator.
pub const GROTHENDIECK_KG: f64 = 1.8;

const COV_SYMMETRY_TOL: f64 = 1e-12;
const COV_NEG_EIG_TOL: f64 = -1e-10;

/// One mixture component: `size` samples from `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub dim: usize,
    pub clusters: Vec<ClusterSpec>,
}

/// Eigenpairs of a covariance with negative eigenvalues clamped to zero.
#[derive(Debug, Clone)]
struct CovEigen {
    values: Array1<f64>,
    vectors: Array2<f64>,
}

fn cov_eigen(cov: ArrayView2<'_, f64>) -> Result<CovEigen> {
    let e = eig_sym(&SymMatrix::new(cov.to_owned())?)?;
    if let Some(&min) = e.values.iter().min_by(|a, b| a.total_cmp(b)) {
        if min < COV_NEG_EIG_TOL {
            return Err(Error::Validation(format!(
                "covariance is not positive semidefinite (eigenvalue {min:e})"
            )));
        }
    }
    Ok(CovEigen {
        values: e.values.mapv(|v| v.max(0.0)),
        vectors: e.vectors,
    })
}

impl ClusterSpec {
    pub fn cov_matrix(&self) -> Array2<f64> {
        let d = self.mean.len();
        Array2::from_shape_fn((d, d), |(i, j)| self.cov[i][j])
    }

    /// Isotropic component `N(mean, variance·I)`.
    pub fn isotropic(mean: Vec<f64>, variance: f64, size: usize) -> Self {
        let d = mean.len();
        let cov = (0..d)
            .map(|i| (0..d).map(|j| if i == j { variance } else { 0.0 }).collect())
            .collect();
        ClusterSpec { mean, cov, size }
    }
}

impl GaussianMixtureSpec {
    /// Builds and validates a spec.
    pub fn new(dim: usize, clusters: Vec<ClusterSpec>) -> Result<Self> {
        let spec = GaussianMixtureSpec { dim, clusters };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Validation("dimension must be positive".into()));
        }
        if self.clusters.is_empty() {
            return Err(Error::Validation("at least one cluster is required".into()));
        }
        for (k, c) in self.clusters.iter().enumerate() {
            if c.size == 0 {
                return Err(Error::Validation(format!("cluster {} is empty", k + 1)));
            }
            if c.mean.len() != self.dim {
                return Err(Error::Validation(format!(
                    "cluster {} mean has length {}, expected {}",
                    k + 1,
                    c.mean.len(),
                    self.dim
                )));
            }
            if c.cov.len() != self.dim || c.cov.iter().any(|r| r.len() != self.dim) {
                return Err(Error::Validation(format!(
                    "cluster {} covariance is not {}x{}",
                    k + 1,
                    self.dim,
                    self.dim
                )));
            }
            if c.mean.iter().chain(c.cov.iter().flatten()).any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("cluster {} has non-finite values", k + 1)));
            }
            for i in 0..self.dim {
                for j in 0..i {
                    if (c.cov[i][j] - c.cov[j][i]).abs() > COV_SYMMETRY_TOL {
                        return Err(Error::Validation(format!(
                            "cluster {} covariance is not symmetric",
                            k + 1
                        )));
                    }
                }
            }
            cov_eigen(c.cov_matrix().view())
                .map_err(|e| Error::Validation(format!("cluster {}: {e}", k + 1)))?;
        }
        if self.n() < 2 {
            return Err(Error::Validation("at least two samples are required".into()));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn n(&self) -> usize {
        self.clusters.iter().map(|c| c.size).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.size).collect()
    }

    /// `λ₀ = Σ n_k²`, the edge mass of the true cluster graph.
    pub fn lambda0(&self) -> f64 {
        self.clusters.iter().map(|c| (c.size * c.size) as f64).sum()
    }

    /// 1-based labels in cluster order.
    pub fn labels(&self) -> Vec<usize> {
        self.clusters
            .iter()
            .enumerate()
            .flat_map(|(k, c)| std::iter::repeat_n(k + 1, c.size))
            .collect()
    }

    /// `σ² = (1/n) Σ n_k ρ(Σ_k)` with `ρ` the largest covariance eigenvalue.
    pub fn sigma_squared(&self) -> Result<f64> {
        let mut acc = 0.0;
        for c in &self.clusters {
            let e = cov_eigen(c.cov_matrix().view())?;
            acc += c.size as f64 * e.values.iter().copied().fold(0.0, f64::max);
        }
        Ok(acc / self.n() as f64)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: GaussianMixtureSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    fn cluster(&self, k: usize) -> Result<&ClusterSpec> {
        self.clusters.get(k).ok_or(Error::Range {
            index: k,
            len: self.clusters.len(),
        })
    }
}

/// Samples with their 1-based cluster labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataSet {
    /// n×d, one sample per row.
    pub points: Array2<f64>,
    pub labels: Vec<usize>,
}

impl LabeledDataSet {
    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

/// Draws `n_k` rows from `N(μ_k, Σ_k)` for each cluster in order. The
/// covariance square root comes from its eigendecomposition.
pub fn sample(spec: &GaussianMixtureSpec, seed: u64) -> Result<LabeledDataSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dim;
    let mut points = Array2::zeros((spec.n(), d));
    let mut row = 0;
    for c in &spec.clusters {
        let e = cov_eigen(c.cov_matrix().view())?;
        let factor = &e.vectors * &e.values.mapv(f64::sqrt);
        let mean = ArrayView1::from(&c.mean);
        for _ in 0..c.size {
            let z: Array1<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let x = &mean + &factor.dot(&z);
            points.row_mut(row).assign(&x);
            row += 1;
        }
    }
    Ok(LabeledDataSet {
        points,
        labels: spec.labels(),
    })
}

/// `E[exp(t‖X‖²)]` for `X ~ N(μ, Σ)`:
/// `Π_d exp(⟨μ,v_d⟩² t / (1 − 2tσ_d²)) (1 − 2tσ_d²)^{-1/2}` over the
/// eigenpairs `(σ_d², v_d)` of `Σ`. Only `t ≤ 0` is accepted.
pub fn gaussian_quadratic_laplace(mu: ArrayView1<'_, f64>, sigma: ArrayView2<'_, f64>, t: f64) -> Result<f64> {
    if t.is_nan() || t > 0.0 {
        return Err(Error::Domain(format!(
            "the transform is only evaluated for t <= 0, got {t}"
        )));
    }
    if sigma.dim() != (mu.len(), mu.len()) {
        return Err(Error::Shape {
            expected: format!("{0}x{0} covariance", mu.len()),
            got: format!("{}x{}", sigma.nrows(), sigma.ncols()),
        });
    }
    let e = cov_eigen(sigma)?;
    let mut log_value = 0.0;
    for (l, &s2) in e.values.iter().enumerate() {
        let proj = e.vectors.column(l).dot(&mu);
        let denom = 1.0 - 2.0 * t * s2;
        log_value += proj * proj * t / denom - 0.5 * denom.ln();
    }
    Ok(log_value.exp())
}

/// Expected Gaussian affinity `E f(‖x_i − x_j‖)` for `i` in cluster `k` and
/// `j` in cluster `k2` (0-based), `i ≠ j`.
pub fn expected_affinity(spec: &GaussianMixtureSpec, k: usize, k2: usize, h0: f64) -> Result<f64> {
    if !(h0 > 0.0) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {h0}")));
    }
    let a = spec.cluster(k)?;
    let b = spec.cluster(k2)?;
    let h2 = h0 * h0;
    if k == k2 {
        let e = cov_eigen(a.cov_matrix().view())?;
        let log_value: f64 = e.values.iter().map(|s2| -0.5 * (1.0 + 4.0 * s2 / h2).ln()).sum();
        return Ok(log_value.exp());
    }
    let sum = a.cov_matrix() + b.cov_matrix();
    if sum.iter().all(|&x| x == 0.0) {
        // Deterministic distance; evaluated exactly as the sample affinity is.
        let d2: f64 = a.mean.iter().zip(&b.mean).map(|(p, q)| (p - q) * (p - q)).sum();
        let s = d2.sqrt() / h0;
        return Ok((-s * s).exp());
    }
    let e = cov_eigen(sum.view())?;
    let delta = Array1::from_iter(a.mean.iter().zip(&b.mean).map(|(x, y)| x - y));
    let mut log_value = 0.0;
    for (l, &s2) in e.values.iter().enumerate() {
        let proj = e.vectors.column(l).dot(&delta);
        log_value += -proj * proj / (h2 + 2.0 * s2) - 0.5 * (1.0 + 2.0 * s2 / h2).ln();
    }
    Ok(log_value.exp())
}

/// Constants of the recovery bound for one spec and bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub p: f64,
    pub q: f64,
    pub sigma: f64,
    pub ell: f64,
    pub kg: f64,
    pub t0: f64,
    pub c: f64,
    pub separated: bool,
}

impl SeparationReport {
    /// `2√(2 ln 2)·ℓσ`, the concentration threshold for `‖A − Ā‖_{∞→1}/n²`.
    pub fn concentration_threshold(&self) -> f64 {
        2.0 * (2.0 * LN_2).sqrt() * self.ell * self.sigma
    }

    /// Right side of the concentration inequality
    /// `P(‖A − Ā‖_{∞→1} > t n²) ≤ 2 exp(−(t − t*)² n / (32 ℓ²σ²))`, clamped to 1.
    pub fn concentration_bound(&self, t: f64, n: usize) -> Result<f64> {
        let t_star = self.concentration_threshold();
        if !(t > t_star) {
            return Err(Error::Domain(format!(
                "concentration bound needs t > {t_star}, got {t}"
            )));
        }
        let scale = 32.0 * self.ell * self.ell * self.sigma * self.sigma;
        if scale == 0.0 {
            return Ok(0.0);
        }
        Ok((2.0 * (-(t - t_star).powi(2) / scale * n as f64).exp()).min(1.0))
    }
}

/// `p` = least within-cluster and `q` = largest cross-cluster expected
/// affinity; `t₀` and `c` are infinite when `p ≤ q`. With one cluster `q` is
/// reported as 0.
pub fn separation_report(spec: &GaussianMixtureSpec, h0: f64, ell: f64) -> Result<SeparationReport> {
    if !(ell > 0.0) {
        return Err(Error::Domain(format!("Lipschitz constant must be positive, got {ell}")));
    }
    spec.validate()?;
    let k = spec.k();
    let mut p = f64::INFINITY;
    let mut q = 0.0_f64;
    for a in 0..k {
        p = p.min(expected_affinity(spec, a, a, h0)?);
        for b in (a + 1)..k {
            q = q.max(expected_affinity(spec, a, b, h0)?);
        }
    }
    let sigma = spec.sigma_squared()?.sqrt();
    let kg = GROTHENDIECK_KG;
    let separated = p > q;
    let (t0, c) = if separated {
        let gap = p - q;
        (
            8.0 * (2.0 * LN_2).sqrt() * kg * sigma * ell / gap,
            16.0 * 2f64.sqrt() * kg * ell * sigma / gap,
        )
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok(SeparationReport {
        p,
        q,
        sigma,
        ell,
        kg,
        t0,
        c,
        separated,
    })
}

/// Two-cluster, one-dimensional identifiability test:
/// `(μ₂−μ₁)² > ½(h0² + 2(σ₁²+σ₂²))·max_k ln[(1+4σ_k²/h0²)/(1+2(σ₁²+σ₂²)/h0²)]`.
pub fn check_separation_1d(mu1: f64, mu2: f64, s1sq: f64, s2sq: f64, h0: f64) -> bool {
    let h2 = h0 * h0;
    let pooled = s1sq + s2sq;
    let denom = 1.0 + 2.0 * pooled / h2;
    let worst = [s1sq, s2sq]
        .iter()
        .map(|s| ((1.0 + 4.0 * s / h2) / denom).ln())
        .fold(f64::NEG_INFINITY, f64::max);
    (mu2 - mu1).powi(2) > 0.5 * (h2 + 2.0 * pooled) * worst
}
