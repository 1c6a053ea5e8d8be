//! Affinity functions `f: [0,∞) → [0,1]`, their Lipschitz constants, the
//! bandwidth heuristic, and affinity-matrix construction.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm_model::{expected_affinity, GaussianMixtureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AffinityKind {
    /// `exp(-(h/h0)²)`
    Gaussian,
    /// `exp(-(h/h0)^a)`
    PowerExponential { a: f64 },
    /// `(1 + h/h0)^{-a}`
    Rational { a: f64 },
    /// `(1 + exp(h/h0))^{-a}`
    Logistic { a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinityFn {
    pub kind: AffinityKind,
    pub h0: f64,
}

impl AffinityFn {
    pub fn new(kind: AffinityKind, h0: f64) -> Result<Self> {
        if !(h0 > 0.0) || !h0.is_finite() {
            return Err(Error::Domain(format!("bandwidth must be positive and finite, got {h0}")));
        }
        match kind {
            AffinityKind::Gaussian => {}
            AffinityKind::PowerExponential { a } | AffinityKind::Rational { a } | AffinityKind::Logistic { a } => {
                if !(a > 0.0) || !a.is_finite() {
                    return Err(Error::Domain(format!("shape parameter must be positive, got {a}")));
                }
            }
        }
        Ok(AffinityFn { kind, h0 })
    }

    pub fn gaussian(h0: f64) -> Result<Self> {
        Self::new(AffinityKind::Gaussian, h0)
    }

    #[inline]
    fn eval_unchecked(&self, h: f64) -> f64 {
        let s = h / self.h0;
        match self.kind {
            AffinityKind::Gaussian => (-s * s).exp(),
            AffinityKind::PowerExponential { a } => (-s.powf(a)).exp(),
            AffinityKind::Rational { a } => (1.0 + s).powf(-a),
            AffinityKind::Logistic { a } => {
                // (1 + e^s)^{-a} = exp(-a·softplus(s)), stable for large s
                let softplus = if s > 30.0 { s + (-s).exp().ln_1p() } else { s.exp().ln_1p() };
                (-a * softplus).exp()
            }
        }
    }

    pub fn evaluate(&self, h: f64) -> Result<f64> {
        if !(h >= 0.0) {
            return Err(Error::Domain(format!("distance must be nonnegative, got {h}")));
        }
        Ok(self.eval_unchecked(h))
    }

    /// Global Lipschitz constant ℓ on `[0,∞)`. Exact for the Gaussian and
    /// power-exponential kinds; `a/h0` upper bound for rational and logistic.
    pub fn lipschitz_constant(&self) -> Result<f64> {
        let h0 = self.h0;
        match self.kind {
            AffinityKind::Gaussian => Ok((2.0 / std::f64::consts::E).sqrt() / h0),
            AffinityKind::PowerExponential { a } => {
                if a < 1.0 {
                    return Err(Error::Domain(format!(
                        "power-exponential affinity with a = {a} < 1 has unbounded slope at 0"
                    )));
                }
                if a == 1.0 {
                    return Ok(1.0 / h0);
                }
                // sup_s a s^{a-1} e^{-s^a} is attained at s^a = (a-1)/a
                let sa = (a - 1.0) / a;
                let s = sa.powf(1.0 / a);
                Ok(a * s.powf(a - 1.0) * (-sa).exp() / h0)
            }
            AffinityKind::Rational { a } | AffinityKind::Logistic { a } => Ok(a / h0),
        }
    }
}

/// `0.5·√(max_j Σ_i x_ij²)`: half the largest column norm of the n×d data.
pub fn default_h0(points: ArrayView2<'_, f64>) -> Result<f64> {
    let best = points
        .axis_iter(Axis(1))
        .map(|col| col.iter().map(|x| x * x).sum::<f64>())
        .fold(0.0, f64::max);
    if !(best > 0.0) || !best.is_finite() {
        return Err(Error::Domain("data are all zero; the bandwidth heuristic gives 0".into()));
    }
    Ok(0.5 * best.sqrt())
}

/// Expected value of [`default_h0`]'s column statistic under a spec:
/// `0.5·√(max_j Σ_k n_k (μ_kj² + Σ_k,jj))`. Gives a data-independent
/// bandwidth for experiments that compare `A` against `Ā`.
pub fn expected_default_h0(spec: &GaussianMixtureSpec) -> Result<f64> {
    let best = (0..spec.dim)
        .map(|j| {
            spec.clusters
                .iter()
                .map(|c| c.size as f64 * (c.mean[j] * c.mean[j] + c.cov[j][j]))
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    if !(best > 0.0) {
        return Err(Error::Domain("spec has zero second moments; bandwidth would be 0".into()));
    }
    Ok(0.5 * best.sqrt())
}

/// Symmetric matrix of pairwise affinities.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    entries: Array2<f64>,
}

impl AffinityMatrix {
    /// Validates squareness, exact symmetry and the `[0,1]` range.
    pub fn from_entries(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::Shape {
                expected: "square matrix".into(),
                got: format!("{r}x{c}"),
            });
        }
        for i in 0..r {
            for j in 0..=i {
                let v = entries[[i, j]];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Validation(format!("affinity ({i},{j}) = {v} outside [0,1]")));
                }
                if v != entries[[j, i]] {
                    return Err(Error::Validation(format!("affinity matrix not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(AffinityMatrix { entries })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }
}

/// `A_ij = f(‖x_i − x_j‖₂)`, evaluated for `i ≤ j` and mirrored.
pub fn build_matrix(points: ArrayView2<'_, f64>, f: &AffinityFn) -> AffinityMatrix {
    let n = points.nrows();
    let mut a = Array2::zeros((n, n));
    let diag = f.eval_unchecked(0.0);
    for i in 0..n {
        a[[i, i]] = diag;
        let xi = points.row(i);
        for j in (i + 1)..n {
            let d2: f64 = xi.iter().zip(points.row(j)).map(|(p, q)| (p - q) * (p - q)).sum();
            let v = f.eval_unchecked(d2.sqrt());
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    AffinityMatrix { entries: a }
}

/// `Ā_ij = E f(‖x_i − x_j‖₂)` from the closed forms (Gaussian affinity only),
/// with unit diagonal.
pub fn expected_matrix(spec: &GaussianMixtureSpec, h0: f64) -> Result<AffinityMatrix> {
    spec.validate()?;
    let k = spec.k();
    let mut table = Array2::zeros((k, k));
    for a in 0..k {
        for b in a..k {
            let v = expected_affinity(spec, a, b, h0)?;
            table[[a, b]] = v;
            table[[b, a]] = v;
        }
    }
    let labels = spec.labels();
    let n = labels.len();
    let m = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            1.0
        } else {
            table[[labels[i] - 1, labels[j] - 1]]
        }
    });
    Ok(AffinityMatrix { entries: m })
}
