//! Dense symmetric eigensolvers and the matrix norms used by the bound checks.

mod norms;
mod tridiag;

pub use norms::{
    entrywise_l1, inf_to_one_norm_exact, inf_to_one_norm_lower, lp_power_sum, lp_quasinorm,
    EXACT_INF_TO_ONE_LIMIT,
};

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use tridiag::Tridiagonal;

/// Largest tolerated asymmetry `|m_ij - m_ji|` at construction.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Relative tolerance used to decide that an eigenvalue ties with the maximum.
pub const DEFAULT_GAP_TOL: f64 = 1e-8;

/// A square matrix known to be symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Array2<f64>);

impl SymMatrix {
    /// Checks squareness and symmetry (up to [`SYMMETRY_TOL`]) and stores
    /// `(M + Mᵗ)/2`.
    pub fn new(m: Array2<f64>) -> Result<Self> {
        let (r, c) = m.dim();
        if r != c {
            return Err(Error::Shape {
                expected: "square matrix".into(),
                got: format!("{r}x{c}"),
            });
        }
        let mut worst = 0.0_f64;
        for i in 0..r {
            for j in 0..i {
                let d = (m[[i, j]] - m[[j, i]]).abs();
                if d.is_nan() {
                    return Err(Error::Validation(format!("non-finite entry at ({i},{j})")));
                }
                worst = worst.max(d);
            }
        }
        if worst > SYMMETRY_TOL {
            return Err(Error::Validation(format!(
                "matrix is not symmetric (max asymmetry {worst:e})"
            )));
        }
        let mut m = m;
        for i in 0..r {
            for j in 0..i {
                let avg = 0.5 * (m[[i, j]] + m[[j, i]]);
                m[[i, j]] = avg;
                m[[j, i]] = avg;
            }
        }
        Ok(SymMatrix(m))
    }

    /// Wraps a matrix the caller built symmetric by construction.
    pub(crate) fn from_symmetric(m: Array2<f64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        SymMatrix(m)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    fn row_major(&self) -> Vec<f64> {
        match self.0.as_slice() {
            Some(s) => s.to_vec(),
            None => self.0.iter().copied().collect(),
        }
    }
}

/// Eigenvalues sorted descending with matching unit eigenvectors in the
/// columns of `vectors`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

/// The top of a spectrum: the largest eigenvalue, an orthonormal basis of its
/// (numerical) eigenspace, and the full sorted spectrum it was read from.
#[derive(Debug, Clone)]
pub struct TopEigenspace {
    pub value: f64,
    /// n×r, r = multiplicity.
    pub basis: Array2<f64>,
    pub spectrum: Vec<f64>,
}

impl TopEigenspace {
    pub fn multiplicity(&self) -> usize {
        self.basis.ncols()
    }
}

/// Flips `v` so that its first entry that is not numerically zero is positive.
fn fix_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

/// Full symmetric eigendecomposition (Householder tridiagonalization then
/// implicit-shift QL).
pub fn eig_sym(m: &SymMatrix) -> Result<EigenDecomposition> {
    let n = m.n();
    if n == 0 {
        return Err(Error::Argument("eigendecomposition of an empty matrix".into()));
    }
    let t = Tridiagonal::reduce(&m.row_major(), n);
    let (vals, z) = t.eigen_full()?;
    let order = descending_order(&vals);
    let mut values = Array1::zeros(n);
    let mut vectors = Array2::zeros((n, n));
    let mut col = vec![0.0; n];
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = vals[src];
        for i in 0..n {
            col[i] = z[i * n + src];
        }
        fix_sign(&mut col);
        for i in 0..n {
            vectors[[i, dst]] = col[i];
        }
    }
    Ok(EigenDecomposition { values, vectors })
}

/// Sorted spectrum plus the eigenvectors of the `count` largest eigenvalues.
/// Much cheaper than [`eig_sym`] when `count` is small.
pub fn top_eigenpairs(m: &SymMatrix, count: usize) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = m.n();
    if n == 0 {
        return Err(Error::Argument("eigendecomposition of an empty matrix".into()));
    }
    let count = count.min(n);
    let t = Tridiagonal::reduce(&m.row_major(), n);
    let mut values = t.eigenvalues()?;
    values.sort_by(|a, b| b.total_cmp(a));
    let vecs = t.eigenvectors_for(&values[..count]);
    let mut basis = Array2::zeros((n, count));
    for (j, mut v) in vecs.into_iter().enumerate() {
        fix_sign(&mut v);
        for i in 0..n {
            basis[[i, j]] = v[i];
        }
    }
    Ok((values, basis))
}

/// Largest eigenvalue and an orthonormal basis of every eigenvector whose
/// eigenvalue lies within `gap_tol` of it. `None` selects the default
/// `1e-8·(1 + |λ_max|)`.
pub fn lambda_max_eigenspace(m: &SymMatrix, gap_tol: Option<f64>) -> Result<TopEigenspace> {
    eigenspace_within(m, |top| gap_tol.unwrap_or(DEFAULT_GAP_TOL * (1.0 + top.abs())))
}

/// [`lambda_max_eigenspace`] with tolerance `rel_tol·(1 + |λ_max|)`.
pub fn lambda_max_eigenspace_relative(m: &SymMatrix, rel_tol: f64) -> Result<TopEigenspace> {
    eigenspace_within(m, |top| rel_tol * (1.0 + top.abs()))
}

fn eigenspace_within(m: &SymMatrix, tol_for: impl Fn(f64) -> f64) -> Result<TopEigenspace> {
    let n = m.n();
    if n == 0 {
        return Err(Error::Argument("eigendecomposition of an empty matrix".into()));
    }
    let t = Tridiagonal::reduce(&m.row_major(), n);
    let mut values = t.eigenvalues()?;
    values.sort_by(|a, b| b.total_cmp(a));
    let top = values[0];
    let tol = tol_for(top);
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("gap tolerance must be positive, got {tol}")));
    }
    let r = values.iter().take_while(|&&v| top - v <= tol).count();
    let vecs = t.eigenvectors_for(&values[..r]);
    let mut basis = Array2::zeros((n, r));
    for (j, mut v) in vecs.into_iter().enumerate() {
        fix_sign(&mut v);
        for i in 0..n {
            basis[[i, j]] = v[i];
        }
    }
    Ok(TopEigenspace {
        value: top,
        basis,
        spectrum: values,
    })
}
