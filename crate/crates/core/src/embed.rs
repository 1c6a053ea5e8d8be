//! Spectral embedding of an estimated cluster matrix.

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{eig_sym, SymMatrix};

const GAP_EPS: f64 = 1e-12;

/// Rows of the leading eigenvectors of `Ẑ`, one per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// n×k_hat; column j is the eigenvector of the j-th largest eigenvalue.
    pub coords: Array2<f64>,
    pub k_hat: usize,
}

/// Default cap on the number of clusters, `⌈n/2⌉`.
pub fn default_max_k(n: usize) -> usize {
    n.div_ceil(2).max(1)
}

/// Number of clusters from the largest relative eigengap
/// `(v_j − v_{j+1}) / (|v_j| + ε)` over `1 ≤ j < min(max_k, n)`; ties go to
/// the smaller `j`. Returns 1 for fewer than two values.
pub fn estimate_k(values: &[f64], max_k: usize) -> Result<usize> {
    if max_k == 0 {
        return Err(Error::Argument("max_k must be positive".into()));
    }
    let n = values.len();
    if n < 2 {
        return Ok(1);
    }
    if values.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Argument("eigenvalues must be sorted in descending order".into()));
    }
    let upper = max_k.min(n);
    let mut best = (1, f64::NEG_INFINITY);
    // j is 1-based: the gap between values[j-1] and values[j].
    for j in 1..upper {
        let gap = (values[j - 1] - values[j]) / (values[j - 1].abs() + GAP_EPS);
        if gap > best.1 {
            best = (j, gap);
        }
    }
    // With max_k = 1 (or all gaps skipped) one cluster is the only choice.
    Ok(best.0)
}

/// Leading `k_hat` eigenvectors of the symmetric matrix `z_hat` as columns,
/// ordered by descending eigenvalue, each with its first non-negligible entry
/// positive.
pub fn embed_rows(z_hat: ArrayView2<'_, f64>, k_hat: usize) -> Result<Embedding> {
    let (_, coords) = spectrum_and_vectors(z_hat, k_hat)?;
    Ok(Embedding { coords, k_hat })
}

/// Estimates `K̂` from the spectrum of `z_hat` (cap `max_k`) and embeds.
pub fn embed_auto(z_hat: ArrayView2<'_, f64>, max_k: usize) -> Result<Embedding> {
    let n = z_hat.nrows();
    let (values, vectors) = spectrum_and_vectors(z_hat, n)?;
    let k_hat = estimate_k(&values, max_k.min(n))?;
    Ok(Embedding {
        coords: vectors.slice(s![.., ..k_hat]).to_owned(),
        k_hat,
    })
}

fn spectrum_and_vectors(z_hat: ArrayView2<'_, f64>, k_hat: usize) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = z_hat.nrows();
    if k_hat == 0 || k_hat > n {
        return Err(Error::Range {
            index: k_hat,
            len: n,
        });
    }
    let sym = SymMatrix::new(z_hat.to_owned())?;
    let e = eig_sym(&sym)?;
    Ok((e.values.to_vec(), e.vectors.slice(s![.., ..k_hat]).to_owned()))
}
