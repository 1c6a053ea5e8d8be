use ndarray::{Array1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Row count above which exact ∞→1 enumeration is refused.
pub const EXACT_INF_TO_ONE_LIMIT: usize = 20;

/// `Σ_ij |m_ij|`.
pub fn entrywise_l1(m: ArrayView2<'_, f64>) -> f64 {
    m.iter().map(|x| x.abs()).sum()
}

/// `‖M‖_{∞→1} = max_{u,v ∈ {±1}} uᵗ M v` by enumeration over `u` only: for a
/// fixed `u` the best `v` is `sign(Mᵗu)`, giving `Σ_j |(Mᵗu)_j|`. The sign of
/// `u_0` is fixed since `u` and `-u` give the same value, and consecutive
/// candidates differ in one coordinate (Gray code), so each step is O(cols).
pub fn inf_to_one_norm_exact(m: ArrayView2<'_, f64>) -> Result<f64> {
    let (rows, cols) = m.dim();
    if rows > EXACT_INF_TO_ONE_LIMIT {
        return Err(Error::Size {
            n: rows,
            limit: EXACT_INF_TO_ONE_LIMIT,
            hint: "use inf_to_one_norm_lower for larger matrices",
        });
    }
    if rows == 0 || cols == 0 {
        return Ok(0.0);
    }
    let mut u = vec![1.0_f64; rows];
    let mut s: Vec<f64> = (0..cols).map(|j| m.column(j).sum()).collect();
    let value = |s: &[f64]| s.iter().map(|x| x.abs()).sum::<f64>();
    let mut best = value(&s);
    let steps: u64 = 1 << (rows - 1);
    for g in 1..steps {
        let i = g.trailing_zeros() as usize + 1;
        let delta = -2.0 * u[i];
        u[i] = -u[i];
        for (sj, mij) in s.iter_mut().zip(m.row(i)) {
            *sj += delta * mij;
        }
        best = best.max(value(&s));
    }
    Ok(best)
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Lower bound on `‖M‖_{∞→1}` by alternating maximization from `restarts`
/// random sign vectors. Restart `r` draws its start from `seed + r`.
pub fn inf_to_one_norm_lower(m: ArrayView2<'_, f64>, restarts: usize, seed: u64) -> Result<f64> {
    if restarts == 0 {
        return Err(Error::Argument("at least one restart is required".into()));
    }
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return Ok(0.0);
    }
    let mut best = f64::NEG_INFINITY;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let mut u: Array1<f64> = (0..rows)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let mut current = f64::NEG_INFINITY;
        for _ in 0..1000 {
            let mtu = m.t().dot(&u);
            let val: f64 = mtu.iter().map(|x| x.abs()).sum();
            if val <= current {
                break;
            }
            current = val;
            let v = mtu.mapv(sign);
            u = m.dot(&v).mapv(sign);
        }
        best = best.max(current);
    }
    Ok(best)
}

/// `Σ_ij |m_ij|^p`.
pub fn lp_power_sum(m: ArrayView2<'_, f64>, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::Domain(format!("exponent p must be positive, got {p}")));
    }
    Ok(m.iter()
        .filter(|x| **x != 0.0)
        .map(|x| x.abs().powf(p))
        .sum())
}

/// `(Σ_ij |m_ij|^p)^{1/p}`; a quasi-norm for `p < 1`.
pub fn lp_quasinorm(m: ArrayView2<'_, f64>, p: f64) -> Result<f64> {
    Ok(lp_power_sum(m, p)?.powf(1.0 / p))
}
