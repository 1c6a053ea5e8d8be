//! Householder reduction to symmetric tridiagonal form, implicit-shift QL
//! iteration, and inverse iteration for selected eigenvectors.
//!
//! The full decomposition forms the orthogonal factor explicitly and lets the
//! QL sweeps rotate it. The partial path used by the dual solver keeps only
//! the reflectors, gets every eigenvalue from QL without vectors (O(n²)), and
//! recovers the few wanted eigenvectors by inverse iteration on the
//! tridiagonal matrix followed by back-transformation.

use crate::error::{Error, Result};

const MAX_QL_SWEEPS: usize = 60;

struct Reflector {
    v: Vec<f64>,
    tau: f64,
}

/// `A = Q T Qᵗ` with `T` symmetric tridiagonal and `Q` a product of
/// Householder reflectors.
pub(crate) struct Tridiagonal {
    n: usize,
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
    reflectors: Vec<Reflector>,
}

impl Tridiagonal {
    /// Reduces a dense symmetric matrix stored row-major in `a` (n×n).
    pub fn reduce(a: &[f64], n: usize) -> Self {
        debug_assert_eq!(a.len(), n * n);
        let mut m = a.to_vec();
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n.saturating_sub(1)];
        let mut reflectors = Vec::with_capacity(n.saturating_sub(2));
        let mut p = vec![0.0; n];

        for k in 0..n.saturating_sub(2) {
            let start = k + 1;
            let len = n - start;
            diag[k] = m[k * n + k];
            let mut v: Vec<f64> = (start..n).map(|i| m[i * n + k]).collect();
            let tail = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
            if tail == 0.0 {
                off[k] = v[0];
                reflectors.push(Reflector { v: Vec::new(), tau: 0.0 });
                continue;
            }
            let norm = v[0].hypot(tail);
            let alpha = if v[0] >= 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vtv: f64 = v.iter().map(|x| x * x).sum();
            let tau = 2.0 / vtv;

            // p = tau * B v, w = p - (tau/2)(vᵗp) v, B <- B - v wᵗ - w vᵗ.
            // Only the lower triangle of the trailing block is kept current:
            // row i holds B[i][..=i], and B[j][i] for j > i is read from row j.
            let p = &mut p[..len];
            p.iter_mut().for_each(|x| *x = 0.0);
            for i in 0..len {
                let row = &m[(start + i) * n + start..(start + i) * n + start + i + 1];
                let (head, diag_entry) = row.split_at(i);
                let mut acc = dot(head, &v[..i]) + diag_entry[0] * v[i];
                let vi = v[i];
                for (pj, bj) in p[..i].iter_mut().zip(head) {
                    *pj += bj * vi;
                }
                acc += p[i];
                p[i] = acc;
            }
            p.iter_mut().for_each(|x| *x *= tau);
            let kappa = 0.5 * tau * dot(&v, p);
            for (pi, vi) in p.iter_mut().zip(&v) {
                *pi -= kappa * vi;
            }
            for i in 0..len {
                let (vi, wi) = (v[i], p[i]);
                let row = &mut m[(start + i) * n + start..(start + i) * n + start + i + 1];
                for ((b, pj), vj) in row.iter_mut().zip(&p[..=i]).zip(&v[..=i]) {
                    *b -= vi * pj + wi * vj;
                }
            }
            off[k] = alpha;
            reflectors.push(Reflector { v, tau });
        }
        if n >= 2 {
            diag[n - 2] = m[(n - 2) * n + n - 2];
            off[n - 2] = m[(n - 1) * n + n - 2];
        }
        if n >= 1 {
            diag[n - 1] = m[(n - 1) * n + n - 1];
        }
        Tridiagonal {
            n,
            diag,
            off,
            reflectors,
        }
    }

    /// Overwrites `x` (length n) with `Q x`.
    pub fn apply_q(&self, x: &mut [f64]) {
        for (k, r) in self.reflectors.iter().enumerate().rev() {
            if r.tau == 0.0 {
                continue;
            }
            let tail = &mut x[k + 1..];
            let s = r.tau * r.v.iter().zip(tail.iter()).map(|(a, b)| a * b).sum::<f64>();
            for (t, vi) in tail.iter_mut().zip(&r.v) {
                *t -= s * vi;
            }
        }
    }

    /// Explicit `Q`, row-major.
    pub fn form_q(&self) -> Vec<f64> {
        let n = self.n;
        let mut q = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            self.apply_q(&mut col);
            for i in 0..n {
                q[i * n + j] = col[i];
            }
        }
        q
    }

    /// All eigenvalues, unsorted.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mut d = self.diag.clone();
        let mut e = self.off.clone();
        e.push(0.0);
        ql_implicit(&mut d, &mut e, self.norm_inf(), None)?;
        Ok(d)
    }

    /// All eigenpairs: eigenvalues (unsorted) and row-major eigenvector
    /// matrix whose column j belongs to value j.
    pub fn eigen_full(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut d = self.diag.clone();
        let mut e = self.off.clone();
        e.push(0.0);
        let mut z = self.form_q();
        ql_implicit(&mut d, &mut e, self.norm_inf(), Some(&mut z))?;
        Ok((d, z))
    }

    fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.off[i - 1].abs();
                }
                if i + 1 < self.n {
                    s += self.off[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    /// Eigenvectors of the original matrix for the given eigenvalues, which
    /// must be sorted descending. Vectors belonging to a cluster of close
    /// eigenvalues are orthogonalized against each other.
    pub fn eigenvectors_for(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let n = self.n;
        // A zero matrix has every vector as an eigenvector; unit scale keeps
        // the pivot floor from underflowing.
        let tnorm = match self.norm_inf() {
            t if t > 0.0 => t,
            _ => 1.0,
        };
        let ortol = 1e-3 * tnorm;
        let pertol = 10.0 * f64::EPSILON * tnorm;
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(values.len());
        let mut cluster_start = 0;
        let mut prev_shift = f64::INFINITY;
        let mut seed = 0x9e37_79b9_7f4a_7c15_u64;

        for (j, &lam) in values.iter().enumerate() {
            if j == 0 || (values[j - 1] - lam).abs() > ortol {
                cluster_start = j;
            }
            let mut shift = lam;
            if j > cluster_start && prev_shift - shift < pertol {
                shift = prev_shift - pertol;
            }
            prev_shift = shift;

            let lu = TridiagLu::factor(&self.diag, &self.off, shift, f64::EPSILON * tnorm);
            let mut x: Vec<f64> = (0..n)
                .map(|_| {
                    seed = seed
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    ((seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
                })
                .collect();
            normalize(&mut x);
            for _ in 0..3 {
                lu.solve(&mut x);
                for prev in &out[cluster_start..j] {
                    let d: f64 = prev.iter().zip(&x).map(|(a, b)| a * b).sum();
                    for (xi, pi) in x.iter_mut().zip(prev) {
                        *xi -= d * pi;
                    }
                }
                normalize(&mut x);
            }
            out.push(x);
        }

        for v in out.iter_mut() {
            self.apply_q(v);
            normalize(v);
        }
        out
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn normalize(x: &mut [f64]) {
    let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nrm > 0.0 {
        x.iter_mut().for_each(|v| *v /= nrm);
    }
}

/// Implicit QL with Wilkinson-type shifts on a symmetric tridiagonal matrix.
/// `e[i]` couples `i` and `i+1`, `e[n-1]` is ignored. When `z` is given its
/// columns are rotated along. Off-diagonals below `ε·(|d_m| + |d_{m+1}|)`
/// or below `ε·tnorm` are treated as zero.
fn ql_implicit(d: &mut [f64], e: &mut [f64], tnorm: f64, mut z: Option<&mut Vec<f64>>) -> Result<()> {
    let n = d.len();
    let floor = f64::EPSILON * tnorm;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd || e[m].abs() <= floor {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_SWEEPS {
                return Err(Error::NoConvergence {
                    what: "implicit QL iteration",
                    residual: e[l].abs(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_deref_mut() {
                    for k in 0..n {
                        let zi = z[k * n + i];
                        let zi1 = z[k * n + i + 1];
                        z[k * n + i + 1] = s * zi + c * zi1;
                        z[k * n + i] = c * zi - s * zi1;
                    }
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// LU factorization with partial pivoting of `T - shift·I`.
struct TridiagLu {
    dl: Vec<f64>,
    dd: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn factor(diag: &[f64], off: &[f64], shift: f64, tiny: f64) -> Self {
        let n = diag.len();
        let mut dd: Vec<f64> = diag.iter().map(|d| d - shift).collect();
        let mut dl = off.to_vec();
        let mut du = off.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if dd[i].abs() >= dl[i].abs() {
                if dd[i] != 0.0 {
                    let fact = dl[i] / dd[i];
                    dl[i] = fact;
                    dd[i + 1] -= fact * du[i];
                } else {
                    dl[i] = 0.0;
                }
            } else {
                let fact = dd[i] / dl[i];
                dd[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = dd[i + 1];
                dd[i + 1] = temp - fact * dd[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        for p in dd.iter_mut() {
            if p.abs() < tiny {
                *p = if *p < 0.0 { -tiny } else { tiny };
            }
        }
        TridiagLu {
            dl,
            dd,
            du,
            du2,
            swapped,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        if n == 0 {
            return;
        }
        b[n - 1] /= self.dd[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.dd[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.dd[i];
        }
    }
}
