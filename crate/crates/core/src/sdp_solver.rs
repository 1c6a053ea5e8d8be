//! The relaxation
//!
//! ```text
//! maximize ⟨A, Z⟩  s.t.  Z ⪰ 0, diag(Z) = 1, ⟨Z, 1 1ᵗ⟩ = λ
//! ```
//!
//! solved through its Lagrangian dual, a maximum-eigenvalue function
//!
//! ```text
//! θ(z) = n·λ_max(A + diag(z_1..z_n) + z_{n+1}·11ᵗ) − Σ z_i − λ·z_{n+1}
//! ```
//!
//! (the redundant constraint `trace Z = n` is what turns the inner
//! maximization into `n·λ_max`). θ is convex and nonsmooth wherever λ_max is
//! multiple; it is minimized with limited-memory BFGS and a weak Wolfe line
//! search, and a primal `Ẑ` is rebuilt from the top eigenspace at the optimum.

use std::collections::VecDeque;

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};
use crate::linalg::{eig_sym, lambda_max_eigenspace_relative, top_eigenpairs, SymMatrix};

/// Largest eigenspace dimension used when rebuilding the primal matrix.
pub const MAX_RECOVERY_RANK: usize = 30;

const WOLFE_C1: f64 = 1e-4;
const WOLFE_C2: f64 = 0.5;
const MAX_LINE_SEARCH: usize = 40;
/// Relative radius within which past subgradients count towards the
/// stationarity certificate.
const EVAL_DIST: f64 = 1e-4;
/// A run that has not lowered the best value for this many iterations ends.
const STALL_ITERS: usize = 50;
/// Base length of the fallback subgradient step `c/√k`.
const SUBGRADIENT_STEP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub bfgs_memory: usize,
    pub restarts: usize,
    pub eigenspace_tol: f64,
    pub recovery_refine_iters: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            grad_tol: 1e-5,
            max_iter: 500,
            bfgs_memory: 20,
            restarts: 3,
            eigenspace_tol: 1e-8,
            recovery_refine_iters: 200,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::Validation(format!("grad_tol must be positive, got {}", self.grad_tol)));
        }
        if !(self.eigenspace_tol > 0.0) {
            return Err(Error::Validation(format!(
                "eigenspace_tol must be positive, got {}",
                self.eigenspace_tol
            )));
        }
        if self.max_iter == 0 || self.bfgs_memory == 0 {
            return Err(Error::Validation("max_iter and bfgs_memory must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    affinity: AffinityMatrix,
    lambda: f64,
    options: SolverOptions,
}

impl SdpProblem {
    /// Requires `n ≤ λ ≤ n²`: the diagonal alone contributes `n`, and entries
    /// are at most 1 for the relaxation to stay meaningful.
    pub fn new(affinity: AffinityMatrix, lambda: f64, options: SolverOptions) -> Result<Self> {
        options.validate()?;
        let n = affinity.n();
        if n == 0 {
            return Err(Error::Argument("empty affinity matrix".into()));
        }
        let (lo, hi) = (n as f64, (n * n) as f64);
        let slack = 1e-12 * hi;
        if !(lambda >= lo - slack && lambda <= hi + slack) {
            return Err(Error::Domain(format!("lambda = {lambda} outside [{lo}, {hi}]")));
        }
        Ok(SdpProblem {
            affinity,
            lambda,
            options,
        })
    }

    pub fn n(&self) -> usize {
        self.affinity.n()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn affinity(&self) -> &AffinityMatrix {
        &self.affinity
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    /// `A + diag(z_1..z_n) + z_{n+1}·11ᵗ`
    fn shifted(&self, z: &[f64]) -> SymMatrix {
        let n = self.n();
        let t = z[n];
        let mut m = self.affinity.entries() + t;
        for i in 0..n {
            m[[i, i]] += z[i];
        }
        SymMatrix::from_symmetric(m)
    }

    fn check_point(&self, zp: &DualPoint) -> Result<()> {
        if zp.z.len() != self.n() + 1 {
            return Err(Error::Shape {
                expected: format!("dual point of length {}", self.n() + 1),
                got: zp.z.len().to_string(),
            });
        }
        Ok(())
    }
}

/// Multipliers `z_1..z_n` for the diagonal constraints and `z_{n+1}` for the
/// total-mass constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPoint {
    pub z: Vec<f64>,
}

impl DualPoint {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("dual point has non-finite entries".into()));
        }
        Ok(DualPoint { z })
    }

    pub fn zeros(n: usize) -> Self {
        DualPoint { z: vec![0.0; n + 1] }
    }
}

struct Evaluation {
    value: f64,
    grad: Vec<f64>,
}

fn linear_term(problem: &SdpProblem, z: &[f64]) -> f64 {
    let n = problem.n();
    z[..n].iter().sum::<f64>() + problem.lambda * z[n]
}

/// One eigensolve gives both θ(z) and the subgradient built from
/// `P = V Vᵗ / r`, the analytic centre of the top-eigenspace face.
fn evaluate(problem: &SdpProblem, z: &[f64]) -> Result<Evaluation> {
    let n = problem.n();
    let m = problem.shifted(z);
    let top = lambda_max_eigenspace_relative(&m, problem.options.eigenspace_tol)?;
    let value = n as f64 * top.value - linear_term(problem, z);
    let v = &top.basis;
    let r = v.ncols() as f64;
    let mut grad = Vec::with_capacity(n + 1);
    for row in v.axis_iter(Axis(0)) {
        let p_ii = row.iter().map(|x| x * x).sum::<f64>() / r;
        grad.push(n as f64 * p_ii - 1.0);
    }
    let u = v.sum_axis(Axis(0));
    let total = u.iter().map(|x| x * x).sum::<f64>() / r;
    grad.push(n as f64 * total - problem.lambda);
    Ok(Evaluation { value, grad })
}

/// θ(z).
pub fn dual_value(problem: &SdpProblem, zp: &DualPoint) -> Result<f64> {
    problem.check_point(zp)?;
    let m = problem.shifted(&zp.z);
    let (spectrum, _) = top_eigenpairs(&m, 0)?;
    Ok(problem.n() as f64 * spectrum[0] - linear_term(problem, &zp.z))
}

/// One element of ∂θ(z): `(n·P_ii − 1)_i` followed by `n·Σ P_ij − λ`.
pub fn dual_subgradient(problem: &SdpProblem, zp: &DualPoint) -> Result<Vec<f64>> {
    problem.check_point(zp)?;
    Ok(evaluate(problem, &zp.z)?.grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Solves the bordered system `[G 1; 1ᵗ 0][α; μ] = [0; 1]` (affine min-norm
/// point of the columns indexed by the Gram matrix `g`).
fn affine_min_norm(g: &[Vec<f64>]) -> Option<Vec<f64>> {
    let m = g.len();
    let size = m + 1;
    let mut a = vec![vec![0.0; size + 1]; size];
    for i in 0..m {
        a[i][..m].copy_from_slice(&g[i]);
        a[i][m] = 1.0;
        a[m][i] = 1.0;
    }
    a[m][size] = 1.0;
    let scale = g.iter().map(|r| r.iter().fold(0.0_f64, |s, x| s.max(x.abs()))).fold(1.0, f64::max);
    for col in 0..size {
        let piv = (col..size).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, piv);
        for row in (col + 1)..size {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..=size {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut x = vec![0.0; size];
    for row in (0..size).rev() {
        let s: f64 = ((row + 1)..size).map(|k| a[row][k] * x[k]).sum();
        x[row] = (a[row][size] - s) / a[row][row];
    }
    x.truncate(m);
    Some(x)
}

/// Smallest-norm point of the convex hull of `points` (Wolfe's algorithm).
/// Returns the point and its convex weights.
pub(crate) fn min_norm_hull(points: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let m = points.len();
    assert!(m > 0);
    let dim = points[0].len();
    let gram: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| dot(points[i], points[j])).collect()).collect();
    let max_sq = (0..m).map(|i| gram[i][i]).fold(0.0, f64::max);
    let combine = |set: &[usize], w: &[f64]| {
        let mut x = vec![0.0; dim];
        for (&i, &wi) in set.iter().zip(w) {
            for (xk, pk) in x.iter_mut().zip(points[i]) {
                *xk += wi * pk;
            }
        }
        x
    };
    let start = (0..m).min_by(|&a, &b| gram[a][a].total_cmp(&gram[b][b])).unwrap();
    let mut set = vec![start];
    let mut w = vec![1.0];
    let mut x = points[start].to_vec();
    for _major in 0..(10 * m + 10) {
        let xx = dot(&x, &x);
        let (j, xj) = (0..m)
            .map(|j| (j, dot(&x, points[j])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if xx - xj <= 1e-12 * max_sq || set.contains(&j) {
            break;
        }
        set.push(j);
        w.push(0.0);
        loop {
            let sub: Vec<Vec<f64>> = set.iter().map(|&a| set.iter().map(|&b| gram[a][b]).collect()).collect();
            let Some(alpha) = affine_min_norm(&sub) else {
                // affinely dependent set: drop the newest point and stop
                set.pop();
                w.pop();
                return (combine(&set, &w), expand(m, &set, &w));
            };
            if alpha.iter().all(|&a| a > 1e-14) {
                w = alpha;
                break;
            }
            let mut step = 1.0_f64;
            for (&wi, &ai) in w.iter().zip(&alpha) {
                if ai <= 1e-14 && wi - ai > 0.0 {
                    step = step.min(wi / (wi - ai));
                }
            }
            for (wi, ai) in w.iter_mut().zip(&alpha) {
                *wi += step * (ai - *wi);
            }
            let keep: Vec<usize> = (0..set.len()).filter(|&k| w[k] > 1e-14).collect();
            set = keep.iter().map(|&k| set[k]).collect();
            w = keep.iter().map(|&k| w[k]).collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= total);
        }
        x = combine(&set, &w);
    }
    let weights = expand(m, &set, &w);
    (x, weights)
}

fn expand(m: usize, set: &[usize], w: &[f64]) -> Vec<f64> {
    let mut full = vec![0.0; m];
    for (&i, &wi) in set.iter().zip(w) {
        full[i] = wi;
    }
    full
}

/// Result of minimizing θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualOutcome {
    pub point: DualPoint,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Norm of the smallest convex combination of recent nearby subgradients.
    pub stationarity: f64,
    pub converged: bool,
}

struct Tracker<'a> {
    problem: &'a SdpProblem,
    best_x: Vec<f64>,
    best_f: f64,
    evaluations: usize,
}

/// The optimizer works in `y` with `z_{n+1} = y_{n+1}/n`, so that every
/// coordinate moves `A + diag(z) + z_{n+1}11ᵗ` by a unit-norm matrix
/// (`‖11ᵗ‖ = n`). Gradients and faces are expressed in `y`.
fn to_z(y: &[f64]) -> Vec<f64> {
    let n = y.len() - 1;
    let mut z = y.to_vec();
    z[n] /= n as f64;
    z
}

impl Tracker<'_> {
    fn eval(&mut self, x: &[f64]) -> Result<Evaluation> {
        let n = self.problem.n();
        let mut e = evaluate(self.problem, &to_z(x))?;
        e.grad[n] /= n as f64;
        self.evaluations += 1;
        if e.value < self.best_f {
            self.best_f = e.value;
            self.best_x = x.to_vec();
        }
        Ok(e)
    }
}

/// Weak Wolfe search along `d` by bracketing (double until the curvature
/// condition holds, bisect once sufficient decrease fails).
fn weak_wolfe(
    tr: &mut Tracker<'_>,
    x: &[f64],
    f: f64,
    gd: f64,
    d: &[f64],
) -> Result<Option<(f64, Evaluation)>> {
    let (mut lo, mut hi, mut t) = (0.0_f64, f64::INFINITY, 1.0_f64);
    let mut trial = vec![0.0; x.len()];
    for _ in 0..MAX_LINE_SEARCH {
        for ((ti, xi), di) in trial.iter_mut().zip(x).zip(d) {
            *ti = xi + t * di;
        }
        let e = tr.eval(&trial)?;
        if e.value > f + WOLFE_C1 * t * gd {
            hi = t;
        } else if dot(&e.grad, d) < WOLFE_C2 * gd {
            lo = t;
        } else {
            return Ok(Some((t, e)));
        }
        t = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
    }
    Ok(None)
}

fn two_loop(g: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

enum FaceStep {
    /// The face at the eigenspace tolerance holds a subgradient of norm
    /// at most `grad_tol`.
    Stationary(f64),
    Moved(Vec<f64>, Evaluation, f64),
    Failed,
}

/// Relative eigenvalue windows tried when building the descent face.
const FACE_WINDOWS: [f64; 5] = [0.0, 1e-6, 1e-4, 1e-3, 1e-2];

/// Steepest descent over ε-faces of θ: for eigenvalues within a window of
/// λ_max, with basis `V`, every `n·V W Vᵗ` (W on the PSD simplex) yields an
/// ε-subgradient `G(W)`; the min-norm one `d` gives the direction `−d`,
/// accepted under an Armijo test. The first window uses `eigenspace_tol`,
/// so its `‖d‖` certifies stationarity.
fn face_descent(tr: &mut Tracker<'_>, x: &[f64], f: f64) -> Result<FaceStep> {
    let problem = tr.problem;
    let opts = &problem.options;
    let n = problem.n();
    let m = problem.shifted(&to_z(x));
    let (spectrum, _) = top_eigenpairs(&m, 0)?;
    let top = spectrum[0];
    let scale = 1.0 + top.abs();
    let sizes: Vec<usize> = FACE_WINDOWS
        .iter()
        .map(|&w| {
            let tol = if w == 0.0 { opts.eigenspace_tol } else { w } * scale;
            spectrum.iter().take_while(|&&v| top - v <= tol).count().clamp(1, MAX_RECOVERY_RANK.min(n))
        })
        .collect();
    let (_, basis) = top_eigenpairs(&m, *sizes.iter().max().unwrap())?;
    let mut tried = Vec::new();
    let mut first_norm = f64::INFINITY;
    for (k, &r) in sizes.iter().enumerate() {
        if tried.contains(&r) {
            continue;
        }
        tried.push(r);
        let map = ConstraintMap::new(basis.slice(ndarray::s![.., ..r]), problem.lambda, 1.0 / n as f64);
        let w = fit_weights(&map, opts.recovery_refine_iters)?;
        let d: Vec<f64> = map.residual(&map.to_vec(&w)).iter().map(|v| -v).collect();
        let dn2 = dot(&d, &d);
        if k == 0 {
            first_norm = dn2.sqrt();
            if first_norm <= opts.grad_tol {
                return Ok(FaceStep::Stationary(first_norm));
            }
        }
        let mut t = 1.0;
        let mut trial = vec![0.0; x.len()];
        for _ in 0..MAX_LINE_SEARCH {
            for ((ti, xi), di) in trial.iter_mut().zip(x).zip(&d) {
                *ti = xi + t * di;
            }
            let e = tr.eval(&trial)?;
            if e.value <= f - WOLFE_C1 * t * dn2 {
                return Ok(FaceStep::Moved(trial, e, first_norm));
            }
            t *= 0.5;
        }
    }
    Ok(FaceStep::Failed)
}

struct RunResult {
    iterations: usize,
    stationarity: f64,
    converged: bool,
}

fn lbfgs_run(tr: &mut Tracker<'_>, x0: Vec<f64>, max_iter: usize) -> Result<RunResult> {
    let opts = tr.problem.options.clone();
    let mut x = x0;
    let mut cur = tr.eval(&x)?;
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut history: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::new();
    let mut fallback_steps = 0usize;
    let mut stationarity = f64::INFINITY;
    let (mut mark_f, mut mark_it) = (tr.best_f, 0usize);
    for it in 0..max_iter {
        if tr.best_f < mark_f - 1e-12 * (1.0 + mark_f.abs()) {
            (mark_f, mark_it) = (tr.best_f, it);
        } else if it - mark_it >= STALL_ITERS {
            return Ok(RunResult {
                iterations: it,
                stationarity,
                converged: false,
            });
        }
        history.push_back((x.clone(), cur.grad.clone()));
        if history.len() > opts.bfgs_memory {
            history.pop_front();
        }
        let radius = EVAL_DIST * (1.0 + norm(&x));
        let near: Vec<&[f64]> = history
            .iter()
            .filter(|(xj, _)| dist(xj, &x) <= radius)
            .map(|(_, g)| g.as_slice())
            .collect();
        let (agg, _) = min_norm_hull(&near);
        stationarity = norm(&agg);
        if stationarity <= opts.grad_tol {
            return Ok(RunResult {
                iterations: it,
                stationarity,
                converged: true,
            });
        }

        let mut d = two_loop(&cur.grad, &memory);
        let mut gd = dot(&cur.grad, &d);
        if !(gd < 0.0) {
            memory.clear();
            d = cur.grad.iter().map(|v| -v).collect();
            gd = dot(&cur.grad, &d);
        }
        match weak_wolfe(tr, &x, cur.value, gd, &d)? {
            Some((t, next)) => {
                let s: Vec<f64> = d.iter().map(|v| t * v).collect();
                let y: Vec<f64> = next.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
                    memory.push_back((s.clone(), y, 1.0 / sy));
                    if memory.len() > opts.bfgs_memory {
                        memory.pop_front();
                    }
                }
                x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
                cur = next;
            }
            None => {
                // Near a kink the quasi-Newton direction stops giving
                // decrease. Step along the negative min-norm element of the
                // top-eigenspace face instead, and only if that fails too take
                // a diminishing normalized subgradient step.
                let from = tr.best_x.clone();
                let from_f = tr.best_f;
                match face_descent(tr, &from, from_f)? {
                    FaceStep::Stationary(norm_d) => {
                        return Ok(RunResult {
                            iterations: it + 1,
                            stationarity: norm_d,
                            converged: true,
                        });
                    }
                    FaceStep::Moved(next_x, next, norm_d) => {
                        stationarity = stationarity.min(norm_d);
                        let s: Vec<f64> = next_x.iter().zip(&from).map(|(a, b)| a - b).collect();
                        let g_from = tr.eval(&from)?.grad;
                        let y: Vec<f64> = next.grad.iter().zip(&g_from).map(|(a, b)| a - b).collect();
                        let sy = dot(&s, &y);
                        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
                            memory.push_back((s, y, 1.0 / sy));
                            if memory.len() > opts.bfgs_memory {
                                memory.pop_front();
                            }
                        }
                        x = next_x;
                        cur = next;
                    }
                    FaceStep::Failed => {
                        fallback_steps += 1;
                        memory.clear();
                        x = from;
                        let g = tr.eval(&x)?.grad;
                        let gn = norm(&g);
                        let step = SUBGRADIENT_STEP / (fallback_steps as f64).sqrt() / gn;
                        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= step * gi);
                        cur = tr.eval(&x)?;
                        history.clear();
                    }
                }
            }
        }
    }
    Ok(RunResult {
        iterations: max_iter,
        stationarity,
        converged: false,
    })
}

/// Minimizes θ from `z = 0`. A run ends on a stationarity certificate, on
/// stagnation, or when the shared `max_iter` budget is spent. After a stalled
/// run, up to `restarts` further runs start from random perturbations of the
/// best point so far. The best point over all runs is returned; `converged`
/// is false when no run met `grad_tol`.
pub fn minimize_dual(problem: &SdpProblem) -> Result<DualOutcome> {
    let n = problem.n();
    let opts = &problem.options;
    let mut tr = Tracker {
        problem,
        best_x: vec![0.0; n + 1],
        best_f: f64::INFINITY,
        evaluations: 0,
    };
    let mut run = lbfgs_run(&mut tr, vec![0.0; n + 1], opts.max_iter)?;
    let mut iterations = run.iterations;
    let mut converged = run.converged;
    let mut stationarity = run.stationarity;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        if converged || iterations >= opts.max_iter {
            break;
        }
        let scale = 1e-2 * (1.0 + tr.best_x.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
        let x0: Vec<f64> = tr
            .best_x
            .iter()
            .map(|v| {
                let e: f64 = StandardNormal.sample(&mut rng);
                v + scale * e
            })
            .collect();
        run = lbfgs_run(&mut tr, x0, opts.max_iter - iterations)?;
        iterations += run.iterations;
        converged = run.converged;
        stationarity = stationarity.min(run.stationarity);
    }
    Ok(DualOutcome {
        point: DualPoint { z: to_z(&tr.best_x) },
        value: tr.best_f,
        iterations,
        evaluations: tr.evaluations,
        stationarity,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub min_eigenvalue: f64,
    pub min_entry: f64,
    pub max_entry: f64,
    pub max_diag_deviation: f64,
    pub sum_deviation: f64,
}

/// Feasibility measures of `z` against `{Z ⪰ 0, 0 ≤ Z ≤ 1, diag = 1, Σ = λ}`.
pub fn residuals(z: ArrayView2<'_, f64>, lambda: f64) -> Result<Residuals> {
    let sym = SymMatrix::new(z.to_owned())?;
    let (spectrum, _) = top_eigenpairs(&sym, 0)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in z.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(Residuals {
        min_eigenvalue: *spectrum.last().unwrap(),
        min_entry: lo,
        max_entry: hi,
        max_diag_deviation: z.diag().iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max),
        sum_deviation: (z.sum() - lambda).abs(),
    })
}

/// Estimated cluster matrix with duality diagnostics.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub z_hat: Array2<f64>,
    pub dual: DualPoint,
    pub dual_value: f64,
    /// `⟨A, Ẑ⟩` of the final (clipped) estimate.
    pub primal_value: f64,
    /// `θ(z) − ⟨A, Ẑ⟩`; may be negative, since clipping to `[0,1]` moves
    /// `Ẑ` outside the PSD-only feasible set over which θ bounds `⟨A, Z⟩`.
    pub duality_gap: f64,
    /// `⟨A, Z₀⟩` of `Z₀ = n·V W Vᵗ` before clipping.
    pub primal_value_unclipped: f64,
    pub residuals: Residuals,
    /// Residuals of `Z₀` before clipping to `[0,1]`.
    pub residuals_unclipped: Residuals,
    /// Dimension of the eigenspace used in the reconstruction.
    pub rank: usize,
    pub iterations: usize,
    pub stationarity: f64,
    pub converged: bool,
}

/// JSON-friendly summary of an [`SdpSolution`] (everything but `Ẑ`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub n: usize,
    pub lambda: f64,
    pub dual_value: f64,
    pub primal_value: f64,
    pub duality_gap: f64,
    pub primal_value_unclipped: f64,
    pub residuals: Residuals,
    pub residuals_unclipped: Residuals,
    pub rank: usize,
    pub iterations: usize,
    pub stationarity: f64,
    pub converged: bool,
}

impl SdpSolution {
    pub fn diagnostics(&self, lambda: f64) -> SolveDiagnostics {
        SolveDiagnostics {
            n: self.z_hat.nrows(),
            lambda,
            dual_value: self.dual_value,
            primal_value: self.primal_value,
            duality_gap: self.duality_gap,
            primal_value_unclipped: self.primal_value_unclipped,
            residuals: self.residuals,
            residuals_unclipped: self.residuals_unclipped,
            rank: self.rank,
            iterations: self.iterations,
            stationarity: self.stationarity,
            converged: self.converged,
        }
    }
}

/// Linear map `W ↦ (n·v_iᵗ W v_i)_i ⊕ n·uᵗ W u` written against the
/// orthonormal basis of symmetric r×r matrices (`e_a e_aᵗ` and
/// `(e_a e_bᵗ + e_b e_aᵗ)/√2`), as an (n+1)×r(r+1)/2 matrix.
struct ConstraintMap {
    r: usize,
    b: Array2<f64>,
    target: Vec<f64>,
}

impl ConstraintMap {
    /// `sum_weight` scales the total-mass row (and its target).
    fn new(v: ArrayView2<'_, f64>, lambda: f64, sum_weight: f64) -> Self {
        let (n, r) = v.dim();
        let nf = n as f64;
        let u = v.sum_axis(Axis(0));
        let cols = r * (r + 1) / 2;
        let mut b = Array2::zeros((n + 1, cols));
        let s2 = std::f64::consts::SQRT_2;
        let mut fill = |row: usize, x: &dyn Fn(usize) -> f64| {
            let mut c = 0;
            for a in 0..r {
                b[[row, c]] = nf * x(a) * x(a);
                c += 1;
                for bb in (a + 1)..r {
                    b[[row, c]] = nf * s2 * x(a) * x(bb);
                    c += 1;
                }
            }
        };
        for i in 0..n {
            fill(i, &|a| v[[i, a]]);
        }
        let root = sum_weight.sqrt();
        fill(n, &|a| root * u[a]);
        let mut target = vec![1.0; n];
        target.push(sum_weight * lambda);
        ConstraintMap { r, b, target }
    }

    fn to_matrix(&self, w: &[f64]) -> Array2<f64> {
        let r = self.r;
        let mut m = Array2::zeros((r, r));
        let mut c = 0;
        for a in 0..r {
            m[[a, a]] = w[c];
            c += 1;
            for b in (a + 1)..r {
                let v = w[c] / std::f64::consts::SQRT_2;
                m[[a, b]] = v;
                m[[b, a]] = v;
                c += 1;
            }
        }
        m
    }

    fn to_vec(&self, m: &Array2<f64>) -> Vec<f64> {
        let r = self.r;
        let mut w = Vec::with_capacity(r * (r + 1) / 2);
        for a in 0..r {
            w.push(m[[a, a]]);
            for b in (a + 1)..r {
                w.push(m[[a, b]] * std::f64::consts::SQRT_2);
            }
        }
        w
    }

    fn trace_vec(&self) -> Vec<f64> {
        let mut c = Vec::new();
        for a in 0..self.r {
            c.push(1.0);
            c.extend(std::iter::repeat_n(0.0, self.r - a - 1));
        }
        c
    }

    fn residual(&self, w: &[f64]) -> Vec<f64> {
        let bw = self.b.dot(&ndarray::ArrayView1::from(w));
        bw.iter().zip(&self.target).map(|(x, t)| x - t).collect()
    }
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(x: &mut [f64]) {
    let mut s = x.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &v) in s.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (k + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    x.iter_mut().for_each(|v| *v = (*v - theta).max(0.0));
}

/// Projection onto `{W ⪰ 0, trace W = 1}`.
fn project_psd_simplex(w: &Array2<f64>) -> Result<Array2<f64>> {
    let r = w.nrows();
    if r == 1 {
        return Ok(Array2::ones((1, 1)));
    }
    let e = eig_sym(&SymMatrix::new(w.clone())?)?;
    let mut mu = e.values.to_vec();
    project_simplex(&mut mu);
    let mut out = Array2::zeros((r, r));
    for (k, &m) in mu.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let col = e.vectors.column(k);
        for a in 0..r {
            for b in 0..r {
                out[[a, b]] += m * col[a] * col[b];
            }
        }
    }
    Ok(out)
}

/// Least-squares fit of `W` on the PSD simplex: exact affine solve first
/// (accepted when it is PSD), otherwise accelerated projected gradient.
fn fit_weights(map: &ConstraintMap, iters: usize) -> Result<Array2<f64>> {
    let r = map.r;
    if r == 1 {
        return Ok(Array2::ones((1, 1)));
    }
    let cols = r * (r + 1) / 2;
    let c = ndarray::Array1::from(map.trace_vec());
    let w0 = &c / r as f64; // W = I/r
    // Restrict to trace-preserving directions: w = w0 + P ξ, P = I − ccᵗ/r.
    let mut proj = Array2::<f64>::eye(cols);
    for a in 0..cols {
        for b in 0..cols {
            proj[[a, b]] -= c[a] * c[b] / r as f64;
        }
    }
    let bp = map.b.dot(&proj);
    let rhs: ndarray::Array1<f64> = map.b.dot(&w0).iter().zip(&map.target).map(|(x, t)| t - x).collect();
    let e = eig_sym(&SymMatrix::new(bp.t().dot(&bp))?)?;
    let top = e.values[0].max(0.0);
    let atb = bp.t().dot(&rhs);
    let mut xi = ndarray::Array1::<f64>::zeros(cols);
    for k in 0..cols {
        let lam = e.values[k];
        if lam > 1e-12 * top && lam > 0.0 {
            let col = e.vectors.column(k);
            let coef = col.dot(&atb) / lam;
            xi.scaled_add(coef, &col);
        }
    }
    let w_ls = &w0 + &proj.dot(&xi);
    let w_mat = map.to_matrix(w_ls.as_slice().unwrap());
    let ew = eig_sym(&SymMatrix::new(w_mat.clone())?)?;
    if ew.values[r - 1] >= -1e-12 {
        return project_psd_simplex(&w_mat);
    }

    // FISTA on ‖B w − target‖² over the PSD simplex.
    let lipschitz = 2.0 * eig_sym(&SymMatrix::new(map.b.t().dot(&map.b))?)?.values[0].max(1e-300);
    let mut w = project_psd_simplex(&w_mat)?;
    let mut y = w.clone();
    let mut tk = 1.0_f64;
    let objective = |m: &Array2<f64>| norm(&map.residual(&map.to_vec(m)));
    let mut prev_obj = objective(&w);
    for _ in 0..iters {
        let yv = map.to_vec(&y);
        let res = map.residual(&yv);
        let grad = map.b.t().dot(&ndarray::Array1::from(res)) * 2.0;
        let step: Vec<f64> = yv.iter().zip(grad.iter()).map(|(a, g)| a - g / lipschitz).collect();
        let w_next = project_psd_simplex(&map.to_matrix(&step))?;
        let obj = objective(&w_next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        if obj > prev_obj {
            // adaptive restart
            y = w.clone();
            tk = 1.0;
            continue;
        }
        y = &w_next + &((&w_next - &w) * ((tk - 1.0) / t_next));
        w = w_next;
        tk = t_next;
        prev_obj = obj;
    }
    Ok(w)
}

/// Rebuilds `Ẑ` from the top eigenspace of `A + diag(z) + z_{n+1}11ᵗ`.
///
/// At an approximate minimizer the optimal eigenspace shows up as a cluster
/// of nearly equal top eigenvalues rather than an exact multiple eigenvalue,
/// so several eigenspace sizes `r` (from relative gap tolerances 1e-8 … 1e-2)
/// are tried. For each, `W` is fitted and scored by
/// `‖diag(Z₀) − 1‖₁ + |Σ Z₀ − λ| + n(λ₁ − Σ_j W_jj λ_j)` — infeasibility plus
/// the eigenvalue mass lost by leaving the top eigenvalue — and the best
/// (smallest `r` on ties) wins. `Z₀ = n·V W Vᵗ` is then clipped to `[0,1]`
/// with unit diagonal.
pub fn recover_primal(problem: &SdpProblem, zstar: &DualPoint) -> Result<SdpSolution> {
    problem.check_point(zstar)?;
    if zstar.z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("dual point has non-finite entries".into()));
    }
    let n = problem.n();
    let nf = n as f64;
    let lambda = problem.lambda;
    let m = problem.shifted(&zstar.z);
    let (spectrum, _) = top_eigenpairs(&m, 0)?;
    let top = spectrum[0];
    let scale = 1.0 + top.abs();
    let mut candidates: Vec<usize> = std::iter::once(problem.options.eigenspace_tol)
        .chain((2..=8).rev().map(|k| 10f64.powi(-k)))
        .map(|tol| spectrum.iter().take_while(|&&v| top - v <= tol * scale).count())
        .map(|r| r.clamp(1, MAX_RECOVERY_RANK.min(n)))
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    let r_max = *candidates.last().unwrap();
    let (_, basis) = top_eigenpairs(&m, r_max)?;

    let mut best: Option<(f64, usize, Array2<f64>)> = None;
    for &r in &candidates {
        let v = basis.slice(ndarray::s![.., ..r]);
        let map = ConstraintMap::new(v, lambda, 1.0);
        let w = fit_weights(&map, problem.options.recovery_refine_iters)?;
        let res = map.residual(&map.to_vec(&w));
        let infeasibility: f64 = res.iter().map(|x| x.abs()).sum();
        let lost: f64 = (0..r).map(|j| w[[j, j]] * (top - spectrum[j])).sum::<f64>() * nf;
        let merit = infeasibility + lost;
        let better = match &best {
            None => true,
            Some((bm, _, _)) => merit < *bm * (1.0 - 1e-9) - 1e-12,
        };
        if better {
            best = Some((merit, r, w));
        }
    }
    let (_, r, w) = best.unwrap();
    let v = basis.slice(ndarray::s![.., ..r]);
    let vw = v.dot(&w);
    let mut z0 = vw.dot(&v.t()) * nf;
    // exact symmetry
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (z0[[i, j]] + z0[[j, i]]);
            z0[[i, j]] = s;
            z0[[j, i]] = s;
        }
    }
    let residuals_unclipped = residuals(z0.view(), lambda)?;
    let primal_value_unclipped = (problem.affinity.entries() * &z0).sum();
    let mut z_hat = z0.mapv(|x| x.clamp(0.0, 1.0));
    z_hat.diag_mut().fill(1.0);
    let residuals_clipped = residuals(z_hat.view(), lambda)?;
    let dual_value = dual_value(problem, zstar)?;
    let primal_value = (problem.affinity.entries() * &z_hat).sum();
    Ok(SdpSolution {
        z_hat,
        dual: zstar.clone(),
        dual_value,
        primal_value,
        duality_gap: dual_value - primal_value,
        primal_value_unclipped,
        residuals: residuals_clipped,
        residuals_unclipped,
        rank: r,
        iterations: 0,
        stationarity: f64::NAN,
        converged: true,
    })
}

/// Minimizes the dual, then recovers `Ẑ`.
pub fn solve(problem: &SdpProblem) -> Result<SdpSolution> {
    let outcome = minimize_dual(problem)?;
    let mut sol = recover_primal(problem, &outcome.point)?;
    sol.iterations = outcome.iterations;
    sol.stationarity = outcome.stationarity;
    sol.converged = outcome.converged;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn block_ones(sizes: &[usize]) -> Array2<f64> {
        let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(k, &s)| std::iter::repeat_n(k, s)).collect();
        let n = labels.len();
        Array2::from_shape_fn((n, n), |(i, j)| if labels[i] == labels[j] { 1.0 } else { 0.0 })
    }

    fn problem(a: Array2<f64>, lambda: f64) -> SdpProblem {
        SdpProblem::new(AffinityMatrix::from_entries(a).unwrap(), lambda, SolverOptions::default()).unwrap()
    }

    fn random_affinity(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let mut a = Array2::eye(n);
        for i in 0..n {
            for j in 0..i {
                let v: f64 = rng.random();
                a[[i, j]] = v;
                a[[j, i]] = v;
            }
        }
        a
    }

    #[test]
    fn lambda_range_is_enforced() {
        let a = AffinityMatrix::from_entries(Array2::eye(3)).unwrap();
        assert!(SdpProblem::new(a.clone(), 2.9, SolverOptions::default()).is_err());
        assert!(SdpProblem::new(a.clone(), 9.1, SolverOptions::default()).is_err());
        assert!(SdpProblem::new(a.clone(), 3.0, SolverOptions::default()).is_ok());
        assert!(SdpProblem::new(a, 9.0, SolverOptions::default()).is_ok());
    }

    #[test]
    fn dual_value_examples() {
        let p = problem(Array2::eye(4), 6.0);
        assert!((dual_value(&p, &DualPoint::zeros(4)).unwrap() - 4.0).abs() < 1e-12);

        let p = problem(Array2::zeros((3, 3)), 5.0);
        let alpha = 0.7;
        let z = DualPoint::new(vec![alpha, alpha, alpha, 0.0]).unwrap();
        assert!(dual_value(&p, &z).unwrap().abs() < 1e-12);

        for lambda in [2.0, 3.0, 4.0] {
            let p = problem(Array2::ones((2, 2)), lambda);
            assert!((dual_value(&p, &DualPoint::zeros(2)).unwrap() - 4.0).abs() < 1e-12);
        }
        assert!(dual_value(&p, &DualPoint::zeros(5)).is_err());
    }

    #[test]
    fn subgradient_at_full_degeneracy() {
        let n = 4;
        let lambda = 7.0;
        let p = problem(Array2::zeros((n, n)), lambda);
        let g = dual_subgradient(&p, &DualPoint::zeros(n)).unwrap();
        for gi in &g[..n] {
            assert!(gi.abs() < 1e-10);
        }
        assert!((g[n] - (n as f64 - lambda)).abs() < 1e-9);
    }

    #[test]
    fn subgradient_matches_one_sided_differences() {
        // A = 0, n = 2: θ(δ e_3) = 2·max(2δ, 0) − λδ, so the one-sided
        // derivatives are 4 − λ and −λ; the selected element is 2 − λ.
        let lambda = 3.0;
        let p = problem(Array2::zeros((2, 2)), lambda);
        let g = dual_subgradient(&p, &DualPoint::zeros(2)).unwrap();
        assert!((g[2] - (2.0 - lambda)).abs() < 1e-12);
        let h = 1e-6;
        let right = dual_value(&p, &DualPoint::new(vec![0.0, 0.0, h]).unwrap()).unwrap() / h;
        let left = -dual_value(&p, &DualPoint::new(vec![0.0, 0.0, -h]).unwrap()).unwrap() / h;
        assert!((right - (4.0 - lambda)).abs() < 1e-6);
        assert!((left - (-lambda)).abs() < 1e-6);
        assert!(left <= g[2] && g[2] <= right);
    }

    #[test]
    fn subgradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 15;
        for _ in 0..20 {
            let p = problem(random_affinity(n, &mut rng), rng.random_range(n as f64..(n * n) as f64));
            let z: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let zp = DualPoint::new(z.clone()).unwrap();
            let g = dual_subgradient(&p, &zp).unwrap();
            let d: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h = 1e-6;
            let plus: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + h * b).collect();
            let minus: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a - h * b).collect();
            let fd = (dual_value(&p, &DualPoint::new(plus).unwrap()).unwrap()
                - dual_value(&p, &DualPoint::new(minus).unwrap()).unwrap())
                / (2.0 * h);
            let an = dot(&g, &d);
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "{fd} vs {an}");
        }
    }

    #[test]
    fn dual_is_convex_and_bounds_feasible_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let n = 3 + trial % 10;
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let zbar = Array2::from_shape_fn((n, n), |(i, j)| (labels[i] == labels[j]) as u8 as f64);
            let lambda0 = zbar.sum();
            let a = random_affinity(n, &mut rng);
            let feasible_value = (&a * &zbar).sum();
            let p = problem(a, lambda0);
            let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..=n).map(|_| rng.random_range(-2.0..2.0)).collect() };
            let (z1, z2) = (draw(&mut rng), draw(&mut rng));
            let th = |z: &[f64]| dual_value(&p, &DualPoint::new(z.to_vec()).unwrap()).unwrap();
            let (f1, f2) = (th(&z1), th(&z2));
            assert!(f1 >= feasible_value - 1e-6);
            for t in [0.25, 0.5, 0.75] {
                let zt: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
                assert!(th(&zt) <= t * f1 + (1.0 - t) * f2 + 1e-8);
            }
        }
    }

    #[test]
    fn min_norm_hull_cases() {
        let a = [1.0, 0.0];
        let b = [0.0, 1.0];
        let (x, w) = min_norm_hull(&[&a, &b]);
        assert!((x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12);
        assert!((w[0] - 0.5).abs() < 1e-12);
        let c = [-1.0, -1.0];
        let (x, _) = min_norm_hull(&[&a, &b, &c]);
        assert!(norm(&x) < 1e-12);
        let d = [2.0, 1.0];
        let (x, w) = min_norm_hull(&[&d, &[3.0, 3.0]]);
        assert_eq!(w, vec![1.0, 0.0]);
        assert_eq!(x, vec![2.0, 1.0]);
    }

    #[test]
    fn min_norm_hull_against_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let pts: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.random_range(-1.0..2.0)).collect()).collect();
            let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
            let (x, w) = min_norm_hull(&refs);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12 && w.iter().all(|&v| v >= 0.0));
            let mut best = f64::INFINITY;
            let steps = 300;
            for i in 0..=steps {
                for j in 0..=(steps - i) {
                    let (a, b) = (i as f64 / steps as f64, j as f64 / steps as f64);
                    let c = 1.0 - a - b;
                    let y: Vec<f64> = (0..4).map(|k| a * pts[0][k] + b * pts[1][k] + c * pts[2][k]).collect();
                    best = best.min(norm(&y));
                }
            }
            assert!(norm(&x) <= best + 1e-12);
            assert!(norm(&x) >= best - 1e-2);
        }
    }

    #[test]
    fn simplex_projection() {
        let mut x = vec![0.2, 0.3, 0.5];
        project_simplex(&mut x);
        assert_eq!(x, vec![0.2, 0.3, 0.5]);
        let mut x = vec![2.0, 0.0, -1.0];
        project_simplex(&mut x);
        assert_eq!(x, vec![1.0, 0.0, 0.0]);
        let mut x = vec![1.0, 1.0];
        project_simplex(&mut x);
        assert_eq!(x, vec![0.5, 0.5]);
    }

    #[test]
    fn first_step_decreases_dual() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_affinity(8, &mut rng);
        let mut p = problem(a, 20.0);
        let theta0 = dual_value(&p, &DualPoint::zeros(8)).unwrap();
        p.options.max_iter = 1;
        p.options.restarts = 0;
        let out = minimize_dual(&p).unwrap();
        assert!(out.value < theta0);
    }

    #[test]
    fn exact_block_instance() {
        let zbar = block_ones(&[2, 3]);
        let p = problem(zbar.clone(), 13.0);
        let sol = solve(&p).unwrap();
        assert!(sol.dual_value >= 13.0 - 1e-6, "dual {}", sol.dual_value);
        assert!(sol.dual_value - 13.0 <= 1e-3 * 13.0, "dual {}", sol.dual_value);
        assert!((sol.primal_value - 13.0).abs() <= 1e-2);
        assert!(sol.duality_gap <= 1e-2 * 13.0);
        assert!(sol.duality_gap >= -1e-6 * (1.0 + sol.dual_value.abs()));
        let l1: f64 = (&sol.z_hat - &zbar).iter().map(|x| x.abs()).sum();
        assert!(l1 <= 1.0, "l1 = {l1}");
    }

    #[test]
    fn identity_instance() {
        let p = problem(Array2::eye(2), 2.0);
        let sol = solve(&p).unwrap();
        assert!(sol.dual_value >= 2.0 - 1e-9 && sol.dual_value <= 2.0 + 1e-3);
        assert!((&sol.z_hat - &Array2::<f64>::eye(2)).iter().all(|x| x.abs() < 1e-3));
    }

    #[test]
    fn full_mass_forces_all_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 6;
        let p = problem(random_affinity(n, &mut rng), (n * n) as f64);
        let sol = solve(&p).unwrap();
        assert!(sol.z_hat.iter().all(|&x| (x - 1.0).abs() < 1e-3), "{:?}", sol.z_hat);
    }

    #[test]
    fn recovery_output_is_clipped_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 10;
        let p = problem(random_affinity(n, &mut rng), 40.0);
        let sol = solve(&p).unwrap();
        let z = &sol.z_hat;
        assert!(z.diag().iter().all(|&d| d == 1.0));
        assert!(z.iter().all(|&x| (0.0..=1.0).contains(&x)));
        for i in 0..n {
            for j in 0..n {
                assert_eq!(z[[i, j]], z[[j, i]]);
            }
        }
        // θ(z) − ⟨A, Z₀⟩ = n Σ W_jj (λ₁ − λ_j) + Σ z_i (Z₀_ii − 1)
        //   + z_{n+1} (ΣZ₀ − λ), so only the constraint residuals can make it
        // negative.
        let zv = &sol.dual.z;
        let slack = zv[..n].iter().map(|x| x.abs()).sum::<f64>()
            * sol.residuals_unclipped.max_diag_deviation
            + zv[n].abs() * sol.residuals_unclipped.sum_deviation;
        let gap = sol.dual_value - sol.primal_value_unclipped;
        assert!(gap >= -slack - 1e-8 * (1.0 + sol.dual_value.abs()), "{gap} {slack}");
    }

    #[test]
    fn rank_one_recovery_is_forced() {
        // Simple top eigenvalue at z = 0: W = 1, Z₀ = n·vvᵗ.
        let p = problem(Array2::ones((3, 3)), 9.0);
        let sol = recover_primal(&p, &DualPoint::zeros(3)).unwrap();
        assert_eq!(sol.rank, 1);
        assert!(sol.residuals_unclipped.sum_deviation < 1e-9);
        assert!(sol.residuals_unclipped.min_eigenvalue >= -1e-10);
    }

    #[test]
    fn residuals_of_exact_cluster_matrix() {
        let zbar = block_ones(&[2, 3]);
        let r = residuals(zbar.view(), 13.0).unwrap();
        assert!(r.min_eigenvalue >= -1e-10);
        assert_eq!(r.sum_deviation, 0.0);
        assert_eq!(r.max_diag_deviation, 0.0);
        assert_eq!((r.min_entry, r.max_entry), (0.0, 1.0));
    }

    #[test]
    fn solve_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_affinity(12, &mut rng);
        let p = problem(a, 60.0);
        let s1 = solve(&p).unwrap();
        let s2 = solve(&p).unwrap();
        assert_eq!(s1.z_hat, s2.z_hat);
        assert_eq!(s1.dual.z, s2.dual.z);
    }
}
