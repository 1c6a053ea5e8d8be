//! Seeded Monte Carlo experiments and λ selection.
//!
//! Trial `i` of an experiment draws everything from `base_seed + i`, so a
//! report is a pure function of its configuration. Trials may run on a
//! thread pool; records are collected in trial order.

use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::{build_matrix, default_h0, expected_default_h0, expected_matrix, AffinityFn, AffinityKind};
use crate::cluster::{cluster_matrix, edge_error_rate, l1_error_normalized, threshold_graph_clusters, Labeling};
use crate::embed::{default_max_k, embed_auto};
use crate::error::{Error, Result};
use crate::gmm_model::{sample, separation_report, ClusterSpec, GaussianMixtureSpec};
use crate::io;
use crate::linalg::{
    eig_sym, inf_to_one_norm_exact, inf_to_one_norm_lower, lp_power_sum, SymMatrix, EXACT_INF_TO_ONE_LIMIT,
};
use crate::sdp_solver::{solve, SdpProblem, SolverOptions};

/// Restarts of the alternating ∞→1 lower bound.
const INF1_RESTARTS: usize = 50;
/// Diagonal loading of fitted cluster covariances.
const COV_LOADING: f64 = 1e-6;
/// Improvement range quoted for the sparsity experiment, shown next to the
/// measured medians.
pub const REFERENCE_SPARSITY_RANGE: [f64; 2] = [0.10, 0.20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// `λ = lambda_scale · Σ n_k²` from the generating spec.
    #[default]
    TrueLambda0,
    /// Chosen by [`select_lambda`] over [`lambda_grid`].
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Bic,
    Aic,
}

/// Random mixture: means from `N(0, mean_variance·I)`, covariances `AᵗA`
/// with standard normal `A` (d×d).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomRecipe {
    pub sizes: Vec<usize>,
    pub mean_variance: f64,
}

impl Default for RandomRecipe {
    fn default() -> Self {
        RandomRecipe {
            sizes: vec![100, 100],
            mean_variance: 2.0,
        }
    }
}

impl RandomRecipe {
    pub fn draw(&self, dim: usize, rng: &mut impl Rng) -> Result<GaussianMixtureSpec> {
        let sd = self.mean_variance.sqrt();
        let clusters = self
            .sizes
            .iter()
            .map(|&size| {
                let mean = (0..dim).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
                let a = Array2::from_shape_simple_fn((dim, dim), || rng.sample::<f64, _>(StandardNormal));
                let c = a.t().dot(&a);
                let cov = (0..dim)
                    .map(|i| (0..dim).map(|j| 0.5 * (c[[i, j]] + c[[j, i]])).collect())
                    .collect();
                ClusterSpec { mean, cov, size }
            })
            .collect();
        GaussianMixtureSpec::new(dim, clusters)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Fixed mixture for the recovery and concentration experiments.
    pub spec: Option<GaussianMixtureSpec>,
    /// Generator for the sparsity experiment.
    pub recipe: RandomRecipe,
    pub trials: usize,
    pub base_seed: u64,
    /// Dimensions swept by the sparsity experiment.
    pub dims: Vec<usize>,
    /// Exponent of the sparsity measure `Σ|·|^p`.
    pub p_quasi: f64,
    pub lambda_mode: LambdaMode,
    /// Multiplies `λ₀` in [`LambdaMode::TrueLambda0`].
    pub lambda_scale: f64,
    pub criterion: Criterion,
    pub affinity: AffinityKind,
    /// Fixed bandwidth; the data-driven default when absent.
    pub h0: Option<f64>,
    pub solver: SolverOptions,
    /// Concentration grid as multiples of `2√(2 ln 2)ℓσ`.
    pub t_multipliers: Vec<f64>,
    pub histogram_bins: usize,
    /// Also write an SVG heatmap of the first trial's affinity matrix.
    pub svg: bool,
    /// Worker threads for trials.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            spec: None,
            recipe: RandomRecipe::default(),
            trials: 10,
            base_seed: 0,
            dims: vec![50, 100, 150, 200, 250],
            p_quasi: 0.05,
            lambda_mode: LambdaMode::TrueLambda0,
            lambda_scale: 1.0,
            criterion: Criterion::Bic,
            affinity: AffinityKind::Gaussian,
            h0: None,
            solver: SolverOptions::default(),
            t_multipliers: vec![1.25, 1.5, 2.0, 2.5, 3.0],
            histogram_bins: 10,
            svg: false,
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Validation("trials must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Validation("jobs must be at least 1".into()));
        }
        if !(self.p_quasi > 0.0) {
            return Err(Error::Validation(format!("p_quasi must be positive, got {}", self.p_quasi)));
        }
        if !(self.lambda_scale > 0.0) {
            return Err(Error::Validation("lambda_scale must be positive".into()));
        }
        if let Some(h0) = self.h0 {
            AffinityFn::new(self.affinity, h0)?;
        }
        if let Some(spec) = &self.spec {
            spec.validate()?;
        }
        self.solver.validate()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }

    fn fixed_spec(&self) -> Result<&GaussianMixtureSpec> {
        self.spec
            .as_ref()
            .ok_or_else(|| Error::Validation("this experiment needs a `spec`".into()))
    }

    fn affinity_for(&self, points: ArrayView2<'_, f64>) -> Result<AffinityFn> {
        let h0 = match self.h0 {
            Some(h) => h,
            None => default_h0(points)?,
        };
        AffinityFn::new(self.affinity, h0)
    }

    fn solver_for(&self, seed: u64) -> SolverOptions {
        SolverOptions {
            seed,
            ..self.solver.clone()
        }
    }
}

/// One trial. Fields that an experiment does not measure are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub lambda: Option<f64>,
    pub pi_n: Option<f64>,
    pub l1_normalized: Option<f64>,
    /// Absent when the spec is not separated (`p ≤ q`).
    pub t0: Option<f64>,
    pub inf1_normalized: Option<f64>,
    pub inf1_lower_normalized: Option<f64>,
    pub sparsity_ratio: Option<f64>,
    pub duality_gap: Option<f64>,
    /// Entries of `Ẑ` above 1/2, diagonal included.
    pub predicted_edges: Option<usize>,
    pub k_hat: Option<usize>,
    pub converged: Option<bool>,
    /// Wall-clock time; kept out of the serialized reports so that they are
    /// reproducible byte for byte.
    #[serde(skip)]
    pub runtime_ms: f64,
}

impl TrialRecord {
    fn new(trial: usize, seed: u64, n: usize, d: usize) -> Self {
        TrialRecord {
            trial,
            seed,
            n,
            d,
            lambda: None,
            pi_n: None,
            l1_normalized: None,
            t0: None,
            inf1_normalized: None,
            inf1_lower_normalized: None,
            sparsity_ratio: None,
            duality_gap: None,
            predicted_edges: None,
            k_hat: None,
            converged: None,
            runtime_ms: 0.0,
        }
    }
}

fn run_trials<F>(config: &ExperimentConfig, items: usize, f: F) -> Result<Vec<TrialRecord>>
where
    F: Fn(usize) -> Result<TrialRecord> + Sync + Send,
{
    let timed = |i: usize| {
        let start = Instant::now();
        let mut r = f(i)?;
        r.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(r)
    };
    if config.jobs == 1 {
        return (0..items).map(timed).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Argument(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..items).into_par_iter().map(timed).collect())
}

/// `count` log-spaced values from `n` to `n²`.
pub fn lambda_grid(n: usize, count: usize) -> Vec<f64> {
    let n = n as f64;
    match count {
        0 => vec![],
        1 => vec![n * n],
        _ => (0..count)
            .map(|j| {
                let v = n * n.powf(j as f64 / (count - 1) as f64);
                if j == count - 1 {
                    n * n
                } else {
                    v
                }
            })
            .collect(),
    }
}

/// One row of the λ-selection table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCandidate {
    pub lambda: f64,
    pub clusters: usize,
    pub log_likelihood: f64,
    pub params: usize,
    pub score: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub labels: Labeling,
    pub table: Vec<LambdaCandidate>,
}

/// Hard-assignment log-likelihood of a Gaussian mixture fitted by sample
/// means and covariances, with the parameter count. Clusters with no more
/// samples than dimensions use the pooled within-cluster covariance.
pub fn gaussian_fit_log_likelihood(points: ArrayView2<'_, f64>, labels: &Labeling) -> Result<(f64, usize)> {
    let (n, d) = points.dim();
    if labels.n() != n {
        return Err(Error::Shape {
            expected: format!("{n} labels"),
            got: labels.n().to_string(),
        });
    }
    let k = labels.k();
    let sizes = labels.sizes();
    let mut means = Array2::<f64>::zeros((k, d));
    for (row, &l) in points.rows().into_iter().zip(labels.labels()) {
        let mut m = means.row_mut(l - 1);
        m += &row;
    }
    for (mut m, &s) in means.rows_mut().into_iter().zip(&sizes) {
        m /= s as f64;
    }
    let mut covs = vec![Array2::<f64>::zeros((d, d)); k];
    let mut pooled = Array2::<f64>::zeros((d, d));
    for (row, &l) in points.rows().into_iter().zip(labels.labels()) {
        let c = &row - &means.row(l - 1);
        let outer = c.view().insert_axis(Axis(1)).dot(&c.view().insert_axis(Axis(0)));
        covs[l - 1] += &outer;
        pooled += &outer;
    }
    pooled /= n as f64;
    let mut params = k - 1 + k * d;
    let mut uses_pooled = false;
    let mut log_lik = 0.0;
    let mut densities = Vec::with_capacity(k);
    for (c, &s) in covs.iter_mut().zip(&sizes) {
        let mut cov = if s > d {
            params += d * (d + 1) / 2;
            &*c / s as f64
        } else {
            uses_pooled = true;
            pooled.clone()
        };
        for i in 0..d {
            cov[[i, i]] += COV_LOADING;
        }
        let e = eig_sym(&SymMatrix::new(symmetrized(cov))?)?;
        let vals = e.values.mapv(|v| v.max(COV_LOADING));
        let log_det: f64 = vals.iter().map(|v| v.ln()).sum();
        densities.push((e.vectors, vals, log_det));
    }
    if uses_pooled {
        params += d * (d + 1) / 2;
    }
    let log_2pi = (2.0 * std::f64::consts::PI).ln();
    for (row, &l) in points.rows().into_iter().zip(labels.labels()) {
        let (v, vals, log_det) = &densities[l - 1];
        let c = &row - &means.row(l - 1);
        let proj = v.t().dot(&c);
        let maha: f64 = proj.iter().zip(vals).map(|(p, s)| p * p / s).sum();
        let weight = (sizes[l - 1] as f64 / n as f64).ln();
        log_lik += weight - 0.5 * (d as f64 * log_2pi + log_det + maha);
    }
    Ok((log_lik, params))
}

fn symmetrized(m: Array2<f64>) -> Array2<f64> {
    (&m + &m.t()) * 0.5
}

/// Solves at every candidate λ, clusters `Ẑ` by thresholding, scores the
/// Gaussian fit with the information criterion, and returns the minimizer
/// (ties to the smaller λ).
pub fn select_lambda(
    points: ArrayView2<'_, f64>,
    candidates: &[f64],
    affinity: &AffinityFn,
    options: &SolverOptions,
    criterion: Criterion,
) -> Result<LambdaSelection> {
    if candidates.is_empty() {
        return Err(Error::Argument("no candidate values of lambda".into()));
    }
    let n = points.nrows();
    let a = build_matrix(points, affinity);
    let mut order: Vec<f64> = candidates.to_vec();
    order.sort_by(f64::total_cmp);
    let mut table = Vec::with_capacity(order.len());
    let mut best: Option<(f64, f64, Labeling)> = None;
    for &lambda in &order {
        let problem = SdpProblem::new(a.clone(), lambda, options.clone())?;
        let sol = solve(&problem)?;
        let labels = threshold_graph_clusters(sol.z_hat.view())?;
        let (ll, params) = gaussian_fit_log_likelihood(points, &labels)?;
        let penalty = match criterion {
            Criterion::Bic => params as f64 * (n as f64).ln(),
            Criterion::Aic => 2.0 * params as f64,
        };
        let score = -2.0 * ll + penalty;
        table.push(LambdaCandidate {
            lambda,
            clusters: labels.k(),
            log_likelihood: ll,
            params,
            score,
            converged: sol.converged,
        });
        if best.as_ref().is_none_or(|b| score < b.1) {
            best = Some((lambda, score, labels));
        }
    }
    let (lambda, _, labels) = best.expect("candidates are non-empty");
    Ok(LambdaSelection { lambda, labels, table })
}

/// Data and affinity of one recovery or concentration trial.
fn fixed_spec_trial(config: &ExperimentConfig, trial: usize) -> Result<(crate::gmm_model::LabeledDataSet, AffinityFn)> {
    let spec = config.fixed_spec()?;
    let data = sample(spec, config.trial_seed(trial))?;
    let f = config.affinity_for(data.points.view())?;
    Ok((data, f))
}

/// The affinity matrix of trial `trial` of the recovery experiment.
pub fn trial_affinity(config: &ExperimentConfig, trial: usize) -> Result<Array2<f64>> {
    let (data, f) = fixed_spec_trial(config, trial)?;
    Ok(build_matrix(data.points.view(), &f).into_entries())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub trials: usize,
    pub separated_trials: usize,
    pub pi_zero_trials: usize,
    pub max_pi_n: f64,
    pub max_l1_normalized: f64,
    /// Separated trials with `n⁻²‖Ẑ − Z̄‖₁ ≤ slack·t₀`.
    pub l1_within_slack_trials: usize,
    pub slack: f64,
    pub converged_trials: usize,
}

/// Recovery slack on the asymptotic `t₀` bound at finite `n`.
pub const RECOVERY_SLACK: f64 = 1.5;

/// Samples the fixed spec, solves with `λ₀` (or a selected λ), and measures
/// `π_n`, `n⁻²‖Ẑ − Z̄‖₁` and `t₀` per trial.
pub fn run_recovery_experiment(config: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let spec = config.fixed_spec()?;
    run_trials(config, config.trials, |trial| {
        let seed = config.trial_seed(trial);
        let (data, f) = fixed_spec_trial(config, trial)?;
        let n = data.n();
        let a = build_matrix(data.points.view(), &f);
        let truth = Labeling::new(data.labels.clone())?;
        let z_bar = cluster_matrix(&truth);
        let options = config.solver_for(seed);
        let lambda = match config.lambda_mode {
            LambdaMode::TrueLambda0 => config.lambda_scale * spec.lambda0(),
            LambdaMode::Grid => {
                select_lambda(data.points.view(), &lambda_grid(n, 8), &f, &options, config.criterion)?.lambda
            }
        };
        let report = separation_report(spec, f.h0, f.lipschitz_constant()?)?;
        let a_bar = expected_matrix(spec, f.h0)?;
        let diff = a.entries() - a_bar.entries();
        let sol = solve(&SdpProblem::new(a, lambda, options)?)?;
        let mut r = TrialRecord::new(trial, seed, n, data.dim());
        r.lambda = Some(lambda);
        r.pi_n = Some(edge_error_rate(sol.z_hat.view(), &z_bar)?);
        r.l1_normalized = Some(l1_error_normalized(sol.z_hat.view(), &z_bar)?);
        r.t0 = report.separated.then_some(report.t0);
        r.inf1_lower_normalized =
            Some(inf_to_one_norm_lower(diff.view(), INF1_RESTARTS, seed)? / (n * n) as f64);
        r.duality_gap = Some(sol.duality_gap);
        r.predicted_edges = Some(sol.z_hat.iter().filter(|&&x| x > 0.5).count());
        r.converged = Some(sol.converged);
        Ok(r)
    })
}

pub fn summarize_recovery(records: &[TrialRecord]) -> RecoverySummary {
    let mut s = RecoverySummary {
        trials: records.len(),
        separated_trials: 0,
        pi_zero_trials: 0,
        max_pi_n: 0.0,
        max_l1_normalized: 0.0,
        l1_within_slack_trials: 0,
        slack: RECOVERY_SLACK,
        converged_trials: 0,
    };
    for r in records {
        let pi = r.pi_n.unwrap_or(f64::NAN);
        let l1 = r.l1_normalized.unwrap_or(f64::NAN);
        s.pi_zero_trials += usize::from(pi == 0.0);
        s.max_pi_n = s.max_pi_n.max(pi);
        s.max_l1_normalized = s.max_l1_normalized.max(l1);
        s.converged_trials += usize::from(r.converged == Some(true));
        if let Some(t0) = r.t0 {
            s.separated_trials += 1;
            s.l1_within_slack_trials += usize::from(l1 <= RECOVERY_SLACK * t0);
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub t: f64,
    pub exceed_fraction: f64,
    pub bound: f64,
    /// Binomial standard error `√(b(1 − b)/trials)` at the bound `b`.
    pub standard_error: f64,
    /// `exceed_fraction ≤ bound + 3·standard_error`.
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSummary {
    pub n: usize,
    pub trials: usize,
    /// `2√(2 ln 2)ℓσ`.
    pub t_star: f64,
    pub h0: f64,
    pub mean_norm: f64,
    /// Whether the norm is exact (n within the enumeration limit) or the
    /// alternating lower bound.
    pub exact: bool,
    pub grid: Vec<GridPoint>,
    /// Trials on which the lower bound reached the exact norm (exact mode
    /// only).
    pub lower_matches_exact_fraction: Option<f64>,
    pub all_within_bound: bool,
}

/// Draws the fixed spec, and compares `‖A − Ā‖_{∞→1}/n²` with its tail bound
/// on a grid of `t`. The bandwidth is fixed across trials (the `h0` option,
/// or the expected bandwidth heuristic of the spec) so that `Ā` does not
/// depend on the sample.
pub fn run_concentration_experiment(config: &ExperimentConfig) -> Result<(ConcentrationSummary, Vec<TrialRecord>)> {
    config.validate()?;
    let spec = config.fixed_spec()?;
    let n = spec.n();
    let h0 = match config.h0 {
        Some(h) => h,
        None => expected_default_h0(spec)?,
    };
    let f = AffinityFn::new(config.affinity, h0)?;
    let a_bar = expected_matrix(spec, h0)?;
    let exact = n <= EXACT_INF_TO_ONE_LIMIT;
    let scale = (n * n) as f64;
    let records = run_trials(config, config.trials, |trial| {
        let seed = config.trial_seed(trial);
        let data = sample(spec, seed)?;
        let a = build_matrix(data.points.view(), &f);
        let diff = a.entries() - a_bar.entries();
        let mut r = TrialRecord::new(trial, seed, n, data.dim());
        r.inf1_lower_normalized = Some(inf_to_one_norm_lower(diff.view(), INF1_RESTARTS, seed)? / scale);
        if exact {
            r.inf1_normalized = Some(inf_to_one_norm_exact(diff.view())? / scale);
        }
        Ok(r)
    })?;
    let report = separation_report(spec, h0, f.lipschitz_constant()?)?;
    let t_star = report.concentration_threshold();
    let norms: Vec<f64> = records
        .iter()
        .map(|r| r.inf1_normalized.or(r.inf1_lower_normalized).unwrap())
        .collect();
    let trials = records.len() as f64;
    let grid: Vec<GridPoint> = config
        .t_multipliers
        .iter()
        .map(|&m| {
            // A degenerate threshold (σ = 0) makes the multipliers absolute.
            let t = if t_star > 0.0 { m * t_star } else { m };
            let bound = report.concentration_bound(t, n)?;
            let exceed = norms.iter().filter(|&&x| x > t).count() as f64 / trials;
            let se = (bound * (1.0 - bound) / trials).sqrt();
            Ok(GridPoint {
                t,
                exceed_fraction: exceed,
                bound,
                standard_error: se,
                within_bound: exceed <= bound + 3.0 * se,
            })
        })
        .collect::<Result<_>>()?;
    let lower_matches_exact_fraction = exact.then(|| {
        records
            .iter()
            .filter(|r| {
                let (e, l) = (r.inf1_normalized.unwrap(), r.inf1_lower_normalized.unwrap());
                e - l <= 1e-9 * (1.0 + e)
            })
            .count() as f64
            / trials
    });
    Ok((
        ConcentrationSummary {
            n,
            trials: records.len(),
            t_star,
            h0,
            mean_norm: norms.iter().sum::<f64>() / trials,
            exact,
            all_within_bound: grid.iter().all(|g| g.within_bound),
            grid,
            lower_matches_exact_fraction,
        },
        records,
    ))
}

/// `(S(orig) − S(emb)) / S(orig)` with `S = Σ|·|^p`.
pub fn sparsity_ratio(original: ArrayView2<'_, f64>, embedded: ArrayView2<'_, f64>, p: f64) -> Result<f64> {
    let so = lp_power_sum(original, p)?;
    let se = lp_power_sum(embedded, p)?;
    if so == 0.0 {
        return Err(Error::Domain("the original matrix is zero".into()));
    }
    Ok((so - se) / so)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` increasing bin edges; the last bin is closed.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width bins spanning the data range (a unit-width bin around a
/// constant sample).
pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    if values.is_empty() {
        return Histogram {
            edges: vec![],
            counts: vec![],
        };
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let i = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[i] += 1;
    }
    Histogram { edges, counts }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        m if m % 2 == 1 => v[m / 2],
        m => 0.5 * (v[m / 2 - 1] + v[m / 2]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityByDim {
    pub d: usize,
    pub trials: usize,
    pub median_ratio: f64,
    pub mean_ratio: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsitySummary {
    pub p: f64,
    /// Statistic: the power sum `Σ|·|^p`, not its `1/p` root.
    pub statistic: String,
    pub reference_range: [f64; 2],
    pub by_dim: Vec<SparsityByDim>,
}

/// For each dimension and trial: draw a random two-cluster mixture, solve
/// with `λ₀`, embed `Ẑ` with an estimated `K̂`, rebuild the affinity matrix
/// of the embedded points with a fresh bandwidth, and record the relative
/// drop of `Σ|·|^p`.
pub fn run_sparsity_experiment(config: &ExperimentConfig) -> Result<(SparsitySummary, Vec<TrialRecord>)> {
    config.validate()?;
    if config.dims.is_empty() {
        return Err(Error::Validation("dims must not be empty".into()));
    }
    let per_dim = config.trials;
    let records = run_trials(config, config.dims.len() * per_dim, |item| {
        let d = config.dims[item / per_dim];
        let trial = item % per_dim;
        // the seed depends on the trial and the dimension
        let seed = config.trial_seed(trial).wrapping_add((d as u64) << 32);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = config.recipe.draw(d, &mut rng)?;
        let data = sample(&spec, rng.random())?;
        let n = data.n();
        let f = config.affinity_for(data.points.view())?;
        let a = build_matrix(data.points.view(), &f);
        let lambda = match config.lambda_mode {
            LambdaMode::TrueLambda0 => config.lambda_scale * spec.lambda0(),
            LambdaMode::Grid => {
                let opts = config.solver_for(seed);
                select_lambda(data.points.view(), &lambda_grid(n, 8), &f, &opts, config.criterion)?.lambda
            }
        };
        let sol = solve(&SdpProblem::new(a.clone(), lambda, config.solver_for(seed))?)?;
        let emb = embed_auto(sol.z_hat.view(), default_max_k(n))?;
        let fe = AffinityFn::new(config.affinity, embedded_h0(emb.coords.view())?)?;
        let ae = build_matrix(emb.coords.view(), &fe);
        let mut r = TrialRecord::new(trial, seed, n, d);
        r.lambda = Some(lambda);
        r.sparsity_ratio = Some(sparsity_ratio(a.entries().view(), ae.entries().view(), config.p_quasi)?);
        r.duality_gap = Some(sol.duality_gap);
        r.k_hat = Some(emb.k_hat);
        r.converged = Some(sol.converged);
        Ok(r)
    })?;
    let by_dim = config
        .dims
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let ratios: Vec<f64> = records[i * per_dim..(i + 1) * per_dim]
                .iter()
                .map(|r| r.sparsity_ratio.unwrap())
                .collect();
            SparsityByDim {
                d,
                trials: ratios.len(),
                median_ratio: median(&ratios),
                mean_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
                histogram: histogram(&ratios, config.histogram_bins),
            }
        })
        .collect();
    Ok((
        SparsitySummary {
            p: config.p_quasi,
            statistic: "power_sum".into(),
            reference_range: REFERENCE_SPARSITY_RANGE,
            by_dim,
        },
        records,
    ))
}

/// Bandwidth heuristic for embedded points; a degenerate (all-zero)
/// embedding falls back to unit bandwidth.
fn embedded_h0(coords: ArrayView2<'_, f64>) -> Result<f64> {
    match default_h0(coords) {
        Ok(h) => Ok(h),
        Err(Error::Domain(_)) => Ok(1.0),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Recovery,
    Concentration,
    Sparsity,
}

impl ExperimentKind {
    pub const ALL: [&'static str; 3] = ["recovery", "concentration", "sparsity"];
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recovery" => Ok(Self::Recovery),
            "concentration" => Ok(Self::Concentration),
            "sparsity" => Ok(Self::Sparsity),
            other => Err(Error::Argument(format!(
                "unknown experiment kind {other:?}; valid kinds: {}",
                Self::ALL.join(", ")
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Summary {
    Recovery(RecoverySummary),
    Concentration(ConcentrationSummary),
    Sparsity(SparsitySummary),
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub summary: Summary,
    pub trials: Vec<TrialRecord>,
}

pub fn run_experiment(kind: ExperimentKind, config: &ExperimentConfig) -> Result<ExperimentReport> {
    let (summary, trials) = match kind {
        ExperimentKind::Recovery => {
            let t = run_recovery_experiment(config)?;
            (Summary::Recovery(summarize_recovery(&t)), t)
        }
        ExperimentKind::Concentration => {
            let (s, t) = run_concentration_experiment(config)?;
            (Summary::Concentration(s), t)
        }
        ExperimentKind::Sparsity => {
            let (s, t) = run_sparsity_experiment(config)?;
            (Summary::Sparsity(s), t)
        }
    };
    Ok(ExperimentReport {
        kind,
        config: config.clone(),
        summary,
        trials,
    })
}

/// Writes `report.json`, `trials.csv`, `timings.csv`, `histograms.csv` (sparsity)
/// and `affinity.svg` (when requested, recovery and concentration only).
/// Everything except `timings.csv` is reproducible byte for byte.
pub fn write_report(dir: impl AsRef<Path>, report: &ExperimentReport) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_json(dir.join("report.json"), report)?;
    let mut w = csv::Writer::from_path(dir.join("trials.csv"))?;
    for r in &report.trials {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(dir.join("trials.csv"), e))?;
    let mut w = csv::Writer::from_path(dir.join("timings.csv"))?;
    w.write_record(["trial", "d", "runtime_ms"])?;
    for r in &report.trials {
        w.write_record([r.trial.to_string(), r.d.to_string(), format!("{:.3}", r.runtime_ms)])?;
    }
    w.flush().map_err(|e| Error::io(dir.join("timings.csv"), e))?;
    if let Summary::Sparsity(s) = &report.summary {
        let mut w = csv::Writer::from_path(dir.join("histograms.csv"))?;
        w.write_record(["d", "bin", "lower", "upper", "count"])?;
        for by in &s.by_dim {
            for (b, c) in by.histogram.counts.iter().enumerate() {
                w.write_record([
                    by.d.to_string(),
                    b.to_string(),
                    by.histogram.edges[b].to_string(),
                    by.histogram.edges[b + 1].to_string(),
                    c.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(dir.join("histograms.csv"), e))?;
    }
    if report.config.svg && report.kind != ExperimentKind::Sparsity {
        let a = trial_affinity(&report.config, 0)?;
        io::write_heatmap_svg(dir.join("affinity.svg"), a.view())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn two_clusters(gap: f64, size: usize, var: f64) -> GaussianMixtureSpec {
        GaussianMixtureSpec::new(
            2,
            vec![
                ClusterSpec::isotropic(vec![0.0, 0.0], var, size),
                ClusterSpec::isotropic(vec![gap, 0.0], var, size),
            ],
        )
        .unwrap()
    }

    #[test]
    fn grid_is_log_spaced_between_n_and_n_squared() {
        let g = lambda_grid(10, 8);
        assert_eq!(g.len(), 8);
        assert!((g[0] - 10.0).abs() < 1e-12);
        assert_eq!(g[7], 100.0);
        for w in g.windows(3) {
            assert!((w[1] / w[0] - w[2] / w[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn sparsity_ratio_examples() {
        let a = Array2::<f64>::ones((6, 6));
        assert_eq!(sparsity_ratio(a.view(), a.view(), 0.05).unwrap(), 0.0);
        let b = Array2::from_elem((6, 6), (-4.0f64).exp());
        let r = sparsity_ratio(a.view(), b.view(), 0.05).unwrap();
        let want = 1.0 - (-4.0 * 0.05f64).exp();
        assert!((r - want).abs() < 1e-12);
        assert!((r - 0.1813).abs() < 1e-4);
    }

    #[test]
    fn histogram_and_median() {
        let h = histogram(&[0.0, 0.1, 0.5, 1.0], 2);
        assert_eq!(h.counts, vec![2, 2]);
        assert_eq!(h.edges, vec![0.0, 0.5, 1.0]);
        let c = histogram(&[3.0, 3.0], 4);
        assert_eq!(c.counts.iter().sum::<usize>(), 2);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn zero_variance_concentration_is_exact() {
        let config = ExperimentConfig {
            spec: Some(two_clusters(3.0, 5, 0.0)),
            trials: 3,
            ..ExperimentConfig::default()
        };
        let (s, records) = run_concentration_experiment(&config).unwrap();
        assert!(records.iter().all(|r| r.inf1_normalized == Some(0.0)));
        assert_eq!(s.mean_norm, 0.0);
        assert!(s.all_within_bound);
    }

    #[test]
    fn bic_prefers_one_component_for_one_cloud() {
        let spec = GaussianMixtureSpec::new(2, vec![ClusterSpec::isotropic(vec![0.0, 0.0], 1.0, 30)]).unwrap();
        let data = sample(&spec, 5).unwrap();
        let one = Labeling::new(vec![1; 30]).unwrap();
        let split = Labeling::canonical(&(0..30).map(|i| i % 2).collect::<Vec<_>>());
        let (l1, p1) = gaussian_fit_log_likelihood(data.points.view(), &one).unwrap();
        let (l2, p2) = gaussian_fit_log_likelihood(data.points.view(), &split).unwrap();
        assert_eq!(p1, 5);
        assert_eq!(p2, 11);
        let n = 30f64.ln();
        assert!(-2.0 * l1 + p1 as f64 * n < -2.0 * l2 + p2 as f64 * n);
        // pooled covariance for singletons keeps the likelihood finite
        let singles = Labeling::canonical(&(0..30).collect::<Vec<_>>());
        let (ls, _) = gaussian_fit_log_likelihood(data.points.view(), &singles).unwrap();
        assert!(ls.is_finite());
    }

    #[test]
    fn select_lambda_single_candidate_and_empty() {
        let data = sample(&two_clusters(10.0, 5, 1.0), 1).unwrap();
        let f = AffinityFn::gaussian(default_h0(data.points.view()).unwrap()).unwrap();
        let opts = SolverOptions::default();
        let sel = select_lambda(data.points.view(), &[50.0], &f, &opts, Criterion::Bic).unwrap();
        assert_eq!(sel.lambda, 50.0);
        assert_eq!(sel.table.len(), 1);
        assert!(select_lambda(data.points.view(), &[], &f, &opts, Criterion::Bic).is_err());
    }

    #[test]
    fn config_rejects_unknown_fields_and_bad_values() {
        assert!(ExperimentConfig::from_json_str(r#"{"trails": 3}"#).is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"trials": 0}"#).is_err());
        let c = ExperimentConfig::from_json_str(r#"{"trials": 2, "dims": [5]}"#).unwrap();
        assert_eq!(c.trials, 2);
        assert_eq!(c.p_quasi, 0.05);
        assert!("nope".parse::<ExperimentKind>().unwrap_err().to_string().contains("recovery"));
    }

    #[test]
    fn recipe_draws_valid_specs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = RandomRecipe::default().draw(4, &mut rng).unwrap();
        assert_eq!(spec.n(), 200);
        assert_eq!(spec.k(), 2);
        for c in &spec.clusters {
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(c.cov[i][j], c.cov[j][i]);
                }
            }
        }
    }
}
