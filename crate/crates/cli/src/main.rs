mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

/// Cluster-matrix estimation for Gaussian-mixture data.
///
/// Exit codes: 0 success, 1 usage or input error, 2 finished with a
/// numerical warning (the solver did not certify convergence).
#[derive(Debug, Parser)]
#[command(name = "clustersdp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a labeled dataset from a mixture spec.
    Generate(GenerateArgs),
    /// Estimate the cluster matrix of a dataset (or of an affinity matrix).
    Solve(SolveArgs),
    /// Embed an estimated cluster matrix and extract clusters.
    EmbedCluster(EmbedArgs),
    /// Run a Monte Carlo experiment.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum AffinityName {
    Gaussian,
    Powerexp,
    Rational,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum FormatName {
    Csv,
    Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum MethodName {
    Threshold,
    Mst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum CriterionName {
    Bic,
    Aic,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct GenerateArgs {
    /// Mixture spec (JSON: {dim, clusters: [{mean, cov, size}]}).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON document with any of the flags above.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct SolveArgs {
    /// Dataset CSV with a header row; a trailing `label` column is ignored.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Precomputed affinity matrix instead of --data (format from the extension).
    #[arg(long, conflicts_with = "data")]
    matrix: Option<PathBuf>,
    /// Total mass λ in [n, n²], or `auto` to choose among 8 log-spaced values.
    #[arg(long)]
    lambda: Option<String>,
    /// Affinity bandwidth (default: the data-driven heuristic).
    #[arg(long)]
    h0: Option<f64>,
    #[arg(long, value_enum)]
    affinity: Option<AffinityName>,
    /// Shape parameter of non-Gaussian affinities (default 1).
    #[arg(long)]
    a: Option<f64>,
    /// Selection criterion for `--lambda auto` (default bic).
    #[arg(long, value_enum)]
    criterion: Option<CriterionName>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output prefix: writes <out>_zhat.<format> and <out>_diagnostics.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatName>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct EmbedArgs {
    /// Estimated cluster matrix (format from the extension unless --format).
    #[arg(long)]
    zhat: Option<PathBuf>,
    /// Embedding dimension / number of clusters, or `auto` (default).
    #[arg(long)]
    k: Option<String>,
    #[arg(long, value_enum)]
    method: Option<MethodName>,
    /// Raw dataset for `--method mst --raw`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run the MST on the raw data instead of the embedding.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    raw: Option<bool>,
    /// Output prefix: writes <out>_labels.csv, <out>_embedding.csv and <out>_report.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatName>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct ExperimentArgs {
    /// recovery, concentration or sparsity.
    #[arg(long)]
    kind: Option<String>,
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default 1).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Outcome of a command that ran to completion.
pub enum Status {
    Ok,
    Warning(String),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Solve(a) => commands::solve(a),
        Command::EmbedCluster(a) => commands::embed_cluster(a),
        Command::Experiment(a) => commands::experiment(a),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Warning(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
