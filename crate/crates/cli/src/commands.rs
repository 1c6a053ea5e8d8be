use std::path::Path;

use anyhow::{bail, Context, Result};
use clustersdp::affinity::{build_matrix, default_h0, AffinityFn, AffinityKind, AffinityMatrix};
use clustersdp::cluster::{mst_clusters, threshold_graph_clusters};
use clustersdp::embed::{default_max_k, embed_auto, embed_rows};
use clustersdp::gmm_model::{sample, separation_report, GaussianMixtureSpec};
use clustersdp::harness::{lambda_grid, run_experiment, select_lambda, write_report, Criterion, ExperimentConfig, ExperimentKind};
use clustersdp::io::{self, MatrixFormat};
use clustersdp::sdp_solver::{solve as solve_sdp, SdpProblem, SolverOptions};
use serde_json::json;

use crate::config::{existing_file, require, resolve, with_suffix, writable_target};
use crate::{
    AffinityName, CriterionName, EmbedArgs, ExperimentArgs, FormatName, GenerateArgs, MethodName, SolveArgs, Status,
};

/// Grid size for `--lambda auto`.
const AUTO_GRID: usize = 8;

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn matrix_format(flag: Option<FormatName>, path: &Path) -> MatrixFormat {
    match flag {
        Some(FormatName::Csv) => MatrixFormat::Csv,
        Some(FormatName::Bin) => MatrixFormat::Bin,
        None => MatrixFormat::guess(path),
    }
}

pub fn generate(flags: GenerateArgs) -> Result<Status> {
    let args = resolve(&flags, flags.config.as_deref())?;
    let spec_path = existing_file(require(&args.spec, "spec")?)?;
    let out = require(&args.out, "out")?;
    writable_target(out)?;
    let seed = args.seed.unwrap_or(0);

    let spec = GaussianMixtureSpec::load(spec_path)?;
    let data = sample(&spec, seed)?;
    io::write_dataset(out, data.points.view(), &data.labels)?;

    // All-zero data has no bandwidth heuristic; the report is then omitted.
    let (h0, report) = match default_h0(data.points.view()) {
        Ok(h0) => {
            let f = AffinityFn::gaussian(h0)?;
            (Some(h0), Some(separation_report(&spec, h0, f.lipschitz_constant()?)?))
        }
        Err(_) => (None, None),
    };
    print_json(&json!({
        "config": args,
        "n": spec.n(),
        "d": spec.dim,
        "k": spec.k(),
        "lambda0": spec.lambda0(),
        "h0": h0,
        "separation": report,
    }))?;
    Ok(Status::Ok)
}

fn affinity_kind(name: Option<AffinityName>, a: Option<f64>) -> AffinityKind {
    let a = a.unwrap_or(1.0);
    match name.unwrap_or(AffinityName::Gaussian) {
        AffinityName::Gaussian => AffinityKind::Gaussian,
        AffinityName::Powerexp => AffinityKind::PowerExponential { a },
        AffinityName::Rational => AffinityKind::Rational { a },
        AffinityName::Logistic => AffinityKind::Logistic { a },
    }
}

pub fn solve(flags: SolveArgs) -> Result<Status> {
    let args = resolve(&flags, flags.config.as_deref())?;
    let out = require(&args.out, "out")?;
    writable_target(out)?;
    let lambda_arg = require(&args.lambda, "lambda")?.trim().to_string();
    let format = match args.format.unwrap_or(FormatName::Csv) {
        FormatName::Csv => MatrixFormat::Csv,
        FormatName::Bin => MatrixFormat::Bin,
    };
    let mut options = SolverOptions {
        seed: args.seed.unwrap_or(0),
        ..SolverOptions::default()
    };
    if let Some(t) = args.grad_tol {
        options.grad_tol = t;
    }
    if let Some(m) = args.max_iter {
        options.max_iter = m;
    }
    if let Some(r) = args.restarts {
        options.restarts = r;
    }
    options.validate()?;

    let (points, affinity) = match (&args.data, &args.matrix) {
        (Some(data), None) => {
            let table = io::read_dataset(existing_file(data)?)?;
            let h0 = match args.h0 {
                Some(h) => h,
                None => default_h0(table.points.view())?,
            };
            let f = AffinityFn::new(affinity_kind(args.affinity, args.a), h0)?;
            (Some((table.points, f)), None)
        }
        (None, Some(m)) => {
            let path = existing_file(m)?;
            let entries = io::read_matrix(path, MatrixFormat::guess(path))?;
            (None, Some(AffinityMatrix::from_entries(entries).with_context(|| path.display().to_string())?))
        }
        _ => bail!("exactly one of --data and --matrix is required"),
    };
    let a = match (&points, affinity) {
        (Some((p, f)), _) => build_matrix(p.view(), f),
        (None, Some(a)) => a,
        _ => unreachable!(),
    };
    let n = a.n();

    let (lambda, selection) = if lambda_arg == "auto" {
        let Some((p, f)) = &points else {
            bail!("--lambda auto needs --data (the selection fits Gaussians to the points)");
        };
        let criterion = match args.criterion.unwrap_or(CriterionName::Bic) {
            CriterionName::Bic => Criterion::Bic,
            CriterionName::Aic => Criterion::Aic,
        };
        let sel = select_lambda(p.view(), &lambda_grid(n, AUTO_GRID), f, &options, criterion)?;
        (sel.lambda, Some(sel.table))
    } else {
        let l: f64 = lambda_arg
            .parse()
            .with_context(|| format!("--lambda must be a number or `auto`, got {lambda_arg:?}"))?;
        (l, None)
    };

    let problem = SdpProblem::new(a, lambda, options)?;
    let sol = solve_sdp(&problem)?;
    let zhat_path = with_suffix(out, &format!("zhat.{}", format.extension()));
    io::write_matrix(&zhat_path, sol.z_hat.view(), format)?;
    io::write_json(
        with_suffix(out, "diagnostics.json"),
        &json!({
            "config": args,
            "h0": points.as_ref().map(|(_, f)| f.h0),
            "lambda": lambda,
            "lambda_selection": selection,
            "diagnostics": sol.diagnostics(lambda),
        }),
    )?;
    if sol.converged {
        Ok(Status::Ok)
    } else {
        Ok(Status::Warning(format!(
            "the dual solver stopped without a stationarity certificate (estimate {:.3e}); Ẑ was still written",
            sol.stationarity
        )))
    }
}

pub fn embed_cluster(flags: EmbedArgs) -> Result<Status> {
    let args = resolve(&flags, flags.config.as_deref())?;
    let zhat_path = existing_file(require(&args.zhat, "zhat")?)?;
    let out = require(&args.out, "out")?;
    writable_target(out)?;
    let method = args.method.unwrap_or(MethodName::Threshold);
    let raw = args.raw.unwrap_or(false);
    if raw && method != MethodName::Mst {
        bail!("--raw only applies to --method mst");
    }
    let raw_points = if raw {
        let data = existing_file(require(&args.data, "data")?)?;
        Some(io::read_dataset(data)?.points)
    } else {
        None
    };

    let z = io::read_matrix(zhat_path, matrix_format(args.format, zhat_path))?;
    let (r, c) = z.dim();
    if r != c || r == 0 {
        bail!("{}: expected a non-empty square matrix, got {r}×{c}", zhat_path.display());
    }
    let k_arg = args.k.clone().unwrap_or_else(|| "auto".into());
    let emb = if k_arg == "auto" {
        embed_auto(z.view(), default_max_k(r))?
    } else {
        let k: usize = k_arg
            .parse()
            .with_context(|| format!("--k must be a positive integer or `auto`, got {k_arg:?}"))?;
        embed_rows(z.view(), k)?
    };
    let labels = match method {
        MethodName::Threshold => threshold_graph_clusters(z.view())?,
        MethodName::Mst => match &raw_points {
            Some(p) => {
                if p.nrows() != r {
                    bail!("--data has {} rows but Ẑ is {r}×{r}", p.nrows());
                }
                mst_clusters(p.view(), emb.k_hat)?
            }
            None => mst_clusters(emb.coords.view(), emb.k_hat)?,
        },
    };
    io::write_labels(with_suffix(out, "labels.csv"), labels.labels())?;
    io::write_embedding(with_suffix(out, "embedding.csv"), emb.coords.view(), Some(labels.labels()))?;
    io::write_json(
        with_suffix(out, "report.json"),
        &json!({
            "config": args,
            "n": r,
            "k_hat": emb.k_hat,
            "clusters": labels.k(),
            "sizes": labels.sizes(),
        }),
    )?;
    Ok(Status::Ok)
}

pub fn experiment(args: ExperimentArgs) -> Result<Status> {
    let kind: ExperimentKind = require(&args.kind, "kind")?.parse()?;
    let config_path = existing_file(require(&args.config, "config")?)?;
    let out = require(&args.out, "out")?;
    writable_target(out)?;
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    if let Some(jobs) = args.jobs {
        config.jobs = jobs;
    }
    config.validate()?;
    let report = run_experiment(kind, &config)?;
    write_report(out, &report)?;
    print_json(&json!({ "kind": kind, "out": out, "summary": report.summary }))?;
    Ok(Status::Ok)
}
