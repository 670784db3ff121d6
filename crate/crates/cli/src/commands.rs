use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use salsa_core::data::{self, fmt_real, LoadOptions, TabularDataset, TargetColumn};
use salsa_core::kernels::{self, girard_newton_esp, EspKernelSpec, KernelVariant};
use salsa_core::linalg::DenseMatrix;
use salsa_core::modelselect::{search_order, LambdaGrid, OrderSearch};
use salsa_core::par::Parallelism;
use salsa_core::persist;
use salsa_core::salsa::{fit, mse, SalsaConfig, DEFAULT_BANDWIDTH_MULTIPLIER};
use salsa_core::shrink::{self, GroupKernelDesign, ShrinkConfig, Solver, Termination};
use salsa_core::synthetic::{
    self, additive_compose, sample_dataset_with, BumpFunctionSpec, SpamSetting2, TargetFunction,
};
use salsa_core::theory::{gamma_single, rate_band_check, EigendecayModel};

use crate::{CliError, CliResult, Command, InputArgs};

const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn run(cmd: Command, exec: Parallelism) -> CliResult<()> {
    match cmd {
        Command::Synth(a) => synth(a, exec),
        Command::Fit(a) => fit_cmd(a, exec),
        Command::Predict(a) => predict(a, exec),
        Command::Cv(a) => cv(a, exec),
        Command::Diag(a) => diag(a),
        Command::Shrink(a) => shrink_cmd(a, exec),
        Command::Bench(a) => bench(a),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn meta(pairs: &[(&str, String)]) -> Vec<(String, String)> {
    let mut m = vec![("version".to_string(), VERSION.to_string())];
    m.extend(pairs.iter().map(|(k, v)| (k.to_string(), v.clone())));
    m
}

fn write_csv(path: &Path, meta: &[(String, String)], header: &[&str], rows: Vec<Vec<String>>) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path).map_err(salsa_core::Error::from)?);
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    data::write_table(&mut w, meta, &header, rows)?;
    w.flush().map_err(salsa_core::Error::from)?;
    Ok(())
}

fn load(input: &InputArgs) -> CliResult<TabularDataset> {
    let opts = LoadOptions {
        target: input.target.as_deref().map_or(TargetColumn::Last, TargetColumn::parse),
        ..LoadOptions::default()
    };
    Ok(data::load_csv(&input.data, &opts)?.dataset)
}

fn parse_variant(s: &str) -> CliResult<KernelVariant> {
    KernelVariant::parse(s).ok_or_else(|| usage(format!("--variant: unknown kernel variant {s:?}")))
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator: bumps-additive, bumps-full or spam-setting2.
    #[arg(long = "gen")]
    generator: String,
    /// Ambient dimension.
    #[arg(long = "D")]
    dim: Option<usize>,
    /// Order of the additive components (bumps-additive).
    #[arg(long = "d")]
    order: Option<usize>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Output CSV; `.meta` (and `.truth` for spam-setting2) are written next to it.
    #[arg(long, default_value = "synth.csv")]
    out: PathBuf,
}

fn synth(a: SynthArgs, exec: Parallelism) -> CliResult<()> {
    let (target, truth): (Box<dyn TargetFunction>, Option<Vec<Vec<usize>>>) = match a.generator.as_str() {
        "bumps-additive" => {
            let dim = a.dim.ok_or_else(|| usage("--D is required for bumps-additive"))?;
            let order = a.order.ok_or_else(|| usage("--d is required for bumps-additive"))?;
            if order == 0 || order > dim {
                return Err(usage(format!("--d must be in 1..=D, got d={order}, D={dim}")));
            }
            let spec = BumpFunctionSpec::seeded(order, a.seed)?;
            (Box::new(additive_compose(&spec, dim)?), None)
        }
        "bumps-full" => {
            let dim = a.dim.ok_or_else(|| usage("--D is required for bumps-full"))?;
            (Box::new(BumpFunctionSpec::seeded(dim, a.seed)?), None)
        }
        "spam-setting2" => (Box::new(SpamSetting2), Some(synthetic::spam_true_groups())),
        other => {
            return Err(usage(format!(
                "--gen: unknown generator {other:?} (expected bumps-additive, bumps-full, spam-setting2)"
            )))
        }
    };
    let ds = sample_dataset_with(target.as_ref(), a.n, a.noise, a.seed, exec)?;
    let m = ds.metadata();
    data::save_csv(&ds.to_tabular()?, &a.out, &m)?;
    synthetic::write_metadata(&sidecar(&a.out, ".meta"), &m)?;
    if let Some(groups) = truth {
        let mut f = File::create(sidecar(&a.out, ".truth")).map_err(salsa_core::Error::from)?;
        writeln!(f, "# true groups, 0-based feature columns").map_err(salsa_core::Error::from)?;
        for g in groups {
            let s: Vec<String> = g.iter().map(usize::to_string).collect();
            writeln!(f, "{}", s.join(" ")).map_err(salsa_core::Error::from)?;
        }
    }
    println!(
        "n={} D={} generator={} seed={} out={}",
        ds.x.rows(),
        ds.x.cols(),
        ds.generator,
        ds.seed,
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Additive order d.
    #[arg(long = "d")]
    order: usize,
    /// Ridge coefficient; the system solved is (K + lambda*n*I) alpha = y.
    #[arg(long)]
    lambda: f64,
    /// Bandwidth multiplier c in h = c*sd*n^(-1/5).
    #[arg(long, default_value_t = DEFAULT_BANDWIDTH_MULTIPLIER)]
    c: f64,
    /// exact (order-d interactions only) or upto (orders 1..d).
    #[arg(long, default_value = "exact")]
    variant: String,
    #[arg(long, default_value = "model.txt")]
    model: PathBuf,
}

fn fit_cmd(a: FitArgs, exec: Parallelism) -> CliResult<()> {
    let ds = load(&a.input)?;
    let mut cfg = SalsaConfig::new(a.order, a.lambda);
    cfg.bandwidth_multiplier = a.c;
    cfg.variant = parse_variant(&a.variant)?;
    cfg.exec = exec;
    let model = fit(&ds.x, &ds.y, &cfg)?;
    persist::save_model(&model, &a.model)?;
    println!("train_mse={} jitter={}", fmt_real(model.train_mse), fmt_real(model.jitter));
    Ok(())
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Column to drop (and score against) before predicting.
    #[arg(long)]
    target: Option<String>,
    #[arg(long, default_value = "predictions.csv")]
    out: PathBuf,
}

fn predict(a: PredictArgs, exec: Parallelism) -> CliResult<()> {
    let model = persist::load_model(&a.model)?;
    let (x, y): (DenseMatrix, Option<Vec<f64>>) = match &a.target {
        Some(t) => {
            let ds = load(&InputArgs {
                data: a.data.clone(),
                target: Some(t.clone()),
            })?;
            (ds.x, Some(ds.y))
        }
        None => (data::load_matrix_csv(&a.data, b',')?.1, None),
    };
    if x.cols() != model.dim() {
        return Err(salsa_core::Error::DimensionMismatch {
            expected: model.dim(),
            got: x.cols(),
        }
        .into());
    }
    let pred = model.predict_with(&x, exec)?;
    let m = meta(&[("model", a.model.display().to_string()), ("n", pred.len().to_string())]);
    write_csv(&a.out, &m, &["prediction"], pred.iter().map(|v| vec![fmt_real(*v)]).collect())?;
    match y {
        Some(y) => println!("n={} mse={}", pred.len(), fmt_real(mse(&pred, &y)?)),
        None => println!("n={}", pred.len()),
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Largest additive order considered.
    #[arg(long)]
    max_order: Option<usize>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Consecutive non-improving orders before the search stops.
    #[arg(long, default_value_t = 1)]
    patience: usize,
    #[arg(long, default_value_t = 1e-6)]
    grid_min: f64,
    #[arg(long, default_value_t = 10.0)]
    grid_max: f64,
    #[arg(long, default_value_t = 13)]
    grid_size: usize,
    #[arg(long, default_value_t = DEFAULT_BANDWIDTH_MULTIPLIER)]
    c: f64,
    #[arg(long, default_value = "exact")]
    variant: String,
    #[arg(long, default_value = "cv_report.csv")]
    out: PathBuf,
    /// Refit the chosen (d, lambda) on all rows and save the model here.
    #[arg(long)]
    model: Option<PathBuf>,
}

fn cv(a: CvArgs, exec: Parallelism) -> CliResult<()> {
    if a.folds < 2 {
        return Err(usage(format!("--folds must be at least 2, got {}", a.folds)));
    }
    let ds = load(&a.input)?;
    let max_order = a.max_order.unwrap_or(ds.n_features());
    let mut search = OrderSearch::new(max_order, a.folds, a.seed);
    search.patience = a.patience;
    search.grid = LambdaGrid::log_spaced(a.grid_min, a.grid_max, a.grid_size)?;
    let mut base = SalsaConfig::new(1, 1.0);
    base.bandwidth_multiplier = a.c;
    base.variant = parse_variant(&a.variant)?;
    base.exec = exec;
    let report = search_order(&ds.x, &ds.y, &search, &base)?;
    let m = meta(&[
        ("seed", a.seed.to_string()),
        ("folds", a.folds.to_string()),
        ("max_order", max_order.to_string()),
        ("c", fmt_real(a.c)),
        ("variant", base.variant.name().to_string()),
        ("chosen_d", report.chosen_order.to_string()),
        ("chosen_lambda", fmt_real(report.chosen_lambda)),
        ("chosen_mse", fmt_real(report.chosen_mse)),
    ]);
    let rows = report
        .rows()
        .into_iter()
        .map(|(d, l, e, s)| vec![d.to_string(), fmt_real(l), fmt_real(e), fmt_real(s)])
        .collect();
    write_csv(&a.out, &m, &["d", "lambda", "cv_mse", "std_err"], rows)?;
    println!(
        "chosen d={} lambda={} cv_mse={} evaluated_orders={:?}",
        report.chosen_order,
        fmt_real(report.chosen_lambda),
        fmt_real(report.chosen_mse),
        report.evaluated_orders()
    );
    if let Some(path) = &a.model {
        let cfg = base.with_order(report.chosen_order).with_lambda(report.chosen_lambda);
        let model = fit(&ds.x, &ds.y, &cfg)?;
        persist::save_model(&model, path)?;
        println!("train_mse={} jitter={}", fmt_real(model.train_mse), fmt_real(model.jitter));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct DiagArgs {
    /// Eigendecay family: polynomial or gaussian.
    #[arg(long, default_value = "polynomial")]
    kind: String,
    /// Smoothness s (polynomial).
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    s: f64,
    /// Order d of the component kernels.
    #[arg(long = "d", default_value_t = 2)]
    order: usize,
    /// Eigenvalue scale C (polynomial).
    #[arg(long = "C", default_value_t = 1.0, allow_negative_numbers = true)]
    scale: f64,
    /// pi-tilde (gaussian); defaults to sqrt(2*pi).
    #[arg(long, allow_negative_numbers = true)]
    pi_tilde: Option<f64>,
    /// Exponent rate alpha (gaussian).
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, default_value_t = 100)]
    n_min: usize,
    #[arg(long, default_value_t = 1_000_000)]
    n_max: usize,
    /// Grid points per decade of n.
    #[arg(long, default_value_t = 2)]
    per_decade: usize,
    /// Ambient dimension D; adds the M_d * gamma column.
    #[arg(long = "D")]
    dim: Option<usize>,
    #[arg(long, default_value = "diag.csv")]
    out: PathBuf,
}

fn diag(a: DiagArgs) -> CliResult<()> {
    let model = match a.kind.as_str() {
        "polynomial" => EigendecayModel::Polynomial {
            smoothness: a.s,
            order: a.order,
            scale: a.scale,
        },
        "gaussian" => EigendecayModel::GaussianType {
            pi_tilde: a.pi_tilde.unwrap_or((2.0 * std::f64::consts::PI).sqrt()),
            alpha: a.alpha,
            order: a.order,
        },
        other => return Err(usage(format!("--kind: unknown model {other:?} (polynomial, gaussian)"))),
    };
    model.validate()?;
    if a.n_min < 2 || a.n_max < a.n_min || a.per_decade == 0 {
        return Err(usage("need 2 <= --n-min <= --n-max and --per-decade >= 1"));
    }
    let mut ns: Vec<usize> = vec![];
    let (lo, hi) = ((a.n_min as f64).log10(), (a.n_max as f64).log10());
    let steps = ((hi - lo) * a.per_decade as f64).round() as usize;
    for k in 0..=steps {
        let n = 10f64.powf(lo + (hi - lo) * k as f64 / steps.max(1) as f64).round() as usize;
        if ns.last() != Some(&n) {
            ns.push(n);
        }
    }
    let band = rate_band_check(&model, &ns)?;
    let m_d = match a.dim {
        Some(dim) => Some(salsa_core::theory::component_count(dim, a.order)? as f64),
        None => None,
    };
    let mut rows = vec![];
    for i in 0..ns.len() {
        let r = gamma_single(&model, band.lambdas[i])?;
        let mut row = vec![
            ns[i].to_string(),
            fmt_real(band.lambdas[i]),
            fmt_real(band.gammas[i]),
            fmt_real(r.lower()),
            fmt_real(r.upper()),
            fmt_real(band.ratios[i]),
        ];
        if let Some(m) = m_d {
            row.push(fmt_real(m * band.gammas[i]));
        }
        rows.push(row);
    }
    let mut header = vec!["n", "lambda", "gamma", "gamma_lower", "gamma_upper", "ratio"];
    if m_d.is_some() {
        header.push("gamma_sum");
    }
    let m = meta(&[
        ("kind", a.kind.clone()),
        ("d", a.order.to_string()),
        ("band_factor", fmt_real(band.band_factor())),
    ]);
    write_csv(&a.out, &m, &header, rows)?;
    println!("rows={} band_factor={}", ns.len(), fmt_real(band.band_factor()));
    Ok(())
}

#[derive(Debug, Args)]
pub struct ShrinkArgs {
    #[command(flatten)]
    input: InputArgs,
    /// File of true groups (one per line, 0-based columns) for TPR/FPR.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Candidate groups: all (singletons and pairs), singletons, or screened.
    #[arg(long, default_value = "all")]
    groups: String,
    /// Screened design: leading coordinates whose pairs are all included.
    #[arg(long, default_value_t = 12)]
    leading: usize,
    /// Screened design: number of random extra pairs.
    #[arg(long, default_value_t = 54)]
    decoys: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// subgradient, proxgrad, bcgd or exact-bcd.
    #[arg(long, default_value = "proxgrad")]
    solver: String,
    /// Nesterov acceleration for proxgrad.
    #[arg(long)]
    accel: bool,
    #[arg(long, default_value_t = 1e-3)]
    lambda1: f64,
    /// Group penalty; ignored when --path is given.
    #[arg(long)]
    lambda2: Option<f64>,
    /// Number of lambda2 values on a log path from lambda_max down.
    #[arg(long)]
    path: Option<usize>,
    /// Smallest path value as a fraction of lambda_max.
    #[arg(long, default_value_t = 1e-3)]
    path_min_ratio: f64,
    #[arg(long, default_value_t = DEFAULT_BANDWIDTH_MULTIPLIER)]
    c: f64,
    /// Pivoted-Cholesky tolerance for low-rank group kernels; 0 keeps them dense.
    #[arg(long, default_value_t = 1e-10)]
    rank_tol: f64,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    /// Groups with coefficient norm above this count as selected.
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    /// Exit with status 3 when the iteration limit is hit.
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value = "shrink_trace.csv")]
    out_trace: PathBuf,
    #[arg(long, default_value = "shrink_groups.csv")]
    out_groups: PathBuf,
}

fn read_truth(path: &Path) -> CliResult<Vec<Vec<usize>>> {
    let text = std::fs::read_to_string(path).map_err(salsa_core::Error::from)?;
    let mut out = vec![];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut g = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| usage(format!("--truth line {}: expected column indices", i + 1)))?;
        g.sort_unstable();
        out.push(g);
    }
    Ok(out)
}

fn shrink_cmd(a: ShrinkArgs, exec: Parallelism) -> CliResult<()> {
    let solver = match (a.solver.as_str(), a.accel) {
        ("proxgrad", true) => Solver::AccelProxGrad,
        (_, true) => return Err(usage("--accel only applies to --solver proxgrad")),
        (s, false) => Solver::parse(s).ok_or_else(|| usage(format!("--solver: unknown solver {s:?}")))?,
    };
    if a.path.is_none() && a.lambda2.is_none() {
        return Err(usage("give --lambda2 or --path"));
    }
    let ds = load(&a.input)?;
    let dim = ds.n_features();
    let groups = match a.groups.as_str() {
        "all" => synthetic::singleton_and_pair_groups(dim),
        "singletons" => (0..dim).map(|i| vec![i]).collect(),
        "screened" => synthetic::screened_groups(dim, a.leading, a.decoys, a.seed)?,
        other => return Err(usage(format!("--groups: unknown design {other:?}"))),
    };
    let truth_idx = match &a.truth {
        Some(p) => {
            let t = read_truth(p)?;
            let idx = t
                .iter()
                .map(|g| {
                    groups
                        .iter()
                        .position(|c| c == g)
                        .ok_or_else(|| usage(format!("--truth: group {g:?} is not a candidate")))
                })
                .collect::<CliResult<Vec<usize>>>()?;
            Some(idx)
        }
        None => None,
    };
    let design: GroupKernelDesign = if a.rank_tol > 0.0 {
        shrink::build_group_design_low_rank(&ds.x, &ds.y, &groups, a.c, a.rank_tol, exec)?
    } else {
        shrink::build_group_design(&ds.x, &ds.y, &groups, a.c, exec)?
    };
    let mut cfg = ShrinkConfig::new(solver, a.lambda1, a.lambda2.unwrap_or(0.0));
    cfg.max_iter = a.max_iter;
    cfg.tol = a.tol;
    cfg.exec = exec;
    cfg.validate()?;
    let lmax = design.lambda_max();
    let base_meta = [
        ("solver", solver.name().to_string()),
        ("groups", groups.len().to_string()),
        ("design", a.groups.clone()),
        ("lambda1", fmt_real(a.lambda1)),
        ("lambda_max", fmt_real(lmax)),
        ("c", fmt_real(a.c)),
        ("seed", a.seed.to_string()),
    ];
    let group_name = |j: usize| groups[j].iter().map(usize::to_string).collect::<Vec<_>>().join(" ");

    if let Some(points) = a.path {
        if points == 0 || !(a.path_min_ratio > 0.0 && a.path_min_ratio < 1.0) {
            return Err(usage("--path needs >= 1 point and --path-min-ratio in (0,1)"));
        }
        let grid: Vec<f64> = (0..points)
            .map(|k| lmax * a.path_min_ratio.powf(k as f64 / (points.max(2) - 1) as f64))
            .collect();
        let path = shrink::lambda_path(&design, &cfg, &grid)?;
        let mut rows = vec![];
        let mut hit_limit = false;
        for k in 0..grid.len() {
            let sel: Vec<usize> = (0..groups.len()).filter(|&j| path.norms[k][j] > a.tau).collect();
            let (tpr, fpr) = match &truth_idx {
                Some(t) => {
                    let r = shrink::support_rates(&sel, t, groups.len());
                    (fmt_real(r.0), fmt_real(r.1))
                }
                None => (String::new(), String::new()),
            };
            hit_limit |= path.terminations[k] == Termination::MaxIterations;
            println!(
                "lambda2={} selected={} tpr={} fpr={} iterations={}",
                fmt_real(grid[k]),
                sel.len(),
                if tpr.is_empty() { "-" } else { &tpr },
                if fpr.is_empty() { "-" } else { &fpr },
                path.iterations[k]
            );
            rows.push(vec![
                fmt_real(grid[k]),
                sel.len().to_string(),
                tpr,
                fpr,
                fmt_real(path.objectives[k]),
                path.iterations[k].to_string(),
                sel.iter().map(|&j| group_name(j)).collect::<Vec<_>>().join(";"),
            ]);
        }
        write_csv(
            &a.out_groups,
            &meta(&base_meta),
            &["lambda2", "n_selected", "tpr", "fpr", "objective", "iterations", "selected"],
            rows,
        )?;
        if hit_limit {
            if a.strict {
                return Err(CliError::NotConverged(a.max_iter));
            }
            eprintln!("warning: some path points hit the iteration limit; reporting the last iterate");
        }
        return Ok(());
    }

    let trace = shrink::solve(&design, &cfg)?;
    let rows = (0..trace.objectives.len())
        .map(|k| {
            vec![
                k.to_string(),
                fmt_real(trace.objectives[k]),
                fmt_real(trace.best_objectives[k]),
                fmt_real(trace.elapsed[k]),
            ]
        })
        .collect();
    let mut m = meta(&base_meta);
    m.push(("lambda2".into(), fmt_real(cfg.lambda2)));
    write_csv(&a.out_trace, &m, &["iteration", "objective", "best_objective", "seconds"], rows)?;
    let norms = trace.alpha.group_norms();
    let sel: Vec<usize> = (0..groups.len()).filter(|&j| norms[j] > a.tau).collect();
    let grows = sel.iter().map(|&j| vec![j.to_string(), group_name(j), fmt_real(norms[j])]).collect();
    write_csv(&a.out_groups, &m, &["index", "group", "norm"], grows)?;
    let rates = truth_idx
        .as_ref()
        .map(|t| shrink::support_rates(&sel, t, groups.len()))
        .map(|(t, f)| format!(" tpr={} fpr={}", fmt_real(t), fmt_real(f)))
        .unwrap_or_default();
    println!(
        "objective={} iterations={} selected={}{rates}",
        fmt_real(trace.final_objective()),
        trace.iterations(),
        sel.len()
    );
    if trace.termination == Termination::MaxIterations {
        if a.strict {
            return Err(CliError::NotConverged(trace.iterations()));
        }
        eprintln!("warning: iteration limit reached; reporting the best iterate");
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated sample sizes.
    #[arg(long, default_value = "200", value_delimiter = ',')]
    n_grid: Vec<usize>,
    /// Comma-separated ambient dimensions.
    #[arg(long = "D-grid", default_value = "16,32,64", value_delimiter = ',')]
    dim_grid: Vec<usize>,
    /// Comma-separated orders.
    #[arg(long = "d-grid", default_value = "4", value_delimiter = ',')]
    order_grid: Vec<usize>,
    /// Timed repetitions per cell (the minimum is reported).
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Recurrence calls per timing.
    #[arg(long, default_value_t = 10_000)]
    calls: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
}

fn min_time(reps: usize, mut f: impl FnMut() -> CliResult<()>) -> CliResult<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..reps {
        let t = Instant::now();
        f()?;
        best = best.min(t.elapsed().as_secs_f64());
    }
    Ok(best)
}

fn bench(a: BenchArgs) -> CliResult<()> {
    if a.n_grid.is_empty() || a.dim_grid.is_empty() || a.order_grid.is_empty() || a.reps == 0 || a.calls == 0 {
        return Err(usage("grids must be nonempty and --reps, --calls positive"));
    }
    for &d in &a.order_grid {
        for &dim in &a.dim_grid {
            if d == 0 || d > dim {
                return Err(usage(format!("order d={d} must be in 1..=D for every D (D={dim})")));
            }
        }
    }
    if a.n_grid.iter().any(|&n| n < 2) {
        return Err(usage("--n-grid values must be at least 2"));
    }
    let mut rows = vec![];
    for &n in &a.n_grid {
        for &d in &a.order_grid {
            let mut prev: Option<f64> = None;
            for &dim in &a.dim_grid {
                let x = random_inputs(n, dim, a.seed);
                let spec = EspKernelSpec::new(d, vec![1.0; dim], 1.0, KernelVariant::ExactOrder)?;
                let assembly = min_time(a.reps, || {
                    std::hint::black_box(kernels::kernel_matrix(&x, &spec, Parallelism::Sequential)?);
                    Ok(())
                })?;
                let s: Vec<f64> = x.row(0).iter().map(|v| (-0.5 * v * v).exp()).collect();
                let gn = min_time(a.reps, || {
                    for _ in 0..a.calls {
                        std::hint::black_box(girard_newton_esp(std::hint::black_box(&s), d)?);
                    }
                    Ok(())
                })? / a.calls as f64;
                let ratio = prev.map(|p| assembly / p);
                println!(
                    "n={n} D={dim} d={d} assembly_s={assembly:.6} recurrence_s={gn:.3e} D_ratio={}",
                    ratio.map_or("-".to_string(), |r| format!("{r:.3}"))
                );
                rows.push(vec![
                    n.to_string(),
                    dim.to_string(),
                    d.to_string(),
                    fmt_real(assembly),
                    fmt_real(gn),
                    ratio.map(fmt_real).unwrap_or_default(),
                ]);
                prev = Some(assembly);
            }
        }
    }
    let m = meta(&[("seed", a.seed.to_string()), ("reps", a.reps.to_string())]);
    write_csv(&a.out, &m, &["n", "D", "d", "assembly_seconds", "recurrence_seconds", "D_ratio"], rows)?;
    Ok(())
}

/// Uniform inputs on [-1, 1) from the dataset row streams.
fn random_inputs(n: usize, dim: usize, seed: u64) -> DenseMatrix {
    use rand::Rng;
    let mut data = Vec::with_capacity(n * dim);
    for i in 0..n {
        let mut rng = synthetic::row_stream(seed, i);
        data.extend((0..dim).map(|_| rng.random_range(-1.0..1.0)));
    }
    DenseMatrix::new(n, dim, data).expect("finite inputs")
}
