//! `eigenpro` command-line tool.
//!
//! Subcommands: `train`, `eval`, `bench`, `analyze`, `reach-demo`. All
//! outputs are CSV; all randomness flows from `--seed`. Exit codes: 0
//! success, 1 usage or configuration error, 2 data error, 3 numeric failure.

mod model_io;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use eigenpro::data::{load_csv, load_libsvm, one_hot, Dataset};
use eigenpro::eigensolver::kernel_eigensystem;
use eigenpro::features::{FeatureMap, RbfMap, RffMap};
use eigenpro::kernels::{KernelFamily, KernelSpec};
use eigenpro::optimizer::{
    eigenpro_kernel_sgd, eigenpro_linear_sgd, EtaRule, TrainConfig, TrainReport,
};
use eigenpro::reach::{heaviside_demo, spectrum_report};
use eigenpro::seed::derive_seed;
use eigenpro::Error;
use model_io::{load_model, save_model, SavedModel};

#[derive(Parser)]
#[command(name = "eigenpro", version, about = "Preconditioned SGD for kernel least squares")]
struct Cli {
    /// Worker threads for numeric parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model and write the model file and per-epoch report.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset.
    Eval(EvalArgs),
    /// Compare EigenPro against plain SGD on the same data and seed.
    Bench(BenchArgs),
    /// Report kernel eigenspectrum ratios for a dataset.
    Analyze(AnalyzeArgs),
    /// Closed-form heat-kernel/step-function reconstruction demo.
    ReachDemo(ReachDemoArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Training data (CSV, or libsvm if the path ends in .svm/.libsvm).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Comma-separated target column indices, or "last".
    #[arg(long)]
    targets: Option<String>,
    /// Skip the first line of CSV input.
    #[arg(long)]
    header: bool,
    /// CSV field delimiter.
    #[arg(long)]
    delimiter: Option<char>,
    /// "regression" (default) or "classification" (integer labels, one-hot).
    #[arg(long)]
    task: Option<String>,
}

#[derive(Args, Clone)]
struct TrainArgs {
    /// Key=value config file; command-line flags win on conflict.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Held-out evaluation data.
    #[arg(long)]
    eval: Option<PathBuf>,
    /// primal-kernel | rff | rbf | linear
    #[arg(long)]
    mode: Option<String>,
    /// gaussian | laplace | cauchy
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Eigen-directions for the preconditioner (0 = plain SGD).
    #[arg(long)]
    k: Option<usize>,
    /// Eigensolver subsample size.
    #[arg(long = "m-sub")]
    m_sub: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// auto-bound | auto-heuristic | a number
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Feature count for rff/rbf modes.
    #[arg(long = "feature-dim")]
    feature_dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Failure probability for the auto-bound step size.
    #[arg(long)]
    delta: Option<f64>,
    /// Stop early once train loss reaches this level.
    #[arg(long = "loss-target")]
    loss_target: Option<f64>,
    #[arg(long = "out-model")]
    out_model: Option<PathBuf>,
    #[arg(long = "out-report")]
    out_report: Option<PathBuf>,
    /// Include wall-clock seconds in the report (breaks byte-for-byte
    /// reproducibility of the CSV).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    common: DataArgs,
    /// Write predictions here as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Train loss both methods race toward.
    #[arg(long = "target-loss")]
    target_loss: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    common: DataArgs,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    bandwidth: f64,
    /// Comma-separated preconditioner sizes to report ratios for.
    #[arg(long = "k-list")]
    k_list: String,
    #[arg(long = "m-sub")]
    m_sub: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReachDemoArgs {
    /// Heat-kernel bandwidth.
    #[arg(long, default_value_t = 0.5)]
    s: f64,
    /// Comma-separated iteration counts.
    #[arg(long = "t-list", default_value = "100,1000000")]
    t_list: String,
    /// Number of harmonics.
    #[arg(long, default_value_t = 200)]
    j: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap uses exit code 2 by default; this tool reserves 2 for data
            // errors, so usage problems (and --help/--version) remap
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            eprintln!("error: thread pool already initialized");
            return ExitCode::from(1);
        }
    }
    let result = match cli.cmd {
        Cmd::Train(args) => cmd_train(&args).map(|_| ()),
        Cmd::Eval(args) => cmd_eval(&args),
        Cmd::Bench(args) => cmd_bench(&args),
        Cmd::Analyze(args) => cmd_analyze(&args),
        Cmd::ReachDemo(args) => cmd_reach_demo(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Parse { .. } | Error::NonFinite { .. } => 2,
        Error::Divergence { .. } | Error::DegenerateInput(_) => 3,
        Error::InvalidInput(_) | Error::DimensionMismatch { .. } => 1,
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

// ---- config-file handling ----

struct Settings(HashMap<String, String>);

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self, Error> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: "expected key=value".into(),
                })?;
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Settings(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, Error> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| usage(format!("config key {key:?}: cannot parse {raw:?}"))),
        }
    }
}

fn resolve<T: FromStr + Clone>(
    flag: &Option<T>,
    file: &Settings,
    key: &str,
    default: T,
) -> Result<T, Error> {
    if let Some(v) = flag {
        return Ok(v.clone());
    }
    Ok(file.get(key)?.unwrap_or(default))
}

fn resolve_opt<T: FromStr + Clone>(
    flag: &Option<T>,
    file: &Settings,
    key: &str,
) -> Result<Option<T>, Error> {
    if let Some(v) = flag {
        return Ok(Some(v.clone()));
    }
    file.get(key)
}

// ---- data loading ----

fn parse_targets(spec: &str, width: usize) -> Result<Vec<usize>, Error> {
    if spec == "last" {
        if width == 0 {
            return Err(usage("cannot take last column of an empty table"));
        }
        return Ok(vec![width - 1]);
    }
    spec.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| usage(format!("bad target column {t:?}")))
        })
        .collect()
}

fn column_count(path: &Path, delimiter: char, has_header: bool) -> Result<usize, Error> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if has_header {
        lines.next();
    }
    match lines.next() {
        Some(line) => Ok(line.split(delimiter).count()),
        None => Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: "file contains no data rows".into(),
        }),
    }
}

fn load_dataset(path: &Path, common: &DataArgs, settings: &Settings) -> Result<Dataset, Error> {
    let is_libsvm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e == "svm" || e == "libsvm");
    let delimiter = resolve(&common.delimiter, settings, "delimiter", ',')?;
    let header = common.header || settings.get::<bool>("header")?.unwrap_or(false);
    let task = resolve(
        &common.task,
        settings,
        "task",
        "regression".to_string(),
    )?;
    let mut ds = if is_libsvm {
        load_libsvm(path)?
    } else {
        let width = column_count(path, delimiter, header)?;
        let targets_spec = resolve(&common.targets, settings, "targets", "last".to_string())?;
        let targets = parse_targets(&targets_spec, width)?;
        load_csv(path, &targets, header, delimiter)?
    };
    match task.as_str() {
        "regression" => {}
        "classification" => {
            if ds.y.ncols() != 1 {
                return Err(usage("classification expects a single label column"));
            }
            let mut labels = Vec::with_capacity(ds.y.nrows());
            for i in 0..ds.y.nrows() {
                let v = ds.y[(i, 0)];
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(usage(format!(
                        "classification labels must be nonnegative integers, got {v}"
                    )));
                }
                labels.push(v as usize);
            }
            let classes = labels.iter().copied().max().unwrap_or(0) + 1;
            ds.y = one_hot(&labels, classes)?;
        }
        other => return Err(usage(format!("unknown task {other:?}"))),
    }
    Ok(ds)
}

// ---- train ----

struct ResolvedTrain {
    mode: String,
    spec: Option<KernelSpec>,
    feature_dim: usize,
    config: TrainConfig,
}

fn resolve_train(args: &TrainArgs, settings: &Settings, n: usize, input_dim: usize) -> Result<ResolvedTrain, Error> {
    let mode = resolve(&args.mode, settings, "mode", "primal-kernel".to_string())?;
    let needs_kernel = matches!(mode.as_str(), "primal-kernel" | "rbf");
    let spec = if needs_kernel || args.kernel.is_some() || settings.0.contains_key("kernel") {
        let family = resolve(&args.kernel, settings, "kernel", "gaussian".to_string())?;
        let bandwidth = resolve_opt(&args.bandwidth, settings, "bandwidth")?
            .ok_or_else(|| usage("--bandwidth is required for kernel-based modes"))?;
        Some(KernelSpec::new(KernelFamily::parse(&family)?, bandwidth)?)
    } else {
        None
    };
    if mode == "rff" && spec.is_none() && resolve_opt(&args.bandwidth, settings, "bandwidth")?.is_none() {
        return Err(usage("--bandwidth is required for rff mode"));
    }

    let defaults = TrainConfig::defaults();
    let default_tau = if mode == "primal-kernel" { 1.0 } else { 0.25 };
    let eta_raw = resolve(&args.eta, settings, "eta", "auto-bound".to_string())?;
    let eta = match eta_raw.as_str() {
        "auto-bound" => EtaRule::AutoBound,
        "auto-heuristic" => EtaRule::AutoHeuristic,
        num => EtaRule::Fixed(
            num.parse()
                .map_err(|_| usage(format!("bad eta {num:?}; expected auto-bound, auto-heuristic, or a number")))?,
        ),
    };
    let feature_dim = resolve(&args.feature_dim, settings, "feature-dim", 1000)?;
    let model_dim = match mode.as_str() {
        "primal-kernel" => n,
        "linear" => input_dim,
        "rff" | "rbf" => feature_dim,
        other => return Err(usage(format!("unknown mode {other:?}"))),
    };

    // clamp structural sizes to the dataset at hand
    let m_sub = resolve(&args.m_sub, settings, "m-sub", defaults.m_sub)?.min(n);
    let k_cap = m_sub.min(model_dim).saturating_sub(1);
    let k = resolve(&args.k, settings, "k", defaults.k)?.min(k_cap);
    let batch = resolve(&args.batch, settings, "batch", defaults.batch)?.min(n);

    let config = TrainConfig {
        k,
        m_sub,
        batch,
        tau: resolve(&args.tau, settings, "tau", default_tau)?,
        eta,
        epochs: resolve(&args.epochs, settings, "epochs", defaults.epochs)?,
        seed: resolve(&args.seed, settings, "seed", defaults.seed)?,
        delta: resolve(&args.delta, settings, "delta", defaults.delta)?,
        loss_target: resolve_opt(&args.loss_target, settings, "loss-target")?,
    };
    Ok(ResolvedTrain {
        mode,
        spec,
        feature_dim,
        config,
    })
}

fn run_train(
    args: &TrainArgs,
    override_k: Option<usize>,
) -> Result<(SavedModel, TrainReport), Error> {
    let settings = Settings::load(args.config.as_deref())?;
    let train_path = args
        .data
        .train
        .clone()
        .or(settings.get::<PathBuf>("train")?)
        .ok_or_else(|| usage("--train is required"))?;
    let ds = load_dataset(&train_path, &args.data, &settings)?;
    let eval_ds = match args.eval.clone().or(settings.get::<PathBuf>("eval")?) {
        Some(path) => Some(load_dataset(&path, &args.data, &settings)?),
        None => None,
    };
    let mut resolved = resolve_train(args, &settings, ds.len(), ds.x.ncols())?;
    if let Some(k) = override_k {
        resolved.config.k = k;
    }
    let config = &resolved.config;

    match resolved.mode.as_str() {
        "primal-kernel" => {
            let spec = resolved.spec.expect("kernel spec resolved for primal mode");
            let eval_pair = eval_ds.as_ref().map(|e| (&e.x, &e.y));
            let (model, report) = eigenpro_kernel_sgd(&spec, &ds.x, &ds.y, eval_pair, config)?;
            Ok((SavedModel::Kernel(model), report))
        }
        "linear" => {
            let eval_pair = eval_ds.as_ref().map(|e| (&e.x, &e.y));
            let (model, report) = eigenpro_linear_sgd(&ds.x, &ds.y, eval_pair, config)?;
            Ok((SavedModel::Linear(model), report))
        }
        "rff" | "rbf" => {
            let map = if resolved.mode == "rff" {
                let settings_bw = resolve_opt(&args.bandwidth, &settings, "bandwidth")?
                    .or(resolved.spec.map(|s| s.bandwidth()))
                    .ok_or_else(|| usage("--bandwidth is required for rff mode"))?;
                FeatureMap::Rff(RffMap::new(
                    ds.x.ncols(),
                    resolved.feature_dim,
                    settings_bw,
                    derive_seed(config.seed, "feature-map"),
                )?)
            } else {
                let spec = resolved.spec.expect("kernel spec resolved for rbf mode");
                FeatureMap::Rbf(RbfMap::from_training(
                    &ds.x,
                    resolved.feature_dim,
                    spec,
                    derive_seed(config.seed, "rbf-centers"),
                )?)
            };
            let phi = map.apply_matrix(&ds.x)?;
            let phi_eval = match &eval_ds {
                Some(e) => Some((map.apply_matrix(&e.x)?, e.y.clone())),
                None => None,
            };
            let eval_pair = phi_eval.as_ref().map(|(x, y)| (x, y));
            let (mut model, report) = eigenpro_linear_sgd(&phi, &ds.y, eval_pair, config)?;
            model.feature_map = Some(map);
            Ok((SavedModel::Linear(model), report))
        }
        other => Err(usage(format!("unknown mode {other:?}"))),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn cmd_train(args: &TrainArgs) -> Result<(SavedModel, TrainReport), Error> {
    let (model, report) = run_train(args, None)?;
    if let Some(path) = &args.out_model {
        save_model(&model, path)?;
    }
    if let Some(path) = &args.out_report {
        write_text(path, &report.to_csv(args.timing))?;
    }
    match report.records.last() {
        Some(last) => {
            print!("epochs={} train_loss={}", last.epoch, last.train_loss);
            if let Some(e) = last.eval_loss {
                print!(" eval_loss={e}");
            }
            if let Some(m) = last.metric {
                print!(" metric={m}");
            }
            println!(" eta={}", report.eta);
        }
        None => println!("epochs=0 (model left at zero) eta={}", report.eta),
    }
    Ok((model, report))
}

// ---- eval ----

fn cmd_eval(args: &EvalArgs) -> Result<(), Error> {
    let settings = Settings::load(None)?;
    let model = load_model(&args.model)?;
    let ds = load_dataset(&args.data, &args.common, &settings)?;
    let pred = model.predict(&ds.x)?;
    let loss = eigenpro::optimizer::mse(&pred, &ds.y)?;
    print!("eval_loss={loss}");
    if ds.y.ncols() > 1 {
        println!(" c_error={}", eigenpro::optimizer::c_error(&pred, &ds.y)?);
    } else {
        println!();
    }
    if let Some(out) = &args.out {
        let mut text = String::new();
        for i in 0..pred.nrows() {
            for j in 0..pred.ncols() {
                if j > 0 {
                    text.push(',');
                }
                text.push_str(&format!("{}", pred[(i, j)]));
            }
            text.push('\n');
        }
        write_text(out, &text)?;
    }
    Ok(())
}

// ---- bench ----

fn cmd_bench(args: &BenchArgs) -> Result<(), Error> {
    if !(args.target_loss > 0.0) {
        return Err(usage("--target-loss must be positive"));
    }
    let mut train_args = args.train.clone();
    train_args.loss_target = Some(args.target_loss);

    let (_, fast) = run_train(&train_args, None)?;
    let (_, plain) = run_train(&train_args, Some(0))?;

    let summarize = |r: &TrainReport| -> (Option<usize>, f64) {
        let reached = r.epochs_to_target(args.target_loss);
        let secs = r.records.iter().map(|rec| rec.seconds).sum::<f64>()
            / r.records.len().max(1) as f64;
        (reached, secs)
    };
    let (fast_epochs, fast_secs) = summarize(&fast);
    let (plain_epochs, plain_secs) = summarize(&plain);

    let fmt_epochs = |e: Option<usize>| match e {
        Some(e) => e.to_string(),
        None => "not reached".to_string(),
    };
    let mut out = String::from("method,epochs_to_target,mean_epoch_seconds\n");
    out.push_str(&format!("eigenpro,{},{}\n", fmt_epochs(fast_epochs), fast_secs));
    out.push_str(&format!("plain-sgd,{},{}\n", fmt_epochs(plain_epochs), plain_secs));
    print!("{out}");
    match (fast_epochs, plain_epochs) {
        (Some(f), Some(p)) if f > 0 => {
            println!("epoch_ratio={}", p as f64 / f as f64);
        }
        _ => println!("epoch_ratio=n/a"),
    }
    println!("per_epoch_overhead={}", fast_secs / plain_secs - 1.0);
    if let Some(path) = &args.out {
        write_text(path, &out)?;
    }
    Ok(())
}

// ---- analyze ----

fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), Error> {
    let settings = Settings::load(None)?;
    let ds = load_dataset(&args.data, &args.common, &settings)?;
    let family = KernelFamily::parse(args.kernel.as_deref().unwrap_or("gaussian"))?;
    let spec = KernelSpec::new(family, args.bandwidth)?;
    let k_list: Vec<usize> = args
        .k_list
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| usage(format!("bad k {t:?}"))))
        .collect::<Result<_, _>>()?;
    let k_max = k_list.iter().copied().max().ok_or_else(|| usage("empty k list"))?;
    let m_sub = args.m_sub.unwrap_or(ds.len()).min(ds.len());
    let es = kernel_eigensystem(&spec, &ds.x, k_max + 1, m_sub, args.seed.unwrap_or(0))?;
    let rows = spectrum_report(&es, &k_list)?;
    let mut out = String::from("k,lambda_top,lambda_next,ratio\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.k, r.lambda_top, r.lambda_next, r.ratio));
    }
    print!("{out}");
    if let Some(path) = &args.out {
        write_text(path, &out)?;
    }
    Ok(())
}

// ---- reach-demo ----

fn cmd_reach_demo(args: &ReachDemoArgs) -> Result<(), Error> {
    let t_list: Vec<u64> = args
        .t_list
        .split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|_| usage(format!("bad t {t:?}"))))
        .collect::<Result<_, _>>()?;
    let demo = heaviside_demo(args.s, &t_list, args.j)?;
    let mut out = String::from("t,error,truncation_error\n");
    for (t, e) in demo.t_steps.iter().zip(&demo.errors) {
        out.push_str(&format!("{t},{e},{}\n", demo.truncation_error));
    }
    print!("{out}");
    if let Some(path) = &args.out {
        write_text(path, &out)?;
    }
    Ok(())
}
