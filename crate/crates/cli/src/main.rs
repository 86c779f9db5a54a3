//! Command-line front end for the subspace classifier library.
//!
//! Four subcommands cover the full workflow: `synth` writes a synthetic
//! image-set dataset to disk, `train` fits a model and saves it together
//! with its training history, `eval` scores a saved model on a dataset,
//! and `gradcheck` compares the analytic gradients of a randomly built
//! model against central finite differences.
//!
//! Every run is deterministic given its seed. A config file with
//! `key = value` lines can supply any flag of the invoked subcommand;
//! explicit flags win over the config, which wins over built-in defaults.
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use glmsm_core::data::{
    generate_synthetic, load_dataset, prepare_inputs, save_dataset, DataError, InputMode, SynthSpec,
};
use glmsm_core::manifold::OrthonormalBasis;
use glmsm_core::model::{ModelError, SavedModel};
use glmsm_core::mutual::{
    Activation, HeadConfig, HeadKind, MutualError, RefMode, ReferenceBank, SetInput, TauMode,
};
use glmsm_core::train::{
    evaluate, grad_check, init_bank, train, BankInit, Optimizer, TrainConfig, TrainError,
};
use glmsm_core::Matrix;

/// Gram regularizer for euclidean (LMSM-style) reference matrices.
const EPSILON: f64 = 1e-6;

/// Prints a line to stdout, exiting quietly if the reader closed the pipe.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let result = out
        .write_all(text.as_bytes())
        .and_then(|()| out.write_all(b"\n"));
    if let Err(err) = result {
        if err.kind() == ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: cannot write to stdout: {err}");
        std::process::exit(1);
    }
}

macro_rules! outln {
    ($($arg:tt)*) => { emit(&format!($($arg)*)) };
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            err.code()
        }
    };
    std::process::exit(code);
}

#[derive(Parser)]
#[command(name = "glmsm", version, about = "Subspace classifiers for image sets")]
struct Cli {
    /// Config file with `key = value` lines; explicit flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Suppress wall-clock timing lines.
    #[arg(long, global = true)]
    no_timing: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic image-set dataset with train/test splits.
    Synth(SynthArgs),
    /// Train a subspace classifier and save the model plus its history.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset.
    Eval(EvalArgs),
    /// Check analytic gradients of a random model against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Ambient feature dimension [default: 8]
    #[arg(long, value_name = "DIM")]
    d: Option<usize>,

    /// Number of classes [default: 3]
    #[arg(long, value_name = "C")]
    classes: Option<usize>,

    /// Image sets per class, split roughly 80/20 into train/test [default: 10]
    #[arg(long, value_name = "COUNT")]
    sets_per_class: Option<usize>,

    /// Vectors per image set [default: 6]
    #[arg(long, value_name = "COUNT")]
    n: Option<usize>,

    /// Dimension of each class's latent subspace [default: 2]
    #[arg(long, value_name = "DIM")]
    true_dim: Option<usize>,

    /// Additive Gaussian noise level [default: 0.1]
    #[arg(long, value_name = "SIGMA", allow_hyphen_values = true)]
    sigma: Option<f64>,

    /// RNG seed [default: 42]
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,

    /// Output directory; gains train/ and test/ subdirectories.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Manifest of the training dataset.
    #[arg(long, value_name = "MANIFEST")]
    data: Option<PathBuf>,

    /// One of glmsm-softmax, glmsm-fc, lmsm-softmax, lmsm-fc [default: glmsm-softmax]
    #[arg(long, value_parser = parse_arch, value_name = "ARCH")]
    arch: Option<Arch>,

    /// Input subspace dimension for --input pca [default: 3]
    #[arg(long, value_name = "DIM")]
    m: Option<usize>,

    /// Reference subspace dimension [default: 3]
    #[arg(long, value_name = "DIM")]
    p: Option<usize>,

    /// Number of reference subspaces [default: the class count]
    #[arg(long = "K", value_name = "COUNT")]
    k: Option<usize>,

    /// Training epochs [default: 30]
    #[arg(long, value_name = "COUNT")]
    epochs: Option<usize>,

    /// Minibatch size [default: 8]
    #[arg(long, value_name = "SIZE")]
    batch: Option<usize>,

    /// Initial learning rate; 0 freezes all parameters [default: 0.1]
    #[arg(long, value_name = "RATE", allow_hyphen_values = true)]
    rate: Option<f64>,

    /// Per-epoch learning-rate decay in (0, 1] [default: 0.95]
    #[arg(long, value_name = "FACTOR", allow_hyphen_values = true)]
    decay: Option<f64>,

    /// Softmax temperature: fixed:<value> or learn [default: fixed:2]
    #[arg(long, value_parser = parse_tau, value_name = "TAU")]
    tau: Option<TauSpec>,

    /// Similarity activation: id or sqrt [default: id]
    #[arg(long, value_parser = parse_activation, value_name = "KIND")]
    activation: Option<Activation>,

    /// Weight of the reference repulsion penalty; grassmann archs only [default: 0]
    #[arg(long, value_name = "WEIGHT", allow_hyphen_values = true)]
    repulsion: Option<f64>,

    /// Add the reinforcement term to the per-sample loss.
    #[arg(long)]
    reinforce: bool,

    /// Set front end: pca (orthonormal basis) or ac (autocorrelation) [default: pca]
    #[arg(long, value_parser = parse_input, value_name = "MODE")]
    input: Option<InputFlag>,

    /// Optimizer: rsgd (grassmann archs) or sgd (euclidean archs).
    #[arg(long, value_parser = parse_optimizer, value_name = "OPT")]
    optimizer: Option<Optimizer>,

    /// RNG seed for initialization and batch shuffling [default: 42]
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,

    /// Output directory for model.txt and history.tsv.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Reference initialization: random or class-pca [default: random]
    #[arg(long, value_parser = parse_init, value_name = "INIT")]
    init: Option<BankInit>,
}

#[derive(Args)]
struct EvalArgs {
    /// Manifest of the evaluation dataset.
    #[arg(long, value_name = "MANIFEST")]
    data: Option<PathBuf>,

    /// Saved model file.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,

    /// Optional path for the confusion matrix as TSV.
    #[arg(long, value_name = "FILE")]
    tsv: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Architecture to build [default: glmsm-softmax]
    #[arg(long, value_parser = parse_arch, value_name = "ARCH")]
    arch: Option<Arch>,

    /// Ambient feature dimension [default: 10]
    #[arg(long, value_name = "DIM")]
    d: Option<usize>,

    /// Input subspace dimension [default: 3]
    #[arg(long, value_name = "DIM")]
    m: Option<usize>,

    /// Reference subspace dimension [default: 3]
    #[arg(long, value_name = "DIM")]
    p: Option<usize>,

    /// Number of references [default: 4]
    #[arg(long = "K", value_name = "COUNT")]
    k: Option<usize>,

    /// RNG seed [default: 42]
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,

    /// Finite-difference step [default: 1e-5]
    #[arg(long, value_name = "STEP", allow_hyphen_values = true)]
    step: Option<f64>,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => BTreeMap::new(),
    };
    let mut resolver = Resolver::new(cfg);
    let timing = !cli.no_timing;
    match cli.command {
        Command::Synth(args) => cmd_synth(args, &mut resolver, timing),
        Command::Train(args) => cmd_train(args, &mut resolver, timing),
        Command::Eval(args) => cmd_eval(args, &mut resolver, timing),
        Command::Gradcheck(args) => cmd_gradcheck(args, &mut resolver, timing),
    }
}

fn cmd_synth(args: SynthArgs, r: &mut Resolver, timing: bool) -> Result<i32, CliError> {
    let d = r.take(args.d, "d", parse_usize, 8)?;
    let classes = r.take(args.classes, "classes", parse_usize, 3)?;
    let sets_per_class = r.take(args.sets_per_class, "sets-per-class", parse_usize, 10)?;
    let n = r.take(args.n, "n", parse_usize, 6)?;
    let true_dim = r.take(args.true_dim, "true-dim", parse_usize, 2)?;
    let sigma = r.take(args.sigma, "sigma", parse_f64, 0.1)?;
    let seed = r.take(args.seed, "seed", parse_u64, 42)?;
    let out = r.take_required(args.out, "out")?;
    r.reject_unknown()?;

    if classes < 2 {
        return Err(usage(format!(
            "--classes must be at least 2, got {classes}"
        )));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(usage(format!(
            "--sigma must be finite and nonnegative, got {sigma}"
        )));
    }
    let spec = SynthSpec {
        d,
        classes,
        sets_per_class,
        n,
        true_dim,
        sigma,
        seed,
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;

    let start = Instant::now();
    let (train_split, test_split) = generate_synthetic::<f64>(&spec).map_err(from_data)?;
    let train_manifest = save_dataset(&train_split, &out.join("train")).map_err(from_data)?;
    let test_manifest = save_dataset(&test_split, &out.join("test")).map_err(from_data)?;
    outln!(
        "wrote {} train sets and {} test sets ({} classes, d={}) under {}",
        train_split.len(),
        test_split.len(),
        classes,
        d,
        out.display()
    );
    outln!("train manifest: {}", train_manifest.display());
    outln!("test manifest: {}", test_manifest.display());
    if timing {
        outln!("[timing] synth: {:.3}s", start.elapsed().as_secs_f64());
    }
    Ok(0)
}

fn cmd_train(args: TrainArgs, r: &mut Resolver, timing: bool) -> Result<i32, CliError> {
    let data_path = r.take_required(args.data, "data")?;
    let arch = r.take(args.arch, "arch", parse_arch, Arch::GlmsmSoftmax)?;
    let m = r.take(args.m, "m", parse_usize, 3)?;
    let p = r.take(args.p, "p", parse_usize, 3)?;
    let k_flag = r.optional(args.k, "K", parse_usize)?;
    let epochs = r.take(args.epochs, "epochs", parse_usize, 30)?;
    let batch = r.take(args.batch, "batch", parse_usize, 8)?;
    let rate = r.take(args.rate, "rate", parse_f64, 0.1)?;
    let decay = r.take(args.decay, "decay", parse_f64, 0.95)?;
    let tau = r.take(
        args.tau,
        "tau",
        parse_tau,
        TauSpec {
            mode: TauMode::Fixed,
            value: 2.0,
        },
    )?;
    let activation = r.take(
        args.activation,
        "activation",
        parse_activation,
        Activation::Identity,
    )?;
    let repulsion = r.take(args.repulsion, "repulsion", parse_f64, 0.0)?;
    let reinforce = r.flag(args.reinforce, "reinforce")?;
    let input = r.take(args.input, "input", parse_input, InputFlag::Pca)?;
    let optimizer_flag = r.optional(args.optimizer, "optimizer", parse_optimizer)?;
    let seed = r.take(args.seed, "seed", parse_u64, 42)?;
    let out = r.take_required(args.out, "out")?;
    let init = r.take(args.init, "init", parse_init, BankInit::Random)?;
    r.reject_unknown()?;

    if m < 1 {
        return Err(usage("--m must be at least 1"));
    }
    if p < 1 {
        return Err(usage("--p must be at least 1"));
    }
    if epochs < 1 {
        return Err(usage("--epochs must be at least 1"));
    }
    if batch < 1 {
        return Err(usage("--batch must be at least 1"));
    }
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(usage(format!(
            "--rate must be finite and nonnegative, got {rate}"
        )));
    }
    if !(decay.is_finite() && decay > 0.0 && decay <= 1.0) {
        return Err(usage(format!("--decay must be in (0, 1], got {decay}")));
    }
    if !(repulsion.is_finite() && repulsion >= 0.0) {
        return Err(usage(format!(
            "--repulsion must be finite and nonnegative, got {repulsion}"
        )));
    }
    if repulsion > 0.0 && arch.mode() == RefMode::Euclidean {
        return Err(usage(
            "--repulsion applies only to grassmann archs; euclidean references are not orthonormal",
        ));
    }
    let optimizer = arch.optimizer();
    if let Some(flag) = optimizer_flag {
        if flag != optimizer {
            return Err(usage(format!(
                "--optimizer {} conflicts with --arch {}; {} references train with {}",
                opt_name(flag),
                arch.token(),
                mode_name(arch.mode()),
                opt_name(optimizer)
            )));
        }
    }

    let dataset = load_dataset::<f64>(&data_path).map_err(from_data)?;
    let classes = dataset.class_count();
    let k = k_flag.unwrap_or(classes);
    if k < 1 {
        return Err(usage("--K must be at least 1"));
    }
    if !arch.fc() && k != classes {
        return Err(usage(format!(
            "--arch {} requires K == C (one reference per class); got K={k} with C={classes}",
            arch.token()
        )));
    }
    if init == BankInit::ClassPca && k != classes {
        return Err(usage(format!(
            "--init class-pca requires K == C; got K={k} with C={classes}"
        )));
    }

    let input_mode = match input {
        InputFlag::Pca => InputMode::Pca { m },
        InputFlag::Ac => InputMode::Ac { normalized: true },
    };
    let start = Instant::now();
    let prepared = prepare_inputs(&dataset, input_mode).map_err(from_data)?;
    let mut bank =
        init_bank(&prepared, arch.mode(), k, p, EPSILON, init, seed).map_err(from_train)?;
    let head_kind = if arch.fc() {
        let w = Matrix::from_fn(k, classes, |i, j| if i == j { 1.0 } else { 0.0 });
        HeadKind::Linear {
            w,
            b: vec![0.0; classes],
        }
    } else {
        HeadKind::Softmax
    };
    let mut head = HeadConfig::new(
        activation, tau.value, tau.mode, head_kind, repulsion, reinforce,
    )
    .map_err(from_mutual)?;
    let config = TrainConfig {
        epochs,
        batch_size: batch,
        rate,
        rate_decay: decay,
        seed,
        optimizer,
        shuffle: true,
    };
    let history = train(&prepared, &mut bank, &mut head, &config).map_err(from_train)?;

    std::fs::create_dir_all(&out)
        .map_err(|e| runtime(format!("cannot create {}: {e}", out.display())))?;
    let model_path = out.join("model.txt");
    let history_path = out.join("history.tsv");
    let model = SavedModel {
        bank,
        head,
        input_mode,
    };
    model.save(&model_path).map_err(from_model)?;
    let mut tsv = String::from("epoch\tmean_loss\ttrain_acc\n");
    tsv.push_str(&history.to_tsv());
    std::fs::write(&history_path, tsv)
        .map_err(|e| runtime(format!("cannot write {}: {e}", history_path.display())))?;

    let final_acc = history.epochs.last().map(|s| s.train_acc).unwrap_or(0.0);
    outln!(
        "trained {} for {} epochs on {} sets ({} classes, d={})",
        arch.token(),
        epochs,
        prepared.len(),
        classes,
        prepared.ambient_dim()
    );
    outln!("final train accuracy {final_acc:.4}");
    outln!("model: {}", model_path.display());
    outln!("history: {}", history_path.display());
    if timing {
        outln!("[timing] train: {:.3}s", start.elapsed().as_secs_f64());
    }
    Ok(0)
}

fn cmd_eval(args: EvalArgs, r: &mut Resolver, timing: bool) -> Result<i32, CliError> {
    let data_path = r.take_required(args.data, "data")?;
    let model_path = r.take_required(args.model, "model")?;
    let tsv_path = r.optional(args.tsv, "tsv", parse_path)?;
    r.reject_unknown()?;

    let start = Instant::now();
    let model = SavedModel::<f64>::load(&model_path).map_err(from_model)?;
    let dataset = load_dataset::<f64>(&data_path).map_err(from_data)?;
    let prepared = prepare_inputs(&dataset, model.input_mode).map_err(from_data)?;
    let report = evaluate(&prepared, &model.bank, &model.head).map_err(from_train)?;

    if let Some(path) = &tsv_path {
        let mut text = String::from("true");
        for j in 0..report.confusion.len() {
            text.push_str(&format!("\t{j}"));
        }
        text.push('\n');
        for (class, row) in report.confusion.iter().enumerate() {
            text.push_str(&class.to_string());
            for count in row {
                text.push_str(&format!("\t{count}"));
            }
            text.push('\n');
        }
        std::fs::write(path, text)
            .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
    }

    outln!("accuracy {:.4}", report.accuracy);
    outln!("mean loss {:.4}", report.mean_loss);
    outln!("confusion (rows true, columns predicted):");
    let width = report
        .confusion
        .iter()
        .flatten()
        .map(|c| c.to_string().len())
        .max()
        .unwrap_or(1);
    for (class, row) in report.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
        outln!("  class {class}: {}", cells.join(" "));
    }
    if let Some(path) = &tsv_path {
        outln!("confusion tsv: {}", path.display());
    }
    if timing {
        outln!("[timing] eval: {:.3}s", start.elapsed().as_secs_f64());
    }
    Ok(0)
}

fn cmd_gradcheck(args: GradcheckArgs, r: &mut Resolver, timing: bool) -> Result<i32, CliError> {
    let arch = r.take(args.arch, "arch", parse_arch, Arch::GlmsmSoftmax)?;
    let d = r.take(args.d, "d", parse_usize, 10)?;
    let m = r.take(args.m, "m", parse_usize, 3)?;
    let p = r.take(args.p, "p", parse_usize, 3)?;
    let k = r.take(args.k, "K", parse_usize, 4)?;
    let seed = r.take(args.seed, "seed", parse_u64, 42)?;
    let step = r.take(args.step, "step", parse_f64, 1e-5)?;
    r.reject_unknown()?;

    if k < 1 {
        return Err(usage("--K must be at least 1"));
    }
    if m < 1 || m > d {
        return Err(usage(format!("--m must be in [1, {d}], got {m}")));
    }
    if p < 1 || p > d {
        return Err(usage(format!("--p must be in [1, {d}], got {p}")));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(usage(format!("--step must be positive, got {step}")));
    }

    let mode = arch.mode();
    let threshold = match mode {
        RefMode::Grassmann => 1e-5,
        RefMode::Euclidean => 1e-4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bank = ReferenceBank::random(d, p, k, mode, EPSILON, &mut rng);
    let head_kind = if arch.fc() {
        let w = Matrix::from_fn(k, k, |_, _| rng.gen::<f64>() - 0.5);
        let b = (0..k).map(|_| 0.2 * (rng.gen::<f64>() - 0.5)).collect();
        HeadKind::Linear { w, b }
    } else {
        HeadKind::Softmax
    };
    let repulsion = if mode == RefMode::Grassmann { 0.3 } else { 0.0 };
    let head = HeadConfig::new(
        Activation::Sqrt,
        2.0,
        TauMode::Learnable,
        head_kind,
        repulsion,
        false,
    )
    .map_err(from_mutual)?;
    let input = SetInput::from_basis(OrthonormalBasis::random(d, m, &mut rng));

    let start = Instant::now();
    let report = grad_check(&input, &bank, &head, 0, step).map_err(from_train)?;
    for block in &report.blocks {
        outln!(
            "block {}: max {:.3e} mean {:.3e}",
            block.name,
            block.max_rel_error,
            block.mean_rel_error
        );
    }
    let passed = report.max_rel_error < threshold;
    let verdict = if passed { "PASS" } else { "FAIL" };
    outln!(
        "{verdict} max rel error {:.3e} at {} (threshold {:.0e})",
        report.max_rel_error,
        report.worst,
        threshold
    );
    if timing {
        outln!("[timing] gradcheck: {:.3}s", start.elapsed().as_secs_f64());
    }
    Ok(if passed { 0 } else { 1 })
}

#[derive(Debug)]
enum CliError {
    /// Bad flags, bad config, or missing input files; exit code 2.
    Usage(String),
    /// Failures while computing or writing results; exit code 1.
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Runtime(msg) => f.write_str(msg),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn runtime(msg: impl Into<String>) -> CliError {
    CliError::Runtime(msg.into())
}

fn from_data(err: DataError) -> CliError {
    let missing = matches!(
        &err,
        DataError::MissingFile { .. } | DataError::EmptyManifest { .. }
    ) || matches!(&err, DataError::Io { source, .. } if source.kind() == ErrorKind::NotFound);
    if missing {
        usage(err.to_string())
    } else {
        runtime(err.to_string())
    }
}

fn from_model(err: ModelError) -> CliError {
    let missing =
        matches!(&err, ModelError::Io { source, .. } if source.kind() == ErrorKind::NotFound);
    if missing {
        usage(err.to_string())
    } else {
        runtime(err.to_string())
    }
}

fn from_train(err: TrainError) -> CliError {
    runtime(err.to_string())
}

fn from_mutual(err: MutualError) -> CliError {
    runtime(err.to_string())
}

/// Layered option lookup: explicit flags beat config-file values, which beat
/// built-in defaults. Consulted keys are tracked so leftovers can be
/// rejected as unknown.
struct Resolver {
    cfg: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
}

impl Resolver {
    fn new(cfg: BTreeMap<String, String>) -> Self {
        Resolver {
            cfg,
            consumed: BTreeSet::new(),
        }
    }

    fn optional<T>(
        &mut self,
        flag: Option<T>,
        key: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Option<T>, CliError> {
        self.consumed.insert(key.to_string());
        if let Some(value) = flag {
            return Ok(Some(value));
        }
        match self.cfg.get(key) {
            Some(raw) => parse(raw)
                .map(Some)
                .map_err(|e| usage(format!("config key `{key}`: {e}"))),
            None => Ok(None),
        }
    }

    fn take<T>(
        &mut self,
        flag: Option<T>,
        key: &str,
        parse: impl Fn(&str) -> Result<T, String>,
        default: T,
    ) -> Result<T, CliError> {
        Ok(self.optional(flag, key, parse)?.unwrap_or(default))
    }

    fn take_required(&mut self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf, CliError> {
        self.optional(flag, key, parse_path)?
            .ok_or_else(|| usage(format!("missing --{key} (and no config value for `{key}`)")))
    }

    /// Boolean switch: the flag can only set it, the config can set it
    /// either way, and it defaults to false.
    fn flag(&mut self, set: bool, key: &str) -> Result<bool, CliError> {
        let flag = if set { Some(true) } else { None };
        Ok(self.optional(flag, key, parse_bool)?.unwrap_or(false))
    }

    fn reject_unknown(&self) -> Result<(), CliError> {
        let unknown: Vec<String> = self
            .cfg
            .keys()
            .filter(|k| !self.consumed.contains(*k))
            .cloned()
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(usage(format!(
                "unknown config key(s) for this command: {}",
                unknown.join(", ")
            )))
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
fn load_config(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(usage(format!(
                "config {} line {}: expected `key = value`",
                path.display(),
                lineno + 1
            )));
        };
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(usage(format!(
                "config {} line {}: empty key",
                path.display(),
                lineno + 1
            )));
        }
        let value = value.trim().to_string();
        if map.insert(key.clone(), value).is_some() {
            return Err(usage(format!(
                "config {} line {}: duplicate key `{key}`",
                path.display(),
                lineno + 1
            )));
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arch {
    GlmsmSoftmax,
    GlmsmFc,
    LmsmSoftmax,
    LmsmFc,
}

impl Arch {
    fn mode(self) -> RefMode {
        match self {
            Arch::GlmsmSoftmax | Arch::GlmsmFc => RefMode::Grassmann,
            Arch::LmsmSoftmax | Arch::LmsmFc => RefMode::Euclidean,
        }
    }

    fn fc(self) -> bool {
        matches!(self, Arch::GlmsmFc | Arch::LmsmFc)
    }

    fn optimizer(self) -> Optimizer {
        match self.mode() {
            RefMode::Grassmann => Optimizer::Rsgd,
            RefMode::Euclidean => Optimizer::Sgd,
        }
    }

    fn token(self) -> &'static str {
        match self {
            Arch::GlmsmSoftmax => "glmsm-softmax",
            Arch::GlmsmFc => "glmsm-fc",
            Arch::LmsmSoftmax => "lmsm-softmax",
            Arch::LmsmFc => "lmsm-fc",
        }
    }
}

/// Temperature flag: the mode plus the initial value.
#[derive(Debug, Clone, Copy, PartialEq)]
struct TauSpec {
    mode: TauMode,
    value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InputFlag {
    Pca,
    Ac,
}

fn parse_usize(s: &str) -> Result<usize, String> {
    s.parse()
        .map_err(|_| format!("expected a nonnegative integer, got `{s}`"))
}

fn parse_u64(s: &str) -> Result<u64, String> {
    s.parse()
        .map_err(|_| format!("expected a nonnegative integer, got `{s}`"))
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let value: f64 = s
        .parse()
        .map_err(|_| format!("expected a number, got `{s}`"))?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("expected a finite number, got `{s}`"))
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{s}`")),
    }
}

#[allow(clippy::unnecessary_wraps)]
fn parse_path(s: &str) -> Result<PathBuf, String> {
    Ok(PathBuf::from(s))
}

fn parse_arch(s: &str) -> Result<Arch, String> {
    match s {
        "glmsm-softmax" => Ok(Arch::GlmsmSoftmax),
        "glmsm-fc" => Ok(Arch::GlmsmFc),
        "lmsm-softmax" => Ok(Arch::LmsmSoftmax),
        "lmsm-fc" => Ok(Arch::LmsmFc),
        _ => Err(format!(
            "unknown arch `{s}` (expected glmsm-softmax, glmsm-fc, lmsm-softmax, or lmsm-fc)"
        )),
    }
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    match s {
        "id" => Ok(Activation::Identity),
        "sqrt" => Ok(Activation::Sqrt),
        _ => Err(format!("unknown activation `{s}` (expected id or sqrt)")),
    }
}

fn parse_input(s: &str) -> Result<InputFlag, String> {
    match s {
        "pca" => Ok(InputFlag::Pca),
        "ac" => Ok(InputFlag::Ac),
        _ => Err(format!("unknown input mode `{s}` (expected pca or ac)")),
    }
}

fn parse_optimizer(s: &str) -> Result<Optimizer, String> {
    match s {
        "sgd" => Ok(Optimizer::Sgd),
        "rsgd" => Ok(Optimizer::Rsgd),
        _ => Err(format!("unknown optimizer `{s}` (expected sgd or rsgd)")),
    }
}

fn parse_init(s: &str) -> Result<BankInit, String> {
    match s {
        "random" => Ok(BankInit::Random),
        "class-pca" => Ok(BankInit::ClassPca),
        _ => Err(format!("unknown init `{s}` (expected random or class-pca)")),
    }
}

fn parse_tau(s: &str) -> Result<TauSpec, String> {
    if s == "learn" {
        return Ok(TauSpec {
            mode: TauMode::Learnable,
            value: 1.0,
        });
    }
    if let Some(raw) = s.strip_prefix("fixed:") {
        let value = parse_f64(raw)?;
        if value <= 0.0 {
            return Err(format!("temperature must be positive, got {value}"));
        }
        return Ok(TauSpec {
            mode: TauMode::Fixed,
            value,
        });
    }
    Err(format!("expected `fixed:<value>` or `learn`, got `{s}`"))
}

fn opt_name(opt: Optimizer) -> &'static str {
    match opt {
        Optimizer::Sgd => "sgd",
        Optimizer::Rsgd => "rsgd",
    }
}

fn mode_name(mode: RefMode) -> &'static str {
    match mode {
        RefMode::Grassmann => "grassmann",
        RefMode::Euclidean => "euclidean",
    }
}
