//! `ancm` — train small feature extractors against fixed class anchors and
//! inspect what they learned.
//!
//! Commands: `gen-anchors`, `train`, `eval`, `export-features`, `plot`.
//! Training runs are configured by plain `key=value` files whose keys are all
//! mirrored as flags (flags win); every run writes a manifest that replays it
//! bit-exactly. Exit codes: 0 success, 2 usage/config/validation error,
//! 3 numerical abort during training.

mod config;
mod svg;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ancm_core::anchors::AnchorSet;
use ancm_core::checkpoint;
use ancm_core::data::{self, Dataset};
use ancm_core::linalg::Matrix;
use ancm_core::metrics::MetricKind;
use ancm_core::ncm::{self, SoftmaxHead};
use ancm_core::network::Network;
use ancm_core::presets;
use ancm_core::train::{eval_features, train_with_objective, Objective};

use config::{AnchorMethodKey, DatasetPlan, LossKind, Plan, Preset, RunConfig};

/// Why a command failed, and the exit code the failure maps to.
#[derive(Debug)]
struct Failure {
    message: String,
    code: u8,
}

impl Failure {
    /// A usage, configuration, or validation problem: exit 2.
    fn usage(message: impl Into<String>) -> Failure {
        Failure {
            message: message.into(),
            code: 2,
        }
    }
}

impl From<String> for Failure {
    fn from(message: String) -> Failure {
        Failure::usage(message)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::usage(e.to_string())
    }
}

impl From<ancm_core::Error> for Failure {
    fn from(e: ancm_core::Error) -> Failure {
        // A numerical abort is the one runtime failure with its own exit
        // code; everything else is a validation problem.
        let code = if matches!(e, ancm_core::Error::NonFiniteLoss { .. }) {
            3
        } else {
            2
        };
        Failure {
            message: e.to_string(),
            code,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "ancm",
    version,
    about = "Train feature extractors against fixed class anchors and inspect the learned space"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an anchor set, validate it, and write it as CSV
    GenAnchors(GenAnchorsArgs),
    /// Train a network per a key=value config; flags override the file
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split and write a report
    Eval(EvalArgs),
    /// Write eval-mode features of every sample as CSV
    ExportFeatures(ExportArgs),
    /// Render a 2-D feature scatter with anchor stars as SVG
    Plot(PlotArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Split {
    Train,
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Every config-file key, mirrored as a command-line flag. A flag's value is
/// the same text the config file would hold; both go through
/// [`RunConfig::set`], and flags are applied after the file so they override
/// it.
macro_rules! config_flags {
    ($($field:ident),* $(,)?) => {
        #[derive(Args, Default)]
        struct ConfigFlags {
            $(
                #[arg(long, value_name = "VALUE", help_heading = "Config keys")]
                $field: Option<String>,
            )*
        }

        impl ConfigFlags {
            fn overlay(&self, config: &mut RunConfig) -> Result<(), String> {
                $(
                    if let Some(value) = &self.$field {
                        config.set(stringify!($field), value)?;
                    }
                )*
                Ok(())
            }
        }
    };
}

config_flags!(
    dataset,
    preset,
    loss,
    anchor_method,
    anchor_seed,
    anchor_iterations,
    train_images,
    train_labels,
    test_images,
    test_labels,
    classes,
    dim,
    per_class,
    spread,
    center_scale,
    data_seed,
    train_count,
    test_count,
    lr,
    momentum,
    weight_decay,
    batch_size,
    epochs,
    dropout,
    seed,
    plateau_window,
    plateau_factor,
    plateau_min_rel_improvement,
    normalize,
    out_dir,
);

#[derive(Args)]
struct GenAnchorsArgs {
    /// Construction: polar2d | orthonormal | repulsion
    #[arg(long)]
    method: String,
    /// Number of classes
    #[arg(long)]
    classes: usize,
    /// Feature dimension
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Seed for the repulsion method (falls back to $ANCM_SEED, then 0)
    #[arg(long)]
    seed: Option<u64>,
    /// Descent iterations for the repulsion method
    #[arg(long, default_value_t = 500)]
    iterations: usize,
    /// Output CSV path
    #[arg(long, default_value = "anchors.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// key=value config file; any config flag overrides its value
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate
    #[arg(long)]
    checkpoint: PathBuf,
    /// Which split of the configured dataset to evaluate
    #[arg(long, value_enum, default_value_t = Split::Train)]
    split: Split,
    /// Anchor CSV to classify against, overriding the configured anchors
    #[arg(long)]
    anchors: Option<PathBuf>,
    /// Metric for anchored classification: euclidean | cosine
    #[arg(long)]
    metric: Option<String>,
    /// key=value config file describing the dataset (a run manifest works)
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Args)]
struct ExportArgs {
    /// Checkpoint whose feature layer to export
    #[arg(long)]
    checkpoint: PathBuf,
    /// Which split of the configured dataset to export
    #[arg(long, value_enum, default_value_t = Split::Train)]
    split: Split,
    /// Output CSV path (default: <out_dir>/features.csv)
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value config file describing the dataset (a run manifest works)
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Args)]
struct PlotArgs {
    /// Features CSV written by export-features
    #[arg(long)]
    features: PathBuf,
    /// Anchors CSV written by gen-anchors or a training run
    #[arg(long)]
    anchors: PathBuf,
    /// Output SVG path
    #[arg(long, default_value = "scatter.svg")]
    out: PathBuf,
    /// Display-only magnification of anchor positions
    #[arg(long, default_value_t = 1.0)]
    anchor_scale: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenAnchors(args) => cmd_gen_anchors(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::ExportFeatures(args) => cmd_export_features(args),
        Command::Plot(args) => cmd_plot(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

/// Explicit flag, else `$ANCM_SEED`, else 0.
fn seed_or_env(flag: Option<u64>) -> Result<u64, Failure> {
    match flag {
        Some(seed) => Ok(seed),
        None => match std::env::var("ANCM_SEED") {
            Ok(text) => text.parse().map_err(|_| {
                Failure::usage(format!(
                    "ANCM_SEED: expected an unsigned integer, got {text:?}"
                ))
            }),
            Err(_) => Ok(0),
        },
    }
}

fn parse_method(text: &str) -> Result<AnchorMethodKey, Failure> {
    match text {
        "polar2d" => Ok(AnchorMethodKey::Polar2d),
        "orthonormal" => Ok(AnchorMethodKey::Orthonormal),
        "repulsion" => Ok(AnchorMethodKey::Repulsion),
        other => Err(Failure::usage(format!(
            "unknown anchor method {other:?} (expected polar2d, orthonormal, or repulsion)"
        ))),
    }
}

fn parse_metric(text: &str) -> Result<MetricKind, Failure> {
    match text {
        "euclidean" => Ok(MetricKind::Euclidean),
        "cosine" => Ok(MetricKind::Cosine),
        other => Err(Failure::usage(format!(
            "unknown metric {other:?} (expected euclidean or cosine)"
        ))),
    }
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

fn build_anchors(
    method: AnchorMethodKey,
    classes: usize,
    dim: usize,
    seed: u64,
    iterations: usize,
) -> Result<AnchorSet, Failure> {
    let set = match method {
        AnchorMethodKey::Polar2d => {
            if dim != 2 {
                return Err(Failure::usage(format!(
                    "polar2d anchors are 2-dimensional, but {dim} dimensions were requested; \
                     use orthonormal or repulsion for other dimensions"
                )));
            }
            AnchorSet::generate_polar_2d(classes)?
        }
        AnchorMethodKey::Orthonormal => AnchorSet::generate_orthonormal(classes, dim)?,
        AnchorMethodKey::Repulsion => {
            AnchorSet::generate_repulsion(classes, dim, seed, iterations)?
        }
    };
    Ok(set)
}

fn cmd_gen_anchors(args: &GenAnchorsArgs) -> Result<(), Failure> {
    let method = parse_method(&args.method)?;
    let seed = seed_or_env(args.seed)?;
    let set = build_anchors(method, args.classes, args.dim, seed, args.iterations)?;

    // Re-measure the geometry from the rows and hold it against the
    // generator's nominal angle: unit norms and no pair closer than claimed.
    let report = set.validate(set.min_pairwise_angle());
    if !report.pass {
        return Err(Failure::usage(format!(
            "anchor validation failed: min angle {:.3}° vs required {:.3}°, {} row(s) off unit norm",
            report.min_pairwise_angle.to_degrees(),
            report.theta_m.to_degrees(),
            report.failed_rows.len()
        )));
    }

    ensure_parent(&args.out)?;
    set.save_csv(&args.out)?;
    println!(
        "wrote {} anchors ({} dims) to {}",
        set.class_count(),
        set.dim(),
        args.out.display()
    );
    println!("min angle {:.3}°", report.min_pairwise_angle.to_degrees());
    Ok(())
}

/// Parses the config file (if any), overlays the flags, and resolves.
fn resolve_config(file: Option<&Path>, flags: &ConfigFlags) -> Result<Plan, Failure> {
    let mut config = match file {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    flags.overlay(&mut config)?;
    Ok(config.resolve()?)
}

fn build_network(plan: &Plan) -> ancm_core::Result<Network> {
    match plan.preset {
        Preset::Toy2d => presets::toy2d(plan.seed),
        Preset::MnistMini => presets::mnist_mini(plan.train.dropout, plan.seed),
        Preset::Mnist2dviz => presets::mnist_2dviz(plan.train.dropout, plan.seed),
    }
}

fn build_objective(plan: &Plan, classes: usize) -> Result<Objective, Failure> {
    let feature_dim = plan.preset.feature_dim();
    match (plan.loss, &plan.anchors) {
        (LossKind::Softmax, _) => Ok(Objective::Softmax {
            head: SoftmaxHead::new(feature_dim, classes, plan.seed),
        }),
        (loss, Some(a)) => Ok(Objective::AnchorNcm {
            anchors: build_anchors(a.method, classes, feature_dim, a.seed, a.iterations)?,
            metric: loss.metric().expect("anchored losses carry a metric"),
        }),
        (_, None) => unreachable!("config resolution enforces anchors for anchored losses"),
    }
}

/// Blob centers: the class anchors scaled by `center_scale` — so the data is
/// separable around exactly the targets training pulls features toward. The
/// softmax baseline has no anchors; it gets the same evenly-spaced circle an
/// anchored run over 2-D features would.
fn blob_centers(objective: &Objective, classes: usize, dim: usize, scale: f64) -> Result<Matrix, Failure> {
    let rows: Vec<Vec<f64>> = match objective {
        Objective::AnchorNcm { anchors, .. } => {
            if anchors.dim() != dim {
                return Err(Failure::usage(format!(
                    "blob centers come from the anchors, but anchors span {} dims and blobs {dim}",
                    anchors.dim()
                )));
            }
            (0..classes)
                .map(|c| anchors.anchor_of_class(c).iter().map(|v| v * scale).collect())
                .collect()
        }
        Objective::Softmax { .. } => {
            let circle = AnchorSet::generate_polar_2d(classes)?;
            (0..classes)
                .map(|c| circle.anchor_of_class(c).iter().map(|v| v * scale).collect())
                .collect()
        }
    };
    Ok(Matrix::from_rows(&rows))
}

/// Materializes the plan: objective (anchors or head) plus the train and
/// test datasets, normalized per the plan (test always with train statistics).
fn prepare_run(plan: &Plan) -> Result<(Dataset, Option<Dataset>, Objective), Failure> {
    let (train_raw, test_raw, objective) = match &plan.dataset {
        DatasetPlan::Blobs {
            classes,
            dim,
            per_class,
            spread,
            center_scale,
            data_seed,
        } => {
            let objective = build_objective(plan, *classes)?;
            let centers = blob_centers(&objective, *classes, *dim, *center_scale)?;
            let train = data::make_blobs(*classes, *dim, *per_class, &centers, *spread, *data_seed)?;
            (train, None, objective)
        }
        DatasetPlan::Digits {
            train_count,
            test_count,
            data_seed,
        } => {
            let train = data::make_digits(*train_count, *data_seed);
            // The held-out split draws from the same generator one seed over,
            // so the two splits never share a sample stream.
            let test = data::make_digits(*test_count, data_seed.wrapping_add(1));
            let objective = build_objective(plan, train.class_count())?;
            (train, Some(test), objective)
        }
        DatasetPlan::Idx {
            train_images,
            train_labels,
            test,
        } => {
            let train = data::load_idx(train_images, train_labels)?;
            let test = match test {
                Some((images, labels)) => Some(data::load_idx(images, labels)?),
                None => None,
            };
            let objective = build_objective(plan, train.class_count())?;
            (train, test, objective)
        }
    };

    if plan.normalize {
        let train = train_raw.normalize_global()?;
        let (mean, std) = train
            .normalization()
            .expect("global normalization records its statistics");
        let test = match test_raw {
            Some(t) => Some(t.normalize_with(mean, std)?),
            None => None,
        };
        Ok((train, test, objective))
    } else {
        Ok((train_raw, test_raw, objective))
    }
}

fn cmd_train(args: &TrainArgs) -> Result<(), Failure> {
    let plan = resolve_config(args.config.as_deref(), &args.flags)?;
    let (train_set, test_set, objective) = prepare_run(&plan)?;
    let net = build_network(&plan)?;

    let outcome = train_with_objective(net, objective, &train_set, test_set.as_ref(), &plan.train)?;

    std::fs::create_dir_all(&plan.out_dir)?;
    let head = match &outcome.objective {
        Objective::Softmax { head } => Some(head),
        Objective::AnchorNcm { .. } => None,
    };
    checkpoint::save(&plan.out_dir.join("checkpoint.bin"), &outcome.net, head)?;
    outcome.log.write_csv(&plan.out_dir.join("train_log.csv"))?;
    if let Objective::AnchorNcm { anchors, .. } = &outcome.objective {
        anchors.save_csv(&plan.out_dir.join("anchors.csv"))?;
    }
    std::fs::write(plan.out_dir.join("run_manifest.txt"), plan.manifest())?;

    match outcome.log.records().last() {
        Some(last) => {
            let test = match last.test_acc {
                Some(acc) => format!(", test accuracy {acc:.4}"),
                None => String::new(),
            };
            println!(
                "trained {} epoch(s): train loss {:.6}, train accuracy {:.4}{test}",
                last.epoch, last.train_loss, last.train_acc
            );
        }
        None => println!("trained 0 epochs (epochs = 0); wrote the initial network"),
    }
    println!("artifacts in {}", plan.out_dir.display());
    Ok(())
}

/// Picks the requested split out of a prepared run.
fn pick_split(
    split: Split,
    train_set: Dataset,
    test_set: Option<Dataset>,
) -> Result<Dataset, Failure> {
    match split {
        Split::Train => Ok(train_set),
        Split::Test => test_set.ok_or_else(|| {
            Failure::usage(
                "this configuration has no test split (blobs and idx-without-test are train-only)",
            )
        }),
    }
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Failure> {
    let plan = resolve_config(args.config.as_deref(), &args.flags)?;
    let model = checkpoint::load(&args.checkpoint)?;
    let (train_set, test_set, configured_objective) = prepare_run(&plan)?;
    let dataset = pick_split(args.split, train_set, test_set)?;

    // The checkpoint decides how to classify: a stored head is used as-is;
    // otherwise anchors come from --anchors, else from the configured plan.
    let objective = match model.head {
        Some(head) => {
            if args.anchors.is_some() {
                return Err(Failure::usage(
                    "the checkpoint carries a classifier head; --anchors does not apply",
                ));
            }
            Objective::Softmax { head }
        }
        None => {
            let anchors = match &args.anchors {
                Some(path) => AnchorSet::load_csv(path)?,
                None => match configured_objective {
                    Objective::AnchorNcm { anchors, .. } => anchors,
                    Objective::Softmax { .. } => {
                        return Err(Failure::usage(
                            "the checkpoint has no classifier head; pass --anchors or configure \
                             an anchored loss",
                        ))
                    }
                },
            };
            let metric = match &args.metric {
                Some(text) => parse_metric(text)?,
                None => plan.loss.metric().ok_or_else(|| {
                    Failure::usage(
                        "--metric is required when the configured loss is softmax but the \
                         checkpoint has no classifier head",
                    )
                })?,
            };
            Objective::AnchorNcm { anchors, metric }
        }
    };

    if objective.feature_dim() != model.net.feature_dim() {
        return Err(Failure::usage(format!(
            "dimension mismatch: the classifier expects {}-dim features, the network produces {}",
            objective.feature_dim(),
            model.net.feature_dim()
        )));
    }
    if objective.class_count() != dataset.class_count() {
        return Err(Failure::usage(format!(
            "class mismatch: the classifier has {} classes, the dataset {}",
            objective.class_count(),
            dataset.class_count()
        )));
    }

    let features = eval_features(&model.net, &dataset)?;
    let preds = objective.predict(&features)?;
    let labels = dataset.labels();

    let classes = dataset.class_count();
    let mut totals = vec![0usize; classes];
    let mut hits = vec![0usize; classes];
    for (&label, &pred) in labels.iter().zip(&preds) {
        totals[label] += 1;
        if pred == label {
            hits[label] += 1;
        }
    }
    let correct: usize = hits.iter().sum();
    let error_rate = 100.0 * (dataset.len() - correct) as f64 / dataset.len() as f64;

    let mut report = String::new();
    let _ = writeln!(
        report,
        "split: {} ({} samples, {} classes)",
        args.split.name(),
        dataset.len(),
        classes
    );
    let _ = writeln!(report, "error rate: {error_rate:.2}%");
    let _ = writeln!(report, "per-class accuracy:");
    for c in 0..classes {
        if totals[c] == 0 {
            let _ = writeln!(report, "  class {c}: n/a (0 samples)");
        } else {
            let _ = writeln!(
                report,
                "  class {c}: {:.4} ({} samples)",
                hits[c] as f64 / totals[c] as f64,
                totals[c]
            );
        }
    }
    if let Objective::AnchorNcm { anchors, .. } = &objective {
        let euclid = ncm::mean_euclidean_to_anchor(&features, labels, anchors)?;
        let angle = ncm::mean_angle_to_anchor(&features, labels, anchors)?;
        // Full precision: exported features must reproduce this number when
        // the distance is recomputed from the CSV.
        let _ = writeln!(report, "mean euclidean distance to own anchor: {euclid}");
        let _ = writeln!(
            report,
            "mean angular distance to own anchor: {:.3}°",
            angle.to_degrees()
        );
    }

    print!("{report}");
    std::fs::create_dir_all(&plan.out_dir)?;
    let report_path = plan.out_dir.join("eval_report.txt");
    std::fs::write(&report_path, &report)?;
    println!("report written to {}", report_path.display());
    Ok(())
}

fn cmd_export_features(args: &ExportArgs) -> Result<(), Failure> {
    let plan = resolve_config(args.config.as_deref(), &args.flags)?;
    let model = checkpoint::load(&args.checkpoint)?;
    let (train_set, test_set, _) = prepare_run(&plan)?;
    let dataset = pick_split(args.split, train_set, test_set)?;

    let features = eval_features(&model.net, &dataset)?;

    // Full shortest-round-trip precision: parsing a value back yields the
    // exact f64 that was exported.
    let mut out = String::from("label");
    for k in 0..features.cols() {
        let _ = write!(out, ",feat_{k}");
    }
    out.push('\n');
    for (i, &label) in dataset.labels().iter().enumerate() {
        let _ = write!(out, "{label}");
        for value in features.row(i) {
            let _ = write!(out, ",{value}");
        }
        out.push('\n');
    }

    let path = match &args.out {
        Some(p) => p.clone(),
        None => plan.out_dir.join("features.csv"),
    };
    ensure_parent(&path)?;
    std::fs::write(&path, out)?;
    println!(
        "wrote {} feature rows ({} dims) to {}",
        features.rows(),
        features.cols(),
        path.display()
    );
    Ok(())
}

/// Reads a features CSV back; scatter plots only make sense for 2-D features.
fn read_features_csv(path: &Path) -> Result<Vec<(usize, f64, f64)>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read features {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Failure::usage(format!(
            "{}: empty features file",
            path.display()
        )));
    };
    if !header.starts_with("label,") {
        return Err(Failure::usage(format!(
            "{}: expected a header starting with label, got {header:?}",
            path.display()
        )));
    }
    let dim = header.split(',').count() - 1;
    if dim != 2 {
        return Err(Failure::usage(format!(
            "{}: features have {dim} dimensions; scatter plots need 2 — re-export from a preset \
             with a 2-dimensional feature layer (toy2d or mnist-2dviz)",
            path.display()
        )));
    }

    let mut points = Vec::new();
    for (index, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Failure::usage(format!(
                "{}:{}: expected label and 2 feature values, got {} fields",
                path.display(),
                index + 1,
                fields.len()
            )));
        }
        let bad = |what: &str| {
            Failure::usage(format!("{}:{}: bad {what}: {line:?}", path.display(), index + 1))
        };
        let label: usize = fields[0].parse().map_err(|_| bad("label"))?;
        let x: f64 = fields[1].parse().map_err(|_| bad("feature value"))?;
        let y: f64 = fields[2].parse().map_err(|_| bad("feature value"))?;
        points.push((label, x, y));
    }
    Ok(points)
}

fn cmd_plot(args: &PlotArgs) -> Result<(), Failure> {
    let points = read_features_csv(&args.features)?;
    let set = AnchorSet::load_csv(&args.anchors)?;
    if set.dim() != 2 {
        return Err(Failure::usage(format!(
            "{}: anchors span {} dimensions; scatter plots need 2 — generate 2-D anchors to \
             match a 2-D feature export",
            args.anchors.display(),
            set.dim()
        )));
    }

    // Magnification is display-only: it scales the drawn star positions and
    // nothing else.
    let anchors: Vec<(f64, f64)> = (0..set.class_count())
        .map(|c| {
            let a = set.anchor_of_class(c);
            (a[0] * args.anchor_scale, a[1] * args.anchor_scale)
        })
        .collect();

    let rendered = svg::render(&svg::Scatter {
        points: &points,
        anchors: &anchors,
    });
    ensure_parent(&args.out)?;
    std::fs::write(&args.out, rendered)?;
    println!(
        "wrote scatter of {} points and {} anchors to {}",
        points.len(),
        anchors.len(),
        args.out.display()
    );
    Ok(())
}
