use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use dikernel::artifact::{load_map, save_head, save_map};
use dikernel::baselines::{train_ce, train_ls, LinearHead};
use dikernel::data_io::{
    load_csv_with, load_libsvm_with, minmax_scale, synthetic_blobs, write_libsvm, BlobConfig,
    Dataset, LoadOptions,
};
use dikernel::feature_maps::{init_fourier, init_nystrom};
use dikernel::objectives::{grad_nys_di, grad_rf_di, nys_di, rf_di};
use dikernel::predictors::{accuracy, classify, krr_fit, krr_predict, mse};
use dikernel::training::{train_fourier, train_nystrom, TrainReport};
use dikernel::{
    DIConfig, Error, FeatureMap, FourierMap, KernelConfig, Matrix, NystromMap, TargetEncoding,
    Targets, Vector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{DataFormat, ExperimentConfig, MapKind, Objective, Overrides};
use crate::output::{fresh_run_dir, print_table, write_manifest, Records, DEFAULT_OUT};

/// A check that ran to completion but did not meet its threshold.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

fn load_file(cfg: &ExperimentConfig, path: &Path, opts: &LoadOptions) -> Result<Dataset> {
    let data = match cfg.data.format {
        DataFormat::Libsvm => load_libsvm_with(path, opts)?,
        DataFormat::Csv => load_csv_with(path, cfg.data.label_column, cfg.data.has_header, opts)?,
        DataFormat::Synthetic => unreachable!("synthetic data has no file"),
    };
    Ok(data)
}

fn holdout(data: &Dataset, fraction: f64) -> Result<(Dataset, Dataset)> {
    let n = data.n_samples();
    let n_train = ((n as f64) * (1.0 - fraction)).round() as usize;
    Ok(data.split_at(n_train.clamp(1, n.saturating_sub(1)))?)
}

/// Loads, splits and scales the configured data.
pub fn load_split(cfg: &ExperimentConfig) -> Result<Split> {
    let (train, test) = match cfg.data.format {
        DataFormat::Synthetic => holdout(
            &synthetic_blobs(&cfg.blob_config())?,
            cfg.data.test_fraction,
        )?,
        _ => {
            let path = cfg.data.train.as_ref().context("data.train is not set")?;
            let train = load_file(cfg, path, &LoadOptions::default())?;
            match &cfg.data.test {
                Some(test_path) => {
                    let opts = LoadOptions {
                        n_features: Some(train.n_features()),
                        class_names: Some(train.class_names.clone()),
                    };
                    let test = load_file(cfg, test_path, &opts)?;
                    (train, test)
                }
                None => holdout(&train, cfg.data.test_fraction)?,
            }
        }
    };
    if !cfg.data.scale {
        return Ok(Split { train, test });
    }
    let (train, mut rest) = minmax_scale(&train, &[test])?;
    Ok(Split {
        train,
        test: rest.pop().expect("one held-out split"),
    })
}

/// Targets used by the trainers: unit-norm one-hot for class labels.
fn training_targets(data: &Dataset) -> Result<Dataset> {
    let enc = if data.labels.is_some() {
        TargetEncoding::OneHotUnitNorm
    } else {
        TargetEncoding::Raw
    };
    Ok(data.clone().with_encoding(enc)?)
}

fn evaluation_targets(data: &Dataset) -> Result<Dataset> {
    let enc = if data.labels.is_some() {
        TargetEncoding::OneHot
    } else {
        TargetEncoding::Raw
    };
    Ok(data.clone().with_encoding(enc)?)
}

pub fn initial_map(cfg: &ExperimentConfig, train: &Dataset) -> Result<FeatureMap> {
    let kernel = cfg.map.kernel()?;
    Ok(match cfg.map.kind {
        MapKind::Nystrom => {
            FeatureMap::Nystrom(init_nystrom(&train.x, cfg.map.size, kernel, cfg.seed)?)
        }
        MapKind::Fourier => FeatureMap::Fourier(init_fourier(
            &kernel,
            train.n_features(),
            cfg.map.size,
            cfg.seed,
        )?),
    })
}

pub struct Trained {
    pub map: FeatureMap,
    pub head: Option<LinearHead>,
    pub report: TrainReport,
}

pub fn train_map(cfg: &ExperimentConfig, train: &Dataset) -> Result<Trained> {
    let init = initial_map(cfg, train)?;
    let tcfg = cfg.train_config();
    let di = cfg.di_config()?;
    let data = training_targets(train)?;
    Ok(match (cfg.objective, init) {
        (Objective::Di, FeatureMap::Nystrom(m)) => {
            let (map, report) = train_nystrom(&data, m, &tcfg, &di)?;
            Trained {
                map: FeatureMap::Nystrom(map),
                head: None,
                report,
            }
        }
        (Objective::Di, FeatureMap::Fourier(m)) => {
            let (map, report) = train_fourier(&data, m, &tcfg, &di)?;
            Trained {
                map: FeatureMap::Fourier(map),
                head: None,
                report,
            }
        }
        (Objective::Ls, init) => {
            let (map, head, report) = train_ls(&data, init, &tcfg, &di)?;
            Trained {
                map,
                head: Some(head),
                report,
            }
        }
        (Objective::Ce, init) => {
            let (map, head, report) = train_ce(&data, init, &tcfg)?;
            Trained {
                map,
                head: Some(head),
                report,
            }
        }
    })
}

#[derive(Debug, Clone, Copy)]
pub struct Metrics {
    pub train_mse: f64,
    pub test_mse: f64,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

/// Fits KRR on the training features and scores both splits.
pub fn evaluate(map: &FeatureMap, split: &Split, rho: f64) -> Result<Metrics> {
    for (name, data) in [("training", &split.train), ("test", &split.test)] {
        if data.n_features() != map.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "feature map input vs dataset",
                expected: map.input_dim().to_string(),
                actual: format!("{} ({name} data)", data.n_features()),
            }
            .into());
        }
    }
    let train = evaluation_targets(&split.train)?;
    let test = evaluation_targets(&split.test)?;
    let phi_train = map.features(&train.x)?;
    let phi_test = map.features(&test.x)?;
    let model = krr_fit(&phi_train, &train.targets, &DIConfig::new(rho)?)?;
    let pred_train = krr_predict(&model, &phi_train)?;
    let pred_test = krr_predict(&model, &phi_test)?;
    let acc = |pred: &Matrix, data: &Dataset| -> Result<Option<f64>> {
        match &data.labels {
            Some(l) => Ok(Some(accuracy(&classify(pred), l)?)),
            None => Ok(None),
        }
    };
    Ok(Metrics {
        train_mse: mse(&pred_train, &train.targets.y)?,
        test_mse: mse(&pred_test, &test.targets.y)?,
        train_accuracy: acc(&pred_train, &train)?,
        test_accuracy: acc(&pred_test, &test)?,
    })
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn short(v: f64) -> String {
    format!("{v:.4}")
}

fn opt(v: Option<f64>, fmt: fn(f64) -> String) -> String {
    v.map(fmt).unwrap_or_default()
}

fn out_root(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Writes the map, head, per-epoch records and run summary into `dir`.
fn write_training(dir: &Path, cfg: &ExperimentConfig, trained: &Trained) -> Result<()> {
    save_map(&dir.join("map.txt"), &trained.map)?;
    if let Some(head) = &trained.head {
        save_head(&dir.join("head.txt"), head)?;
    }
    let records = dir.join("records.csv");
    let f =
        File::create(&records).with_context(|| format!("cannot create {}", records.display()))?;
    trained.report.write_records(BufWriter::new(f))?;
    let r = &trained.report;
    let mut summary = Records::open(
        dir.join("summary.csv"),
        &[
            "objective",
            "map",
            "size",
            "batch_size",
            "initial_mu",
            "final_mu",
            "epochs",
            "stop",
            "wall_time_s",
        ],
    )?;
    summary.row(&[
        cfg.objective.to_string(),
        trained.map.kind().into(),
        trained.map.size().to_string(),
        r.batch_size.to_string(),
        num(r.initial_mu),
        num(r.final_mu()),
        r.epochs().to_string(),
        r.stop.to_string(),
        format!("{:.3}", r.wall_time.as_secs_f64()),
    ])?;
    Ok(())
}

pub fn cmd_train(overrides: &Overrides) -> Result<()> {
    let cfg = overrides.resolve()?;
    cfg.validate()?;
    let split = load_split(&cfg)?;
    let dir = fresh_run_dir(&out_root(&cfg), "train")?;
    write_manifest(&dir, "train", &cfg)?;
    let trained = train_map(&cfg, &split.train)?;
    write_training(&dir, &cfg, &trained)?;
    let r = &trained.report;
    println!("run directory: {}", dir.display());
    print_table(
        &[
            "objective",
            "map",
            "size",
            "initial_mu",
            "final_mu",
            "epochs",
            "stop",
            "seconds",
        ],
        &[vec![
            cfg.objective.to_string(),
            trained.map.kind().into(),
            trained.map.size().to_string(),
            short(r.initial_mu),
            short(r.final_mu()),
            r.epochs().to_string(),
            r.stop.to_string(),
            format!("{:.2}", r.wall_time.as_secs_f64()),
        ]],
    );
    Ok(())
}

const METRIC_HEADER: [&str; 3] = ["split", "mse", "accuracy"];

fn metric_rows(m: &Metrics, fmt: fn(f64) -> String) -> Vec<Vec<String>> {
    vec![
        vec!["train".into(), fmt(m.train_mse), opt(m.train_accuracy, fmt)],
        vec!["test".into(), fmt(m.test_mse), opt(m.test_accuracy, fmt)],
    ]
}

pub fn cmd_eval(overrides: &Overrides, map_path: &Path) -> Result<()> {
    let cfg = overrides.resolve()?;
    cfg.validate()?;
    let map = load_map(map_path)?;
    let split = load_split(&cfg)?;
    let metrics = evaluate(&map, &split, cfg.rho)?;
    let dir = fresh_run_dir(&out_root(&cfg), "eval")?;
    write_manifest(&dir, &format!("eval {}", map_path.display()), &cfg)?;
    let mut out = Records::open(dir.join("metrics.csv"), &METRIC_HEADER)?;
    for row in metric_rows(&metrics, num) {
        out.row(&row)?;
    }
    println!("run directory: {}", dir.display());
    print_table(&METRIC_HEADER, &metric_rows(&metrics, short));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CheckTarget {
    NysDi,
    RfDi,
    Both,
}

#[derive(Debug, Clone, clap::Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "both")]
    pub objective: CheckTarget,
    #[arg(long, default_value_t = 5)]
    pub dim: usize,
    #[arg(long, default_value_t = 20)]
    pub batch: usize,
    /// Representative points or random features
    #[arg(long, default_value_t = 4)]
    pub size: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scale the analytic gradient before comparing (harness self-test)
    #[arg(long, hide = true)]
    pub corrupt: Option<f64>,
}

pub const GRADCHECK_TOL: f64 = 1e-4;

fn central_diff(p: &Matrix, h: f64, mut f: impl FnMut(&Matrix) -> Result<f64>) -> Result<Matrix> {
    let mut out = Matrix::zeros(p.nrows(), p.ncols());
    for i in 0..p.len() {
        let (mut a, mut b) = (p.clone(), p.clone());
        a[i] += h;
        b[i] -= h;
        out[i] = (f(&a)? - f(&b)?) / (2.0 * h);
    }
    Ok(out)
}

fn relative_deviation(analytic: &Matrix, numeric: &Matrix) -> f64 {
    let scale = analytic.amax().max(numeric.amax()).max(f64::MIN_POSITIVE);
    (analytic - numeric).amax() / scale
}

fn gradcheck_instance(args: &GradcheckArgs) -> (Matrix, Targets, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let x = Matrix::from_fn(args.dim, args.batch, |_, _| rng.random_range(0.0..1.0));
    let mut y = Matrix::zeros(args.batch, args.classes);
    for i in 0..args.batch {
        let c = if i < args.classes {
            i
        } else {
            rng.random_range(0..args.classes)
        };
        y[(i, c)] = 1.0;
    }
    let reps = Matrix::from_fn(args.dim, args.size, |_, _| rng.random_range(0.0..1.0));
    (x, Targets::raw(y), reps)
}

fn check_nys(args: &GradcheckArgs, kernel: KernelConfig, di: &DIConfig) -> Result<f64> {
    let (x, y, reps) = gradcheck_instance(args);
    let map = NystromMap::new(reps.clone(), kernel)?;
    let mut g = grad_nys_di(&x, &y, &map, di)?;
    if let Some(s) = args.corrupt {
        g *= s;
    }
    let fd = central_diff(&reps, args.step, |r| {
        Ok(nys_di(&x, &y, &NystromMap::new(r.clone(), kernel)?, di)?)
    })?;
    Ok(relative_deviation(&g, &fd))
}

fn check_rf(args: &GradcheckArgs, kernel: KernelConfig, di: &DIConfig) -> Result<f64> {
    let (x, y, _) = gradcheck_instance(args);
    let map = init_fourier(&kernel, args.dim, args.size, args.seed)?;
    let (w, b) = map.clone().into_parts();
    let mut g = grad_rf_di(&x, &y, &map, di)?;
    if let Some(s) = args.corrupt {
        g.w *= s;
        g.b *= s;
    }
    let fd_w = central_diff(&w, args.step, |w| {
        Ok(rf_di(
            &x,
            &y,
            &FourierMap::from_unwrapped(w.clone(), b.clone())?,
            di,
        )?)
    })?;
    let b_col = Matrix::from_column_slice(b.len(), 1, b.as_slice());
    let fd_b = central_diff(&b_col, args.step, |bc| {
        let bv = Vector::from_column_slice(bc.as_slice());
        Ok(rf_di(
            &x,
            &y,
            &FourierMap::from_unwrapped(w.clone(), bv)?,
            di,
        )?)
    })?;
    let gb = Matrix::from_column_slice(g.b.len(), 1, g.b.as_slice());
    Ok(relative_deviation(&g.w, &fd_w).max(relative_deviation(&gb, &fd_b)))
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<()> {
    if args.dim == 0 || args.batch < 2 || args.size == 0 || args.classes == 0 {
        bail!("gradcheck needs dim, size, classes >= 1 and batch >= 2");
    }
    if !(args.step.is_finite() && args.step > 0.0) {
        bail!("finite-difference step must be positive");
    }
    let kernel = KernelConfig::gaussian(args.gamma)?;
    let di = DIConfig::new(args.rho)?;
    let mut results = Vec::new();
    if matches!(args.objective, CheckTarget::NysDi | CheckTarget::Both) {
        results.push(("nys_di", check_nys(args, kernel, &di)?));
    }
    if matches!(args.objective, CheckTarget::RfDi | CheckTarget::Both) {
        results.push(("rf_di", check_rf(args, kernel, &di)?));
    }
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|(name, dev)| {
            let status = if *dev < GRADCHECK_TOL { "pass" } else { "FAIL" };
            vec![name.to_string(), format!("{dev:.3e}"), status.into()]
        })
        .collect();
    print_table(&["objective", "max_rel_deviation", "status"], &rows);
    let failed: Vec<&str> = results
        .iter()
        .filter(|(_, dev)| dev.is_nan() || *dev >= GRADCHECK_TOL)
        .map(|(name, _)| *name)
        .collect();
    if !failed.is_empty() {
        return Err(CheckFailed(format!(
            "gradient check above {GRADCHECK_TOL:e} for {}",
            failed.join(", ")
        ))
        .into());
    }
    Ok(())
}

const SWEEP_HEADER: [&str; 10] = [
    "size",
    "objective",
    "map",
    "train_mse",
    "test_mse",
    "train_accuracy",
    "test_accuracy",
    "initial_mu",
    "final_mu",
    "epochs",
];

pub fn cmd_sweep(overrides: &Overrides, sizes: &[usize]) -> Result<()> {
    if sizes.is_empty() {
        bail!("sweep needs at least one size");
    }
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let base = overrides.resolve()?;
    for &size in &sizes {
        let mut cfg = base.clone();
        cfg.map.size = size;
        cfg.validate()?;
    }
    let split = load_split(&base)?;
    let dir = fresh_run_dir(&out_root(&base), "sweep")?;
    let list: Vec<String> = sizes.iter().map(usize::to_string).collect();
    write_manifest(&dir, &format!("sweep {}", list.join(",")), &base)?;
    let mut table = Records::open(dir.join("sweep.csv"), &SWEEP_HEADER)?;
    let mut rows = Vec::new();
    for &size in &sizes {
        let mut cfg = base.clone();
        cfg.map.size = size;
        let sub = dir.join(format!("size-{size}"));
        std::fs::create_dir(&sub).with_context(|| format!("cannot create {}", sub.display()))?;
        write_manifest(&sub, "train", &cfg)?;
        let trained = train_map(&cfg, &split.train)
            .with_context(|| format!("sweep run with size {size} failed"))?;
        write_training(&sub, &cfg, &trained)?;
        let m = evaluate(&trained.map, &split, cfg.rho)?;
        let row = |fmt: fn(f64) -> String| {
            vec![
                size.to_string(),
                cfg.objective.to_string(),
                trained.map.kind().into(),
                fmt(m.train_mse),
                fmt(m.test_mse),
                opt(m.train_accuracy, fmt),
                opt(m.test_accuracy, fmt),
                fmt(trained.report.initial_mu),
                fmt(trained.report.final_mu()),
                trained.report.epochs().to_string(),
            ]
        };
        table.row(&row(num))?;
        log::info!("sweep size {size} done");
        rows.push(row(short));
    }
    println!("run directory: {}", dir.display());
    print_table(&SWEEP_HEADER, &rows);
    Ok(())
}

#[derive(Debug, Clone, clap::Args)]
pub struct SynthArgs {
    /// Destination LIBSVM file
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 4000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.5)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    if args.output.exists() {
        bail!("{} already exists", args.output.display());
    }
    let data = synthetic_blobs(&BlobConfig {
        dim: args.dim,
        classes: args.classes,
        samples: args.samples,
        separation: args.separation,
        seed: args.seed,
    })?;
    write_libsvm(&args.output, &data)?;
    println!(
        "wrote {} samples, {} features, {} classes to {}",
        data.n_samples(),
        data.n_features(),
        args.classes,
        args.output.display()
    );
    Ok(())
}
