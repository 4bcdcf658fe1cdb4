//! The `latentprobe` command line.
//!
//! Settings resolve as flags > `--config` JSON > built-in defaults. Every
//! command that writes files stages them next to `--out` and moves them into
//! place once complete.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::artifacts::{
    begin_output, commit_output, run_experiment, with_jobs, write_analyses, write_distance_report, write_hull_samples,
    RunOptions, Writer,
};
use crate::data::{
    dump_activations, fig1_one_dimensional, fig1_two_dimensional, gen_gaussian_task, load_activations, ActivationSet,
    SigmaCalibration, Split, ToySpec, TuningDemo,
};
use crate::error::{Error, Result};
use crate::experiment::{
    analyze_report, classifier_seed, describe_architecture, distance_report, load_dataset, tap_split, train_classifier,
    DatasetConfig, DatasetInfo, ExperimentConfig, Summary,
};
use crate::hull::{hull_fraction, subsample_rows, HullFraction};
use crate::nn::{EpochStats, Network};
use crate::plot::scatter;
use crate::probe::{probe_sweep, write_probe_csv};
use crate::rng::{derive_seed, stream};
use crate::stats::{Metric, Space};

#[derive(Debug, Parser)]
#[command(name = "latentprobe", version, about = "Latent-space probes of classifier activations")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Default, Args)]
pub struct Common {
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Experiment config JSON.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Full-scale dataset sizes instead of the desk-scale subsets.
    #[arg(long, global = true)]
    pub full: bool,
    /// Replace an existing output directory.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the Gaussian toy task.
    GenToy(DatasetArgs),
    /// Train a classifier and dump its tap-layer activations.
    Train {
        #[command(flatten)]
        dataset: DatasetArgs,
        /// Trial whose classifier seed to use.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Tap a trained network on a dataset.
    DumpActs {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[arg(long)]
        network: PathBuf,
    },
    /// Fit bottleneck autoencoders to activation dumps.
    Probe {
        #[command(flatten)]
        inputs: ActivationInputs,
        /// Frozen classifier that the activations came from.
        #[arg(long)]
        network: PathBuf,
        #[command(flatten)]
        probe: ProbeArgs,
    },
    /// Fraction of test points inside the convex hull of the training points.
    Hull {
        #[command(flatten)]
        inputs: ActivationInputs,
        #[arg(long)]
        tolerance: Option<f64>,
        /// Uniformly subsample the generators above this count.
        #[arg(long)]
        max_generators: Option<usize>,
    },
    /// Nearest-neighbor distances and their relation to correctness.
    Dist {
        #[command(flatten)]
        inputs: ActivationInputs,
        /// Per-sample hull CSV written by `hull`.
        #[arg(long)]
        hull: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        metrics: Option<Vec<Metric>>,
        #[arg(long)]
        bins: Option<usize>,
        /// Label written into the outputs.
        #[arg(long, default_value = "neural")]
        space: String,
    },
    /// Tuning-curve demonstrations of hulls that do not survive embedding.
    Fig1,
    /// Full experiment: train, probe, hull, distances, plots.
    Run {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        probe: ProbeArgs,
        #[arg(long)]
        max_hull_generators: Option<usize>,
    },
    /// Print the summary of a finished run.
    Report {
        /// Run directory; `--out` when absent.
        dir: Option<PathBuf>,
    },
}

#[derive(Clone, Debug, Default, Args)]
pub struct DatasetArgs {
    /// Directory holding the four MNIST IDX files.
    #[arg(long)]
    pub mnist: Option<PathBuf>,
    /// MNIST training images to use.
    #[arg(long)]
    pub n_train: Option<usize>,
    /// MNIST test images to use.
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Intrinsic dimension of the toy task.
    #[arg(long)]
    pub n_id: Option<usize>,
    /// Ambient input dimension of the toy task.
    #[arg(long)]
    pub n_input: Option<usize>,
    /// Number of toy classes.
    #[arg(long)]
    pub n_classes: Option<usize>,
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long)]
    pub test_per_class: Option<usize>,
    /// Fixed noise level instead of calibration.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Nearest-centroid accuracy the noise is calibrated to.
    #[arg(long)]
    pub target_accuracy: Option<f64>,
}

impl DatasetArgs {
    fn has_toy_flags(&self) -> bool {
        self.n_id.is_some()
            || self.n_input.is_some()
            || self.n_classes.is_some()
            || self.train_per_class.is_some()
            || self.test_per_class.is_some()
            || self.sigma.is_some()
            || self.target_accuracy.is_some()
    }
}

#[derive(Clone, Debug, Default, Args)]
pub struct ProbeArgs {
    /// Comma-separated bottleneck widths.
    #[arg(long, value_delimiter = ',')]
    pub bottlenecks: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Autoencoder training epochs.
    #[arg(long)]
    pub ae_epochs: Option<usize>,
    /// Autoencoder hidden width.
    #[arg(long)]
    pub ae_width: Option<usize>,
}

#[derive(Clone, Debug, Args)]
pub struct ActivationInputs {
    /// Training-split activation dump.
    #[arg(long)]
    pub train: PathBuf,
    /// Test-split activation dump.
    #[arg(long)]
    pub test: PathBuf,
}

impl ActivationInputs {
    fn load(&self) -> Result<(ActivationSet, ActivationSet)> {
        let tr = load_activations(&self.train)?;
        let te = load_activations(&self.test)?;
        if tr.dim() != te.dim() {
            return Err(Error::dim("test activation width", tr.dim(), te.dim()));
        }
        Ok((tr, te))
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// 2 for invalid configuration or input, 1 for everything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) | Error::InvalidInput(_) | Error::Json(_) => 2,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let common = cli.common;
    let jobs = common.jobs;
    if jobs == Some(0) {
        return Err(Error::InvalidConfig("--jobs must be at least 1".into()));
    }
    match cli.command {
        Command::Run {
            dataset,
            probe,
            max_hull_generators,
        } => {
            let mut cfg = resolve_config(&common, &dataset, &probe)?;
            if max_hull_generators.is_some() {
                cfg.analysis.max_hull_generators = max_hull_generators;
            }
            cfg.validate()?;
            let out = run_experiment(
                &cfg,
                RunOptions {
                    force: common.force,
                    jobs,
                },
            )?;
            print!("{}", format_summary(&out.summary));
            Ok(())
        }
        Command::Report { dir } => {
            let dir = dir
                .or(common.out)
                .ok_or_else(|| Error::InvalidConfig("report needs a run directory".into()))?;
            print!("{}", report(&dir)?);
            Ok(())
        }
        command => with_jobs(jobs, move || dispatch(&common, command))?,
    }
}

fn dispatch(common: &Common, command: Command) -> Result<()> {
    match command {
        Command::GenToy(dataset) => gen_toy(common, &dataset),
        Command::Train { dataset, trial } => train_cmd(common, &dataset, trial),
        Command::DumpActs { dataset, network } => dump_acts(common, &dataset, &network),
        Command::Probe { inputs, network, probe } => probe_cmd(common, &inputs, &network, &probe),
        Command::Hull {
            inputs,
            tolerance,
            max_generators,
        } => hull_cmd(common, &inputs, tolerance, max_generators),
        Command::Dist {
            inputs,
            hull,
            metrics,
            bins,
            space,
        } => dist_cmd(common, &inputs, hull.as_deref(), metrics, bins, &space),
        Command::Fig1 => fig1(common),
        Command::Run { .. } | Command::Report { .. } => unreachable!("handled before dispatch"),
    }
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(Error::at_path(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Config from `--config` or defaults, with flags applied on top. Not yet
/// validated.
pub fn resolve_config(common: &Common, ds: &DatasetArgs, probe: &ProbeArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let mut cfg = read_config(path)?;
            if common.full {
                cfg.set_scale(true);
            }
            cfg
        }
        None => match &ds.mnist {
            Some(dir) => ExperimentConfig::mnist(dir, common.full),
            None => ExperimentConfig::toy(ToySpec::default().n_id, common.full),
        },
    };
    if let Some(dir) = &ds.mnist {
        match &mut cfg.dataset {
            DatasetConfig::Mnist { dir: d, .. } => *d = dir.clone(),
            _ => {
                cfg.dataset = DatasetConfig::Mnist {
                    dir: dir.clone(),
                    n_train: None,
                    n_test: None,
                };
                cfg.architecture = None;
                cfg.set_scale(common.full);
            }
        }
    }
    match &mut cfg.dataset {
        DatasetConfig::Toy(spec) => {
            if ds.n_train.is_some() || ds.n_test.is_some() {
                return Err(Error::InvalidConfig("--n-train and --n-test apply to MNIST only".into()));
            }
            set(&mut spec.n_id, ds.n_id);
            set(&mut spec.n_input, ds.n_input);
            set(&mut spec.n_classes, ds.n_classes);
            set(&mut spec.train_per_class, ds.train_per_class);
            set(&mut spec.test_per_class, ds.test_per_class);
            set(&mut spec.target_accuracy, ds.target_accuracy);
            if ds.sigma.is_some() {
                spec.sigma = ds.sigma;
            }
            set(&mut spec.seed, common.seed);
        }
        DatasetConfig::Mnist { n_train, n_test, .. } => {
            if ds.has_toy_flags() {
                return Err(Error::InvalidConfig("toy-task flags do not apply to MNIST".into()));
            }
            if ds.n_train.is_some() {
                *n_train = ds.n_train;
            }
            if ds.n_test.is_some() {
                *n_test = ds.n_test;
            }
        }
        DatasetConfig::Activations { .. } => {
            if ds.has_toy_flags() || ds.n_train.is_some() || ds.n_test.is_some() {
                return Err(Error::InvalidConfig("dataset flags do not apply to activation dumps".into()));
            }
        }
    }
    set(&mut cfg.seed, common.seed);
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    if let Some(b) = &probe.bottlenecks {
        cfg.probe.bottlenecks = b.clone();
    }
    set(&mut cfg.trials, probe.trials);
    set(&mut cfg.probe.training.epochs, probe.ae_epochs);
    set(&mut cfg.probe.hidden_width, probe.ae_width);
    Ok(cfg)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn output_dir(common: &Common, cfg: Option<&ExperimentConfig>) -> Result<PathBuf> {
    common
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.out.clone()))
        .ok_or_else(|| Error::InvalidConfig("no output directory; pass --out".into()))
}

/// Runs `f` against a staging directory and moves it to `out` on success.
fn staged<T>(out: &Path, force: bool, f: impl FnOnce(&mut Writer) -> Result<T>) -> Result<T> {
    let staging = begin_output(out, force)?;
    let mut w = Writer::new(&staging);
    match f(&mut w) {
        Ok(v) => {
            commit_output(&staging, out)?;
            Ok(v)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

/// Settings-only config for commands that read activation dumps.
fn settings_config(common: &Common, probe: &ProbeArgs) -> Result<ExperimentConfig> {
    resolve_config(common, &DatasetArgs::default(), probe)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ToyMetadata {
    pub spec: ToySpec,
    pub sigma: f64,
    pub calibration: Option<SigmaCalibration>,
    pub target_accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub centers: Vec<Vec<f64>>,
    pub centers_intrinsic: Vec<Vec<f64>>,
}

fn rows(a: &ndarray::Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn gen_toy(common: &Common, ds: &DatasetArgs) -> Result<()> {
    let cfg = resolve_config(common, ds, &ProbeArgs::default())?;
    let DatasetConfig::Toy(spec) = &cfg.dataset else {
        return Err(Error::InvalidConfig("gen-toy needs a toy dataset".into()));
    };
    spec.validate()?;
    let out = output_dir(common, Some(&cfg))?;
    let task = gen_gaussian_task(spec)?;
    let meta = ToyMetadata {
        spec: spec.clone(),
        sigma: task.sigma,
        calibration: task.calibration.clone(),
        target_accuracy: spec.target_accuracy,
        n_train: task.dataset.train_labels.len(),
        n_test: task.dataset.test_labels.len(),
        centers: rows(&task.centers),
        centers_intrinsic: rows(&task.centers_intrinsic),
    };
    staged(&out, common.force, |w| {
        w.path("train.csv")?;
        w.path("test.csv")?;
        task.dataset.write_csv(w.root())?;
        w.json("metadata.json", &meta)
    })?;
    println!(
        "wrote {} train / {} test samples to {} (sigma {:.6})",
        meta.n_train,
        meta.n_test,
        out.display(),
        meta.sigma
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrainReport<'a> {
    trial: usize,
    classifier_seed: u64,
    architecture: String,
    dataset: &'a DatasetInfo,
    base_accuracy_train: f64,
    base_accuracy_test: f64,
    history: &'a [EpochStats],
}

fn train_cmd(common: &Common, ds: &DatasetArgs, trial: usize) -> Result<()> {
    let cfg = resolve_config(common, ds, &ProbeArgs::default())?;
    cfg.validate()?;
    let out = output_dir(common, Some(&cfg))?;
    let (data, info) = load_dataset(&cfg)?;
    let arch = cfg.resolved_architecture().expect("raw datasets have an architecture");
    let seed = classifier_seed(cfg.seed, trial);
    let c = train_classifier(&data, &arch, &cfg.classifier, seed)?;
    let report = TrainReport {
        trial,
        classifier_seed: seed,
        architecture: describe_architecture(&arch, data.dim(), data.n_classes),
        dataset: &info,
        base_accuracy_train: c.train.base_accuracy,
        base_accuracy_test: c.test.base_accuracy,
        history: &c.history,
    };
    staged(&out, common.force, |w| {
        w.json("config.json", &cfg)?;
        w.json("network.json", &c.network)?;
        dump_activations(&c.train, w.path("train.nact")?)?;
        dump_activations(&c.test, w.path("test.nact")?)?;
        w.json("train.json", &report)
    })?;
    println!(
        "trained {} : train acc {:.4}, test acc {:.4}",
        report.architecture, report.base_accuracy_train, report.base_accuracy_test
    );
    Ok(())
}

fn load_network(path: &Path) -> Result<Network> {
    let text = fs::read_to_string(path).map_err(Error::at_path(path))?;
    let mut net: Network = serde_json::from_str(&text)?;
    net.freeze();
    Ok(net)
}

fn dump_acts(common: &Common, ds: &DatasetArgs, network: &Path) -> Result<()> {
    let cfg = resolve_config(common, ds, &ProbeArgs::default())?;
    cfg.validate()?;
    let out = output_dir(common, Some(&cfg))?;
    let net = load_network(network)?;
    let (data, _) = load_dataset(&cfg)?;
    if net.input_dim() != data.dim() {
        return Err(Error::dim("network input width", data.dim(), net.input_dim()));
    }
    if net.output_dim() != data.n_classes {
        return Err(Error::dim("network classes", data.n_classes, net.output_dim()));
    }
    let tr = tap_split(&net, data.train_features.view(), &data.train_labels, data.n_classes, Split::Train)?;
    let te = tap_split(&net, data.test_features.view(), &data.test_labels, data.n_classes, Split::Test)?;
    staged(&out, common.force, |w| {
        dump_activations(&tr, w.path("train.nact")?)?;
        dump_activations(&te, w.path("test.nact")?)
    })?;
    println!(
        "dumped {} x {} train and {} x {} test activations",
        tr.len(),
        tr.dim(),
        te.len(),
        te.dim()
    );
    Ok(())
}

fn probe_cmd(common: &Common, inputs: &ActivationInputs, network: &Path, probe: &ProbeArgs) -> Result<()> {
    let cfg = settings_config(common, probe)?;
    let out = output_dir(common, Some(&cfg))?;
    let (tr, te) = inputs.load()?;
    let net = load_network(network)?;
    if net.tap_width() != tr.dim() {
        return Err(Error::dim("network tap width", tr.dim(), net.tap_width()));
    }
    if cfg.trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let results = probe_sweep(&net, &tr, &te, &cfg.probe, cfg.trials, cfg.seed)?;
    staged(&out, common.force, |w| {
        write_probe_csv(&results, w.path("probe.csv")?)?;
        w.json("probe.json", &results)?;
        for r in &results {
            let (ltr, lte) = r.latent_sets(&tr, &te)?;
            let stem = format!("k{}_trial{}", r.bottleneck, r.trial);
            dump_activations(&ltr, w.path(&format!("latent/{stem}_train.nact"))?)?;
            dump_activations(&lte, w.path(&format!("latent/{stem}_test.nact"))?)?;
            w.json(&format!("autoencoders/{stem}.json"), &r.autoencoder)?;
        }
        Ok(())
    })?;
    println!("bottleneck trial  rel_acc");
    for r in &results {
        println!("{:>10} {:>5}  {:.4}", r.bottleneck, r.trial, r.relative_accuracy);
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct HullSummary {
    fraction: f64,
    n_test: usize,
    generators_total: usize,
    generators_used: usize,
    tolerance: f64,
    subsample_seed: Option<u64>,
}

fn hull_cmd(
    common: &Common,
    inputs: &ActivationInputs,
    tolerance: Option<f64>,
    max_generators: Option<usize>,
) -> Result<()> {
    let cfg = settings_config(common, &ProbeArgs::default())?;
    let out = output_dir(common, Some(&cfg))?;
    let tolerance = tolerance.unwrap_or(cfg.analysis.hull_tolerance);
    let max_generators = max_generators.or(cfg.analysis.max_hull_generators);
    if max_generators == Some(0) {
        return Err(Error::InvalidConfig("--max-generators must be positive".into()));
    }
    let (tr, te) = inputs.load()?;
    let (generators, subsample_seed) = match max_generators {
        Some(max) if max < tr.len() => {
            let seed = derive_seed(cfg.seed, &[stream::SUBSAMPLE, tr.dim() as u64]);
            (subsample_rows(tr.activations.view(), max, seed).0, Some(seed))
        }
        _ => (tr.activations.clone(), None),
    };
    let fraction: HullFraction = hull_fraction(te.activations.view(), generators.view(), tolerance)?;
    let summary = HullSummary {
        fraction: fraction.fraction,
        n_test: te.len(),
        generators_total: tr.len(),
        generators_used: fraction.generators_used,
        tolerance,
        subsample_seed,
    };
    staged(&out, common.force, |w| {
        write_hull_samples(w, "hull.csv", &fraction)?;
        w.json("hull.json", &summary)
    })?;
    println!(
        "{:.4} of {} test points inside the hull of {} generators",
        summary.fraction, summary.n_test, summary.generators_used
    );
    Ok(())
}

#[derive(Debug, Deserialize)]
struct HullSampleIn {
    sample_id: usize,
    inside: bool,
}

fn read_hull_flags(path: &Path, n: usize) -> Result<Vec<bool>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Stage(format!("{}: {e}", path.display())))?;
    let mut flags = vec![None; n];
    for row in r.deserialize::<HullSampleIn>() {
        let row = row?;
        let slot = flags
            .get_mut(row.sample_id)
            .ok_or_else(|| Error::InvalidInput(format!("hull sample {} out of range", row.sample_id)))?;
        *slot = Some(row.inside);
    }
    flags
        .into_iter()
        .enumerate()
        .map(|(i, f)| f.ok_or_else(|| Error::InvalidInput(format!("hull file has no row for sample {i}"))))
        .collect()
}

fn dist_cmd(
    common: &Common,
    inputs: &ActivationInputs,
    hull: Option<&Path>,
    metrics: Option<Vec<Metric>>,
    bins: Option<usize>,
    space: &str,
) -> Result<()> {
    let mut cfg = settings_config(common, &ProbeArgs::default())?;
    if let Some(m) = metrics {
        cfg.analysis.metrics = m;
    }
    set(&mut cfg.analysis.n_bins, bins);
    if cfg.analysis.metrics.is_empty() || cfg.analysis.n_bins == 0 {
        return Err(Error::InvalidConfig("need at least one metric and one bin".into()));
    }
    let space = match space {
        "neural" => Space::Neural,
        "latent" => Space::Latent,
        other => return Err(Error::InvalidConfig(format!("unknown space {other:?}"))),
    };
    let out = output_dir(common, Some(&cfg))?;
    let (tr, te) = inputs.load()?;
    let in_hull = hull.map(|p| read_hull_flags(p, te.len())).transpose()?;
    let report = distance_report(
        space,
        0,
        tr.activations.view(),
        te.activations.view(),
        &tr.labels,
        &te.labels,
        in_hull.as_deref(),
        &te.base_correct(),
        &cfg.analysis.metrics,
    )?;
    let analyses = cfg
        .analysis
        .metrics
        .iter()
        .map(|&m| analyze_report(&report, m, &cfg))
        .collect::<Result<Vec<_>>>()?;
    staged(&out, common.force, |w| {
        write_distance_report(w, "distances.csv", &report)?;
        write_analyses(w, &analyses.iter().collect::<Vec<_>>())
    })?;
    println!("metric             KS     nearest-bin acc  farthest-bin acc");
    for a in &analyses {
        let ks = a.ks.map(|k| format!("{:.4}", k.statistic)).unwrap_or_else(|| "-".into());
        let first = a.bins.first().map(|b| b.accuracy).unwrap_or(f64::NAN);
        let last = a.bins.last().map(|b| b.accuracy).unwrap_or(f64::NAN);
        println!("{:<18} {ks:<6} {first:<16.4} {last:.4}", a.metric.name());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Fig1Verdict {
    pub case: String,
    pub n_test: usize,
    pub inside_intrinsic: usize,
    pub inside_embedded: usize,
    pub fraction_intrinsic: f64,
    pub fraction_embedded: f64,
}

#[derive(Serialize)]
struct Fig1Point {
    split: &'static str,
    index: usize,
    intrinsic: String,
    embedded: String,
    inside_intrinsic: Option<bool>,
    inside_embedded: Option<bool>,
}

fn join(values: ndarray::ArrayView1<f64>) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Hull verdicts of a tuning demo in intrinsic and embedded space.
pub fn fig1_verdict(demo: &TuningDemo) -> Result<(Fig1Verdict, HullFraction, HullFraction)> {
    let tol = crate::hull::DEFAULT_TOLERANCE;
    let intrinsic = hull_fraction(demo.test.view(), demo.train.view(), tol)?;
    let embedded = hull_fraction(demo.embedded_test.view(), demo.embedded_train.view(), tol)?;
    let count = |f: &HullFraction| f.records.iter().filter(|r| r.inside).count();
    let verdict = Fig1Verdict {
        case: demo.name.to_string(),
        n_test: demo.test.nrows(),
        inside_intrinsic: count(&intrinsic),
        inside_embedded: count(&embedded),
        fraction_intrinsic: intrinsic.fraction,
        fraction_embedded: embedded.fraction,
    };
    Ok((verdict, intrinsic, embedded))
}

fn fig1(common: &Common) -> Result<()> {
    let out = output_dir(common, None)?;
    let demos = [fig1_one_dimensional(), fig1_two_dimensional()];
    let mut verdicts = Vec::new();
    let mut files = Vec::new();
    for demo in &demos {
        let (verdict, intrinsic, embedded) = fig1_verdict(demo)?;
        let mut points = Vec::new();
        for i in 0..demo.train.nrows() {
            points.push(Fig1Point {
                split: "train",
                index: i,
                intrinsic: join(demo.train.row(i)),
                embedded: join(demo.embedded_train.row(i)),
                inside_intrinsic: None,
                inside_embedded: None,
            });
        }
        for i in 0..demo.test.nrows() {
            points.push(Fig1Point {
                split: "test",
                index: i,
                intrinsic: join(demo.test.row(i)),
                embedded: join(demo.embedded_test.row(i)),
                inside_intrinsic: Some(intrinsic.records[i].inside),
                inside_embedded: Some(embedded.records[i].inside),
            });
        }
        files.push((demo.name, points, fig1_svgs(demo)));
        verdicts.push(verdict);
    }
    staged(&out, common.force, |w| {
        for (name, points, svgs) in &files {
            w.csv(&format!("fig1_{name}_points.csv"), points)?;
            for (suffix, svg) in svgs {
                w.text(&format!("fig1_{name}_{suffix}.svg"), svg)?;
            }
        }
        w.json("fig1_verdicts.json", &verdicts)
    })?;
    for v in &verdicts {
        println!(
            "{}: {}/{} inside intrinsic hull, {}/{} inside embedded hull",
            v.case, v.inside_intrinsic, v.n_test, v.inside_embedded, v.n_test
        );
    }
    Ok(())
}

/// Scatter plots of a demo. Intrinsic points are drawn against their first
/// two coordinates (or against zero in 1D); embedded responses against the
/// first two neurons.
fn fig1_svgs(demo: &TuningDemo) -> Vec<(&'static str, String)> {
    let xy = |a: &ndarray::Array2<f64>| -> Vec<(f64, f64)> {
        a.rows()
            .into_iter()
            .map(|r| (r[0], if r.len() > 1 { r[1] } else { 0.0 }))
            .collect()
    };
    let intrinsic = scatter(
        &format!("Intrinsic space ({})", demo.name),
        "s1",
        "s2",
        &[("train", xy(&demo.train)), ("test", xy(&demo.test))],
    );
    let mut out = vec![("intrinsic", intrinsic)];
    let n = demo.embedded_train.ncols();
    for (a, b) in (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))) {
        let pick = |m: &ndarray::Array2<f64>| -> Vec<(f64, f64)> {
            m.rows().into_iter().map(|r| (r[a], r[b])).collect()
        };
        let svg = scatter(
            &format!("Embedded space ({}), neurons {} and {}", demo.name, a + 1, b + 1),
            &format!("neuron {}", a + 1),
            &format!("neuron {}", b + 1),
            &[("train", pick(&demo.embedded_train)), ("test", pick(&demo.embedded_test))],
        );
        out.push((
            match (a, b) {
                (0, 1) => "embedded_12",
                (0, 2) => "embedded_13",
                _ => "embedded_23",
            },
            svg,
        ));
    }
    out
}

pub fn read_summary(dir: &Path) -> Result<Summary> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path).map_err(Error::at_path(&path))?;
    Ok(serde_json::from_str(&text)?)
}

fn report(dir: &Path) -> Result<String> {
    if dir.join(crate::artifacts::FAILURE_MARKER).exists() {
        let why = fs::read_to_string(dir.join(crate::artifacts::FAILURE_MARKER)).unwrap_or_default();
        return Err(Error::Stage(format!("run in {} failed: {}", dir.display(), why.trim())));
    }
    let summary = read_summary(dir)?;
    let mut text = String::new();
    if let Ok(info) = fs::read_to_string(dir.join("dataset.json")) {
        if let Ok(info) = serde_json::from_str::<DatasetInfo>(&info) {
            text.push_str(&format!(
                "{}: {} train / {} test, dim {}\n",
                info.description, info.n_train, info.n_test, info.dim
            ));
        }
    }
    text.push_str(&format_summary(&summary));
    Ok(text)
}

pub fn format_summary(s: &Summary) -> String {
    let ci = |m: &crate::experiment::MeanWithInterval| {
        format!("{:.4} [{:.4}, {:.4}]", m.mean, m.interval.low, m.interval.high)
    };
    let mut t = format!("trials: {}\nbase test accuracy: {}\n\n", s.trials, ci(&s.base_accuracy));
    t.push_str("bottleneck  relative accuracy            hull fraction\n");
    for b in &s.bottlenecks {
        let hull = b.hull_fraction.as_ref().map(ci).unwrap_or_else(|| "-".into());
        t.push_str(&format!("{:>10}  {:<28} {hull}\n", b.bottleneck, ci(&b.relative_accuracy)));
    }
    if !s.metrics.is_empty() {
        if let Some(k) = s.analysis_bottleneck {
            t.push_str(&format!("\ndistance statistics (latent space k={k})\n"));
        }
        t.push_str("space   metric             KS                          distance z\n");
        for m in &s.metrics {
            let ks = m.ks.as_ref().map(ci).unwrap_or_else(|| "-".into());
            let z = m
                .z_values
                .iter()
                .find(|(name, _)| name == "distance")
                .map(|(_, v)| ci(v))
                .unwrap_or_else(|| "-".into());
            t.push_str(&format!("{:<7} {:<18} {ks:<27} {z}\n", m.space.name(), m.metric.name()));
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("latentprobe").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"dataset": {"kind": "toy", "n_id": 8, "seed": 3}, "seed": 3, "trials": 2}"#).unwrap();
        let cli = parse(&["run", "--config", path.to_str().unwrap(), "--seed", "9", "--n-id", "2"]);
        let Command::Run { dataset, probe, .. } = &cli.command else { panic!() };
        let cfg = resolve_config(&cli.common, dataset, probe).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.trials, 2);
        let DatasetConfig::Toy(spec) = &cfg.dataset else { panic!() };
        assert_eq!((spec.n_id, spec.seed), (2, 9));
        assert_eq!(spec.train_per_class, 5000);
    }

    #[test]
    fn defaults_are_desk_scale() {
        let cli = parse(&["gen-toy"]);
        let Command::GenToy(ds) = &cli.command else { panic!() };
        let cfg = resolve_config(&cli.common, ds, &ProbeArgs::default()).unwrap();
        let DatasetConfig::Toy(spec) = &cfg.dataset else { panic!() };
        assert_eq!((spec.train_per_class, spec.test_per_class), (1000, 200));
        assert_eq!(spec.target_accuracy, 0.70);
        let cli = parse(&["gen-toy", "--full"]);
        let Command::GenToy(ds) = &cli.command else { panic!() };
        let DatasetConfig::Toy(spec) = resolve_config(&cli.common, ds, &ProbeArgs::default()).unwrap().dataset else {
            panic!()
        };
        assert_eq!(spec.train_per_class, 5000);
    }

    #[test]
    fn toy_flags_rejected_for_mnist() {
        let cli = parse(&["run", "--mnist", "m", "--n-id", "3"]);
        let Command::Run { dataset, probe, .. } = &cli.command else { panic!() };
        assert!(resolve_config(&cli.common, dataset, probe).is_err());
    }

    #[test]
    fn bottleneck_list_parses() {
        let cli = parse(&["run", "--bottlenecks", "2,4", "--trials", "3"]);
        let Command::Run { dataset, probe, .. } = &cli.command else { panic!() };
        let cfg = resolve_config(&cli.common, dataset, probe).unwrap();
        assert_eq!(cfg.probe.bottlenecks, vec![2, 4]);
        assert_eq!(cfg.trials, 3);
    }
}
