//! End-to-end runs: train the classifier, probe its tap layer, test hull
//! membership in the latent spaces and relate correctness to distance.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    gen_gaussian_task, load_activations, load_mnist, ActivationSet, Dataset, SigmaCalibration, Split, ToySpec,
};
use crate::error::{Error, Result};
use crate::hull::{hull_fraction, subsample_rows, HullFraction, DEFAULT_TOLERANCE};
use crate::nn::{evaluate, train, Activation, History, LayerSpec, Loss, Network, TrainConfig, TrainTargets};
use crate::probe::{probe_one, ProbeResult, ProbeSettings};
use crate::rng::{derive_seed, stream};
use crate::stats::{
    binned_accuracy, bootstrap_ci, correctness_by_hull_table, ks_statistic, logistic_fit, nn_distance, Bin,
    DistanceReport, GroupMean, Interval, KsResult, LogisticFit, Metric, Space, COEFFICIENT_NAMES,
};

pub const DESK_TOY_TRAIN_PER_CLASS: usize = 1000;
pub const DESK_TOY_TEST_PER_CLASS: usize = 200;
pub const DESK_MNIST_TRAIN: usize = 10_000;
pub const DESK_MNIST_TEST: usize = 2_000;
pub const FULL_TOY_TRAIN_PER_CLASS: usize = 5000;
pub const FULL_TOY_TEST_PER_CLASS: usize = 1000;
pub const MNIST_TRAIN_SIZE: usize = 60_000;
/// Classifier epochs at full scale.
pub const FULL_SCALE_EPOCHS: usize = 30;

/// Epochs giving a subset of `subset` samples the optimizer step count of
/// `FULL_SCALE_EPOCHS` over `full` samples.
pub fn step_matched_epochs(full: usize, subset: usize) -> usize {
    (FULL_SCALE_EPOCHS * full).div_ceil(subset.max(1)).max(1)
}

/// Where the samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Toy(ToySpec),
    Mnist {
        dir: PathBuf,
        #[serde(default)]
        n_train: Option<usize>,
        #[serde(default)]
        n_test: Option<usize>,
    },
    /// Precomputed activations of an external network, plus the frozen
    /// network whose layers after the tap act as the classifier head.
    Activations { train: PathBuf, test: PathBuf, network: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HiddenLayer {
    pub width: usize,
    #[serde(default)]
    pub dropout: f64,
}

/// Relu hidden layers followed by a softmax output sized to the classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub hidden: Vec<HiddenLayer>,
    /// Hidden layer defining the neural space; the last one when absent.
    #[serde(default)]
    pub tap_index: Option<usize>,
}

impl ArchitectureConfig {
    /// One hidden layer of 32 units.
    pub fn toy() -> Self {
        Self {
            hidden: vec![HiddenLayer { width: 32, dropout: 0.0 }],
            tap_index: None,
        }
    }

    /// Three hidden layers ending in a 128-unit neural space.
    pub fn mnist_mlp(first_width: usize) -> Self {
        Self {
            hidden: vec![
                HiddenLayer { width: first_width, dropout: 0.2 },
                HiddenLayer { width: 256, dropout: 0.4 },
                HiddenLayer { width: 128, dropout: 0.5 },
            ],
            tap_index: None,
        }
    }

    pub fn tap(&self) -> usize {
        self.tap_index.unwrap_or(self.hidden.len().saturating_sub(1))
    }

    pub fn layers(&self, n_classes: usize) -> Vec<LayerSpec> {
        self.hidden
            .iter()
            .map(|h| LayerSpec::relu(h.width).with_dropout(h.dropout))
            .chain(std::iter::once(LayerSpec::softmax(n_classes)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() {
            return Err(Error::InvalidConfig("architecture needs at least one hidden layer".into()));
        }
        if self.tap() >= self.hidden.len() {
            return Err(Error::InvalidConfig(format!(
                "tap index {} must name one of the {} hidden layers",
                self.tap(),
                self.hidden.len()
            )));
        }
        for (i, h) in self.hidden.iter().enumerate() {
            if h.width == 0 || !(0.0..1.0).contains(&h.dropout) {
                return Err(Error::InvalidConfig(format!(
                    "hidden layer {i} needs a positive width and dropout in [0, 1)"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub hull: bool,
    /// Bottlenecks whose latent spaces get hull tests; all when absent.
    pub hull_bottlenecks: Option<Vec<usize>>,
    pub hull_tolerance: f64,
    /// Uniformly subsample hull generators above this count.
    pub max_hull_generators: Option<usize>,
    pub distances: bool,
    pub metrics: Vec<Metric>,
    /// Latent space used for distance analyses; the largest bottleneck when absent.
    pub analysis_bottleneck: Option<usize>,
    pub n_bins: usize,
    pub bootstrap_resamples: usize,
    pub confidence_level: f64,
    pub save_models: bool,
    pub save_activations: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            hull: true,
            hull_bottlenecks: None,
            hull_tolerance: DEFAULT_TOLERANCE,
            max_hull_generators: None,
            distances: true,
            metrics: Metric::ALL.to_vec(),
            analysis_bottleneck: None,
            n_bins: 10,
            bootstrap_resamples: 1000,
            confidence_level: 0.95,
            save_models: false,
            save_activations: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub architecture: Option<ArchitectureConfig>,
    #[serde(default)]
    pub classifier: TrainConfig,
    #[serde(default)]
    pub probe: ProbeSettings,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn toy(n_id: usize, full: bool) -> Self {
        let spec = ToySpec {
            n_id,
            ..ToySpec::default()
        };
        let mut cfg = Self::with_dataset(DatasetConfig::Toy(spec));
        cfg.set_scale(full);
        cfg
    }

    pub fn mnist(dir: impl Into<PathBuf>, full: bool) -> Self {
        let mut cfg = Self::with_dataset(DatasetConfig::Mnist {
            dir: dir.into(),
            n_train: None,
            n_test: None,
        });
        cfg.set_scale(full);
        cfg
    }

    /// Switches dataset sizes between desk and full scale. Desk-scale
    /// classifiers train for more epochs so that they take as many
    /// optimizer steps as at full scale.
    pub fn set_scale(&mut self, full: bool) {
        match &mut self.dataset {
            DatasetConfig::Toy(spec) => {
                if full {
                    spec.train_per_class = FULL_TOY_TRAIN_PER_CLASS;
                    spec.test_per_class = FULL_TOY_TEST_PER_CLASS;
                    self.classifier.epochs = FULL_SCALE_EPOCHS;
                } else {
                    spec.train_per_class = DESK_TOY_TRAIN_PER_CLASS;
                    spec.test_per_class = DESK_TOY_TEST_PER_CLASS;
                    self.classifier.epochs =
                        step_matched_epochs(FULL_TOY_TRAIN_PER_CLASS, DESK_TOY_TRAIN_PER_CLASS);
                }
            }
            DatasetConfig::Mnist { n_train, n_test, .. } => {
                if full {
                    *n_train = None;
                    *n_test = None;
                    self.classifier.epochs = FULL_SCALE_EPOCHS;
                } else {
                    *n_train = Some(DESK_MNIST_TRAIN);
                    *n_test = Some(DESK_MNIST_TEST);
                    self.classifier.epochs = step_matched_epochs(MNIST_TRAIN_SIZE, DESK_MNIST_TRAIN);
                }
            }
            DatasetConfig::Activations { .. } => {}
        }
    }

    pub fn with_dataset(dataset: DatasetConfig) -> Self {
        Self {
            dataset,
            architecture: None,
            classifier: TrainConfig::default(),
            probe: ProbeSettings::default(),
            trials: 1,
            analysis: AnalysisConfig::default(),
            seed: 0,
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Architecture in effect: explicit, or the default for the dataset.
    pub fn resolved_architecture(&self) -> Option<ArchitectureConfig> {
        match (&self.architecture, &self.dataset) {
            (Some(a), _) => Some(a.clone()),
            (None, DatasetConfig::Toy(_)) => Some(ArchitectureConfig::toy()),
            (None, DatasetConfig::Mnist { .. }) => Some(ArchitectureConfig::mnist_mlp(256)),
            (None, DatasetConfig::Activations { .. }) => None,
        }
    }

    pub fn sorted_bottlenecks(&self) -> Vec<usize> {
        let mut b = self.probe.bottlenecks.clone();
        b.sort_unstable();
        b.dedup();
        b
    }

    pub fn analysis_bottleneck(&self) -> Option<usize> {
        self.analysis
            .analysis_bottleneck
            .or_else(|| self.sorted_bottlenecks().last().copied())
    }

    pub fn hull_bottlenecks(&self) -> Vec<usize> {
        if !self.analysis.hull {
            return Vec::new();
        }
        let mut b = self
            .analysis
            .hull_bottlenecks
            .clone()
            .unwrap_or_else(|| self.sorted_bottlenecks());
        if self.analysis.distances {
            b.extend(self.analysis_bottleneck());
        }
        b.sort_unstable();
        b.dedup();
        b
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidConfig(m));
        if self.trials == 0 {
            return invalid("trials must be at least 1".into());
        }
        if self.probe.bottlenecks.is_empty() {
            return invalid("probe bottleneck list is empty".into());
        }
        if self.probe.bottlenecks.contains(&0) {
            return invalid("bottleneck widths must be positive".into());
        }
        if self.probe.hidden_width == 0 {
            return invalid("probe hidden width must be positive".into());
        }
        if self.probe.training.loss != Loss::MeanSquaredError {
            return invalid("probe training must use mean_squared_error".into());
        }
        self.probe.training.validate()?;
        if self.classifier.loss != Loss::CrossEntropy {
            return invalid("classifier training must use cross_entropy".into());
        }
        self.classifier.validate()?;
        let a = &self.analysis;
        if !(a.hull_tolerance > 0.0 && a.hull_tolerance.is_finite()) {
            return invalid("hull tolerance must be positive".into());
        }
        if a.max_hull_generators == Some(0) {
            return invalid("max_hull_generators must be positive".into());
        }
        if a.n_bins == 0 || a.bootstrap_resamples == 0 {
            return invalid("n_bins and bootstrap_resamples must be positive".into());
        }
        if !(a.confidence_level > 0.0 && a.confidence_level < 1.0) {
            return invalid("confidence level must lie in (0, 1)".into());
        }
        if a.distances && a.metrics.is_empty() {
            return invalid("distance analysis needs at least one metric".into());
        }
        if let Some(k) = a.analysis_bottleneck {
            if !self.probe.bottlenecks.contains(&k) {
                return invalid(format!("analysis bottleneck {k} is not among the probed bottlenecks"));
            }
        }
        if let Some(hb) = &a.hull_bottlenecks {
            if let Some(k) = hb.iter().find(|k| !self.probe.bottlenecks.contains(k)) {
                return invalid(format!("hull bottleneck {k} is not among the probed bottlenecks"));
            }
        }
        match &self.dataset {
            DatasetConfig::Toy(spec) => spec.validate()?,
            DatasetConfig::Mnist { n_train, n_test, .. } => {
                if *n_train == Some(0) || *n_test == Some(0) {
                    return invalid("MNIST subset sizes must be positive".into());
                }
            }
            DatasetConfig::Activations { .. } => {
                if self.architecture.is_some() {
                    return invalid("architecture does not apply to activation datasets".into());
                }
            }
        }
        if let Some(arch) = self.resolved_architecture() {
            arch.validate()?;
            let width = arch.hidden[arch.tap()].width;
            if let Some(k) = self.probe.bottlenecks.iter().find(|&&k| k >= width) {
                return invalid(format!("bottleneck {k} must be smaller than the neural-space width {width}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HullResult {
    pub bottleneck: usize,
    pub fraction: HullFraction,
}

/// Statistics of one `(trial, space, metric)` distance analysis.
#[derive(Clone, Debug, Serialize)]
pub struct SpaceAnalysis {
    pub trial: usize,
    pub space: Space,
    pub metric: Metric,
    pub bins: Vec<Bin>,
    /// Bootstrap interval of each bin's accuracy.
    pub bin_intervals: Vec<Interval>,
    pub groups: Vec<GroupMean>,
    pub logistic: Option<LogisticFit>,
    /// Why the logistic fit is missing, when it is.
    pub logistic_note: Option<String>,
    pub ks: Option<KsResult>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub classifier_seed: u64,
    pub base_accuracy_train: f64,
    pub base_accuracy_test: f64,
    pub probes: Vec<ProbeResult>,
    pub hull: Vec<HullResult>,
    pub reports: Vec<DistanceReport>,
    pub analyses: Vec<SpaceAnalysis>,
    #[serde(skip)]
    pub classifier: Network,
    #[serde(skip)]
    pub train_acts: ActivationSet,
    #[serde(skip)]
    pub test_acts: ActivationSet,
}

impl TrialOutcome {
    pub fn probe(&self, bottleneck: usize) -> Option<&ProbeResult> {
        self.probes.iter().find(|p| p.bottleneck == bottleneck)
    }

    pub fn hull_fraction(&self, bottleneck: usize) -> Option<f64> {
        self.hull.iter().find(|h| h.bottleneck == bottleneck).map(|h| h.fraction.fraction)
    }

    pub fn analysis(&self, space: Space, metric: Metric) -> Option<&SpaceAnalysis> {
        self.analyses.iter().find(|a| a.space == space && a.metric == metric)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanWithInterval {
    pub mean: f64,
    pub interval: Interval,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BottleneckSummary {
    pub bottleneck: usize,
    pub relative_accuracy: MeanWithInterval,
    pub hull_fraction: Option<MeanWithInterval>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub space: Space,
    pub metric: Metric,
    pub ks: Option<MeanWithInterval>,
    /// z-values per logistic term, in coefficient order.
    pub z_values: Vec<(String, MeanWithInterval)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub base_accuracy: MeanWithInterval,
    pub bottlenecks: Vec<BottleneckSummary>,
    pub metrics: Vec<MetricSummary>,
    pub analysis_bottleneck: Option<usize>,
}

/// Dataset facts worth recording next to the results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub description: String,
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub n_classes: usize,
    pub sigma: Option<f64>,
    pub calibration: Option<SigmaCalibration>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub dataset: DatasetInfo,
    pub trials: Vec<TrialOutcome>,
    pub summary: Summary,
}

/// The inputs shared by every trial.
enum Source {
    Raw(Dataset),
    Activations {
        train: ActivationSet,
        test: ActivationSet,
        network: Network,
    },
}

fn stage<T>(what: impl Fn() -> String, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage(format!("{}: {e}", what())))
}

fn load_source(cfg: &ExperimentConfig) -> Result<(Source, DatasetInfo)> {
    match &cfg.dataset {
        DatasetConfig::Toy(spec) => {
            let task = gen_gaussian_task(spec)?;
            let d = &task.dataset;
            let info = DatasetInfo {
                description: format!("toy gaussian task, n_id={} n_input={}", spec.n_id, spec.n_input),
                n_train: d.train_labels.len(),
                n_test: d.test_labels.len(),
                dim: d.dim(),
                n_classes: d.n_classes,
                sigma: Some(task.sigma),
                calibration: task.calibration.clone(),
            };
            Ok((Source::Raw(task.dataset), info))
        }
        DatasetConfig::Mnist { dir, n_train, n_test } => {
            let d = load_mnist(dir, *n_train, *n_test)?;
            let info = DatasetInfo {
                description: format!("MNIST from {}", dir.display()),
                n_train: d.train_labels.len(),
                n_test: d.test_labels.len(),
                dim: d.dim(),
                n_classes: d.n_classes,
                sigma: None,
                calibration: None,
            };
            Ok((Source::Raw(d), info))
        }
        DatasetConfig::Activations { train, test, network } => {
            let tr = load_activations(train)?;
            let te = load_activations(test)?;
            let text = std::fs::read_to_string(network).map_err(Error::at_path(network))?;
            let mut net: Network = serde_json::from_str(&text)?;
            net.freeze();
            if tr.dim() != te.dim() || tr.dim() != net.tap_width() {
                return Err(Error::dim("activation width", net.tap_width(), tr.dim().max(te.dim())));
            }
            if tr.n_classes != net.output_dim() {
                return Err(Error::dim("network classes", tr.n_classes, net.output_dim()));
            }
            if let Some(k) = cfg.probe.bottlenecks.iter().find(|&&k| k >= tr.dim()) {
                return Err(Error::InvalidConfig(format!(
                    "bottleneck {k} must be smaller than the activation width {}",
                    tr.dim()
                )));
            }
            let info = DatasetInfo {
                description: format!("activations {} / {}", train.display(), test.display()),
                n_train: tr.len(),
                n_test: te.len(),
                dim: tr.dim(),
                n_classes: tr.n_classes,
                sigma: None,
                calibration: None,
            };
            Ok((
                Source::Activations {
                    train: tr,
                    test: te,
                    network: net,
                },
                info,
            ))
        }
    }
}

/// Seed of the base classifier of one trial.
pub fn classifier_seed(seed: u64, trial: usize) -> u64 {
    derive_seed(seed, &[stream::TRIAL, trial as u64])
}

pub struct TrainedClassifier {
    pub network: Network,
    pub history: History,
    pub train: ActivationSet,
    pub test: ActivationSet,
}

/// Trains and freezes a classifier, then taps both splits.
pub fn train_classifier(
    data: &Dataset,
    arch: &ArchitectureConfig,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainedClassifier> {
    let mut net = Network::new(data.dim(), arch.layers(data.n_classes), arch.tap(), seed)?;
    let mut cfg = config.clone();
    cfg.seed = seed;
    let history = train(&mut net, data.train_features.view(), TrainTargets::Labels(&data.train_labels), &cfg)?;
    net.freeze();
    let tr = tap_split(&net, data.train_features.view(), &data.train_labels, data.n_classes, Split::Train)?;
    let te = tap_split(&net, data.test_features.view(), &data.test_labels, data.n_classes, Split::Test)?;
    Ok(TrainedClassifier {
        network: net,
        history,
        train: tr,
        test: te,
    })
}

/// Loads a toy or MNIST dataset; activation datasets have no raw samples.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<(Dataset, DatasetInfo)> {
    match load_source(cfg)? {
        (Source::Raw(d), info) => Ok((d, info)),
        (Source::Activations { .. }, _) => Err(Error::InvalidConfig(
            "this command needs a toy or MNIST dataset, not precomputed activations".into(),
        )),
    }
}

pub fn tap_split(
    net: &Network,
    features: ndarray::ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    split: Split,
) -> Result<ActivationSet> {
    let acts = net.tap_activations(features)?;
    let eval = evaluate(net, features, labels)?;
    let name = match split {
        Split::Train => "tap train",
        Split::Test => "tap test",
    };
    ActivationSet::new(acts, labels.to_vec(), eval.predictions, n_classes, split, name)
}

fn summarize(values: Vec<f64>, cfg: &ExperimentConfig, path: &[u64]) -> Result<MeanWithInterval> {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let interval = bootstrap_ci(
        &values,
        cfg.analysis.bootstrap_resamples,
        cfg.analysis.confidence_level,
        derive_seed(cfg.seed, path),
    )?;
    Ok(MeanWithInterval { mean, interval, values })
}

fn metric_id(m: Metric) -> u64 {
    Metric::ALL.iter().position(|&x| x == m).unwrap_or(0) as u64
}

fn space_id(s: Space) -> u64 {
    match s {
        Space::Neural => 0,
        Space::Latent => 1,
    }
}

pub(crate) fn analyze_report(report: &DistanceReport, metric: Metric, cfg: &ExperimentConfig) -> Result<SpaceAnalysis> {
    let distances = report.distances(metric);
    let correct = report.correct();
    let bins = binned_accuracy(&distances, &correct, cfg.analysis.n_bins)?;
    let bin_intervals = bins
        .iter()
        .enumerate()
        .map(|(b, bin)| {
            let flags: Vec<f64> = bin.members.iter().map(|&i| f64::from(u8::from(correct[i]))).collect();
            bootstrap_ci(
                &flags,
                cfg.analysis.bootstrap_resamples,
                cfg.analysis.confidence_level,
                derive_seed(
                    cfg.seed,
                    &[stream::BOOTSTRAP, 3, report.trial as u64, space_id(report.space), metric_id(metric), b as u64],
                ),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let groups = correctness_by_hull_table(std::slice::from_ref(report), metric)?;
    let (logistic, logistic_note) = match report.in_hull() {
        Some(h) => match logistic_fit(&distances, &h, &correct) {
            Ok(f) => (Some(f), None),
            Err(e @ (Error::NonIdentifiable | Error::InvalidInput(_))) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        },
        None => (None, Some("hull membership not computed".into())),
    };
    let (hit, miss) = report.split_by_correctness(metric);
    let ks = if hit.is_empty() || miss.is_empty() {
        None
    } else {
        Some(ks_statistic(&hit, &miss)?)
    };
    Ok(SpaceAnalysis {
        trial: report.trial,
        space: report.space,
        metric,
        bins,
        bin_intervals,
        groups,
        logistic,
        logistic_note,
        ks,
    })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn distance_report(
    space: Space,
    trial: usize,
    train: ndarray::ArrayView2<f64>,
    test: ndarray::ArrayView2<f64>,
    train_labels: &[usize],
    test_labels: &[usize],
    in_hull: Option<&[bool]>,
    correct: &[bool],
    metrics: &[Metric],
) -> Result<DistanceReport> {
    let column = |m: Metric| -> Result<Vec<f64>> {
        if metrics.contains(&m) {
            nn_distance(test, train, m, Some(train_labels), Some(test_labels))
        } else {
            Ok(vec![0.0; test.nrows()])
        }
    };
    DistanceReport::from_columns(
        space,
        trial,
        &column(Metric::Euclidean)?,
        &column(Metric::Cosine)?,
        &column(Metric::ClassConditional)?,
        in_hull,
        correct,
    )
}

fn run_trial(cfg: &ExperimentConfig, source: &Source, trial: usize) -> Result<TrialOutcome> {
    let ctx = |what: &str| format!("trial {trial}: {what}");
    let seed = classifier_seed(cfg.seed, trial);
    let (net, tr, te) = match source {
        Source::Raw(data) => {
            let arch = cfg.resolved_architecture().expect("raw datasets always have an architecture");
            let c = stage(|| ctx("classifier training"), train_classifier(data, &arch, &cfg.classifier, seed))?;
            (c.network, c.train, c.test)
        }
        Source::Activations { train, test, network } => (network.clone(), train.clone(), test.clone()),
    };

    let bottlenecks = cfg.sorted_bottlenecks();
    let probes = stage(
        || ctx("probe"),
        bottlenecks
            .par_iter()
            .map(|&k| probe_one(&net, &tr, &te, &cfg.probe, k, trial, cfg.seed))
            .collect::<Result<Vec<_>>>(),
    )?;

    let mut hull = Vec::new();
    for k in cfg.hull_bottlenecks() {
        let p = probes.iter().find(|p| p.bottleneck == k).expect("hull bottlenecks are probed");
        let generators = match cfg.analysis.max_hull_generators {
            Some(max) => {
                subsample_rows(p.latent_train.view(), max, derive_seed(cfg.seed, &[trial as u64, k as u64])).0
            }
            None => p.latent_train.clone(),
        };
        let fraction = stage(
            || ctx(&format!("hull k={k}")),
            hull_fraction(p.latent_test.view(), generators.view(), cfg.analysis.hull_tolerance),
        )?;
        hull.push(HullResult { bottleneck: k, fraction });
    }

    let mut reports = Vec::new();
    let mut analyses = Vec::new();
    if cfg.analysis.distances {
        let k = cfg.analysis_bottleneck().expect("validated nonempty bottlenecks");
        let p = probes.iter().find(|p| p.bottleneck == k).expect("analysis bottleneck is probed");
        let in_hull: Option<Vec<bool>> = hull.iter().find(|h| h.bottleneck == k).map(|h| h.fraction.inside());
        let metrics = &cfg.analysis.metrics;
        let neural = stage(
            || ctx("neural distances"),
            distance_report(
                Space::Neural,
                trial,
                tr.activations.view(),
                te.activations.view(),
                &tr.labels,
                &te.labels,
                in_hull.as_deref(),
                &te.base_correct(),
                metrics,
            ),
        )?;
        let latent = stage(
            || ctx("latent distances"),
            distance_report(
                Space::Latent,
                trial,
                p.latent_train.view(),
                p.latent_test.view(),
                &tr.labels,
                &te.labels,
                in_hull.as_deref(),
                &p.hybrid_correct,
                metrics,
            ),
        )?;
        for report in [&neural, &latent] {
            for &m in metrics {
                analyses.push(stage(|| ctx("distance statistics"), analyze_report(report, m, cfg))?);
            }
        }
        reports.push(neural);
        reports.push(latent);
    }

    Ok(TrialOutcome {
        trial,
        classifier_seed: seed,
        base_accuracy_train: tr.base_accuracy,
        base_accuracy_test: te.base_accuracy,
        probes,
        hull,
        reports,
        analyses,
        classifier: net,
        train_acts: tr,
        test_acts: te,
    })
}

fn build_summary(cfg: &ExperimentConfig, trials: &[TrialOutcome]) -> Result<Summary> {
    let base = summarize(
        trials.iter().map(|t| t.base_accuracy_test).collect(),
        cfg,
        &[stream::BOOTSTRAP, 0],
    )?;
    let hull_ks = cfg.hull_bottlenecks();
    let mut bottlenecks = Vec::new();
    for k in cfg.sorted_bottlenecks() {
        let rel: Vec<f64> = trials.iter().filter_map(|t| t.probe(k)).map(|p| p.relative_accuracy).collect();
        let relative_accuracy = summarize(rel, cfg, &[stream::BOOTSTRAP, 1, k as u64])?;
        let hull_fraction = if hull_ks.contains(&k) {
            let v: Vec<f64> = trials.iter().filter_map(|t| t.hull_fraction(k)).collect();
            Some(summarize(v, cfg, &[stream::BOOTSTRAP, 2, k as u64])?)
        } else {
            None
        };
        bottlenecks.push(BottleneckSummary {
            bottleneck: k,
            relative_accuracy,
            hull_fraction,
        });
    }
    let mut metrics = Vec::new();
    if cfg.analysis.distances {
        for space in [Space::Neural, Space::Latent] {
            for &metric in &cfg.analysis.metrics {
                let found: Vec<&SpaceAnalysis> = trials.iter().filter_map(|t| t.analysis(space, metric)).collect();
                let ks_values: Vec<f64> = found.iter().filter_map(|a| a.ks.map(|k| k.statistic)).collect();
                let path = [stream::BOOTSTRAP, 4, space_id(space), metric_id(metric)];
                let ks = if ks_values.is_empty() {
                    None
                } else {
                    Some(summarize(ks_values, cfg, &path)?)
                };
                let mut z_values = Vec::new();
                for (term, name) in COEFFICIENT_NAMES.iter().enumerate() {
                    let z: Vec<f64> = found.iter().filter_map(|a| a.logistic.as_ref().map(|f| f.z_values[term])).collect();
                    if !z.is_empty() {
                        let p = [stream::BOOTSTRAP, 5, space_id(space), metric_id(metric), term as u64];
                        z_values.push((name.to_string(), summarize(z, cfg, &p)?));
                    }
                }
                metrics.push(MetricSummary {
                    space,
                    metric,
                    ks,
                    z_values,
                });
            }
        }
    }
    Ok(Summary {
        trials: trials.len(),
        base_accuracy: base,
        bottlenecks,
        metrics,
        analysis_bottleneck: if cfg.analysis.distances { cfg.analysis_bottleneck() } else { None },
    })
}

/// A run that stopped early, with whatever completed before the failure.
#[derive(Debug)]
pub struct PartialRun {
    pub error: Error,
    pub dataset: Option<DatasetInfo>,
    pub trials: Vec<TrialOutcome>,
}

/// Runs every trial in the current rayon pool. On failure, returns the
/// completed trials alongside the error.
pub fn execute(cfg: &ExperimentConfig) -> std::result::Result<ExperimentOutcome, Box<PartialRun>> {
    let fail = |error, dataset, trials| Box::new(PartialRun { error, dataset, trials });
    if let Err(e) = cfg.validate() {
        return Err(fail(e, None, Vec::new()));
    }
    let (source, info) = match stage(|| "dataset".into(), load_source(cfg)) {
        Ok(s) => s,
        Err(e) => return Err(fail(e, None, Vec::new())),
    };
    let mut trials = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        match run_trial(cfg, &source, t) {
            Ok(o) => trials.push(o),
            Err(e) => return Err(fail(e, Some(info), trials)),
        }
    }
    match stage(|| "summary".into(), build_summary(cfg, &trials)) {
        Ok(summary) => Ok(ExperimentOutcome {
            config: cfg.clone(),
            dataset: info,
            trials,
            summary,
        }),
        Err(e) => Err(fail(e, Some(info), trials)),
    }
}

/// Layer activation kinds of a resolved architecture, for display.
pub fn describe_architecture(arch: &ArchitectureConfig, input_dim: usize, n_classes: usize) -> String {
    let mut parts = vec![input_dim.to_string()];
    for (i, h) in arch.hidden.iter().enumerate() {
        let mut s = h.width.to_string();
        if h.dropout > 0.0 {
            s.push_str(&format!("(p={})", h.dropout));
        }
        if i == arch.tap() {
            s.push('*');
        }
        parts.push(s);
    }
    parts.push(format!("{n_classes} {:?}", Activation::Softmax).to_lowercase());
    parts.join(" -> ")
}
