//! Bottleneck autoencoder probe of a frozen classifier's tap layer.
//!
//! The autoencoder is trained to reconstruct tapped activations. Its
//! reconstructions are then pushed through the classifier layers after the
//! tap, and the resulting "hybrid" accuracy is compared to the original.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ActivationSet, Split};
use crate::error::{Error, Result};
use crate::nn::{train, Activation, Evaluation, LayerSpec, Loss, Network, TrainConfig, TrainTargets};
use crate::rng::{derive_seed, stream};

pub const DEFAULT_HIDDEN_WIDTH: usize = 256;
pub const DEFAULT_AUTOENCODER_EPOCHS: usize = 50;
pub const DEFAULT_BOTTLENECKS: [usize; 4] = [2, 4, 8, 16];

pub fn default_autoencoder_training() -> TrainConfig {
    TrainConfig {
        epochs: DEFAULT_AUTOENCODER_EPOCHS,
        loss: Loss::MeanSquaredError,
        ..TrainConfig::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub bottleneck: usize,
    pub training: TrainConfig,
}

impl AutoencoderSpec {
    pub fn new(input_dim: usize, bottleneck: usize) -> Self {
        Self {
            input_dim,
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            bottleneck,
            training: default_autoencoder_training(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.training.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.bottleneck == 0 || self.bottleneck >= self.input_dim {
            return Err(Error::InvalidConfig(format!(
                "bottleneck {} must lie in [1, {})",
                self.bottleneck, self.input_dim
            )));
        }
        if self.hidden_width == 0 {
            return Err(Error::InvalidConfig("autoencoder hidden width must be positive".into()));
        }
        if self.training.loss != Loss::MeanSquaredError {
            return Err(Error::InvalidConfig("autoencoders are trained with mean squared error".into()));
        }
        self.training.validate()
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        vec![
            LayerSpec::relu(self.hidden_width),
            LayerSpec::linear(self.bottleneck),
            LayerSpec::relu(self.hidden_width),
            LayerSpec::linear(self.input_dim),
        ]
    }
}

/// A `d -> h -> k -> h -> d` network whose tap is the linear bottleneck.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Network", into = "Network")]
pub struct Autoencoder {
    net: Network,
}

impl TryFrom<Network> for Autoencoder {
    type Error = Error;

    fn try_from(net: Network) -> Result<Self> {
        Self::from_network(net)
    }
}

impl From<Autoencoder> for Network {
    fn from(ae: Autoencoder) -> Network {
        ae.net
    }
}

impl Autoencoder {
    /// Wraps a network after checking it has the autoencoder shape.
    pub fn from_network(net: Network) -> Result<Self> {
        let layers = net.layers();
        let ok = layers.len() == 4
            && net.tap_index() == 1
            && layers[1].activation == Activation::Linear
            && layers[3].activation == Activation::Linear
            && layers[3].width == net.input_dim()
            && layers[0].width == layers[2].width
            && layers.iter().all(|l| l.dropout_rate == 0.0);
        if !ok {
            return Err(Error::InvalidConfig(
                "network is not a symmetric bottleneck autoencoder tapped at its bottleneck".into(),
            ));
        }
        Ok(Self { net })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn bottleneck(&self) -> usize {
        self.net.tap_width()
    }

    pub fn encode(&self, acts: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.net.tap_activations(acts)
    }

    pub fn decode(&self, latent: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.net.forward_after_tap(latent)
    }

    pub fn reconstruct(&self, acts: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.net.predict_proba(acts)
    }

    /// Mean over all entries of the squared reconstruction error.
    pub fn mse(&self, acts: ArrayView2<f64>) -> Result<f64> {
        if acts.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let rec = self.reconstruct(acts)?;
        Ok((&rec - &acts).mapv(|e| e * e).sum() / acts.len() as f64)
    }
}

/// Trains an autoencoder to reconstruct `acts`. Only the activation matrix
/// is passed in; labels never reach the probe.
pub fn train_autoencoder(spec: &AutoencoderSpec, acts: ArrayView2<f64>) -> Result<Autoencoder> {
    spec.validate()?;
    if acts.ncols() != spec.input_dim {
        return Err(Error::dim("autoencoder input columns", spec.input_dim, acts.ncols()));
    }
    let mut net = Network::new(spec.input_dim, spec.layers(), 1, spec.training.seed)?;
    train(&mut net, acts, TrainTargets::Values(acts), &spec.training)?;
    net.freeze();
    Autoencoder::from_network(net)
}

/// Runs the classifier head on reconstructed activations.
pub fn hybrid_accuracy(frozen_net: &Network, autoencoder: &Autoencoder, acts: &ActivationSet) -> Result<Evaluation> {
    if !frozen_net.is_frozen() {
        return Err(Error::NotFrozen);
    }
    if frozen_net.tap_width() != autoencoder.input_dim() {
        return Err(Error::dim("autoencoder width", frozen_net.tap_width(), autoencoder.input_dim()));
    }
    let rec = autoencoder.reconstruct(acts.activations.view())?;
    let out = frozen_net.forward_after_tap(rec.view())?;
    Evaluation::from_outputs(out.view(), &acts.labels)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeResult {
    pub bottleneck: usize,
    pub trial: usize,
    pub seed: u64,
    pub mse_train: f64,
    pub mse_test: f64,
    pub base_accuracy: f64,
    pub hybrid_accuracy: f64,
    pub relative_accuracy: f64,
    pub hybrid_correct: Vec<bool>,
    pub hybrid_predictions_train: Vec<usize>,
    pub hybrid_predictions_test: Vec<usize>,
    #[serde(skip)]
    pub latent_train: Array2<f64>,
    #[serde(skip)]
    pub latent_test: Array2<f64>,
    #[serde(skip)]
    pub autoencoder: Autoencoder,
}

impl ProbeResult {
    /// Latent codes as activation sets carrying the hybrid predictions.
    pub fn latent_sets(&self, train: &ActivationSet, test: &ActivationSet) -> Result<(ActivationSet, ActivationSet)> {
        let source = |split: &str| format!("latent k={} trial={} {split}", self.bottleneck, self.trial);
        let tr = ActivationSet::new(
            self.latent_train.clone(),
            train.labels.clone(),
            self.hybrid_predictions_train.clone(),
            train.n_classes,
            Split::Train,
            source("train"),
        )?;
        let te = ActivationSet::new(
            self.latent_test.clone(),
            test.labels.clone(),
            self.hybrid_predictions_test.clone(),
            test.n_classes,
            Split::Test,
            source("test"),
        )?;
        Ok((tr, te))
    }
}

/// Shared settings for every autoencoder of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSettings {
    pub bottlenecks: Vec<usize>,
    pub hidden_width: usize,
    #[serde(deserialize_with = "autoencoder_training_over_defaults")]
    pub training: TrainConfig,
}

/// Fields missing from a partial `training` block keep the autoencoder defaults.
fn autoencoder_training_over_defaults<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<TrainConfig, D::Error> {
    use serde::de::Error as _;
    let given = serde_json::Map::<String, serde_json::Value>::deserialize(d)?;
    let mut merged = serde_json::to_value(default_autoencoder_training()).map_err(D::Error::custom)?;
    if let Some(m) = merged.as_object_mut() {
        m.extend(given);
    }
    serde_json::from_value(merged).map_err(D::Error::custom)
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            bottlenecks: DEFAULT_BOTTLENECKS.to_vec(),
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            training: default_autoencoder_training(),
        }
    }
}

/// Seed of the autoencoder for one sweep entry.
pub fn autoencoder_seed(seed: u64, bottleneck: usize, trial: usize) -> u64 {
    derive_seed(seed, &[stream::AUTOENCODER, bottleneck as u64, trial as u64])
}

pub fn probe_one(
    frozen_net: &Network,
    train_acts: &ActivationSet,
    test_acts: &ActivationSet,
    settings: &ProbeSettings,
    bottleneck: usize,
    trial: usize,
    seed: u64,
) -> Result<ProbeResult> {
    if !frozen_net.is_frozen() {
        return Err(Error::NotFrozen);
    }
    if test_acts.base_accuracy <= 0.0 {
        return Err(Error::InvalidInput(
            "base network has zero test accuracy; relative accuracy is undefined".into(),
        ));
    }
    let ae_seed = autoencoder_seed(seed, bottleneck, trial);
    let mut training = settings.training.clone();
    training.seed = ae_seed;
    let spec = AutoencoderSpec {
        input_dim: train_acts.dim(),
        hidden_width: settings.hidden_width,
        bottleneck,
        training,
    };
    let ae = train_autoencoder(&spec, train_acts.activations.view())?;
    let hybrid_test = hybrid_accuracy(frozen_net, &ae, test_acts)?;
    let hybrid_train = hybrid_accuracy(frozen_net, &ae, train_acts)?;
    Ok(ProbeResult {
        bottleneck,
        trial,
        seed: ae_seed,
        mse_train: ae.mse(train_acts.activations.view())?,
        mse_test: ae.mse(test_acts.activations.view())?,
        base_accuracy: test_acts.base_accuracy,
        hybrid_accuracy: hybrid_test.accuracy,
        relative_accuracy: hybrid_test.accuracy / test_acts.base_accuracy,
        hybrid_correct: hybrid_test.correct,
        hybrid_predictions_train: hybrid_train.predictions,
        hybrid_predictions_test: hybrid_test.predictions,
        latent_train: ae.encode(train_acts.activations.view())?,
        latent_test: ae.encode(test_acts.activations.view())?,
        autoencoder: ae,
    })
}

/// One probe per `(bottleneck, trial)`, run in parallel and returned sorted
/// by bottleneck then trial.
pub fn probe_sweep(
    frozen_net: &Network,
    train_acts: &ActivationSet,
    test_acts: &ActivationSet,
    settings: &ProbeSettings,
    trials: usize,
    seed: u64,
) -> Result<Vec<ProbeResult>> {
    if settings.bottlenecks.is_empty() {
        return Err(Error::InvalidConfig("bottleneck list is empty".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidConfig("at least one probe trial is required".into()));
    }
    if train_acts.dim() != test_acts.dim() {
        return Err(Error::dim("test activation width", train_acts.dim(), test_acts.dim()));
    }
    let mut bottlenecks = settings.bottlenecks.clone();
    bottlenecks.sort_unstable();
    bottlenecks.dedup();
    let jobs: Vec<(usize, usize)> =
        bottlenecks.iter().flat_map(|&k| (0..trials).map(move |t| (k, t))).collect();
    jobs.par_iter()
        .map(|&(k, t)| probe_one(frozen_net, train_acts, test_acts, settings, k, t, seed))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ProbeRow {
    bottleneck: usize,
    trial: usize,
    mse_train: f64,
    mse_test: f64,
    base_acc: f64,
    hybrid_acc: f64,
    rel_acc: f64,
}

pub fn write_probe_csv(results: &[ProbeResult], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Stage(format!("{}: {e}", path.display())))?;
    for r in results {
        w.serialize(ProbeRow {
            bottleneck: r.bottleneck,
            trial: r.trial,
            mse_train: r.mse_train,
            mse_test: r.mse_test,
            base_acc: r.base_accuracy,
            hybrid_acc: r.hybrid_accuracy,
            rel_acc: r.relative_accuracy,
        })?;
    }
    w.flush().map_err(Error::at_path(path))
}
