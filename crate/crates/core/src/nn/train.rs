use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::network::{argmax, Loss, Mode, Network, Targets};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, stream_rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 30,
            batch_size: 128,
            learning_rate: adam.learning_rate,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_epsilon: adam.epsilon,
            seed: 0,
            loss: Loss::CrossEntropy,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        self.adam().validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub loss: f64,
    /// Running training accuracy; only for classification targets.
    pub accuracy: Option<f64>,
}

pub type History = Vec<EpochStats>;

/// What the network is trained to reproduce.
#[derive(Clone, Copy, Debug)]
pub enum TrainTargets<'a> {
    Labels(&'a [usize]),
    Values(ArrayView2<'a, f64>),
}

/// Mini-batch Adam training. Shuffling and dropout streams are derived from
/// `config.seed`, so the result is a pure function of the inputs.
pub fn train(net: &mut Network, inputs: ArrayView2<f64>, targets: TrainTargets, config: &TrainConfig) -> Result<History> {
    if net.is_frozen() {
        return Err(Error::Frozen);
    }
    config.validate()?;
    let n = inputs.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if inputs.ncols() != net.input_dim() {
        return Err(Error::dim("training input columns", net.input_dim(), inputs.ncols()));
    }
    match (targets, config.loss) {
        (TrainTargets::Labels(y), Loss::CrossEntropy) => {
            if y.len() != n {
                return Err(Error::dim("training labels", n, y.len()));
            }
            let k = net.output_dim();
            if let Some((row, &label)) = y.iter().enumerate().find(|(_, &c)| c >= k) {
                return Err(Error::InvalidLabel { row, label, n_classes: k });
            }
        }
        (TrainTargets::Values(t), Loss::MeanSquaredError) => {
            if t.nrows() != n {
                return Err(Error::dim("training target rows", n, t.nrows()));
            }
        }
        _ => {
            return Err(Error::InvalidConfig(format!(
                "targets do not match loss {:?}",
                config.loss
            )))
        }
    }

    let adam = config.adam();
    let mut state = AdamState::new(net);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut rng = stream_rng(config.seed, &[stream::SHUFFLE, epoch as u64]);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let x = inputs.select(Axis(0), idx);
            let mode = Mode::Training {
                seed: derive_seed(config.seed, &[stream::DROPOUT, epoch as u64, b as u64]),
            };
            let pass = net.forward(x.view(), mode)?;
            let (loss, grads) = match targets {
                TrainTargets::Labels(y) => {
                    let yb: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
                    let t = Targets::Labels(&yb);
                    hits += pass
                        .output()
                        .rows()
                        .into_iter()
                        .zip(&yb)
                        .filter(|(row, &c)| argmax(row.iter().copied()) == c)
                        .count();
                    (net.loss(&pass, t, config.loss)?, net.backward(&pass, t, config.loss)?)
                }
                TrainTargets::Values(tv) => {
                    let tb: Array2<f64> = tv.select(Axis(0), idx);
                    let t = Targets::Values(tb.view());
                    (net.loss(&pass, t, config.loss)?, net.backward(&pass, t, config.loss)?)
                }
            };
            loss_sum += loss * idx.len() as f64;
            state.step(net, &grads, &adam)?;
        }
        history.push(EpochStats {
            loss: loss_sum / n as f64,
            accuracy: match targets {
                TrainTargets::Labels(_) => Some(hits as f64 / n as f64),
                TrainTargets::Values(_) => None,
            },
        });
    }
    Ok(history)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    pub correct: Vec<bool>,
}

impl Evaluation {
    pub fn from_outputs(outputs: ArrayView2<f64>, labels: &[usize]) -> Result<Self> {
        if outputs.nrows() != labels.len() {
            return Err(Error::dim("evaluation labels", outputs.nrows(), labels.len()));
        }
        let predictions: Vec<usize> = outputs.rows().into_iter().map(|r| argmax(r.iter().copied())).collect();
        Ok(Self::from_predictions(predictions, labels))
    }

    pub fn from_predictions(predictions: Vec<usize>, labels: &[usize]) -> Self {
        let correct: Vec<bool> = predictions.iter().zip(labels).map(|(p, y)| p == y).collect();
        let accuracy = if correct.is_empty() {
            0.0
        } else {
            correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64
        };
        Self {
            accuracy,
            predictions,
            correct,
        }
    }
}

/// Inference-mode accuracy with lowest-index argmax.
pub fn evaluate(net: &Network, features: ArrayView2<f64>, labels: &[usize]) -> Result<Evaluation> {
    let out = net.predict_proba(features)?;
    Evaluation::from_outputs(out.view(), labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;
    use ndarray::Array2;

    fn toy() -> (Array2<f64>, Vec<usize>) {
        let x = Array2::from_shape_fn((40, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5);
        let y = (0..40).map(|i| usize::from(x[[i, 0]] + x[[i, 1]] > 0.0)).collect();
        (x, y)
    }

    fn net() -> Network {
        Network::new(2, vec![LayerSpec::relu(8).with_dropout(0.2), LayerSpec::softmax(2)], 0, 3).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let (x, y) = toy();
        let mut n = net();
        let before = n.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            batch_size: 8,
            ..Default::default()
        };
        let h = train(&mut n, x.view(), TrainTargets::Labels(&y), &cfg).unwrap();
        assert_eq!(h.len(), 3);
        assert_eq!(n.params(), before.params());
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let (x, y) = toy();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 8,
            learning_rate: 1e-2,
            seed: 11,
            ..Default::default()
        };
        let mut a = net();
        let mut b = net();
        let ha = train(&mut a, x.view(), TrainTargets::Labels(&y), &cfg).unwrap();
        let hb = train(&mut b, x.view(), TrainTargets::Labels(&y), &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a.checksum(), b.checksum());
    }

    #[test]
    fn rejects_frozen_and_empty() {
        let (x, y) = toy();
        let mut n = net();
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(&mut n, x.slice(ndarray::s![0..0, ..]), TrainTargets::Labels(&[]), &cfg),
            Err(Error::EmptyDataset)
        ));
        n.freeze();
        assert!(matches!(train(&mut n, x.view(), TrainTargets::Labels(&y), &cfg), Err(Error::Frozen)));
    }

    #[test]
    fn uniform_logits_on_balanced_data_score_one_tenth() {
        let layers = vec![LayerSpec::softmax(10)];
        let params = vec![crate::nn::Dense {
            weights: Array2::zeros((3, 10)),
            bias: ndarray::Array1::zeros(10),
        }];
        let n = Network::from_parameters(3, layers, params, 0).unwrap();
        let x = Array2::from_shape_fn((100, 3), |(i, j)| (i + j) as f64);
        let y: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let e = evaluate(&n, x.view(), &y).unwrap();
        assert_eq!(e.accuracy, 0.1);
        assert!(e.predictions.iter().all(|&p| p == 0));
    }

    #[test]
    fn memorized_training_set_scores_one() {
        let (x, y) = toy();
        let mut n = Network::new(2, vec![LayerSpec::relu(32), LayerSpec::softmax(2)], 0, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 400,
            batch_size: 40,
            learning_rate: 1e-2,
            ..Default::default()
        };
        train(&mut n, x.view(), TrainTargets::Labels(&y), &cfg).unwrap();
        assert_eq!(evaluate(&n, x.view(), &y).unwrap().accuracy, 1.0);
    }
}
