use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
    Softmax,
}

/// One dense layer: width, nonlinearity and the dropout rate applied to its
/// output during training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
    #[serde(default)]
    pub dropout_rate: f64,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation, dropout_rate: f64) -> Self {
        Self {
            width,
            activation,
            dropout_rate,
        }
    }

    pub fn relu(width: usize) -> Self {
        Self::new(width, Activation::Relu, 0.0)
    }

    pub fn linear(width: usize) -> Self {
        Self::new(width, Activation::Linear, 0.0)
    }

    pub fn softmax(width: usize) -> Self {
        Self::new(width, Activation::Softmax, 0.0)
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }
}

/// Affine parameters of a layer. `weights` is `fan_in x fan_out`, so a batch
/// `x` maps to `x W + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Loss functions supported by [`Network::backward`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    CrossEntropy,
    MeanSquaredError,
}

/// Supervision for one batch.
#[derive(Clone, Copy, Debug)]
pub enum Targets<'a> {
    Labels(&'a [usize]),
    Values(ArrayView2<'a, f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Inference,
    /// Inverted dropout with masks drawn from the given seed.
    Training { seed: u64 },
}

/// Everything backpropagation needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub input: Array2<f64>,
    /// Pre-activations `z` per layer.
    pub pre: Vec<Array2<f64>>,
    /// Post-activation, post-dropout outputs per layer.
    pub outputs: Vec<Array2<f64>>,
    /// Scaled keep masks (`mask / keep_prob`), present only where dropout ran.
    pub masks: Vec<Option<Array2<f64>>>,
}

impl ForwardPass {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("network has at least one layer")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0_f64, |m, g| m.max(g.abs()))
    }
}

/// A stack of dense layers with a designated tap layer whose outputs define
/// the neural space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr", into = "NetworkRepr")]
pub struct Network {
    input_dim: usize,
    layers: Vec<LayerSpec>,
    params: Vec<Dense>,
    tap_index: usize,
    frozen: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkRepr {
    input_dim: usize,
    layers: Vec<LayerSpec>,
    params: Vec<Dense>,
    tap_index: usize,
    frozen: bool,
}

impl TryFrom<NetworkRepr> for Network {
    type Error = Error;

    fn try_from(r: NetworkRepr) -> Result<Self> {
        let mut net = Network::from_parameters(r.input_dim, r.layers, r.params, r.tap_index)?;
        net.frozen = r.frozen;
        Ok(net)
    }
}

impl From<Network> for NetworkRepr {
    fn from(n: Network) -> Self {
        NetworkRepr {
            input_dim: n.input_dim,
            layers: n.layers,
            params: n.params,
            tap_index: n.tap_index,
            frozen: n.frozen,
        }
    }
}

fn validate_layers(input_dim: usize, layers: &[LayerSpec], tap_index: usize) -> Result<()> {
    if input_dim == 0 {
        return Err(Error::InvalidConfig("input width must be positive".into()));
    }
    if layers.is_empty() {
        return Err(Error::InvalidConfig("network needs at least one layer".into()));
    }
    if tap_index >= layers.len() {
        return Err(Error::InvalidConfig(format!(
            "tap index {tap_index} out of range for {} layers",
            layers.len()
        )));
    }
    let last = layers.len() - 1;
    for (i, l) in layers.iter().enumerate() {
        if l.width == 0 {
            return Err(Error::InvalidConfig(format!("layer {i} has zero width")));
        }
        if !(0.0..1.0).contains(&l.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "layer {i} dropout rate {} outside [0, 1)",
                l.dropout_rate
            )));
        }
        if l.activation == Activation::Softmax && i != last {
            return Err(Error::InvalidConfig(format!(
                "softmax is only allowed on the final layer (found on layer {i})"
            )));
        }
    }
    if layers[last].dropout_rate > 0.0 {
        return Err(Error::InvalidConfig("dropout on the output layer is not supported".into()));
    }
    Ok(())
}

impl Network {
    /// Builds a network with He-normal weights for relu layers and
    /// Glorot-normal weights otherwise; biases start at zero.
    pub fn new(input_dim: usize, layers: Vec<LayerSpec>, tap_index: usize, seed: u64) -> Result<Self> {
        validate_layers(input_dim, &layers, tap_index)?;
        let mut rng = stream_rng(seed, &[stream::INIT]);
        let mut fan_in = input_dim;
        let mut params = Vec::with_capacity(layers.len());
        for l in &layers {
            let scale = match l.activation {
                Activation::Relu => (2.0 / fan_in as f64).sqrt(),
                Activation::Linear | Activation::Softmax => (2.0 / (fan_in + l.width) as f64).sqrt(),
            };
            let weights = Array2::from_shape_simple_fn((fan_in, l.width), || {
                let z: f64 = rng.sample(StandardNormal);
                z * scale
            });
            params.push(Dense {
                weights,
                bias: Array1::zeros(l.width),
            });
            fan_in = l.width;
        }
        Ok(Self {
            input_dim,
            layers,
            params,
            tap_index,
            frozen: false,
        })
    }

    /// Builds a network from explicit parameters, checking that shapes chain.
    pub fn from_parameters(
        input_dim: usize,
        layers: Vec<LayerSpec>,
        params: Vec<Dense>,
        tap_index: usize,
    ) -> Result<Self> {
        validate_layers(input_dim, &layers, tap_index)?;
        if params.len() != layers.len() {
            return Err(Error::dim("parameter layer count", layers.len(), params.len()));
        }
        let mut fan_in = input_dim;
        for (l, p) in layers.iter().zip(&params) {
            if p.weights.nrows() != fan_in {
                return Err(Error::dim("weight rows", fan_in, p.weights.nrows()));
            }
            if p.weights.ncols() != l.width {
                return Err(Error::dim("weight columns", l.width, p.weights.ncols()));
            }
            if p.bias.len() != l.width {
                return Err(Error::dim("bias length", l.width, p.bias.len()));
            }
            fan_in = l.width;
        }
        Ok(Self {
            input_dim,
            layers,
            params,
            tap_index,
            frozen: false,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.width).unwrap_or(0)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Dense] {
        &self.params
    }

    /// Mutable parameter access; refused on a frozen network.
    pub fn params_mut(&mut self) -> Result<&mut [Dense]> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        Ok(&mut self.params)
    }

    pub fn tap_index(&self) -> usize {
        self.tap_index
    }

    pub fn tap_width(&self) -> usize {
        self.layers[self.tap_index].width
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.weights.len() + p.bias.len()).sum()
    }

    /// SHA-256 over the bit patterns of every parameter, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            for v in p.weights.iter().chain(p.bias.iter()) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn forward(&self, batch: ArrayView2<f64>, mode: Mode) -> Result<ForwardPass> {
        self.forward_from(0, batch, mode)
    }

    /// Runs layers `start..` on `batch`, which must have the width of layer
    /// `start - 1` (or the input width when `start == 0`).
    pub fn forward_from(&self, start: usize, batch: ArrayView2<f64>, mode: Mode) -> Result<ForwardPass> {
        if start >= self.layers.len() {
            return Err(Error::InvalidInput(format!(
                "start layer {start} out of range for {} layers",
                self.layers.len()
            )));
        }
        let expected = if start == 0 {
            self.input_dim
        } else {
            self.layers[start - 1].width
        };
        if batch.ncols() != expected {
            return Err(Error::dim("forward input columns", expected, batch.ncols()));
        }
        let mut rng = match mode {
            Mode::Training { seed } => Some(stream_rng(seed, &[stream::DROPOUT])),
            Mode::Inference => None,
        };
        let n = self.layers.len() - start;
        let mut pass = ForwardPass {
            input: batch.to_owned(),
            pre: Vec::with_capacity(n),
            outputs: Vec::with_capacity(n),
            masks: Vec::with_capacity(n),
        };
        for (spec, p) in self.layers[start..].iter().zip(&self.params[start..]) {
            let prev = pass.outputs.last().unwrap_or(&pass.input);
            let mut z = prev.dot(&p.weights);
            z += &p.bias;
            let mut a = activate(spec.activation, &z);
            let mask = match rng.as_mut() {
                Some(rng) if spec.dropout_rate > 0.0 => {
                    let keep = 1.0 - spec.dropout_rate;
                    let scale = 1.0 / keep;
                    let m = Array2::from_shape_simple_fn(a.raw_dim(), || {
                        if rng.random::<f64>() < keep {
                            scale
                        } else {
                            0.0
                        }
                    });
                    a *= &m;
                    Some(m)
                }
                _ => None,
            };
            pass.pre.push(z);
            pass.outputs.push(a);
            pass.masks.push(mask);
        }
        Ok(pass)
    }

    /// Mean loss of a completed forward pass.
    pub fn loss(&self, pass: &ForwardPass, targets: Targets, loss: Loss) -> Result<f64> {
        let out = pass.output();
        check_targets(out, targets, loss)?;
        let b = out.nrows().max(1) as f64;
        Ok(match (loss, targets) {
            (Loss::CrossEntropy, Targets::Labels(y)) => {
                -y.iter()
                    .enumerate()
                    .map(|(i, &c)| out[[i, c]].max(f64::MIN_POSITIVE).ln())
                    .sum::<f64>()
                    / b
            }
            (Loss::MeanSquaredError, Targets::Values(t)) => {
                let d = out.ncols().max(1) as f64;
                Zip::from(out).and(t).fold(0.0, |acc, &o, &t| acc + (o - t) * (o - t)) / (b * d)
            }
            _ => unreachable!("checked by check_targets"),
        })
    }

    /// Gradients of the mean batch loss. Dropout masks are those recorded in
    /// `pass`. The pass must have been produced by [`Network::forward`].
    pub fn backward(&self, pass: &ForwardPass, targets: Targets, loss: Loss) -> Result<Gradients> {
        if pass.outputs.len() != self.layers.len() {
            return Err(Error::dim("forward pass layer count", self.layers.len(), pass.outputs.len()));
        }
        let out = pass.output();
        check_targets(out, targets, loss)?;
        let last = self.layers.len() - 1;
        let b = out.nrows().max(1) as f64;

        let mut delta = match (loss, targets) {
            (Loss::CrossEntropy, Targets::Labels(y)) => {
                if self.layers[last].activation != Activation::Softmax {
                    return Err(Error::InvalidConfig(
                        "cross-entropy loss requires a softmax output layer".into(),
                    ));
                }
                let mut d = out.clone();
                for (i, &c) in y.iter().enumerate() {
                    d[[i, c]] -= 1.0;
                }
                d /= b;
                d
            }
            (Loss::MeanSquaredError, Targets::Values(t)) => {
                let scale = 2.0 / (b * out.ncols().max(1) as f64);
                let g = (out - &t) * scale;
                activation_backward(self.layers[last].activation, &pass.pre[last], out, g)
            }
            _ => unreachable!("checked by check_targets"),
        };

        let mut gw = Vec::with_capacity(self.layers.len());
        let mut gb = Vec::with_capacity(self.layers.len());
        for l in (0..=last).rev() {
            let prev = if l == 0 { &pass.input } else { &pass.outputs[l - 1] };
            gw.push(prev.t().dot(&delta));
            gb.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut g = delta.dot(&self.params[l].weights.t());
                if let Some(m) = &pass.masks[l - 1] {
                    g *= m;
                }
                // hidden layers are never softmax, so the post-dropout output is not needed here
                delta = activation_backward(self.layers[l - 1].activation, &pass.pre[l - 1], &pass.outputs[l - 1], g);
            }
        }
        gw.reverse();
        gb.reverse();
        Ok(Gradients {
            weights: gw,
            biases: gb,
        })
    }

    /// Inference-mode output, evaluated in row chunks.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.run_chunked(0, x, None)
    }

    /// Inference-mode activations of the tap layer.
    pub fn tap_activations(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.run_chunked(0, x, Some(self.tap_index))
    }

    /// Inference-mode output when the tap layer is replaced by `acts`.
    pub fn forward_after_tap(&self, acts: ArrayView2<f64>) -> Result<Array2<f64>> {
        if self.tap_index == self.layers.len() - 1 {
            return Err(Error::InvalidConfig("tap layer is the output layer; no head to run".into()));
        }
        self.run_chunked(self.tap_index + 1, acts, None)
    }

    fn run_chunked(&self, start: usize, x: ArrayView2<f64>, stop_at: Option<usize>) -> Result<Array2<f64>> {
        const CHUNK: usize = 1024;
        let out_layer = stop_at.unwrap_or(self.layers.len() - 1);
        let width = self.layers[out_layer].width;
        let mut out = Array2::zeros((x.nrows(), width));
        if x.nrows() == 0 {
            let expected = if start == 0 { self.input_dim } else { self.layers[start - 1].width };
            if x.ncols() != expected {
                return Err(Error::dim("forward input columns", expected, x.ncols()));
            }
            return Ok(out);
        }
        for begin in (0..x.nrows()).step_by(CHUNK) {
            let end = (begin + CHUNK).min(x.nrows());
            let pass = self.forward_from(start, x.slice(s![begin..end, ..]), Mode::Inference)?;
            out.slice_mut(s![begin..end, ..]).assign(&pass.outputs[out_layer - start]);
        }
        Ok(out)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in row.into_iter().enumerate() {
        if v > best_v || (i == 0 && v.is_nan()) {
            best = i;
            best_v = v;
        }
    }
    best
}

fn check_targets(out: &Array2<f64>, targets: Targets, loss: Loss) -> Result<()> {
    match (loss, targets) {
        (Loss::CrossEntropy, Targets::Labels(y)) => {
            if y.len() != out.nrows() {
                return Err(Error::dim("label count", out.nrows(), y.len()));
            }
            let k = out.ncols();
            if let Some((row, &label)) = y.iter().enumerate().find(|(_, &c)| c >= k) {
                return Err(Error::InvalidLabel {
                    row,
                    label,
                    n_classes: k,
                });
            }
            Ok(())
        }
        (Loss::MeanSquaredError, Targets::Values(t)) => {
            if t.nrows() != out.nrows() {
                return Err(Error::dim("target rows", out.nrows(), t.nrows()));
            }
            if t.ncols() != out.ncols() {
                return Err(Error::dim("target columns", out.ncols(), t.ncols()));
            }
            Ok(())
        }
        (Loss::CrossEntropy, Targets::Values(_)) => {
            Err(Error::InvalidConfig("cross-entropy loss needs class labels".into()))
        }
        (Loss::MeanSquaredError, Targets::Labels(_)) => {
            Err(Error::InvalidConfig("mean squared error needs real-valued targets".into()))
        }
    }
}

fn activate(act: Activation, z: &Array2<f64>) -> Array2<f64> {
    match act {
        Activation::Linear => z.clone(),
        Activation::Relu => z.mapv(|v| v.max(0.0)),
        Activation::Softmax => {
            let mut a = z.clone();
            for mut row in a.rows_mut() {
                let m = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                row.mapv_inplace(|v| (v - m).exp());
                let s = row.sum();
                row /= s;
            }
            a
        }
    }
}

/// Maps `dL/da` to `dL/dz` given the layer's pre-activation `z` and activation `a`.
fn activation_backward(act: Activation, z: &Array2<f64>, a: &Array2<f64>, mut g: Array2<f64>) -> Array2<f64> {
    match act {
        Activation::Linear => g,
        Activation::Relu => {
            Zip::from(&mut g).and(z).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            g
        }
        Activation::Softmax => {
            for (mut grow, arow) in g.rows_mut().into_iter().zip(a.rows()) {
                let dot: f64 = grow.iter().zip(arow.iter()).map(|(g, a)| g * a).sum();
                Zip::from(&mut grow).and(&arow).for_each(|g, &a| *g = a * (*g - dot));
            }
            g
        }
    }
}
