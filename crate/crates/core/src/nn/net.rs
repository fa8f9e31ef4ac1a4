use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::loss::log_softmax;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Tanh,
    LogSoftmax,
}

impl Activation {
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Linear => z.clone(),
            Activation::Tanh => z.mapv(f64::tanh),
            Activation::LogSoftmax => {
                let mut out = Array2::zeros(z.dim());
                for (row, mut o) in z.rows().into_iter().zip(out.rows_mut()) {
                    o.assign(&log_softmax(row));
                }
                out
            }
        }
    }

    /// Pulls `grad` (w.r.t. the activation output `a`) back to the pre-activation.
    fn backward(self, a: &Array2<f64>, grad: Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Linear => grad,
            Activation::Tanh => grad * &a.mapv(|v| 1.0 - v * v),
            Activation::LogSoftmax => {
                let mut out = grad;
                for (mut g, row) in out.rows_mut().into_iter().zip(a.rows()) {
                    let total = g.sum();
                    g.zip_mut_with(&row, |gi, &ai| *gi -= ai.exp() * total);
                }
                out
            }
        }
    }
}

/// Weight initialization scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitScale {
    /// `Normal(0, std²)` for every weight.
    Std(f64),
    /// `Normal(0, 1 / fan_in)`.
    FanIn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `outputs x inputs`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// Fully connected feed-forward network. Dropout (inverted) is applied to the
/// output of every layer but the last, in training mode only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Layer>,
    dropout: f64,
    seed: u64,
}

pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

/// Intermediates recorded by a forward pass, consumed by [`DenseNet::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Array2<f64>>,
    activations: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

impl Tape {
    /// Activation of layer `l` before dropout.
    pub fn activation(&self, l: usize) -> &Array2<f64> {
        &self.activations[l]
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
    pub input: Array2<f64>,
}

impl DenseNet {
    /// `dims` lists layer widths from input to output, so `dims.len() ==
    /// activations.len() + 1`. Weights are drawn from a seeded normal
    /// distribution; biases start at zero.
    pub fn new(
        dims: &[usize],
        activations: &[Activation],
        dropout: f64,
        init: InitScale,
        seed: u64,
    ) -> Result<Self> {
        if activations.is_empty() || dims.len() != activations.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} layer sizes do not chain through {} layers",
                dims.len(),
                activations.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidArgument("layer sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidArgument(format!("dropout rate {dropout} outside [0, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(activations.len());
        for (w, &activation) in dims.windows(2).zip(activations) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = match init {
                InitScale::Std(s) => s,
                InitScale::FanIn => 1.0 / (fan_in as f64).sqrt(),
            };
            let normal = Normal::new(0.0, std)
                .map_err(|e| Error::InvalidArgument(format!("init std {std}: {e}")))?;
            let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || normal.sample(&mut rng));
            layers.push(Layer {
                weights,
                bias: Array1::zeros(fan_out),
                activation,
            });
        }
        Ok(DenseNet { layers, dropout, seed })
    }

    /// Builds a net from explicit layers; shapes must chain.
    pub fn from_layers(layers: Vec<Layer>, dropout: f64, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("a network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[1].input_dim() != pair[0].output_dim() {
                return Err(Error::Dimension {
                    expected: pair[0].output_dim(),
                    got: pair[1].input_dim(),
                });
            }
        }
        if layers.iter().any(|l| l.bias.len() != l.output_dim()) {
            return Err(Error::InvalidArgument("bias length differs from layer width".into()));
        }
        Ok(DenseNet { layers, dropout, seed })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Forward pass over a batch (one sample per row).
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>, mut mode: Mode<'_>) -> Result<(Array2<f64>, Tape)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let n = self.layers.len();
        let mut tape = Tape {
            inputs: Vec::with_capacity(n),
            activations: Vec::with_capacity(n),
            masks: Vec::with_capacity(n),
        };
        let mut current = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = current.dot(&layer.weights.t()) + &layer.bias;
            let a = layer.activation.apply(&z);
            let mask = match (&mut mode, l + 1 < n && self.dropout > 0.0) {
                (Mode::Train(rng), true) => {
                    let keep = 1.0 - self.dropout;
                    let scale = 1.0 / keep;
                    Some(Array2::from_shape_simple_fn(a.dim(), || {
                        if rng.random::<f64>() < keep {
                            scale
                        } else {
                            0.0
                        }
                    }))
                }
                _ => None,
            };
            let out = match &mask {
                Some(m) => &a * m,
                None => a.clone(),
            };
            tape.inputs.push(std::mem::replace(&mut current, out));
            tape.activations.push(a);
            tape.masks.push(mask);
        }
        Ok((current, tape))
    }

    pub fn forward(&self, x: ArrayView1<'_, f64>, mode: Mode<'_>) -> Result<(Array1<f64>, Tape)> {
        let batch = x.insert_axis(Axis(0));
        let (out, tape) = self.forward_batch(batch, mode)?;
        Ok((out.row(0).to_owned(), tape))
    }

    /// Evaluation-mode output for a batch.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.forward_batch(x, Mode::Eval).map(|(y, _)| y)
    }

    /// Evaluation-mode activation of layer `l` (0 = first hidden layer).
    pub fn layer_output(&self, x: ArrayView2<'_, f64>, l: usize) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let mut current = x.to_owned();
        for layer in &self.layers[..=l] {
            let z = current.dot(&layer.weights.t()) + &layer.bias;
            current = layer.activation.apply(&z);
        }
        Ok(current)
    }

    /// Backpropagates `grad_out` (w.r.t. the network output) through the tape.
    pub fn backward(&self, tape: &Tape, grad_out: Array2<f64>) -> Gradients {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut grad = grad_out;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if let Some(mask) = &tape.masks[l] {
                grad *= mask;
            }
            let dz = layer.activation.backward(&tape.activations[l], grad);
            let dw = dz.t().dot(&tape.inputs[l]);
            let db = dz.sum_axis(Axis(0));
            grad = dz.dot(&layer.weights);
            grads.push((dw, db));
        }
        grads.reverse();
        Gradients {
            layers: grads,
            input: grad,
        }
    }

    pub fn sgd_step(&mut self, grads: &Gradients, learning_rate: f64) {
        for (layer, (dw, db)) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weights.scaled_add(-learning_rate, dw);
            layer.bias.scaled_add(-learning_rate, db);
        }
    }

    /// Flat parameter access in a fixed order (per layer: weights row-major, then bias).
    pub(crate) fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            if idx < nw {
                let cols = layer.weights.ncols();
                return &mut layer.weights[(idx / cols, idx % cols)];
            }
            idx -= nw;
            if idx < layer.bias.len() {
                return &mut layer.bias[idx];
            }
            idx -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }
}

impl Gradients {
    pub(crate) fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn same_seed_same_weights() {
        let a = DenseNet::new(&[4, 3], &[Activation::Tanh], 0.0, InitScale::Std(1.0), 7).unwrap();
        let b = DenseNet::new(&[4, 3], &[Activation::Tanh], 0.0, InitScale::Std(1.0), 7).unwrap();
        assert_eq!(a, b);
        let c = DenseNet::new(&[4, 3], &[Activation::Tanh], 0.0, InitScale::Std(1.0), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_std_gives_zero_weights() {
        let net = DenseNet::new(&[5, 4, 2], &[Activation::Tanh, Activation::Linear], 0.0, InitScale::Std(0.0), 1)
            .unwrap();
        assert!(net.layers().iter().all(|l| l.weights.iter().all(|&w| w == 0.0)));
    }

    #[test]
    fn weight_sample_statistics() {
        let net = DenseNet::new(&[1000, 1000], &[Activation::Linear], 0.0, InitScale::Std(1.0), 3).unwrap();
        let w = &net.layers()[0].weights;
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let std = (w.mapv(|v| (v - mean) * (v - mean)).sum() / n).sqrt();
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((std - 1.0).abs() < 0.01, "std {std}");
    }

    #[test]
    fn fan_in_scale() {
        let net = DenseNet::new(&[400, 400], &[Activation::Linear], 0.0, InitScale::FanIn, 3).unwrap();
        let w = &net.layers()[0].weights;
        let std = (w.mapv(|v| v * v).sum() / w.len() as f64).sqrt();
        assert!((std - 0.05).abs() < 0.002, "std {std}");
    }

    #[test]
    fn non_chaining_dims() {
        assert!(DenseNet::new(&[4], &[Activation::Tanh], 0.0, InitScale::Std(1.0), 0).is_err());
        assert!(DenseNet::new(&[4, 3, 2], &[Activation::Tanh], 0.0, InitScale::Std(1.0), 0).is_err());
        let l1 = Layer {
            weights: Array2::zeros((3, 4)),
            bias: Array1::zeros(3),
            activation: Activation::Tanh,
        };
        let l2 = Layer {
            weights: Array2::zeros((2, 5)),
            bias: Array1::zeros(2),
            activation: Activation::Linear,
        };
        assert!(matches!(DenseNet::from_layers(vec![l1, l2], 0.0, 0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn identity_network() {
        let layer = Layer {
            weights: Array2::eye(2),
            bias: Array1::zeros(2),
            activation: Activation::Linear,
        };
        let net = DenseNet::from_layers(vec![layer], 0.0, 0).unwrap();
        let (y, _) = net.forward(array![0.5, -0.5].view(), Mode::Eval).unwrap();
        assert_eq!(y, array![0.5, -0.5]);
    }

    #[test]
    fn zero_tanh_layer() {
        let net = DenseNet::new(&[3, 4], &[Activation::Tanh], 0.0, InitScale::Std(0.0), 0).unwrap();
        let (y, _) = net.forward(array![1.0, 2.0, 3.0].view(), Mode::Eval).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn input_dimension_checked() {
        let net = DenseNet::new(&[3, 2], &[Activation::Tanh], 0.0, InitScale::Std(1.0), 0).unwrap();
        assert!(matches!(net.forward(array![1.0].view(), Mode::Eval), Err(Error::Dimension { .. })));
    }

    #[test]
    fn dropout_masks_reproducible() {
        let net = DenseNet::new(&[6, 50, 3], &[Activation::Tanh, Activation::Linear], 0.999, InitScale::Std(1.0), 5)
            .unwrap();
        let x = array![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            net.forward(x.view(), Mode::Train(&mut rng)).unwrap().0
        };
        assert_eq!(run(), run());
        let (eval_a, _) = net.forward(x.view(), Mode::Eval).unwrap();
        let (eval_b, _) = net.forward(x.view(), Mode::Eval).unwrap();
        assert_eq!(eval_a, eval_b);
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        let net = DenseNet::new(&[4, 30, 3], &[Activation::Tanh, Activation::Linear], 0.2, InitScale::Std(1.0), 9)
            .unwrap();
        let x = array![[0.5, -0.1, 0.3, 0.8]];
        let eval = net.layer_output(x.view(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trials = 20_000;
        let mut acc = Array2::<f64>::zeros(eval.dim());
        for _ in 0..trials {
            let (_, tape) = net.forward_batch(x.view(), Mode::Train(&mut rng)).unwrap();
            acc += &(tape.activations[0].clone() * tape.masks[0].as_ref().unwrap());
        }
        acc /= trials as f64;
        let total_eval: f64 = eval.iter().map(|v| v.abs()).sum();
        let total_diff: f64 = acc.iter().zip(eval.iter()).map(|(a, e)| (a - e).abs()).sum();
        assert!(total_diff / total_eval < 0.02, "relative deviation {}", total_diff / total_eval);
    }

    #[test]
    fn eval_mode_has_no_dropout() {
        let net = DenseNet::new(&[3, 8, 2], &[Activation::Tanh, Activation::Linear], 0.5, InitScale::Std(1.0), 2)
            .unwrap();
        let x = array![[0.2, 0.4, -0.6]];
        let (_, tape) = net.forward_batch(x.view(), Mode::Eval).unwrap();
        assert!(tape.masks.iter().all(Option::is_none));
    }
}
