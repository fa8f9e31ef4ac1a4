use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{DenseNet, InitScale, Mode};
use super::LossKind;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// SGD step size; `None` picks the default for the loss being trained
    /// (see [`LossKind::default_learning_rate`]).
    #[serde(default)]
    pub learning_rate: Option<f64>,
    /// Standard deviation of the initial weights.
    pub init_std: f64,
    /// Use `1/sqrt(fan_in)` instead of `init_std`.
    pub init_scaled: bool,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 50,
            learning_rate: None,
            init_std: 1.0,
            init_scaled: false,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn init_scale(&self) -> InitScale {
        if self.init_scaled {
            InitScale::FanIn
        } else {
            InitScale::Std(self.init_std)
        }
    }

    /// The step size used when training under `loss`.
    pub fn learning_rate_for(&self, loss: LossKind) -> f64 {
        self.learning_rate.unwrap_or_else(|| loss.default_learning_rate())
    }

    /// A copy with the learning rate pinned to the value used for `loss`.
    pub fn for_loss(&self, loss: LossKind) -> TrainConfig {
        TrainConfig {
            learning_rate: Some(self.learning_rate_for(loss)),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("batch size and epochs must be positive".into()));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "learning rate {lr} must be a finite non-negative number"
                )));
            }
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::InvalidArgument(format!("init std {} is invalid", self.init_std)));
        }
        Ok(())
    }
}

/// Anything that can take SGD steps over minibatches of sample indices.
pub trait Trainable {
    fn n_samples(&self) -> usize;

    /// Runs one minibatch, updates parameters and returns the mean batch loss.
    fn step(&mut self, batch: &[usize], learning_rate: f64) -> Result<f64>;

    fn params_finite(&self) -> bool;
}

/// Minibatch SGD. Each epoch reshuffles the sample order with a seeded RNG
/// and keeps the final short batch. Returns the per-epoch mean training loss.
/// An unset learning rate falls back to the MSE default; callers that know
/// their loss should pass [`TrainConfig::for_loss`].
pub fn fit<T: Trainable + ?Sized>(model: &mut T, config: &TrainConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let n = model.n_samples();
    if n == 0 {
        return Err(Error::EmptyInput("training set is empty".into()));
    }
    let learning_rate = config.learning_rate_for(LossKind::Mse);
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let loss = model.step(batch, learning_rate)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            total += loss * batch.len() as f64;
        }
        let mean = total / n as f64;
        if !model.params_finite() {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        log::debug!("epoch {epoch}: loss {mean:.6}");
        trace.push(mean);
    }
    Ok(trace)
}

/// A single network fitted to `(input, target)` rows.
pub struct Supervised<'a> {
    pub net: DenseNet,
    inputs: ArrayView2<'a, f64>,
    targets: ArrayView2<'a, f64>,
    loss: LossKind,
    dropout_rng: ChaCha8Rng,
}

impl<'a> Supervised<'a> {
    pub fn new(
        net: DenseNet,
        inputs: ArrayView2<'a, f64>,
        targets: ArrayView2<'a, f64>,
        loss: LossKind,
    ) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::Dimension {
                expected: inputs.nrows(),
                got: targets.nrows(),
            });
        }
        if inputs.ncols() != net.input_dim() {
            return Err(Error::Dimension {
                expected: net.input_dim(),
                got: inputs.ncols(),
            });
        }
        if targets.ncols() != net.output_dim() {
            return Err(Error::Dimension {
                expected: net.output_dim(),
                got: targets.ncols(),
            });
        }
        let dropout_rng = dropout_rng(net.seed());
        Ok(Supervised {
            net,
            inputs,
            targets,
            loss,
            dropout_rng,
        })
    }
}

pub(crate) fn dropout_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

impl Trainable for Supervised<'_> {
    fn n_samples(&self) -> usize {
        self.inputs.nrows()
    }

    fn step(&mut self, batch: &[usize], learning_rate: f64) -> Result<f64> {
        let x = self.inputs.select(Axis(0), batch);
        let y = self.targets.select(Axis(0), batch);
        let (out, tape) = self.net.forward_batch(x.view(), Mode::Train(&mut self.dropout_rng))?;
        let (loss, grad) = self.loss.batch(out.view(), y.view())?;
        let grads = self.net.backward(&tape, grad);
        self.net.sgd_step(&grads, learning_rate);
        Ok(loss)
    }

    fn params_finite(&self) -> bool {
        self.net.is_finite()
    }
}

/// Trains `net` to map `inputs` rows onto `targets` rows under `loss`.
pub fn train(
    net: DenseNet,
    inputs: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    loss: LossKind,
    config: &TrainConfig,
) -> Result<(DenseNet, Vec<f64>)> {
    let mut job = Supervised::new(net, inputs, targets, loss)?;
    let trace = fit(&mut job, &config.for_loss(loss))?;
    Ok((job.net, trace))
}

/// Largest relative discrepancy between backpropagated parameter gradients and
/// central differences of the evaluation-mode batch loss.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`, so gradients below
/// `1e-6` are effectively compared in absolute terms.
pub fn grad_check(
    net: &DenseNet,
    loss: LossKind,
    inputs: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    step: f64,
) -> Result<f64> {
    let (out, tape) = net.forward_batch(inputs, Mode::Eval)?;
    let (_, grad) = loss.batch(out.view(), targets)?;
    let analytic = net.backward(&tape, grad).flat();

    let eval = |n: &DenseNet| -> Result<f64> {
        let out = n.predict(inputs)?;
        Ok(loss.batch(out.view(), targets)?.0)
    };
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + step;
        let plus = eval(&probe)?;
        *probe.param_mut(i) = orig - step;
        let minus = eval(&probe)?;
        *probe.param_mut(i) = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use ndarray::Array2;
    use rand::Rng;

    fn toy(seed: u64, rows: usize, cols: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    fn small_net(dropout: f64, seed: u64) -> DenseNet {
        DenseNet::new(
            &[4, 16, 4],
            &[Activation::Tanh, Activation::Linear],
            dropout,
            InitScale::FanIn,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn overfits_toy_set() {
        let x = toy(1, 8, 4);
        let cfg = TrainConfig {
            batch_size: 4,
            epochs: 400,
            learning_rate: Some(0.5),
            ..TrainConfig::default()
        };
        let (_, trace) = train(small_net(0.0, 3), x.view(), x.view(), LossKind::Mse, &cfg).unwrap();
        assert!(trace[trace.len() - 1] < 0.01 * trace[0], "{:?}", (trace[0], trace.last()));
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let x = toy(2, 10, 4);
        let net = small_net(0.0, 4);
        let cfg = TrainConfig {
            batch_size: 3,
            epochs: 5,
            learning_rate: Some(0.0),
            ..TrainConfig::default()
        };
        let (trained, trace) = train(net.clone(), x.view(), x.view(), LossKind::Scp, &cfg).unwrap();
        assert_eq!(trained, net);
        for v in &trace {
            assert!((v - trace[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_given_seeds() {
        let x = toy(3, 37, 4);
        let cfg = TrainConfig {
            batch_size: 8,
            epochs: 6,
            shuffle_seed: 99,
            ..TrainConfig::default()
        };
        let run = || train(small_net(0.2, 5), x.view(), x.view(), LossKind::Kl, &cfg).unwrap();
        let (a, ta) = run();
        let (b, tb) = run();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }

    #[test]
    fn divergence_reports_epoch() {
        let x = toy(4, 8, 4) * 10.0;
        let cfg = TrainConfig {
            batch_size: 8,
            epochs: 50,
            learning_rate: Some(1e6),
            ..TrainConfig::default()
        };
        let net = DenseNet::new(&[4, 4], &[Activation::Linear], 0.0, InitScale::Std(1.0), 0).unwrap();
        match train(net, x.view(), x.view(), LossKind::Mse, &cfg) {
            Err(Error::Diverged { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn shape_errors() {
        let x = toy(5, 4, 4);
        let y = toy(5, 4, 3);
        assert!(train(small_net(0.0, 0), x.view(), y.view(), LossKind::Mse, &TrainConfig::default()).is_err());
        let empty = Array2::<f64>::zeros((0, 4));
        assert!(matches!(
            train(small_net(0.0, 0), empty.view(), empty.view(), LossKind::Mse, &TrainConfig::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn grad_check_linear_mse() {
        let net = DenseNet::new(&[5, 3], &[Activation::Linear], 0.0, InitScale::Std(1.0), 1).unwrap();
        let x = toy(6, 4, 5);
        let y = toy(7, 4, 3);
        let err = grad_check(&net, LossKind::Mse, x.view(), y.view(), 1e-5).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn grad_check_tanh_scp_and_kl() {
        let x = toy(8, 3, 5);
        let y = toy(9, 3, 4);
        let tanh = DenseNet::new(&[5, 6, 4], &[Activation::Tanh, Activation::Linear], 0.0, InitScale::Std(1.0), 2)
            .unwrap();
        let err = grad_check(&tanh, LossKind::Scp, x.view(), y.view(), 1e-5).unwrap();
        assert!(err < 1e-4, "scp {err}");
        let kl = DenseNet::new(
            &[5, 6, 4],
            &[Activation::Tanh, Activation::LogSoftmax],
            0.0,
            InitScale::Std(1.0),
            2,
        )
        .unwrap();
        let err = grad_check(&kl, LossKind::Kl, x.view(), y.view(), 1e-5).unwrap();
        assert!(err < 1e-4, "kl {err}");
    }
}
