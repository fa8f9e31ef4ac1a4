//! Autoencoder meta-embeddings. Every network has one `tanh` hidden layer
//! whose evaluation-mode activation becomes the meta vector; the decoder ends
//! with the activation the loss expects (log-softmax for KL, linear otherwise).

use ndarray::{Array2, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;

use super::baseline::average_padded;
use super::{require_normalized, MetaConfig, MetaMethod, MetaModel, MetaParams};
use crate::embedding_io::AlignedEmbeddingSet;
use crate::error::{Error, Result};
use crate::nn::{dropout_rng, fit, train, Activation, DenseNet, LossKind, Mode, Trainable};

fn autoencoder(input: usize, hidden: usize, output: usize, loss: LossKind, config: &MetaConfig) -> Result<DenseNet> {
    DenseNet::new(
        &[input, hidden, output],
        &[Activation::Tanh, loss.output_activation()],
        config.dropout,
        config.train.init_scale(),
        config.seed,
    )
}

/// Splits `total` hidden units over `parts` branches as evenly as possible,
/// giving the remainder to the earliest branches.
pub fn split_hidden(total: usize, parts: usize) -> Result<Vec<usize>> {
    if parts == 0 || total < parts {
        return Err(Error::InvalidArgument(format!(
            "cannot split {total} hidden units over {parts} sources"
        )));
    }
    let base = total / parts;
    let extra = total % parts;
    Ok((0..parts).map(|i| base + usize::from(i < extra)).collect())
}

/// Several independent networks trained on the same minibatches; the batch
/// loss is the sum of the branch losses.
struct Ensemble<'a> {
    branches: Vec<Branch<'a>>,
    loss: LossKind,
}

struct Branch<'a> {
    net: DenseNet,
    inputs: ArrayView2<'a, f64>,
    targets: ArrayView2<'a, f64>,
    rng: ChaCha8Rng,
}

impl<'a> Ensemble<'a> {
    fn new(pairs: Vec<(DenseNet, ArrayView2<'a, f64>, ArrayView2<'a, f64>)>, loss: LossKind) -> Self {
        let branches = pairs
            .into_iter()
            .map(|(net, inputs, targets)| Branch {
                rng: dropout_rng(net.seed()),
                net,
                inputs,
                targets,
            })
            .collect();
        Ensemble { branches, loss }
    }

    fn into_nets(self) -> Vec<DenseNet> {
        self.branches.into_iter().map(|b| b.net).collect()
    }
}

impl Trainable for Ensemble<'_> {
    fn n_samples(&self) -> usize {
        self.branches[0].inputs.nrows()
    }

    fn step(&mut self, batch: &[usize], learning_rate: f64) -> Result<f64> {
        let mut total = 0.0;
        for b in &mut self.branches {
            let x = b.inputs.select(Axis(0), batch);
            let y = b.targets.select(Axis(0), batch);
            let (out, tape) = b.net.forward_batch(x.view(), Mode::Train(&mut b.rng))?;
            let (loss, grad) = self.loss.batch(out.view(), y.view())?;
            let grads = b.net.backward(&tape, grad);
            b.net.sgd_step(&grads, learning_rate);
            total += loss;
        }
        Ok(total)
    }

    fn params_finite(&self) -> bool {
        self.branches.iter().all(|b| b.net.is_finite())
    }
}

/// Trains one of the source-reconstructing autoencoders:
///
/// * `Caeme`: the concatenated sources are encoded into one hidden layer and
///   the concatenation is reconstructed from it.
/// * `Daeme`: each source gets its own encoder/decoder with a share of the
///   hidden units; the meta vector concatenates the per-source encodings.
/// * `Aaeme`: the zero-padded average of the sources is encoded and the
///   concatenation is reconstructed from it.
pub fn train_ae(
    variant: MetaMethod,
    set: &AlignedEmbeddingSet,
    loss: LossKind,
    config: &MetaConfig,
) -> Result<MetaModel> {
    require_normalized(set)?;
    config.validate()?;
    let hidden = config.hidden_dim;
    let concat = set.concatenated();
    let (params, trace) = match variant {
        MetaMethod::Caeme => {
            let d = concat.ncols();
            let net = autoencoder(d, hidden, d, loss, config)?;
            let (net, trace) = train(net, concat.view(), concat.view(), loss, &config.train)?;
            (MetaParams::Single { net }, trace)
        }
        MetaMethod::Aaeme => {
            let averaged = average_padded(set);
            let net = autoencoder(averaged.ncols(), hidden, concat.ncols(), loss, config)?;
            let (net, trace) = train(net, averaged.view(), concat.view(), loss, &config.train)?;
            (MetaParams::Single { net }, trace)
        }
        MetaMethod::Daeme => {
            let shares = split_hidden(hidden, set.n_sources())?;
            let pairs = set
                .sources()
                .iter()
                .zip(&shares)
                .map(|(src, &h)| {
                    let net = autoencoder(src.dim(), h, src.dim(), loss, config)?;
                    Ok((net, src.matrix().view(), src.matrix().view()))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut job = Ensemble::new(pairs, loss);
            let trace = fit(&mut job, &config.train.for_loss(loss))?;
            (MetaParams::Multi { nets: job.into_nets() }, trace)
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "{other} is not a source-reconstructing autoencoder"
            )))
        }
    };
    Ok(MetaModel {
        method: variant,
        loss: Some(loss),
        target: None,
        meta_dim: hidden,
        source_dims: set.dims(),
        params,
        loss_trace: trace,
    })
}

fn check_target(set: &AlignedEmbeddingSet, target: usize) -> Result<()> {
    if set.n_sources() < 2 {
        return Err(Error::InvalidArgument(
            "target autoencoders need at least 2 sources".into(),
        ));
    }
    if target >= set.n_sources() {
        return Err(Error::InvalidArgument(format!(
            "target index {target} out of range for {} sources",
            set.n_sources()
        )));
    }
    Ok(())
}

/// Target autoencoder: the concatenation of every non-target source is
/// encoded and the target source is predicted from the encoding. With
/// `concat_y` the meta vector is the encoding followed by the target vector.
pub fn train_tae(
    set: &AlignedEmbeddingSet,
    target: usize,
    loss: LossKind,
    config: &MetaConfig,
    concat_y: bool,
) -> Result<MetaModel> {
    require_normalized(set)?;
    config.validate()?;
    check_target(set, target)?;
    let inputs = set.concatenated_except(Some(target));
    let targets = set.source(target).matrix();
    let net = autoencoder(inputs.ncols(), config.hidden_dim, targets.ncols(), loss, config)?;
    let (net, trace) = train(net, inputs.view(), targets.view(), loss, &config.train)?;
    let (method, meta_dim) = if concat_y {
        (MetaMethod::TaePlusY, config.hidden_dim + targets.ncols())
    } else {
        (MetaMethod::Tae, config.hidden_dim)
    };
    Ok(MetaModel {
        method,
        loss: Some(loss),
        target: Some(target),
        meta_dim,
        source_dims: set.dims(),
        params: MetaParams::Single { net },
        loss_trace: trace,
    })
}

/// Mean target encoder: one network per non-target source predicts the target
/// from that source alone; the meta vector is the mean of their encodings.
pub fn train_mte(
    set: &AlignedEmbeddingSet,
    target: usize,
    loss: LossKind,
    config: &MetaConfig,
) -> Result<MetaModel> {
    require_normalized(set)?;
    config.validate()?;
    check_target(set, target)?;
    let targets = set.source(target).matrix().view();
    let pairs = set
        .sources()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target)
        .map(|(_, src)| {
            let net = autoencoder(src.dim(), config.hidden_dim, targets.ncols(), loss, config)?;
            Ok((net, src.matrix().view(), targets))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut job = Ensemble::new(pairs, loss);
    let trace = fit(&mut job, &config.train.for_loss(loss))?;
    Ok(MetaModel {
        method: MetaMethod::Mte,
        loss: Some(loss),
        target: Some(target),
        meta_dim: config.hidden_dim,
        source_dims: set.dims(),
        params: MetaParams::Multi { nets: job.into_nets() },
        loss_trace: trace,
    })
}

/// Hidden activations of the trained model for the given rows of `set`.
pub(crate) fn encode(model: &MetaModel, set: &AlignedEmbeddingSet, rows: &[usize]) -> Result<Array2<f64>> {
    let pick = |m: &Array2<f64>| m.select(Axis(0), rows);
    match (&model.params, model.method) {
        (MetaParams::Single { net }, MetaMethod::Caeme) => net.layer_output(pick(&set.concatenated()).view(), 0),
        (MetaParams::Single { net }, MetaMethod::Aaeme) => net.layer_output(pick(&average_padded(set)).view(), 0),
        (MetaParams::Single { net }, MetaMethod::Tae | MetaMethod::TaePlusY) => {
            let target = model.target.expect("target autoencoders record their target");
            let hidden = net.layer_output(pick(&set.concatenated_except(Some(target))).view(), 0)?;
            if model.method == MetaMethod::TaePlusY {
                let y = pick(set.source(target).matrix());
                Ok(ndarray::concatenate(Axis(1), &[hidden.view(), y.view()]).expect("same row count"))
            } else {
                Ok(hidden)
            }
        }
        (MetaParams::Multi { nets }, MetaMethod::Daeme) => {
            let parts = nets
                .iter()
                .zip(set.sources())
                .map(|(net, src)| net.layer_output(pick(src.matrix()).view(), 0))
                .collect::<Result<Vec<_>>>()?;
            let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
            Ok(ndarray::concatenate(Axis(1), &views).expect("same row count"))
        }
        (MetaParams::Multi { nets }, MetaMethod::Mte) => {
            let target = model.target.expect("MTE records its target");
            let sources = set.sources().iter().enumerate().filter(|(i, _)| *i != target);
            let mut acc = Array2::zeros((rows.len(), model.meta_dim));
            for (net, (_, src)) in nets.iter().zip(sources) {
                acc += &net.layer_output(pick(src.matrix()).view(), 0)?;
            }
            Ok(acc / nets.len() as f64)
        }
        _ => Err(Error::Checkpoint(format!(
            "parameters do not match method {}",
            model.method
        ))),
    }
}
