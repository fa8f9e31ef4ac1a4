//! Reconstruction objectives and their analytic gradients.
//!
//! Per-sample values:
//!
//! * `Mse`: mean over elements of `(ŷ - y)²`
//! * `Mae`: mean over elements of `|ŷ - y|`
//! * `Kl`: `Σ p_i (log p_i - ŷ_i)` with `p = softmax(y)`; `ŷ` is expected to
//!   be a log-probability vector (the output of a log-softmax layer)
//! * `Scp`: `(1 - cos(ŷ, y))²`
//!
//! A batch loss is the mean of the per-sample values.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use super::Activation;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Mae,
    Kl,
    Scp,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Mse, LossKind::Mae, LossKind::Kl, LossKind::Scp];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Mae => "mae",
            LossKind::Kl => "kl",
            LossKind::Scp => "scp",
        }
    }

    /// SGD step size used when none is configured. The losses differ in
    /// gradient scale by orders of magnitude (MAE and SCP gradients shrink with
    /// the output dimension, KL is bounded by the softmax), so one shared
    /// value either stalls the bounded losses or destabilises MSE.
    pub fn default_learning_rate(self) -> f64 {
        match self {
            LossKind::Mse => 0.05,
            LossKind::Mae => 1.5,
            LossKind::Kl => 0.6,
            LossKind::Scp => 10.0,
        }
    }

    /// Activation a decoder must end with for this loss.
    pub fn output_activation(self) -> Activation {
        match self {
            LossKind::Kl => Activation::LogSoftmax,
            _ => Activation::Linear,
        }
    }

    pub fn value(self, y_hat: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
        check_len(y_hat, y)?;
        let d = y.len() as f64;
        let v = match self {
            LossKind::Mse => Zip::from(y_hat).and(y).fold(0.0, |acc, a, b| acc + (a - b) * (a - b)) / d,
            LossKind::Mae => Zip::from(y_hat).and(y).fold(0.0, |acc, a, b| acc + (a - b).abs()) / d,
            LossKind::Kl => {
                let log_p = log_softmax(y);
                let v = Zip::from(&log_p)
                    .and(y_hat)
                    .fold(0.0, |acc, lp, q| acc + lp.exp() * (lp - q));
                if !v.is_finite() {
                    return Err(Error::Numeric("non-finite KL divergence".into()));
                }
                v
            }
            LossKind::Scp => {
                let c = cosine_raw(y_hat, y)?;
                (1.0 - c) * (1.0 - c)
            }
        };
        Ok(v)
    }

    /// Gradient of [`LossKind::value`] with respect to `y_hat`.
    pub fn gradient(self, y_hat: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        check_len(y_hat, y)?;
        let d = y.len() as f64;
        let g = match self {
            LossKind::Mse => Zip::from(y_hat).and(y).map_collect(|a, b| 2.0 * (a - b) / d),
            LossKind::Mae => Zip::from(y_hat).and(y).map_collect(|a, b| {
                let diff = a - b;
                if diff > 0.0 {
                    1.0 / d
                } else if diff < 0.0 {
                    -1.0 / d
                } else {
                    0.0
                }
            }),
            LossKind::Kl => {
                let g = log_softmax(y).mapv(|lp| -lp.exp());
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric("non-finite KL gradient".into()));
                }
                g
            }
            LossKind::Scp => {
                let nh = y_hat.dot(&y_hat).sqrt();
                let ny = y.dot(&y).sqrt();
                if nh == 0.0 || ny == 0.0 {
                    return Err(Error::UndefinedCosine);
                }
                let c = y_hat.dot(&y) / (nh * ny);
                // d cos / d ŷ = y / (|ŷ||y|) - cos ŷ / |ŷ|²
                let scale = -2.0 * (1.0 - c);
                Zip::from(y_hat)
                    .and(y)
                    .map_collect(|a, b| scale * (b / (nh * ny) - c * a / (nh * nh)))
            }
        };
        Ok(g)
    }

    /// Mean loss over the rows of a batch and its gradient, already divided by
    /// the batch size.
    ///
    /// Under `Scp` a prediction that is exactly zero (possible when dropout
    /// silences a whole narrow hidden layer) is scored as orthogonal: loss 1
    /// and no gradient, instead of aborting training.
    pub fn batch(self, y_hat: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)> {
        if y_hat.dim() != y.dim() {
            return Err(Error::Dimension {
                expected: y.ncols(),
                got: y_hat.ncols(),
            });
        }
        let b = y.nrows() as f64;
        let mut grad = Array2::zeros(y.dim());
        let mut total = 0.0;
        for ((pred, target), mut g) in y_hat.rows().into_iter().zip(y.rows()).zip(grad.rows_mut()) {
            if self == LossKind::Scp && pred.iter().all(|&v| v == 0.0) {
                total += 1.0;
                continue;
            }
            total += self.value(pred, target)?;
            g.assign(&(self.gradient(pred, target)? / b));
        }
        Ok((total / b, grad))
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" | "l2" => Ok(LossKind::Mse),
            "mae" | "l1" => Ok(LossKind::Mae),
            "kl" => Ok(LossKind::Kl),
            "scp" | "cosine" => Ok(LossKind::Scp),
            _ => Err(Error::InvalidArgument(format!(
                "unknown loss `{s}` (expected mse, mae, kl or scp)"
            ))),
        }
    }
}

fn check_len(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: b.len(),
            got: a.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("loss on empty vectors".into()));
    }
    Ok(())
}

fn cosine_raw(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedCosine);
    }
    Ok((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn log_softmax(z: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = z.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + z.fold(0.0, |acc, &v| acc + (v - max).exp()).ln();
    z.mapv(|v| v - lse)
}

pub fn softmax(z: ArrayView1<'_, f64>) -> Array1<f64> {
    log_softmax(z).mapv(f64::exp)
}
