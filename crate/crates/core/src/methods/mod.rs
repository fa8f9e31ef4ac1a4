//! Meta-embedding methods over an [`AlignedEmbeddingSet`].
//!
//! | method   | meta vector                                        | dim            |
//! |----------|----------------------------------------------------|----------------|
//! | `conc`   | concatenation of source vectors                    | Σ d_s          |
//! | `av`     | mean of zero-padded source vectors                 | max d_s        |
//! | `svd`    | rows of `U_k Σ_k` of the concatenation             | k              |
//! | `1ton`   | learned vector projected linearly onto each source | k              |
//! | `caeme`  | hidden layer of an AE over the concatenation       | hidden         |
//! | `daeme`  | per-source AE encodings, concatenated              | hidden (split) |
//! | `aaeme`  | hidden layer of an AE over the averaged sources    | hidden         |
//! | `tae`    | hidden layer of a net predicting a target source   | hidden         |
//! | `tae+y`  | `tae` encoding followed by the target vector       | hidden + d_t   |
//! | `mte`    | mean of per-source encodings predicting the target | hidden         |

mod autoencoder;
mod baseline;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

pub use autoencoder::{split_hidden, train_ae, train_mte, train_tae};
pub use baseline::{avg, conc, one_ton, svd_meta, truncated_svd, TruncatedSvd};

use crate::checkpoint;
use crate::embedding_io::{AlignedEmbeddingSet, EmbeddingTable};
use crate::error::{Error, Result};
use crate::nn::{DenseNet, LossKind, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaMethod {
    Conc,
    Av,
    Svd,
    OneTon,
    Caeme,
    Daeme,
    Aaeme,
    Tae,
    TaePlusY,
    Mte,
}

impl MetaMethod {
    pub const ALL: [MetaMethod; 10] = [
        MetaMethod::Conc,
        MetaMethod::Av,
        MetaMethod::Svd,
        MetaMethod::OneTon,
        MetaMethod::Caeme,
        MetaMethod::Daeme,
        MetaMethod::Aaeme,
        MetaMethod::Tae,
        MetaMethod::TaePlusY,
        MetaMethod::Mte,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetaMethod::Conc => "conc",
            MetaMethod::Av => "av",
            MetaMethod::Svd => "svd",
            MetaMethod::OneTon => "1ton",
            MetaMethod::Caeme => "caeme",
            MetaMethod::Daeme => "daeme",
            MetaMethod::Aaeme => "aaeme",
            MetaMethod::Tae => "tae",
            MetaMethod::TaePlusY => "tae+y",
            MetaMethod::Mte => "mte",
        }
    }

    /// Whether the method is trained under a selectable loss.
    pub fn takes_loss(self) -> bool {
        matches!(
            self,
            MetaMethod::Caeme
                | MetaMethod::Daeme
                | MetaMethod::Aaeme
                | MetaMethod::Tae
                | MetaMethod::TaePlusY
                | MetaMethod::Mte
        )
    }

    pub fn takes_target(self) -> bool {
        matches!(self, MetaMethod::Tae | MetaMethod::TaePlusY | MetaMethod::Mte)
    }
}

impl fmt::Display for MetaMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetaMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let m = match s.to_ascii_lowercase().as_str() {
            "conc" => MetaMethod::Conc,
            "av" | "avg" => MetaMethod::Av,
            "svd" => MetaMethod::Svd,
            "1ton" | "one_ton" => MetaMethod::OneTon,
            "caeme" => MetaMethod::Caeme,
            "daeme" => MetaMethod::Daeme,
            "aaeme" => MetaMethod::Aaeme,
            "tae" => MetaMethod::Tae,
            "tae+y" | "tae_plus_y" => MetaMethod::TaePlusY,
            "mte" => MetaMethod::Mte,
            _ => return Err(Error::InvalidArgument(format!("unknown method `{s}`"))),
        };
        Ok(m)
    }
}

/// Hyperparameters shared by the learned methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    pub hidden_dim: usize,
    pub dropout: f64,
    /// Output rank of `svd` and `1ton`.
    pub rank: usize,
    /// Seeds weight initialization and dropout masks.
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            hidden_dim: 200,
            dropout: 0.2,
            rank: 200,
            seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::InvalidArgument("hidden dimension must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        self.train.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaParams {
    Conc,
    Av,
    Svd {
        rows: Array2<f64>,
        singular_values: Array1<f64>,
        components: Array2<f64>,
    },
    OneTon {
        meta: Array2<f64>,
        projections: Vec<Array2<f64>>,
    },
    Single {
        net: DenseNet,
    },
    Multi {
        nets: Vec<DenseNet>,
    },
}

/// A built meta-embedding producer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaModel {
    pub method: MetaMethod,
    pub loss: Option<LossKind>,
    pub target: Option<usize>,
    pub meta_dim: usize,
    /// Dimensions of the sources the model was built on, in order.
    pub source_dims: Vec<usize>,
    pub params: MetaParams,
    /// Mean training loss per epoch; empty for closed-form methods.
    pub loss_trace: Vec<f64>,
}

impl MetaModel {
    fn check_set(&self, set: &AlignedEmbeddingSet) -> Result<()> {
        if set.dims() != self.source_dims {
            return Err(Error::InvalidArgument(format!(
                "model was built on sources with dims {:?}, got {:?}",
                self.source_dims,
                set.dims()
            )));
        }
        let per_word_rows = match &self.params {
            MetaParams::Svd { rows, .. } => Some(rows.nrows()),
            MetaParams::OneTon { meta, .. } => Some(meta.nrows()),
            _ => None,
        };
        if let Some(n) = per_word_rows {
            if n != set.len() {
                return Err(Error::Dimension {
                    expected: n,
                    got: set.len(),
                });
            }
        }
        Ok(())
    }

    /// Meta vectors for the given shared-vocabulary rows, one per output row.
    pub fn embed_rows(&self, set: &AlignedEmbeddingSet, rows: &[usize]) -> Result<Array2<f64>> {
        self.check_set(set)?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= set.len()) {
            return Err(Error::InvalidArgument(format!("row {bad} out of range")));
        }
        let out = match &self.params {
            MetaParams::Conc => set.concatenated().select(Axis(0), rows),
            MetaParams::Av => baseline::average_padded(set).select(Axis(0), rows),
            MetaParams::Svd { rows: m, .. } | MetaParams::OneTon { meta: m, .. } => m.select(Axis(0), rows),
            MetaParams::Single { .. } | MetaParams::Multi { .. } => autoencoder::encode(self, set, rows)?,
        };
        debug_assert_eq!(out.ncols(), self.meta_dim);
        Ok(out)
    }

    /// Meta vector of one word (evaluation mode, deterministic).
    pub fn embed(&self, set: &AlignedEmbeddingSet, word: &str) -> Result<Array1<f64>> {
        let i = set
            .word_index(word)
            .ok_or_else(|| Error::UnknownWord(word.to_string()))?;
        Ok(self.embed_rows(set, &[i])?.row(0).to_owned())
    }

    /// Meta table over the whole shared vocabulary.
    pub fn table(&self, set: &AlignedEmbeddingSet) -> Result<EmbeddingTable> {
        let rows: Vec<usize> = (0..set.len()).collect();
        let m = self.embed_rows(set, &rows)?;
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("{} produced non-finite meta vectors", self.method)));
        }
        EmbeddingTable::new(self.method.as_str(), set.shared_vocab().to_vec(), m)
    }
}

/// Method selection with its per-method options.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MethodSpec {
    pub method: MetaMethod,
    pub loss: Option<LossKind>,
    pub target: Option<usize>,
}

impl MethodSpec {
    pub fn new(method: MetaMethod) -> Self {
        MethodSpec {
            method,
            loss: None,
            target: None,
        }
    }

    pub fn with_loss(mut self, loss: LossKind) -> Self {
        self.loss = Some(loss);
        self
    }

    pub fn with_target(mut self, target: usize) -> Self {
        self.target = Some(target);
        self
    }

    /// File-name friendly identifier, e.g. `caeme-scp` or `tae+y-mse-t2`.
    pub fn id(&self) -> String {
        let mut id = self.method.as_str().to_string();
        if let Some(loss) = self.loss {
            id.push('-');
            id.push_str(loss.as_str());
        }
        if let Some(t) = self.target {
            id.push_str(&format!("-t{t}"));
        }
        id
    }
}

/// Builds any method from its spec.
pub fn build(set: &AlignedEmbeddingSet, spec: &MethodSpec, config: &MetaConfig) -> Result<MetaModel> {
    let needs_loss = || {
        spec.loss
            .ok_or_else(|| Error::InvalidArgument(format!("{} needs a loss", spec.method)))
    };
    let needs_target = || {
        spec.target
            .ok_or_else(|| Error::InvalidArgument(format!("{} needs a target index", spec.method)))
    };
    let loss_ok = match spec.method {
        m if m.takes_loss() => true,
        MetaMethod::OneTon => matches!(spec.loss, None | Some(LossKind::Mse)),
        _ => spec.loss.is_none(),
    };
    if !loss_ok {
        return Err(Error::InvalidArgument(format!(
            "{} does not take a selectable loss",
            spec.method
        )));
    }
    match spec.method {
        MetaMethod::Conc | MetaMethod::Av => {
            require_normalized(set)?;
            let (params, meta_dim) = if spec.method == MetaMethod::Conc {
                (MetaParams::Conc, set.dims().iter().sum())
            } else {
                (MetaParams::Av, set.dims().into_iter().max().unwrap_or(0))
            };
            Ok(MetaModel {
                method: spec.method,
                loss: None,
                target: None,
                meta_dim,
                source_dims: set.dims(),
                params,
                loss_trace: Vec::new(),
            })
        }
        MetaMethod::Svd => baseline::svd_model(set, config.rank),
        MetaMethod::OneTon => one_ton(set, config),
        MetaMethod::Caeme | MetaMethod::Daeme | MetaMethod::Aaeme => {
            train_ae(spec.method, set, needs_loss()?, config)
        }
        MetaMethod::Tae | MetaMethod::TaePlusY => train_tae(
            set,
            needs_target()?,
            needs_loss()?,
            config,
            spec.method == MetaMethod::TaePlusY,
        ),
        MetaMethod::Mte => train_mte(set, needs_target()?, needs_loss()?, config),
    }
}

pub(crate) fn require_normalized(set: &AlignedEmbeddingSet) -> Result<()> {
    if set.is_normalized() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(
            "meta-embedding methods expect an l2-normalized aligned set".into(),
        ))
    }
}

/// Writes a versioned JSON checkpoint of the model.
pub fn save_checkpoint(model: &MetaModel, path: impl AsRef<Path>) -> Result<()> {
    checkpoint::save(model, path.as_ref())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MetaModel> {
    checkpoint::load(path.as_ref())
}
