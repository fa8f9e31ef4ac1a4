//! A small dense-network engine: forward/backward passes, the reconstruction
//! losses, dropout and minibatch SGD.

mod loss;
mod net;
mod train;

pub use loss::{log_softmax, softmax, LossKind};
pub use net::{Activation, DenseNet, Gradients, InitScale, Layer, Mode, Tape};
pub(crate) use train::dropout_rng;
pub use train::{fit, grad_check, train, Supervised, TrainConfig, Trainable};

impl DenseNet {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> crate::Result<()> {
        crate::checkpoint::save(self, path.as_ref())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> crate::Result<Self> {
        crate::checkpoint::load(path.as_ref())
    }
}
