//! Small neural toolkit: tensors, dense/conv/pool/GRU layers, BCE loss and
//! Adam, with hand-written backward passes checked against finite differences.

mod adam;
mod gradcheck;
mod gru;
mod layers;
mod loss;
mod params;
mod tensor;

pub use adam::Adam;
pub use gradcheck::{grad_check, relative_error, RELATIVE_FLOOR};
pub use gru::{GruCell, GruStepCache};
pub use layers::{sigmoid, Activation, Conv2d, Dense, Layer, LayerCache, MaxPool2d, Sequential, SequentialCache};
pub use loss::{bce, bce_with_logit};
pub use params::{NamedArray, ParamContainer, CONTAINER_FORMAT, CONTAINER_VERSION};
pub use tensor::{Grads, Module, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    Shape {
        context: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("parameter load failed: {0}")]
    Load(String),
    #[error("io: {0}")]
    Io(String),
}
