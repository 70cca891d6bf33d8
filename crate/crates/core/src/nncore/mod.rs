//! Minimal numeric layer library: tensors, the text-CNN layers with their
//! backward passes, softmax cross-entropy, and a gradient checker.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod tensor;

pub use gradcheck::{check_parameters, gradient_check, relative_error, Parameterized};
pub use layers::{
    dropout, global_max_pool1d, global_max_pool1d_backward, relu, relu_backward, Conv1d, Dense,
    DropoutMask, Embedding, FixedDropout, GlobalMaxPool1d, Layer, LayerGrad, Mode, Relu,
};
pub use loss::{softmax, softmax_cross_entropy, softmax_cross_entropy_backward};
pub use tensor::{Scalar, Tensor};
