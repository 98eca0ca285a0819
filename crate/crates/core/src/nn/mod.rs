//! Dense-tensor kernels with hand-written reverse passes.

mod conv;
mod gradcheck;
mod layers;
mod loss;
mod norm;
mod optim;
mod param;
mod scalar;
mod tape;
mod tensor;

pub use conv::{conv2d, Conv2d};
pub use gradcheck::{finite_diff_at, finite_diff_grad, relative_error};
pub use layers::{global_avg_pool, global_avg_pool_backward, linear, linear_backward, relu, relu_backward};
pub use loss::{classification_loss, sigmoid, sigmoid_bce, softmax_ce, usable_probability, LossOutput};
pub use norm::{
    batchnorm, batchnorm_backward, batchnorm_eval, batchnorm_train, BatchStats, NormCache, NormMode, RunningStats,
    BN_EPS, BN_MOMENTUM,
};
pub use optim::Sgd;
pub use param::{Grads, Param, ParamCoord, ParamSet};
pub use scalar::Scalar;
pub use tape::{Cache, Tape};
pub use tensor::Tensor4;
