//! The prolongation network, the gradient of the Fourier loss with respect
//! to its parameters, Adam, and the training curriculum.

mod adam;
mod curriculum;
mod loss;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use curriculum::{
    coarse_cores, evaluate, fine_core_instances, run_curriculum, run_curriculum_with, write_log_csv, LogRow,
    TrainConfig, TrainOutcome,
};
pub use loss::{
    batch_loss, core_prolongation, instance_loss, instance_loss_grad, loss_and_grad, LossGrad, TrainInstance,
};
pub use mlp::{
    ForwardCache, Layer, MlpModel, ModelMetadata, INPUT_DIM, MODEL_VERSION, OUTPUT_BIAS, OUTPUT_DIM,
};
