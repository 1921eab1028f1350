//! Alternating optimization of the generator against both discriminators.

mod config;
mod data;
mod fit;
mod step;

pub use config::{lr_at_epoch, ModelPreset, TrainConfig};
pub use data::{build_pairs, load_face, Batch, TrainData, TrainPair};
pub use fit::{
    fit, latest_checkpoint, load_generator, read_trace, FitReport, Trainer, LATEST, TRACE,
};
pub use step::{
    generate, train_step, update_generator, update_global_d, update_local_d, DiscriminatorUpdate,
    GeneratorPass, LocalUpdate, Models, Optimizers, StepTrace,
};
