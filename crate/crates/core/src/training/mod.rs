//! Loss functions of the adversarial framework, random-scale augmentation,
//! Adam with a warmup/linear-decay schedule, and a supervised trainer for
//! the color mapper alone.

mod augment;
mod losses;
mod optim;
mod trainer;

pub use augment::{random_scale, scale_by};
pub use losses::{adv_loss, cycle_loss, domain_loss, identity_loss, mean_abs_error, ScoreMap};
pub use optim::{adam_step, lr_at, AdamState, LrSchedule, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use trainer::{
    dataset_mse, fit_mapper, fit_mapper_with, mapper_grads, pairs_from_images, CurvePoint,
    FitConfig, FitResult, PixelPair,
};
