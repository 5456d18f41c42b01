//! Classical reference methods: Reinhard statistics matching in lαβ and
//! Macenko optical-density stain separation.

mod macenko;
mod reinhard;

pub use macenko::{
    macenko_apply, macenko_fit, macenko_fit_with, percentile, percentile_angles, MacenkoConfig,
    StainBasis,
};
pub use reinhard::{
    lab_to_rgb, reinhard_apply, reinhard_fit, reinhard_transform_lab, rgb_to_lab, ReinhardStats,
};
