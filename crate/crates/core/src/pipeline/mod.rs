//! Training of the generator, the latent unit and the baselines.

pub mod artifacts;
mod attack;
mod baselines;
mod config;
mod stages;

pub use artifacts::{
    generator_checkpoint, load_generator, load_latent_unit, save_latent_unit, spec_hash, RunRecorder, TrainedGenerator,
};
pub use attack::{crop_batch, interior_offsets, mean_energy, window_mean, AttackContext, BatchEnergy, TrainingSet};
pub use baselines::{
    optimize_pixels, pixel_window, random_color_unit, run_baseline, synthesize_texture, tile_to, BaselineInputs,
    BaselineKind,
};
pub use config::{BaselineConfig, EvalConfig, RunConfig, StageOneConfig, StageTwoConfig};
pub use stages::{init_local_latent, latent_windows, optimize_latent_stage_two, train_stage_one, TrainObserver};
