//! Training, completion, generation, condition sweeps and latent export.

pub mod export;
pub mod infer;
pub mod sweep;
pub mod train;

pub use export::{
    dataset_trajectories, export_latent_trajectories, generated_trajectories, write_latent_csv,
    LatentRow, LatentTable, Projector,
};
pub use infer::{
    complete_sequence, condition_latent, decode_trajectory, generate_from_latents,
    generate_sequences, prior_draws, CompletionMode,
};
pub use sweep::{condition_sweep, SweepEntry, SweepFactor, SweepResult};
pub use train::{train, train_with, write_history_jsonl, EpochRecord, TrainConfig, TrainHistory};
