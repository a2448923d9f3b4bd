//! Self-contained diffusion testbed.
//!
//! A procedural image corpus with a controllable implicit attribute, a small
//! attention UNet with named self-/cross-attention hook sites, DDPM training
//! and classifier-free-guidance sampling, and a deterministic pixel oracle
//! standing in for an external classifier.

pub mod condition;
pub mod image;
pub mod oracle;
pub mod scene;
pub mod schedule;

pub use condition::{Condition, ConditionError, Token, VOCAB_SIZE};
pub use image::{save_png_grid, Image, CANVAS, CHANNELS};
pub use oracle::{foreground_mask, oracle_classify, OracleError, OracleOutcome, MIN_FOREGROUND};
pub use scene::{
    build_corpus, covers, gen_scene, Color, Corpus, CorpusError, CorpusItem, CorpusPolicy,
    PartialScene, SceneLabel, ScenePolicy, Shape, SIZE_MAX, SIZE_MIN,
};
pub use schedule::{ddpm_forward, NoiseSchedule, ScheduleError};
