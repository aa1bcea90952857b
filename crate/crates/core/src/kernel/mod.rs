//! Small dense-matrix autodiff kernel used by every model in the crate.

pub mod adam;
pub mod checkpoint;
pub mod mat;
pub mod models;
pub mod params;
pub mod tape;

pub use adam::{adam_step, clip_grad_norm, AdamState};
pub use checkpoint::{ModelCheckpoint, Provenance};
pub use mat::Mat;
pub use models::{ModelKind, ModelSpec};
pub use params::ParamVector;
pub use tape::{Tape, Var};
