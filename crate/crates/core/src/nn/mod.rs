//! Minimal hand-rolled neural-network plumbing: a flat parameter arena,
//! affine layers, activations, and the optimizer.

pub mod adamw;
pub mod linear;
pub mod ops;
pub mod params;

pub use adamw::{cosine_lr, AdamW};
pub use linear::Linear;
pub use params::{Grads, Init, LayoutBuilder, ParamId, ParamLayout, ParamStore};
