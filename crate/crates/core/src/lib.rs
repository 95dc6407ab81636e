//! Self-supervised anomalous sound detection for machine condition
//! monitoring.
//!
//! The library covers the full pipeline: log-mel feature extraction, a
//! time-domain encoder with auto-correlation attention, a token-based
//! spatial transformer, a training-only dynamic graph branch and CORAL
//! domain adaptation, composite losses, AUC/pAUC evaluation, and a
//! synthetic domain-shifted dataset generator for end-to-end runs.

pub mod error;
pub mod frontend;
pub mod nn;
pub mod num;
pub mod timetoformer;

pub use error::{Error, Result};
