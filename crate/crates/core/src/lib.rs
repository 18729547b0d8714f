//! Training-free open-vocabulary change detection for bi-temporal image
//! pairs.
//!
//! The pipeline aligns the post-event image radiometrically ([`ara`]),
//! segments both phases into class-agnostic instances and scores per-instance
//! feature change against an adaptive angular threshold ([`act`]), then
//! classifies candidates against a target/background text prototype pair and
//! filters the result by confidence and region consistency ([`identify`]).
//! Foundation models sit behind [`providers`]; the deterministic synthetic
//! providers make the whole chain testable without any network.

pub mod act;
pub mod ara;
pub mod error;
pub mod eval;
pub mod formats;
pub mod identify;
pub mod imaging;
pub mod pipeline;
pub mod providers;
pub mod synth;

pub use error::{Error, Result};
