//! Resilient observer/controller design for overcomplete linear systems
//! (more input/output channels than states) together with neuro-inspired
//! ternary quantization of linear vector fields.
//!
//! The crate has three layers:
//!
//! - [`linalg`]: lifted matrix equations `B·X = A` / `X·C = A`, dropout
//!   projections and superset lattices, minor checks.
//! - [`design`] and [`alphabet`]/[`emulation`]/[`dqn`]: gain construction
//!   that stays Hurwitz across channel-dropout lattices, and learning of
//!   quantized emulation partitions on the unit sphere (exhaustive oracle,
//!   multiplicative-weight iteration, tabular-state deep Q-learning).
//! - [`cli`]: reproducible experiment drivers behind the `overquant` binary.

pub mod alphabet;
pub mod cli;
pub mod design;
pub mod dqn;
pub mod emulation;
pub mod error;
pub mod linalg;
pub mod svg;
pub mod table1;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
