//! Finite-truncation engine for Hermite-localized frames.
//!
//! Frame elements are stored by their coefficients in the Hermite
//! orthonormal basis. On top of that representation the crate provides
//! frame bounds, canonical duals, reconstruction, graded weighted norms,
//! localization checks, Schwartz and Gevrey seminorms, and pairings of
//! test functions with distributions given by coefficient sequences.

pub mod error;
pub mod experiment;
pub mod frame;
pub mod genfunc;
pub mod hermite;
pub mod localization;
pub mod matrix_io;
pub mod seqspaces;

pub use error::{Error, Result};
pub use experiment::{evaluate, preset, run_experiment, ExperimentConfig, ExperimentReport};
pub use frame::{FBoundednessTable, FrameBounds, FrameSystem, ReconstructionMode, RieszDiagnostics};
pub use hermite::{CoefficientVector, HermiteContext, IndexOrigin, LadderOperator};
pub use localization::{CrossGram, LocalizationKind, LocalizationReport};
pub use seqspaces::{DecayClassification, DecayModel, WeightFamily, WeightKind};
