//! Symmetric matrix completion by factored gradient descent from small random
//! initialization, instrumented with the dynamic signal/residual split and
//! leave-one-out ghost sequences.

// `!(x > 0.0)` also rejects NaN, which is the point of those checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod groundtruth;
pub mod init;
pub mod loo;
pub mod matops;
pub mod optimizer;
pub mod rng;
pub mod sampling;
pub mod tolerance;
pub mod verify;

pub use error::{Error, Result};
pub use groundtruth::{generate_ground_truth, materialize, BasisStyle, GroundTruth};
pub use init::{InitScheme, InitSpec};
pub use matops::{DenseMatrix, OrthonormalBasis};
pub use optimizer::{run, EtaRule, RunConfig, RunOutput, RunStatus, TraceRecord};
pub use sampling::{sample_mask, ObservationSet, ObservedEntries};
