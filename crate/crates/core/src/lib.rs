//! Hermite-polynomial activations with trainable coefficients, a small
//! reverse-mode differentiation engine, the SaaS pseudo-label algorithm and
//! robustness diagnostics.

pub mod activations;
pub mod autodiff;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod hermite;
pub mod models;
pub mod rng;
pub mod saas;

pub use activations::{Activation, CoeffInit, HermiteActivation};
pub use autodiff::{Graph, OptimizerKind, OptimizerState, ParamSet, Tensor, Var};
pub use data::{Dataset, SslSplit};
pub use diagnostics::{BoundInputs, LandscapeProbe};
pub use error::{Error, Result};
pub use hermite::{GaussianQuadrature, HermiteBasis};
pub use models::{AutoencoderSpec, MlpSpec, Model, TrainConfig, TrainLog};
