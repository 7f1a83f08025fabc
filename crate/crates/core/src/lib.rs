//! Supervised learning of low-dimensional kernel feature maps.
//!
//! Nyström and random Fourier feature maps are trained by mini-batch
//! gradient ascent on the discriminant information (DI) of their features,
//! then evaluated with closed-form kernel ridge regression. Least-squares
//! and softmax cross-entropy trainers are included as baselines.

pub mod artifact;
pub mod baselines;
pub mod data_io;
pub mod error;
pub mod feature_maps;
pub mod kernels;
pub mod numerics;
pub mod objectives;
pub mod predictors;
pub mod training;

pub use error::{Error, Result};
pub use feature_maps::{FeatureMap, FourierMap, NystromMap};
pub use kernels::{KernelConfig, KernelFamily};
pub use numerics::{Matrix, Vector};
pub use objectives::{DIConfig, TargetEncoding, Targets};
