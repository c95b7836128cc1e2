//! Featurized Gaussian-process regression and derivative-based variable
//! importance.
//!
//! A model is a feature map `φ` plus a Gaussian posterior over weights `β`,
//! so that `f(x) = φ(x)ᵀβ`. The importance of input `j` is
//! `ψ_j = (1/n) Σᵢ (∂f(xᵢ)/∂xʲ)²`, whose posterior is a Gaussian quadratic
//! form available in closed form (moments) or by sampling.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
extern crate alloc;

pub mod benchgen;
pub mod error;
pub mod feature_maps;
pub mod importance;
pub mod linalg;
pub mod methods;
pub mod posterior;
pub mod rng;
pub mod standardize;
pub mod tree_learner;

pub use error::{Error, Result};
pub use feature_maps::{AnyMap, FeatureMap, VariableRole};
pub use methods::{fit_method, FittedModel, Method, MethodConfig};
pub use posterior::{PosteriorAccumulator, PosteriorMode, WeightPosterior};
