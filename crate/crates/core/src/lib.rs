//! Feature space, geometry descriptors, embeddings, clustering, the
//! recommender cycle and event-sourced exploration sessions for
//! performance-driven design exploration.
//!
//! `no_std` with `alloc`; file formats and networking live in the
//! `dreamspace` crate.

#![no_std]

extern crate alloc;

pub mod cluster;
pub mod error;
pub mod geometry;
pub mod matrix;
pub mod recommend;
pub mod reduce;
pub mod rng;
pub mod session;
pub mod space;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use space::{
    Channel, DesignSolution, FeatureLayout, FeatureVector, FeatureWeights, ParamSet, PropertySet,
    SolutionSpace,
};
